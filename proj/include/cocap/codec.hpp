#pragma once

// Minimal lossless GOP-structured video codec ("MGV").
//
// Frames are grouped into closed GOPs. Each GOP opens with an intra frame
// stored as plain pixels, followed by P/B frames stored as per-block motion
// vectors plus an exact integer residual:
//
//     frame = clamp(predict(motion, references) + residual)
//
// Display pattern inside a GOP: I, then B,P pairs (odd offsets B, even
// offsets P). An odd offset with no following P in the GOP becomes a P.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cocap/error.hpp"
#include "cocap/parallel.hpp"

namespace cocap::codec {

/// Planar channel x height x width image.
template <class T>
struct Plane {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(int c, int h, int w, T fill = T{})
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  T& at(int c, int y, int x) { return data[index(c, y, x)]; }
  const T& at(int c, int y, int x) const { return data[index(c, y, x)]; }

  bool same_geometry(const Plane& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const Plane&, const Plane&) = default;
};

using PixelPlane = Plane<std::uint8_t>;
using ResidualPlane = Plane<std::int16_t>;

struct VideoHeader {
  std::uint32_t width = 64;
  std::uint32_t height = 64;
  std::uint32_t frame_count = 16;
  std::uint32_t keyint = 8;
  std::uint32_t block_size = 4;
  std::uint32_t search_range = 4;
  std::uint32_t channels = 3;

  int grid_rows() const { return static_cast<int>(height / block_size); }
  int grid_cols() const { return static_cast<int>(width / block_size); }

  /// Throws ConfigError naming the first violated invariant.
  void validate() const {
    if (width == 0 || height == 0) throw ConfigError("frame dimensions must be positive");
    if (block_size == 0) throw ConfigError("block_size must be positive");
    if (width % block_size != 0 || height % block_size != 0)
      throw ConfigError("frame " + std::to_string(width) + "x" + std::to_string(height) +
                        " is not divisible by block_size " + std::to_string(block_size));
    if (keyint < 2) throw ConfigError("keyint must be >= 2");
    if (search_range < 1) throw ConfigError("search_range must be >= 1");
    if (search_range > 0x7fff) throw ConfigError("search_range does not fit a 16-bit displacement");
    if (frame_count < 1) throw ConfigError("frame_count must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
  }

  friend bool operator==(const VideoHeader&, const VideoHeader&) = default;
};

struct RawVideo {
  VideoHeader header;
  std::vector<PixelPlane> frames;  // display order

  friend bool operator==(const RawVideo&, const RawVideo&) = default;
};

enum class FrameType : std::uint8_t { P = 0, B = 1 };
enum class PredMode : std::uint8_t { Fwd = 0, Bwd = 1, Bi = 2 };

inline char frame_type_letter(FrameType t) { return t == FrameType::P ? 'P' : 'B'; }

/// Displacements follow content motion: the prediction for a block at p is
/// the reference block at p - (dx, dy).
struct MotionVector {
  std::int16_t fwd_dx = 0;
  std::int16_t fwd_dy = 0;
  std::int16_t bwd_dx = 0;
  std::int16_t bwd_dy = 0;

  friend bool operator==(const MotionVector&, const MotionVector&) = default;
};

struct MotionField {
  int rows = 0;
  int cols = 0;
  std::vector<MotionVector> vectors;  // row-major
  std::vector<PredMode> modes;        // row-major

  MotionField() = default;
  MotionField(int r, int c)
      : rows(r), cols(c), vectors(static_cast<std::size_t>(r * c)),
        modes(static_cast<std::size_t>(r * c), PredMode::Fwd) {}

  MotionVector& vec(int r, int c) { return vectors[static_cast<std::size_t>(r * cols + c)]; }
  const MotionVector& vec(int r, int c) const { return vectors[static_cast<std::size_t>(r * cols + c)]; }
  PredMode& mode(int r, int c) { return modes[static_cast<std::size_t>(r * cols + c)]; }
  PredMode mode(int r, int c) const { return modes[static_cast<std::size_t>(r * cols + c)]; }

  bool needs_backward() const {
    for (auto m : modes)
      if (m != PredMode::Fwd) return true;
    return false;
  }

  friend bool operator==(const MotionField&, const MotionField&) = default;
};

struct CodedFrame {
  FrameType type = FrameType::P;
  std::uint32_t display_index = 0;  // absolute frame index in the video
  MotionField motion;
  ResidualPlane residual;

  friend bool operator==(const CodedFrame&, const CodedFrame&) = default;
};

struct Gop {
  std::uint32_t display_start = 0;     // display index of the I-frame
  PixelPlane iframe;
  std::vector<CodedFrame> coded;       // display order
  std::vector<std::uint32_t> coded_order;  // indices into `coded`, decode order

  std::size_t frame_count() const { return 1 + coded.size(); }

  friend bool operator==(const Gop&, const Gop&) = default;
};

struct CompressedVideo {
  VideoHeader header;
  std::vector<Gop> gops;

  friend bool operator==(const CompressedVideo&, const CompressedVideo&) = default;
};

// ---------------------------------------------------------------------------
// Instrumentation

namespace detail {
inline std::atomic<std::uint64_t> predict_calls{0};
}

/// Number of predict_frame invocations since process start (all threads).
inline std::uint64_t predict_frame_calls() { return detail::predict_calls.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------------------
// GOP layout rules

/// Frame type at GOP-local offset (>= 1) inside a GOP of `gop_frames` frames.
inline FrameType frame_type_at(std::uint32_t offset, std::uint32_t gop_frames) {
  if (offset % 2 == 1 && offset + 1 < gop_frames) return FrameType::B;
  return FrameType::P;
}

/// Reference offsets (0 = the I-frame) of a coded frame, derived from the
/// frame types present in the GOP rather than from the fixed pattern.
struct References {
  std::uint32_t fwd = 0;
  std::optional<std::uint32_t> bwd;
};

/// `types[k]` is the type at offset k + 1. Throws StructuralError when a
/// B-frame has no following anchor inside the GOP.
inline References references_of(const std::vector<FrameType>& types, std::uint32_t offset) {
  References refs;
  for (std::uint32_t j = offset; j-- > 1;) {
    if (types[j - 1] == FrameType::P) {
      refs.fwd = j;
      break;
    }
  }
  if (types[offset - 1] == FrameType::B) {
    for (std::uint32_t j = offset + 1; j <= types.size(); ++j) {
      if (types[j - 1] == FrameType::P) {
        refs.bwd = j;
        break;
      }
    }
    if (!refs.bwd)
      throw StructuralError("B-frame at GOP offset " + std::to_string(offset) + " has no backward reference");
  }
  return refs;
}

inline std::vector<FrameType> gop_types(const Gop& gop) {
  std::vector<FrameType> types;
  types.reserve(gop.coded.size());
  for (const auto& f : gop.coded) types.push_back(f.type);
  return types;
}

/// Decode order for a display-ordered type list: each P precedes the B that
/// sits immediately before it in display order.
inline std::vector<std::uint32_t> decode_order(const std::vector<FrameType>& types) {
  std::vector<std::uint32_t> order;
  order.reserve(types.size());
  std::vector<std::uint32_t> pending_b;
  for (std::uint32_t k = 0; k < types.size(); ++k) {
    if (types[k] == FrameType::B) {
      pending_b.push_back(k);
    } else {
      order.push_back(k);
      order.insert(order.end(), pending_b.begin(), pending_b.end());
      pending_b.clear();
    }
  }
  order.insert(order.end(), pending_b.begin(), pending_b.end());
  return order;
}

// ---------------------------------------------------------------------------
// Motion search and prediction

struct SearchResult {
  int dx = 0;
  int dy = 0;
  std::uint64_t sad = 0;

  friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

/// SAD between the target block at (x, y) and the reference block whose
/// top-left is (rx, ry), summed over all channels.
inline std::uint64_t block_sad(const PixelPlane& target, const PixelPlane& reference, int x, int y, int rx, int ry,
                               int block) {
  std::uint64_t sad = 0;
  for (int c = 0; c < target.channels; ++c) {
    for (int j = 0; j < block; ++j) {
      const std::uint8_t* t = &target.at(c, y + j, x);
      const std::uint8_t* r = &reference.at(c, ry + j, rx);
      for (int i = 0; i < block; ++i) sad += static_cast<std::uint64_t>(std::abs(int{t[i]} - int{r[i]}));
    }
  }
  return sad;
}

/// Exhaustive integer search for the block of `target` with top-left (x, y).
/// Candidates (dx, dy) satisfy |dx|,|dy| <= range and keep the displaced
/// block inside `reference`. Ties prefer smaller |dx|+|dy|, then raster order
/// (dy ascending, then dx ascending).
inline SearchResult block_search(const PixelPlane& target, const PixelPlane& reference, int x, int y, int block,
                                 int range) {
  SearchResult best;
  best.sad = std::numeric_limits<std::uint64_t>::max();
  int best_l1 = std::numeric_limits<int>::max();
  for (int dy = -range; dy <= range; ++dy) {
    const int ry = y - dy;
    if (ry < 0 || ry + block > reference.height) continue;
    for (int dx = -range; dx <= range; ++dx) {
      const int rx = x - dx;
      if (rx < 0 || rx + block > reference.width) continue;
      const auto sad = block_sad(target, reference, x, y, rx, ry, block);
      const int l1 = std::abs(dx) + std::abs(dy);
      if (sad < best.sad || (sad == best.sad && l1 < best_l1)) {
        best = {dx, dy, sad};
        best_l1 = l1;
      }
    }
  }
  return best;
}

namespace detail {

inline void copy_block(PixelPlane& out, const PixelPlane& ref, int x, int y, int dx, int dy, int block) {
  const int rx = x - dx;
  const int ry = y - dy;
  if (rx < 0 || ry < 0 || rx + block > ref.width || ry + block > ref.height)
    throw StructuralError("motion vector (" + std::to_string(dx) + "," + std::to_string(dy) + ") at block (" +
                          std::to_string(x) + "," + std::to_string(y) + ") leaves the reference frame");
  for (int c = 0; c < ref.channels; ++c)
    for (int j = 0; j < block; ++j)
      for (int i = 0; i < block; ++i) out.at(c, y + j, x + i) = ref.at(c, ry + j, rx + i);
}

inline std::uint8_t bi_average(std::uint8_t a, std::uint8_t b) {
  return static_cast<std::uint8_t>((int{a} + int{b} + 1) / 2);
}

}  // namespace detail

/// Motion-compensated prediction of one frame. `bwd` must be provided when
/// any block uses BWD or BI mode.
inline PixelPlane predict_frame(const MotionField& motion, int block, const PixelPlane& fwd,
                                const PixelPlane* bwd = nullptr) {
  detail::predict_calls.fetch_add(1, std::memory_order_relaxed);
  if (motion.rows * block != fwd.height || motion.cols * block != fwd.width)
    throw StructuralError("motion grid " + std::to_string(motion.rows) + "x" + std::to_string(motion.cols) +
                          " does not tile a " + std::to_string(fwd.height) + "x" + std::to_string(fwd.width) +
                          " frame with block " + std::to_string(block));
  if (bwd == nullptr && motion.needs_backward())
    throw StructuralError("backward reference missing for a BWD/BI motion field");
  if (bwd != nullptr && !bwd->same_geometry(fwd)) throw StructuralError("reference frames differ in geometry");

  PixelPlane out(fwd.channels, fwd.height, fwd.width);
  PixelPlane scratch;
  for (int r = 0; r < motion.rows; ++r) {
    for (int c = 0; c < motion.cols; ++c) {
      const auto& mv = motion.vec(r, c);
      const int x = c * block;
      const int y = r * block;
      switch (motion.mode(r, c)) {
        case PredMode::Fwd:
          detail::copy_block(out, fwd, x, y, mv.fwd_dx, mv.fwd_dy, block);
          break;
        case PredMode::Bwd:
          detail::copy_block(out, *bwd, x, y, mv.bwd_dx, mv.bwd_dy, block);
          break;
        case PredMode::Bi: {
          if (scratch.data.empty()) scratch = PixelPlane(fwd.channels, fwd.height, fwd.width);
          detail::copy_block(out, fwd, x, y, mv.fwd_dx, mv.fwd_dy, block);
          detail::copy_block(scratch, *bwd, x, y, mv.bwd_dx, mv.bwd_dy, block);
          for (int ch = 0; ch < fwd.channels; ++ch)
            for (int j = 0; j < block; ++j)
              for (int i = 0; i < block; ++i) {
                auto& o = out.at(ch, y + j, x + i);
                o = detail::bi_average(o, scratch.at(ch, y + j, x + i));
              }
          break;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

namespace detail {

inline std::uint64_t bi_sad(const PixelPlane& target, const PixelPlane& fwd, const PixelPlane& bwd, int x, int y,
                            const MotionVector& mv, int block) {
  std::uint64_t sad = 0;
  for (int c = 0; c < target.channels; ++c)
    for (int j = 0; j < block; ++j)
      for (int i = 0; i < block; ++i) {
        const int a = fwd.at(c, y + j - mv.fwd_dy, x + i - mv.fwd_dx);
        const int b = bwd.at(c, y + j - mv.bwd_dy, x + i - mv.bwd_dx);
        const int p = (a + b + 1) / 2;
        sad += static_cast<std::uint64_t>(std::abs(int{target.at(c, y + j, x + i)} - p));
      }
  return sad;
}

inline MotionField estimate_motion(const PixelPlane& target, const PixelPlane& fwd, const PixelPlane* bwd,
                                   const VideoHeader& h) {
  const int block = static_cast<int>(h.block_size);
  const int range = static_cast<int>(h.search_range);
  MotionField field(h.grid_rows(), h.grid_cols());
  for (int r = 0; r < field.rows; ++r) {
    for (int c = 0; c < field.cols; ++c) {
      const int x = c * block;
      const int y = r * block;
      auto& mv = field.vec(r, c);
      const auto f = block_search(target, fwd, x, y, block, range);
      mv.fwd_dx = static_cast<std::int16_t>(f.dx);
      mv.fwd_dy = static_cast<std::int16_t>(f.dy);
      if (bwd == nullptr) continue;
      const auto b = block_search(target, *bwd, x, y, block, range);
      mv.bwd_dx = static_cast<std::int16_t>(b.dx);
      mv.bwd_dy = static_cast<std::int16_t>(b.dy);
      const auto bi = bi_sad(target, fwd, *bwd, x, y, mv, block);
      // Ties resolve in FWD, BWD, BI order.
      PredMode mode = PredMode::Fwd;
      std::uint64_t best = f.sad;
      if (b.sad < best) {
        mode = PredMode::Bwd;
        best = b.sad;
      }
      if (bi < best) mode = PredMode::Bi;
      field.mode(r, c) = mode;
    }
  }
  return field;
}

inline ResidualPlane subtract(const PixelPlane& target, const PixelPlane& prediction) {
  ResidualPlane res(target.channels, target.height, target.width);
  for (std::size_t i = 0; i < target.data.size(); ++i)
    res.data[i] = static_cast<std::int16_t>(int{target.data[i]} - int{prediction.data[i]});
  return res;
}

inline Gop encode_gop(const RawVideo& raw, std::uint32_t start, std::uint32_t count) {
  const auto& h = raw.header;
  Gop gop;
  gop.display_start = start;
  gop.iframe = raw.frames[start];
  std::vector<FrameType> types;
  for (std::uint32_t k = 1; k < count; ++k) types.push_back(frame_type_at(k, count));
  // Lossless coding means decoded references equal the source frames.
  auto frame_at = [&](std::uint32_t offset) -> const PixelPlane& { return raw.frames[start + offset]; };
  for (std::uint32_t k = 1; k < count; ++k) {
    const auto refs = references_of(types, k);
    const PixelPlane* bwd = refs.bwd ? &frame_at(*refs.bwd) : nullptr;
    CodedFrame cf;
    cf.type = types[k - 1];
    cf.display_index = start + k;
    cf.motion = estimate_motion(frame_at(k), frame_at(refs.fwd), bwd, h);
    const auto pred = predict_frame(cf.motion, static_cast<int>(h.block_size), frame_at(refs.fwd), bwd);
    cf.residual = subtract(frame_at(k), pred);
    gop.coded.push_back(std::move(cf));
  }
  gop.coded_order = decode_order(types);
  return gop;
}

inline void check_raw(const RawVideo& raw) {
  raw.header.validate();
  const auto& h = raw.header;
  if (raw.frames.size() != h.frame_count)
    throw ConfigError("raw video holds " + std::to_string(raw.frames.size()) + " frames, header says " +
                      std::to_string(h.frame_count));
  for (const auto& f : raw.frames)
    if (f.channels != static_cast<int>(h.channels) || f.height != static_cast<int>(h.height) ||
        f.width != static_cast<int>(h.width))
      throw ConfigError("raw frame geometry does not match the header");
}

}  // namespace detail

/// Encodes `raw` into closed GOPs of `keyint` frames. GOPs are independent,
/// so `jobs` > 1 encodes them concurrently; output is identical either way.
inline CompressedVideo encode_video(const RawVideo& raw, std::size_t jobs = 1) {
  detail::check_raw(raw);
  const auto& h = raw.header;
  CompressedVideo cv;
  cv.header = h;
  const std::uint32_t n_gops = (h.frame_count + h.keyint - 1) / h.keyint;
  cv.gops.resize(n_gops);
  parallel_for(n_gops, jobs, [&](std::size_t g) {
    const auto start = static_cast<std::uint32_t>(g) * h.keyint;
    const auto count = std::min(h.keyint, h.frame_count - start);
    cv.gops[g] = detail::encode_gop(raw, start, count);
  });
  return cv;
}

// ---------------------------------------------------------------------------
// Decoder

namespace detail {

inline PixelPlane add_residual(const PixelPlane& prediction, const ResidualPlane& residual) {
  if (!(residual.channels == prediction.channels && residual.height == prediction.height &&
        residual.width == prediction.width))
    throw StructuralError("residual geometry does not match the frame");
  PixelPlane out(prediction.channels, prediction.height, prediction.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const int v = int{prediction.data[i]} + int{residual.data[i]};
    out.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
  }
  return out;
}

}  // namespace detail

/// Reconstructs every frame of one GOP (display order, I-frame first).
inline std::vector<PixelPlane> decode_gop(const Gop& gop, const VideoHeader& h) {
  const auto types = gop_types(gop);
  const std::size_t n = gop.frame_count();
  if (gop.coded_order.size() != gop.coded.size())
    throw StructuralError("coded_order length " + std::to_string(gop.coded_order.size()) + " != coded frame count " +
                          std::to_string(gop.coded.size()));
  std::vector<PixelPlane> frames(n);
  std::vector<bool> done(n, false);
  frames[0] = gop.iframe;
  done[0] = true;
  for (auto idx : gop.coded_order) {
    if (idx >= gop.coded.size()) throw StructuralError("coded_order entry out of range");
    const std::uint32_t offset = idx + 1;
    if (done[offset]) throw StructuralError("coded_order repeats frame " + std::to_string(idx));
    const auto& cf = gop.coded[idx];
    const auto refs = references_of(types, offset);
    if (!done[refs.fwd] || (refs.bwd && !done[*refs.bwd]))
      throw StructuralError("coded_order decodes frame at offset " + std::to_string(offset) +
                            " before its reference");
    const PixelPlane* bwd = refs.bwd ? &frames[*refs.bwd] : nullptr;
    const auto pred = predict_frame(cf.motion, static_cast<int>(h.block_size), frames[refs.fwd], bwd);
    frames[offset] = detail::add_residual(pred, cf.residual);
    done[offset] = true;
  }
  return frames;
}

inline RawVideo decode_video(const CompressedVideo& cv) {
  RawVideo raw;
  raw.header = cv.header;
  raw.frames.reserve(cv.header.frame_count);
  for (const auto& gop : cv.gops) {
    auto frames = decode_gop(gop, cv.header);
    for (auto& f : frames) raw.frames.push_back(std::move(f));
  }
  if (raw.frames.size() != cv.header.frame_count)
    throw StructuralError("GOPs hold " + std::to_string(raw.frames.size()) + " frames, header says " +
                          std::to_string(cv.header.frame_count));
  return raw;
}

// ---------------------------------------------------------------------------
// Compressed-domain reader

struct CodedView {
  FrameType type;
  std::uint32_t display_index;
  const MotionField* motion;
  const ResidualPlane* residual;
};

struct GopView {
  std::uint32_t display_start;
  const PixelPlane* iframe;
  std::vector<CodedView> frames;  // display order
};

/// Exposes the stored I-frames, motion fields and residuals without any
/// prediction or reconstruction. Views point into `cv` and share its lifetime.
inline std::vector<GopView> read_compressed(const CompressedVideo& cv) {
  std::vector<GopView> out;
  out.reserve(cv.gops.size());
  for (const auto& gop : cv.gops) {
    GopView view{gop.display_start, &gop.iframe, {}};
    view.frames.reserve(gop.coded.size());
    for (const auto& cf : gop.coded) view.frames.push_back({cf.type, cf.display_index, &cf.motion, &cf.residual});
    out.push_back(std::move(view));
  }
  return out;
}

/// Display pattern string such as "I B P B P B P P" for one GOP.
inline std::string gop_pattern(const Gop& gop) {
  std::string s = "I";
  for (const auto& cf : gop.coded) {
    s += ' ';
    s += frame_type_letter(cf.type);
  }
  return s;
}

}  // namespace cocap::codec
