#pragma once

// Selection of GOPs and B/P frames that form the model input: N groups, each
// one I-frame plus M (motion, residual) slots. Short GOPs are zero-padded and
// the padding is flagged so downstream attention can mask it out.

#include <cstdint>
#include <string>
#include <vector>

#include "cocap/codec.hpp"
#include "cocap/error.hpp"

namespace cocap::sampler {

struct SamplerConfig {
  std::size_t n_gops = 2;    // N
  std::size_t m_frames = 7;  // M
  int motion_size = 0;       // side of the resized motion grid; 0 keeps the codec grid

  void validate() const {
    if (n_gops < 1) throw ConfigError("n_gops must be >= 1");
    if (m_frames < 1) throw ConfigError("m_frames must be >= 1");
    if (motion_size < 0) throw ConfigError("motion_size must be >= 0");
  }
};

enum class SlotType : std::uint8_t { P = 0, B = 1, Pad = 2 };

/// 4 x size x size motion channels: fwd dx, fwd dy, bwd dx, bwd dy.
struct MotionTensor {
  int size = 0;
  std::vector<double> data;

  friend bool operator==(const MotionTensor&, const MotionTensor&) = default;
};

struct SampledGroup {
  std::size_t gop_index = 0;
  codec::PixelPlane iframe;
  std::vector<MotionTensor> motions;
  std::vector<codec::ResidualPlane> residuals;
  std::vector<SlotType> frame_types;
  std::vector<bool> valid;

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }

  friend bool operator==(const SampledGroup&, const SampledGroup&) = default;
};

struct SampledInput {
  std::vector<SampledGroup> groups;

  /// Number of entries in the flattened X layout: N * (1 + 2M).
  std::size_t item_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += 1 + g.motions.size() + g.residuals.size();
    return n;
  }

  friend bool operator==(const SampledInput&, const SampledInput&) = default;
};

/// idx_k = floor(k * total / n) when total >= n; otherwise every GOP once,
/// then the last one repeated to length n.
inline std::vector<std::size_t> sample_gops(std::size_t total_gops, std::size_t n) {
  if (total_gops < 1) throw ConfigError("video has no GOPs");
  std::vector<std::size_t> idx;
  idx.reserve(n);
  if (total_gops >= n) {
    for (std::size_t k = 0; k < n; ++k) idx.push_back(k * total_gops / n);
  } else {
    for (std::size_t k = 0; k < n; ++k) idx.push_back(std::min(k, total_gops - 1));
  }
  return idx;
}

struct FrameSelection {
  std::vector<std::size_t> indices;  // into Gop::coded; 0 for padded slots
  std::vector<bool> valid;
};

/// Uniform selection of m of `coded_count` frames: floor(k * c / m) when
/// c >= m, otherwise all c frames followed by m - c padded slots.
inline FrameSelection sample_bp_frames(std::size_t coded_count, std::size_t m) {
  if (m < 1) throw ConfigError("m_frames must be >= 1");
  FrameSelection sel;
  sel.indices.reserve(m);
  sel.valid.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (coded_count >= m) {
      sel.indices.push_back(k * coded_count / m);
      sel.valid.push_back(true);
    } else if (k < coded_count) {
      sel.indices.push_back(k);
      sel.valid.push_back(true);
    } else {
      sel.indices.push_back(0);
      sel.valid.push_back(false);
    }
  }
  return sel;
}

inline FrameSelection sample_bp_frames(const codec::Gop& gop, std::size_t m) {
  return sample_bp_frames(gop.coded.size(), m);
}

/// Nearest-neighbour resize of a motion grid to size x size, laid out as
/// four channel planes.
inline MotionTensor motion_tensor(const codec::MotionField& field, int size) {
  if (size == 0) {
    if (field.rows != field.cols) throw ConfigError("native motion grid must be square; set motion_size");
    size = field.rows;
  }
  MotionTensor t;
  t.size = size;
  const auto plane = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  t.data.assign(4 * plane, 0.0);
  for (int y = 0; y < size; ++y) {
    const int sr = y * field.rows / size;
    for (int x = 0; x < size; ++x) {
      const int sc = x * field.cols / size;
      const auto& mv = field.vec(sr, sc);
      const auto at = static_cast<std::size_t>(y * size + x);
      t.data[at] = mv.fwd_dx;
      t.data[plane + at] = mv.fwd_dy;
      t.data[2 * plane + at] = mv.bwd_dx;
      t.data[3 * plane + at] = mv.bwd_dy;
    }
  }
  return t;
}

inline SampledInput assemble_inputs(const codec::CompressedVideo& cv, const SamplerConfig& cfg) {
  cfg.validate();
  if (cv.gops.empty()) throw ConfigError("compressed video has no GOPs");
  const auto& h = cv.header;
  const int size = cfg.motion_size > 0 ? cfg.motion_size : h.grid_rows();
  if (cfg.motion_size == 0 && h.grid_rows() != h.grid_cols())
    throw ConfigError("non-square motion grid needs an explicit motion_size");
  const auto views = codec::read_compressed(cv);
  SampledInput out;
  for (auto g : sample_gops(views.size(), cfg.n_gops)) {
    const auto& view = views[g];
    SampledGroup group;
    group.gop_index = g;
    group.iframe = *view.iframe;
    const auto sel = sample_bp_frames(view.frames.size(), cfg.m_frames);
    for (std::size_t k = 0; k < cfg.m_frames; ++k) {
      if (sel.valid[k]) {
        const auto& f = view.frames[sel.indices[k]];
        group.motions.push_back(motion_tensor(*f.motion, size));
        group.residuals.push_back(*f.residual);
        group.frame_types.push_back(f.type == codec::FrameType::P ? SlotType::P : SlotType::B);
        group.valid.push_back(true);
      } else {
        MotionTensor zero;
        zero.size = size;
        zero.data.assign(4 * static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0.0);
        group.motions.push_back(std::move(zero));
        group.residuals.emplace_back(static_cast<int>(h.channels), static_cast<int>(h.height),
                                     static_cast<int>(h.width));
        group.frame_types.push_back(SlotType::Pad);
        group.valid.push_back(false);
      }
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

}  // namespace cocap::sampler
