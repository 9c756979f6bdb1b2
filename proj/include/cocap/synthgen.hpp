#pragma once

// Captioned synthetic clips: one textured shape translating over a black
// background with wraparound.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cocap/codec.hpp"
#include "cocap/error.hpp"
#include "cocap/file_io.hpp"
#include "cocap/mgv.hpp"
#include "cocap/parallel.hpp"
#include "cocap/random.hpp"

namespace cocap::synth {

enum class Shape : std::uint8_t { Square, Circle, Bar };
enum class Color : std::uint8_t { Red, Green, Blue, White };
enum class Motion : std::uint8_t { Left, Right, Up, Down, Still };

inline constexpr std::array<Shape, 3> kShapes{Shape::Square, Shape::Circle, Shape::Bar};
inline constexpr std::array<Color, 4> kColors{Color::Red, Color::Green, Color::Blue, Color::White};
inline constexpr std::array<Motion, 5> kMotions{Motion::Left, Motion::Right, Motion::Up, Motion::Down, Motion::Still};

inline std::string_view name(Shape s) {
  switch (s) {
    case Shape::Square: return "square";
    case Shape::Circle: return "circle";
    case Shape::Bar: return "bar";
  }
  return "?";
}

inline std::string_view name(Color c) {
  switch (c) {
    case Color::Red: return "red";
    case Color::Green: return "green";
    case Color::Blue: return "blue";
    case Color::White: return "white";
  }
  return "?";
}

inline std::string_view name(Motion m) {
  switch (m) {
    case Motion::Left: return "left";
    case Motion::Right: return "right";
    case Motion::Up: return "up";
    case Motion::Down: return "down";
    case Motion::Still: return "still";
  }
  return "?";
}

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& all, const char* what) {
  for (auto e : all)
    if (name(e) == s) return e;
  throw ParseError(std::string("unknown ") + what + " '" + std::string(s) + "'", 0);
}

/// Per-frame displacement in pixels.
inline std::pair<int, int> direction(Motion m) {
  switch (m) {
    case Motion::Left: return {-1, 0};
    case Motion::Right: return {1, 0};
    case Motion::Up: return {0, -1};
    case Motion::Down: return {0, 1};
    case Motion::Still: return {0, 0};
  }
  return {0, 0};
}

struct SceneSpec {
  Shape shape = Shape::Square;
  Color color = Color::Red;
  Motion motion = Motion::Still;
  int speed = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (speed < 0) throw ConfigError("speed must be >= 0");
    if ((speed == 0) != (motion == Motion::Still)) throw ConfigError("speed is 0 exactly when the scene is still");
  }

  std::pair<int, int> velocity() const {
    const auto [dx, dy] = direction(motion);
    return {dx * speed, dy * speed};
  }

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

inline std::string caption(const SceneSpec& s) {
  std::string out = "a " + std::string(name(s.color)) + " " + std::string(name(s.shape));
  if (s.motion == Motion::Still) return out + " stays still";
  return out + " moves " + std::string(name(s.motion));
}

/// Every word the caption template can produce.
inline std::vector<std::string> template_words() {
  std::vector<std::string> w{"a", "moves", "stays"};
  for (auto c : kColors) w.emplace_back(name(c));
  for (auto s : kShapes) w.emplace_back(name(s));
  for (auto m : kMotions) w.emplace_back(name(m));
  return w;
}

inline std::pair<int, int> shape_extent(Shape s) {
  switch (s) {
    case Shape::Square: return {16, 16};
    case Shape::Circle: return {16, 16};
    case Shape::Bar: return {24, 8};
  }
  return {0, 0};
}

inline bool shape_covers(Shape s, int x, int y) {
  const auto [w, h] = shape_extent(s);
  if (x < 0 || y < 0 || x >= w || y >= h) return false;
  if (s != Shape::Circle) return true;
  const double cx = x - 7.5, cy = y - 7.5;
  return cx * cx + cy * cy <= 64.0;
}

inline std::array<int, 3> base_rgb(Color c) {
  switch (c) {
    case Color::Red: return {200, 40, 40};
    case Color::Green: return {40, 200, 40};
    case Color::Blue: return {40, 40, 200};
    case Color::White: return {200, 200, 200};
  }
  return {0, 0, 0};
}

struct Sample {
  codec::RawVideo video;
  std::string caption;
  int start_x = 0;
  int start_y = 0;
};

/// Top-left corner of the shape in frame t, wrapped into the frame.
inline std::pair<int, int> position_at(const Sample& s, const SceneSpec& spec, int t, const codec::VideoHeader& h) {
  const auto [vx, vy] = spec.velocity();
  const int w = static_cast<int>(h.width), hh = static_cast<int>(h.height);
  return {((s.start_x + vx * t) % w + w) % w, ((s.start_y + vy * t) % hh + hh) % hh};
}

/// Renders the clip. The texture rides with the shape, so every interior
/// block has a unique exact match at the true displacement.
inline Sample generate_sample(const SceneSpec& spec, const codec::VideoHeader& header) {
  spec.validate();
  header.validate();
  const auto [sw, sh] = shape_extent(spec.shape);
  if (static_cast<std::uint32_t>(sw) > header.width || static_cast<std::uint32_t>(sh) > header.height)
    throw ConfigError("frame too small for the shape");
  Rng rng(spec.seed);
  Sample out;
  out.caption = caption(spec);
  out.start_x = static_cast<int>(rng.below(header.width));
  out.start_y = static_cast<int>(rng.below(header.height));
  const int channels = static_cast<int>(header.channels);
  std::vector<std::uint8_t> texture(static_cast<std::size_t>(channels * sw * sh));
  const auto rgb = base_rgb(spec.color);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < sw * sh; ++i) {
      const int base = rgb[static_cast<std::size_t>(c % 3)];
      const int noise = static_cast<int>(rng.below(81)) - 40;
      texture[static_cast<std::size_t>(c * sw * sh + i)] = static_cast<std::uint8_t>(std::clamp(base + noise, 1, 255));
    }
  out.video.header = header;
  const int w = static_cast<int>(header.width), hh = static_cast<int>(header.height);
  for (std::uint32_t t = 0; t < header.frame_count; ++t) {
    codec::PixelPlane frame(channels, hh, w);
    const auto [px, py] = position_at(out, spec, static_cast<int>(t), header);
    for (int y = 0; y < sh; ++y)
      for (int x = 0; x < sw; ++x) {
        if (!shape_covers(spec.shape, x, y)) continue;
        const int fx = (px + x) % w, fy = (py + y) % hh;
        for (int c = 0; c < channels; ++c) frame.at(c, fy, fx) = texture[static_cast<std::size_t>((c * sh + y) * sw + x)];
      }
    out.video.frames.push_back(std::move(frame));
  }
  return out;
}

/// Mask over the block grid of frame t: blocks overlapping the shape.
inline std::vector<bool> shape_blocks(const codec::PixelPlane& frame, int block) {
  const int rows = frame.height / block, cols = frame.width / block;
  std::vector<bool> mask(static_cast<std::size_t>(rows * cols), false);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      bool any = false;
      for (int ch = 0; ch < frame.channels && !any; ++ch)
        for (int y = 0; y < block && !any; ++y)
          for (int x = 0; x < block && !any; ++x) any = frame.at(ch, r * block + y, c * block + x) != 0;
      mask[static_cast<std::size_t>(r * cols + c)] = any;
    }
  return mask;
}

/// Most frequent forward vector over shape blocks of one coded frame; ties go
/// to the lexicographically smallest (dx, dy).
inline std::optional<std::pair<int, int>> modal_forward_vector(const codec::CodedFrame& cf,
                                                               const codec::PixelPlane& frame, int block) {
  const auto mask = shape_blocks(frame, block);
  std::map<std::pair<int, int>, int> counts;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) ++counts[{cf.motion.vectors[i].fwd_dx, cf.motion.vectors[i].fwd_dy}];
  if (counts.empty()) return std::nullopt;
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

// Datasets ---------------------------------------------------------------

enum class Split : std::uint8_t { Train, Val, Test };

inline std::string_view name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

struct DatasetEntry {
  std::string id;
  Split split = Split::Train;
  SceneSpec spec;
  std::string caption;
  std::string path;  // relative to the dataset root
};

struct DatasetOptions {
  std::size_t count = 120;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 1;
  codec::VideoHeader header{};
};

inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  for (double r : ratios)
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  const auto a = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[0]));
  const auto b = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1]));
  if (a + b > n) throw ConfigError("split ratios overflow the sample count");
  return {a, b, n - a - b};
}

/// Splits are drawn by (shape, color, motion) combination, so no caption
/// string occurs in two splits. Samples cycle through their split's
/// combinations; speed and rendering seed vary per sample.
inline std::vector<DatasetEntry> plan_dataset(const DatasetOptions& opt) {
  if (opt.count == 0) throw ConfigError("dataset count must be >= 1");
  std::vector<SceneSpec> combos;
  for (auto s : kShapes)
    for (auto c : kColors)
      for (auto m : kMotions) combos.push_back({s, c, m, 0, 0});
  Rng rng(mix_seed(opt.seed));
  rng.shuffle(combos.begin(), combos.end());

  const auto combo_sizes = split_sizes(combos.size(), opt.ratios);
  const auto sample_sizes = split_sizes(opt.count, opt.ratios);
  std::vector<DatasetEntry> out;
  std::size_t combo_begin = 0;
  for (std::size_t sp = 0; sp < 3; ++sp) {
    const std::size_t nc = combo_sizes[sp];
    if (sample_sizes[sp] > 0 && nc == 0) throw ConfigError("a non-empty split received no scene combinations");
    for (std::size_t k = 0; k < sample_sizes[sp]; ++k) {
      SceneSpec spec = combos[combo_begin + k % nc];
      const std::size_t index = out.size();
      spec.seed = mix_seed(opt.seed ^ mix_seed(index + 1));
      Rng local(spec.seed ^ 0x5bd1e995ULL);
      spec.speed = spec.motion == Motion::Still ? 0 : 1 + static_cast<int>(local.below(2));
      DatasetEntry e;
      char buf[16];
      std::snprintf(buf, sizeof buf, "%06zu", index);
      e.id = buf;
      e.split = static_cast<Split>(sp);
      e.spec = spec;
      e.caption = caption(spec);
      e.path = "videos/" + e.id + ".mgv";
      out.push_back(std::move(e));
    }
    combo_begin += nc;
  }
  return out;
}

inline std::string manifest_text(const std::vector<DatasetEntry>& entries, Split split) {
  std::string out;
  for (const auto& e : entries)
    if (e.split == split) out += e.id + "\t" + e.caption + "\t" + e.path + "\n";
  return out;
}

inline std::string scenes_text(const std::vector<DatasetEntry>& entries) {
  std::string out = "id\tsplit\tshape\tcolor\tmotion\tspeed\tseed\n";
  for (const auto& e : entries)
    out += e.id + "\t" + std::string(name(e.split)) + "\t" + std::string(name(e.spec.shape)) + "\t" +
           std::string(name(e.spec.color)) + "\t" + std::string(name(e.spec.motion)) + "\t" +
           std::to_string(e.spec.speed) + "\t" + std::to_string(e.spec.seed) + "\n";
  return out;
}

/// Writes train/val/test manifests, scenes.tsv and one MGV file per sample.
inline std::vector<DatasetEntry> generate_dataset(const DatasetOptions& opt, const std::filesystem::path& root,
                                                  std::size_t jobs = 1) {
  auto entries = plan_dataset(opt);
  std::filesystem::create_directories(root / "videos");
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const auto sample = generate_sample(entries[i].spec, opt.header);
    codec::save_mgv(codec::encode_video(sample.video), root / entries[i].path);
  });
  io::write_text(root / "train.tsv", manifest_text(entries, Split::Train));
  io::write_text(root / "val.tsv", manifest_text(entries, Split::Val));
  io::write_text(root / "test.tsv", manifest_text(entries, Split::Test));
  io::write_text(root / "scenes.tsv", scenes_text(entries));
  return entries;
}

struct ManifestRow {
  std::string id;
  std::string caption;
  std::string path;
};

inline std::vector<ManifestRow> parse_manifest(std::string_view text) {
  std::vector<ManifestRow> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    const std::size_t line_at = pos;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos)
      throw ParseError("manifest line needs exactly three tab-separated fields", line_at);
    rows.push_back({std::string(line.substr(0, t1)), std::string(line.substr(t1 + 1, t2 - t1 - 1)),
                    std::string(line.substr(t2 + 1))});
  }
  return rows;
}

inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_text(path));
}

}  // namespace cocap::synth
