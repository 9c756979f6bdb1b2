#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "cocap/codec.hpp"
#include "cocap/random.hpp"

namespace cocap::fixture {

/// Noise background with a few translating rectangles, so motion search has
/// real work to do.
inline codec::RawVideo random_video(Rng& rng, const codec::VideoHeader& h) {
  codec::RawVideo raw;
  raw.header = h;
  const int w = static_cast<int>(h.width), hh = static_cast<int>(h.height), ch = static_cast<int>(h.channels);
  codec::PixelPlane base(ch, hh, w);
  for (auto& v : base.data) v = static_cast<std::uint8_t>(rng.below(256));
  const int vx = static_cast<int>(rng.below(5)) - 2, vy = static_cast<int>(rng.below(5)) - 2;
  const bool noisy = rng.below(3) == 0;
  for (std::uint32_t t = 0; t < h.frame_count; ++t) {
    codec::PixelPlane f(ch, hh, w);
    const int ti = static_cast<int>(t);
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < hh; ++y)
        for (int x = 0; x < w; ++x) {
          const int sx = ((x - vx * ti) % w + w) % w, sy = ((y - vy * ti) % hh + hh) % hh;
          f.at(c, y, x) = base.at(c, sy, sx);
        }
    if (noisy)
      for (auto& v : f.data)
        if (rng.below(8) == 0) v = static_cast<std::uint8_t>(rng.below(256));
    raw.frames.push_back(std::move(f));
  }
  return raw;
}

inline codec::VideoHeader random_header(Rng& rng, std::uint32_t max_side = 64, std::uint32_t max_frames = 32) {
  codec::VideoHeader h;
  h.block_size = 4;
  h.width = 4 * (1 + static_cast<std::uint32_t>(rng.below(max_side / 4)));
  h.height = 4 * (1 + static_cast<std::uint32_t>(rng.below(max_side / 4)));
  h.frame_count = 1 + static_cast<std::uint32_t>(rng.below(max_frames));
  h.keyint = rng.below(2) == 0 ? 4 : 8;
  h.search_range = 1 + static_cast<std::uint32_t>(rng.below(4));
  h.channels = 1 + static_cast<std::uint32_t>(rng.below(3));
  return h;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cocap_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Runs a shell command and returns its exit status.
inline int run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WEXITSTATUS(rc);
}

}  // namespace cocap::fixture
