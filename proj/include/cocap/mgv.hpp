#pragma once

// MGV container, little-endian:
//
//   "MGV1"
//   u32 width, height, frame_count, keyint, block_size, search_range, channels
//   per GOP:
//     u32 coded-frame count
//     u8  I-frame pixels (channels * height * width)
//     per coded frame, in decode order:
//       u8  frame type (0 = P, 1 = B)
//       u32 display index
//       i16 quadruples (fwd dx, fwd dy, bwd dx, bwd dy), row-major grid
//       u8  prediction modes, row-major grid
//       i16 residual, channel-major then row-major
//
// Raw video files ("MGR1") carry u32 width, height, frame_count, channels
// followed by the frames' u8 planes in display order.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cocap/binary_io.hpp"
#include "cocap/codec.hpp"
#include "cocap/file_io.hpp"

namespace cocap::codec {

inline constexpr std::string_view kMgvMagic = "MGV1";
inline constexpr std::string_view kRawMagic = "MGR1";

namespace detail {

inline void put_header(io::ByteWriter& w, const VideoHeader& h) {
  for (auto v : {h.width, h.height, h.frame_count, h.keyint, h.block_size, h.search_range, h.channels}) w.put(v);
}

inline void check_magic(io::ByteReader& r, std::string_view magic) {
  if (r.remaining() < magic.size()) throw ParseError("truncated", r.offset());
  const auto got = r.get_string(magic.size());
  if (got != magic) throw ParseError("magic mismatch: expected '" + std::string(magic) + "'", 0);
}

}  // namespace detail

inline std::vector<std::uint8_t> to_bytes(const CompressedVideo& cv) {
  io::ByteWriter w;
  w.put_bytes(kMgvMagic);
  detail::put_header(w, cv.header);
  for (const auto& gop : cv.gops) {
    w.put(static_cast<std::uint32_t>(gop.coded.size()));
    w.put_array(std::span<const std::uint8_t>(gop.iframe.data));
    for (auto idx : gop.coded_order) {
      const auto& cf = gop.coded[idx];
      w.put(static_cast<std::uint8_t>(cf.type));
      w.put(cf.display_index);
      for (const auto& mv : cf.motion.vectors) {
        w.put(mv.fwd_dx);
        w.put(mv.fwd_dy);
        w.put(mv.bwd_dx);
        w.put(mv.bwd_dy);
      }
      for (auto m : cf.motion.modes) w.put(static_cast<std::uint8_t>(m));
      w.put_array(std::span<const std::int16_t>(cf.residual.data));
    }
  }
  return w.take();
}

/// Writes the MGV layout and returns the number of bytes written.
inline std::size_t write_bitstream(const CompressedVideo& cv, std::ostream& sink) {
  const auto bytes = to_bytes(cv);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw IoError("bitstream sink rejected write");
  return bytes.size();
}

/// Parses an MGV stream. Throws ParseError (with offset) on bad magic,
/// truncation, header invariant violations, or inconsistent frame records;
/// nothing is returned on failure.
inline CompressedVideo read_bitstream(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  detail::check_magic(r, kMgvMagic);

  CompressedVideo cv;
  auto& h = cv.header;
  const std::size_t header_at = r.offset();
  h.width = r.get<std::uint32_t>();
  h.height = r.get<std::uint32_t>();
  h.frame_count = r.get<std::uint32_t>();
  h.keyint = r.get<std::uint32_t>();
  h.block_size = r.get<std::uint32_t>();
  h.search_range = r.get<std::uint32_t>();
  h.channels = r.get<std::uint32_t>();
  try {
    h.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("header invariant violation: ") + e.what(), header_at);
  }

  const int rows = h.grid_rows();
  const int cols = h.grid_cols();
  const int range = static_cast<int>(h.search_range);

  std::uint32_t displayed = 0;
  while (displayed < h.frame_count) {
    const std::size_t gop_at = r.offset();
    const auto n_coded = r.get<std::uint32_t>();
    const std::uint32_t expected = std::min(h.keyint, h.frame_count - displayed) - 1;
    if (n_coded != expected)
      throw ParseError("GOP declares " + std::to_string(n_coded) + " coded frames, expected " +
                           std::to_string(expected),
                       gop_at);
    Gop gop;
    gop.display_start = displayed;
    gop.iframe = PixelPlane(static_cast<int>(h.channels), static_cast<int>(h.height), static_cast<int>(h.width));
    r.get_array(std::span<std::uint8_t>(gop.iframe.data));
    gop.coded.resize(n_coded);
    std::vector<bool> seen(n_coded, false);
    for (std::uint32_t i = 0; i < n_coded; ++i) {
      const std::size_t frame_at = r.offset();
      CodedFrame cf;
      const auto type = r.get<std::uint8_t>();
      if (type > 1) throw ParseError("unknown frame type " + std::to_string(type), frame_at);
      cf.type = static_cast<FrameType>(type);
      cf.display_index = r.get<std::uint32_t>();
      if (cf.display_index <= displayed || cf.display_index > displayed + n_coded)
        throw ParseError("display index " + std::to_string(cf.display_index) + " outside its GOP", frame_at + 1);
      const auto slot = cf.display_index - displayed - 1;
      if (seen[slot]) throw ParseError("duplicate display index " + std::to_string(cf.display_index), frame_at + 1);
      seen[slot] = true;

      cf.motion = MotionField(rows, cols);
      const std::size_t mv_at = r.offset();
      for (auto& mv : cf.motion.vectors) {
        mv.fwd_dx = r.get<std::int16_t>();
        mv.fwd_dy = r.get<std::int16_t>();
        mv.bwd_dx = r.get<std::int16_t>();
        mv.bwd_dy = r.get<std::int16_t>();
        for (int d : {mv.fwd_dx, mv.fwd_dy, mv.bwd_dx, mv.bwd_dy})
          if (d < -range || d > range) throw ParseError("motion vector exceeds search_range", mv_at);
        if (cf.type == FrameType::P && (mv.bwd_dx != 0 || mv.bwd_dy != 0))
          throw ParseError("P-frame carries a backward vector", mv_at);
      }
      const std::size_t mode_at = r.offset();
      for (auto& m : cf.motion.modes) {
        const auto v = r.get<std::uint8_t>();
        if (v > 2) throw ParseError("unknown prediction mode " + std::to_string(v), mode_at);
        if (cf.type == FrameType::P && v != 0) throw ParseError("P-frame uses a non-forward mode", mode_at);
        m = static_cast<PredMode>(v);
      }
      const std::size_t res_at = r.offset();
      cf.residual = ResidualPlane(static_cast<int>(h.channels), static_cast<int>(h.height), static_cast<int>(h.width));
      r.get_array(std::span<std::int16_t>(cf.residual.data));
      for (auto v : cf.residual.data)
        if (v < -255 || v > 255) throw ParseError("residual outside [-255, 255]", res_at);
      gop.coded_order.push_back(slot);
      gop.coded[slot] = std::move(cf);
    }
    // Structural checks on the reconstructed GOP: every B has a backward
    // anchor and the stream order decodes references first.
    try {
      const auto types = gop_types(gop);
      std::vector<bool> done(n_coded + 1, false);
      done[0] = true;
      for (auto idx : gop.coded_order) {
        const auto refs = references_of(types, idx + 1);
        if (!done[refs.fwd] || (refs.bwd && !done[*refs.bwd]))
          throw StructuralError("frame " + std::to_string(gop.coded[idx].display_index) +
                                " precedes its reference in decode order");
        done[idx + 1] = true;
      }
    } catch (const StructuralError& e) {
      throw ParseError(e.what(), gop_at);
    }
    displayed += n_coded + 1;
    cv.gops.push_back(std::move(gop));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last GOP", r.offset());
  return cv;
}

inline CompressedVideo load_mgv(const std::filesystem::path& path) { return read_bitstream(io::read_file(path)); }

inline void save_mgv(const CompressedVideo& cv, const std::filesystem::path& path) {
  io::write_file(path, to_bytes(cv));
}

// Raw frames --------------------------------------------------------------

inline std::vector<std::uint8_t> raw_to_bytes(const RawVideo& raw) {
  io::ByteWriter w;
  w.put_bytes(kRawMagic);
  const auto& h = raw.header;
  for (auto v : {h.width, h.height, h.frame_count, h.channels}) w.put(v);
  for (const auto& f : raw.frames) w.put_array(std::span<const std::uint8_t>(f.data));
  return w.take();
}

/// Reads frames only; coding parameters (keyint, block size, search range)
/// come from `coding`, whose geometry fields are overwritten.
inline RawVideo raw_from_bytes(std::span<const std::uint8_t> bytes, VideoHeader coding) {
  io::ByteReader r(bytes);
  detail::check_magic(r, kRawMagic);
  RawVideo raw;
  coding.width = r.get<std::uint32_t>();
  coding.height = r.get<std::uint32_t>();
  coding.frame_count = r.get<std::uint32_t>();
  coding.channels = r.get<std::uint32_t>();
  if (coding.width == 0 || coding.height == 0 || coding.frame_count == 0 || coding.channels == 0 ||
      coding.width > 16384 || coding.height > 16384 || coding.channels > 16)
    throw ParseError("implausible raw video geometry", 4);
  raw.header = coding;
  for (std::uint32_t i = 0; i < coding.frame_count; ++i) {
    PixelPlane f(static_cast<int>(coding.channels), static_cast<int>(coding.height), static_cast<int>(coding.width));
    r.get_array(std::span<std::uint8_t>(f.data));
    raw.frames.push_back(std::move(f));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last frame", r.offset());
  return raw;
}

}  // namespace cocap::codec
