#pragma once

// Parameter checkpoints, little-endian:
//   "CKPT", u32 entry count, then per entry:
//   u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f64 data[numel]

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cocap/binary_io.hpp"
#include "cocap/file_io.hpp"
#include "cocap/nn.hpp"

namespace cocap::ad {

inline constexpr std::string_view kCheckpointMagic = "CKPT";

inline std::vector<std::uint8_t> checkpoint_bytes(const std::vector<nn::NamedTensor>& entries) {
  io::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.put(static_cast<std::uint32_t>(e.name.size()));
    w.put_bytes(e.name);
    w.put(static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) w.put(static_cast<std::uint32_t>(d));
    w.put_array(e.tensor.values());
  }
  return w.take();
}

inline std::vector<nn::NamedTensor> parse_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.remaining() < kCheckpointMagic.size()) throw ParseError("truncated", 0);
  if (r.get_string(kCheckpointMagic.size()) != kCheckpointMagic)
    throw ParseError("magic mismatch: expected 'CKPT'", 0);
  const auto count = r.get<std::uint32_t>();
  std::vector<nn::NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    if (len > r.remaining()) throw ParseError("truncated", r.offset());
    auto name = r.get_string(len);
    const auto rank_at = r.offset();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw ParseError("implausible tensor rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(r.get<std::uint32_t>());
      numel *= shape.back();
    }
    if (numel > r.remaining() / sizeof(double)) throw ParseError("truncated", r.offset());
    std::vector<double> data(numel);
    r.get_array(std::span<double>(data));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data), true)});
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last entry", r.offset());
  return out;
}

inline void save_checkpoint(const nn::ParamSet& params, const std::filesystem::path& path) {
  io::write_file(path, checkpoint_bytes(params.entries()));
}

/// Loads values into an existing parameter set; names and shapes must match
/// exactly.
inline void load_checkpoint(nn::ParamSet& params, const std::filesystem::path& path) {
  const auto loaded = parse_checkpoint(io::read_file(path));
  const auto& entries = params.entries();
  if (loaded.size() != entries.size())
    throw StructuralError("checkpoint holds " + std::to_string(loaded.size()) + " tensors, model expects " +
                          std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& want = entries[i];
    const auto& got = loaded[i];
    if (got.name != want.name || got.tensor.shape() != want.tensor.shape())
      throw StructuralError("checkpoint entry " + got.name + " " + shape_str(got.tensor.shape()) +
                            " does not match model entry " + want.name + " " + shape_str(want.tensor.shape()));
    auto dst = want.tensor;
    std::copy(got.tensor.values().begin(), got.tensor.values().end(), dst.mutable_values().begin());
  }
}

}  // namespace cocap::ad
