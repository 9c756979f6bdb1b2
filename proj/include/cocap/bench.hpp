#pragma once

// Latency harness: dense decode + per-frame I-frame encoding versus the
// compressed-domain pipeline, at batch size 1.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "cocap/codec.hpp"
#include "cocap/error.hpp"
#include "cocap/kv.hpp"
#include "cocap/model.hpp"
#include "cocap/sampler.hpp"

namespace cocap::bench {

struct BenchOptions {
  std::size_t repetitions = 11;
  std::size_t warmup = 1;
  std::uint64_t seed = 1;
};

struct BenchReport {
  double decode_path_ms = 0.0;
  double compressed_path_ms = 0.0;  // I + MV + Res
  double ratio = 0.0;
  double i_ms = 0.0;
  double i_mv_ms = 0.0;
  double i_mv_res_ms = 0.0;
  std::size_t repetitions = 0;
  std::size_t samples = 0;
  std::uint64_t compressed_predict_calls = 0;
  std::uint64_t decode_predict_calls = 0;
  bool monotone = false;
  model::ModelConfig config;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of nothing");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Dense baseline for one video: full reconstruction, then the I-frame
/// encoder over the N * (1 + M) frames the compressed path would sample.
inline void decode_path(const codec::CompressedVideo& cv, const model::Captioner& iframe_model) {
  const auto& cfg = iframe_model.config();
  const auto raw = codec::decode_video(cv);
  for (auto g : sampler::sample_gops(cv.gops.size(), cfg.n_gops)) {
    const auto& gop = cv.gops[g];
    iframe_model.encode_iframe(raw.frames[gop.display_start]);
    const auto sel = sampler::sample_bp_frames(gop, cfg.m_frames);
    for (std::size_t k = 0; k < cfg.m_frames; ++k)
      if (sel.valid[k]) iframe_model.encode_iframe(raw.frames[gop.coded[sel.indices[k]].display_index]);
  }
}

/// Compressed pipeline: read without reconstruction, sample, encode, and
/// decode a full-length caption.
inline void compressed_path(const codec::CompressedVideo& cv, const model::Captioner& m) {
  const auto in = sampler::assemble_inputs(cv, model::sampler_config(m.config()));
  m.generate(in, m.config().max_caption_len, false);
}

inline BenchReport run_bench(const std::vector<codec::CompressedVideo>& videos, const model::ModelConfig& cfg,
                             const BenchOptions& opt) {
  if (videos.empty()) throw ConfigError("bench: empty dataset");
  if (opt.repetitions < 5) throw ConfigError("bench: repetitions must be >= 5");
  auto full = cfg;
  full.use_motion = full.use_residual = true;
  auto i_only = full;
  i_only.use_motion = i_only.use_residual = false;
  auto i_mv = full;
  i_mv.use_residual = false;
  const model::Captioner m_full(full, opt.seed), m_i(i_only, opt.seed), m_mv(i_mv, opt.seed);

  using clock = std::chrono::steady_clock;
  auto time_ms = [&](auto&& fn) {
    const auto t0 = clock::now();
    for (const auto& cv : videos) fn(cv);
    const auto t1 = clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(videos.size());
  };

  BenchReport rep;
  rep.config = full;
  rep.repetitions = opt.repetitions;
  rep.samples = videos.size();
  std::vector<double> dec, ci, cmv, cres;
  for (std::size_t r = 0; r < opt.warmup + opt.repetitions; ++r) {
    const auto p0 = codec::predict_frame_calls();
    const double d = time_ms([&](const auto& cv) { decode_path(cv, m_i); });
    const auto p1 = codec::predict_frame_calls();
    const double a = time_ms([&](const auto& cv) { compressed_path(cv, m_i); });
    const double b = time_ms([&](const auto& cv) { compressed_path(cv, m_mv); });
    const double c = time_ms([&](const auto& cv) { compressed_path(cv, m_full); });
    const auto p2 = codec::predict_frame_calls();
    if (r < opt.warmup) continue;
    rep.decode_predict_calls += p1 - p0;
    rep.compressed_predict_calls += p2 - p1;
    dec.push_back(d);
    ci.push_back(a);
    cmv.push_back(b);
    cres.push_back(c);
  }
  rep.decode_path_ms = median(dec);
  rep.i_ms = median(ci);
  rep.i_mv_ms = median(cmv);
  rep.i_mv_res_ms = median(cres);
  rep.compressed_path_ms = rep.i_mv_res_ms;
  rep.ratio = rep.decode_path_ms / rep.compressed_path_ms;
  rep.monotone = rep.i_ms <= rep.i_mv_ms && rep.i_mv_ms <= rep.i_mv_res_ms;
  return rep;
}

inline std::string report_text(const BenchReport& r) {
  kv::Map m;
  m["decode_path_ms"] = kv::number(r.decode_path_ms);
  m["compressed_path_ms"] = kv::number(r.compressed_path_ms);
  m["ratio"] = kv::number(r.ratio);
  m["i_ms"] = kv::number(r.i_ms);
  m["i_mv_ms"] = kv::number(r.i_mv_ms);
  m["i_mv_res_ms"] = kv::number(r.i_mv_res_ms);
  m["monotone"] = r.monotone ? "true" : "false";
  m["repetitions"] = std::to_string(r.repetitions);
  m["samples"] = std::to_string(r.samples);
  m["compressed_predict_calls"] = std::to_string(r.compressed_predict_calls);
  m["decode_predict_calls"] = std::to_string(r.decode_predict_calls);
  for (const auto& [k, v] : kv::parse(model::config_text(r.config))) m["config." + k] = v;
  std::string out;
  for (const auto& [k, v] : m) out += k + "=" + v + "\n";
  return out;
}

}  // namespace cocap::bench
