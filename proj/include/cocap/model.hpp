#pragma once

// Compressed video captioner: I-frame, motion and residual ViT encoders, the
// action encoder fusing B/P tokens with I-frame context, and a prefix-masked
// decoder over [visual tokens, caption tokens].

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cocap/codec.hpp"
#include "cocap/error.hpp"
#include "cocap/file_io.hpp"
#include "cocap/kv.hpp"
#include "cocap/nn.hpp"
#include "cocap/random.hpp"
#include "cocap/sampler.hpp"
#include "cocap/tensor.hpp"
#include "cocap/tokenizer.hpp"

namespace cocap::model {

using ad::Tensor;

struct ModelConfig {
  // input geometry
  std::size_t frame_height = 64;
  std::size_t frame_width = 64;
  std::size_t channels = 3;
  std::size_t motion_size = 16;
  std::size_t n_gops = 2;
  std::size_t m_frames = 7;
  // transformer shape
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
  std::size_t iframe_layers = 2;
  std::size_t motion_layers = 1;
  std::size_t residual_layers = 1;
  std::size_t action_layers = 1;
  std::size_t decoder_layers = 2;
  std::size_t iframe_patch = 8;
  std::size_t motion_patch = 4;
  std::size_t residual_patch = 16;
  std::size_t vocab_size = 19;
  std::size_t max_caption_len = 10;
  double label_smoothing = 0.1;
  // ablation switches
  bool use_motion = true;
  bool use_residual = true;
  bool use_action_encoder = true;

  bool uses_bp() const { return use_motion || use_residual; }

  std::size_t iframe_patches() const {
    return (frame_height / iframe_patch) * (frame_width / iframe_patch);
  }
  std::size_t motion_patches() const { return (motion_size / motion_patch) * (motion_size / motion_patch); }
  std::size_t residual_patches() const {
    return (frame_height / residual_patch) * (frame_width / residual_patch);
  }
  /// Visual tokens fed to the decoder: 2N, or N when no B/P input is used.
  std::size_t visual_tokens() const { return uses_bp() ? 2 * n_gops : n_gops; }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError(what);
    };
    need(dim >= 1 && heads >= 1 && dim % heads == 0,
         "dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
    need(mlp_ratio >= 1, "mlp_ratio must be >= 1");
    need(iframe_layers >= 1 && motion_layers >= 1 && residual_layers >= 1 && action_layers >= 1 &&
             decoder_layers >= 1,
         "layer counts must be >= 1");
    need(max_caption_len >= 3, "max_caption_len must be >= 3");
    need(vocab_size > static_cast<std::size_t>(text::kReserved), "vocab_size must exceed the reserved ids");
    need(n_gops >= 1 && m_frames >= 1, "n_gops and m_frames must be >= 1");
    need(channels >= 1 && frame_height >= 1 && frame_width >= 1, "empty frame geometry");
    need(iframe_patch >= 1 && frame_height % iframe_patch == 0 && frame_width % iframe_patch == 0,
         "frame size not divisible by iframe_patch");
    need(residual_patch >= 1 && frame_height % residual_patch == 0 && frame_width % residual_patch == 0,
         "frame size not divisible by residual_patch");
    need(motion_patch >= 1 && motion_size >= 1 && motion_size % motion_patch == 0,
         "motion_size not divisible by motion_patch");
    need(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing must be in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline ModelConfig tiny_preset() { return {}; }

inline ModelConfig large_preset() {
  ModelConfig c;
  c.frame_height = 224;
  c.frame_width = 224;
  c.motion_size = 56;
  c.n_gops = 8;
  c.m_frames = 59;
  c.dim = 768;
  c.heads = 12;
  c.mlp_ratio = 4;
  c.iframe_layers = 12;
  c.motion_layers = 2;
  c.residual_layers = 2;
  c.action_layers = 2;
  c.decoder_layers = 2;
  c.iframe_patch = 16;
  c.motion_patch = 4;
  c.residual_patch = 16;
  c.max_caption_len = 22;
  return c;
}

inline ModelConfig preset(std::string_view name) {
  if (name == "tiny") return tiny_preset();
  if (name == "large") return large_preset();
  throw ConfigError("unknown preset " + std::string(name));
}

inline std::string config_text(const ModelConfig& c) {
  kv::Map m;
  auto n = [&](const char* k, std::size_t v) { m[k] = std::to_string(v); };
  n("frame_height", c.frame_height);
  n("frame_width", c.frame_width);
  n("channels", c.channels);
  n("motion_size", c.motion_size);
  n("n_gops", c.n_gops);
  n("m_frames", c.m_frames);
  n("dim", c.dim);
  n("heads", c.heads);
  n("mlp_ratio", c.mlp_ratio);
  n("iframe_layers", c.iframe_layers);
  n("motion_layers", c.motion_layers);
  n("residual_layers", c.residual_layers);
  n("action_layers", c.action_layers);
  n("decoder_layers", c.decoder_layers);
  n("iframe_patch", c.iframe_patch);
  n("motion_patch", c.motion_patch);
  n("residual_patch", c.residual_patch);
  n("vocab_size", c.vocab_size);
  n("max_caption_len", c.max_caption_len);
  m["label_smoothing"] = kv::number(c.label_smoothing);
  m["use_motion"] = c.use_motion ? "true" : "false";
  m["use_residual"] = c.use_residual ? "true" : "false";
  m["use_action_encoder"] = c.use_action_encoder ? "true" : "false";
  return kv::format(m);
}

inline ModelConfig parse_config(std::string_view text) {
  const auto m = kv::parse(text);
  static const char* known[] = {"frame_height",   "frame_width",     "channels",       "motion_size",
                                "n_gops",         "m_frames",        "dim",            "heads",
                                "mlp_ratio",      "iframe_layers",   "motion_layers",  "residual_layers",
                                "action_layers",  "decoder_layers",  "iframe_patch",   "motion_patch",
                                "residual_patch", "vocab_size",      "max_caption_len", "label_smoothing",
                                "use_motion",     "use_residual",    "use_action_encoder"};
  for (const auto& [k, v] : m) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError("unknown config key " + k);
  }
  ModelConfig c;
  auto n = [&](const char* k, std::size_t& dst) { dst = kv::get_number<std::size_t>(m, k, dst); };
  n("frame_height", c.frame_height);
  n("frame_width", c.frame_width);
  n("channels", c.channels);
  n("motion_size", c.motion_size);
  n("n_gops", c.n_gops);
  n("m_frames", c.m_frames);
  n("dim", c.dim);
  n("heads", c.heads);
  n("mlp_ratio", c.mlp_ratio);
  n("iframe_layers", c.iframe_layers);
  n("motion_layers", c.motion_layers);
  n("residual_layers", c.residual_layers);
  n("action_layers", c.action_layers);
  n("decoder_layers", c.decoder_layers);
  n("iframe_patch", c.iframe_patch);
  n("motion_patch", c.motion_patch);
  n("residual_patch", c.residual_patch);
  n("vocab_size", c.vocab_size);
  n("max_caption_len", c.max_caption_len);
  c.label_smoothing = kv::get_number<double>(m, "label_smoothing", c.label_smoothing);
  c.use_motion = kv::get_bool(m, "use_motion", c.use_motion);
  c.use_residual = kv::get_bool(m, "use_residual", c.use_residual);
  c.use_action_encoder = kv::get_bool(m, "use_action_encoder", c.use_action_encoder);
  c.validate();
  return c;
}

inline void save_config(const ModelConfig& c, const std::filesystem::path& path) {
  io::write_text(path, config_text(c));
}

inline ModelConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_text(path)); }

/// Non-overlapping p x p patches of a channel-major plane, each flattened as
/// (channel, row, col) and multiplied by `scale`: [patches, C*p*p].
template <class T>
Tensor patchify(const T* data, std::size_t c, std::size_t h, std::size_t w, std::size_t p, double scale) {
  if (p == 0 || h % p != 0 || w % p != 0)
    throw ConfigError("patchify: " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
                      std::to_string(p));
  const std::size_t gh = h / p, gw = w / p, width = c * p * p;
  std::vector<double> out(gh * gw * width);
  std::size_t at = 0;
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            out[at++] = scale * static_cast<double>(data[(ch * h + py * p + y) * w + px * p + x]);
  return Tensor({gh * gw, width}, std::move(out));
}

inline std::vector<std::size_t> iota(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  v.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

struct ViTEncoder {
  nn::Linear proj;
  Tensor cls;  // [1, dim], I-frame encoder only
  Tensor pos;  // [tokens, dim]
  std::vector<nn::SelfBlock> blocks;
  nn::LayerNorm ln;

  static ViTEncoder make(nn::ParamSet& ps, const std::string& name, std::size_t patch_width, std::size_t patches,
                         bool with_cls, std::size_t layers, const ModelConfig& cfg, Rng& rng) {
    ViTEncoder e;
    e.proj = nn::Linear::make(ps, name + ".patch_proj", patch_width, cfg.dim, rng);
    if (with_cls) e.cls = ps.add_normal(name + ".cls", {1, cfg.dim}, 0.02, rng);
    e.pos = ps.add_normal(name + ".pos", {patches + (with_cls ? 1 : 0), cfg.dim}, 0.02, rng);
    for (std::size_t l = 0; l < layers; ++l)
      e.blocks.push_back(
          nn::SelfBlock::make(ps, name + ".block" + std::to_string(l), cfg.dim, cfg.dim * cfg.mlp_ratio, rng));
    e.ln = nn::LayerNorm::make(ps, name + ".ln_final", cfg.dim);
    return e;
  }

  Tensor operator()(const Tensor& patches, std::size_t heads) const {
    auto x = proj(patches);
    if (cls.defined()) x = ad::concat({cls, x}, 0);
    x = ad::add(x, pos);
    for (const auto& b : blocks) x = b(x, heads);
    return ln(x);
  }
};

struct ActionRound {
  nn::SelfBlock self;
  nn::CrossBlock cross;
};

struct CaptionerParams {
  nn::ParamSet set;
  ViTEncoder iframe;
  ViTEncoder motion;
  ViTEncoder residual;
  // action encoder
  Tensor emb_p;  // [M, dim]
  Tensor emb_t;  // [3, dim]: P, B, PAD
  std::vector<ActionRound> action;
  nn::LayerNorm action_ln;
  // decoder
  Tensor word_emb;   // [vocab, dim]
  Tensor emb_p2;     // [2N + max_len, dim]
  Tensor emb_t2;     // [2, dim]: visual, text
  std::vector<nn::SelfBlock> decoder;
  nn::LayerNorm decoder_ln;
  nn::Linear head;
};

struct IFrameFeatures {
  Tensor tokens;   // [1 + patches, dim], CLS first
  Tensor summary;  // [1, dim]
};

struct GopFeatures {
  Tensor ctx_tokens;   // [1 + patches, dim]
  Tensor ctx_summary;  // [1, dim]
  Tensor bp_tokens;    // [M, dim]; undefined when B/P input is off
  Tensor act_summary;  // [1, dim]; undefined when B/P input is off
};

class Captioner {
 public:
  Captioner(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    auto& ps = p_.set;
    const auto& c = cfg_;
    const std::size_t hidden = c.dim * c.mlp_ratio;
    p_.iframe = ViTEncoder::make(ps, "iframe", c.channels * c.iframe_patch * c.iframe_patch, c.iframe_patches(),
                                 true, c.iframe_layers, c, rng);
    if (c.use_motion)
      p_.motion = ViTEncoder::make(ps, "motion", 4 * c.motion_patch * c.motion_patch, c.motion_patches(), false,
                                   c.motion_layers, c, rng);
    if (c.use_residual)
      p_.residual = ViTEncoder::make(ps, "residual", c.channels * c.residual_patch * c.residual_patch,
                                     c.residual_patches(), false, c.residual_layers, c, rng);
    if (c.uses_bp() && c.use_action_encoder) {
      p_.emb_p = ps.add_normal("action.emb_p", {c.m_frames, c.dim}, 0.02, rng);
      p_.emb_t = ps.add_normal("action.emb_t", {3, c.dim}, 0.02, rng);
      for (std::size_t l = 0; l < c.action_layers; ++l) {
        const auto name = "action.round" + std::to_string(l);
        p_.action.push_back({nn::SelfBlock::make(ps, name + ".self", c.dim, hidden, rng),
                             nn::CrossBlock::make(ps, name + ".cross", c.dim, hidden, rng)});
      }
      p_.action_ln = nn::LayerNorm::make(ps, "action.ln_final", c.dim);
    }
    p_.word_emb = ps.add_normal("decoder.word_emb", {c.vocab_size, c.dim}, 0.02, rng);
    p_.emb_p2 = ps.add_normal("decoder.emb_p", {2 * c.n_gops + c.max_caption_len, c.dim}, 0.02, rng);
    p_.emb_t2 = ps.add_normal("decoder.emb_t", {2, c.dim}, 0.02, rng);
    for (std::size_t l = 0; l < c.decoder_layers; ++l)
      p_.decoder.push_back(nn::SelfBlock::make(ps, "decoder.block" + std::to_string(l), c.dim, hidden, rng));
    p_.decoder_ln = nn::LayerNorm::make(ps, "decoder.ln_final", c.dim);
    p_.head = nn::Linear::make(ps, "decoder.head", c.dim, c.vocab_size, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return p_.set; }
  const nn::ParamSet& params() const { return p_.set; }

  IFrameFeatures encode_iframe(const codec::PixelPlane& frame) const {
    check_plane(frame.channels, frame.height, frame.width, "I-frame");
    const auto patches = patchify(frame.data.data(), cfg_.channels, cfg_.frame_height, cfg_.frame_width,
                                  cfg_.iframe_patch, 1.0 / 255.0);
    auto tokens = p_.iframe(patches, cfg_.heads);
    auto summary = ad::embedding_lookup(tokens, {0});
    return {tokens, summary};
  }

  /// Mean-pooled motion encoder output, [1, dim].
  Tensor encode_motion(const sampler::MotionTensor& mv) const {
    if (!cfg_.use_motion) throw ConfigError("motion encoder disabled");
    if (static_cast<std::size_t>(mv.size) != cfg_.motion_size || mv.data.size() != 4 * cfg_.motion_size * cfg_.motion_size)
      throw ConfigError("motion grid " + std::to_string(mv.size) + " does not match motion_size " +
                        std::to_string(cfg_.motion_size));
    const auto patches = patchify(mv.data.data(), 4, cfg_.motion_size, cfg_.motion_size, cfg_.motion_patch, 1.0);
    return ad::mean(p_.motion(patches, cfg_.heads), 0);
  }

  /// Mean-pooled residual encoder output, [1, dim].
  Tensor encode_residual(const codec::ResidualPlane& res) const {
    if (!cfg_.use_residual) throw ConfigError("residual encoder disabled");
    check_plane(res.channels, res.height, res.width, "residual");
    const auto patches = patchify(res.data.data(), cfg_.channels, cfg_.frame_height, cfg_.frame_width,
                                  cfg_.residual_patch, 1.0 / 255.0);
    return ad::mean(p_.residual(patches, cfg_.heads), 0);
  }

  /// F_BP for one coded frame: motion and residual features added, [1, dim].
  Tensor encode_bp(const sampler::MotionTensor& mv, const codec::ResidualPlane& res) const {
    if (cfg_.use_motion && cfg_.use_residual) return ad::add(encode_motion(mv), encode_residual(res));
    if (cfg_.use_motion) return encode_motion(mv);
    if (cfg_.use_residual) return encode_residual(res);
    throw ConfigError("encode_bp with both motion and residual disabled");
  }

  /// F_act from M frame tokens. PAD keys are masked and PAD rows are left out
  /// of the final mean. Without the action encoder this is the masked mean.
  Tensor action_encode(const Tensor& bp_tokens, std::span<const sampler::SlotType> types,
                       const std::vector<bool>& valid, const Tensor& ctx_tokens) const {
    const std::size_t m = cfg_.m_frames;
    if (bp_tokens.rank() != 2 || bp_tokens.dim(0) != m || bp_tokens.dim(1) != cfg_.dim || types.size() != m ||
        valid.size() != m)
      throw ShapeError("action_encode: inputs do not match m_frames " + std::to_string(m));
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < m; ++i)
      if (valid[i]) keep.push_back(i);
    if (keep.empty()) throw StructuralError("action_encode: every frame slot is PAD");
    if (!cfg_.use_action_encoder) return ad::mean(ad::embedding_lookup(bp_tokens, keep), 0);

    std::vector<std::size_t> type_ids;
    for (auto t : types) type_ids.push_back(static_cast<std::size_t>(t));
    const auto pos_ids = iota(0, m);
    auto x = ad::add(bp_tokens, ad::embedding_lookup(p_.emb_p, pos_ids));
    x = ad::add(x, ad::embedding_lookup(p_.emb_t, type_ids));
    nn::AttentionMask mask(m, m);
    for (std::size_t q = 0; q < m; ++q)
      for (std::size_t k = 0; k < m; ++k)
        if (!valid[k]) mask.block(q, k);
    for (const auto& round : p_.action) {
      x = round.self(x, cfg_.heads, &mask);
      x = round.cross(x, ctx_tokens, cfg_.heads);
    }
    x = p_.action_ln(x);
    return ad::mean(ad::embedding_lookup(x, keep), 0);
  }

  GopFeatures encode_group(const sampler::SampledGroup& g) const {
    GopFeatures f;
    auto ctx = encode_iframe(g.iframe);
    f.ctx_tokens = ctx.tokens;
    f.ctx_summary = ctx.summary;
    if (!cfg_.uses_bp()) return f;
    const std::size_t m = cfg_.m_frames;
    if (g.motions.size() != m || g.residuals.size() != m || g.frame_types.size() != m || g.valid.size() != m)
      throw ConfigError("sampled group has " + std::to_string(g.motions.size()) + " slots, model expects " +
                        std::to_string(m));
    const Tensor zero({1, cfg_.dim}, 0.0);
    std::vector<Tensor> rows;
    rows.reserve(m);
    for (std::size_t i = 0; i < m; ++i)
      rows.push_back(g.valid[i] ? encode_bp(g.motions[i], g.residuals[i]) : zero);
    f.bp_tokens = m == 1 ? rows[0] : ad::concat(rows, 0);
    f.act_summary = action_encode(f.bp_tokens, g.frame_types, g.valid, f.ctx_tokens);
    return f;
  }

  /// V = [ctx_1, act_1, ..., ctx_N, act_N], or the ctx tokens alone when B/P
  /// input is disabled.
  Tensor build_visual(const std::vector<GopFeatures>& feats) const {
    if (feats.empty()) throw ConfigError("build_visual: no GOP features");
    std::vector<Tensor> rows;
    for (const auto& f : feats) {
      rows.push_back(f.ctx_summary);
      if (f.act_summary.defined()) rows.push_back(f.act_summary);
    }
    return rows.size() == 1 ? rows[0] : ad::concat(rows, 0);
  }

  Tensor visual(const sampler::SampledInput& in) const {
    if (in.groups.size() != cfg_.n_gops)
      throw ConfigError("input has " + std::to_string(in.groups.size()) + " GOP groups, model expects " +
                        std::to_string(cfg_.n_gops));
    std::vector<GopFeatures> feats;
    feats.reserve(in.groups.size());
    for (const auto& g : in.groups) feats.push_back(encode_group(g));
    return build_visual(feats);
  }

  /// Prefix mask over [visual, text]: visual rows see visual keys only, text
  /// row i sees all visual keys and text keys <= i.
  static nn::AttentionMask prefix_mask(std::size_t nv, std::size_t nt) {
    const std::size_t n = nv + nt;
    nn::AttentionMask mask(n, n);
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t k = nv; k < n; ++k)
        if (q < nv || k > q) mask.block(q, k);
    return mask;
  }

  /// Logits [ids.size(), vocab] for every text position.
  Tensor decoder_forward(const Tensor& v, std::span<const int> ids) const {
    if (ids.empty()) throw ConfigError("decoder_forward: empty token sequence");
    if (ids.size() > cfg_.max_caption_len)
      throw ConfigError("decoder_forward: " + std::to_string(ids.size()) + " tokens exceed max_caption_len " +
                        std::to_string(cfg_.max_caption_len));
    if (v.rank() != 2 || v.dim(1) != cfg_.dim || v.dim(0) > 2 * cfg_.n_gops)
      throw ShapeError("decoder_forward: visual tokens of shape " + ad::shape_str(v.shape()));
    std::vector<std::size_t> word_ids;
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
        throw StructuralError("decoder_forward: token id " + std::to_string(id) + " >= vocab " +
                              std::to_string(cfg_.vocab_size));
      word_ids.push_back(static_cast<std::size_t>(id));
    }
    const std::size_t nv = v.dim(0), nt = ids.size(), n = nv + nt;
    auto x = ad::concat({v, ad::embedding_lookup(p_.word_emb, word_ids)}, 0);
    x = ad::add(x, ad::embedding_lookup(p_.emb_p2, iota(0, n)));
    std::vector<std::size_t> modality(n, 1);
    for (std::size_t i = 0; i < nv; ++i) modality[i] = 0;
    x = ad::add(x, ad::embedding_lookup(p_.emb_t2, modality));
    const auto mask = prefix_mask(nv, nt);
    for (const auto& b : p_.decoder) x = b(x, cfg_.heads, &mask);
    x = p_.decoder_ln(x);
    return p_.head(ad::embedding_lookup(x, iota(nv, n)));
  }

  /// Number of loss terms a padded target contributes: tokens after CLS up to
  /// and including the last non-PAD id.
  static std::size_t counted_steps(std::span<const int> target) {
    std::size_t end = target.size();
    while (end > 0 && target[end - 1] == text::kPad) --end;
    return end > 1 ? end - 1 : 0;
  }

  /// Teacher-forced label-smoothed loss for one sample. `normalizer` 0 means
  /// the mean over the sample's own steps.
  Tensor loss(const sampler::SampledInput& in, std::span<const int> target, double normalizer = 0.0) const {
    if (target.size() != cfg_.max_caption_len)
      throw ConfigError("target has " + std::to_string(target.size()) + " ids, expected max_caption_len " +
                        std::to_string(cfg_.max_caption_len));
    if (target.empty() || target[0] != text::kCls) throw ConfigError("target must start with CLS");
    const std::size_t steps = counted_steps(target);
    if (steps == 0) throw StructuralError("target has no tokens after CLS");
    const auto v = visual(in);
    const auto logits = decoder_forward(v, target.subspan(0, steps));
    return ad::label_smoothed_cross_entropy(logits, target.subspan(1, steps), cfg_.label_smoothing, text::kPad,
                                            normalizer);
  }

  /// Greedy decoding from CLS. The result starts with CLS and ends with EOS
  /// unless max_len is reached first; argmax ties go to the lowest id.
  std::vector<int> generate(const sampler::SampledInput& in, std::size_t max_len, bool stop_at_eos = true) const {
    if (max_len > cfg_.max_caption_len)
      throw ConfigError("generate: max_len " + std::to_string(max_len) + " exceeds max_caption_len");
    const auto v = visual(in);
    return generate_from_visual(v, max_len, stop_at_eos);
  }

  std::vector<int> generate_from_visual(const Tensor& v, std::size_t max_len, bool stop_at_eos = true) const {
    std::vector<int> ids{text::kCls};
    while (ids.size() < max_len) {
      const auto logits = decoder_forward(v, ids);
      const auto row = logits.values().subspan((ids.size() - 1) * cfg_.vocab_size, cfg_.vocab_size);
      std::size_t best = 0;
      for (std::size_t k = 1; k < row.size(); ++k)
        if (row[k] > row[best]) best = k;
      ids.push_back(static_cast<int>(best));
      if (stop_at_eos && ids.back() == text::kEos) break;
    }
    return ids;
  }

 private:
  void check_plane(int c, int h, int w, const char* what) const {
    if (static_cast<std::size_t>(c) != cfg_.channels || static_cast<std::size_t>(h) != cfg_.frame_height ||
        static_cast<std::size_t>(w) != cfg_.frame_width)
      throw ConfigError(std::string(what) + " " + std::to_string(c) + "x" + std::to_string(h) + "x" +
                        std::to_string(w) + " does not match model " + std::to_string(cfg_.channels) + "x" +
                        std::to_string(cfg_.frame_height) + "x" + std::to_string(cfg_.frame_width));
  }

  ModelConfig cfg_;
  CaptionerParams p_;
};

/// Sampler settings that produce inputs shaped for `cfg`.
inline sampler::SamplerConfig sampler_config(const ModelConfig& cfg) {
  sampler::SamplerConfig s;
  s.n_gops = cfg.n_gops;
  s.m_frames = cfg.m_frames;
  s.motion_size = static_cast<int>(cfg.motion_size);
  return s;
}

}  // namespace cocap::model
