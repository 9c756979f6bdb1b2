#pragma once

// Transformer building blocks on top of the autodiff primitives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cocap/error.hpp"
#include "cocap/random.hpp"
#include "cocap/tensor.hpp"

namespace cocap::nn {

using ad::Shape;
using ad::Tensor;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered, named collection of learnable tensors.
class ParamSet {
 public:
  Tensor add(std::string name, Shape shape) {
    for (const auto& e : entries_)
      if (e.name == name) throw ConfigError("duplicate parameter name " + name);
    Tensor t(std::move(shape), 0.0, true);
    entries_.push_back({std::move(name), t});
    return t;
  }

  Tensor add_normal(std::string name, Shape shape, double stddev, Rng& rng) {
    auto t = add(std::move(name), std::move(shape));
    for (auto& v : t.mutable_values()) v = stddev * rng.normal();
    return t;
  }

  Tensor add_constant(std::string name, Shape shape, double value) {
    auto t = add(std::move(name), std::move(shape));
    for (auto& v : t.mutable_values()) v = value;
    return t;
  }

  const std::vector<NamedTensor>& entries() const { return entries_; }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
  }

  const Tensor* find(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.tensor;
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Copies values from `other`, matching by name and shape.
  void copy_values_from(const ParamSet& other) {
    if (other.entries_.size() != entries_.size()) throw ConfigError("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& dst = entries_[i];
      const auto& src = other.entries_[i];
      if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape())
        throw ConfigError("parameter mismatch at " + dst.name);
      std::copy(src.tensor.values().begin(), src.tensor.values().end(), dst.tensor.mutable_values().begin());
    }
  }

 private:
  std::vector<NamedTensor> entries_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear make(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    return {ps.add_normal(name + ".weight", {in, out}, stddev, rng), ps.add(name + ".bias", {out})};
  }

  Tensor operator()(const Tensor& x) const { return ad::add_bias(ad::matmul(x, weight), bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm make(ParamSet& ps, const std::string& name, std::size_t dim) {
    return {ps.add_constant(name + ".gamma", {dim}, 1.0), ps.add(name + ".beta", {dim})};
  }

  Tensor operator()(const Tensor& x) const { return ad::layer_norm(x, gamma, beta); }
};

/// Boolean attention mask; blocked(q, k) != 0 removes key k from query q.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> blocked;

  AttentionMask() = default;
  AttentionMask(std::size_t q, std::size_t k) : queries(q), keys(k), blocked(q * k, 0) {}

  void block(std::size_t q, std::size_t k) { blocked[q * keys + k] = 1; }
  bool is_blocked(std::size_t q, std::size_t k) const { return blocked[q * keys + k] != 0; }
};

struct AttentionParams {
  Linear q, k, v, o;

  static AttentionParams make(ParamSet& ps, const std::string& name, std::size_t dim, Rng& rng) {
    return {Linear::make(ps, name + ".q", dim, dim, rng), Linear::make(ps, name + ".k", dim, dim, rng),
            Linear::make(ps, name + ".v", dim, dim, rng), Linear::make(ps, name + ".o", dim, dim, rng)};
  }
};

/// Scaled dot-product attention over `heads` heads. Queries come from q_in,
/// keys and values from kv_in; passing the same tensor gives self-attention.
inline Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                                   std::size_t heads, const AttentionMask* mask = nullptr) {
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.dim(1) != kv_in.dim(1))
    throw ShapeError("multi_head_attention: incompatible inputs " + ad::shape_str(q_in.shape()) + " and " +
                     ad::shape_str(kv_in.shape()));
  const std::size_t dim = q_in.dim(1);
  if (heads == 0 || dim % heads != 0)
    throw ConfigError("multi_head_attention: dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  const std::size_t nq = q_in.dim(0), nk = kv_in.dim(0);
  if (mask != nullptr && (mask->queries != nq || mask->keys != nk))
    throw ShapeError("multi_head_attention: mask " + std::to_string(mask->queries) + "x" +
                     std::to_string(mask->keys) + " for " + std::to_string(nq) + " queries and " +
                     std::to_string(nk) + " keys");
  const std::size_t dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor q = p.q(q_in);
  const Tensor k = p.k(kv_in);
  const Tensor v = p.v(kv_in);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    const auto kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    const auto vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (mask != nullptr) scores = ad::masked_fill(scores, mask->blocked, -std::numeric_limits<double>::infinity());
    outs.push_back(ad::matmul(ad::softmax(scores, 1), vh));
  }
  const Tensor merged = heads == 1 ? outs[0] : ad::concat(outs, 1);
  return p.o(merged);
}

struct Mlp {
  Linear fc1, fc2;

  static Mlp make(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng) {
    return {Linear::make(ps, name + ".fc1", dim, hidden, rng), Linear::make(ps, name + ".fc2", hidden, dim, rng)};
  }

  Tensor operator()(const Tensor& x) const { return fc2(ad::gelu(fc1(x))); }
};

/// Pre-norm self-attention block: x + Attn(LN(x)), then x + MLP(LN(x)).
struct SelfBlock {
  LayerNorm ln1;
  AttentionParams attn;
  LayerNorm ln2;
  Mlp mlp;

  static SelfBlock make(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng) {
    return {LayerNorm::make(ps, name + ".ln1", dim), AttentionParams::make(ps, name + ".attn", dim, rng),
            LayerNorm::make(ps, name + ".ln2", dim), Mlp::make(ps, name + ".mlp", dim, hidden, rng)};
  }

  Tensor operator()(const Tensor& x, std::size_t heads, const AttentionMask* mask = nullptr) const {
    const auto h = ln1(x);
    auto y = ad::add(x, multi_head_attention(h, h, attn, heads, mask));
    return ad::add(y, mlp(ln2(y)));
  }
};

/// Pre-norm cross-attention block: queries from x, keys/values from context.
struct CrossBlock {
  LayerNorm ln_q;
  LayerNorm ln_kv;
  AttentionParams attn;
  LayerNorm ln2;
  Mlp mlp;

  static CrossBlock make(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng) {
    return {LayerNorm::make(ps, name + ".ln_q", dim), LayerNorm::make(ps, name + ".ln_kv", dim),
            AttentionParams::make(ps, name + ".attn", dim, rng), LayerNorm::make(ps, name + ".ln2", dim),
            Mlp::make(ps, name + ".mlp", dim, hidden, rng)};
  }

  Tensor operator()(const Tensor& x, const Tensor& context, std::size_t heads) const {
    auto y = ad::add(x, multi_head_attention(ln_q(x), ln_kv(context), attn, heads));
    return ad::add(y, mlp(ln2(y)));
  }
};

}  // namespace cocap::nn
