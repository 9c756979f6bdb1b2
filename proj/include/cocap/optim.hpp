#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cocap/random.hpp"
#include "cocap/tensor.hpp"

namespace cocap::ad {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first;   // per parameter
  std::vector<std::vector<double>> second;  // per parameter
};

/// One bias-corrected Adam update using the gradients accumulated on
/// `params`. Moment buffers are created lazily on the first call.
inline void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.numel(), 0.0);
      state.second.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first.size() != params.size()) throw ShapeError("adam_step: optimizer state tracks a different parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) continue;
    auto& m = state.first[i];
    auto& v = state.second[i];
    if (m.size() != p.numel()) throw ShapeError("adam_step: moment buffer shape mismatch");
    const auto g = p.grad();
    auto w = p.mutable_values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

/// Linear warmup from lr/warmup to lr over `warmup_steps`, constant after.
inline double warmup_lr(double base_lr, std::uint64_t step, std::uint64_t warmup_steps) {
  if (warmup_steps == 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

struct FiniteDiffOptions {
  double step = 1e-5;
  /// 0 checks every coordinate; otherwise this many coordinates per tensor,
  /// drawn without replacement from `seed`.
  std::size_t coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
};

/// Compares tape gradients of the scalar `loss_fn()` against central
/// differences; error per coordinate is |a - n| / max(1, |a|, |n|).
/// `loss_fn` must build its graph only from `params` and constants.
inline FiniteDiffReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                                          const FiniteDiffOptions& opts = {}) {
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    const auto loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  FiniteDiffReport report;
  Rng rng(opts.seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_values();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opts.coords_per_tensor != 0 && opts.coords_per_tensor < coords.size()) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(opts.coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const double saved = values[i];
      values[i] = saved + opts.step;
      const double up = loss_fn().item();
      values[i] = saved - opts.step;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coords_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_tensor = t;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace cocap::ad
