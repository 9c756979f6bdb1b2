#pragma once

// Dataset loading, teacher-forced training with Adam, and greedy captioning.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cocap/checkpoint.hpp"
#include "cocap/error.hpp"
#include "cocap/kv.hpp"
#include "cocap/mgv.hpp"
#include "cocap/model.hpp"
#include "cocap/optim.hpp"
#include "cocap/parallel.hpp"
#include "cocap/random.hpp"
#include "cocap/sampler.hpp"
#include "cocap/synthgen.hpp"
#include "cocap/tokenizer.hpp"

namespace cocap::train {

struct Example {
  std::string id;
  std::string caption;
  sampler::SampledInput input;
  std::vector<int> target;  // padded to max_caption_len
};

/// Reads every video in a manifest and assembles model inputs. Captions use
/// `vocab`; pass an empty target length to skip tokenization.
inline std::vector<Example> load_examples(const std::filesystem::path& root, const std::string& manifest,
                                          const model::ModelConfig& cfg, const text::Vocabulary& vocab,
                                          std::size_t jobs = 1) {
  const auto rows = synth::load_manifest(root / manifest);
  std::vector<Example> out(rows.size());
  const auto scfg = model::sampler_config(cfg);
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const auto cv = codec::load_mgv(root / rows[i].path);
    out[i].id = rows[i].id;
    out[i].caption = rows[i].caption;
    out[i].input = sampler::assemble_inputs(cv, scfg);
    out[i].target = text::encode_text(rows[i].caption, vocab, cfg.max_caption_len);
  });
  return out;
}

inline text::Vocabulary vocab_from_manifest(const std::filesystem::path& path) {
  std::vector<std::string> captions;
  for (const auto& r : synth::load_manifest(path)) captions.push_back(r.caption);
  return text::build_vocab(captions, 1);
}

struct TrainOptions {
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct StepRecord {
  std::size_t step = 0;   // 1-based
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_loss;  // mean step loss per (possibly partial) epoch

  double initial_loss() const { return steps.empty() ? 0.0 : steps.front().loss; }
  double final_epoch_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

/// One optimizer step over `batch`: summed per-token loss divided by the
/// batch's token count, then Adam. Returns the pre-update loss.
inline double train_step(model::Captioner& m, const std::vector<const Example*>& batch, ad::AdamState& opt,
                         std::vector<ad::Tensor>& params) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  double norm = 0.0;
  for (const auto* ex : batch) norm += static_cast<double>(model::Captioner::counted_steps(ex->target));
  m.params().zero_grad();
  double loss = 0.0;
  for (const auto* ex : batch) {
    ad::Tape tape;
    const auto l = m.loss(ex->input, ex->target, norm);
    loss += l.item();
    tape.backward(l);
  }
  ad::adam_step(params, opt);
  return loss;
}

using StepCallback = std::function<void(const StepRecord&)>;

inline TrainResult fit(model::Captioner& m, const std::vector<Example>& data, const TrainOptions& opt,
                       const StepCallback& on_step = {}) {
  if (data.empty()) throw ConfigError("fit: empty training set");
  if (opt.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  ad::AdamState state;
  state.lr = opt.lr;
  auto params = m.params().tensors();
  const auto warmup = static_cast<std::uint64_t>(opt.warmup_fraction * static_cast<double>(opt.steps));
  Rng rng(mix_seed(opt.seed ^ 0x7261696eULL));
  std::vector<std::size_t> order(data.size());
  TrainResult result;
  std::size_t cursor = data.size();
  std::size_t epoch = 0;
  double epoch_sum = 0.0;
  std::size_t epoch_steps = 0;
  for (std::size_t step = 0; step < opt.steps; ++step) {
    if (cursor >= data.size()) {
      if (epoch_steps > 0) result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
      epoch_sum = 0.0;
      epoch_steps = 0;
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order.begin(), order.end());
      cursor = 0;
      ++epoch;
    }
    std::vector<const Example*> batch;
    while (batch.size() < opt.batch_size && cursor < data.size()) batch.push_back(&data[order[cursor++]]);
    state.lr = ad::warmup_lr(opt.lr, step, warmup);
    StepRecord rec{step + 1, epoch, state.lr, train_step(m, batch, state, params)};
    epoch_sum += rec.loss;
    ++epoch_steps;
    result.steps.push_back(rec);
    if (on_step) on_step(rec);
  }
  if (epoch_steps > 0) result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
  return result;
}

inline std::string loss_csv(const TrainResult& r) {
  std::string out = "step,epoch,lr,loss\n";
  for (const auto& s : r.steps)
    out += std::to_string(s.step) + "," + std::to_string(s.epoch) + "," + kv::number(s.lr) + "," +
           kv::number(s.loss) + "\n";
  return out;
}

inline std::string caption_for(const model::Captioner& m, const sampler::SampledInput& in,
                               const text::Vocabulary& vocab) {
  return text::decode_ids(m.generate(in, m.config().max_caption_len), vocab);
}

/// Captions for every example, in order; `jobs` threads share the frozen model.
inline std::vector<std::string> caption_all(const model::Captioner& m, const std::vector<Example>& data,
                                            const text::Vocabulary& vocab, std::size_t jobs = 1) {
  std::vector<std::string> out(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) { out[i] = caption_for(m, data[i].input, vocab); });
  return out;
}

/// Last word of a template caption ("left", ..., "still"); empty if none.
inline std::string motion_word(const std::string& caption) {
  const auto words = text::normalize(caption);
  return words.empty() ? std::string() : words.back();
}

struct CaptionScore {
  double exact_match = 0.0;
  double motion_accuracy = 0.0;
};

inline CaptionScore score_captions(const std::vector<Example>& data, const std::vector<std::string>& captions) {
  if (data.empty() || data.size() != captions.size()) throw ConfigError("score_captions: size mismatch");
  std::size_t exact = 0, motion = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ref = text::join(text::normalize(data[i].caption));
    exact += captions[i] == ref ? 1 : 0;
    motion += motion_word(captions[i]) == motion_word(ref) ? 1 : 0;
  }
  const auto n = static_cast<double>(data.size());
  return {static_cast<double>(exact) / n, static_cast<double>(motion) / n};
}

/// A trained model directory: model.cfg, vocab.txt, params.ckpt.
inline void save_model_dir(const model::Captioner& m, const text::Vocabulary& vocab,
                           const std::filesystem::path& dir) {
  model::save_config(m.config(), dir / "model.cfg");
  text::save_vocab(vocab, dir / "vocab.txt");
  ad::save_checkpoint(m.params(), dir / "params.ckpt");
}

struct LoadedModel {
  model::Captioner model;
  text::Vocabulary vocab;
};

inline LoadedModel load_model_dir(const std::filesystem::path& dir) {
  const auto cfg = model::load_config(dir / "model.cfg");
  LoadedModel lm{model::Captioner(cfg, 0), text::load_vocab(dir / "vocab.txt")};
  if (lm.vocab.size() != cfg.vocab_size)
    throw StructuralError("vocab.txt holds " + std::to_string(lm.vocab.size()) + " ids, model.cfg says " +
                          std::to_string(cfg.vocab_size));
  ad::load_checkpoint(lm.model.params(), dir / "params.ckpt");
  return lm;
}

}  // namespace cocap::train
