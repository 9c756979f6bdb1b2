// cocap: command-line front end for the codec, dataset, model and bench.
//
// exit codes: 1 usage, 2 I/O, 3 parse, 4 invariant violation

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cocap/bench.hpp"
#include "cocap/codec.hpp"
#include "cocap/metrics.hpp"
#include "cocap/mgv.hpp"
#include "cocap/model.hpp"
#include "cocap/synthgen.hpp"
#include "cocap/train.hpp"

namespace fs = std::filesystem;
using namespace cocap;

namespace {

std::string default_data_dir() {
  if (const char* env = std::getenv("COCAP_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

// Flags shared by commands that build a model.
struct ModelFlags {
  std::string preset = "tiny";
  std::optional<std::size_t> gops, frames_per_gop, dim, heads, mlp_ratio;
  std::optional<std::size_t> iframe_layers, motion_layers, residual_layers, action_layers, decoder_layers;
  std::optional<std::size_t> max_caption_len;
  std::optional<double> label_smoothing;
  bool no_motion = false, no_residual = false, no_action_encoder = false;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "tiny or large")->check(CLI::IsMember({"tiny", "large"}));
    app->add_option("--gops", gops, "GOPs sampled per video (N)");
    app->add_option("--frames-per-gop", frames_per_gop, "B/P frames sampled per GOP (M)");
    app->add_option("--dim", dim, "feature width");
    app->add_option("--heads", heads, "attention heads");
    app->add_option("--mlp-ratio", mlp_ratio, "MLP hidden width as a multiple of dim");
    app->add_option("--iframe-layers", iframe_layers);
    app->add_option("--motion-layers", motion_layers);
    app->add_option("--residual-layers", residual_layers);
    app->add_option("--action-layers", action_layers, "action encoder rounds (N_a)");
    app->add_option("--decoder-layers", decoder_layers, "decoder blocks (N_m)");
    app->add_option("--max-caption-len", max_caption_len);
    app->add_option("--label-smoothing", label_smoothing);
    app->add_flag("--no-motion", no_motion, "drop the motion-vector encoder");
    app->add_flag("--no-residual", no_residual, "drop the residual encoder");
    app->add_flag("--no-action-encoder", no_action_encoder, "replace the action encoder by a masked mean");
  }

  model::ModelConfig build(std::size_t vocab_size) const {
    auto c = model::preset(preset);
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(c.n_gops, gops);
    set(c.m_frames, frames_per_gop);
    set(c.dim, dim);
    set(c.heads, heads);
    set(c.mlp_ratio, mlp_ratio);
    set(c.iframe_layers, iframe_layers);
    set(c.motion_layers, motion_layers);
    set(c.residual_layers, residual_layers);
    set(c.action_layers, action_layers);
    set(c.decoder_layers, decoder_layers);
    set(c.max_caption_len, max_caption_len);
    set(c.label_smoothing, label_smoothing);
    c.use_motion = !no_motion;
    c.use_residual = !no_residual;
    c.use_action_encoder = !no_action_encoder;
    c.vocab_size = vocab_size;
    c.validate();
    return c;
  }
};

struct CodingFlags {
  std::uint32_t keyint = 8, block_size = 4, search_range = 4;

  void attach(CLI::App* app) {
    app->add_option("--keyint", keyint, "frames per GOP");
    app->add_option("--block-size", block_size, "motion block size in pixels");
    app->add_option("--search-range", search_range, "motion search range in pixels");
  }
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    io::write_text(path, text);
}

std::string inspect_text(const codec::CompressedVideo& cv) {
  const auto& h = cv.header;
  std::ostringstream os;
  os << "width=" << h.width << "\nheight=" << h.height << "\nframe_count=" << h.frame_count << "\nkeyint=" << h.keyint
     << "\nblock_size=" << h.block_size << "\nsearch_range=" << h.search_range << "\nchannels=" << h.channels
     << "\ngops=" << cv.gops.size() << "\n";
  std::size_t frames = 0, blocks = 0, nonzero = 0, modes[3] = {0, 0, 0};
  double sum_abs = 0.0;
  long long residual_abs = 0;
  for (std::size_t g = 0; g < cv.gops.size(); ++g) {
    os << "gop." << g << ".pattern=" << codec::gop_pattern(cv.gops[g]) << "\n";
    for (const auto& cf : cv.gops[g].coded) {
      ++frames;
      for (std::size_t i = 0; i < cf.motion.vectors.size(); ++i) {
        const auto& v = cf.motion.vectors[i];
        ++blocks;
        if (v.fwd_dx != 0 || v.fwd_dy != 0 || v.bwd_dx != 0 || v.bwd_dy != 0) ++nonzero;
        sum_abs += std::abs(v.fwd_dx) + std::abs(v.fwd_dy);
        ++modes[static_cast<int>(cf.motion.modes[i])];
      }
      for (auto r : cf.residual.data) residual_abs += std::abs(r);
    }
  }
  os << "coded_frames=" << frames << "\n";
  os << "mv.nonzero_fraction=" << kv::number(blocks ? static_cast<double>(nonzero) / blocks : 0.0) << "\n";
  os << "mv.mean_abs_fwd=" << kv::number(blocks ? sum_abs / static_cast<double>(blocks) : 0.0) << "\n";
  os << "modes.fwd=" << modes[0] << "\nmodes.bwd=" << modes[1] << "\nmodes.bi=" << modes[2] << "\n";
  os << "residual.abs_sum=" << residual_abs << "\n";
  return os.str();
}

std::string extract_text(const sampler::SampledInput& in) {
  std::ostringstream os;
  os << "groups=" << in.groups.size() << "\nitems=" << in.item_count() << "\n";
  for (std::size_t g = 0; g < in.groups.size(); ++g) {
    const auto& grp = in.groups[g];
    os << "group." << g << ".gop=" << grp.gop_index << "\n";
    long long isum = 0;
    for (auto v : grp.iframe.data) isum += v;
    os << "group." << g << ".iframe_sum=" << isum << "\n";
    std::string types;
    for (auto t : grp.frame_types) {
      if (!types.empty()) types += ' ';
      types += t == sampler::SlotType::P ? "P" : t == sampler::SlotType::B ? "B" : "PAD";
    }
    os << "group." << g << ".types=" << types << "\n";
    for (std::size_t k = 0; k < grp.motions.size(); ++k) {
      double msum = 0.0;
      for (double v : grp.motions[k].data) msum += std::abs(v);
      long long rsum = 0;
      for (auto v : grp.residuals[k].data) rsum += std::abs(v);
      os << "group." << g << ".slot." << k << "=valid:" << (grp.valid[k] ? 1 : 0) << " mv_abs:" << kv::number(msum)
         << " res_abs:" << rsum << "\n";
    }
  }
  return os.str();
}

int run(int argc, char** argv) {
  CLI::App app{"compressed-domain video captioning toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a captioned synthetic dataset");
  std::string synth_out = default_data_dir();
  synth::DatasetOptions synth_opt;
  std::size_t jobs = 1;
  std::uint32_t frames = 16, width = 64, height = 64;
  CodingFlags synth_coding;
  synth_cmd->add_option("--out", synth_out, "dataset root (default $COCAP_DATA_DIR or ./data)");
  synth_cmd->add_option("--count", synth_opt.count, "number of samples");
  synth_cmd->add_option("--seed", synth_opt.seed, "master seed");
  synth_cmd->add_option("--train-ratio", synth_opt.ratios[0]);
  synth_cmd->add_option("--val-ratio", synth_opt.ratios[1]);
  synth_cmd->add_option("--test-ratio", synth_opt.ratios[2]);
  synth_cmd->add_option("--frames", frames, "frames per clip");
  synth_cmd->add_option("--width", width);
  synth_cmd->add_option("--height", height);
  synth_cmd->add_option("--jobs", jobs, "parallel encoders");
  synth_coding.attach(synth_cmd);

  // encode / decode
  auto* enc_cmd = app.add_subcommand("encode", "encode a raw MGR1 video into an MGV bitstream");
  std::string in_path, out_path;
  CodingFlags enc_coding;
  enc_cmd->add_option("--input", in_path, "raw video")->required();
  enc_cmd->add_option("--output", out_path, "MGV output")->required();
  enc_cmd->add_option("--jobs", jobs);
  enc_coding.attach(enc_cmd);

  auto* dec_cmd = app.add_subcommand("decode", "reconstruct raw frames from an MGV bitstream");
  dec_cmd->add_option("--input", in_path)->required();
  dec_cmd->add_option("--output", out_path, "raw MGR1 output")->required();

  auto* insp_cmd = app.add_subcommand("inspect", "summarize GOPs, frame types and motion statistics");
  insp_cmd->add_option("--input", in_path)->required();
  insp_cmd->add_option("--output", out_path, "report file (default stdout)");

  auto* ext_cmd = app.add_subcommand("extract", "dump the sampled model input of one video");
  sampler::SamplerConfig ext_cfg;
  ext_cmd->add_option("--input", in_path)->required();
  ext_cmd->add_option("--output", out_path);
  ext_cmd->add_option("--gops", ext_cfg.n_gops);
  ext_cmd->add_option("--frames-per-gop", ext_cfg.m_frames);
  ext_cmd->add_option("--motion-size", ext_cfg.motion_size, "0 keeps the codec grid");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a captioner on a synthetic dataset");
  std::string data_dir = default_data_dir(), model_dir = "model";
  ModelFlags mflags;
  train::TrainOptions topt;
  std::uint64_t init_seed = 1;
  train_cmd->add_option("--data", data_dir, "dataset root (default $COCAP_DATA_DIR or ./data)");
  train_cmd->add_option("--out", model_dir, "model directory to write");
  train_cmd->add_option("--steps", topt.steps);
  train_cmd->add_option("--batch-size", topt.batch_size);
  train_cmd->add_option("--lr", topt.lr);
  train_cmd->add_option("--warmup-fraction", topt.warmup_fraction);
  train_cmd->add_option("--seed", init_seed, "seeds initialization and batch order");
  train_cmd->add_option("--jobs", jobs, "parallel dataset loading");
  mflags.attach(train_cmd);

  // caption / eval
  auto* cap_cmd = app.add_subcommand("caption", "caption videos with a trained model");
  std::string split = "test";
  cap_cmd->add_option("--model", model_dir)->required();
  cap_cmd->add_option("--input", in_path, "single MGV file");
  cap_cmd->add_option("--data", data_dir);
  cap_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  cap_cmd->add_option("--output", out_path);
  cap_cmd->add_option("--jobs", jobs);

  auto* eval_cmd = app.add_subcommand("eval", "score captions on a split: BLEU-4, CIDEr, exact match");
  std::string eval_out;
  eval_cmd->add_option("--model", model_dir)->required();
  eval_cmd->add_option("--data", data_dir);
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--out", eval_out, "directory for eval.txt and samples.tsv");
  eval_cmd->add_option("--jobs", jobs);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "time decode path against compressed path");
  ModelFlags bflags;
  bench::BenchOptions bopt;
  std::size_t bench_samples = 4;
  bench_cmd->add_option("--data", data_dir);
  bench_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  bench_cmd->add_option("--samples", bench_samples, "videos timed per repetition");
  bench_cmd->add_option("--repetitions", bopt.repetitions);
  bench_cmd->add_option("--seed", bopt.seed);
  bench_cmd->add_option("--output", out_path);
  bflags.attach(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*synth_cmd) {
    synth_opt.header.width = width;
    synth_opt.header.height = height;
    synth_opt.header.frame_count = frames;
    synth_opt.header.keyint = synth_coding.keyint;
    synth_opt.header.block_size = synth_coding.block_size;
    synth_opt.header.search_range = synth_coding.search_range;
    const auto entries = synth::generate_dataset(synth_opt, synth_out, jobs);
    std::size_t n[3] = {0, 0, 0};
    for (const auto& e : entries) ++n[static_cast<int>(e.split)];
    std::cout << "samples=" << entries.size() << "\ntrain=" << n[0] << "\nval=" << n[1] << "\ntest=" << n[2]
              << "\nroot=" << synth_out << "\n";
  } else if (*enc_cmd) {
    codec::VideoHeader coding;
    coding.keyint = enc_coding.keyint;
    coding.block_size = enc_coding.block_size;
    coding.search_range = enc_coding.search_range;
    const auto raw = codec::raw_from_bytes(io::read_file(in_path), coding);
    const auto cv = codec::encode_video(raw, jobs);
    codec::save_mgv(cv, out_path);
    std::cout << "gops=" << cv.gops.size() << "\nbytes=" << codec::to_bytes(cv).size() << "\n";
  } else if (*dec_cmd) {
    const auto raw = codec::decode_video(codec::load_mgv(in_path));
    io::write_file(out_path, codec::raw_to_bytes(raw));
    std::cout << "frames=" << raw.frames.size() << "\n";
  } else if (*insp_cmd) {
    emit(inspect_text(codec::load_mgv(in_path)), out_path);
  } else if (*ext_cmd) {
    emit(extract_text(sampler::assemble_inputs(codec::load_mgv(in_path), ext_cfg)), out_path);
  } else if (*train_cmd) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path root = data_dir;
    const auto vocab = train::vocab_from_manifest(root / "train.tsv");
    const auto cfg = mflags.build(vocab.size());
    const auto data = train::load_examples(root, "train.tsv", cfg, vocab, jobs);
    model::Captioner m(cfg, init_seed);
    topt.seed = init_seed;
    const auto result = train::fit(m, data, topt, [](const train::StepRecord& s) {
      if (s.step == 1 || s.step % 25 == 0) std::cerr << "step " << s.step << " loss " << kv::number(s.loss) << "\n";
    });
    train::save_model_dir(m, vocab, model_dir);
    io::write_text(fs::path(model_dir) / "loss.csv", train::loss_csv(result));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto captions = train::caption_all(m, data, vocab, jobs);
    const auto score = train::score_captions(data, captions);
    kv::Map rep;
    rep["initial_loss"] = kv::number(result.initial_loss());
    rep["first_epoch_loss"] = kv::number(result.epoch_loss.front());
    rep["final_epoch_loss"] = kv::number(result.final_epoch_loss());
    rep["final_over_initial"] = kv::number(result.final_epoch_loss() / result.initial_loss());
    rep["steps"] = std::to_string(result.steps.size());
    rep["train_seconds"] = kv::number(secs);
    rep["train_exact_match"] = kv::number(score.exact_match);
    rep["train_motion_accuracy"] = kv::number(score.motion_accuracy);
    rep["parameters"] = std::to_string(m.params().scalar_count());
    std::string text;
    for (const auto& [k, v] : rep) text += k + "=" + v + "\n";
    io::write_text(fs::path(model_dir) / "train_report.txt", text);
    std::cout << text;
  } else if (*cap_cmd) {
    const auto lm = train::load_model_dir(model_dir);
    std::string text;
    if (!in_path.empty()) {
      const auto in = sampler::assemble_inputs(codec::load_mgv(in_path), model::sampler_config(lm.model.config()));
      text = train::caption_for(lm.model, in, lm.vocab) + "\n";
    } else {
      const auto data = train::load_examples(data_dir, split + ".tsv", lm.model.config(), lm.vocab, jobs);
      const auto caps = train::caption_all(lm.model, data, lm.vocab, jobs);
      for (std::size_t i = 0; i < data.size(); ++i) text += data[i].id + "\t" + caps[i] + "\n";
    }
    emit(text, out_path);
  } else if (*eval_cmd) {
    const auto lm = train::load_model_dir(model_dir);
    const auto data = train::load_examples(data_dir, split + ".tsv", lm.model.config(), lm.vocab, jobs);
    const auto caps = train::caption_all(lm.model, data, lm.vocab, jobs);
    std::vector<metrics::EvalRow> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      rows.push_back({data[i].id, caps[i], text::join(text::normalize(data[i].caption))});
    const auto rep = metrics::evaluate(rows);
    const auto score = train::score_captions(data, caps);
    const auto text = metrics::report_text(rep) + "motion_accuracy=" + kv::number(score.motion_accuracy) + "\n";
    if (!eval_out.empty()) {
      io::write_text(fs::path(eval_out) / "eval.txt", text);
      io::write_text(fs::path(eval_out) / "samples.tsv", metrics::samples_tsv(rows, rep));
    }
    std::cout << text;
  } else if (*bench_cmd) {
    const fs::path root = data_dir;
    const auto rows = synth::load_manifest(root / (split + ".tsv"));
    std::vector<codec::CompressedVideo> videos;
    for (std::size_t i = 0; i < rows.size() && videos.size() < bench_samples; ++i)
      videos.push_back(codec::load_mgv(root / rows[i].path));
    const auto cfg = bflags.build(text::kReserved + synth::template_words().size());
    const auto rep = bench::run_bench(videos, cfg, bopt);
    emit(bench::report_text(rep), out_path);
    if (rep.compressed_predict_calls != 0) {
      std::cerr << "error: compressed path performed " << rep.compressed_predict_calls << " predictions\n";
      return 4;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
