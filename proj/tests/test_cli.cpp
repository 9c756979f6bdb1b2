#include <gtest/gtest.h>

#include "cocap/kv.hpp"
#include "cocap/mgv.hpp"
#include "helpers.hpp"

using namespace cocap;
namespace fs = std::filesystem;

namespace {

const std::string cli = COCAP_CLI_PATH;

int run(const std::string& args, const fs::path& log) {
  return fixture::run_command(cli + " " + args + " > " + log.string() + " 2>&1");
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  const auto dir = fixture::temp_dir("cli_usage");
  EXPECT_EQ(run("", dir / "log"), 1);
  EXPECT_EQ(run("bogus", dir / "log"), 1);
  EXPECT_EQ(run("inspect", dir / "log"), 1);
  EXPECT_EQ(run("synth --count notanumber", dir / "log"), 1);
  EXPECT_EQ(run("--help", dir / "log"), 0);
}

TEST(Cli, MissingFileExitsTwo) {
  const auto dir = fixture::temp_dir("cli_missing");
  EXPECT_EQ(run("inspect --input " + (dir / "nope.mgv").string(), dir / "log"), 2);
  EXPECT_NE(io::read_text(dir / "log").find("error:"), std::string::npos);
}

TEST(Cli, CorruptBitstreamExitsThree) {
  const auto dir = fixture::temp_dir("cli_corrupt");
  io::write_text(dir / "bad.mgv", "MGV1garbage");
  EXPECT_EQ(run("inspect --input " + (dir / "bad.mgv").string(), dir / "log"), 3);
  EXPECT_NE(io::read_text(dir / "log").find("offset"), std::string::npos);
}

TEST(Cli, EncodeDecodeInspectExtract) {
  const auto dir = fixture::temp_dir("cli_codec");
  Rng rng(1);
  codec::VideoHeader h;
  h.frame_count = 16;
  const auto raw = fixture::random_video(rng, h);
  io::write_file(dir / "in.raw", codec::raw_to_bytes(raw));
  ASSERT_EQ(run("encode --input " + (dir / "in.raw").string() + " --output " + (dir / "v.mgv").string() +
                    " --keyint 8 --jobs 2",
                dir / "log"),
            0);
  ASSERT_EQ(run("decode --input " + (dir / "v.mgv").string() + " --output " + (dir / "out.raw").string(), dir / "log"),
            0);
  EXPECT_EQ(io::read_file(dir / "out.raw"), io::read_file(dir / "in.raw"));
  EXPECT_EQ(codec::load_mgv(dir / "v.mgv"), codec::encode_video(raw));

  ASSERT_EQ(run("inspect --input " + (dir / "v.mgv").string() + " --output " + (dir / "i.txt").string(), dir / "log"),
            0);
  const auto info = kv::parse(io::read_text(dir / "i.txt"));
  EXPECT_EQ(info.at("gop.0.pattern"), "I B P B P B P P");
  EXPECT_EQ(info.at("gop.1.pattern"), "I B P B P B P P");
  EXPECT_EQ(info.at("gops"), "2");
  EXPECT_EQ(info.at("coded_frames"), "14");

  ASSERT_EQ(run("extract --input " + (dir / "v.mgv").string() + " --gops 3 --frames-per-gop 4 --motion-size 8"
                " --output " + (dir / "x.txt").string(),
                dir / "log"),
            0);
  const auto ext = kv::parse(io::read_text(dir / "x.txt"));
  EXPECT_EQ(ext.at("groups"), "3");
  EXPECT_EQ(ext.at("items"), "27");
}

TEST(Cli, SynthTrainCaptionEvalBench) {
  const auto dir = fixture::temp_dir("cli_pipeline");
  const auto data = (dir / "data").string(), model = (dir / "model").string();
  ASSERT_EQ(run("synth --out " + data + " --count 10 --seed 3 --jobs 2", dir / "log"), 0);
  for (const auto* f : {"train.tsv", "val.tsv", "test.tsv", "scenes.tsv"}) EXPECT_TRUE(fs::exists(dir / "data" / f));
  ASSERT_EQ(run("train --data " + data + " --out " + model + " --steps 2 --batch-size 2 --dim 16 --heads 2",
                dir / "log"),
            0);
  for (const auto* f : {"model.cfg", "vocab.txt", "params.ckpt", "loss.csv", "train_report.txt"})
    EXPECT_TRUE(fs::exists(dir / "model" / f)) << f;
  const auto report = kv::parse(io::read_text(dir / "model" / "train_report.txt"));
  EXPECT_EQ(report.at("steps"), "2");
  EXPECT_TRUE(report.contains("final_over_initial"));
  const auto loss = io::read_text(dir / "model" / "loss.csv");
  EXPECT_EQ(loss.substr(0, loss.find('\n')), "step,epoch,lr,loss");

  ASSERT_EQ(run("caption --model " + model + " --data " + data + " --split test --output " + (dir / "c.tsv").string(),
                dir / "log"),
            0);
  const auto caps = io::read_text(dir / "c.tsv");
  EXPECT_EQ(std::count(caps.begin(), caps.end(), '\n'), 1);
  ASSERT_EQ(run("caption --model " + model + " --input " + (dir / "data" / "videos" / "000000.mgv").string(),
                dir / "log"),
            0);

  ASSERT_EQ(run("eval --model " + model + " --data " + data + " --split val --out " + (dir / "ev").string(), dir / "log"),
            0);
  const auto ev = kv::parse(io::read_text(dir / "ev" / "eval.txt"));
  for (const auto* k : {"bleu4", "cider", "exact_match", "samples", "motion_accuracy"}) EXPECT_TRUE(ev.contains(k)) << k;
  EXPECT_TRUE(fs::exists(dir / "ev" / "samples.tsv"));

  ASSERT_EQ(run("bench --data " + data + " --split train --samples 1 --repetitions 5 --dim 16 --heads 2 --output " +
                    (dir / "b.txt").string(),
                dir / "log"),
            0);
  const auto b = kv::parse(io::read_text(dir / "b.txt"));
  EXPECT_EQ(b.at("compressed_predict_calls"), "0");
  EXPECT_EQ(b.at("repetitions"), "5");

  // model dir with a corrupted checkpoint
  io::write_text(dir / "model" / "params.ckpt", "CKPT");
  EXPECT_EQ(run("caption --model " + model + " --input " + (dir / "data" / "videos" / "000000.mgv").string(),
                dir / "log"),
            3);
}
