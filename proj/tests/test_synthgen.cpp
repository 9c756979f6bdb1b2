#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "cocap/mgv.hpp"
#include "cocap/synthgen.hpp"
#include "cocap/tokenizer.hpp"
#include "helpers.hpp"

using namespace cocap;
using namespace cocap::synth;

namespace {

// fraction of coded frames whose modal forward vector equals the scripted
// velocity times the distance to the forward reference
double ground_truth_rate(const SceneSpec& spec, std::size_t* frames = nullptr) {
  const codec::VideoHeader h;
  const auto s = generate_sample(spec, h);
  const auto cv = codec::encode_video(s.video);
  const auto [vx, vy] = spec.velocity();
  std::size_t ok = 0, total = 0;
  for (const auto& g : cv.gops) {
    const auto types = codec::gop_types(g);
    for (std::size_t k = 0; k < g.coded.size(); ++k) {
      const auto& cf = g.coded[k];
      const auto refs = codec::references_of(types, static_cast<std::uint32_t>(k + 1));
      const int dist = static_cast<int>(k + 1 - refs.fwd);
      const auto modal = modal_forward_vector(cf, s.video.frames[cf.display_index], static_cast<int>(h.block_size));
      ++total;
      if (modal && modal->first == vx * dist && modal->second == vy * dist) ++ok;
    }
  }
  if (frames) *frames = total;
  return static_cast<double>(ok) / static_cast<double>(total);
}

}  // namespace

TEST(Caption, Template) {
  EXPECT_EQ(caption({Shape::Circle, Color::Blue, Motion::Up, 1, 0}), "a blue circle moves up");
  EXPECT_EQ(caption({Shape::Bar, Color::White, Motion::Still, 0, 0}), "a white bar stays still");
  EXPECT_EQ(template_words().size(), 15u);
}

TEST(Scene, Validation) {
  EXPECT_THROW((SceneSpec{Shape::Bar, Color::Red, Motion::Left, 0, 0}.validate()), ConfigError);
  EXPECT_THROW((SceneSpec{Shape::Bar, Color::Red, Motion::Still, 1, 0}.validate()), ConfigError);
  EXPECT_EQ((SceneSpec{Shape::Bar, Color::Red, Motion::Up, 2, 0}.velocity()), std::make_pair(0, -2));
  EXPECT_EQ(parse_enum("circle", kShapes, "shape"), Shape::Circle);
  EXPECT_THROW(parse_enum("hexagon", kShapes, "shape"), ParseError);
}

TEST(Render, ShapeMovesByVelocity) {
  const SceneSpec spec{Shape::Square, Color::Green, Motion::Right, 2, 9};
  const codec::VideoHeader h;
  const auto s = generate_sample(spec, h);
  ASSERT_EQ(s.video.frames.size(), h.frame_count);
  for (std::size_t t = 1; t < s.video.frames.size(); ++t) {
    const auto& a = s.video.frames[t - 1];
    const auto& b = s.video.frames[t];
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) ASSERT_EQ(b.at(c, y, x), a.at(c, y, ((x - 2) % 64 + 64) % 64));
  }
  // channel bases follow the colour
  const auto [px, py] = position_at(s, spec, 0, h);
  long sum[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) sum[c] += s.video.frames[0].at(c, (py + y) % 64, (px + x) % 64);
  EXPECT_GT(sum[1], 3 * sum[0]);
  EXPECT_GT(sum[1], 3 * sum[2]);
}

TEST(Render, StillSceneIsStatic) {
  const auto s = generate_sample({Shape::Circle, Color::White, Motion::Still, 0, 4}, codec::VideoHeader{});
  for (const auto& f : s.video.frames) EXPECT_EQ(f, s.video.frames[0]);
  const auto mask = shape_blocks(s.video.frames[0], 4);
  EXPECT_GT(std::count(mask.begin(), mask.end(), true), 0);
}

TEST(Render, SeedDeterminesOutput) {
  const SceneSpec a{Shape::Bar, Color::Red, Motion::Down, 1, 11};
  auto b = a;
  b.seed = 12;
  const codec::VideoHeader h;
  EXPECT_EQ(generate_sample(a, h).video, generate_sample(a, h).video);
  EXPECT_NE(generate_sample(a, h).video, generate_sample(b, h).video);
}

TEST(GroundTruth, ModalVectorMatchesScript) {
  for (auto shape : kShapes)
    for (auto motion : kMotions)
      for (int speed : {1, 2}) {
        const SceneSpec spec{shape, Color::Blue, motion, motion == Motion::Still ? 0 : speed,
                             static_cast<std::uint64_t>(speed * 100 + static_cast<int>(shape))};
        std::size_t frames = 0;
        EXPECT_GE(ground_truth_rate(spec, &frames), 0.99) << caption(spec) << " speed " << speed;
        EXPECT_EQ(frames, 14u);
      }
}

TEST(Dataset, SplitSizes) {
  EXPECT_EQ(split_sizes(120, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{96, 12, 12}));
  EXPECT_EQ(split_sizes(60, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{48, 6, 6}));
  EXPECT_THROW(split_sizes(10, {0.5, 0.1, 0.1}), ConfigError);
  EXPECT_THROW(split_sizes(10, {1.2, -0.1, -0.1}), ConfigError);
}

TEST(Dataset, PlanIsDisjointAndDeterministic) {
  DatasetOptions opt;
  const auto plan = plan_dataset(opt);
  ASSERT_EQ(plan.size(), 120u);
  std::set<std::string> caps[3];
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& e = plan[i];
    caps[static_cast<int>(e.split)].insert(e.caption);
    ++counts[static_cast<int>(e.split)];
    EXPECT_EQ(e.caption, caption(e.spec));
    EXPECT_NO_THROW(e.spec.validate());
    EXPECT_LE(e.spec.speed, 2);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    EXPECT_EQ(e.id, buf);
  }
  EXPECT_EQ(counts[0], 96u);
  EXPECT_EQ(counts[1], 12u);
  EXPECT_EQ(counts[2], 12u);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (const auto& c : caps[a]) EXPECT_FALSE(caps[b].contains(c)) << c;
  EXPECT_EQ(caps[0].size(), 48u);
  // every motion word is present in the training split
  std::set<std::string> motions;
  for (const auto& c : caps[0]) motions.insert(text::normalize(c).back());
  EXPECT_EQ(motions.size(), 5u);

  const auto again = plan_dataset(opt);
  for (std::size_t i = 0; i < plan.size(); ++i) EXPECT_EQ(again[i].spec, plan[i].spec);
  opt.seed = 2;
  const auto other = plan_dataset(opt);
  bool differs = false;
  for (std::size_t i = 0; i < plan.size(); ++i) differs |= !(other[i].spec == plan[i].spec);
  EXPECT_TRUE(differs);
}

TEST(Dataset, VocabularyIsTheTemplateWords) {
  const auto plan = plan_dataset(DatasetOptions{});
  std::vector<std::string> captions;
  for (const auto& e : plan) captions.push_back(e.caption);
  auto words = text::build_vocab(captions, 1).words();
  auto want = template_words();
  std::sort(words.begin(), words.end());
  std::sort(want.begin(), want.end());
  EXPECT_EQ(words, want);
}

TEST(Dataset, FilesOnDiskAndJobsParity) {
  DatasetOptions opt;
  opt.count = 10;
  opt.header.frame_count = 8;
  const auto a = fixture::temp_dir("synth_a"), b = fixture::temp_dir("synth_b");
  const auto entries = generate_dataset(opt, a, 1);
  generate_dataset(opt, b, 4);
  for (const auto* f : {"train.tsv", "val.tsv", "test.tsv", "scenes.tsv"})
    EXPECT_EQ(io::read_text(a / f), io::read_text(b / f)) << f;
  for (const auto& e : entries) {
    EXPECT_EQ(io::read_file(a / e.path), io::read_file(b / e.path));
    const auto cv = codec::load_mgv(a / e.path);
    EXPECT_EQ(codec::decode_video(cv), generate_sample(e.spec, opt.header).video);
  }
  const auto rows = load_manifest(a / "train.tsv");
  EXPECT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].path, "videos/" + rows[0].id + ".mgv");
  const auto scenes = io::read_text(a / "scenes.tsv");
  EXPECT_EQ(scenes.substr(0, scenes.find('\n')), "id\tsplit\tshape\tcolor\tmotion\tspeed\tseed");
}

TEST(Manifest, ParseErrors) {
  EXPECT_EQ(parse_manifest("1\ta b\tv/1.mgv\n\n2\tc\tv/2.mgv").size(), 2u);
  EXPECT_THROW(parse_manifest("1\tonly two\n"), ParseError);
  EXPECT_THROW(parse_manifest("1\ta\tb\tc\n"), ParseError);
  try {
    parse_manifest("1\ta\tb\nbad line\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 6u);
  }
  EXPECT_THROW(load_manifest("/nonexistent/train.tsv"), IoError);
}
