#include <gtest/gtest.h>

#include <cmath>

#include "cocap/metrics.hpp"
#include "metric_oracle.hpp"

using namespace cocap;
using metrics::EvalPair;
using metrics::Tokens;

namespace {

Tokens words(const std::string& s) { return metrics::split_words(s); }

std::vector<EvalPair> to_pairs(const std::vector<oracle::Item>& items) {
  std::vector<EvalPair> out;
  for (const auto& it : items) out.push_back({it.cand, it.refs});
  return out;
}

}  // namespace

TEST(Bleu, IdenticalIsOne) {
  const std::vector<EvalPair> p{{words("a red square moves left"), {words("a red square moves left")}}};
  EXPECT_NEAR(metrics::bleu4(p), 1.0, 1e-12);
}

TEST(Bleu, HandComputedPrecisions) {
  // p1 4/5, p2 3/4, p3 2/3, p4 1/2, no brevity penalty
  const std::vector<EvalPair> p{{words("a b c d e"), {words("a b c d f")}}};
  EXPECT_NEAR(metrics::bleu4(p), std::pow(0.2, 0.25), 1e-12);
}

TEST(Bleu, BrevityPenalty) {
  const std::vector<EvalPair> p{{words("a b c d"), {words("a b c d e f")}}};
  EXPECT_NEAR(metrics::bleu4(p), std::exp(1.0 - 6.0 / 4.0), 1e-12);
  // closest reference length is used
  const std::vector<EvalPair> q{{words("a b c d"), {words("a b c d e f"), words("a b c d x")}}};
  EXPECT_NEAR(metrics::bleu4(q), std::exp(1.0 - 5.0 / 4.0), 1e-12);
}

TEST(Bleu, ClippedCounts) {
  // "a a a a a" vs "a a b": unigram matches clipped to 2
  const std::vector<EvalPair> p{{words("a a a a a"), {words("a a b c d")}}};
  EXPECT_EQ(metrics::bleu4(p), 0.0);  // no 4-gram match
  const std::vector<oracle::Item> items{{words("a a a a a"), {words("a a a a b")}}};
  EXPECT_NEAR(metrics::bleu4(to_pairs(items)), oracle::bleu4(items), 1e-12);
  EXPECT_NEAR(metrics::bleu4(to_pairs(items)), std::pow(4.0 / 5 * 3.0 / 4 * 2.0 / 3 * 1.0 / 2, 0.25), 1e-12);
}

TEST(Bleu, ShortCandidateScoresZero) {
  const std::vector<EvalPair> p{{words("a b c"), {words("a b c")}}};
  EXPECT_EQ(metrics::bleu4(p), 0.0);
}

TEST(Cider, PerfectOnDistinctPairIsTen) {
  const std::vector<EvalPair> p{{words("a red square moves left"), {words("a red square moves left")}},
                                {words("the blue bar stays still"), {words("the blue bar stays still")}}};
  // shared "a"? no: the two sentences share no n-gram
  EXPECT_NEAR(metrics::cider(p), 10.0, 1e-12);
}

TEST(Cider, SingleItemCorpusHasZeroIdf) {
  const std::vector<EvalPair> p{{words("a b c d"), {words("a b c d")}}};
  EXPECT_EQ(metrics::cider(p), 0.0);
}

TEST(Cider, DisjointCandidateScoresZero) {
  const std::vector<EvalPair> p{{words("x y z w"), {words("a b c d")}}, {words("e f g h"), {words("e f g h")}}};
  const auto items = metrics::cider_items(p);
  EXPECT_EQ(items[0], 0.0);
  EXPECT_NEAR(items[1], 10.0, 1e-12);
}

TEST(Metrics, MatchOracleOnRandomCorpora) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto items = oracle::random_corpus(rng);
    const auto pairs = to_pairs(items);
    ASSERT_NEAR(metrics::bleu4(pairs), oracle::bleu4(items), 1e-9) << i;
    ASSERT_NEAR(metrics::cider(pairs), oracle::cider(items), 1e-9) << i;
  }
}

TEST(Metrics, OrderInvariantAndBounded) {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    auto items = oracle::random_corpus(rng);
    const auto a = to_pairs(items);
    rng.shuffle(items.begin(), items.end());
    const auto b = to_pairs(items);
    EXPECT_NEAR(metrics::bleu4(a), metrics::bleu4(b), 1e-12);
    EXPECT_NEAR(metrics::cider(a), metrics::cider(b), 1e-12);
    EXPECT_GE(metrics::bleu4(a), 0.0);
    EXPECT_LE(metrics::bleu4(a), 1.0 + 1e-12);
    EXPECT_GE(metrics::cider(a), 0.0);
  }
}

TEST(Metrics, EmptyInputsRejected) {
  EXPECT_THROW(metrics::bleu4({}), ConfigError);
  EXPECT_THROW(metrics::cider({}), ConfigError);
  const std::vector<EvalPair> no_ref{{words("a"), {}}};
  EXPECT_THROW(metrics::bleu4(no_ref), ConfigError);
}

TEST(Evaluate, ReportAndSamples) {
  const std::vector<metrics::EvalRow> rows{{"000001", "a red square moves left", "a red square moves left"},
                                           {"000002", "a red square moves up", "a blue bar stays still"}};
  const auto rep = metrics::evaluate(rows);
  EXPECT_EQ(rep.samples, 2u);
  EXPECT_DOUBLE_EQ(rep.exact_match, 0.5);
  EXPECT_EQ(rep.item_cider.size(), 2u);
  const auto text = metrics::report_text(rep);
  EXPECT_NE(text.find("bleu4="), std::string::npos);
  EXPECT_NE(text.find("cider="), std::string::npos);
  EXPECT_NE(text.find("exact_match=0.5"), std::string::npos);
  EXPECT_NE(text.find("samples=2"), std::string::npos);
  const auto tsv = metrics::samples_tsv(rows, rep);
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "id\tcandidate\treference\texact\tcider");
  EXPECT_NE(tsv.find("000001\ta red square moves left\ta red square moves left\t1\t"), std::string::npos);
}
