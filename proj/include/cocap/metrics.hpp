#pragma once

// Corpus BLEU-4 (no smoothing, closest-reference brevity penalty) and plain
// CIDEr (tf-idf n-gram cosine, n = 1..4, x10, no length penalty).

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cocap/error.hpp"
#include "cocap/kv.hpp"

namespace cocap::metrics {

using Tokens = std::vector<std::string>;

struct EvalPair {
  Tokens candidate;
  std::vector<Tokens> references;
};

using NgramCounts = std::map<Tokens, double>;

inline NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) out[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i),
                                                              t.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  return out;
}

inline void check_pairs(const std::vector<EvalPair>& pairs, const char* who) {
  if (pairs.empty()) throw ConfigError(std::string(who) + ": empty corpus");
  for (const auto& p : pairs)
    if (p.references.empty()) throw ConfigError(std::string(who) + ": pair without references");
}

inline double bleu4(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs, "bleu4");
  double matched[4] = {0, 0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  double cand_len = 0.0, ref_len = 0.0;
  for (const auto& p : pairs) {
    const auto c = p.candidate.size();
    cand_len += static_cast<double>(c);
    // closest reference length, shorter wins a tie
    std::size_t best = p.references[0].size();
    for (const auto& r : p.references) {
      const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cand = ngrams(p.candidate, n);
      std::vector<NgramCounts> refs;
      for (const auto& r : p.references) refs.push_back(ngrams(r, n));
      for (const auto& [g, cnt] : cand) {
        double max_ref = 0.0;
        for (const auto& rc : refs)
          if (const auto it = rc.find(g); it != rc.end()) max_ref = std::max(max_ref, it->second);
        matched[n - 1] += std::min(cnt, max_ref);
        total[n - 1] += cnt;
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (total[n] == 0.0 || matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / 4.0);
}

namespace detail {

inline std::map<Tokens, double> tfidf(const NgramCounts& counts, const std::map<Tokens, double>& df, double log_n) {
  double total = 0.0;
  for (const auto& [g, c] : counts) total += c;
  std::map<Tokens, double> v;
  for (const auto& [g, c] : counts) {
    const auto it = df.find(g);
    const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
    v[g] = (c / total) * (log_n - std::log(d));
  }
  return v;
}

inline double cosine(const std::map<Tokens, double>& a, const std::map<Tokens, double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, x] : a) {
    na += x * x;
    if (const auto it = b.find(g); it != b.end()) dot += x * it->second;
  }
  for (const auto& [g, y] : b) nb += y * y;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

/// Per-item CIDEr scores; document frequencies count reference sets.
inline std::vector<double> cider_items(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs, "cider");
  const double log_n = std::log(static_cast<double>(pairs.size()));
  std::vector<double> scores(pairs.size(), 0.0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Tokens, double> df;
    for (const auto& p : pairs) {
      std::map<Tokens, bool> seen;
      for (const auto& r : p.references)
        for (const auto& [g, c] : ngrams(r, n)) seen[g] = true;
      for (const auto& [g, b] : seen) df[g] += 1.0;
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto cand = ngrams(pairs[i].candidate, n);
      if (cand.empty()) continue;
      const auto cv = detail::tfidf(cand, df, log_n);
      double sim = 0.0;
      for (const auto& r : pairs[i].references) {
        const auto rc = ngrams(r, n);
        if (rc.empty()) continue;
        sim += detail::cosine(cv, detail::tfidf(rc, df, log_n));
      }
      scores[i] += sim / static_cast<double>(pairs[i].references.size());
    }
  }
  for (auto& s : scores) s = 10.0 * s / 4.0;
  return scores;
}

inline double cider(const std::vector<EvalPair>& pairs) {
  const auto items = cider_items(pairs);
  double sum = 0.0;
  for (double s : items) sum += s;
  return sum / static_cast<double>(items.size());
}

struct EvalRow {
  std::string id;
  std::string candidate;
  std::string reference;
};

struct EvalReport {
  double bleu4 = 0.0;
  double cider = 0.0;
  double exact_match = 0.0;
  std::size_t samples = 0;
  std::vector<double> item_cider;
};

inline Tokens split_words(const std::string& s) {
  Tokens out;
  std::string cur;
  for (char ch : s) {
    if (ch == ' ' || ch == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline EvalReport evaluate(const std::vector<EvalRow>& rows) {
  std::vector<EvalPair> pairs;
  std::size_t exact = 0;
  for (const auto& r : rows) {
    pairs.push_back({split_words(r.candidate), {split_words(r.reference)}});
    exact += split_words(r.candidate) == split_words(r.reference) ? 1 : 0;
  }
  EvalReport rep;
  rep.samples = rows.size();
  rep.bleu4 = bleu4(pairs);
  rep.item_cider = cider_items(pairs);
  for (double s : rep.item_cider) rep.cider += s;
  rep.cider /= static_cast<double>(rows.size());
  rep.exact_match = static_cast<double>(exact) / static_cast<double>(rows.size());
  return rep;
}

inline std::string report_text(const EvalReport& r) {
  return "bleu4=" + kv::number(r.bleu4) + "\ncider=" + kv::number(r.cider) + "\nexact_match=" +
         kv::number(r.exact_match) + "\nsamples=" + std::to_string(r.samples) + "\n";
}

inline std::string samples_tsv(const std::vector<EvalRow>& rows, const EvalReport& r) {
  std::string out = "id\tcandidate\treference\texact\tcider\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out += rows[i].id + "\t" + rows[i].candidate + "\t" + rows[i].reference + "\t" +
           (split_words(rows[i].candidate) == split_words(rows[i].reference) ? "1" : "0") + "\t" +
           kv::number(r.item_cider[i]) + "\n";
  return out;
}

}  // namespace cocap::metrics
