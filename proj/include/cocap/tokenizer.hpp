#pragma once

// Word-level vocabulary with four reserved ids.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cocap/error.hpp"
#include "cocap/file_io.hpp"

namespace cocap::text {

inline constexpr int kPad = 0;
inline constexpr int kCls = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReserved = 4;

/// Lowercases, turns ASCII punctuation into spaces and splits on whitespace.
inline std::vector<std::string> normalize(std::string_view caption) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : caption) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

inline std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary() : tokens_{"[PAD]", "[CLS]", "[EOS]", "[UNK]"} {}

  /// Words are appended in the given order after the reserved ids.
  explicit Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
    for (const auto& w : words) {
      if (w.empty()) throw ConfigError("empty vocabulary entry");
      if (ids_.contains(w)) throw ConfigError("duplicate vocabulary entry " + w);
      ids_.emplace(w, static_cast<int>(tokens_.size()));
      tokens_.push_back(w);
    }
  }

  std::size_t size() const { return tokens_.size(); }

  int id(std::string_view word) const {
    const auto it = ids_.find(std::string(word));
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view word) const { return ids_.contains(std::string(word)); }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  /// Non-reserved entries in id order.
  std::vector<std::string> words() const { return {tokens_.begin() + kReserved, tokens_.end()}; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Words with count >= min_count, ordered by descending count then
/// lexicographically.
inline Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw ConfigError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& caption : corpus)
    for (auto& w : normalize(caption)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& [w, n] : ranked)
    if (n >= min_count) words.push_back(w);
  return Vocabulary(words);
}

/// [CLS, words..., EOS, PAD...] of exactly max_len ids. Words beyond
/// max_len - 2 are dropped; the last slot is EOS whenever truncation happens.
inline std::vector<int> encode_text(std::string_view caption, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("encode_text: max_len must be >= 3");
  std::vector<int> ids;
  ids.reserve(max_len);
  ids.push_back(kCls);
  for (const auto& w : normalize(caption)) {
    if (ids.size() == max_len - 1) break;
    ids.push_back(vocab.id(w));
  }
  ids.push_back(kEos);
  ids.resize(max_len, kPad);
  return ids;
}

/// Drops reserved ids (UNK included) and joins the rest with single spaces.
inline std::string decode_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> words;
  for (int id : ids) {
    if (id == kEos) break;
    if (id < kReserved || static_cast<std::size_t>(id) >= vocab.size()) continue;
    words.push_back(vocab.token(id));
  }
  return join(words);
}

/// One token per line; line k holds id k + 4.
inline std::string vocab_file_text(const Vocabulary& vocab) {
  std::string out;
  for (const auto& w : vocab.words()) out += w + "\n";
  return out;
}

inline Vocabulary parse_vocab_file(std::string_view text) {
  std::vector<std::string> words;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) words.emplace_back(line);
    pos = end + 1;
  }
  return Vocabulary(words);
}

inline void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  io::write_text(path, vocab_file_text(vocab));
}

inline Vocabulary load_vocab(const std::filesystem::path& path) { return parse_vocab_file(io::read_text(path)); }

}  // namespace cocap::text
