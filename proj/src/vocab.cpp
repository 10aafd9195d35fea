#include "plugtag/vocab.hpp"

#include <algorithm>
#include <map>

#include "plugtag/errors.hpp"
#include "plugtag/io.hpp"

namespace plugtag {

const std::string& Vocabulary::pad_word() {
  static const std::string s = "<pad>";
  return s;
}
const std::string& Vocabulary::mask_word() {
  static const std::string s = "<mask>";
  return s;
}
const std::string& Vocabulary::unk_word() {
  static const std::string s = "<unk>";
  return s;
}

Vocabulary::Vocabulary() {
  add(pad_word());
  add(mask_word());
  add(unk_word());
}

void Vocabulary::add(const std::string& w) {
  index_.emplace(w, static_cast<int>(words_.size()));
  words_.push_back(w);
}

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& sentences, int min_freq) {
  if (sentences.empty()) throw DataError("build_vocab: empty corpus");
  // std::map keeps word order deterministic for equal frequencies.
  std::map<std::string, int64_t> freq;
  for (const auto& s : sentences)
    for (const auto& w : s) ++freq[w];

  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [w, n] : items) {
    if (n < min_freq) continue;
    if (v.index_.count(w)) continue;  // reserved token appearing in text
    v.add(w);
  }
  return v;
}

int Vocabulary::id(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& w) const {
  return index_.count(w) > 0;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= static_cast<int>(words_.size())) {
    throw DataError("vocabulary id out of range: " + std::to_string(id));
  }
  return words_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

void Vocabulary::write(std::ostream& os) const {
  write_pod<uint32_t>(os, static_cast<uint32_t>(words_.size()));
  for (const auto& w : words_) write_string(os, w);
}

Vocabulary Vocabulary::read(std::istream& is) {
  uint32_t n = read_pod<uint32_t>(is);
  Vocabulary v;
  // Reserved words are stored in the file too; re-read and validate them.
  v.words_.clear();
  v.index_.clear();
  for (uint32_t i = 0; i < n; ++i) v.add(read_string(is));
  if (v.size() < kReserved || v.words_[0] != pad_word() ||
      v.words_[1] != mask_word() || v.words_[2] != unk_word()) {
    throw FormatError(FormatFault::Truncated, "vocabulary block is malformed");
  }
  return v;
}

}  // namespace plugtag
