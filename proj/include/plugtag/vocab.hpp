#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

namespace plugtag {

// Word-level vocabulary with fixed reserved ids. Ids are deterministic:
// reserved tokens first, then words sorted by (frequency desc, word asc).
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kUnk = 2;
  static constexpr int kReserved = 3;

  static const std::string& pad_word();
  static const std::string& mask_word();
  static const std::string& unk_word();

  Vocabulary();

  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences,
                          int min_freq = 1);

  int id(const std::string& w) const;  // kUnk when absent
  bool contains(const std::string& w) const;
  const std::string& word(int id) const;
  int64_t size() const { return static_cast<int64_t>(words_.size()); }
  bool is_reserved(int id) const { return id >= 0 && id < kReserved; }

  std::vector<int> encode(const std::vector<std::string>& words) const;

  void write(std::ostream& os) const;
  static Vocabulary read(std::istream& is);

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  void add(const std::string& w);
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace plugtag
