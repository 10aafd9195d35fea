#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plugtag/vocab.hpp"

namespace plugtag {

struct TaggedSentence {
  std::vector<std::string> words;
  std::vector<std::string> tags;  // BIO2 (or flat class names for POS-style tasks)

  bool operator==(const TaggedSentence&) const = default;
};

using Dataset = std::vector<TaggedSentence>;

struct Span {
  std::string type;
  int64_t start = 0;  // inclusive
  int64_t end = 0;    // exclusive

  bool operator==(const Span&) const = default;
  bool operator<(const Span& o) const {
    if (start != o.start) return start < o.start;
    if (end != o.end) return end < o.end;
    return type < o.type;
  }
};

// CoNLL column format: one token per line, whitespace-separated columns,
// blank line between sentences, "-DOCSTART-" lines skipped.
Dataset parse_conll(const std::string& path, int token_col = 0, int tag_col = 1);
Dataset parse_conll_text(const std::string& text, int token_col, int tag_col,
                         const std::string& origin);
std::string to_conll(const Dataset& ds);
void write_conll(const Dataset& ds, const std::string& path);

// IOB1/BIO2 -> valid BIO2. Idempotent.
std::vector<std::string> to_bio2(const std::vector<std::string>& tags);
bool is_valid_bio2(const std::vector<std::string>& tags);

std::vector<Span> spans_from_bio2(const std::vector<std::string>& tags);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PrfScore span_f1(const std::vector<std::vector<std::string>>& predicted,
                 const std::vector<std::vector<std::string>>& gold);
PrfScore span_f1(const Dataset& predicted, const Dataset& gold);

double token_accuracy(const std::vector<std::vector<std::string>>& predicted,
                      const std::vector<std::vector<std::string>>& gold);
double token_accuracy(const Dataset& predicted, const Dataset& gold);

// One synthetic task: disjoint train/dev/test splits whose tags are a fixed
// deterministic function of the surface words.
struct SyntheticTask {
  std::string name;       // "ner", "pos", "chunk"
  bool bio2 = true;       // false: flat tag set (token-accuracy task)
  std::vector<std::string> label_set;  // non-O labels for bio2 tasks
  Dataset train, dev, test;
};

struct SyntheticSizes {
  int64_t train = 2000;
  int64_t dev = 300;
  int64_t test = 300;
};

struct SyntheticTasks {
  std::vector<SyntheticTask> tasks;
  // Untagged pretraining corpus: the union of all train sentences.
  std::vector<std::vector<std::string>> corpus() const;
};

// NER-like, POS-like and chunking-like datasets over a shared vocabulary.
SyntheticTasks gen_synthetic_tasks(uint64_t seed, const SyntheticSizes& sizes = {});

}  // namespace plugtag
