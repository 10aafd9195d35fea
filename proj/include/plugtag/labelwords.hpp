#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "plugtag/data.hpp"
#include "plugtag/vocab.hpp"

namespace plugtag {

struct Model;

enum class MapSchema : uint8_t { BIO2 = 0, Flat = 1 };

// Label -> vocabulary token id. Values are pairwise distinct; under the BIO2
// schema the label "O" never has an entry (O positions predict themselves).
struct LabelMap {
  MapSchema schema = MapSchema::BIO2;
  std::map<std::string, int> entries;

  bool has(const std::string& label) const { return entries.count(label) > 0; }
  int at(const std::string& label) const;
  // token id -> label, valid because values are distinct.
  std::map<int, std::string> inverse() const;
  void validate() const;

  bool operator==(const LabelMap&) const = default;
};

// Per-label candidate counts accumulated over the training corpus.
struct FreqTables {
  std::map<std::string, std::map<int, int64_t>> by_label;
};

struct SelectOptions {
  int generic_top_m = 20;      // rule (b): window of top candidates per label
  double generic_share = 0.5;  // rule (b): removed when present in > share of tables
  bool masked_scoring = true;  // see predict_topk
  bool merge_bi = false;       // one shared word per category (GreedyMatch maps)
  std::set<std::string> stopwords;  // optional extra filter, empty by default
};

// Removes (a) reserved tokens, (b) words in the top-m of more than
// `generic_share` of all label tables, (c) pure punctuation tokens, and any
// configured stopwords.
void filter_candidates(FreqTables& tables, const Vocabulary& vocab,
                       const SelectOptions& opts);

// Builds candidate tables with predict_topk over the train set, filters them,
// then assigns each label its highest-frequency unused word. Labels are
// processed by descending total candidate frequency, ties by label name.
LabelMap select_label_words(const Dataset& train, const std::vector<std::string>& label_set,
                            const Model& model, int k,
                            const SelectOptions& opts = {});

// Same traversal without the assignment step; exposed for inspection/tests.
FreqTables count_candidates(const Dataset& train, const std::vector<std::string>& label_set,
                            const Model& model, int k, const SelectOptions& opts);

// Target sequence for training: non-O tags map through `map`, O positions
// keep their own input token id. Under a merged (category) map, B-X/I-X both
// resolve to the X entry.
std::vector<int> relabel_targets(const std::vector<int>& token_ids,
                                 const std::vector<std::string>& tags,
                                 const LabelMap& map);

// ExactMatch: invert the map position by position; non-label words become O;
// orphan I-X is repaired to B-X. `predicted` holds the first predicted piece
// of each word (word-level tokens have exactly one piece).
std::vector<std::string> decode_exact(const std::vector<int>& predicted,
                                      const LabelMap& map);

// GreedyMatch: the map assigns one word per category; maximal runs of the
// same label word become one span (first token B-X, rest I-X).
std::vector<std::string> decode_greedy(const std::vector<int>& predicted,
                                       const LabelMap& map);

// Export format: "LABEL<TAB>word<TAB>token_id" lines, UTF-8, sorted by label.
std::string export_label_map(const LabelMap& map, const Vocabulary& vocab);
LabelMap parse_label_map(const std::string& text, const Vocabulary& vocab);

}  // namespace plugtag
