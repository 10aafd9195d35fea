#include "plugtag/labelwords.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "plugtag/errors.hpp"
#include "plugtag/model.hpp"

namespace plugtag {

int LabelMap::at(const std::string& label) const {
  auto it = entries.find(label);
  if (it == entries.end()) throw DataError("label has no label word: " + label);
  return it->second;
}

std::map<int, std::string> LabelMap::inverse() const {
  std::map<int, std::string> inv;
  for (const auto& [label, id] : entries) {
    if (!inv.emplace(id, label).second) {
      throw ContractError("label map values are not distinct");
    }
  }
  return inv;
}

void LabelMap::validate() const {
  inverse();  // distinctness
  if (schema == MapSchema::BIO2 && entries.count("O")) {
    throw ContractError("label map must not assign a word to label O");
  }
}

namespace {

bool pure_punctuation(const std::string& w) {
  if (w.empty()) return false;
  for (unsigned char c : w) {
    if (std::isalnum(c)) return false;
  }
  return true;
}

std::string effective_label(const std::string& tag, bool merge_bi) {
  if (!merge_bi) return tag;
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return tag.substr(2);
  }
  return tag;
}

}  // namespace

void filter_candidates(FreqTables& tables, const Vocabulary& vocab,
                       const SelectOptions& opts) {
  // (a) reserved tokens, (c) pure punctuation, configured stopwords
  for (auto& [label, table] : tables.by_label) {
    for (auto it = table.begin(); it != table.end();) {
      const int id = it->first;
      const std::string& w = vocab.word(id);
      if (vocab.is_reserved(id) || pure_punctuation(w) || opts.stopwords.count(w)) {
        it = table.erase(it);
      } else {
        ++it;
      }
    }
  }
  // (b) generic words: in the top-m of more than `generic_share` of tables
  const size_t ntables = tables.by_label.size();
  if (ntables == 0) return;
  std::map<int, size_t> top_presence;
  for (const auto& [label, table] : tables.by_label) {
    std::vector<std::pair<int, int64_t>> items(table.begin(), table.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    const size_t m = std::min<size_t>(items.size(), static_cast<size_t>(opts.generic_top_m));
    for (size_t i = 0; i < m; ++i) ++top_presence[items[i].first];
  }
  for (auto& [label, table] : tables.by_label) {
    for (auto it = table.begin(); it != table.end();) {
      auto p = top_presence.find(it->first);
      const double share = p == top_presence.end()
                               ? 0.0
                               : static_cast<double>(p->second) / static_cast<double>(ntables);
      if (share > opts.generic_share) {
        it = table.erase(it);
      } else {
        ++it;
      }
    }
  }
}

FreqTables count_candidates(const Dataset& train, const std::vector<std::string>& label_set,
                            const Model& model, int k, const SelectOptions& opts) {
  if (k < 1) throw UsageError("select_label_words: k must be >= 1");
  FreqTables tables;
  for (const auto& label : label_set) {
    const std::string eff = effective_label(label, opts.merge_bi);
    if (eff == "O") continue;
    tables.by_label[eff];  // ensure every label has a table
  }
  for (const auto& sent : train) {
    if (sent.words.size() != sent.tags.size()) {
      throw DataError("select_label_words: ragged sentence");
    }
    const std::vector<int> ids = model.vocab.encode(sent.words);
    if (static_cast<int64_t>(ids.size()) > model.weights.config.max_len) continue;
    const auto candidates = predict_topk_all(model, ids, k, opts.masked_scoring);
    for (size_t i = 0; i < ids.size(); ++i) {
      const std::string label = effective_label(sent.tags[i], opts.merge_bi);
      if (label == "O") continue;
      auto it = tables.by_label.find(label);
      if (it == tables.by_label.end()) {
        throw DataError("select_label_words: tag not in label set: " + sent.tags[i]);
      }
      for (int w : candidates[i]) ++it->second[w];
    }
  }
  return tables;
}

LabelMap select_label_words(const Dataset& train, const std::vector<std::string>& label_set,
                            const Model& model, int k, const SelectOptions& opts) {
  FreqTables tables = count_candidates(train, label_set, model, k, opts);
  filter_candidates(tables, model.vocab, opts);

  // Assignment order: descending total candidate frequency, ties by name.
  std::vector<std::pair<std::string, int64_t>> order;
  for (const auto& [label, table] : tables.by_label) {
    int64_t total = 0;
    for (const auto& [id, n] : table) total += n;
    order.emplace_back(label, total);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  LabelMap map;
  map.schema = opts.merge_bi ? MapSchema::Flat : MapSchema::BIO2;
  bool any_bio = false;
  for (const auto& [label, total] : order) {
    if (label.size() >= 2 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-') {
      any_bio = true;
    }
  }
  if (!opts.merge_bi && !any_bio) map.schema = MapSchema::Flat;

  std::set<int> used;
  for (const auto& [label, total] : order) {
    const auto& table = tables.by_label.at(label);
    std::vector<std::pair<int, int64_t>> items(table.begin(), table.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    bool assigned = false;
    for (const auto& [id, n] : items) {
      if (used.count(id)) continue;
      map.entries[label] = id;
      used.insert(id);
      assigned = true;
      break;
    }
    if (!assigned) {
      throw DataError("label word selection failed: no candidate left for label '" +
                      label + "'");
    }
  }
  map.validate();
  return map;
}

std::vector<int> relabel_targets(const std::vector<int>& token_ids,
                                 const std::vector<std::string>& tags,
                                 const LabelMap& map) {
  if (token_ids.size() != tags.size()) {
    throw DataError("relabel_targets: length mismatch");
  }
  std::vector<int> targets;
  targets.reserve(tags.size());
  for (size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      targets.push_back(token_ids[i]);  // O positions predict themselves
      continue;
    }
    auto it = map.entries.find(tag);
    if (it == map.entries.end() && map.schema == MapSchema::Flat) {
      it = map.entries.find(effective_label(tag, true));
    }
    if (it == map.entries.end()) throw DataError("relabel_targets: unmapped tag " + tag);
    targets.push_back(it->second);
  }
  return targets;
}

std::vector<std::string> decode_exact(const std::vector<int>& predicted,
                                      const LabelMap& map) {
  const auto inv = map.inverse();
  std::vector<std::string> tags;
  tags.reserve(predicted.size());
  for (int w : predicted) {
    auto it = inv.find(w);
    tags.push_back(it == inv.end() ? "O" : it->second);
  }
  if (map.schema == MapSchema::BIO2) tags = to_bio2(tags);  // orphan I-X repair
  return tags;
}

std::vector<std::string> decode_greedy(const std::vector<int>& predicted,
                                       const LabelMap& map) {
  const auto inv = map.inverse();
  std::vector<std::string> tags;
  tags.reserve(predicted.size());
  int prev_word = -1;
  for (int w : predicted) {
    auto it = inv.find(w);
    if (it == inv.end()) {
      tags.push_back("O");
      prev_word = -1;
      continue;
    }
    tags.push_back((w == prev_word ? "I-" : "B-") + it->second);
    prev_word = w;
  }
  return tags;
}

std::string export_label_map(const LabelMap& map, const Vocabulary& vocab) {
  std::string out;
  for (const auto& [label, id] : map.entries) {  // std::map is label-sorted
    out += label;
    out += '\t';
    out += vocab.word(id);
    out += '\t';
    out += std::to_string(id);
    out += '\n';
  }
  return out;
}

LabelMap parse_label_map(const std::string& text, const Vocabulary& vocab) {
  LabelMap map;
  std::istringstream is(text);
  std::string line;
  int64_t lineno = 0;
  bool any_bio = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string label, word, id_str;
    if (!std::getline(ls, label, '\t') || !std::getline(ls, word, '\t') ||
        !std::getline(ls, id_str, '\t')) {
      throw DataError("label map line " + std::to_string(lineno) + ": expected 3 columns");
    }
    const int id = std::stoi(id_str);
    if (vocab.word(id) != word) {
      throw DataError("label map line " + std::to_string(lineno) +
                      ": word/id disagree with vocabulary");
    }
    map.entries[label] = id;
    if (label.size() >= 2 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-') {
      any_bio = true;
    }
  }
  map.schema = any_bio ? MapSchema::BIO2 : MapSchema::Flat;
  map.validate();
  return map;
}

}  // namespace plugtag
