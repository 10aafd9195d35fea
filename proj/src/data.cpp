#include "plugtag/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "plugtag/errors.hpp"

namespace plugtag {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> cols;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) cols.push_back(tok);
  return cols;
}

}  // namespace

Dataset parse_conll_text(const std::string& text, int token_col, int tag_col,
                         const std::string& origin) {
  if (token_col < 0 || tag_col < 0) {
    throw UsageError("parse_conll: column indices must be nonnegative");
  }
  Dataset ds;
  TaggedSentence cur;
  std::istringstream is(text);
  std::string line;
  int64_t lineno = 0;
  auto flush = [&]() {
    if (!cur.words.empty()) {
      ds.push_back(std::move(cur));
      cur = {};
    }
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto cols = split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols[0] == "-DOCSTART-") continue;
    const int needed = std::max(token_col, tag_col) + 1;
    if (static_cast<int>(cols.size()) < needed) {
      throw DataError(origin + ":" + std::to_string(lineno) +
                      ": expected at least " + std::to_string(needed) +
                      " columns, got " + std::to_string(cols.size()));
    }
    cur.words.push_back(cols[static_cast<size_t>(token_col)]);
    cur.tags.push_back(cols[static_cast<size_t>(tag_col)]);
  }
  flush();
  return ds;
}

Dataset parse_conll(const std::string& path, int token_col, int tag_col) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_conll_text(ss.str(), token_col, tag_col, path);
}

std::string to_conll(const Dataset& ds) {
  std::string out;
  for (const auto& s : ds) {
    for (size_t i = 0; i < s.words.size(); ++i) {
      out += s.words[i];
      out += '\t';
      out += s.tags[i];
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

void write_conll(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write file: " + path);
  os << to_conll(ds);
}

namespace {

struct TagParts {
  char prefix;  // 'O', 'B', 'I'
  std::string type;
};

TagParts parse_tag(const std::string& tag) {
  if (tag == "O") return {'O', ""};
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return {tag[0], tag.substr(2)};
  }
  throw DataError("unknown tag syntax: '" + tag + "'");
}

}  // namespace

std::vector<std::string> to_bio2(const std::vector<std::string>& tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  std::string prev_type;
  char prev_prefix = 'O';
  for (const auto& t : tags) {
    TagParts p = parse_tag(t);
    if (p.prefix == 'I' && (prev_prefix == 'O' || prev_type != p.type)) {
      p.prefix = 'B';  // orphan continuation starts a new entity
    }
    out.push_back(p.prefix == 'O' ? "O" : std::string(1, p.prefix) + "-" + p.type);
    prev_prefix = p.prefix;
    prev_type = p.type;
  }
  return out;
}

bool is_valid_bio2(const std::vector<std::string>& tags) {
  std::string prev_type;
  char prev_prefix = 'O';
  for (const auto& t : tags) {
    TagParts p = parse_tag(t);
    if (p.prefix == 'I' && (prev_prefix == 'O' || prev_type != p.type)) return false;
    prev_prefix = p.prefix;
    prev_type = p.type;
  }
  return true;
}

std::vector<Span> spans_from_bio2(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  for (size_t i = 0; i < tags.size();) {
    TagParts p = parse_tag(tags[i]);
    if (p.prefix == 'B') {
      size_t j = i + 1;
      while (j < tags.size()) {
        TagParts q = parse_tag(tags[j]);
        if (q.prefix == 'I' && q.type == p.type) {
          ++j;
        } else {
          break;
        }
      }
      spans.push_back({p.type, static_cast<int64_t>(i), static_cast<int64_t>(j)});
      i = j;
    } else {
      ++i;
    }
  }
  return spans;
}

PrfScore span_f1(const std::vector<std::vector<std::string>>& predicted,
                 const std::vector<std::vector<std::string>>& gold) {
  if (predicted.size() != gold.size()) {
    throw DataError("span_f1: sentence count mismatch");
  }
  int64_t tp = 0, npred = 0, ngold = 0;
  for (size_t s = 0; s < gold.size(); ++s) {
    if (predicted[s].size() != gold[s].size()) {
      throw DataError("span_f1: tag length mismatch in sentence " + std::to_string(s));
    }
    auto ps = spans_from_bio2(predicted[s]);
    auto gs = spans_from_bio2(gold[s]);
    std::set<Span> gset(gs.begin(), gs.end());
    for (const auto& sp : ps) {
      if (gset.count(sp)) ++tp;
    }
    npred += static_cast<int64_t>(ps.size());
    ngold += static_cast<int64_t>(gs.size());
  }
  PrfScore r;
  if (npred == 0 && ngold == 0) return {1.0, 1.0, 1.0};
  r.precision = npred > 0 ? static_cast<double>(tp) / static_cast<double>(npred) : 0.0;
  r.recall = ngold > 0 ? static_cast<double>(tp) / static_cast<double>(ngold) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

PrfScore span_f1(const Dataset& predicted, const Dataset& gold) {
  std::vector<std::vector<std::string>> p, g;
  for (const auto& s : predicted) p.push_back(s.tags);
  for (const auto& s : gold) g.push_back(s.tags);
  return span_f1(p, g);
}

double token_accuracy(const std::vector<std::vector<std::string>>& predicted,
                      const std::vector<std::vector<std::string>>& gold) {
  if (predicted.size() != gold.size()) {
    throw DataError("token_accuracy: sentence count mismatch");
  }
  int64_t total = 0, hit = 0;
  for (size_t s = 0; s < gold.size(); ++s) {
    if (predicted[s].size() != gold[s].size()) {
      throw DataError("token_accuracy: length mismatch in sentence " + std::to_string(s));
    }
    for (size_t i = 0; i < gold[s].size(); ++i) {
      ++total;
      if (predicted[s][i] == gold[s][i]) ++hit;
    }
  }
  return total > 0 ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

double token_accuracy(const Dataset& predicted, const Dataset& gold) {
  std::vector<std::vector<std::string>> p, g;
  for (const auto& s : predicted) p.push_back(s.tags);
  for (const auto& s : gold) g.push_back(s.tags);
  return token_accuracy(p, g);
}

std::vector<std::vector<std::string>> SyntheticTasks::corpus() const {
  std::vector<std::vector<std::string>> out;
  for (const auto& t : tasks)
    for (const auto& s : t.train) out.push_back(s.words);
  return out;
}

namespace {

// Shared lexicons. Every word belongs to exactly one class, so gold tags are
// a deterministic function of the surface form.
const std::vector<std::string> kFirstNames = {
    "Olivia", "John",  "Emma",   "Liam",  "Noah",   "Ava",    "Mia",   "Ethan",
    "Lucas",  "Sofia", "Amelia", "Henry", "Oliver", "Isla",   "Jack",  "Grace",
    "Leo",    "Chloe", "Mason",  "Ruby",  "Felix",  "Hannah", "Oscar", "Clara"};
const std::vector<std::string> kLastNames = {
    "Smith",  "Jones",  "Brown",  "Taylor", "Wilson", "Davies",
    "Evans",  "Walker", "Wright", "Hall",   "Green",  "Baker",
    "Carter", "Turner", "Moore",  "Parker"};
const std::vector<std::string> kCities = {
    "Paris",  "London", "Berlin", "Madrid", "Rome",   "Vienna",
    "Oslo",   "Lisbon", "Dublin", "Prague", "Athens", "Warsaw",
    "Zurich", "Geneva", "Porto",  "Turin"};
const std::string kCitySuffix = "City";
const std::vector<std::string> kNouns = {
    "apple",  "book",   "garden", "house",  "river",  "market", "song",
    "bridge", "letter", "train",  "forest", "coffee", "castle", "valley",
    "street", "museum", "violin", "engine", "window", "island", "harbor",
    "bakery", "bottle", "mirror", "ticket", "parcel", "tower",  "stone"};
const std::vector<std::string> kVerbs = {
    "likes",   "visited", "bought",  "painted", "crossed", "watched",
    "carried", "opened",  "closed",  "repairs", "admires", "follows",
    "builds",  "borrowed", "cleaned", "explored", "guards", "enjoys"};
const std::vector<std::string> kAdjectives = {
    "old",    "small",  "bright", "quiet",  "narrow", "ancient",
    "golden", "broken", "gentle", "hidden", "rusty",  "wooden",
    "silent", "crowded", "sunny",  "foggy"};
const std::vector<std::string> kAdverbs = {
    "slowly", "quickly", "often", "rarely", "carefully",
    "loudly", "quietly", "early", "yesterday", "today"};
const std::vector<std::string> kDeterminers = {"the", "a", "this", "that",
                                               "every", "some"};
const std::vector<std::string> kPrepositions = {"in", "near", "behind", "beside",
                                                "under", "above", "toward", "past"};
const std::string kConj = "and";
const std::string kPeriod = ".";

enum class WordClass { Name, Noun, Verb, Adj, Adv, Det, Prep, Conj, Punct };

class SentenceRng {
 public:
  explicit SentenceRng(uint64_t seed) : rng_(seed) {}
  const std::string& pick(const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng_)];
  }
  bool chance(double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p;
  }
  size_t uniform(size_t n) {
    return std::uniform_int_distribution<size_t>(0, n - 1)(rng_);
  }

 private:
  std::mt19937_64 rng_;
};

void emit(TaggedSentence& s, const std::string& w, const std::string& tag) {
  s.words.push_back(w);
  s.tags.push_back(tag);
}

void emit_person(TaggedSentence& s, SentenceRng& r) {
  emit(s, r.pick(kFirstNames), "B-PER");
  if (r.chance(0.5)) emit(s, r.pick(kLastNames), "I-PER");
}

void emit_location(TaggedSentence& s, SentenceRng& r) {
  emit(s, r.pick(kCities), "B-LOC");
  if (r.chance(0.4)) emit(s, kCitySuffix, "I-LOC");
}

TaggedSentence gen_ner_sentence(SentenceRng& r) {
  TaggedSentence s;
  switch (r.uniform(4)) {
    case 0:
      emit_person(s, r);
      emit(s, r.pick(kVerbs), "O");
      emit(s, r.pick(kDeterminers), "O");
      if (r.chance(0.5)) emit(s, r.pick(kAdjectives), "O");
      emit(s, r.pick(kNouns), "O");
      emit(s, r.pick(kPrepositions), "O");
      emit_location(s, r);
      break;
    case 1:
      emit(s, r.pick(kDeterminers), "O");
      emit(s, r.pick(kNouns), "O");
      emit(s, r.pick(kPrepositions), "O");
      emit_location(s, r);
      emit(s, r.pick(kVerbs), "O");
      emit(s, r.pick(kAdverbs), "O");
      break;
    case 2:
      emit_person(s, r);
      emit(s, kConj, "O");
      emit_person(s, r);
      emit(s, r.pick(kVerbs), "O");
      emit(s, r.pick(kDeterminers), "O");
      emit(s, r.pick(kNouns), "O");
      break;
    default:
      emit(s, r.pick(kDeterminers), "O");
      emit(s, r.pick(kAdjectives), "O");
      emit(s, r.pick(kNouns), "O");
      emit(s, r.pick(kVerbs), "O");
      emit(s, r.pick(kPrepositions), "O");
      emit(s, r.pick(kDeterminers), "O");
      emit(s, r.pick(kNouns), "O");
      break;
  }
  emit(s, kPeriod, "O");
  return s;
}

const char* pos_tag_of(WordClass c) {
  switch (c) {
    case WordClass::Name: return "PROPN";
    case WordClass::Noun: return "NOUN";
    case WordClass::Verb: return "VERB";
    case WordClass::Adj: return "ADJ";
    case WordClass::Adv: return "ADV";
    case WordClass::Det: return "DET";
    case WordClass::Prep: return "PREP";
    case WordClass::Conj: return "CONJ";
    case WordClass::Punct: return "PUNCT";
  }
  return "O";
}

TaggedSentence gen_pos_sentence(SentenceRng& r) {
  TaggedSentence s;
  auto word = [&](const std::vector<std::string>& lex, WordClass c) {
    emit(s, r.pick(lex), pos_tag_of(c));
  };
  switch (r.uniform(3)) {
    case 0:
      word(kFirstNames, WordClass::Name);
      word(kVerbs, WordClass::Verb);
      word(kDeterminers, WordClass::Det);
      if (r.chance(0.5)) word(kAdjectives, WordClass::Adj);
      word(kNouns, WordClass::Noun);
      if (r.chance(0.5)) word(kAdverbs, WordClass::Adv);
      break;
    case 1:
      word(kDeterminers, WordClass::Det);
      word(kAdjectives, WordClass::Adj);
      word(kNouns, WordClass::Noun);
      word(kVerbs, WordClass::Verb);
      word(kPrepositions, WordClass::Prep);
      word(kDeterminers, WordClass::Det);
      word(kNouns, WordClass::Noun);
      break;
    default:
      word(kCities, WordClass::Name);
      word(kVerbs, WordClass::Verb);
      word(kDeterminers, WordClass::Det);
      word(kNouns, WordClass::Noun);
      emit(s, kConj, pos_tag_of(WordClass::Conj));
      word(kDeterminers, WordClass::Det);
      word(kNouns, WordClass::Noun);
      break;
  }
  emit(s, kPeriod, pos_tag_of(WordClass::Punct));
  return s;
}

void emit_np(TaggedSentence& s, SentenceRng& r) {
  emit(s, r.pick(kDeterminers), "B-NP");
  if (r.chance(0.5)) emit(s, r.pick(kAdjectives), "I-NP");
  emit(s, r.pick(kNouns), "I-NP");
}

void emit_vp(TaggedSentence& s, SentenceRng& r) {
  emit(s, r.pick(kVerbs), "B-VP");
  if (r.chance(0.4)) emit(s, r.pick(kAdverbs), "I-VP");
}

// CoNLL2000 convention: the PP chunk is the preposition alone, the noun
// phrase after it is its own NP chunk.
void emit_pp(TaggedSentence& s, SentenceRng& r) {
  emit(s, r.pick(kPrepositions), "B-PP");
  emit_np(s, r);
}

TaggedSentence gen_chunk_sentence(SentenceRng& r) {
  TaggedSentence s;
  switch (r.uniform(3)) {
    case 0:
      emit_np(s, r);
      emit_vp(s, r);
      emit_np(s, r);
      break;
    case 1:
      emit_np(s, r);
      emit_vp(s, r);
      emit_pp(s, r);
      break;
    default:
      emit_pp(s, r);
      emit_np(s, r);
      emit_vp(s, r);
      break;
  }
  emit(s, kPeriod, "O");
  return s;
}

std::string key_of(const TaggedSentence& s) {
  std::string k;
  for (const auto& w : s.words) {
    k += w;
    k += ' ';
  }
  return k;
}

template <typename Gen>
SyntheticTask make_task(const std::string& name, bool bio2,
                        std::vector<std::string> labels, uint64_t seed,
                        const SyntheticSizes& sizes, Gen gen) {
  SentenceRng rng(seed);
  const size_t need = static_cast<size_t>(sizes.train + sizes.dev + sizes.test);
  std::vector<TaggedSentence> pool;
  std::set<std::string> seen;
  size_t attempts = 0;
  while (pool.size() < need) {
    TaggedSentence s = gen(rng);
    if (seen.insert(key_of(s)).second) pool.push_back(std::move(s));
    if (++attempts > need * 1000) {
      throw ContractError("synthetic generator: template space exhausted");
    }
  }
  SyntheticTask t;
  t.name = name;
  t.bio2 = bio2;
  t.label_set = std::move(labels);
  size_t i = 0;
  for (int64_t k = 0; k < sizes.train; ++k) t.train.push_back(pool[i++]);
  for (int64_t k = 0; k < sizes.dev; ++k) t.dev.push_back(pool[i++]);
  for (int64_t k = 0; k < sizes.test; ++k) t.test.push_back(pool[i++]);
  return t;
}

}  // namespace

SyntheticTasks gen_synthetic_tasks(uint64_t seed, const SyntheticSizes& sizes) {
  SyntheticTasks out;
  out.tasks.push_back(make_task(
      "ner", true, {"B-PER", "I-PER", "B-LOC", "I-LOC"}, seed * 3 + 1, sizes,
      [](SentenceRng& r) { return gen_ner_sentence(r); }));
  out.tasks.push_back(make_task(
      "pos", false,
      {"PROPN", "NOUN", "VERB", "ADJ", "ADV", "DET", "PREP", "CONJ", "PUNCT"},
      seed * 3 + 2, sizes, [](SentenceRng& r) { return gen_pos_sentence(r); }));
  out.tasks.push_back(make_task(
      "chunk", true, {"B-NP", "I-NP", "B-VP", "I-VP", "B-PP"},
      seed * 3 + 3, sizes, [](SentenceRng& r) { return gen_chunk_sentence(r); }));
  return out;
}

}  // namespace plugtag
