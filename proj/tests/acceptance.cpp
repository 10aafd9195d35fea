// Acceptance suite: ten end-to-end checks over the full pipeline, printing one
// PASS/FAIL line per criterion and exiting nonzero if any of them fails.
#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "plugtag/data.hpp"
#include "plugtag/errors.hpp"
#include "plugtag/labelwords.hpp"
#include "plugtag/model.hpp"
#include "plugtag/plugin.hpp"
#include "plugtag/registry.hpp"
#include "plugtag/training.hpp"

namespace fs = std::filesystem;
using namespace plugtag;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void expect(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string fmt(double x, int prec = 3) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << x;
  return ss.str();
}

std::vector<std::string> labels_of(const Dataset& ds) {
  std::set<std::string> seen;
  for (const auto& s : ds)
    for (const auto& t : s.tags) seen.insert(t);
  return {seen.begin(), seen.end()};
}

// ---- small fixtures shared by the cheap criteria ----

ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden = 8;
  c.layers = 2;
  c.heads = 2;
  c.head_dim = 4;
  c.max_len = 16;
  c.ffn_dim = 16;
  c.seed = 13;
  return c;
}

Dataset toy_dataset() {
  const std::vector<std::string> names = {"Olivia", "John", "Mary", "Emma", "Liam"};
  const std::vector<std::string> verbs = {"likes", "visits", "watches"};
  const std::vector<std::string> nouns = {"apple", "river", "song", "garden"};
  Dataset ds;
  for (const auto& n : names)
    for (const auto& v : verbs)
      for (const auto& o : nouns) ds.push_back({{n, v, "the", o}, {"B-PER", "O", "O", "O"}});
  return ds;
}

Model toy_model(const Dataset& ds, uint64_t seed = 13) {
  Model m;
  std::vector<std::vector<std::string>> corpus;
  for (const auto& s : ds) corpus.push_back(s.words);
  m.vocab = Vocabulary::build(corpus);
  ModelConfig cfg = tiny_config();
  cfg.vocab_size = m.vocab.size();
  cfg.seed = seed;
  m.weights = init_weights(cfg);
  return m;
}

// Independent label-word selection reference: dictionary counting, the three
// filter rules, then greedy assignment by descending total frequency.
LabelMap ref_select(const Dataset& train, const std::vector<std::string>& labels,
                    const Model& m, int k, const SelectOptions& opts) {
  std::map<std::string, std::map<int, int64_t>> freq;
  for (const auto& l : labels)
    if (l != "O") freq[l];
  for (const auto& s : train) {
    auto ids = m.vocab.encode(s.words);
    if (static_cast<int64_t>(ids.size()) > m.weights.config.max_len) continue;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (s.tags[i] == "O") continue;
      for (int c : predict_topk(m, ids, static_cast<int64_t>(i), k, opts.masked_scoring))
        ++freq[s.tags[i]][c];
    }
  }
  auto is_punct = [&](int id) {
    const std::string& w = m.vocab.word(id);
    for (unsigned char c : w)
      if (std::isalnum(c)) return false;
    return !w.empty();
  };
  for (auto& [l, t] : freq) {
    for (auto it = t.begin(); it != t.end();) {
      if (m.vocab.is_reserved(it->first) || is_punct(it->first) ||
          opts.stopwords.count(m.vocab.word(it->first))) {
        it = t.erase(it);
      } else {
        ++it;
      }
    }
  }
  std::map<int, int> presence;
  for (auto& [l, t] : freq) {
    std::vector<std::pair<int, int64_t>> items(t.begin(), t.end());
    std::sort(items.begin(), items.end(), [](auto& a, auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    for (size_t i = 0; i < items.size() && i < static_cast<size_t>(opts.generic_top_m); ++i)
      ++presence[items[i].first];
  }
  for (auto& [l, t] : freq) {
    for (auto it = t.begin(); it != t.end();) {
      if (presence[it->first] > opts.generic_share * static_cast<double>(freq.size()))
        it = t.erase(it);
      else
        ++it;
    }
  }
  std::vector<std::pair<std::string, int64_t>> order;
  for (auto& [l, t] : freq) {
    int64_t total = 0;
    for (auto& [id, n] : t) total += n;
    order.emplace_back(l, total);
  }
  std::sort(order.begin(), order.end(), [](auto& a, auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  LabelMap map;
  map.schema = MapSchema::BIO2;
  std::set<int> used;
  for (auto& [l, total] : order) {
    std::vector<std::pair<int, int64_t>> items(freq[l].begin(), freq[l].end());
    std::sort(items.begin(), items.end(), [](auto& a, auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    for (auto& [id, n] : items) {
      if (!used.count(id)) {
        map.entries[l] = id;
        used.insert(id);
        break;
      }
    }
  }
  return map;
}

Model selection_model() {
  std::vector<std::vector<std::string>> corpus = {
      {"Olivia", "likes", "apple", "John", "Mary", "visits", "Paris", "the",
       "a", "river", "song", ",", "garden", "house", "train", "letter"}};
  Model m;
  m.vocab = Vocabulary::build(corpus);
  ModelConfig cfg = tiny_config();
  cfg.vocab_size = m.vocab.size();
  cfg.seed = 17;
  m.weights = init_weights(cfg);
  return m;
}

// ---- heavyweight artifacts shared by criteria 6, 8 and 10 ----

struct Pipeline {
  SyntheticTasks tasks;
  Model model;
  std::map<std::string, LabelMap> maps;
  std::map<std::string, PluginPack> packs;
  std::map<std::string, double> plugin_metric, classifier_metric;
  fs::path dir = "acceptance_artifacts";
  std::string model_path;
  std::map<std::string, std::string> plugin_paths;
  double build_seconds = 0.0;
  bool built = false;

  void build() {
    if (built) return;
    Timer timer;
    tasks = gen_synthetic_tasks(0);  // 2000/300/300 per task
    model.vocab = Vocabulary::build(tasks.corpus());
    ModelConfig cfg;  // toy defaults: hidden 64, 4 layers, ffn 256
    cfg.vocab_size = model.vocab.size();
    model.weights = init_weights(cfg);
    pretrain_mlm(model, tasks.corpus(), {});  // 4000 steps

    fs::create_directories(dir);
    model_path = (dir / "model.bin").string();
    save_model(model, model_path);

    for (const auto& task : tasks.tasks) {
      maps[task.name] = select_label_words(task.train, labels_of(task.train), model, 10, {});
      TrainConfig tc;
      tc.epochs = 10;
      auto r = train_plugin(task.train, task.dev, model, maps[task.name], tc,
                            PluginMode::Layer, 8, task.name);
      plugin_metric[task.name] = evaluate_tagging(model, r.pack, task.test, DecodeMode::Exact);
      packs[task.name] = r.pack;
      const std::string p = (dir / (task.name + ".plugin.bin")).string();
      save_plugin(packs[task.name], p);
      plugin_paths[task.name] = p;

      auto clf = train_classifier(task.train, task.dev, model, labels_of(task.train), tc,
                                  PluginMode::Layer, 8);
      std::vector<std::vector<std::string>> pred, gold;
      for (const auto& s : task.test) {
        pred.push_back(classifier_tags(model, clf, s.words));
        gold.push_back(s.tags);
      }
      if (task.bio2) {
        for (auto& p2 : pred) p2 = to_bio2(p2);
        classifier_metric[task.name] = span_f1(pred, gold).f1;
      } else {
        classifier_metric[task.name] = token_accuracy(pred, gold);
      }
    }
    build_seconds = timer.seconds();
    built = true;
  }
};

// ---- the ten criteria ----

std::string criterion_gradients() {
  Timer timer;
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map;
  map.entries["B-PER"] = m.vocab.id("John");
  std::vector<TaggedSentence> batch(ds.begin(), ds.begin() + 2);

  std::vector<int> delta_ids{map.at("B-PER")};
  const int64_t h = m.weights.config.hidden;
  std::vector<Scalar> init(m.weights.tok_emb.data() + delta_ids[0] * h,
                           m.weights.tok_emb.data() + (delta_ids[0] + 1) * h);
  double worst = 0.0;
  for (auto mode : {PluginMode::Layer, PluginMode::Embedding}) {
    PluginPack pack = init_plugin(m.weights.config, mode, 2, 5);
    pack.label_map = map;
    std::vector<Tensor> params;
    if (mode == PluginMode::Embedding) {
      pack.emb_vectors = Tensor::from(pack.emb_vectors.shape(), pack.emb_vectors.value(), true);
      params.push_back(pack.emb_vectors);
    } else {
      for (auto& [k, v] : pack.layer_kv) {
        k = Tensor::from(k.shape(), k.value(), true);
        v = Tensor::from(v.shape(), v.value(), true);
        params.push_back(k);
        params.push_back(v);
      }
    }
    Tensor deltas = Tensor::from({1, h}, init, true);
    params.push_back(deltas);
    const double err = grad_check(
        [&](Tape& t) {
          Tensor patched = apply_labelword_deltas(t, m.weights, delta_ids, deltas);
          return compute_loss(t, m, batch, pack, map, &patched);
        },
        params, 1e-3);
    worst = std::max(worst, err);
  }
  const double secs = timer.seconds();
  expect(worst < 1e-3, "max relative error " + fmt(worst) + " >= 1e-3");
  expect(secs < 60.0, "gradient check took " + fmt(secs) + " s >= 60 s");
  return "max relative error " + fmt(worst, 2) + " over both modes plus deltas, " +
         fmt(secs, 2) + " s";
}

std::string criterion_freezing() {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map;
  map.entries["B-PER"] = m.vocab.id("John");
  TrainConfig cfg;
  cfg.epochs = 1;
  int seeds = 0;
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    cfg.seed = seed;
    const uint64_t before = m.weights.content_hash();
    auto r = train_plugin(ds, {}, m, map, cfg, PluginMode::Layer, 4, "toy");
    expect(m.weights.content_hash() == before,
           "backbone hash changed under seed " + std::to_string(seed));
    expect(r.pack.meta.model_hash == before, "pack records a different backbone hash");
    ++seeds;
  }
  return "backbone hash bit-identical across " + std::to_string(seeds) + " training seeds";
}

std::string criterion_noop() {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  const auto ids = m.vocab.encode(ds[0].words);
  Tape t0;
  const std::vector<Scalar> plain = encode(t0, m.weights, ids, nullptr).value();
  for (auto mode : {PluginMode::Embedding, PluginMode::Layer}) {
    PluginPack pack = init_plugin(m.weights.config, mode, 0, 9);
    Tape t;
    const std::vector<Scalar> with = encode(t, m.weights, ids, &pack).value();
    expect(with == plain, "zero-length plugin changed the encoder output");
  }
  return "zero-length plugins reproduce plain encode bit-exactly in both modes";
}

std::string criterion_selection_oracle() {
  Model m = selection_model();
  const std::vector<std::string> words = {"Olivia", "likes",  "apple", "John",
                                          "Mary",   "visits", "Paris", "the",
                                          "river",  "song",   "garden", "house"};
  const std::vector<std::string> labels = {"O", "B-PER", "I-PER", "B-LOC"};
  std::mt19937_64 rng(31);
  int matched = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Dataset train;
    std::uniform_int_distribution<size_t> nsent(3, 50), len(2, 8);
    std::uniform_int_distribution<size_t> wpick(0, words.size() - 1);
    std::uniform_int_distribution<size_t> tpick(0, labels.size() - 1);
    const size_t n = nsent(rng);
    for (size_t s = 0; s < n; ++s) {
      TaggedSentence sent;
      const size_t sl = len(rng);
      for (size_t i = 0; i < sl; ++i) {
        sent.words.push_back(words[wpick(rng)]);
        sent.tags.push_back(labels[tpick(rng)]);
      }
      train.push_back(sent);
    }
    SelectOptions opts;
    opts.generic_top_m = 3;
    const int k = 1 + trial % 4;
    LabelMap got, want;
    bool got_failed = false, want_failed = false;
    try {
      got = select_label_words(train, labels, m, k, opts);
    } catch (const DataError&) {
      got_failed = true;
    }
    try {
      want = ref_select(train, labels, m, k, opts);
      for (const auto& l : {"B-PER", "I-PER", "B-LOC"})
        if (!want.entries.count(l)) want_failed = true;
    } catch (const DataError&) {
      want_failed = true;
    }
    expect(got_failed == want_failed,
           "trial " + std::to_string(trial) + ": selection failure mismatch");
    if (!got_failed) {
      expect(got.entries == want.entries,
             "trial " + std::to_string(trial) + ": selection differs from the reference");
    }
    ++matched;
  }

  // shared-top-candidate tie: identical tables up to scale, k = whole vocab
  Dataset train;
  TaggedSentence a{{"Olivia", "likes", "apple"}, {"B-PER", "B-PER", "B-LOC"}};
  TaggedSentence b{{"Paris", "river"}, {"B-PER", "B-LOC"}};
  train = {a, b, b, b, b};
  SelectOptions opts;
  opts.generic_share = 1.0;
  const int k = static_cast<int>(m.vocab.size());
  LabelMap got = select_label_words(train, {"O", "B-PER", "B-LOC"}, m, k, opts);
  LabelMap want = ref_select(train, {"O", "B-PER", "B-LOC"}, m, k, opts);
  expect(got.entries == want.entries, "tie case differs from the reference");
  expect(got.entries.at("B-PER") < got.entries.at("B-LOC"),
         "higher-frequency label did not pick first in the tie case");
  return "matches the naive reference on " + std::to_string(matched) +
         " random corpora plus the shared-candidate tie case";
}

std::string criterion_decoding() {
  Model m = selection_model();
  const int john = m.vocab.id("John"), mary = m.vocab.id("Mary"), likes = m.vocab.id("likes");
  using Tags = std::vector<std::string>;
  LabelMap map;
  map.entries = {{"B-PER", john}, {"I-PER", mary}};
  expect(decode_exact({john, mary, likes}, map) == Tags{"B-PER", "I-PER", "O"},
         "exact decode truth table row 1");
  expect(decode_exact({likes, likes, likes}, map) == Tags{"O", "O", "O"},
         "exact decode truth table row 2");
  expect(decode_exact({mary, likes}, map) == Tags{"B-PER", "O"},
         "orphan I at sentence start not repaired to B");
  expect(decode_exact({likes, mary}, map) == Tags{"O", "B-PER"},
         "orphan I after O not repaired to B");
  expect(decode_exact({}, map).empty(), "empty decode");

  LabelMap flat;
  flat.schema = MapSchema::Flat;
  flat.entries = {{"PER", john}};
  expect(decode_greedy({john, john, likes}, flat) == Tags{"B-PER", "I-PER", "O"},
         "greedy run not merged");
  expect(decode_greedy({john, likes, john}, flat) == Tags{"B-PER", "O", "B-PER"},
         "greedy separated runs merged");

  // adjacent same-type entities distinguish the two schemes
  expect(spans_from_bio2(decode_exact({john, john}, map)).size() == 2,
         "exact decode merged adjacent same-type entities");
  expect(spans_from_bio2(decode_greedy({john, john}, flat)).size() == 1,
         "greedy decode split a run of one category word");

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(m.vocab.size()) - 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> pred(6);
    for (auto& p : pred) p = pick(rng);
    expect(is_valid_bio2(decode_exact(pred, map)), "exact decode emitted invalid BIO2");
  }
  return "exact and greedy decoders match the truth tables, including orphan repair "
         "and the adjacent-entity case";
}

std::string criterion_learning(Pipeline& pipe, std::string& table) {
  pipe.build();
  const std::map<std::string, double> floor{{"ner", 0.90}, {"pos", 0.95}, {"chunk", 0.90}};
  std::ostringstream rows;
  for (const auto& task : pipe.tasks.tasks) {
    const double plug = pipe.plugin_metric.at(task.name);
    const double clf = pipe.classifier_metric.at(task.name);
    rows << "       " << task.name << (task.bio2 ? " (span F1):       " : " (token acc):     ")
         << "plugin " << fmt(plug, 4) << "   plug-classifier " << fmt(clf, 4) << "\n";
    expect(plug >= floor.at(task.name),
           task.name + " metric " + fmt(plug, 4) + " below " + fmt(floor.at(task.name), 2));
  }
  table = rows.str();
  expect(pipe.build_seconds < 1800.0,
         "pipeline took " + fmt(pipe.build_seconds) + " s >= 30 min");
  return "all three tasks above threshold within 10 epochs, pipeline " +
         fmt(pipe.build_seconds, 3) + " s";
}

std::string criterion_param_ratio() {
  // toy layer-mode default: 4 layers x (K,V) x l_p 8 x hidden 64, 10 deltas
  ModelConfig toy;
  PluginPack pack = init_plugin(toy, PluginMode::Layer, 8, 0);
  for (int i = 0; i < 10; ++i) {
    pack.label_map.entries["B-L" + std::to_string(i)] = 50 + i;
    pack.deltas.emplace_back(50 + i, std::vector<float>(64, 0.0f));
  }
  ParamRatio r = trainable_param_ratio(toy, pack);
  expect(r.task_params == 4 * 2 * 8 * 64 + 10 * 64, "toy task-parameter arithmetic");
  expect(r.task_params == plugin_param_count(pack, toy), "closed form vs tensor count");
  expect(r.backbone_params == init_weights(toy).param_count(),
         "backbone count vs instantiated weights");

  ModelConfig big;  // transformer-base shape
  big.vocab_size = 50265;
  big.hidden = 768;
  big.layers = 12;
  big.heads = 12;
  big.head_dim = 64;
  big.max_len = 514;
  big.ffn_dim = 3072;
  PluginPack bp;
  bp.mode = PluginMode::Embedding;
  bp.plugin_len = 33;
  for (int i = 0; i < 9; ++i) bp.deltas.emplace_back(i, std::vector<float>(768, 0.0f));
  ParamRatio pr = trainable_param_ratio(big, bp);
  expect(pr.backbone_params > 100'000'000, "full-scale backbone too small");
  expect(pr.ratio() <= 0.001, "full-scale ratio " + fmt(pr.ratio()) + " > 0.001");
  return "toy layer-mode default " + std::to_string(r.task_params) + "/" +
         std::to_string(r.backbone_params) + " = " + fmt(r.ratio(), 3) +
         ", full-scale ratio " + fmt(pr.ratio(), 3) + " <= 0.001";
}

std::string criterion_switching(Pipeline& pipe) {
  pipe.build();
  Timer timer;
  std::map<std::string, Dataset> datasets;
  for (const auto& task : pipe.tasks.tasks) datasets[task.name] = task.test;
  const auto stream = build_stream(datasets, 100, 212);
  BenchOptions opts;
  opts.synthetic_reload_seconds = 0.1;
  const auto plug = run_stream(stream, pipe.model_path, pipe.plugin_paths,
                               SwitchRegime::PluginSwitch, opts);
  const auto full = run_stream(stream, pipe.model_path, pipe.plugin_paths,
                               SwitchRegime::ModelSwitch, opts);
  for (size_t i = 0; i < stream.size(); ++i) {
    expect(plug.samples[i].tags == full.samples[i].tags,
           "predictions differ between regimes at sample " + std::to_string(i));
  }
  const std::vector<int64_t> points{25, 50, 75, 100};
  const auto ratios = speed_ratio(full, plug, points);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : ratios) {
    expect(p.ratio > 10.0,
           "speed ratio " + fmt(p.ratio) + " at n=" + std::to_string(p.n_per_task) + " <= 10");
    const double x = static_cast<double>(p.n_per_task);
    sx += x;
    sy += p.ratio;
    sxx += x * x;
    sxy += x * p.ratio;
  }
  const double n = static_cast<double>(ratios.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  expect(slope <= 0.0, "ratio trend increases with n (slope " + fmt(slope) + ")");
  const double secs = timer.seconds();
  expect(secs < 300.0, "benchmark took " + fmt(secs) + " s >= 5 min");
  return "bit-identical predictions, ratio " + fmt(ratios.back().ratio, 3) + " at n=100, slope " +
         fmt(slope, 2) + " <= 0, " + fmt(secs, 3) + " s";
}

std::string criterion_serialization(Pipeline& pipe) {
  fs::create_directories(pipe.dir);
  Dataset ds = toy_dataset();
  Model a = toy_model(ds, 13);
  const std::string mp = (pipe.dir / "roundtrip_model.bin").string();
  save_model(a, mp);
  Model back = load_model(mp);
  expect(back.weights.content_hash() == a.weights.content_hash(), "model round-trip hash");
  const std::string mp2 = (pipe.dir / "roundtrip_model2.bin").string();
  save_model(back, mp2);
  std::ifstream f1(mp, std::ios::binary), f2(mp2, std::ios::binary);
  std::ostringstream b1, b2;
  b1 << f1.rdbuf();
  b2 << f2.rdbuf();
  expect(b1.str() == b2.str(), "model checkpoint not a byte fixed point");

  // corrupt one payload byte -> checksum failure
  std::string bytes = b1.str();
  bytes[bytes.size() - 5] ^= 0x40;
  const std::string bad = (pipe.dir / "corrupt_model.bin").string();
  {
    std::ofstream os(bad, std::ios::binary);
    os << bytes;
  }
  try {
    load_model(bad);
    fail("corrupted model loaded without error");
  } catch (const FormatError& e) {
    expect(e.fault() == FormatFault::ChecksumMismatch, "wrong fault for corrupted model");
  }

  LabelMap map;
  map.entries["B-PER"] = a.vocab.id("John");
  TrainConfig tc;
  tc.epochs = 1;
  auto r = train_plugin(ds, {}, a, map, tc, PluginMode::Layer, 2, "toy");
  const std::string blob = serialize_plugin(r.pack);
  expect(same_pack(r.pack, deserialize_plugin(blob, "mem")), "plugin round-trip");
  std::string pbad = blob;
  pbad[40] ^= 0x01;  // payload byte
  try {
    deserialize_plugin(pbad, "mem");
    fail("corrupted plugin loaded without error");
  } catch (const FormatError& e) {
    expect(e.fault() == FormatFault::ChecksumMismatch, "wrong fault for corrupted plugin");
  }

  // a pack trained against one backbone refuses to run on another
  Model other = toy_model(ds, 14);
  try {
    predict_tags(other, r.pack, ds[0].words);
    fail("cross-model plugin ran without error");
  } catch (const FormatError& e) {
    expect(e.fault() == FormatFault::HashMismatch, "wrong fault for cross-model plugin");
  }
  return "checkpoints round-trip bit-exactly; corruption and cross-model loads "
         "fail with the right faults";
}

std::string criterion_roundtrip(Pipeline& pipe) {
  pipe.build();
  const SyntheticTask* ner = nullptr;
  for (const auto& t : pipe.tasks.tasks)
    if (t.name == "ner") ner = &t;
  expect(ner != nullptr, "no ner task");
  const LabelMap& map = pipe.maps.at("ner");
  const auto inverse = map.inverse();

  Dataset all = ner->train;
  all.insert(all.end(), ner->dev.begin(), ner->dev.end());
  all.insert(all.end(), ner->test.begin(), ner->test.end());
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<size_t> pick(0, all.size() - 1);
  int collisions = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& s = all[pick(rng)];
    const auto gold = to_bio2(s.tags);
    const auto ids = pipe.model.vocab.encode(s.words);
    // collision: an O token is itself a label word, so decoding must relabel it
    bool collides = false;
    for (size_t j = 0; j < ids.size(); ++j)
      if (gold[j] == "O" && inverse.count(ids[j])) collides = true;
    const auto decoded = decode_exact(relabel_targets(ids, gold, map), map);
    if (collides) {
      ++collisions;
      continue;
    }
    expect(decoded == gold,
           "round trip failed on a collision-free sentence (i=" + std::to_string(i) + ")");
  }
  const double rate = static_cast<double>(collisions) / 1000.0;
  expect(rate < 0.01, "collision rate " + fmt(rate) + " >= 1%");
  return "gold tags recovered on all collision-free sentences; " +
         std::to_string(collisions) + "/1000 collision sentences (" + fmt(100.0 * rate, 2) +
         "%) excluded";
}

}  // namespace

int main() {
  Pipeline pipe;
  struct Criterion {
    const char* name;
    std::function<std::string()> body;
  };
  std::string learning_table;
  const std::vector<Criterion> criteria = {
      {"gradient correctness", [&] { return criterion_gradients(); }},
      {"freezing contract", [&] { return criterion_freezing(); }},
      {"no-op equivalence", [&] { return criterion_noop(); }},
      {"selection oracle equivalence", [&] { return criterion_selection_oracle(); }},
      {"decoding oracles", [&] { return criterion_decoding(); }},
      {"end-to-end learning", [&] { return criterion_learning(pipe, learning_table); }},
      {"parameter ratio", [&] { return criterion_param_ratio(); }},
      {"switch benchmark", [&] { return criterion_switching(pipe); }},
      {"serialization", [&] { return criterion_serialization(pipe); }},
      {"relabel/decode round trip", [&] { return criterion_roundtrip(pipe); }},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    std::string line;
    try {
      const std::string detail = criteria[i].body();
      line = "PASS - " + detail;
    } catch (const std::exception& e) {
      line = std::string("FAIL - ") + e.what();
      ++failures;
    }
    std::cout << "criterion " << std::setw(2) << i + 1 << " (" << criteria[i].name
              << "): " << line << "\n";
    if (i == 5 && !learning_table.empty()) std::cout << learning_table;
    std::cout.flush();
  }
  fs::remove_all(pipe.dir);
  if (failures > 0) {
    std::cout << failures << " of " << criteria.size() << " criteria failed\n";
    return 1;
  }
  std::cout << "all " << criteria.size() << " criteria passed\n";
  return 0;
}
