#include <doctest.h>

#include <cmath>

#include "plugtag/training.hpp"

using namespace plugtag;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 0;  // set from the vocabulary
  c.hidden = 8;
  c.layers = 2;
  c.heads = 2;
  c.head_dim = 4;
  c.max_len = 16;
  c.ffn_dim = 16;
  c.seed = 13;
  return c;
}

// deterministic toy task: names are B-PER, everything else O
Dataset toy_dataset() {
  const std::vector<std::string> names = {"Olivia", "John", "Mary", "Emma", "Liam"};
  const std::vector<std::string> verbs = {"likes", "visits", "watches"};
  const std::vector<std::string> nouns = {"apple", "river", "song", "garden"};
  Dataset ds;
  for (const auto& n : names)
    for (const auto& v : verbs)
      for (const auto& o : nouns) {
        TaggedSentence s;
        s.words = {n, v, "the", o};
        s.tags = {"B-PER", "O", "O", "O"};
        ds.push_back(s);
      }
  return ds;
}

Model toy_model(const Dataset& ds) {
  Model m;
  std::vector<std::vector<std::string>> corpus;
  for (const auto& s : ds) corpus.push_back(s.words);
  m.vocab = Vocabulary::build(corpus);
  ModelConfig cfg = tiny_config();
  cfg.vocab_size = m.vocab.size();
  m.weights = init_weights(cfg);
  return m;
}

LabelMap toy_map(const Model& m) {
  LabelMap map;
  map.entries["B-PER"] = m.vocab.id("John");
  return map;
}

}  // namespace

TEST_CASE("compute_loss matches an independent log-softmax computation") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  PluginPack pack = init_plugin(m.weights.config, PluginMode::Layer, 2, 3);
  pack.label_map = map;

  std::vector<TaggedSentence> batch(ds.begin(), ds.begin() + 3);
  Tape tape;
  Tensor loss = compute_loss(tape, m, batch, pack, map);

  double expect = 0.0;
  const int64_t v = m.weights.config.vocab_size;
  for (const auto& sent : batch) {
    Tape t2;
    auto ids = m.vocab.encode(sent.words);
    auto targets = relabel_targets(ids, sent.tags, map);
    Tensor h = encode(t2, m.weights, ids, &pack);
    Tensor logits = lm_logits(t2, m.weights, h);
    for (size_t i = 0; i < targets.size(); ++i) {
      const Scalar* row = logits.data() + static_cast<int64_t>(i) * v;
      double mx = row[0];
      for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
      expect -= row[targets[i]] - mx - std::log(z);
    }
  }
  expect /= static_cast<double>(batch.size());
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-9));

  CHECK_THROWS_AS(compute_loss(tape, m, {}, pack, map), DataError);
}

TEST_CASE("loss at initialization is near ln v") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  PluginPack pack = init_plugin(m.weights.config, PluginMode::Layer, 2, 3);
  pack.label_map = map;
  std::vector<TaggedSentence> batch(ds.begin(), ds.begin() + 8);
  Tape tape;
  // loss is summed over 4 positions per sentence
  const double per_pos = compute_loss(tape, m, batch, pack, map).item() / 4.0;
  const double lnv = std::log(static_cast<double>(m.weights.config.vocab_size));
  CHECK(per_pos == doctest::Approx(lnv).epsilon(0.10));
}

TEST_CASE("full-loss gradients pass finite differences in both modes") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  std::vector<TaggedSentence> batch(ds.begin(), ds.begin() + 2);

  std::vector<int> delta_ids{map.at("B-PER")};
  const int64_t h = m.weights.config.hidden;
  std::vector<Scalar> init(m.weights.tok_emb.data() + delta_ids[0] * h,
                           m.weights.tok_emb.data() + (delta_ids[0] + 1) * h);

  for (auto mode : {PluginMode::Layer, PluginMode::Embedding}) {
    CAPTURE(static_cast<int>(mode));
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
    CHECK(err < 1e-3);
  }
}

TEST_CASE("train_plugin freezes the backbone across seeds") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    cfg.seed = seed;
    const uint64_t before = m.weights.content_hash();
    auto r = train_plugin(ds, {}, m, map, cfg, PluginMode::Layer, 4, "toy");
    CHECK(m.weights.content_hash() == before);
    CHECK(r.pack.meta.model_hash == before);
    CHECK(r.pack.meta.train_seed == seed);
  }
}

TEST_CASE("train_plugin with 0 epochs returns the initialized pack plus map") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 11;
  auto r = train_plugin(ds, {}, m, map, cfg, PluginMode::Embedding, 3, "toy");
  CHECK(r.log.empty());
  CHECK(r.pack.label_map == map);
  CHECK(r.pack.deltas.empty());
  PluginPack fresh = init_plugin(m.weights.config, PluginMode::Embedding, 3, 11);
  CHECK(same_values(r.pack.emb_vectors, fresh.emb_vectors));
}

TEST_CASE("train_plugin is deterministic and learns the toy task") {
  Dataset ds = toy_dataset();
  Dataset dev(ds.begin(), ds.begin() + 10);
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  auto a = train_plugin(ds, dev, m, map, cfg, PluginMode::Layer, 4, "toy");
  auto b = train_plugin(ds, dev, m, map, cfg, PluginMode::Layer, 4, "toy");
  CHECK(same_pack(a.pack, b.pack));
  REQUIRE(a.log.size() == 3);
  // loss strictly decreases on this separable task
  CHECK(a.log[0].mean_loss > a.log[1].mean_loss);
  CHECK(a.log[1].mean_loss > a.log[2].mean_loss);
  for (const auto& e : a.log) CHECK(e.seconds >= 0.0);

  // the trained pack round-trips through its file format bit-exactly
  CHECK(same_pack(a.pack, deserialize_plugin(serialize_plugin(a.pack), "mem")));

  const std::string tsv = metrics_log(a.log);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);
  CHECK(std::count(tsv.begin(), tsv.end(), '\t') == 9);

  CHECK_THROWS_AS(train_plugin({}, {}, m, map, cfg, PluginMode::Layer, 4, "toy"),
                  DataError);
  TrainConfig bad;
  bad.epochs = -1;
  CHECK_THROWS_AS(train_plugin(ds, {}, m, map, bad, PluginMode::Layer, 4, "toy"),
                  ContractError);
}

TEST_CASE("sentences beyond the length cap are skipped") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  TaggedSentence longsent;
  for (int i = 0; i < 20; ++i) {
    longsent.words.push_back("apple");
    longsent.tags.push_back("O");
  }
  TrainConfig cfg;
  cfg.epochs = 1;
  // only the over-long sentence -> nothing trainable
  CHECK_THROWS_AS(train_plugin({longsent}, {}, m, map, cfg, PluginMode::Layer, 2, "t"),
                  DataError);
  // mixed input trains on the short sentences
  Dataset mixed{ds[0], longsent};
  auto r = train_plugin(mixed, {}, m, map, cfg, PluginMode::Layer, 2, "t");
  CHECK(r.log.size() == 1);
}

TEST_CASE("classifier_loss equals ln |L| under a zero head") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  const std::vector<std::string> labels{"B-PER", "I-PER", "B-LOC", "O"};
  PluginPack pack = init_plugin(m.weights.config, PluginMode::Layer, 2, 0);
  Tensor w = Tensor::zeros({m.weights.config.hidden, 4});
  Tensor b = Tensor::zeros({4});
  Tape tape;
  Tensor loss = classifier_loss(tape, m, {ds[0]}, pack, w, b, labels);
  // 4 positions, each uniform over 4 labels
  CHECK(loss.item() == doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-9));

  Tensor badw = Tensor::zeros({m.weights.config.hidden, 3});
  CHECK_THROWS_AS(classifier_loss(tape, m, {ds[0]}, pack, badw, b, labels), ShapeError);
  TaggedSentence alien = ds[0];
  alien.tags[0] = "B-ORG";
  CHECK_THROWS_AS(classifier_loss(tape, m, {alien}, pack, w, b, labels), DataError);
}

TEST_CASE("train_classifier learns the toy task and freezes the backbone") {
  Dataset ds = toy_dataset();
  Dataset dev(ds.begin(), ds.begin() + 10);
  Model m = toy_model(ds);
  const uint64_t before = m.weights.content_hash();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 2;
  auto clf = train_classifier(ds, dev, m, {"B-PER", "O"}, cfg, PluginMode::Layer, 4);
  CHECK(m.weights.content_hash() == before);
  REQUIRE(clf.log.size() == 3);
  CHECK(clf.log[0].mean_loss > clf.log[2].mean_loss);
  CHECK(clf.log[2].dev_metric > 0.5);
  auto tags = classifier_tags(m, clf, ds[0].words);
  CHECK(tags.size() == ds[0].words.size());
}

TEST_CASE("parameter ratio closed form matches actual tensor sizes") {
  ModelConfig cfg;  // toy default: v=2000, h=64, l=4, ffn=256, max_len=64
  PluginPack pack = init_plugin(cfg, PluginMode::Layer, 8, 0);
  for (int i = 0; i < 10; ++i) {
    pack.label_map.entries["B-L" + std::to_string(i)] = 50 + i;
    pack.deltas.emplace_back(50 + i, std::vector<float>(64, 0.0f));
  }
  ParamRatio r = trainable_param_ratio(cfg, pack);
  CHECK(r.task_params == 4 * 2 * 8 * 64 + 10 * 64);
  CHECK(r.task_params == 4736);
  CHECK(r.task_params == plugin_param_count(pack, cfg));
  // denominator equals the real parameter count of instantiated weights
  CHECK(r.backbone_params == init_weights(cfg).param_count());
  CHECK(r.ratio() == doctest::Approx(4736.0 / static_cast<double>(r.backbone_params)));

  // plugin tensor sizes agree with the count
  int64_t from_tensors = 0;
  for (const auto& [k, v] : pack.layer_kv) from_tensors += k.size() + v.size();
  from_tensors += static_cast<int64_t>(pack.deltas.size()) * cfg.hidden;
  CHECK(from_tensors == r.task_params);

  // l_p = 0 with no deltas -> zero task parameters
  PluginPack none = init_plugin(cfg, PluginMode::Embedding, 0, 0);
  CHECK(trainable_param_ratio(cfg, none).task_params == 0);
}

TEST_CASE("transformer-base-scale arithmetic stays at or below one in a thousand") {
  // transformer-base shape: 12 layers, hidden 768, ffn 3072, BPE vocab ~50k
  ModelConfig cfg;
  cfg.vocab_size = 50265;
  cfg.hidden = 768;
  cfg.layers = 12;
  cfg.heads = 12;
  cfg.head_dim = 64;
  cfg.max_len = 514;
  cfg.ffn_dim = 3072;

  PluginPack pack;
  pack.mode = PluginMode::Embedding;
  pack.plugin_len = 33;
  for (int i = 0; i < 9; ++i) {
    pack.deltas.emplace_back(i, std::vector<float>(768, 0.0f));
  }
  ParamRatio r = trainable_param_ratio(cfg, pack);
  CHECK(r.backbone_params > 100'000'000);
  CHECK(r.task_params == 33 * 768 + 9 * 768);
  CHECK(r.ratio() <= 0.001);
}

TEST_CASE("evaluate_tagging picks span F1 or accuracy by tag shape") {
  Dataset ds = toy_dataset();
  Model m = toy_model(ds);
  LabelMap map = toy_map(m);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto r = train_plugin(ds, {}, m, map, cfg, PluginMode::Layer, 2, "t");
  Dataset bio{ds[0]};
  CHECK(evaluate_tagging(m, r.pack, bio, DecodeMode::Exact) >= 0.0);
  Dataset flat{{{"Olivia", "likes"}, {"NOUN", "VERB"}}};
  PluginPack fpack = r.pack;
  fpack.label_map.schema = MapSchema::Flat;
  fpack.label_map.entries = {{"NOUN", m.vocab.id("apple")}, {"VERB", m.vocab.id("likes")}};
  const double acc = evaluate_tagging(m, fpack, flat, DecodeMode::Exact);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}
