#include "plugtag/training.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "plugtag/optim.hpp"

namespace plugtag {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool is_span_task(const Dataset& ds) {
  for (const auto& s : ds)
    for (const auto& t : s.tags)
      if (t.size() >= 2 && (t[0] == 'B' || t[0] == 'I') && t[1] == '-') return true;
  return false;
}

int64_t usable_len(const Model& model, const TrainConfig& cfg, PluginMode mode,
                   int64_t plugin_len) {
  int64_t cap = std::min(cfg.max_seq_len, model.weights.config.max_len);
  if (mode == PluginMode::Embedding) cap -= plugin_len;
  return cap;
}

std::vector<int> loss_rows(const TaggedSentence& s, bool include_o) {
  std::vector<int> rows;
  for (size_t i = 0; i < s.tags.size(); ++i) {
    if (!include_o && s.tags[i] == "O") continue;
    rows.push_back(static_cast<int>(i));
  }
  return rows;
}

}  // namespace

std::string metrics_log(const std::vector<EpochStats>& log) {
  std::string out;
  for (const auto& e : log) {
    out += std::to_string(e.epoch);
    out += '\t';
    out += std::to_string(e.mean_loss);
    out += '\t';
    out += std::to_string(e.dev_metric);
    out += '\t';
    out += std::to_string(e.seconds);
    out += '\n';
  }
  return out;
}

Tensor compute_loss(Tape& tape, const Model& model,
                    const std::vector<TaggedSentence>& batch, const PluginPack& pack,
                    const LabelMap& map, const Tensor* emb_table,
                    bool include_o_positions) {
  if (batch.empty()) throw DataError("compute_loss: empty batch");
  Tensor patched;
  if (!emb_table) {
    patched = apply_labelword_deltas(tape, model.weights, pack);
    emb_table = &patched;
  }
  Tensor total;
  for (const auto& sent : batch) {
    const std::vector<int> ids = model.vocab.encode(sent.words);
    const std::vector<int> targets = relabel_targets(ids, sent.tags, map);
    Tensor h = encode(tape, model.weights, ids, &pack, emb_table);
    Tensor logits = lm_logits(tape, model.weights, h, emb_table);
    Tensor ce = tape.cross_entropy(logits, targets,
                                   include_o_positions ? std::vector<int>{}
                                                       : loss_rows(sent, false));
    total = total.defined() ? tape.add(total, ce) : ce;
  }
  return tape.scale(total, 1.0 / static_cast<Scalar>(batch.size()));
}

double evaluate_tagging(const Model& model, const PluginPack& pack, const Dataset& gold,
                        DecodeMode decode) {
  std::vector<std::vector<std::string>> pred, ref;
  for (const auto& s : gold) {
    pred.push_back(predict_tags(model, pack, s.words, decode));
    ref.push_back(s.tags);
  }
  if (is_span_task(gold)) return span_f1(pred, ref).f1;
  return token_accuracy(pred, ref);
}

TrainResult train_plugin(const Dataset& train, const Dataset& dev, const Model& model,
                         const LabelMap& map, const TrainConfig& cfg, PluginMode mode,
                         int64_t plugin_len, const std::string& task_name) {
  cfg.validate();
  if (train.empty()) throw DataError("train_plugin: empty dataset");
  map.validate();

  const uint64_t backbone_hash = model.hash();
  TrainResult result;
  PluginPack& pack = result.pack;
  pack = init_plugin(model.weights.config, mode, plugin_len, cfg.seed);
  pack.label_map = map;
  pack.meta.model_hash = backbone_hash;
  pack.meta.task = task_name;
  pack.meta.train_seed = cfg.seed;
  if (cfg.epochs == 0) return result;

  // Trainable leaves: the plugin vectors plus one delta row per label word,
  // initialized from the frozen backbone rows.
  std::vector<Tensor> params;
  if (mode == PluginMode::Embedding) {
    pack.emb_vectors = Tensor::from(pack.emb_vectors.shape(), pack.emb_vectors.value(), true);
    if (plugin_len > 0) params.push_back(pack.emb_vectors);
  } else {
    for (auto& [k, v] : pack.layer_kv) {
      k = Tensor::from(k.shape(), k.value(), true);
      v = Tensor::from(v.shape(), v.value(), true);
      if (plugin_len > 0) {
        params.push_back(k);
        params.push_back(v);
      }
    }
  }
  std::vector<int> delta_ids;
  for (const auto& [label, id] : map.entries) delta_ids.push_back(id);
  std::sort(delta_ids.begin(), delta_ids.end());
  const int64_t hidden = model.weights.config.hidden;
  Tensor delta_rows;
  if (!delta_ids.empty()) {
    std::vector<Scalar> init;
    for (int id : delta_ids) {
      const Scalar* row = model.weights.tok_emb.data() + static_cast<int64_t>(id) * hidden;
      init.insert(init.end(), row, row + hidden);
    }
    delta_rows = Tensor::from({static_cast<int64_t>(delta_ids.size()), hidden},
                              std::move(init), true);
    params.push_back(delta_rows);
  }
  auto materialize_deltas = [&]() {
    pack.deltas.clear();
    for (size_t j = 0; j < delta_ids.size(); ++j) {
      const Scalar* row = delta_rows.data() + static_cast<int64_t>(j) * hidden;
      std::vector<float> f32(row, row + hidden);  // pack payload is f32
      pack.deltas.emplace_back(delta_ids[j], std::move(f32));
    }
  };

  const int64_t cap = usable_len(model, cfg, mode, plugin_len);
  std::vector<size_t> usable;
  for (size_t i = 0; i < train.size(); ++i) {
    if (static_cast<int64_t>(train[i].words.size()) <= cap) usable.push_back(i);
  }
  if (usable.empty()) throw DataError("train_plugin: no sentence fits the length cap");

  AdamW opt(params, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed);
  const int64_t batches_per_epoch =
      (static_cast<int64_t>(usable.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = cfg.epochs * batches_per_epoch;
  int64_t step = 0;

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::shuffle(usable.begin(), usable.end(), rng);
    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (int64_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<TaggedSentence> batch;
      for (int64_t i = b * cfg.batch_size;
           i < std::min<int64_t>((b + 1) * cfg.batch_size,
                                 static_cast<int64_t>(usable.size()));
           ++i) {
        batch.push_back(train[usable[static_cast<size_t>(i)]]);
      }
      Tape tape;
      Tensor patched = apply_labelword_deltas(tape, model.weights, delta_ids, delta_rows);
      Tensor loss = compute_loss(tape, model, batch, pack, map, &patched,
                                 cfg.include_o_positions);
      opt.zero_grad();
      tape.backward(loss);
      opt.clip_grad_norm(cfg.clip_norm);
      opt.step(linear_decay_lr(cfg.lr, step, total_steps));
      ++step;
      loss_sum += loss.item();
      ++loss_count;
    }
    materialize_deltas();
    EpochStats es;
    es.epoch = epoch;
    es.mean_loss = loss_sum / static_cast<double>(loss_count);
    es.dev_metric = dev.empty() ? 0.0 : evaluate_tagging(model, pack, dev, cfg.decode);
    es.seconds = seconds_since(t0);
    result.log.push_back(es);
  }

  // Detach trained tensors, rounding through f32 so the in-memory pack matches
  // a saved-and-reloaded one exactly; then re-check the freezing contract.
  auto detach_f32 = [](const Tensor& t) {
    std::vector<Scalar> v = t.value();
    for (auto& x : v) x = static_cast<float>(x);
    return Tensor::from(t.shape(), std::move(v));
  };
  if (mode == PluginMode::Embedding) {
    pack.emb_vectors = detach_f32(pack.emb_vectors);
  } else {
    for (auto& [k, v] : pack.layer_kv) {
      k = detach_f32(k);
      v = detach_f32(v);
    }
  }
  materialize_deltas();
  if (model.weights.content_hash() != backbone_hash) {
    throw ContractError("train_plugin: backbone weights changed during training");
  }
  return result;
}

Tensor classifier_loss(Tape& tape, const Model& model,
                       const std::vector<TaggedSentence>& batch, const PluginPack& pack,
                       const Tensor& w, const Tensor& b,
                       const std::vector<std::string>& labels) {
  if (batch.empty()) throw DataError("classifier_loss: empty batch");
  if (w.cols() != static_cast<int64_t>(labels.size()) ||
      b.size() != static_cast<int64_t>(labels.size()) ||
      w.rows() != model.weights.config.hidden) {
    throw ShapeError("classifier_loss: head dimensions do not match the label set");
  }
  std::map<std::string, int> index;
  for (size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
  Tensor total;
  for (const auto& sent : batch) {
    const std::vector<int> ids = model.vocab.encode(sent.words);
    std::vector<int> targets;
    for (const auto& t : sent.tags) {
      auto it = index.find(t);
      if (it == index.end()) throw DataError("classifier_loss: tag not in label set: " + t);
      targets.push_back(it->second);
    }
    Tensor h = encode(tape, model.weights, ids, &pack);
    Tensor logits = tape.add_rowvec(tape.matmul(h, w), b);
    Tensor ce = tape.cross_entropy(logits, targets);
    total = total.defined() ? tape.add(total, ce) : ce;
  }
  return tape.scale(total, 1.0 / static_cast<Scalar>(batch.size()));
}

std::vector<std::string> classifier_tags(const Model& model, const ClassifierResult& clf,
                                         const std::vector<std::string>& words) {
  Tape tape;
  const std::vector<int> ids = model.vocab.encode(words);
  Tensor h = encode(tape, model.weights, ids, &clf.pack);
  Tensor logits = tape.add_rowvec(tape.matmul(h, clf.w), clf.b);
  std::vector<std::string> tags;
  const int64_t nl = static_cast<int64_t>(clf.labels.size());
  for (int64_t i = 0; i < logits.rows(); ++i) {
    const Scalar* row = logits.data() + i * nl;
    int best = 0;
    for (int64_t j = 1; j < nl; ++j) {
      if (row[j] > row[best]) best = static_cast<int>(j);
    }
    tags.push_back(clf.labels[static_cast<size_t>(best)]);
  }
  return tags;
}

ClassifierResult train_classifier(const Dataset& train, const Dataset& dev,
                                  const Model& model, const std::vector<std::string>& labels,
                                  const TrainConfig& cfg, PluginMode mode,
                                  int64_t plugin_len) {
  cfg.validate();
  if (train.empty()) throw DataError("train_classifier: empty dataset");
  ClassifierResult clf;
  clf.labels = labels;
  clf.pack = init_plugin(model.weights.config, mode, plugin_len, cfg.seed);
  clf.pack.meta.model_hash = model.hash();
  clf.pack.meta.train_seed = cfg.seed;

  std::mt19937_64 init_rng(cfg.seed + 1);
  clf.w = Tensor::randn({model.weights.config.hidden, static_cast<int64_t>(labels.size())},
                        0.02f, init_rng, true);
  clf.b = Tensor::zeros({static_cast<int64_t>(labels.size())}, true);

  std::vector<Tensor> params = {clf.w, clf.b};
  PluginPack& pack = clf.pack;
  if (mode == PluginMode::Embedding) {
    pack.emb_vectors = Tensor::from(pack.emb_vectors.shape(), pack.emb_vectors.value(), true);
    if (plugin_len > 0) params.push_back(pack.emb_vectors);
  } else {
    for (auto& [k, v] : pack.layer_kv) {
      k = Tensor::from(k.shape(), k.value(), true);
      v = Tensor::from(v.shape(), v.value(), true);
      if (plugin_len > 0) {
        params.push_back(k);
        params.push_back(v);
      }
    }
  }

  const int64_t cap = usable_len(model, cfg, mode, plugin_len);
  std::vector<size_t> usable;
  for (size_t i = 0; i < train.size(); ++i) {
    if (static_cast<int64_t>(train[i].words.size()) <= cap) usable.push_back(i);
  }
  if (usable.empty()) throw DataError("train_classifier: no sentence fits the length cap");

  AdamW opt(params, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed);
  const int64_t batches_per_epoch =
      (static_cast<int64_t>(usable.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = cfg.epochs * batches_per_epoch;
  int64_t step = 0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::shuffle(usable.begin(), usable.end(), rng);
    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (int64_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<TaggedSentence> batch;
      for (int64_t i = b * cfg.batch_size;
           i < std::min<int64_t>((b + 1) * cfg.batch_size,
                                 static_cast<int64_t>(usable.size()));
           ++i) {
        batch.push_back(train[usable[static_cast<size_t>(i)]]);
      }
      Tape tape;
      Tensor loss = classifier_loss(tape, model, batch, pack, clf.w, clf.b, labels);
      opt.zero_grad();
      tape.backward(loss);
      opt.clip_grad_norm(cfg.clip_norm);
      opt.step(linear_decay_lr(cfg.lr, step, total_steps));
      ++step;
      loss_sum += loss.item();
      ++loss_count;
    }
    EpochStats es;
    es.epoch = epoch;
    es.mean_loss = loss_sum / static_cast<double>(loss_count);
    if (!dev.empty()) {
      std::vector<std::vector<std::string>> pred, ref;
      for (const auto& s : dev) {
        pred.push_back(classifier_tags(model, clf, s.words));
        ref.push_back(s.tags);
      }
      es.dev_metric = is_span_task(dev) ? span_f1(pred, ref).f1 : token_accuracy(pred, ref);
    }
    es.seconds = seconds_since(t0);
    clf.log.push_back(es);
  }
  return clf;
}

ParamRatio trainable_param_ratio(const ModelConfig& cfg, const PluginPack& pack) {
  ParamRatio r;
  r.task_params = plugin_param_count(pack, cfg);
  // Backbone count from the config, closed form.
  const int64_t h = cfg.hidden;
  int64_t per_layer = 4 * h * h + 4 * h        // attention weights + biases
                      + 2 * h                  // ln1
                      + h * cfg.ffn_dim + cfg.ffn_dim  // w1, b1
                      + cfg.ffn_dim * h + h    // w2, b2
                      + 2 * h;                 // ln2
  r.backbone_params = cfg.vocab_size * h + cfg.max_len * h + cfg.vocab_size +
                      cfg.layers * per_layer;
  return r;
}

}  // namespace plugtag
