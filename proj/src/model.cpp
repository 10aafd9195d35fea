#include "plugtag/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "plugtag/io.hpp"
#include "plugtag/optim.hpp"

namespace plugtag {

namespace {

constexpr char kModelMagic[4] = {'P', 'T', 'M', 'D'};
constexpr uint16_t kModelVersion = 1;

// Checkpoints carry f32; math runs in double.
void append_payload(std::string& out, const Tensor& t) {
  for (Scalar v : t.value()) {
    const float f = static_cast<float>(v);
    out.append(reinterpret_cast<const char*>(&f), sizeof(float));
  }
}

}  // namespace

std::vector<Tensor> ModelWeights::all_tensors() const {
  std::vector<Tensor> ts = {tok_emb, pos_emb, lm_bias};
  for (const auto& l : layers) {
    for (const auto& t : {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo,
                          l.ln1_gamma, l.ln1_beta, l.w1, l.b1, l.w2, l.b2,
                          l.ln2_gamma, l.ln2_beta}) {
      ts.push_back(t);
    }
  }
  return ts;
}

int64_t ModelWeights::param_count() const {
  int64_t n = 0;
  for (const auto& t : all_tensors()) n += t.size();
  return n;
}

uint64_t ModelWeights::content_hash() const {
  Fnv1a64 h;
  for (const auto& t : all_tensors()) {
    for (Scalar v : t.value()) {
      const float f = static_cast<float>(v);
      h.update(&f, sizeof(float));
    }
  }
  return h.digest();
}

void ModelWeights::set_requires_grad(bool on) {
  // Recreate leaves so taped-ness matches requires_grad.
  auto remake = [on](Tensor& t) {
    Tensor nt = Tensor::from(t.shape(), t.value(), on);
    t = nt;
  };
  remake(tok_emb);
  remake(pos_emb);
  remake(lm_bias);
  for (auto& l : layers) {
    for (Tensor* t : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo,
                      &l.ln1_gamma, &l.ln1_beta, &l.w1, &l.b1, &l.w2, &l.b2,
                      &l.ln2_gamma, &l.ln2_beta}) {
      remake(*t);
    }
  }
}

ModelWeights init_weights(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int64_t h = cfg.hidden;
  ModelWeights w;
  w.config = cfg;
  w.tok_emb = Tensor::randn({cfg.vocab_size, h}, 0.02f, rng);
  w.pos_emb = Tensor::randn({cfg.max_len, h}, 0.02f, rng);
  w.lm_bias = Tensor::zeros({cfg.vocab_size});
  for (int64_t j = 0; j < cfg.layers; ++j) {
    LayerWeights l;
    l.wq = Tensor::randn({h, h}, 0.02f, rng);
    l.bq = Tensor::zeros({h});
    l.wk = Tensor::randn({h, h}, 0.02f, rng);
    l.bk = Tensor::zeros({h});
    l.wv = Tensor::randn({h, h}, 0.02f, rng);
    l.bv = Tensor::zeros({h});
    l.wo = Tensor::randn({h, h}, 0.02f, rng);
    l.bo = Tensor::zeros({h});
    l.ln1_gamma = Tensor::from({h}, std::vector<Scalar>(static_cast<size_t>(h), 1.0));
    l.ln1_beta = Tensor::zeros({h});
    l.w1 = Tensor::randn({h, cfg.ffn_dim}, 0.02f, rng);
    l.b1 = Tensor::zeros({cfg.ffn_dim});
    l.w2 = Tensor::randn({cfg.ffn_dim, h}, 0.02f, rng);
    l.b2 = Tensor::zeros({h});
    l.ln2_gamma = Tensor::from({h}, std::vector<Scalar>(static_cast<size_t>(h), 1.0));
    l.ln2_beta = Tensor::zeros({h});
    w.layers.push_back(std::move(l));
  }
  return w;
}

Tensor embed(Tape& tape, const ModelWeights& w, const std::vector<int>& tokens,
             const Tensor* emb_table) {
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n > w.config.max_len) {
    throw DataError("embed: sequence length " + std::to_string(n) +
                    " exceeds max_len " + std::to_string(w.config.max_len));
  }
  for (int id : tokens) {
    if (id < 0 || id >= w.config.vocab_size) {
      throw DataError("embed: token id out of vocabulary: " + std::to_string(id));
    }
  }
  Tensor tok = tape.gather_rows(emb_table ? *emb_table : w.tok_emb, tokens);
  Tensor pos = tape.slice_rows(w.pos_emb, 0, n);
  return tape.add(tok, pos);
}

Tensor attention(Tape& tape, const Tensor& x, const ModelWeights& w, int64_t layer,
                 const Tensor* theta_k, const Tensor* theta_v) {
  if (layer < 1 || layer > static_cast<int64_t>(w.layers.size())) {
    throw ShapeError("attention: layer index out of range");
  }
  const LayerWeights& l = w.layers[static_cast<size_t>(layer - 1)];
  const ModelConfig& cfg = w.config;
  if (x.cols() != cfg.hidden) throw ShapeError("attention: input width mismatch");
  if ((theta_k == nullptr) != (theta_v == nullptr)) {
    throw ShapeError("attention: plugin needs both key and value vectors");
  }

  Tensor q = tape.add_rowvec(tape.matmul(x, l.wq), l.bq);
  Tensor k = tape.add_rowvec(tape.matmul(x, l.wk), l.bk);
  Tensor v = tape.add_rowvec(tape.matmul(x, l.wv), l.bv);
  if (theta_k && theta_k->dim(0) > 0) {
    if (theta_k->dim(1) != cfg.hidden || theta_v->dim(1) != cfg.hidden) {
      throw ShapeError("attention: plugin vector width mismatch");
    }
    k = tape.concat_rows(*theta_k, k);
    v = tape.concat_rows(*theta_v, v);
  }

  const Scalar inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Scalar>(cfg.head_dim));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(cfg.heads));
  for (int64_t hh = 0; hh < cfg.heads; ++hh) {
    const int64_t off = hh * cfg.head_dim;
    Tensor qh = tape.slice_cols(q, off, cfg.head_dim);
    Tensor kh = tape.slice_cols(k, off, cfg.head_dim);
    Tensor vh = tape.slice_cols(v, off, cfg.head_dim);
    Tensor scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk);
    Tensor probs = tape.softmax_rows(scores);
    heads.push_back(tape.matmul(probs, vh));
  }
  Tensor merged = cfg.heads == 1 ? heads[0] : tape.concat_cols(heads);
  return tape.add_rowvec(tape.matmul(merged, l.wo), l.bo);
}

namespace {

Tensor ffn(Tape& tape, const Tensor& x, const LayerWeights& l) {
  Tensor a = tape.gelu(tape.add_rowvec(tape.matmul(x, l.w1), l.b1));
  return tape.add_rowvec(tape.matmul(a, l.w2), l.b2);
}

Tensor encoder_layer(Tape& tape, const Tensor& x, const ModelWeights& w,
                     int64_t layer, const Tensor* tk, const Tensor* tv) {
  const LayerWeights& l = w.layers[static_cast<size_t>(layer - 1)];
  Tensor a = attention(tape, x, w, layer, tk, tv);
  Tensor h1 = tape.layer_norm(tape.add(x, a), l.ln1_gamma, l.ln1_beta);
  Tensor f = ffn(tape, h1, l);
  return tape.layer_norm(tape.add(h1, f), l.ln2_gamma, l.ln2_beta);
}

}  // namespace

Tensor encode(Tape& tape, const ModelWeights& w, const std::vector<int>& tokens,
              const PluginPack* pack, const Tensor* emb_table) {
  const int64_t n = static_cast<int64_t>(tokens.size());
  const bool emb_mode = pack && pack->mode == PluginMode::Embedding;
  const bool layer_mode = pack && pack->mode == PluginMode::Layer;
  const int64_t lp = pack ? pack->plugin_len : 0;

  Tensor x;
  if (emb_mode && lp > 0) {
    if (n + lp > w.config.max_len) {
      throw DataError("encode: sequence plus plugin length exceeds max_len");
    }
    // Plugin rows take positions 0..lp-1; the sentence shifts right.
    Tensor tok = tape.gather_rows(emb_table ? *emb_table : w.tok_emb, tokens);
    Tensor rows = tape.concat_rows(pack->emb_vectors, tok);
    Tensor pos = tape.slice_rows(w.pos_emb, 0, lp + n);
    x = tape.add(rows, pos);
  } else {
    x = embed(tape, w, tokens, emb_table);
  }

  for (int64_t j = 1; j <= w.config.layers; ++j) {
    const Tensor* tk = nullptr;
    const Tensor* tv = nullptr;
    if (layer_mode && lp > 0) {
      const auto& kv = pack->layer_kv[static_cast<size_t>(j - 1)];
      tk = &kv.first;
      tv = &kv.second;
    }
    x = encoder_layer(tape, x, w, j, tk, tv);
  }

  if (emb_mode && lp > 0) x = tape.slice_rows(x, lp, n);
  return x;
}

Tensor lm_logits(Tape& tape, const ModelWeights& w, const Tensor& hidden,
                 const Tensor* emb_table) {
  if (hidden.cols() != w.config.hidden) {
    throw ShapeError("lm_logits: hidden width mismatch");
  }
  Tensor logits = tape.matmul_nt(hidden, emb_table ? *emb_table : w.tok_emb);
  return tape.add_rowvec(logits, w.lm_bias);
}

namespace {

std::vector<int> topk_row(const Scalar* row, int64_t v, int k) {
  std::vector<int> ids(static_cast<size_t>(v));
  std::iota(ids.begin(), ids.end(), 0);
  const auto cmp = [row](int a, int b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return a < b;
  };
  if (k < v) {
    std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), cmp);
    ids.resize(static_cast<size_t>(k));
  } else {
    std::sort(ids.begin(), ids.end(), cmp);
  }
  return ids;
}

}  // namespace

std::vector<int> predict_topk(const Model& m, const std::vector<int>& tokens,
                              int64_t pos, int k, bool masked,
                              const PluginPack* pack) {
  if (pos < 0 || pos >= static_cast<int64_t>(tokens.size())) {
    throw DataError("predict_topk: position out of range");
  }
  if (k < 1 || k > m.weights.config.vocab_size) {
    throw UsageError("predict_topk: k out of range");
  }
  std::vector<int> ids = tokens;
  if (masked) ids[static_cast<size_t>(pos)] = Vocabulary::kMask;
  Tape tape;
  Tensor patched;
  const Tensor* table = nullptr;
  if (pack && !pack->deltas.empty()) {
    patched = apply_labelword_deltas(tape, m.weights, *pack);
    table = &patched;
  }
  Tensor h = encode(tape, m.weights, ids, pack, table);
  Tensor row = tape.slice_rows(h, pos, 1);
  Tensor logits = lm_logits(tape, m.weights, row, table);
  return topk_row(logits.data(), m.weights.config.vocab_size, k);
}

std::vector<std::vector<int>> predict_topk_all(const Model& m,
                                               const std::vector<int>& tokens, int k,
                                               bool masked) {
  std::vector<std::vector<int>> out;
  const int64_t n = static_cast<int64_t>(tokens.size());
  out.reserve(static_cast<size_t>(n));
  if (masked) {
    for (int64_t i = 0; i < n; ++i) out.push_back(predict_topk(m, tokens, i, k, true));
    return out;
  }
  Tape tape;
  Tensor h = encode(tape, m.weights, tokens);
  Tensor logits = lm_logits(tape, m.weights, h);
  for (int64_t i = 0; i < n; ++i) {
    out.push_back(topk_row(logits.data() + i * m.weights.config.vocab_size,
                           m.weights.config.vocab_size, k));
  }
  return out;
}

std::vector<int> predict_words(const Model& m, const PluginPack& pack,
                               const std::vector<int>& tokens) {
  if (pack.meta.model_hash != 0 && pack.meta.model_hash != m.hash()) {
    throw FormatError(FormatFault::HashMismatch,
                      "plugin was trained against a different backbone");
  }
  Tape tape;
  Tensor patched;
  const Tensor* table = nullptr;
  if (!pack.deltas.empty()) {
    patched = apply_labelword_deltas(tape, m.weights, pack);
    table = &patched;
  }
  Tensor h = encode(tape, m.weights, tokens, &pack, table);
  Tensor logits = lm_logits(tape, m.weights, h, table);
  std::vector<int> out;
  const int64_t v = m.weights.config.vocab_size;
  for (int64_t i = 0; i < h.rows(); ++i) {
    out.push_back(topk_row(logits.data() + i * v, v, 1)[0]);
  }
  return out;
}

std::vector<std::string> predict_tags(const Model& m, const PluginPack& pack,
                                      const std::vector<std::string>& words,
                                      DecodeMode mode) {
  std::vector<int> ids = m.vocab.encode(words);
  std::vector<int> predicted = predict_words(m, pack, ids);
  return mode == DecodeMode::Exact ? decode_exact(predicted, pack.label_map)
                                   : decode_greedy(predicted, pack.label_map);
}

MlmReport pretrain_mlm(Model& model, const std::vector<std::vector<std::string>>& corpus,
                       const MlmConfig& cfg) {
  if (corpus.empty()) throw DataError("pretrain_mlm: empty corpus");
  ModelWeights& w = model.weights;
  std::vector<std::vector<int>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& s : corpus) {
    auto ids = model.vocab.encode(s);
    if (!ids.empty() && static_cast<int64_t>(ids.size()) <= w.config.max_len) {
      sentences.push_back(std::move(ids));
    }
  }
  if (sentences.empty()) throw DataError("pretrain_mlm: no usable sentences");

  MlmReport report;
  if (cfg.steps == 0) return report;

  std::mt19937_64 rng(cfg.seed);
  w.set_requires_grad(true);
  AdamW opt(w.all_tensors(), cfg.weight_decay);
  const int64_t v = w.config.vocab_size;

  std::vector<size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t cursor = 0;

  // 80% MASK / 10% random / 10% keep on ~mask_fraction of positions,
  // at least one per sentence.
  auto corrupt = [&](const std::vector<int>& ids, std::vector<int>& input,
                     std::vector<int>& rows) {
    input = ids;
    rows.clear();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (u(rng) >= cfg.mask_fraction) continue;
      rows.push_back(static_cast<int>(i));
      const double r = u(rng);
      if (r < 0.8) {
        input[i] = Vocabulary::kMask;
      } else if (r < 0.9) {
        input[i] = static_cast<int>(
            std::uniform_int_distribution<int64_t>(Vocabulary::kReserved, v - 1)(rng));
      }  // else keep
    }
    if (rows.empty()) {
      const size_t i = std::uniform_int_distribution<size_t>(0, ids.size() - 1)(rng);
      rows.push_back(static_cast<int>(i));
      input[i] = Vocabulary::kMask;
    }
  };

  double loss_window = 0.0;
  int64_t window_tokens = 0;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    Tape tape;
    Tensor total;
    int64_t masked_total = 0;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto& ids = sentences[order[cursor++]];
      std::vector<int> input, rows;
      corrupt(ids, input, rows);
      Tensor h = encode(tape, w, input);
      // Logits only for the masked rows.
      std::vector<int> row_ids(rows.begin(), rows.end());
      Tensor hm = tape.gather_rows(h, row_ids);
      Tensor logits = lm_logits(tape, w, hm);
      std::vector<int> targets;
      for (int r : rows) targets.push_back(ids[static_cast<size_t>(r)]);
      Tensor ce = tape.cross_entropy(logits, targets);
      masked_total += static_cast<int64_t>(rows.size());
      total = total.defined() ? tape.add(total, ce) : ce;
    }
    Tensor loss = tape.scale(total, 1.0 / static_cast<Scalar>(masked_total));
    opt.zero_grad();
    tape.backward(loss);
    opt.clip_grad_norm(cfg.clip_norm);
    opt.step(cfg.lr);
    loss_window += static_cast<double>(loss.item()) * static_cast<double>(masked_total);
    window_tokens += masked_total;
    if (step + 1 == cfg.steps || (step + 1) % 500 == 0) {
      if (step + 1 == cfg.steps) {
        report.final_loss = loss_window / static_cast<double>(window_tokens);
        report.final_masked_perplexity = std::exp(report.final_loss);
      }
      loss_window = 0.0;
      window_tokens = 0;
    }
  }
  w.set_requires_grad(false);
  // Round weights through f32 so the model matches its checkpoint exactly.
  for (Tensor t : w.all_tensors()) {
    Scalar* d = t.data();
    for (int64_t i = 0; i < t.size(); ++i) d[i] = static_cast<float>(d[i]);
  }
  model.invalidate_hash();
  return report;
}

void save_model(const Model& m, const std::string& path) {
  std::string payload;
  for (const auto& t : m.weights.all_tensors()) append_payload(payload, t);
  Fnv1a64 h;
  h.update(payload.data(), payload.size());

  std::ostringstream os(std::ios::binary);
  os.write(kModelMagic, 4);
  write_pod<uint16_t>(os, kModelVersion);
  write_pod<uint64_t>(os, h.digest());
  const ModelConfig& c = m.weights.config;
  for (int64_t f : {c.vocab_size, c.hidden, c.layers, c.heads, c.head_dim,
                    c.max_len, c.ffn_dim}) {
    write_pod<int64_t>(os, f);
  }
  write_pod<uint64_t>(os, c.seed);
  m.vocab.write(os);
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  write_file_atomic(path, os.str());
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read model file: " + path);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw FormatError(FormatFault::BadMagic, path + ": not a model checkpoint");
  }
  const uint16_t version = read_pod<uint16_t>(is);
  if (version != kModelVersion) {
    throw FormatError(FormatFault::VersionMismatch,
                      path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const uint64_t stored_hash = read_pod<uint64_t>(is);
  ModelConfig c;
  c.vocab_size = read_pod<int64_t>(is);
  c.hidden = read_pod<int64_t>(is);
  c.layers = read_pod<int64_t>(is);
  c.heads = read_pod<int64_t>(is);
  c.head_dim = read_pod<int64_t>(is);
  c.max_len = read_pod<int64_t>(is);
  c.ffn_dim = read_pod<int64_t>(is);
  c.seed = read_pod<uint64_t>(is);
  c.validate();

  Model m;
  m.vocab = Vocabulary::read(is);
  if (m.vocab.size() != c.vocab_size) {
    throw FormatError(FormatFault::Truncated, path + ": vocabulary size mismatch");
  }
  m.weights = init_weights(c);
  Fnv1a64 h;
  for (auto& t : m.weights.all_tensors()) {
    for (auto& v : t.value()) {
      const float f = read_pod<float>(is);
      h.update(&f, sizeof(float));
      v = f;
    }
  }
  if (h.digest() != stored_hash) {
    throw FormatError(FormatFault::ChecksumMismatch,
                      path + ": weight payload hash mismatch");
  }
  return m;
}

}  // namespace plugtag
