#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plugtag/config.hpp"
#include "plugtag/data.hpp"
#include "plugtag/plugin.hpp"
#include "plugtag/tensor.hpp"
#include "plugtag/vocab.hpp"

namespace plugtag {

struct LayerWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention, all hidden x hidden (+bias)
  Tensor ln1_gamma, ln1_beta;
  Tensor w1, b1, w2, b2;  // FFN: hidden->ffn_dim->hidden, GELU in between
  Tensor ln2_gamma, ln2_beta;
};

// The frozen toy PLM. The LM head is the transpose view of tok_emb (weight
// tying): logits = H * tok_emb^T + lm_bias.
struct ModelWeights {
  ModelConfig config;
  Tensor tok_emb;  // vocab x hidden
  Tensor pos_emb;  // max_len x hidden
  Tensor lm_bias;  // vocab
  std::vector<LayerWeights> layers;

  std::vector<Tensor> all_tensors() const;
  int64_t param_count() const;
  uint64_t content_hash() const;  // FNV-1a 64 over the serialized payload
  void set_requires_grad(bool on);
};

ModelWeights init_weights(const ModelConfig& cfg);

struct Model {
  ModelWeights weights;
  Vocabulary vocab;

  // Cached content hash; weights are immutable after pretraining. Call
  // invalidate_hash() after mutating weights by hand (tests only).
  uint64_t hash() const {
    if (!hash_valid_) {
      hash_cache_ = weights.content_hash();
      hash_valid_ = true;
    }
    return hash_cache_;
  }
  void invalidate_hash() const { hash_valid_ = false; }

 private:
  mutable uint64_t hash_cache_ = 0;
  mutable bool hash_valid_ = false;
};

// X'[i] = emb_table[id_i] + pos_emb[i]. `emb_table` defaults to the model's
// own token embeddings; pass a patched table to apply label-word deltas.
Tensor embed(Tape& tape, const ModelWeights& w, const std::vector<int>& tokens,
             const Tensor* emb_table = nullptr);

// Multi-head scaled dot-product attention for layer `layer` (1-based) with
// optional plugin key/value prefixes. Queries come from x only; output keeps
// x's row count.
Tensor attention(Tape& tape, const Tensor& x, const ModelWeights& w, int64_t layer,
                 const Tensor* theta_k = nullptr, const Tensor* theta_v = nullptr);

// Full encoder. Embedding-mode plugin rows are prepended before layer 0 and
// dropped from the output; layer-mode plugins inject per-layer K/V prefixes.
Tensor encode(Tape& tape, const ModelWeights& w, const std::vector<int>& tokens,
              const PluginPack* pack = nullptr, const Tensor* emb_table = nullptr);

Tensor lm_logits(Tape& tape, const ModelWeights& w, const Tensor& hidden,
                 const Tensor* emb_table = nullptr);

// Top-k vocabulary ids at position `pos`, ranked by logit (ties by ascending
// id). Masked scoring replaces the position with MASK before encoding.
std::vector<int> predict_topk(const Model& m, const std::vector<int>& tokens,
                              int64_t pos, int k, bool masked = true,
                              const PluginPack* pack = nullptr);
// Top-k for every position. One forward pass per position in masked mode,
// a single pass otherwise.
std::vector<std::vector<int>> predict_topk_all(const Model& m,
                                               const std::vector<int>& tokens, int k,
                                               bool masked = true);

// Argmax predicted token id per position under the pack (unmasked input,
// deltas applied). This is the label-word prediction path used for tagging.
std::vector<int> predict_words(const Model& m, const PluginPack& pack,
                               const std::vector<int>& tokens);

enum class DecodeMode { Exact, Greedy };
std::vector<std::string> predict_tags(const Model& m, const PluginPack& pack,
                                      const std::vector<std::string>& words,
                                      DecodeMode mode = DecodeMode::Exact);

struct MlmConfig {
  int64_t steps = 4000;
  int64_t batch_size = 16;
  double lr = 1e-3;
  double mask_fraction = 0.15;  // of which 80% MASK / 10% random / 10% kept
  uint64_t seed = 0;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
};

struct MlmReport {
  double final_masked_perplexity = 0.0;
  double final_loss = 0.0;
};

// Desk-scale masked-LM pretraining. Deterministic under fixed seed; trains
// every backbone parameter. steps == 0 returns initialized weights unchanged.
MlmReport pretrain_mlm(Model& model, const std::vector<std::vector<std::string>>& corpus,
                       const MlmConfig& cfg);

// Checkpoint: magic "PTMD", version u16, content hash u64 (FNV-1a over the
// weight payload), config block, vocabulary, then weights as little-endian
// f32 in declared order.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace plugtag
