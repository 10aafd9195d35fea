#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plugtag/config.hpp"
#include "plugtag/labelwords.hpp"
#include "plugtag/tensor.hpp"

namespace plugtag {

struct ModelWeights;

enum class PluginMode : uint8_t { Embedding = 0, Layer = 1 };

struct PluginMeta {
  uint64_t model_hash = 0;
  std::string task;
  uint16_t format_version = 1;
  uint64_t train_seed = 0;

  bool operator==(const PluginMeta&) const = default;
};

// One task's complete plug-in: the trained vectors, the label map and the
// label-word embedding replacement rows. The backbone itself is never touched.
struct PluginPack {
  PluginMode mode = PluginMode::Layer;
  int64_t plugin_len = 0;
  Tensor emb_vectors;  // Embedding mode: plugin_len x hidden
  std::vector<std::pair<Tensor, Tensor>> layer_kv;  // Layer mode: l pairs, each plugin_len x hidden
  LabelMap label_map;
  // token id -> replacement embedding row (hidden floats)
  std::vector<std::pair<int, std::vector<float>>> deltas;
  PluginMeta meta;

  void validate(const ModelConfig& cfg) const;
};

bool same_pack(const PluginPack& a, const PluginPack& b);  // bit equality

// Vectors drawn i.i.d. Normal(0, 0.02) under `seed`; empty map and deltas.
PluginPack init_plugin(const ModelConfig& cfg, PluginMode mode, int64_t plugin_len,
                       uint64_t seed);

// [Theta_P; X'] — plugin rows prepended to the embedded input.
Tensor inject_embedding(Tape& tape, const Tensor& embedded, const PluginPack& pack);

// ([theta_k; K], [theta_v; V]) for layer j (1-based).
std::pair<Tensor, Tensor> inject_layer(Tape& tape, const Tensor& k, const Tensor& v,
                                       const PluginPack& pack, int64_t layer);

// Token-embedding table with the pack's label-word rows replaced. Gradient
// (when `trainable_deltas` is given) flows to the delta tensor only; the
// backbone row data is shared, never mutated.
Tensor apply_labelword_deltas(Tape& tape, const ModelWeights& weights,
                              const PluginPack& pack);
Tensor apply_labelword_deltas(Tape& tape, const ModelWeights& weights,
                              const std::vector<int>& ids, const Tensor& trainable_deltas);

// Plugin file: magic "PTPL", version u16, mode u8, l_p u32, layer count u32,
// dims u32, model hash u64, CRC32 of payload; payload carries the vectors as
// little-endian f32, the label map and the deltas. Round-trip is bit-exact.
void save_plugin(const PluginPack& pack, const std::string& path);
PluginPack load_plugin(const std::string& path);
std::string serialize_plugin(const PluginPack& pack);
PluginPack deserialize_plugin(const std::string& bytes, const std::string& origin);

// Plugin + delta parameter count (exact integer arithmetic).
int64_t plugin_param_count(const PluginPack& pack, const ModelConfig& cfg);

}  // namespace plugtag
