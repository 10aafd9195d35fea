#include "plugtag/plugin.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "plugtag/io.hpp"
#include "plugtag/model.hpp"

namespace plugtag {

namespace {

constexpr char kPluginMagic[4] = {'P', 'T', 'P', 'L'};
constexpr uint16_t kPluginVersion = 1;

// Plugin files carry f32; math runs in double.
void append_tensor(std::string& out, const Tensor& t) {
  for (Scalar v : t.value()) {
    const float f = static_cast<float>(v);
    out.append(reinterpret_cast<const char*>(&f), sizeof(float));
  }
}

}  // namespace

void PluginPack::validate(const ModelConfig& cfg) const {
  if (plugin_len < 0) throw ContractError("plugin: negative length");
  if (mode == PluginMode::Embedding) {
    if (plugin_len > 0 &&
        (emb_vectors.rows() != plugin_len || emb_vectors.cols() != cfg.hidden)) {
      throw ShapeError("plugin: embedding vector shape mismatch");
    }
  } else {
    if (plugin_len > 0 &&
        static_cast<int64_t>(layer_kv.size()) != cfg.layers) {
      throw ShapeError("plugin: expected one (k,v) pair per layer");
    }
    for (const auto& [k, v] : layer_kv) {
      if (k.rows() != plugin_len || k.cols() != cfg.hidden ||
          v.rows() != plugin_len || v.cols() != cfg.hidden) {
        throw ShapeError("plugin: layer vector shape mismatch");
      }
    }
  }
  label_map.validate();
  std::set<int> mapped;
  for (const auto& [label, id] : label_map.entries) mapped.insert(id);
  for (const auto& [id, row] : deltas) {
    if (!mapped.count(id)) {
      throw ContractError("plugin: delta for a token that is not a label word");
    }
    if (static_cast<int64_t>(row.size()) != cfg.hidden) {
      throw ShapeError("plugin: delta row width mismatch");
    }
  }
}

bool same_pack(const PluginPack& a, const PluginPack& b) {
  return serialize_plugin(a) == serialize_plugin(b);
}

PluginPack init_plugin(const ModelConfig& cfg, PluginMode mode, int64_t plugin_len,
                       uint64_t seed) {
  if (plugin_len < 0) throw ContractError("init_plugin: negative plugin length");
  cfg.validate();
  std::mt19937_64 rng(seed);
  PluginPack p;
  p.mode = mode;
  p.plugin_len = plugin_len;
  p.meta.train_seed = seed;
  if (mode == PluginMode::Embedding) {
    p.emb_vectors = Tensor::randn({plugin_len, cfg.hidden}, 0.02f, rng);
  } else {
    for (int64_t j = 0; j < cfg.layers; ++j) {
      Tensor k = Tensor::randn({plugin_len, cfg.hidden}, 0.02f, rng);
      Tensor v = Tensor::randn({plugin_len, cfg.hidden}, 0.02f, rng);
      p.layer_kv.emplace_back(std::move(k), std::move(v));
    }
  }
  return p;
}

Tensor inject_embedding(Tape& tape, const Tensor& embedded, const PluginPack& pack) {
  if (pack.mode != PluginMode::Embedding) {
    throw ContractError("inject_embedding: pack is not in embedding mode");
  }
  if (pack.plugin_len == 0) return embedded;
  return tape.concat_rows(pack.emb_vectors, embedded);
}

std::pair<Tensor, Tensor> inject_layer(Tape& tape, const Tensor& k, const Tensor& v,
                                       const PluginPack& pack, int64_t layer) {
  if (pack.mode != PluginMode::Layer) {
    throw ContractError("inject_layer: pack is not in layer mode");
  }
  if (layer < 1 || layer > static_cast<int64_t>(pack.layer_kv.size())) {
    throw ContractError("inject_layer: layer index out of range");
  }
  if (pack.plugin_len == 0) return {k, v};
  const auto& kv = pack.layer_kv[static_cast<size_t>(layer - 1)];
  return {tape.concat_rows(kv.first, k), tape.concat_rows(kv.second, v)};
}

Tensor apply_labelword_deltas(Tape& tape, const ModelWeights& weights,
                              const PluginPack& pack) {
  if (pack.deltas.empty()) return weights.tok_emb;
  std::vector<int> ids;
  std::vector<Scalar> rows;
  for (const auto& [id, row] : pack.deltas) {
    if (id < 0 || id >= weights.config.vocab_size) {
      throw DataError("labelword delta id out of vocabulary");
    }
    ids.push_back(id);
    rows.insert(rows.end(), row.begin(), row.end());
  }
  Tensor deltas = Tensor::from({static_cast<int64_t>(ids.size()), weights.config.hidden},
                               std::move(rows));
  return tape.patch_rows(weights.tok_emb, ids, deltas);
}

Tensor apply_labelword_deltas(Tape& tape, const ModelWeights& weights,
                              const std::vector<int>& ids, const Tensor& trainable_deltas) {
  if (ids.empty()) return weights.tok_emb;
  return tape.patch_rows(weights.tok_emb, ids, trainable_deltas);
}

std::string serialize_plugin(const PluginPack& pack) {
  std::string payload;
  if (pack.mode == PluginMode::Embedding) {
    if (pack.plugin_len > 0) append_tensor(payload, pack.emb_vectors);
  } else {
    for (const auto& [k, v] : pack.layer_kv) {
      append_tensor(payload, k);
      append_tensor(payload, v);
    }
  }
  {
    std::ostringstream ps(std::ios::binary);
    write_pod<uint8_t>(ps, static_cast<uint8_t>(pack.label_map.schema));
    write_pod<uint32_t>(ps, static_cast<uint32_t>(pack.label_map.entries.size()));
    for (const auto& [label, id] : pack.label_map.entries) {
      write_string(ps, label);
      write_pod<uint32_t>(ps, static_cast<uint32_t>(id));
    }
    write_pod<uint32_t>(ps, static_cast<uint32_t>(pack.deltas.size()));
    for (const auto& [id, row] : pack.deltas) {
      write_pod<uint32_t>(ps, static_cast<uint32_t>(id));
      ps.write(reinterpret_cast<const char*>(row.data()),
               static_cast<std::streamsize>(sizeof(float) * row.size()));
    }
    write_string(ps, pack.meta.task);
    write_pod<uint64_t>(ps, pack.meta.train_seed);
    payload += ps.str();
  }

  std::ostringstream os(std::ios::binary);
  os.write(kPluginMagic, 4);
  write_pod<uint16_t>(os, kPluginVersion);
  write_pod<uint8_t>(os, static_cast<uint8_t>(pack.mode));
  write_pod<uint32_t>(os, static_cast<uint32_t>(pack.plugin_len));
  write_pod<uint32_t>(os, static_cast<uint32_t>(pack.layer_kv.size()));
  uint32_t dims = 0;
  if (pack.plugin_len > 0) {
    dims = static_cast<uint32_t>(pack.mode == PluginMode::Embedding
                                     ? pack.emb_vectors.cols()
                                     : pack.layer_kv.at(0).first.cols());
  } else if (!pack.deltas.empty()) {
    dims = static_cast<uint32_t>(pack.deltas[0].second.size());
  }
  write_pod<uint32_t>(os, dims);
  write_pod<uint64_t>(os, pack.meta.model_hash);
  write_pod<uint32_t>(os, crc32(payload.data(), payload.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  return os.str();
}

PluginPack deserialize_plugin(const std::string& bytes, const std::string& origin) {
  std::istringstream is(bytes, std::ios::binary);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::memcmp(magic, kPluginMagic, 4) != 0) {
    throw FormatError(FormatFault::BadMagic, origin + ": not a plugin file");
  }
  const uint16_t version = read_pod<uint16_t>(is);
  if (version != kPluginVersion) {
    throw FormatError(FormatFault::VersionMismatch,
                      origin + ": unsupported plugin version " + std::to_string(version));
  }
  PluginPack p;
  const uint8_t mode = read_pod<uint8_t>(is);
  if (mode > 1) throw FormatError(FormatFault::BadMagic, origin + ": bad mode byte");
  p.mode = static_cast<PluginMode>(mode);
  p.plugin_len = read_pod<uint32_t>(is);
  const uint32_t layer_count = read_pod<uint32_t>(is);
  const uint32_t dims = read_pod<uint32_t>(is);
  p.meta.model_hash = read_pod<uint64_t>(is);
  p.meta.format_version = version;
  const uint32_t stored_crc = read_pod<uint32_t>(is);

  std::string payload(bytes.begin() + is.tellg(), bytes.end());
  if (crc32(payload.data(), payload.size()) != stored_crc) {
    throw FormatError(FormatFault::ChecksumMismatch, origin + ": payload CRC mismatch");
  }

  std::istringstream ps(payload, std::ios::binary);
  auto read_tensor = [&](int64_t rows, int64_t cols) {
    std::vector<Scalar> data(static_cast<size_t>(rows * cols));
    for (auto& v : data) v = read_pod<float>(ps);
    return Tensor::from({rows, cols}, std::move(data));
  };
  if (p.mode == PluginMode::Embedding) {
    if (p.plugin_len > 0) p.emb_vectors = read_tensor(p.plugin_len, dims);
  } else {
    for (uint32_t j = 0; j < layer_count; ++j) {
      Tensor k = read_tensor(p.plugin_len, dims);
      Tensor v = read_tensor(p.plugin_len, dims);
      p.layer_kv.emplace_back(std::move(k), std::move(v));
    }
  }
  p.label_map.schema = static_cast<MapSchema>(read_pod<uint8_t>(ps));
  const uint32_t entries = read_pod<uint32_t>(ps);
  for (uint32_t i = 0; i < entries; ++i) {
    std::string label = read_string(ps);
    const uint32_t id = read_pod<uint32_t>(ps);
    p.label_map.entries[label] = static_cast<int>(id);
  }
  const uint32_t ndeltas = read_pod<uint32_t>(ps);
  for (uint32_t i = 0; i < ndeltas; ++i) {
    const uint32_t id = read_pod<uint32_t>(ps);
    std::vector<float> row(dims);
    read_bytes(ps, row.data(), sizeof(float) * row.size());
    p.deltas.emplace_back(static_cast<int>(id), std::move(row));
  }
  p.meta.task = read_string(ps);
  p.meta.train_seed = read_pod<uint64_t>(ps);
  p.label_map.validate();
  return p;
}

void save_plugin(const PluginPack& pack, const std::string& path) {
  write_file_atomic(path, serialize_plugin(pack));
}

PluginPack load_plugin(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read plugin file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return deserialize_plugin(ss.str(), path);
}

int64_t plugin_param_count(const PluginPack& pack, const ModelConfig& cfg) {
  int64_t n = 0;
  if (pack.mode == PluginMode::Embedding) {
    n += pack.plugin_len * cfg.hidden;
  } else {
    n += static_cast<int64_t>(pack.layer_kv.empty() ? cfg.layers
                                                    : static_cast<int64_t>(pack.layer_kv.size())) *
         2 * pack.plugin_len * cfg.hidden;
  }
  n += static_cast<int64_t>(pack.deltas.size()) * cfg.hidden;
  return n;
}

}  // namespace plugtag
