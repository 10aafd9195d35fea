#pragma once

#include <cstdint>

#include "plugtag/errors.hpp"

namespace plugtag {

// Backbone topology. Defaults are the desk-scale setup used across the test
// suite; vocab_size is normally overwritten from the built vocabulary.
struct ModelConfig {
  int64_t vocab_size = 2000;
  int64_t hidden = 64;
  int64_t layers = 4;
  int64_t heads = 4;
  int64_t head_dim = 16;
  int64_t max_len = 64;
  int64_t ffn_dim = 256;
  uint64_t seed = 0;

  void validate() const {
    if (vocab_size <= 0 || hidden <= 0 || layers <= 0 || heads <= 0 ||
        head_dim <= 0 || ffn_dim <= 0) {
      throw ContractError("ModelConfig: all counts must be positive");
    }
    if (max_len < 2) throw ContractError("ModelConfig: max_len must be >= 2");
    if (heads * head_dim != hidden) {
      throw ContractError("ModelConfig: heads * head_dim must equal hidden");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace plugtag
