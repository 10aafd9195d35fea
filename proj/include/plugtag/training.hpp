#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plugtag/data.hpp"
#include "plugtag/labelwords.hpp"
#include "plugtag/model.hpp"
#include "plugtag/plugin.hpp"
#include "plugtag/tensor.hpp"

namespace plugtag {

struct TrainConfig {
  double lr = 1e-3;
  int64_t batch_size = 16;
  int64_t epochs = 10;
  int64_t max_seq_len = 128;  // capped by the model's max_len
  uint64_t seed = 0;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  bool include_o_positions = true;  // O positions predict themselves in the loss
  DecodeMode decode = DecodeMode::Exact;

  void validate() const {
    if (lr <= 0.0f || batch_size <= 0 || epochs < 0) {
      throw ContractError("TrainConfig: lr/batch/epochs must be positive");
    }
  }
};

struct EpochStats {
  int64_t epoch = 0;
  double mean_loss = 0.0;
  double dev_metric = 0.0;  // span-F1, or token accuracy for flat tag sets
  double seconds = 0.0;
};

std::string metrics_log(const std::vector<EpochStats>& log);  // TSV, one line per epoch

// Mean over the batch of the summed per-position negative log likelihood of
// the relabeled targets under the plugin-injected LM head.
Tensor compute_loss(Tape& tape, const Model& model,
                    const std::vector<TaggedSentence>& batch, const PluginPack& pack,
                    const LabelMap& map, const Tensor* emb_table = nullptr,
                    bool include_o_positions = true);

struct TrainResult {
  PluginPack pack;
  std::vector<EpochStats> log;
};

// Frozen-backbone training of {Theta_P} and the label-word embedding deltas.
// Every backbone weight is bit-identical before and after (hash-checked).
TrainResult train_plugin(const Dataset& train, const Dataset& dev, const Model& model,
                         const LabelMap& map, const TrainConfig& cfg, PluginMode mode,
                         int64_t plugin_len, const std::string& task_name);

// Plug-classifier baseline: plugin vectors plus a linear head over the label
// set instead of the LM head.
struct ClassifierResult {
  PluginPack pack;  // empty label map; deltas unused
  Tensor w, b;      // hidden x |L|, |L|
  std::vector<std::string> labels;
  std::vector<EpochStats> log;
};

Tensor classifier_loss(Tape& tape, const Model& model,
                       const std::vector<TaggedSentence>& batch, const PluginPack& pack,
                       const Tensor& w, const Tensor& b,
                       const std::vector<std::string>& labels);

ClassifierResult train_classifier(const Dataset& train, const Dataset& dev,
                                  const Model& model, const std::vector<std::string>& labels,
                                  const TrainConfig& cfg, PluginMode mode,
                                  int64_t plugin_len);

std::vector<std::string> classifier_tags(const Model& model, const ClassifierResult& clf,
                                         const std::vector<std::string>& words);

// (plugin + delta parameters) / backbone parameters; exact integer counts.
struct ParamRatio {
  int64_t task_params = 0;
  int64_t backbone_params = 0;
  double ratio() const {
    return backbone_params > 0
               ? static_cast<double>(task_params) / static_cast<double>(backbone_params)
               : 0.0;
  }
};

ParamRatio trainable_param_ratio(const ModelConfig& cfg, const PluginPack& pack);

// Span F1 for BIO2 tag sets, token accuracy otherwise.
double evaluate_tagging(const Model& model, const PluginPack& pack, const Dataset& gold,
                        DecodeMode decode);

}  // namespace plugtag
