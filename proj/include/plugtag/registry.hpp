#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "plugtag/data.hpp"
#include "plugtag/model.hpp"
#include "plugtag/plugin.hpp"

namespace plugtag {

// Holds one shared read-only backbone and the loaded plugin packs; task
// switching swaps only the active pack reference.
class Registry {
 public:
  explicit Registry(const Model* backbone) : backbone_(backbone) {}

  void register_pack(const std::string& task, PluginPack pack);
  // No-op when the task is already active. Never touches the backbone.
  void activate(const std::string& task);
  const std::string& active_task() const { return active_; }
  const PluginPack& active_pack() const;
  const Model& backbone() const { return *backbone_; }
  bool has(const std::string& task) const { return packs_.count(task) > 0; }

  std::vector<std::string> tag(const std::vector<std::string>& words,
                               DecodeMode decode = DecodeMode::Exact) const;

 private:
  const Model* backbone_;
  std::map<std::string, PluginPack> packs_;
  std::string active_;
};

struct StreamItem {
  std::string task;
  TaggedSentence sentence;
};

// Uniform sampling without replacement per task, then a global shuffle.
std::vector<StreamItem> build_stream(const std::map<std::string, Dataset>& datasets,
                                     int64_t samples_per_task, uint64_t seed);

enum class SwitchRegime { PluginSwitch, ModelSwitch };

struct SampleRecord {
  std::string task;
  bool switched = false;
  double seconds = 0.0;
  std::vector<std::string> tags;
};

struct SwitchTrace {
  SwitchRegime regime = SwitchRegime::PluginSwitch;
  std::vector<SampleRecord> samples;
  int64_t switch_count = 0;
  double total_seconds = 0.0;
};

struct BenchOptions {
  // ModelSwitch reload: real checkpoint re-read plus an optional fixed
  // synthetic delay standing in for large-model reload cost.
  double synthetic_reload_seconds = 0.0;
  DecodeMode decode = DecodeMode::Exact;
  bool warmup = true;  // one untimed pass over the first sample
};

// PluginSwitch: task changes swap the active pack in memory.
// ModelSwitch: task changes drop the backbone and re-read `model_path`.
// Tagging outputs are identical across regimes.
SwitchTrace run_stream(const std::vector<StreamItem>& stream, const std::string& model_path,
                       const std::map<std::string, std::string>& plugin_paths,
                       SwitchRegime regime, const BenchOptions& opts = {});

struct RatioPoint {
  int64_t n_per_task = 0;
  double model_switch_seconds = 0.0;
  double plugin_switch_seconds = 0.0;
  double ratio = 0.0;
};

// ratio(n): total ModelSwitch time over the first n-per-task prefix divided
// by the PluginSwitch time over the same prefix.
std::vector<RatioPoint> speed_ratio(const SwitchTrace& model_trace,
                                    const SwitchTrace& plugin_trace,
                                    const std::vector<int64_t>& sample_counts);

// CSV with header "n_per_task,model_switch_s,plugin_switch_s,ratio".
std::string ratio_csv(const std::vector<RatioPoint>& points);

}  // namespace plugtag
