#include "plugtag/registry.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "plugtag/errors.hpp"

namespace plugtag {

namespace {
using Clock = std::chrono::steady_clock;
}

void Registry::register_pack(const std::string& task, PluginPack pack) {
  if (pack.meta.model_hash != 0 && pack.meta.model_hash != backbone_->hash()) {
    throw FormatError(FormatFault::HashMismatch,
                      "plugin for task '" + task + "' targets a different backbone");
  }
  packs_[task] = std::move(pack);
}

void Registry::activate(const std::string& task) {
  if (task == active_) return;
  if (!packs_.count(task)) throw DataError("activate: unknown task '" + task + "'");
  active_ = task;
}

const PluginPack& Registry::active_pack() const {
  if (active_.empty()) throw ContractError("registry: no active task");
  return packs_.at(active_);
}

std::vector<std::string> Registry::tag(const std::vector<std::string>& words,
                                       DecodeMode decode) const {
  return predict_tags(*backbone_, active_pack(), words, decode);
}

std::vector<StreamItem> build_stream(const std::map<std::string, Dataset>& datasets,
                                     int64_t samples_per_task, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<StreamItem> stream;
  for (const auto& [task, ds] : datasets) {
    if (ds.empty()) throw DataError("build_stream: empty dataset for task " + task);
    if (samples_per_task > static_cast<int64_t>(ds.size())) {
      throw DataError("build_stream: requested more samples than available for " + task);
    }
    std::vector<size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int64_t i = 0; i < samples_per_task; ++i) {
      stream.push_back({task, ds[idx[static_cast<size_t>(i)]]});
    }
  }
  std::shuffle(stream.begin(), stream.end(), rng);
  return stream;
}

SwitchTrace run_stream(const std::vector<StreamItem>& stream, const std::string& model_path,
                       const std::map<std::string, std::string>& plugin_paths,
                       SwitchRegime regime, const BenchOptions& opts) {
  if (stream.empty()) throw DataError("run_stream: empty stream");
  for (const auto& item : stream) {
    if (!plugin_paths.count(item.task)) {
      throw DataError("run_stream: no plugin for task '" + item.task + "'");
    }
  }

  SwitchTrace trace;
  trace.regime = regime;

  if (regime == SwitchRegime::PluginSwitch) {
    Model backbone = load_model(model_path);
    Registry reg(&backbone);
    for (const auto& [task, path] : plugin_paths) reg.register_pack(task, load_plugin(path));
    if (opts.warmup) {
      reg.activate(stream[0].task);
      (void)reg.tag(stream[0].sentence.words, opts.decode);
    }
    const uint64_t hash_before = backbone.hash();
    for (const auto& item : stream) {
      SampleRecord rec;
      rec.task = item.task;
      const bool need_switch = reg.active_task() != item.task;
      const auto t0 = Clock::now();
      if (need_switch) reg.activate(item.task);
      rec.tags = reg.tag(item.sentence.words, opts.decode);
      rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      rec.switched = need_switch;
      trace.switch_count += need_switch ? 1 : 0;
      trace.total_seconds += rec.seconds;
      trace.samples.push_back(std::move(rec));
    }
    if (backbone.weights.content_hash() != hash_before) {
      throw ContractError("run_stream: backbone changed during plugin-switch run");
    }
  } else {
    std::unique_ptr<Model> model;
    std::unique_ptr<PluginPack> pack;
    std::string loaded_task;
    auto reload = [&](const std::string& task) {
      // Release the previous task's parameters, then re-read from disk.
      model.reset();
      pack.reset();
      if (opts.synthetic_reload_seconds > 0.0) {
        std::this_thread::sleep_for(
            std::chrono::duration<double>(opts.synthetic_reload_seconds));
      }
      model = std::make_unique<Model>(load_model(model_path));
      pack = std::make_unique<PluginPack>(load_plugin(plugin_paths.at(task)));
      loaded_task = task;
    };
    if (opts.warmup) {
      reload(stream[0].task);
      (void)predict_tags(*model, *pack, stream[0].sentence.words, opts.decode);
    }
    for (const auto& item : stream) {
      SampleRecord rec;
      rec.task = item.task;
      const bool need_switch = loaded_task != item.task;
      const auto t0 = Clock::now();
      if (need_switch) reload(item.task);
      rec.tags = predict_tags(*model, *pack, item.sentence.words, opts.decode);
      rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      rec.switched = need_switch;
      trace.switch_count += need_switch ? 1 : 0;
      trace.total_seconds += rec.seconds;
      trace.samples.push_back(std::move(rec));
    }
  }
  return trace;
}

std::vector<RatioPoint> speed_ratio(const SwitchTrace& model_trace,
                                    const SwitchTrace& plugin_trace,
                                    const std::vector<int64_t>& sample_counts) {
  if (model_trace.samples.size() != plugin_trace.samples.size()) {
    throw DataError("speed_ratio: traces come from different streams");
  }
  std::set<std::string> tasks;
  for (size_t i = 0; i < model_trace.samples.size(); ++i) {
    if (model_trace.samples[i].task != plugin_trace.samples[i].task) {
      throw DataError("speed_ratio: traces come from different streams");
    }
    tasks.insert(model_trace.samples[i].task);
  }
  std::vector<RatioPoint> points;
  for (int64_t n : sample_counts) {
    RatioPoint p;
    p.n_per_task = n;
    // The first n stream records of every task.
    std::map<std::string, int64_t> taken;
    int64_t total = 0;
    for (size_t i = 0; i < model_trace.samples.size(); ++i) {
      auto& count = taken[model_trace.samples[i].task];
      if (count >= n) continue;
      ++count;
      ++total;
      p.model_switch_seconds += model_trace.samples[i].seconds;
      p.plugin_switch_seconds += plugin_trace.samples[i].seconds;
    }
    if (total != n * static_cast<int64_t>(tasks.size())) {
      throw DataError("speed_ratio: prefix longer than trace");
    }
    p.ratio = p.plugin_switch_seconds > 0.0
                  ? p.model_switch_seconds / p.plugin_switch_seconds
                  : 0.0;
    points.push_back(p);
  }
  return points;
}

std::string ratio_csv(const std::vector<RatioPoint>& points) {
  std::string out = "n_per_task,model_switch_s,plugin_switch_s,ratio\n";
  for (const auto& p : points) {
    out += std::to_string(p.n_per_task);
    out += ',';
    out += std::to_string(p.model_switch_seconds);
    out += ',';
    out += std::to_string(p.plugin_switch_seconds);
    out += ',';
    out += std::to_string(p.ratio);
    out += '\n';
  }
  return out;
}

}  // namespace plugtag
