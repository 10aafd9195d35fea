// plugtag: pretrain the shared backbone, pick label words, train task
// plugins, tag, evaluate and benchmark task switching.
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plugtag/data.hpp"
#include "plugtag/errors.hpp"
#include "plugtag/io.hpp"
#include "plugtag/labelwords.hpp"
#include "plugtag/model.hpp"
#include "plugtag/plugin.hpp"
#include "plugtag/registry.hpp"
#include "plugtag/training.hpp"

namespace {

constexpr const char* kVersion = "v0.1.0";

using KV = std::vector<std::pair<std::string, std::string>>;

std::string now_string() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Written atomically next to every output artifact as <artifact>.manifest.
void write_manifest(const std::string& artifact, const std::string& command, KV kv) {
  kv.emplace_back("command", command);
  kv.emplace_back("version", kVersion);
  kv.emplace_back("wall_clock", now_string());
  std::sort(kv.begin(), kv.end());
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  plugtag::write_file_atomic(artifact + ".manifest", out);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw plugtag::DataError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// One sentence per line, whitespace-separated tokens.
std::vector<std::vector<std::string>> read_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw plugtag::DataError("cannot open corpus " + path);
  std::vector<std::vector<std::string>> corpus;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> words;
    std::string w;
    while (ls >> w) words.push_back(w);
    if (!words.empty()) corpus.push_back(std::move(words));
  }
  if (corpus.empty()) throw plugtag::DataError("empty corpus " + path);
  return corpus;
}

plugtag::DecodeMode parse_decode(const std::string& s) {
  if (s == "exact") return plugtag::DecodeMode::Exact;
  if (s == "greedy") return plugtag::DecodeMode::Greedy;
  throw plugtag::UsageError("--decode must be 'exact' or 'greedy'");
}

std::map<std::string, std::string> parse_task_paths(const std::vector<std::string>& args,
                                                    const char* flag) {
  std::map<std::string, std::string> out;
  for (const auto& a : args) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == a.size()) {
      throw plugtag::UsageError(std::string(flag) + " expects task=path, got '" + a + "'");
    }
    out[a.substr(0, eq)] = a.substr(eq + 1);
  }
  return out;
}

std::vector<std::string> labels_of(const plugtag::Dataset& ds) {
  std::set<std::string> seen;
  for (const auto& s : ds)
    for (const auto& t : s.tags) seen.insert(t);
  return {seen.begin(), seen.end()};
}

int run(int argc, char** argv) {
  CLI::App app{"sequence tagging with a frozen backbone and per-task plugins"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  // key=value defaults, one [section] per subcommand; flags win over the file
  app.set_config("--config");

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "write the synthetic task datasets");
  std::string gen_out = "data";
  uint64_t gen_seed = 0;
  plugtag::SyntheticSizes sizes;
  gen->add_option("--out", gen_out, "output directory (must exist)");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--train-size", sizes.train);
  gen->add_option("--dev-size", sizes.dev);
  gen->add_option("--test-size", sizes.test);
  gen->callback([&] {
    const auto tasks = plugtag::gen_synthetic_tasks(gen_seed, sizes);
    for (const auto& t : tasks.tasks) {
      plugtag::write_conll(t.train, gen_out + "/" + t.name + ".train.conll");
      plugtag::write_conll(t.dev, gen_out + "/" + t.name + ".dev.conll");
      plugtag::write_conll(t.test, gen_out + "/" + t.name + ".test.conll");
    }
    std::string corpus;
    for (const auto& sent : tasks.corpus()) {
      for (size_t i = 0; i < sent.size(); ++i) corpus += (i ? " " : "") + sent[i];
      corpus += '\n';
    }
    const std::string corpus_path = gen_out + "/corpus.txt";
    plugtag::write_file_atomic(corpus_path, corpus);
    write_manifest(corpus_path, "gen-data",
                   {{"seed", std::to_string(gen_seed)},
                    {"train_size", std::to_string(sizes.train)},
                    {"dev_size", std::to_string(sizes.dev)},
                    {"test_size", std::to_string(sizes.test)},
                    {"out", gen_out}});
    std::cout << "wrote " << tasks.tasks.size() << " tasks to " << gen_out << "\n";
  });

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "masked-LM pretraining of the backbone");
  std::string pre_corpus, pre_out = "model.bin";
  plugtag::ModelConfig mcfg;
  plugtag::MlmConfig mlm;
  int min_freq = 1;
  pre->add_option("--corpus", pre_corpus, "one sentence per line")->required();
  pre->add_option("--out", pre_out);
  pre->add_option("--steps", mlm.steps);
  pre->add_option("--batch", mlm.batch_size);
  pre->add_option("--lr", mlm.lr);
  pre->add_option("--seed", mlm.seed);
  pre->add_option("--hidden", mcfg.hidden);
  pre->add_option("--layers", mcfg.layers);
  pre->add_option("--heads", mcfg.heads);
  pre->add_option("--ffn", mcfg.ffn_dim);
  pre->add_option("--max-len", mcfg.max_len);
  pre->add_option("--min-freq", min_freq);
  pre->callback([&] {
    const auto corpus = read_corpus(pre_corpus);
    plugtag::Model model;
    model.vocab = plugtag::Vocabulary::build(corpus, min_freq);
    mcfg.vocab_size = model.vocab.size();
    mcfg.head_dim = mcfg.hidden / mcfg.heads;
    mcfg.validate();
    model.weights = plugtag::init_weights(mcfg);
    const auto report = plugtag::pretrain_mlm(model, corpus, mlm);
    plugtag::save_model(model, pre_out);
    write_manifest(pre_out, "pretrain",
                   {{"corpus", pre_corpus},
                    {"steps", std::to_string(mlm.steps)},
                    {"batch", std::to_string(mlm.batch_size)},
                    {"lr", std::to_string(mlm.lr)},
                    {"seed", std::to_string(mlm.seed)},
                    {"vocab", std::to_string(mcfg.vocab_size)},
                    {"hidden", std::to_string(mcfg.hidden)},
                    {"layers", std::to_string(mcfg.layers)},
                    {"heads", std::to_string(mcfg.heads)},
                    {"model_hash", std::to_string(model.hash())}});
    std::cout << "final masked perplexity " << report.final_masked_perplexity << "\n"
              << "model hash " << model.hash() << "\n";
  });

  // ---- select-labelwords ----
  auto* sel = app.add_subcommand("select-labelwords", "pick one label word per label");
  std::string sel_model, sel_train, sel_out = "labelmap.tsv";
  int sel_k = 10;
  plugtag::SelectOptions sopts;
  sel->add_option("--model", sel_model)->required();
  sel->add_option("--train", sel_train, "CoNLL training file")->required();
  sel->add_option("--k", sel_k, "top-k candidates per position");
  sel->add_option("--out", sel_out);
  sel->add_flag("--merge-bi", sopts.merge_bi, "one shared word per category");
  sel->add_flag("!--no-masked", sopts.masked_scoring, "score positions unmasked");
  sel->callback([&] {
    const auto model = plugtag::load_model(sel_model);
    const auto train = plugtag::parse_conll(sel_train);
    const auto labels = labels_of(train);
    auto tables = plugtag::count_candidates(train, labels, model, sel_k, sopts);
    plugtag::filter_candidates(tables, model.vocab, sopts);
    const auto map = plugtag::select_label_words(train, labels, model, sel_k, sopts);
    plugtag::write_file_atomic(sel_out, plugtag::export_label_map(map, model.vocab));
    write_manifest(sel_out, "select-labelwords",
                   {{"model", sel_model},
                    {"train", sel_train},
                    {"k", std::to_string(sel_k)},
                    {"merge_bi", sopts.merge_bi ? "1" : "0"},
                    {"masked", sopts.masked_scoring ? "1" : "0"}});
    for (const auto& [label, table] : tables.by_label) {
      int64_t total = 0;
      for (const auto& [id, n] : table) total += n;
      std::cout << label << "\t" << table.size() << " candidates\t" << total
                << " total\t-> " << model.vocab.word(map.at(label)) << "\n";
    }
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train one task plugin on a frozen backbone");
  std::string tr_model, tr_train, tr_dev, tr_map, tr_out = "plugin.bin", tr_task = "task";
  std::string tr_mode = "layer", tr_decode = "exact";
  int64_t tr_lp = 8;
  plugtag::TrainConfig tcfg;
  tr->add_option("--model", tr_model)->required();
  tr->add_option("--train", tr_train)->required();
  tr->add_option("--dev", tr_dev)->required();
  tr->add_option("--map", tr_map, "label map file from select-labelwords")->required();
  tr->add_option("--out", tr_out);
  tr->add_option("--task", tr_task);
  tr->add_option("--mode", tr_mode)->check(CLI::IsMember({"embedding", "layer"}));
  tr->add_option("--plugin-len", tr_lp);
  tr->add_option("--epochs", tcfg.epochs);
  tr->add_option("--lr", tcfg.lr);
  tr->add_option("--batch", tcfg.batch_size);
  tr->add_option("--seed", tcfg.seed);
  tr->add_option("--decode", tr_decode)->check(CLI::IsMember({"exact", "greedy"}));
  tr->callback([&] {
    const auto model = plugtag::load_model(tr_model);
    const auto train = plugtag::parse_conll(tr_train);
    const auto dev = plugtag::parse_conll(tr_dev);
    const auto map = plugtag::parse_label_map(slurp(tr_map), model.vocab);
    tcfg.decode = parse_decode(tr_decode);
    const auto mode = tr_mode == "embedding" ? plugtag::PluginMode::Embedding
                                             : plugtag::PluginMode::Layer;
    const auto result = plugtag::train_plugin(train, dev, model, map, tcfg, mode, tr_lp, tr_task);
    plugtag::save_plugin(result.pack, tr_out);
    plugtag::write_file_atomic(tr_out + ".metrics.tsv", plugtag::metrics_log(result.log));
    write_manifest(tr_out, "train",
                   {{"model", tr_model},
                    {"train", tr_train},
                    {"dev", tr_dev},
                    {"map", tr_map},
                    {"task", tr_task},
                    {"mode", tr_mode},
                    {"plugin_len", std::to_string(tr_lp)},
                    {"epochs", std::to_string(tcfg.epochs)},
                    {"lr", std::to_string(tcfg.lr)},
                    {"batch", std::to_string(tcfg.batch_size)},
                    {"seed", std::to_string(tcfg.seed)},
                    {"decode", tr_decode}});
    const auto ratio = plugtag::trainable_param_ratio(model.weights.config, result.pack);
    std::cout << plugtag::metrics_log(result.log);
    std::cout << "task params " << ratio.task_params << " / backbone "
              << ratio.backbone_params << " = " << ratio.ratio() << "\n";
  });

  // ---- tag ----
  auto* tg = app.add_subcommand("tag", "tag sentences with a trained plugin");
  std::string tg_model, tg_plugin, tg_input, tg_text, tg_decode = "exact", tg_out;
  tg->add_option("--model", tg_model)->required();
  tg->add_option("--plugin", tg_plugin)->required();
  tg->add_option("--input", tg_input, "one sentence per line");
  tg->add_option("--text", tg_text, "a single sentence");
  tg->add_option("--out", tg_out, "write CoNLL instead of stdout");
  tg->add_option("--decode", tg_decode)->check(CLI::IsMember({"exact", "greedy"}));
  tg->callback([&] {
    if (tg_input.empty() == tg_text.empty()) {
      throw plugtag::UsageError("tag: give exactly one of --input / --text");
    }
    const auto model = plugtag::load_model(tg_model);
    const auto pack = plugtag::load_plugin(tg_plugin);
    const auto decode = parse_decode(tg_decode);
    std::vector<std::vector<std::string>> sentences;
    if (!tg_text.empty()) {
      std::istringstream ls(tg_text);
      std::vector<std::string> words;
      std::string w;
      while (ls >> w) words.push_back(w);
      sentences.push_back(words);
    } else {
      sentences = read_corpus(tg_input);
    }
    plugtag::Dataset tagged;
    for (const auto& words : sentences) {
      tagged.push_back({words, plugtag::predict_tags(model, pack, words, decode)});
    }
    if (!tg_out.empty()) {
      plugtag::write_conll(tagged, tg_out);
      write_manifest(tg_out, "tag",
                     {{"model", tg_model},
                      {"plugin", tg_plugin},
                      {"decode", tg_decode},
                      {"input", tg_input.empty() ? "<text>" : tg_input}});
    } else {
      for (const auto& s : tagged) {
        for (size_t i = 0; i < s.words.size(); ++i) {
          std::cout << s.words[i] << "\t" << s.tags[i] << "\n";
        }
        std::cout << "\n";
      }
    }
  });

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "span F1 / token accuracy against gold tags");
  std::string ev_model, ev_plugin, ev_gold, ev_pred, ev_decode = "exact";
  ev->add_option("--gold", ev_gold, "gold CoNLL file")->required();
  ev->add_option("--pred", ev_pred, "predicted CoNLL file (skip the model)");
  ev->add_option("--model", ev_model);
  ev->add_option("--plugin", ev_plugin);
  ev->add_option("--decode", ev_decode)->check(CLI::IsMember({"exact", "greedy"}));
  ev->callback([&] {
    const auto gold = plugtag::parse_conll(ev_gold);
    plugtag::Dataset pred;
    if (!ev_pred.empty()) {
      pred = plugtag::parse_conll(ev_pred);
    } else if (!ev_model.empty() && !ev_plugin.empty()) {
      const auto model = plugtag::load_model(ev_model);
      const auto pack = plugtag::load_plugin(ev_plugin);
      const auto decode = parse_decode(ev_decode);
      for (const auto& s : gold) {
        pred.push_back({s.words, plugtag::predict_tags(model, pack, s.words, decode)});
      }
    } else {
      throw plugtag::UsageError("eval: give --pred or both --model and --plugin");
    }
    bool bio = true;
    for (const auto& s : gold) {
      for (const auto& t : s.tags) {
        if (t != "O" && !(t.size() > 2 && (t[0] == 'B' || t[0] == 'I') && t[1] == '-')) {
          bio = false;
        }
      }
    }
    if (bio) {
      const auto score = plugtag::span_f1(pred, gold);
      std::cout << "precision " << score.precision << "\nrecall " << score.recall
                << "\nf1 " << score.f1 << "\n";
    } else {
      std::cout << "accuracy " << plugtag::token_accuracy(pred, gold) << "\n";
    }
  });

  // ---- bench-switch ----
  auto* be = app.add_subcommand("bench-switch",
                                "plugin-switch vs model-switch latency on a task stream");
  std::string be_model, be_out = "switch.csv", be_decode = "exact";
  std::vector<std::string> be_plugins, be_data;
  int64_t be_samples = 100;
  uint64_t be_seed = 0;
  double be_reload_ms = 100.0;
  std::string be_points = "25,50,75,100";
  be->add_option("--model", be_model)->required();
  be->add_option("--plugin", be_plugins, "task=plugin.bin (repeat per task)")->required();
  be->add_option("--data", be_data, "task=file.conll (repeat per task)")->required();
  be->add_option("--samples", be_samples, "samples per task");
  be->add_option("--seed", be_seed);
  be->add_option("--reload-ms", be_reload_ms, "synthetic model reload delay");
  be->add_option("--points", be_points, "comma-separated n-per-task prefixes");
  be->add_option("--out", be_out);
  be->add_option("--decode", be_decode)->check(CLI::IsMember({"exact", "greedy"}));
  be->callback([&] {
    const auto plugin_paths = parse_task_paths(be_plugins, "--plugin");
    const auto data_paths = parse_task_paths(be_data, "--data");
    std::map<std::string, plugtag::Dataset> datasets;
    for (const auto& [task, path] : data_paths) datasets[task] = plugtag::parse_conll(path);
    const auto stream = plugtag::build_stream(datasets, be_samples, be_seed);
    plugtag::BenchOptions opts;
    opts.decode = parse_decode(be_decode);
    opts.synthetic_reload_seconds = be_reload_ms / 1000.0;
    const auto plug = plugtag::run_stream(stream, be_model, plugin_paths,
                                          plugtag::SwitchRegime::PluginSwitch, opts);
    const auto full = plugtag::run_stream(stream, be_model, plugin_paths,
                                          plugtag::SwitchRegime::ModelSwitch, opts);
    for (size_t i = 0; i < stream.size(); ++i) {
      if (plug.samples[i].tags != full.samples[i].tags) {
        throw plugtag::ContractError("predictions differ between switching regimes");
      }
    }
    std::vector<int64_t> points;
    std::istringstream ps(be_points);
    std::string tok;
    while (std::getline(ps, tok, ',')) points.push_back(std::stoll(tok));
    const auto ratios = plugtag::speed_ratio(full, plug, points);
    const std::string csv = plugtag::ratio_csv(ratios);
    plugtag::write_file_atomic(be_out, csv);
    write_manifest(be_out, "bench-switch",
                   {{"model", be_model},
                    {"samples", std::to_string(be_samples)},
                    {"seed", std::to_string(be_seed)},
                    {"reload_ms", std::to_string(be_reload_ms)},
                    {"points", be_points},
                    {"decode", be_decode}});
    std::cout << csv;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // any parse failure is a usage error
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const plugtag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
