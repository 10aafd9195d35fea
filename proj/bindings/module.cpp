#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plugtag/data.hpp"
#include "plugtag/labelwords.hpp"
#include "plugtag/model.hpp"
#include "plugtag/plugin.hpp"
#include "plugtag/training.hpp"

namespace py = pybind11;
using namespace plugtag;

namespace {

DecodeMode decode_mode(const std::string& s) {
  if (s == "exact") return DecodeMode::Exact;
  if (s == "greedy") return DecodeMode::Greedy;
  throw UsageError("decode must be 'exact' or 'greedy'");
}

PluginMode plugin_mode(const std::string& s) {
  if (s == "embedding") return PluginMode::Embedding;
  if (s == "layer") return PluginMode::Layer;
  throw UsageError("mode must be 'embedding' or 'layer'");
}

}  // namespace

PYBIND11_MODULE(_plugtag, m) {
  m.doc() = "frozen-backbone sequence tagging with per-task plugin vectors";

  py::register_exception<UsageError>(m, "UsageError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<FormatError>(m, "FormatError");

  py::class_<TaggedSentence>(m, "TaggedSentence")
      .def(py::init<>())
      .def(py::init([](std::vector<std::string> words, std::vector<std::string> tags) {
             return TaggedSentence{std::move(words), std::move(tags)};
           }),
           py::arg("words"), py::arg("tags"))
      .def_readwrite("words", &TaggedSentence::words)
      .def_readwrite("tags", &TaggedSentence::tags)
      .def("__eq__", [](const TaggedSentence& a, const TaggedSentence& b) { return a == b; });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("hidden", &ModelConfig::hidden)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("head_dim", &ModelConfig::head_dim)
      .def_readwrite("max_len", &ModelConfig::max_len)
      .def_readwrite("ffn_dim", &ModelConfig::ffn_dim)
      .def_readwrite("seed", &ModelConfig::seed);

  py::class_<Model>(m, "Model")
      .def_property_readonly("hash", [](const Model& m_) { return m_.hash(); })
      .def_property_readonly("config", [](const Model& m_) { return m_.weights.config; })
      .def_property_readonly("vocab_size", [](const Model& m_) { return m_.vocab.size(); })
      .def("word_id", [](const Model& m_, const std::string& w) { return m_.vocab.id(w); })
      .def("word", [](const Model& m_, int id) { return m_.vocab.word(id); })
      .def("param_count", [](const Model& m_) { return m_.weights.param_count(); });

  py::class_<LabelMap>(m, "LabelMap")
      .def_property_readonly("entries", [](const LabelMap& lm) { return lm.entries; })
      .def_property_readonly(
          "schema", [](const LabelMap& lm) {
            return lm.schema == MapSchema::BIO2 ? std::string("bio2") : std::string("flat");
          });

  py::class_<PluginPack>(m, "PluginPack")
      .def_property_readonly("plugin_len", [](const PluginPack& p) { return p.plugin_len; })
      .def_property_readonly(
          "mode", [](const PluginPack& p) {
            return p.mode == PluginMode::Embedding ? std::string("embedding")
                                                   : std::string("layer");
          })
      .def_property_readonly("task", [](const PluginPack& p) { return p.meta.task; })
      .def_property_readonly("label_map", [](const PluginPack& p) { return p.label_map; });

  py::class_<SyntheticTask>(m, "SyntheticTask")
      .def_readonly("name", &SyntheticTask::name)
      .def_readonly("bio2", &SyntheticTask::bio2)
      .def_readonly("label_set", &SyntheticTask::label_set)
      .def_readonly("train", &SyntheticTask::train)
      .def_readonly("dev", &SyntheticTask::dev)
      .def_readonly("test", &SyntheticTask::test);

  m.def(
      "gen_synthetic_tasks",
      [](uint64_t seed, int64_t train, int64_t dev, int64_t test) {
        SyntheticSizes sizes{train, dev, test};
        return gen_synthetic_tasks(seed, sizes).tasks;
      },
      py::arg("seed") = 0, py::arg("train") = 2000, py::arg("dev") = 300,
      py::arg("test") = 300);

  m.def(
      "pretrain",
      [](const std::vector<std::vector<std::string>>& corpus, ModelConfig cfg,
         int64_t steps, uint64_t seed) {
        Model model;
        model.vocab = Vocabulary::build(corpus);
        cfg.vocab_size = model.vocab.size();
        cfg.validate();
        model.weights = init_weights(cfg);
        MlmConfig mlm;
        mlm.steps = steps;
        mlm.seed = seed;
        pretrain_mlm(model, corpus, mlm);
        return model;
      },
      py::arg("corpus"), py::arg("config") = ModelConfig{}, py::arg("steps") = 4000,
      py::arg("seed") = 0);

  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));
  m.def("save_plugin", &save_plugin, py::arg("pack"), py::arg("path"));
  m.def("load_plugin", &load_plugin, py::arg("path"));

  m.def(
      "select_label_words",
      [](const Dataset& train, const std::vector<std::string>& labels, const Model& model,
         int k, bool merge_bi, bool masked) {
        SelectOptions opts;
        opts.merge_bi = merge_bi;
        opts.masked_scoring = masked;
        return select_label_words(train, labels, model, k, opts);
      },
      py::arg("train"), py::arg("labels"), py::arg("model"), py::arg("k") = 10,
      py::arg("merge_bi") = false, py::arg("masked") = true);

  m.def(
      "train_plugin",
      [](const Dataset& train, const Dataset& dev, const Model& model, const LabelMap& map,
         const std::string& mode, int64_t plugin_len, int64_t epochs, double lr,
         uint64_t seed, const std::string& task) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.lr = lr;
        cfg.seed = seed;
        auto result = train_plugin(train, dev, model, map, cfg, plugin_mode(mode),
                                   plugin_len, task);
        std::vector<std::tuple<int64_t, double, double>> log;
        for (const auto& e : result.log) log.emplace_back(e.epoch, e.mean_loss, e.dev_metric);
        return py::make_tuple(result.pack, log);
      },
      py::arg("train"), py::arg("dev"), py::arg("model"), py::arg("map"),
      py::arg("mode") = "layer", py::arg("plugin_len") = 8, py::arg("epochs") = 10,
      py::arg("lr") = 1e-3f, py::arg("seed") = 0, py::arg("task") = "task");

  m.def(
      "predict_tags",
      [](const Model& model, const PluginPack& pack, const std::vector<std::string>& words,
         const std::string& decode) {
        return predict_tags(model, pack, words, decode_mode(decode));
      },
      py::arg("model"), py::arg("plugin"), py::arg("words"), py::arg("decode") = "exact");

  m.def("decode_exact", &decode_exact, py::arg("predicted"), py::arg("map"));
  m.def("decode_greedy", &decode_greedy, py::arg("predicted"), py::arg("map"));
  m.def("relabel_targets", &relabel_targets, py::arg("token_ids"), py::arg("tags"),
        py::arg("map"));
  m.def("to_bio2", &to_bio2, py::arg("tags"));

  m.def(
      "span_f1",
      [](const std::vector<std::vector<std::string>>& pred,
         const std::vector<std::vector<std::string>>& gold) {
        const auto s = span_f1(pred, gold);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("predicted"), py::arg("gold"));
  m.def(
      "token_accuracy",
      [](const std::vector<std::vector<std::string>>& pred,
         const std::vector<std::vector<std::string>>& gold) {
        return token_accuracy(pred, gold);
      },
      py::arg("predicted"), py::arg("gold"));

  m.def(
      "param_ratio",
      [](const Model& model, const PluginPack& pack) {
        const auto r = trainable_param_ratio(model.weights.config, pack);
        return py::make_tuple(r.task_params, r.backbone_params, r.ratio());
      },
      py::arg("model"), py::arg("plugin"));
}
