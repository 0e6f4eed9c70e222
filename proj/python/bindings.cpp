#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "taskforest/affinity.hpp"
#include "taskforest/cli.hpp"
#include "taskforest/config.hpp"
#include "taskforest/evaluation.hpp"
#include "taskforest/likelihood.hpp"
#include "taskforest/pruning.hpp"
#include "taskforest/query_log.hpp"
#include "taskforest/rose_tree.hpp"
#include "taskforest/version.hpp"

namespace py = pybind11;
using namespace taskforest;

namespace {

// Config entries arrive as a loose Python dict; values are stringified into
// the same key=value grammar the config file uses.
RunConfig config_from_dict(const py::dict& entries) {
  RunConfig config;
  for (const auto& item : entries) {
    std::string key = py::cast<std::string>(item.first);
    std::string value;
    if (py::isinstance<py::bool_>(item.second))
      value = py::cast<bool>(item.second) ? "true" : "false";
    else
      value = py::cast<std::string>(py::str(item.second));
    apply_config_entry(&config, key, value);
  }
  config.model.validate();
  return config;
}

TaskLabeling labeling_from_dict(const py::dict& d) {
  TaskLabeling labeling;
  for (const auto& item : d)
    labeling.assignment[py::cast<int64_t>(item.first)] =
        py::cast<std::string>(py::str(item.second));
  return labeling;
}

}  // namespace

PYBIND11_MODULE(_taskforest, m) {
  m.doc() = "Task/subtask hierarchy mining over search query logs";
  m.attr("__version__") = kVersion;

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("normalize_query", &normalize_text, py::arg("text"),
        "Lowercase, strip punctuation, split into terms");

  m.def("gamma_poisson_log_pmf", &gamma_poisson_log_pmf, py::arg("r"),
        py::arg("alpha"), py::arg("beta"),
        "Log marginal pmf of a count under the Gamma-Poisson model");

  m.def(
      "mixing_log_pi",
      [](int64_t n_children, double gamma) {
        LogMix mix = mixing_log_pi(n_children, gamma);
        return py::make_tuple(mix.log_pi, mix.log_one_minus_pi);
      },
      py::arg("n_children"), py::arg("gamma"),
      "(log pi, log(1-pi)) for a node with the given child count");

  m.def(
      "pairwise_f1",
      [](const py::dict& predicted, const py::dict& gold) {
        PairwiseScore s = pairwise_prf(labeling_from_dict(predicted),
                                       labeling_from_dict(gold));
        py::dict out;
        out["precision"] = s.precision;
        out["recall"] = s.recall;
        out["f1"] = s.f1;
        out["same_predicted"] = s.same_predicted;
        out["same_gold"] = s.same_gold;
        out["same_both"] = s.same_both;
        return out;
      },
      py::arg("predicted"), py::arg("gold"),
      "Pairwise clustering precision/recall/F1 of query_id -> label dicts");

  m.def(
      "ingest",
      [](const std::string& input, const std::string& out,
         double timeout_mins, bool drop_stopwords) {
        ParseReport report;
        LogCorpus corpus = parse_log_file(input, &report, drop_stopwords);
        if (corpus.queries.empty())
          throw DataError("no usable query rows in " + input);
        sessionize(corpus, static_cast<int64_t>(timeout_mins * 60.0));
        RunConfig config;
        config.corpus = input;
        config.timeout_mins = timeout_mins;
        config.drop_stopwords = drop_stopwords;
        write_corpus_file(corpus, out, artifact_header(config));
        py::dict r;
        r["rows"] = report.rows;
        r["records"] = report.records;
        r["dropped_empty"] = report.dropped_empty;
        r["malformed"] = report.malformed;
        return r;
      },
      py::arg("input"), py::arg("out"), py::arg("timeout_mins") = 30.0,
      py::arg("drop_stopwords") = false,
      "Parse a raw log, sessionize, and write a normalized corpus file");

  m.def(
      "build",
      [](const std::string& corpus_path, const std::string& out,
         const py::dict& config_entries) {
        RunConfig config = config_from_dict(config_entries);
        LogCorpus corpus = read_corpus_file(corpus_path);
        EmbeddingTable table;
        bool have = false;
        if (!config.embeddings.empty()) {
          table = EmbeddingTable::load(config.embeddings);
          have = true;
        }
        BuildOptions options;
        options.model = config.model;
        options.blocking = config.blocking;
        options.threads = config.threads;
        BuildReport report;
        TaskForest forest =
            build_hierarchy(corpus, have ? &table : nullptr, options, &report);
        write_forest_file(forest, out, artifact_header(config));
        py::dict r;
        r["merges"] = report.merges;
        r["candidates_scored"] = report.candidates_scored;
        r["initial_pairs"] = report.initial_pairs;
        r["roots"] = forest.roots;
        return r;
      },
      py::arg("corpus"), py::arg("out"), py::arg("config") = py::dict(),
      "Agglomerate a normalized corpus into a task/subtask forest file");

  m.def(
      "prune",
      [](const std::string& forest_path, const std::string& corpus_path,
         const std::string& out, double threshold,
         const std::string& reference_corpus, bool literal_pmi) {
        RunConfig config;
        config.threshold = threshold;
        config.literal_pmi = literal_pmi;
        config.reference_corpus = reference_corpus;
        TaskForest forest = read_forest_file(forest_path);
        LogCorpus corpus = read_corpus_file(corpus_path);
        LogCorpus reference_storage;
        const LogCorpus* reference = &corpus;
        if (!reference_corpus.empty()) {
          reference_storage = read_corpus_file(reference_corpus);
          reference = &reference_storage;
        }
        CooccurrenceStats stats = build_cooccurrence(*reference);
        TaskForest pruned =
            prune(forest, corpus, stats, threshold, literal_pmi);
        write_forest_file(pruned, out, artifact_header(config));
        py::dict r;
        int64_t leaves = 0;
        for (int64_t id : pruned.leaf_nodes()) leaves += id >= 0;
        r["leaf_tasks"] = leaves;
        r["roots"] = pruned.roots;
        return r;
      },
      py::arg("forest"), py::arg("corpus"), py::arg("out"),
      py::arg("threshold") = 0.8, py::arg("reference_corpus") = "",
      py::arg("literal_pmi") = false,
      "Flatten coherent subtrees into atomic task nodes");

  m.def(
      "evaluate",
      [](const std::string& forest_path, const std::string& gold_path) {
        TaskForest forest = read_forest_file(forest_path);
        TaskLabeling gold = load_gold_file(gold_path);
        TaskLabeling full = leaf_labeling(forest);
        TaskLabeling predicted;
        for (const auto& [qid, label] : gold.assignment) {
          auto it = full.assignment.find(qid);
          if (it == full.assignment.end())
            throw DataError("gold query " + std::to_string(qid) +
                            " is not in the forest");
          predicted.assignment.emplace(qid, it->second);
        }
        PairwiseScore s = pairwise_prf(predicted, gold);
        py::dict out;
        out["precision"] = s.precision;
        out["recall"] = s.recall;
        out["f1"] = s.f1;
        out["queries"] = static_cast<int64_t>(gold.assignment.size());
        return out;
      },
      py::arg("forest"), py::arg("gold"),
      "Leaf-level pairwise F1 of a forest against a gold label file");

  m.def(
      "predict_terms",
      [](const std::string& forest_path, const std::string& sessions_path,
         const std::vector<double>& fractions, int64_t k) {
        TaskForest forest = read_forest_file(forest_path);
        LogCorpus sessions = read_corpus_file(sessions_path);
        py::list out;
        for (const TermPredictionResult& r :
             term_prediction_eval(forest, sessions, fractions, k)) {
          py::dict d;
          d["fraction"] = r.fraction;
          d["mean_matched"] = r.mean_matched;
          d["sessions_evaluated"] = r.sessions_evaluated;
          d["sessions_skipped"] = r.sessions_skipped;
          out.append(d);
        }
        return out;
      },
      py::arg("forest"), py::arg("sessions"),
      py::arg("fractions") = std::vector<double>{0.2, 0.4, 0.6, 0.8},
      py::arg("k") = 10,
      "Held-out term prediction over session prefixes");
}
