#include "taskforest/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "taskforest/affinity.hpp"
#include "taskforest/evaluation.hpp"
#include "taskforest/pruning.hpp"
#include "taskforest/query_log.hpp"
#include "taskforest/rose_tree.hpp"
#include "taskforest/version.hpp"

namespace taskforest {

namespace {

namespace fs = std::filesystem;

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Defaults <- config file (flag, else TASKFOREST_CONFIG) <- explicit flags.
RunConfig effective_config(const std::string& config_flag,
                           const Overrides& overrides) {
  RunConfig config;
  std::string path = config_flag;
  if (path.empty()) {
    const char* env = std::getenv("TASKFOREST_CONFIG");
    if (env && *env) path = env;
  }
  if (!path.empty()) config = load_run_config(path);
  for (const auto& [key, value] : overrides)
    apply_config_entry(&config, key, value);
  config.model.validate();
  return config;
}

// Loads embeddings when configured; a missing file downgrades to a warning
// because the model is defined to fall back to zero embedding affinity.
bool maybe_load_embeddings(const RunConfig& config, EmbeddingTable* table,
                           std::ostream& err) {
  if (config.embeddings.empty()) return false;
  if (!fs::exists(config.embeddings)) {
    err << "warning: embeddings file '" << config.embeddings
        << "' not found; embedding affinity is 0 for this run\n";
    return false;
  }
  *table = EmbeddingTable::load(config.embeddings);
  return true;
}

CooccurrenceStats cooccurrence_with_cache(const LogCorpus& reference,
                                          const std::string& cache_path,
                                          std::ostream& err) {
  uint64_t hash = corpus_content_hash(reference);
  CooccurrenceStats stats;
  if (load_cooccurrence(cache_path, hash, &stats)) return stats;
  stats = build_cooccurrence(reference);
  save_cooccurrence(stats, hash, cache_path);
  (void)err;
  return stats;
}

void do_ingest(const RunConfig& config, const std::string& input,
               const std::string& out_path, std::ostream& out,
               std::ostream& err) {
  ParseReport report;
  LogCorpus corpus = parse_log_file(input, &report, config.drop_stopwords);
  if (corpus.queries.empty())
    throw DataError("no usable query rows in " + input);
  sessionize(corpus,
             static_cast<int64_t>(std::llround(config.timeout_mins * 60.0)));
  int64_t n_sessions = 0;
  for (const Query& q : corpus.queries)
    n_sessions = std::max(n_sessions, q.session_id + 1);
  write_corpus_file(corpus, out_path, artifact_header(config));
  out << "rows " << report.rows << "\nrecords " << report.records
      << "\nsessions " << n_sessions << "\ndropped_empty "
      << report.dropped_empty << "\nmalformed " << report.malformed << "\n";
  (void)err;
}

TaskForest do_build(const RunConfig& config, const LogCorpus& corpus,
                    std::ostream& err) {
  EmbeddingTable table;
  bool have_embeddings = maybe_load_embeddings(config, &table, err);
  BuildOptions options;
  options.model = config.model;
  options.blocking = config.blocking;
  options.threads = config.threads;
  options.log = &err;
  BuildReport report;
  auto start = std::chrono::steady_clock::now();
  TaskForest forest = build_hierarchy(
      corpus, have_embeddings ? &table : nullptr, options, &report);
  auto elapsed = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  err << "built " << forest.roots.size() << " tree(s) over " << corpus.size()
      << " queries: " << report.merges << " merges, "
      << report.candidates_scored << " candidates ("
      << report.initial_pairs << " initial pairs), " << elapsed << "s\n";
  return forest;
}

TaskForest do_prune(const RunConfig& config, const TaskForest& forest,
                    const LogCorpus& corpus, const std::string& cache_path,
                    std::ostream& err) {
  LogCorpus reference_storage;
  const LogCorpus* reference = &corpus;
  if (!config.reference_corpus.empty()) {
    reference_storage = read_corpus_file(config.reference_corpus);
    reference = &reference_storage;
  }
  CooccurrenceStats stats =
      cooccurrence_with_cache(*reference, cache_path, err);
  return prune(forest, corpus, stats, config.threshold, config.literal_pmi);
}

void do_eval(const RunConfig& config, const TaskForest& forest,
             const TaskLabeling& gold, const std::string& results_path,
             std::ostream& out) {
  TaskLabeling full = leaf_labeling(forest);
  TaskLabeling predicted;
  for (const auto& [qid, label] : gold.assignment) {
    auto it = full.assignment.find(qid);
    if (it == full.assignment.end())
      throw DataError("gold query " + std::to_string(qid) +
                      " is not in the forest");
    predicted.assignment.emplace(qid, it->second);
  }
  PairwiseScore score = pairwise_prf(predicted, gold);
  out << "queries " << gold.assignment.size() << "\nprecision "
      << score.precision << "\nrecall " << score.recall << "\nf1 " << score.f1
      << "\n";
  if (!results_path.empty()) {
    std::ofstream f(results_path, std::ios::binary);
    if (!f) throw DataError("cannot write file: " + results_path);
    f << "# " << artifact_header(config) << "\n";
    f << "queries\t" << gold.assignment.size() << "\n";
    f << "same_predicted\t" << score.same_predicted << "\n";
    f << "same_gold\t" << score.same_gold << "\n";
    f << "same_both\t" << score.same_both << "\n";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", score.precision);
    f << "precision\t" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", score.recall);
    f << "recall\t" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", score.f1);
    f << "f1\t" << buf << "\n";
  }
}

void do_predict(const RunConfig& config, const TaskForest& forest,
                const LogCorpus& sessions, const std::string& results_path,
                std::ostream& out) {
  std::vector<TermPredictionResult> results =
      term_prediction_eval(forest, sessions, config.fractions, config.k);
  std::ofstream f;
  if (!results_path.empty()) {
    f.open(results_path, std::ios::binary);
    if (!f) throw DataError("cannot write file: " + results_path);
    f << "# " << artifact_header(config) << "\n";
  }
  for (const TermPredictionResult& r : results) {
    out << "fraction " << r.fraction << ": mean matched terms "
        << r.mean_matched << " over " << r.sessions_evaluated
        << " sessions (" << r.sessions_skipped << " too short)\n";
    if (f.is_open()) {
      char frac[40], mean[40];
      std::snprintf(frac, sizeof(frac), "%g", r.fraction);
      std::snprintf(mean, sizeof(mean), "%.17g", r.mean_matched);
      f << "mean_matched@" << frac << "\t" << mean << "\n";
      f << "sessions_evaluated@" << frac << "\t" << r.sessions_evaluated
        << "\n";
      f << "sessions_skipped@" << frac << "\t" << r.sessions_skipped << "\n";
    }
  }
}

}  // namespace

void run_pipeline(const RunConfig& config, std::ostream& out,
                  std::ostream& err) {
  if (config.corpus.empty())
    throw DataError("pipeline: config sets no corpus path");
  fs::create_directories(config.out_dir);
  fs::path dir(config.out_dir);
  std::string stage = "ingest";
  try {
    err << "[1/6] ingest " << config.corpus << "\n";
    do_ingest(config, config.corpus, (dir / "corpus.tsv").string(), out, err);
    LogCorpus corpus = read_corpus_file((dir / "corpus.tsv").string());

    stage = "build";
    err << "[2/6] build hierarchy\n";
    TaskForest forest = do_build(config, corpus, err);
    write_forest_file(forest, (dir / "forest.tsv").string(),
                      artifact_header(config));

    stage = "prune";
    err << "[3/6] prune (threshold " << config.threshold << ")\n";
    TaskForest pruned =
        do_prune(config, forest, corpus,
                 (dir / "cooccurrence.cache").string(), err);
    write_forest_file(pruned, (dir / "forest_pruned.tsv").string(),
                      artifact_header(config));

    stage = "export-dot";
    err << "[4/6] export DOT\n";
    {
      std::ofstream f(dir / "forest.dot", std::ios::binary);
      if (!f) throw DataError("cannot write forest.dot");
      write_dot(pruned, &corpus, f, artifact_header(config));
    }

    stage = "eval";
    if (!config.gold.empty()) {
      err << "[5/6] eval vs " << config.gold << "\n";
      do_eval(config, pruned, load_gold_file(config.gold),
              (dir / "eval.tsv").string(), out);
    } else {
      err << "[5/6] eval skipped (no gold labels configured)\n";
    }

    stage = "predict-terms";
    err << "[6/6] term prediction\n";
    do_predict(config, pruned, corpus, (dir / "prediction.tsv").string(),
               out);
  } catch (const DataError& e) {
    throw DataError("stage " + stage + ": " + e.what() +
                    " (earlier artifacts in " + config.out_dir +
                    " may be incomplete)");
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"taskforest: mine task/subtask hierarchies from search logs"};
  app.require_subcommand(1);

  // Shared state; each subcommand registers only the flags it honors.
  std::string config_path, input, corpus_path, forest_path, out_path;
  std::string gold_path, sessions_path;
  Overrides overrides;

  // Registers a flag that lands in RunConfig under `key`, so the config file
  // and the command line share one parser and one validation path.
  auto config_opt = [&overrides](CLI::App* sub, const std::string& flag,
                                 const std::string& key,
                                 const std::string& desc) {
    sub->add_option_function<std::string>(
           flag,
           [&overrides, key](const std::string& v) {
             overrides.emplace_back(key, v);
           },
           desc)
        ->type_name("VALUE");
  };
  auto config_flag = [&overrides](CLI::App* sub, const std::string& flag,
                                  const std::string& key,
                                  const std::string& value,
                                  const std::string& desc) {
    sub->add_flag_callback(
        flag, [&overrides, key, value]() { overrides.emplace_back(key, value); },
        desc);
  };
  auto add_config_path = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "key=value config file (default: $TASKFOREST_CONFIG)");
  };

  CLI::App* ingest = app.add_subcommand(
      "ingest", "Parse a raw search log into a normalized, sessionized corpus");
  ingest->add_option("--input", input, "raw AOL-style log (.tsv or .tsv.gz)")
      ->required();
  ingest->add_option("--out", out_path, "normalized corpus file to write")
      ->required();
  config_opt(ingest, "--timeout-mins", "timeout_mins",
             "session inactivity timeout in minutes");
  config_flag(ingest, "--drop-stopwords", "drop_stopwords", "true",
              "drop stopword terms during normalization");
  add_config_path(ingest);

  CLI::App* build = app.add_subcommand(
      "build", "Agglomerate a corpus into a task/subtask forest");
  build->add_option("--corpus", corpus_path, "normalized corpus file")
      ->required();
  build->add_option("--out", out_path, "forest file to write")->required();
  build->add_flag_callback(
      "--no-blocking",
      [&overrides]() { overrides.emplace_back("blocking", "false"); },
      "score every query pair instead of key-sharing pairs only");
  config_opt(build, "--embeddings", "embeddings",
             "pre-trained term vectors (term v1 ... vd per line)");
  config_opt(build, "--threads", "threads", "worker threads (0 = all cores)");
  config_opt(build, "--gamma", "gamma", "mixing prior in (0,1)");
  config_opt(build, "--alpha-term", "alpha.term", "term-class Gamma shape");
  config_opt(build, "--alpha-url", "alpha.url", "URL-class Gamma shape");
  config_opt(build, "--alpha-session", "alpha.session",
             "session-class Gamma shape");
  config_opt(build, "--alpha-embedding", "alpha.embedding",
             "embedding-class Gamma shape");
  config_opt(build, "--beta-term", "beta.term", "term-class Gamma rate");
  config_opt(build, "--beta-url", "beta.url", "URL-class Gamma rate");
  config_opt(build, "--beta-session", "beta.session",
             "session-class Gamma rate");
  config_opt(build, "--beta-embedding", "beta.embedding",
             "embedding-class Gamma rate");
  config_opt(build, "--affinity-resolution", "resolution",
             "counts per unit of mean affinity");
  add_config_path(build);

  CLI::App* prune_cmd = app.add_subcommand(
      "prune", "Flatten coherent subtrees into atomic task nodes");
  prune_cmd->add_option("--forest", forest_path, "forest file from build")
      ->required();
  prune_cmd->add_option("--corpus", corpus_path,
                        "corpus the forest was built from")
      ->required();
  prune_cmd->add_option("--out", out_path, "pruned forest file to write")
      ->required();
  config_opt(prune_cmd, "--threshold", "threshold",
             "coherence threshold; nodes scoring >= it become leaf tasks");
  config_opt(prune_cmd, "--reference-corpus", "reference_corpus",
             "corpus for co-occurrence statistics (default: --corpus)");
  config_flag(prune_cmd, "--literal-pmi", "literal_pmi", "true",
              "normalize the full ordered PMI sum by term count");
  add_config_path(prune_cmd);

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Pairwise precision/recall/F1 against labeled tasks");
  eval_cmd->add_option("--forest", forest_path, "pruned forest file")
      ->required();
  eval_cmd->add_option("--gold", gold_path,
                       "ground truth: query_id<TAB>label per line")
      ->required();
  eval_cmd->add_option("--out", out_path, "machine-readable results file");
  add_config_path(eval_cmd);

  CLI::App* predict = app.add_subcommand(
      "predict-terms", "Held-out term prediction over session prefixes");
  predict->add_option("--forest", forest_path, "pruned forest file")
      ->required();
  predict->add_option("--sessions", sessions_path,
                      "sessionized corpus file to evaluate on")
      ->required();
  config_opt(predict, "--fractions", "fractions",
             "comma-separated session prefix fractions in (0,1)");
  config_opt(predict, "--k", "k", "recommended terms per session");
  predict->add_option("--out", out_path, "machine-readable results file");
  add_config_path(predict);

  CLI::App* export_dot = app.add_subcommand(
      "export-dot", "Render a forest as a Graphviz DOT file");
  export_dot->add_option("--forest", forest_path, "forest file")->required();
  export_dot->add_option("--out", out_path, "DOT file to write")->required();
  export_dot->add_option("--corpus", corpus_path,
                         "corpus file, enables term labels on nodes");
  add_config_path(export_dot);

  CLI::App* run_cmd = app.add_subcommand(
      "run", "Full pipeline: ingest, build, prune, export, evaluate");
  add_config_path(run_cmd);
  config_opt(run_cmd, "--corpus", "corpus", "raw log path (overrides config)");
  config_opt(run_cmd, "--out-dir", "out_dir", "artifact directory");

  std::vector<const char*> argv;
  argv.push_back("taskforest");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    RunConfig config = effective_config(config_path, overrides);
    if (app.got_subcommand(ingest)) {
      do_ingest(config, input, out_path, out, err);
    } else if (app.got_subcommand(build)) {
      LogCorpus corpus = read_corpus_file(corpus_path);
      TaskForest forest = do_build(config, corpus, err);
      write_forest_file(forest, out_path, artifact_header(config));
    } else if (app.got_subcommand(prune_cmd)) {
      TaskForest forest = read_forest_file(forest_path);
      LogCorpus corpus = read_corpus_file(corpus_path);
      std::string cache = (config.reference_corpus.empty()
                               ? corpus_path
                               : config.reference_corpus) +
                          ".cooc";
      TaskForest pruned = do_prune(config, forest, corpus, cache, err);
      write_forest_file(pruned, out_path, artifact_header(config));
    } else if (app.got_subcommand(eval_cmd)) {
      TaskForest forest = read_forest_file(forest_path);
      do_eval(config, forest, load_gold_file(gold_path), out_path, out);
    } else if (app.got_subcommand(predict)) {
      TaskForest forest = read_forest_file(forest_path);
      LogCorpus sessions = read_corpus_file(sessions_path);
      do_predict(config, forest, sessions, out_path, out);
    } else if (app.got_subcommand(export_dot)) {
      TaskForest forest = read_forest_file(forest_path);
      LogCorpus corpus_storage;
      const LogCorpus* corpus = nullptr;
      if (!corpus_path.empty()) {
        corpus_storage = read_corpus_file(corpus_path);
        corpus = &corpus_storage;
      }
      std::ofstream f(out_path, std::ios::binary);
      if (!f) throw DataError("cannot write file: " + out_path);
      write_dot(forest, corpus, f, artifact_header(config));
    } else if (app.got_subcommand(run_cmd)) {
      run_pipeline(config, out, err);
    }
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace taskforest
