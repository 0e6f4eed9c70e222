#pragma once

// Run configuration shared by the CLI subcommands and the pipeline driver: a
// flat key=value text file, overridable flag by flag on the command line.
// The canonical serialization doubles as the config fingerprint stamped into
// every artifact header, so identical settings always hash identically.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "taskforest/likelihood.hpp"

namespace taskforest {

struct RunConfig {
  // Paths.
  std::string corpus;             // raw log (ingest) or normalized corpus
  std::string out_dir = ".";      // pipeline artifact directory
  std::string embeddings;         // optional pre-trained vector file
  std::string reference_corpus;   // optional PMI reference, defaults to corpus
  std::string gold;               // optional ground-truth labels

  // Ingest.
  double timeout_mins = 30.0;
  bool drop_stopwords = false;

  // Hierarchy model (gamma, per-class priors, count resolution).
  ModelConfig model;

  // Pruning.
  double threshold = 0.8;
  bool literal_pmi = false;

  // Engine.
  bool blocking = true;
  int threads = 0;  // 0 = one worker per hardware thread

  // Term prediction.
  int64_t k = 10;
  std::vector<double> fractions = {0.2, 0.4, 0.6, 0.8};

  // Reserved; the pipeline itself is deterministic.
  uint64_t seed = 0;
};

// Parse key=value lines ('#' comments, blank lines allowed).  Unknown keys
// and malformed values raise DataError.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

// Apply one key=value assignment (the config-file grammar) to an existing
// config; lets CLI flags reuse the same parsing and validation.
void apply_config_entry(RunConfig* config, const std::string& key,
                        const std::string& value);

// Fixed-order lossless serialization; parse(serialize(c)) == c.
std::string serialize_run_config(const RunConfig& config);
void save_run_config(const RunConfig& config, std::ostream& out);

// FNV-1a over the canonical serialization, as a 16-digit hex string.
std::string run_config_hash(const RunConfig& config);

// "taskforest <version> config=<hash>" — the artifact header payload.
std::string artifact_header(const RunConfig& config);

}  // namespace taskforest
