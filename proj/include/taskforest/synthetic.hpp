#pragma once

// Deterministic synthetic query logs with planted task/subtask structure,
// plus small randomized corpora for stress-testing the merge engine.  All
// generation is seed-driven so bundled data files can be reproduced exactly.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "taskforest/query_log.hpp"

namespace taskforest {

struct PlantedSpec {
  int64_t tasks = 5;
  int64_t subtasks_per_task = 3;
  int64_t queries_per_subtask = 10;
  int64_t sessions_per_subtask = 5;
  bool with_clicks = false;  // one click domain per subtask
  uint64_t seed = 20060301;
};

struct PlantedCorpus {
  LogCorpus corpus;               // sessionized, ids in emission order
  std::vector<int64_t> task_of;   // query_id -> planted task index
  std::vector<int64_t> subtask_of;  // query_id -> planted global subtask index
};

// Each task gets one user and a private term; each subtask two private terms
// and its own sessions.  Every query reads "<task term> <sub term> <sub
// term>", so affinity concentrates inside subtasks, weakens across sibling
// subtasks, and vanishes across tasks.
PlantedCorpus make_planted_corpus(const PlantedSpec& spec);

// The same log in raw AOL row format (AnonID, Query, QueryTime, ItemRank,
// ClickURL) for exercising the ingest path; timestamps are spaced so the
// default 30-minute timeout reproduces the planted sessions.
void write_planted_log(const PlantedCorpus& planted, std::ostream& out);

// Ground truth: query_id <TAB> planted-subtask label.
void write_planted_gold(const PlantedCorpus& planted, std::ostream& out);

// Small random corpus (shared vocabulary, a few users, random clicks) for
// engine-equivalence and pruning property tests.
LogCorpus make_random_corpus(int64_t n_queries, uint64_t seed);

}  // namespace taskforest
