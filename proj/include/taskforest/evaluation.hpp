#pragma once

// Extraction-quality metrics: pairwise precision/recall/F1 of a predicted
// task clustering against labeled ground truth, and a term-prediction
// harness that splits sessions, matches the earlier part to a task node,
// and checks how many of the node's top terms show up later in the session.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "taskforest/query_log.hpp"
#include "taskforest/rose_tree.hpp"

namespace taskforest {

// Task assignment: query id -> task label.
struct TaskLabeling {
  std::map<int64_t, std::string> assignment;
};

struct PairwiseScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t same_predicted = 0;  // pairs the prediction puts in one task
  int64_t same_gold = 0;       // pairs the gold labels put in one task
  int64_t same_both = 0;       // pairs both agree on
};

// Pair-counting scores over all unordered query pairs.  Both labelings must
// cover exactly the same query ids; 0/0 ratios evaluate to 0.
PairwiseScore pairwise_prf(const TaskLabeling& predicted,
                           const TaskLabeling& gold);

// One label per bottom-level node of a (typically pruned) forest; every
// query of the forest is labeled exactly once.
TaskLabeling leaf_labeling(const TaskForest& forest);

// Ground-truth file: query_id \t label per line; '#' comments allowed.
TaskLabeling load_gold(std::istream& in);
TaskLabeling load_gold_file(const std::string& path);

// Bottom-level node whose aggregate term-frequency vector has the highest
// cosine similarity with the terms of the given queries; ties go to the
// smaller node id.
int64_t match_task_node(const std::vector<Query>& partial_queries,
                        const TaskForest& forest, const LogCorpus& corpus);

struct TermPredictionResult {
  double fraction = 0.0;        // share of each session used for matching
  double mean_matched = 0.0;    // avg recommended terms seen later on
  int64_t sessions_evaluated = 0;
  int64_t sessions_skipped = 0;  // sessions with fewer than two queries
};

// For each requested fraction: split every session, match its first part to
// a task node, recommend the node's top-k terms not already issued, and
// count how many appear in the held-out remainder.
std::vector<TermPredictionResult> term_prediction_eval(
    const TaskForest& forest, const LogCorpus& corpus,
    const std::vector<double>& fractions, int64_t k);

}  // namespace taskforest
