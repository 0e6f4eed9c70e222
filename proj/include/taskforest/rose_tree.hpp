#pragma once

// Multi-branch task hierarchies built by greedy Bayes-factor agglomeration.
//
// Each query starts as a singleton tree; the engine repeatedly applies the
// highest-scoring merge of two live trees until no candidate improves the
// marginal likelihood. A merge is one of:
//   JOIN          new node with the two roots as children
//   ABSORB_LEFT   left root's children plus the right tree as one more child
//   ABSORB_RIGHT  mirror image
//   COLLAPSE      new node adopting both roots' children
// Scores are log Bayes factors: log p(D|merged) - log p(D_i|T_i) - log p(D_j|T_j).

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "taskforest/affinity.hpp"
#include "taskforest/likelihood.hpp"

namespace taskforest {

enum class MergeKind : int {
  kJoin = 0,
  kAbsorbLeft = 1,   // left tree absorbs the right tree
  kAbsorbRight = 2,  // right tree absorbs the left tree
  kCollapse = 3,
};

const char* merge_kind_name(MergeKind k);

struct MergeCandidate {
  int64_t left_id = -1;   // left_id < right_id always
  int64_t right_id = -1;
  MergeKind kind = MergeKind::kJoin;
  double log_score = 0.0;
  uint64_t stamp = 0;     // engine generation when scored
};

struct TaskTreeNode {
  int64_t id = -1;                 // -1 marks an unused slot
  int64_t parent = -1;
  std::vector<int64_t> children;   // empty for leaves
  int64_t query_id = -1;           // >= 0 for singleton query leaves
  std::vector<int64_t> queries;    // non-singleton leaf payload (post-prune)
  double loglik = 0.0;
  double pmi_score = std::numeric_limits<double>::quiet_NaN();

  bool is_leaf() const { return children.empty(); }
};

struct TaskForest {
  std::vector<TaskTreeNode> nodes;  // indexed by id; gaps carry id == -1
  std::vector<int64_t> roots;       // ascending
  int64_t n_queries = 0;

  const TaskTreeNode& node(int64_t id) const { return nodes[static_cast<size_t>(id)]; }
  TaskTreeNode& node(int64_t id) { return nodes[static_cast<size_t>(id)]; }

  // Query ids under a node, ascending.
  std::vector<int64_t> leaf_queries(int64_t id) const;
  // Reachable node ids in export order (roots ascending, preorder).
  std::vector<int64_t> preorder() const;
  // Leaf node ids in preorder (the bottom level).
  std::vector<int64_t> leaf_nodes() const;
};

struct BuildOptions {
  ModelConfig model;
  bool blocking = true;   // candidate pairs share a term/session/domain key
  int threads = 0;        // 0: hardware_concurrency
  std::ostream* log = nullptr;        // progress notes (merge counts, scores)
  int64_t log_every = 1000;
};

struct BuildReport {
  int64_t merges = 0;
  int64_t candidates_scored = 0;
  int64_t initial_pairs = 0;
};

// The corpus must be sessionized (session_id >= 0) and non-empty.
TaskForest build_hierarchy(const LogCorpus& corpus,
                           const EmbeddingTable* embeddings,
                           const BuildOptions& options,
                           BuildReport* report = nullptr);

// ---- persistence -----------------------------------------------------------
// One node per line:
//   node_id \t parent_id \t child_order \t query_ids \t loglik \t pmi_score
// parent_id -1 for roots; child_order is the position among the parent's
// children (0 for roots); query_ids comma-joined on leaves, empty otherwise;
// floats as shortest round-trip text, "nan"/"inf" tokens allowed.
void write_forest(const TaskForest& forest, std::ostream& out,
                  const std::string& header_comment = "");
void write_forest_file(const TaskForest& forest, const std::string& path,
                       const std::string& header_comment = "");
TaskForest read_forest(std::istream& in);
TaskForest read_forest_file(const std::string& path);

// Graphviz export of the reachable structure.
void write_dot(const TaskForest& forest, const LogCorpus* corpus,
               std::ostream& out, const std::string& header_comment = "");

}  // namespace taskforest
