#pragma once

// Task-coherence scoring and subtree pruning.  A node whose query terms
// co-occur tightly in real sessions describes one atomic information need;
// splitting it further is noise.  Coherence is the average pointwise mutual
// information over the node's unique terms, estimated from session-level
// co-occurrence in a reference corpus.  Nodes at or above a threshold are
// flattened into leaf tasks.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "taskforest/query_log.hpp"
#include "taskforest/rose_tree.hpp"

namespace taskforest {

// Session-level term statistics: a term (or pair) is counted once per
// session that contains it, regardless of how often it repeats inside.
struct CooccurrenceStats {
  int64_t n_sessions = 0;
  std::unordered_map<std::string, int64_t> term_sessions;
  // Key is "a\tb" with a < b lexicographically.
  std::unordered_map<std::string, int64_t> pair_sessions;

  int64_t term_count(const std::string& t) const;
  // Symmetric; the diagonal (w,w) equals term_count(w).
  int64_t pair_count(const std::string& a, const std::string& b) const;
};

CooccurrenceStats build_cooccurrence(const LogCorpus& corpus);

// log of joint over product of marginals, probabilities as session
// frequencies.  The joint gets +1/n_sessions smoothing so never-co-occurring
// pairs stay finite; a term unseen in the reference corpus contributes 0.
double pmi(const std::string& w1, const std::string& w2,
           const CooccurrenceStats& stats);

// Mean PMI over unordered distinct pairs of the node's unique terms; fewer
// than two terms means there is nothing left to split, scored +infinity.
// literal_mean replaces the pair mean with the full ordered double sum
// (self-pairs included) divided by the term count.
double pmi_score(const std::vector<std::string>& node_terms,
                 const CooccurrenceStats& stats, bool literal_mean = false);

// Unique sorted terms over a node's leaf queries.
std::vector<std::string> node_terms(const TaskForest& forest,
                                    const LogCorpus& corpus, int64_t node_id);

// Top-down scan from each root: the first node on a path scoring at or above
// the threshold keeps its queries but loses its subtree.  Every surviving
// node carries its pmi_score.  Node ids of survivors are unchanged; removed
// descendants leave unused slots.
TaskForest prune(const TaskForest& forest, const LogCorpus& corpus,
                 const CooccurrenceStats& stats, double threshold,
                 bool literal_mean = false);

// Stats cache: recomputing co-occurrence over a large reference corpus is the
// slow part of pruning, so it persists keyed by the corpus content hash.
uint64_t corpus_content_hash(const LogCorpus& corpus);
void save_cooccurrence(const CooccurrenceStats& stats, uint64_t corpus_hash,
                       const std::string& path);
// Returns false when the file is missing, unreadable, or built from a
// different corpus; stats is untouched in that case.
bool load_cooccurrence(const std::string& path, uint64_t corpus_hash,
                       CooccurrenceStats* stats);

}  // namespace taskforest
