#pragma once

// Inter-query affinity: four feature classes (term, URL, session, embedding),
// per-pair values and exactly-additive group statistics.

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "taskforest/query_log.hpp"

namespace taskforest {

inline constexpr int kNumAffinityClasses = 4;
enum AffinityClass { kTermClass = 0, kUrlClass = 1, kSessionClass = 2,
                     kEmbeddingClass = 3 };

using AffinityVec = std::array<double, kNumAffinityClasses>;

// Word embeddings: text file, one line per term ("term v1 v2 ... vd").
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  static EmbeddingTable load(const std::string& path);

  bool empty() const { return vectors_.empty(); }
  int dim() const { return dim_; }
  // nullptr when the term is out of vocabulary.
  const std::vector<double>* lookup(const std::string& term) const;

  void insert(const std::string& term, std::vector<double> vec);

 private:
  int dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// Levenshtein distance; normalized variant divides by the longer length
// (0 when both strings are empty).
int64_t edit_distance(const std::string& a, const std::string& b);
double normalized_edit_distance(const std::string& a, const std::string& b);

// Scheme and leading "www." stripped, query/fragment dropped: host + path.
std::string normalize_url(const std::string& url);
// Host plus "/"-separated path tokens of the normalized URL.
std::vector<std::string> url_tokens(const std::string& normalized_url);

// Per-pair affinity classes. Each summand is clamped to [0,1].
//   term:      cosine(term sets) + (1 - normalized edit) + jaccard
//              + common-term proportion (common/union); range [0,4]
//   url:       (1 - min edit) + (1 - avg edit) + max jaccard + avg jaccard
//              over all clicked-URL pairs; 0 if either query has no clicks
//   session:   [same user] + [same session]; {0,1,2}
//   embedding: cosine of averaged term vectors clamped to [0,1];
//              0 for empty/zero vectors or a null table
double term_affinity(const Query& a, const Query& b);
double url_affinity(const Query& a, const Query& b);
double session_affinity(const Query& a, const Query& b);
double embedding_affinity(const Query& a, const Query& b,
                          const EmbeddingTable* table);
AffinityVec pair_affinity(const Query& a, const Query& b,
                          const EmbeddingTable* table);

// Group-level accumulator over unordered distinct pairs. Sums are kept in
// 2^-20 fixed point (int64) so that merging is exact and order-independent:
// stats(A ∪ B) == stats(A) + stats(B) + cross_stats(A, B), bit for bit.
struct AffinityStats {
  static constexpr int64_t kFixedOne = 1 << 20;

  std::array<int64_t, kNumAffinityClasses> fixed_sum{};
  int64_t n_pairs = 0;

  void add_pair(const AffinityVec& v);
  AffinityStats& operator+=(const AffinityStats& o);
  friend AffinityStats operator+(AffinityStats a, const AffinityStats& b) {
    a += b;
    return a;
  }
  bool operator==(const AffinityStats&) const = default;

  double pair_sum(int k) const {
    return static_cast<double>(fixed_sum[k]) / static_cast<double>(kFixedOne);
  }
};

// Precomputed per-query features so pair evaluation avoids re-deriving
// term sets, URL forms and embedding vectors.
class AffinityContext {
 public:
  AffinityContext(const LogCorpus& corpus, const EmbeddingTable* table);

  const LogCorpus& corpus() const { return *corpus_; }

  // Pair affinity between query ids (precomputed features).
  AffinityVec pair(int64_t qa, int64_t qb) const;

  // Stats over all unordered distinct pairs within `ids`.
  AffinityStats group_stats(const std::vector<int64_t>& ids) const;
  // Stats over all cross pairs (a in A) x (b in B); A and B disjoint.
  AffinityStats cross_stats(const std::vector<int64_t>& a,
                            const std::vector<int64_t>& b) const;

 private:
  struct QueryFeatures {
    std::vector<std::string> term_set;        // sorted unique
    std::string joined_terms;                 // raw text stand-in
    std::vector<std::string> norm_urls;
    std::vector<std::vector<std::string>> url_token_sets;  // sorted unique
    std::vector<double> embedding;            // empty if none
    const std::string* user = nullptr;
    int64_t session = -1;
  };

  const LogCorpus* corpus_;
  std::vector<QueryFeatures> feats_;
};

// Discretized per-class counts: round(resolution * pair_sum / max(n_pairs,1)).
std::array<int64_t, kNumAffinityClasses> group_affinity(
    const AffinityStats& stats, int64_t resolution);

}  // namespace taskforest
