#include "taskforest/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace taskforest {

namespace {

int64_t pairs_of(int64_t n) { return n * (n - 1) / 2; }

double safe_ratio(int64_t num, int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

using TermFreq = std::unordered_map<std::string, int64_t>;

double cosine(const TermFreq& a, const TermFreq& b) {
  if (a.empty() || b.empty()) return 0.0;
  const TermFreq& small = a.size() <= b.size() ? a : b;
  const TermFreq& large = a.size() <= b.size() ? b : a;
  double dot = 0.0;
  for (const auto& [t, c] : small) {
    auto it = large.find(t);
    if (it != large.end())
      dot += static_cast<double>(c) * static_cast<double>(it->second);
  }
  if (dot == 0.0) return 0.0;
  double na = 0.0, nb = 0.0;
  for (const auto& [t, c] : a) na += static_cast<double>(c) * c;
  for (const auto& [t, c] : b) nb += static_cast<double>(c) * c;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TermFreq node_term_freq(const TaskForest& forest, const LogCorpus& corpus,
                        int64_t node_id) {
  TermFreq freq;
  for (int64_t q : forest.leaf_queries(node_id)) {
    if (q < 0 || q >= corpus.size())
      throw DataError("forest references query " + std::to_string(q) +
                      " outside the corpus");
    for (const std::string& t : corpus.queries[static_cast<size_t>(q)].terms)
      ++freq[t];
  }
  return freq;
}

}  // namespace

PairwiseScore pairwise_prf(const TaskLabeling& predicted,
                           const TaskLabeling& gold) {
  if (predicted.assignment.size() != gold.assignment.size())
    throw DataError("labelings cover different query sets");
  // Cell counting: queries sharing both labels fall into one (pred, gold)
  // cell, and each label block contributes n-choose-2 same-task pairs.
  std::map<std::string, int64_t> pred_blocks, gold_blocks;
  std::map<std::pair<std::string, std::string>, int64_t> cells;
  auto git = gold.assignment.begin();
  for (const auto& [qid, plabel] : predicted.assignment) {
    if (git->first != qid)
      throw DataError("labelings cover different query sets");
    ++pred_blocks[plabel];
    ++gold_blocks[git->second];
    ++cells[{plabel, git->second}];
    ++git;
  }
  PairwiseScore score;
  for (const auto& [label, n] : pred_blocks) score.same_predicted += pairs_of(n);
  for (const auto& [label, n] : gold_blocks) score.same_gold += pairs_of(n);
  for (const auto& [cell, n] : cells) score.same_both += pairs_of(n);
  score.precision = safe_ratio(score.same_both, score.same_predicted);
  score.recall = safe_ratio(score.same_both, score.same_gold);
  score.f1 = (score.precision + score.recall) == 0.0
                 ? 0.0
                 : 2.0 * score.precision * score.recall /
                       (score.precision + score.recall);
  return score;
}

TaskLabeling leaf_labeling(const TaskForest& forest) {
  TaskLabeling labeling;
  for (int64_t id : forest.leaf_nodes()) {
    std::string label = std::to_string(id);
    for (int64_t q : forest.leaf_queries(id)) {
      auto [it, inserted] = labeling.assignment.emplace(q, label);
      if (!inserted)
        throw DataError("query " + std::to_string(q) +
                        " appears under two leaf tasks");
    }
  }
  return labeling;
}

TaskLabeling load_gold(std::istream& in) {
  TaskLabeling labeling;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw DataError("gold line " + std::to_string(lineno) +
                      ": expected query_id<TAB>label");
    int64_t qid;
    try {
      qid = std::stoll(line.substr(0, tab));
    } catch (const std::exception&) {
      throw DataError("gold line " + std::to_string(lineno) + ": bad query id");
    }
    if (!labeling.assignment.emplace(qid, line.substr(tab + 1)).second)
      throw DataError("gold line " + std::to_string(lineno) +
                      ": duplicate query id " + std::to_string(qid));
  }
  return labeling;
}

TaskLabeling load_gold_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  return load_gold(f);
}

int64_t match_task_node(const std::vector<Query>& partial_queries,
                        const TaskForest& forest, const LogCorpus& corpus) {
  if (partial_queries.empty())
    throw DataError("cannot match an empty query list");
  TermFreq partial;
  for (const Query& q : partial_queries)
    for (const std::string& t : q.terms) ++partial[t];

  std::vector<int64_t> leaves = forest.leaf_nodes();
  if (leaves.empty()) throw DataError("forest has no leaf tasks");
  std::sort(leaves.begin(), leaves.end());
  int64_t best_id = leaves.front();
  double best_cos = -1.0;
  for (int64_t id : leaves) {
    double c = cosine(partial, node_term_freq(forest, corpus, id));
    if (c > best_cos) {
      best_cos = c;
      best_id = id;
    }
  }
  return best_id;
}

std::vector<TermPredictionResult> term_prediction_eval(
    const TaskForest& forest, const LogCorpus& corpus,
    const std::vector<double>& fractions, int64_t k) {
  if (k <= 0) throw DataError("top-k must be positive");
  for (double f : fractions)
    if (!(f > 0.0 && f < 1.0))
      throw DataError("split fractions must lie strictly between 0 and 1");

  // Sessions in temporal order.
  std::map<int64_t, std::vector<Query>> sessions;
  for (const Query& q : corpus.queries) {
    if (q.session_id < 0)
      throw DataError("term prediction needs a sessionized corpus");
    sessions[q.session_id].push_back(q);
  }
  for (auto& [sid, qs] : sessions)
    std::stable_sort(qs.begin(), qs.end(), [](const Query& a, const Query& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return a.query_id < b.query_id;
    });

  // Node term rankings are fraction-independent; build them once.
  std::vector<int64_t> leaves = forest.leaf_nodes();
  std::sort(leaves.begin(), leaves.end());
  std::map<int64_t, std::vector<std::pair<std::string, int64_t>>> ranked;
  for (int64_t id : leaves) {
    TermFreq freq = node_term_freq(forest, corpus, id);
    auto& list = ranked[id];
    list.assign(freq.begin(), freq.end());
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }

  std::vector<TermPredictionResult> results;
  for (double fraction : fractions) {
    TermPredictionResult res;
    res.fraction = fraction;
    double total_matched = 0.0;
    for (const auto& [sid, qs] : sessions) {
      int64_t n = static_cast<int64_t>(qs.size());
      if (n < 2) {
        ++res.sessions_skipped;
        continue;
      }
      int64_t split = std::clamp<int64_t>(
          std::llround(fraction * static_cast<double>(n)), 1, n - 1);
      std::vector<Query> part1(qs.begin(), qs.begin() + split);
      int64_t node = match_task_node(part1, forest, corpus);

      std::set<std::string> seen;
      for (const Query& q : part1) seen.insert(q.terms.begin(), q.terms.end());
      std::set<std::string> held;
      for (auto it = qs.begin() + split; it != qs.end(); ++it)
        held.insert(it->terms.begin(), it->terms.end());

      int64_t matched = 0, recommended = 0;
      for (const auto& [term, freq] : ranked[node]) {
        if (recommended >= k) break;
        if (seen.count(term)) continue;
        ++recommended;
        if (held.count(term)) ++matched;
      }
      total_matched += static_cast<double>(matched);
      ++res.sessions_evaluated;
    }
    res.mean_matched = res.sessions_evaluated == 0
                           ? 0.0
                           : total_matched / res.sessions_evaluated;
    results.push_back(res);
  }
  return results;
}

}  // namespace taskforest
