#include "taskforest/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace taskforest {

namespace {

std::string pair_cache_key(const std::string& a, const std::string& b) {
  return a < b ? a + '\t' + b : b + '\t' + a;
}

}  // namespace

int64_t CooccurrenceStats::term_count(const std::string& t) const {
  auto it = term_sessions.find(t);
  return it == term_sessions.end() ? 0 : it->second;
}

int64_t CooccurrenceStats::pair_count(const std::string& a,
                                      const std::string& b) const {
  if (a == b) return term_count(a);
  auto it = pair_sessions.find(pair_cache_key(a, b));
  return it == pair_sessions.end() ? 0 : it->second;
}

CooccurrenceStats build_cooccurrence(const LogCorpus& corpus) {
  std::map<int64_t, std::set<std::string>> session_terms;
  for (const Query& q : corpus.queries) {
    if (q.session_id < 0)
      throw DataError("co-occurrence needs a sessionized corpus");
    auto& terms = session_terms[q.session_id];
    terms.insert(q.terms.begin(), q.terms.end());
  }
  CooccurrenceStats stats;
  stats.n_sessions = static_cast<int64_t>(session_terms.size());
  for (const auto& [sid, terms] : session_terms) {
    for (auto it = terms.begin(); it != terms.end(); ++it) {
      ++stats.term_sessions[*it];
      for (auto jt = std::next(it); jt != terms.end(); ++jt)
        ++stats.pair_sessions[*it + '\t' + *jt];
    }
  }
  return stats;
}

double pmi(const std::string& w1, const std::string& w2,
           const CooccurrenceStats& stats) {
  if (stats.n_sessions <= 0) return 0.0;
  int64_t c1 = stats.term_count(w1);
  int64_t c2 = stats.term_count(w2);
  if (c1 == 0 || c2 == 0) return 0.0;
  int64_t c12 = stats.pair_count(w1, w2);
  // p12 / (p1 p2) with the +1 joint smoothing folded in:
  //   ((c12 + 1) / n) / ((c1 / n)(c2 / n)) = n (c12 + 1) / (c1 c2)
  double n = static_cast<double>(stats.n_sessions);
  return std::log(n * static_cast<double>(c12 + 1) /
                  (static_cast<double>(c1) * static_cast<double>(c2)));
}

double pmi_score(const std::vector<std::string>& node_terms,
                 const CooccurrenceStats& stats, bool literal_mean) {
  size_t t = node_terms.size();
  if (t < 2) return std::numeric_limits<double>::infinity();
  double pair_sum = 0.0;
  for (size_t i = 0; i < t; ++i)
    for (size_t j = i + 1; j < t; ++j)
      pair_sum += pmi(node_terms[i], node_terms[j], stats);
  if (!literal_mean)
    return pair_sum / (static_cast<double>(t) * (t - 1) / 2.0);
  double diag = 0.0;
  for (const std::string& w : node_terms) diag += pmi(w, w, stats);
  return (2.0 * pair_sum + diag) / static_cast<double>(t);
}

std::vector<std::string> node_terms(const TaskForest& forest,
                                    const LogCorpus& corpus, int64_t node_id) {
  std::set<std::string> terms;
  for (int64_t q : forest.leaf_queries(node_id)) {
    if (q < 0 || q >= corpus.size())
      throw DataError("forest references query " + std::to_string(q) +
                      " outside the corpus");
    const Query& query = corpus.queries[static_cast<size_t>(q)];
    terms.insert(query.terms.begin(), query.terms.end());
  }
  return {terms.begin(), terms.end()};
}

TaskForest prune(const TaskForest& forest, const LogCorpus& corpus,
                 const CooccurrenceStats& stats, double threshold,
                 bool literal_mean) {
  TaskForest out;
  out.roots = forest.roots;
  out.n_queries = forest.n_queries;
  out.nodes.resize(forest.nodes.size());

  std::vector<int64_t> stack(forest.roots.rbegin(), forest.roots.rend());
  while (!stack.empty()) {
    int64_t id = stack.back();
    stack.pop_back();
    const TaskTreeNode& src = forest.node(id);
    TaskTreeNode node = src;
    node.pmi_score = pmi_score(node_terms(forest, corpus, id), stats,
                               literal_mean);
    if (!src.is_leaf() && node.pmi_score >= threshold) {
      // Coherent enough to be one task: flatten the whole subtree here.
      node.children.clear();
      node.queries = forest.leaf_queries(id);
      node.query_id = -1;
    } else {
      for (auto it = src.children.rbegin(); it != src.children.rend(); ++it)
        stack.push_back(*it);
    }
    out.nodes[static_cast<size_t>(id)] = std::move(node);
  }
  return out;
}

uint64_t corpus_content_hash(const LogCorpus& corpus) {
  std::ostringstream buf;
  write_corpus(corpus, buf);
  return fnv1a64(buf.str());
}

void save_cooccurrence(const CooccurrenceStats& stats, uint64_t corpus_hash,
                       const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) return;  // cache is an optimization; failure to write is not fatal
  f << "# taskforest co-occurrence cache\n";
  f << "hash\t" << corpus_hash << "\n";
  f << "sessions\t" << stats.n_sessions << "\n";
  std::map<std::string, int64_t> terms(stats.term_sessions.begin(),
                                       stats.term_sessions.end());
  for (const auto& [t, c] : terms) f << "t\t" << t << "\t" << c << "\n";
  std::map<std::string, int64_t> pairs(stats.pair_sessions.begin(),
                                       stats.pair_sessions.end());
  for (const auto& [p, c] : pairs) f << "p\t" << p << "\t" << c << "\n";
}

bool load_cooccurrence(const std::string& path, uint64_t corpus_hash,
                       CooccurrenceStats* stats) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  CooccurrenceStats loaded;
  std::string line;
  bool hash_ok = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
      size_t pos = line.find('\t', start);
      cols.push_back(pos == std::string::npos ? line.substr(start)
                                              : line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    try {
      if (cols[0] == "hash" && cols.size() == 2) {
        hash_ok = std::stoull(cols[1]) == corpus_hash;
        if (!hash_ok) return false;
      } else if (cols[0] == "sessions" && cols.size() == 2) {
        loaded.n_sessions = std::stoll(cols[1]);
      } else if (cols[0] == "t" && cols.size() == 3) {
        loaded.term_sessions[cols[1]] = std::stoll(cols[2]);
      } else if (cols[0] == "p" && cols.size() == 4) {
        loaded.pair_sessions[cols[1] + '\t' + cols[2]] = std::stoll(cols[3]);
      } else {
        return false;
      }
    } catch (const std::exception&) {
      return false;
    }
  }
  if (!hash_ok) return false;
  *stats = std::move(loaded);
  return true;
}

}  // namespace taskforest
