#include "taskforest/rose_tree.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <queue>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace taskforest {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_double_token(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::vector<int64_t> merge_sorted(const std::vector<int64_t>& a,
                                  const std::vector<int64_t>& b) {
  std::vector<int64_t> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<int64_t> union_sorted(const std::vector<int64_t>& a,
                                  const std::vector<int64_t>& b) {
  std::vector<int64_t> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

uint64_t pair_key(int64_t a, int64_t b) {
  return (static_cast<uint64_t>(a) << 32) | static_cast<uint64_t>(b);
}

// Simple deterministic parallel-for: results land in caller-owned slots.
void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  if (threads <= 1 || n < 256) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int64_t> next{0};
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      while (true) {
        int64_t chunk = next.fetch_add(512);
        if (chunk >= n) return;
        int64_t end = std::min(n, chunk + 512);
        for (int64_t i = chunk; i < end; ++i) fn(i);
      }
    });
  for (auto& th : pool) th.join();
}

struct CandidateOrder {
  // priority_queue comparator: true when a surfaces after b.
  bool operator()(const MergeCandidate& a, const MergeCandidate& b) const {
    if (a.log_score != b.log_score) return a.log_score < b.log_score;
    if (a.left_id != b.left_id) return a.left_id > b.left_id;
    if (a.right_id != b.right_id) return a.right_id > b.right_id;
    return static_cast<int>(a.kind) > static_cast<int>(b.kind);
  }
};

struct LiveTree {
  std::vector<int64_t> queries;  // ascending query ids
  AffinityStats stats;
  double loglik = 0.0;
  double child_sum = 0.0;   // sum of children's cached logliks
  int64_t n_children = 0;   // 0 for singleton leaves
  std::vector<int64_t> keys;  // sorted blocking keys
};

class MergeEngine {
 public:
  MergeEngine(const LogCorpus& corpus, const EmbeddingTable* embeddings,
              const BuildOptions& options)
      : corpus_(corpus),
        options_(options),
        ctx_(corpus, embeddings),
        tables_(options.model) {}

  TaskForest run(BuildReport* report);

 private:
  void init_leaves();
  void init_candidates();
  std::vector<std::pair<int64_t, int64_t>> blocked_pairs() const;
  void score_pair(int64_t i, int64_t j, const AffinityStats& cross);
  void apply(const MergeCandidate& cand);
  AffinityStats take_cross(int64_t a, int64_t b, const std::vector<int64_t>& qa,
                           const std::vector<int64_t>& qb);

  const LogCorpus& corpus_;
  const BuildOptions& options_;
  AffinityContext ctx_;
  LikelihoodTables tables_;

  std::vector<TaskTreeNode> nodes_;
  std::unordered_map<int64_t, LiveTree> live_;
  std::unordered_map<uint64_t, AffinityStats> cross_;
  std::unordered_map<int64_t, std::vector<int64_t>> partners_;
  std::priority_queue<MergeCandidate, std::vector<MergeCandidate>,
                      CandidateOrder>
      heap_;
  uint64_t generation_ = 0;
  BuildReport stats_out_;
};

void MergeEngine::init_leaves() {
  // Blocking keys: one id space covering terms, sessions and click domains.
  std::unordered_map<std::string, int64_t> key_ids;
  auto key_of = [&](const std::string& s) {
    auto [it, inserted] = key_ids.emplace(s, static_cast<int64_t>(key_ids.size()));
    return it->second;
  };
  nodes_.reserve(corpus_.queries.size() * 2);
  for (const Query& q : corpus_.queries) {
    TaskTreeNode node;
    node.id = q.query_id;
    node.query_id = q.query_id;
    AffinityStats empty;  // zero pairs -> zero counts
    node.loglik = tables_.marginal(group_affinity(empty, tables_.config().resolution));
    nodes_.push_back(node);

    LiveTree tree;
    tree.queries = {q.query_id};
    tree.loglik = node.loglik;
    std::vector<int64_t> keys;
    for (const std::string& t : q.terms) keys.push_back(key_of("t:" + t));
    keys.push_back(key_of("s:" + std::to_string(q.session_id)));
    for (const std::string& u : q.clicked_urls) {
      std::vector<std::string> toks = url_tokens(normalize_url(u));
      if (!toks.empty()) keys.push_back(key_of("d:" + toks.front()));
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    tree.keys = std::move(keys);
    live_.emplace(q.query_id, std::move(tree));
  }
}

std::vector<std::pair<int64_t, int64_t>> MergeEngine::blocked_pairs() const {
  std::vector<std::pair<int64_t, int64_t>> pairs;
  int64_t n = corpus_.size();
  if (!options_.blocking) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
  }
  std::unordered_map<int64_t, std::vector<int64_t>> members;
  for (const auto& [id, tree] : live_)
    for (int64_t k : tree.keys) members[k].push_back(id);
  std::unordered_set<uint64_t> seen;
  for (auto& [k, ids] : members) {
    std::sort(ids.begin(), ids.end());
    for (size_t a = 0; a < ids.size(); ++a)
      for (size_t b = a + 1; b < ids.size(); ++b)
        if (seen.insert(pair_key(ids[a], ids[b])).second)
          pairs.emplace_back(ids[a], ids[b]);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

void MergeEngine::init_candidates() {
  std::vector<std::pair<int64_t, int64_t>> pairs = blocked_pairs();
  stats_out_.initial_pairs = static_cast<int64_t>(pairs.size());

  // Leaf-pair scoring is embarrassingly parallel; each slot is independent
  // and the values are bitwise identical regardless of thread count.
  struct Slot {
    AffinityStats cross;
    double score = 0.0;
  };
  std::vector<Slot> slots(pairs.size());
  int threads = options_.threads > 0
                    ? options_.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  const ModelConfig& cfg = tables_.config();
  parallel_for(static_cast<int64_t>(pairs.size()), threads, [&](int64_t idx) {
    auto [i, j] = pairs[static_cast<size_t>(idx)];
    Slot& slot = slots[static_cast<size_t>(idx)];
    slot.cross.add_pair(ctx_.pair(i, j));
    const LiveTree& li = live_.at(i);
    const LiveTree& lj = live_.at(j);
    AffinityStats merged = li.stats;
    merged += lj.stats;
    merged += slot.cross;
    double f = tables_.marginal(group_affinity(merged, cfg.resolution));
    double p = node_log_likelihood_sum_from(f, li.loglik + lj.loglik, 2, cfg);
    slot.score = p - li.loglik - lj.loglik;
  });

  for (size_t idx = 0; idx < pairs.size(); ++idx) {
    auto [i, j] = pairs[idx];
    cross_.emplace(pair_key(i, j), slots[idx].cross);
    heap_.push({i, j, MergeKind::kJoin, slots[idx].score, generation_});
    partners_[i].push_back(j);
    partners_[j].push_back(i);
    ++stats_out_.candidates_scored;
  }
}

void MergeEngine::score_pair(int64_t i, int64_t j, const AffinityStats& cross) {
  const LiveTree& li = live_.at(i);
  const LiveTree& lj = live_.at(j);
  const ModelConfig& cfg = tables_.config();
  AffinityStats merged = li.stats;
  merged += lj.stats;
  merged += cross;
  double f = tables_.marginal(group_affinity(merged, cfg.resolution));

  auto push = [&](MergeKind kind, int64_t n, double child_sum) {
    double p = node_log_likelihood_sum_from(f, child_sum, n, cfg);
    heap_.push({i, j, kind, p - li.loglik - lj.loglik, generation_});
    ++stats_out_.candidates_scored;
  };
  push(MergeKind::kJoin, 2, li.loglik + lj.loglik);
  if (li.n_children >= 2)
    push(MergeKind::kAbsorbLeft, li.n_children + 1, li.child_sum + lj.loglik);
  if (lj.n_children >= 2)
    push(MergeKind::kAbsorbRight, lj.n_children + 1, lj.child_sum + li.loglik);
  if (li.n_children >= 2 && lj.n_children >= 2)
    push(MergeKind::kCollapse, li.n_children + lj.n_children,
         li.child_sum + lj.child_sum);
}

AffinityStats MergeEngine::take_cross(int64_t a, int64_t b,
                                      const std::vector<int64_t>& qa,
                                      const std::vector<int64_t>& qb) {
  uint64_t key = pair_key(std::min(a, b), std::max(a, b));
  auto it = cross_.find(key);
  if (it != cross_.end()) {
    AffinityStats s = it->second;
    cross_.erase(it);
    return s;
  }
  return ctx_.cross_stats(qa, qb);
}

void MergeEngine::apply(const MergeCandidate& cand) {
  int64_t i = cand.left_id, j = cand.right_id;
  LiveTree li = std::move(live_.at(i));
  LiveTree lj = std::move(live_.at(j));
  live_.erase(i);
  live_.erase(j);

  AffinityStats cross = take_cross(i, j, li.queries, lj.queries);

  int64_t m = static_cast<int64_t>(nodes_.size());
  TaskTreeNode node;
  node.id = m;
  switch (cand.kind) {
    case MergeKind::kJoin:
      node.children = {i, j};
      break;
    case MergeKind::kAbsorbLeft:
      node.children = nodes_[static_cast<size_t>(i)].children;
      node.children.push_back(j);
      break;
    case MergeKind::kAbsorbRight:
      node.children = nodes_[static_cast<size_t>(j)].children;
      node.children.push_back(i);
      break;
    case MergeKind::kCollapse:
      node.children = nodes_[static_cast<size_t>(i)].children;
      node.children.insert(node.children.end(),
                           nodes_[static_cast<size_t>(j)].children.begin(),
                           nodes_[static_cast<size_t>(j)].children.end());
      break;
  }
  for (int64_t c : node.children) nodes_[static_cast<size_t>(c)].parent = m;

  const ModelConfig& cfg = tables_.config();
  LiveTree lm;
  lm.stats = li.stats;
  lm.stats += lj.stats;
  lm.stats += cross;
  double f = tables_.marginal(group_affinity(lm.stats, cfg.resolution));
  switch (cand.kind) {
    case MergeKind::kJoin:
      lm.n_children = 2;
      lm.child_sum = li.loglik + lj.loglik;
      break;
    case MergeKind::kAbsorbLeft:
      lm.n_children = li.n_children + 1;
      lm.child_sum = li.child_sum + lj.loglik;
      break;
    case MergeKind::kAbsorbRight:
      lm.n_children = lj.n_children + 1;
      lm.child_sum = lj.child_sum + li.loglik;
      break;
    case MergeKind::kCollapse:
      lm.n_children = li.n_children + lj.n_children;
      lm.child_sum = li.child_sum + lj.child_sum;
      break;
  }
  lm.loglik = node_log_likelihood_sum_from(f, lm.child_sum, lm.n_children, cfg);
  assert(std::abs((lm.loglik - li.loglik - lj.loglik) - cand.log_score) == 0.0);
  node.loglik = lm.loglik;
  nodes_.push_back(std::move(node));

  lm.queries = merge_sorted(li.queries, lj.queries);
  lm.keys = union_sorted(li.keys, lj.keys);

  // Partner set of the merged tree: everyone either side could pair with.
  std::vector<int64_t> ps;
  if (options_.blocking) {
    auto pull = [&](int64_t id) {
      auto it = partners_.find(id);
      if (it == partners_.end()) return;
      for (int64_t x : it->second)
        if (x != i && x != j && live_.count(x)) ps.push_back(x);
      partners_.erase(it);
    };
    pull(i);
    pull(j);
  } else {
    for (const auto& [id, tree] : live_) ps.push_back(id);
  }
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());

  live_.emplace(m, std::move(lm));
  ++generation_;

  for (int64_t x : ps) {
    const LiveTree& lx = live_.at(x);
    AffinityStats cx = take_cross(i, x, li.queries, lx.queries);
    cx += take_cross(j, x, lj.queries, lx.queries);
    int64_t lo = std::min(m, x), hi = std::max(m, x);
    cross_.emplace(pair_key(lo, hi), cx);
    score_pair(lo, hi, cx);
    if (options_.blocking) partners_[x].push_back(m);
  }
  if (options_.blocking) partners_[m] = std::move(ps);
}

TaskForest MergeEngine::run(BuildReport* report) {
  if (corpus_.queries.empty()) throw DataError("corpus is empty");
  for (const Query& q : corpus_.queries)
    if (q.session_id < 0)
      throw DataError("corpus must be sessionized before building");
  init_leaves();
  init_candidates();

  while (!heap_.empty()) {
    MergeCandidate cand = heap_.top();
    heap_.pop();
    if (!live_.count(cand.left_id) || !live_.count(cand.right_id))
      continue;  // stale: a side was consumed since scoring
    if (!(cand.log_score > 0.0)) break;  // best candidate no longer improves
    apply(cand);
    ++stats_out_.merges;
    if (options_.log && stats_out_.merges % options_.log_every == 0)
      (*options_.log) << "merge " << stats_out_.merges << " score "
                      << cand.log_score << " live " << live_.size() << "\n";
  }

  TaskForest forest;
  forest.nodes = std::move(nodes_);
  forest.n_queries = corpus_.size();
  for (const auto& [id, tree] : live_) forest.roots.push_back(id);
  std::sort(forest.roots.begin(), forest.roots.end());
  for (int64_t r : forest.roots) forest.node(r).parent = -1;
  if (report) *report = stats_out_;
  return forest;
}

}  // namespace

const char* merge_kind_name(MergeKind k) {
  switch (k) {
    case MergeKind::kJoin: return "join";
    case MergeKind::kAbsorbLeft: return "absorb_left";
    case MergeKind::kAbsorbRight: return "absorb_right";
    case MergeKind::kCollapse: return "collapse";
  }
  return "?";
}

// ---- TaskForest ------------------------------------------------------------

std::vector<int64_t> TaskForest::leaf_queries(int64_t id) const {
  std::vector<int64_t> out;
  std::vector<int64_t> stack = {id};
  while (!stack.empty()) {
    int64_t cur = stack.back();
    stack.pop_back();
    const TaskTreeNode& n = node(cur);
    if (n.is_leaf()) {
      if (n.query_id >= 0) out.push_back(n.query_id);
      out.insert(out.end(), n.queries.begin(), n.queries.end());
    } else {
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it)
        stack.push_back(*it);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int64_t> TaskForest::preorder() const {
  std::vector<int64_t> out;
  for (int64_t r : roots) {
    std::vector<int64_t> stack = {r};
    while (!stack.empty()) {
      int64_t cur = stack.back();
      stack.pop_back();
      out.push_back(cur);
      const TaskTreeNode& n = node(cur);
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it)
        stack.push_back(*it);
    }
  }
  return out;
}

std::vector<int64_t> TaskForest::leaf_nodes() const {
  std::vector<int64_t> out;
  for (int64_t id : preorder())
    if (node(id).is_leaf()) out.push_back(id);
  return out;
}

TaskForest build_hierarchy(const LogCorpus& corpus,
                           const EmbeddingTable* embeddings,
                           const BuildOptions& options, BuildReport* report) {
  MergeEngine engine(corpus, embeddings, options);
  return engine.run(report);
}

// ---- persistence -----------------------------------------------------------

void write_forest(const TaskForest& forest, std::ostream& out,
                  const std::string& header_comment) {
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  for (int64_t id : forest.preorder()) {
    const TaskTreeNode& n = forest.node(id);
    int64_t order = 0;
    if (n.parent >= 0) {
      const auto& siblings = forest.node(n.parent).children;
      order = std::find(siblings.begin(), siblings.end(), id) - siblings.begin();
    }
    out << id << '\t' << n.parent << '\t' << order << '\t';
    if (n.is_leaf()) {
      if (n.query_id >= 0) {
        out << n.query_id;
      } else {
        for (size_t i = 0; i < n.queries.size(); ++i) {
          if (i) out << ',';
          out << n.queries[i];
        }
      }
    }
    out << '\t' << format_double(n.loglik) << '\t' << format_double(n.pmi_score)
        << '\n';
  }
}

void write_forest_file(const TaskForest& forest, const std::string& path,
                       const std::string& header_comment) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path);
  write_forest(forest, f, header_comment);
}

TaskForest read_forest(std::istream& in) {
  struct Row {
    int64_t id, parent, order;
    std::vector<int64_t> queries;
    double loglik, pmi;
  };
  std::vector<Row> rows;
  std::string line;
  int64_t lineno = 0;
  int64_t max_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    {
      size_t start = 0;
      while (true) {
        size_t pos = line.find('\t', start);
        cols.push_back(pos == std::string::npos
                           ? line.substr(start)
                           : line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
    }
    if (cols.size() != 6)
      throw DataError("forest line " + std::to_string(lineno) +
                      ": expected 6 fields");
    Row row;
    try {
      row.id = std::stoll(cols[0]);
      row.parent = std::stoll(cols[1]);
      row.order = std::stoll(cols[2]);
    } catch (const std::exception&) {
      throw DataError("forest line " + std::to_string(lineno) + ": bad id field");
    }
    if (!cols[3].empty()) {
      size_t start = 0;
      while (start <= cols[3].size()) {
        size_t pos = cols[3].find(',', start);
        std::string part = pos == std::string::npos
                               ? cols[3].substr(start)
                               : cols[3].substr(start, pos - start);
        try {
          if (!part.empty()) row.queries.push_back(std::stoll(part));
        } catch (const std::exception&) {
          throw DataError("forest line " + std::to_string(lineno) +
                          ": bad query id list");
        }
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
    }
    if (!parse_double_token(cols[4], row.loglik) ||
        !parse_double_token(cols[5], row.pmi))
      throw DataError("forest line " + std::to_string(lineno) +
                      ": bad float field");
    max_id = std::max(max_id, row.id);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("forest file has no nodes");

  TaskForest forest;
  forest.nodes.resize(static_cast<size_t>(max_id + 1));
  std::map<int64_t, std::vector<std::pair<int64_t, int64_t>>> kids;  // parent -> (order, id)
  int64_t total_queries = 0;
  for (const Row& row : rows) {
    TaskTreeNode& n = forest.nodes[static_cast<size_t>(row.id)];
    if (n.id != -1) throw DataError("duplicate node id in forest file");
    n.id = row.id;
    n.parent = row.parent;
    n.loglik = row.loglik;
    n.pmi_score = row.pmi;
    if (row.queries.size() == 1)
      n.query_id = row.queries[0];
    else
      n.queries = row.queries;
    total_queries += static_cast<int64_t>(row.queries.size());
    if (row.parent >= 0)
      kids[row.parent].emplace_back(row.order, row.id);
    else
      forest.roots.push_back(row.id);
  }
  for (auto& [parent, list] : kids) {
    if (parent > max_id || forest.nodes[static_cast<size_t>(parent)].id == -1)
      throw DataError("forest references unknown parent " + std::to_string(parent));
    std::sort(list.begin(), list.end());
    TaskTreeNode& p = forest.nodes[static_cast<size_t>(parent)];
    for (size_t i = 0; i < list.size(); ++i) {
      if (list[i].first != static_cast<int64_t>(i))
        throw DataError("forest child orders of node " + std::to_string(parent) +
                        " are not dense");
      p.children.push_back(list[i].second);
    }
  }
  for (const Row& row : rows) {
    const TaskTreeNode& n = forest.nodes[static_cast<size_t>(row.id)];
    if (n.is_leaf() && row.queries.empty())
      throw DataError("leaf node " + std::to_string(row.id) + " lists no queries");
    if (!n.is_leaf() && !row.queries.empty())
      throw DataError("internal node " + std::to_string(row.id) + " lists queries");
  }
  std::sort(forest.roots.begin(), forest.roots.end());

  // Every node must be reachable from exactly one root (no cycles, no strays).
  std::vector<char> seen(forest.nodes.size(), 0);
  int64_t visited = 0;
  std::vector<int64_t> stack(forest.roots.begin(), forest.roots.end());
  while (!stack.empty()) {
    int64_t cur = stack.back();
    stack.pop_back();
    if (seen[static_cast<size_t>(cur)])
      throw DataError("forest structure has a cycle or shared child");
    seen[static_cast<size_t>(cur)] = 1;
    ++visited;
    for (int64_t c : forest.nodes[static_cast<size_t>(cur)].children)
      stack.push_back(c);
  }
  if (visited != static_cast<int64_t>(rows.size()))
    throw DataError("forest has nodes unreachable from any root");

  forest.n_queries = total_queries;
  return forest;
}

TaskForest read_forest_file(const std::string& path) {
  std::istringstream in(slurp_maybe_gzip(path));
  return read_forest(in);
}

void write_dot(const TaskForest& forest, const LogCorpus* corpus,
               std::ostream& out, const std::string& header_comment) {
  if (!header_comment.empty()) out << "// " << header_comment << "\n";
  out << "digraph taskforest {\n  node [shape=box, fontsize=10];\n";
  for (int64_t id : forest.preorder()) {
    const TaskTreeNode& n = forest.node(id);
    std::vector<int64_t> qs = forest.leaf_queries(id);
    out << "  n" << id << " [label=\"#" << id << " (" << qs.size() << ")";
    if (corpus && n.is_leaf() && !qs.empty()) {
      // A few most frequent terms, alphabetical among ties.
      std::map<std::string, int64_t> freq;
      for (int64_t q : qs)
        for (const std::string& t : corpus->queries[static_cast<size_t>(q)].terms)
          ++freq[t];
      std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
      out << "\\n";
      for (size_t i = 0; i < ranked.size() && i < 3; ++i) {
        if (i) out << ' ';
        out << ranked[i].first;
      }
    }
    if (!std::isnan(n.pmi_score)) out << "\\npmi=" << format_double(n.pmi_score);
    out << "\"];\n";
  }
  for (int64_t id : forest.preorder())
    for (int64_t c : forest.node(id).children)
      out << "  n" << id << " -> n" << c << ";\n";
  out << "}\n";
}

}  // namespace taskforest
