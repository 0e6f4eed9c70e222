#include "taskforest/affinity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace taskforest {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// |A ∩ B| for sorted unique vectors.
int64_t sorted_intersection_size(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b) {
  int64_t n = 0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    int cmp = a[i].compare(b[j]);
    if (cmp == 0) {
      ++n;
      ++i;
      ++j;
    } else if (cmp < 0) {
      ++i;
    } else {
      ++j;
    }
  }
  return n;
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

double set_cosine(const std::vector<std::string>& a,
                  const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  int64_t inter = sorted_intersection_size(a, b);
  return static_cast<double>(inter) /
         std::sqrt(static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

double set_jaccard(const std::vector<std::string>& a,
                   const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  int64_t inter = sorted_intersection_size(a, b);
  int64_t uni = static_cast<int64_t>(a.size() + b.size()) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double vec_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string join_terms(const std::vector<std::string>& terms) {
  std::string out;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (i) out.push_back(' ');
    out += terms[i];
  }
  return out;
}

std::vector<double> mean_term_vector(const std::vector<std::string>& terms,
                                     const EmbeddingTable& table) {
  std::vector<double> acc;
  int64_t n = 0;
  for (const std::string& t : terms) {
    const std::vector<double>* v = table.lookup(t);
    if (!v) continue;  // OOV terms are skipped
    if (acc.empty()) acc.assign(v->size(), 0.0);
    for (size_t i = 0; i < v->size(); ++i) acc[i] += (*v)[i];
    ++n;
  }
  if (n == 0) return {};
  for (double& x : acc) x /= static_cast<double>(n);
  return acc;
}

}  // namespace

// ---- EmbeddingTable --------------------------------------------------------

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::istringstream in(slurp_maybe_gzip(path));
  EmbeddingTable table;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string term;
    if (!(ls >> term)) continue;
    std::vector<double> vec;
    double v;
    while (ls >> v) vec.push_back(v);
    if (vec.empty())
      throw DataError("embedding line " + std::to_string(lineno) +
                      ": no vector components");
    if (table.dim_ == 0) table.dim_ = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != table.dim_)
      throw DataError("embedding line " + std::to_string(lineno) +
                      ": dimension mismatch");
    table.vectors_[term] = std::move(vec);
  }
  return table;
}

const std::vector<double>* EmbeddingTable::lookup(const std::string& term) const {
  auto it = vectors_.find(term);
  return it == vectors_.end() ? nullptr : &it->second;
}

void EmbeddingTable::insert(const std::string& term, std::vector<double> vec) {
  if (dim_ == 0) dim_ = static_cast<int>(vec.size());
  if (static_cast<int>(vec.size()) != dim_)
    throw DataError("embedding dimension mismatch on insert");
  vectors_[term] = std::move(vec);
}

// ---- string / URL helpers --------------------------------------------------

int64_t edit_distance(const std::string& a, const std::string& b) {
  const size_t n = a.size(), m = b.size();
  if (n == 0) return static_cast<int64_t>(m);
  if (m == 0) return static_cast<int64_t>(n);
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double normalized_edit_distance(const std::string& a, const std::string& b) {
  size_t longer = std::max(a.size(), b.size());
  if (longer == 0) return 0.0;
  return static_cast<double>(edit_distance(a, b)) / static_cast<double>(longer);
}

std::string normalize_url(const std::string& url) {
  std::string s = url;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  auto strip_prefix = [&](const std::string& p) {
    if (s.rfind(p, 0) == 0) s.erase(0, p.size());
  };
  strip_prefix("http://");
  strip_prefix("https://");
  strip_prefix("www.");
  size_t cut = s.find_first_of("?#");
  if (cut != std::string::npos) s.erase(cut);
  while (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

std::vector<std::string> url_tokens(const std::string& normalized_url) {
  std::vector<std::string> toks;
  size_t start = 0;
  while (start <= normalized_url.size()) {
    size_t pos = normalized_url.find('/', start);
    std::string part = pos == std::string::npos
                           ? normalized_url.substr(start)
                           : normalized_url.substr(start, pos - start);
    if (!part.empty()) toks.push_back(part);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return toks;
}

// ---- pair affinities -------------------------------------------------------

double term_affinity(const Query& a, const Query& b) {
  std::vector<std::string> sa = sorted_unique(a.terms);
  std::vector<std::string> sb = sorted_unique(b.terms);
  double cos = set_cosine(sa, sb);
  double jac = set_jaccard(sa, sb);
  double common = jac;  // proportion of common terms over the union
  // Raw strings when available; corpora loaded from the normalized format
  // fall back to the space-joined terms.
  const std::string ra = a.raw_text.empty() ? join_terms(a.terms) : a.raw_text;
  const std::string rb = b.raw_text.empty() ? join_terms(b.terms) : b.raw_text;
  double edit = 1.0 - normalized_edit_distance(ra, rb);
  return clamp01(cos) + clamp01(edit) + clamp01(jac) + clamp01(common);
}

double url_affinity(const Query& a, const Query& b) {
  if (a.clicked_urls.empty() || b.clicked_urls.empty()) return 0.0;
  double min_edit = 1.0, sum_edit = 0.0;
  double max_jac = 0.0, sum_jac = 0.0;
  int64_t pairs = 0;
  for (const std::string& ua : a.clicked_urls) {
    std::string na = normalize_url(ua);
    std::vector<std::string> ta = sorted_unique(url_tokens(na));
    for (const std::string& ub : b.clicked_urls) {
      std::string nb = normalize_url(ub);
      std::vector<std::string> tb = sorted_unique(url_tokens(nb));
      double ed = normalized_edit_distance(na, nb);
      double jc = set_jaccard(ta, tb);
      min_edit = std::min(min_edit, ed);
      sum_edit += ed;
      max_jac = std::max(max_jac, jc);
      sum_jac += jc;
      ++pairs;
    }
  }
  double avg_edit = sum_edit / static_cast<double>(pairs);
  double avg_jac = sum_jac / static_cast<double>(pairs);
  return clamp01(1.0 - min_edit) + clamp01(1.0 - avg_edit) + clamp01(max_jac) +
         clamp01(avg_jac);
}

double session_affinity(const Query& a, const Query& b) {
  double v = 0.0;
  if (a.user_id == b.user_id) {
    v += 1.0;
    if (a.session_id == b.session_id && a.session_id >= 0) v += 1.0;
  }
  return v;
}

double embedding_affinity(const Query& a, const Query& b,
                          const EmbeddingTable* table) {
  if (!table || table->empty()) return 0.0;
  std::vector<double> va = mean_term_vector(a.terms, *table);
  std::vector<double> vb = mean_term_vector(b.terms, *table);
  if (va.empty() || vb.empty()) return 0.0;
  return clamp01(vec_cosine(va, vb));
}

AffinityVec pair_affinity(const Query& a, const Query& b,
                          const EmbeddingTable* table) {
  return {term_affinity(a, b), url_affinity(a, b), session_affinity(a, b),
          embedding_affinity(a, b, table)};
}

// ---- AffinityStats ---------------------------------------------------------

void AffinityStats::add_pair(const AffinityVec& v) {
  for (int k = 0; k < kNumAffinityClasses; ++k)
    fixed_sum[k] += llround(v[k] * static_cast<double>(kFixedOne));
  ++n_pairs;
}

AffinityStats& AffinityStats::operator+=(const AffinityStats& o) {
  for (int k = 0; k < kNumAffinityClasses; ++k) fixed_sum[k] += o.fixed_sum[k];
  n_pairs += o.n_pairs;
  return *this;
}

std::array<int64_t, kNumAffinityClasses> group_affinity(
    const AffinityStats& stats, int64_t resolution) {
  if (resolution < 1) throw DataError("affinity resolution must be >= 1");
  std::array<int64_t, kNumAffinityClasses> counts{};
  double denom = static_cast<double>(std::max<int64_t>(stats.n_pairs, 1));
  for (int k = 0; k < kNumAffinityClasses; ++k) {
    double avg = stats.pair_sum(k) / denom;
    counts[k] = llround(static_cast<double>(resolution) * avg);
  }
  return counts;
}

// ---- AffinityContext -------------------------------------------------------

AffinityContext::AffinityContext(const LogCorpus& corpus,
                                 const EmbeddingTable* table)
    : corpus_(&corpus) {
  feats_.resize(corpus.queries.size());
  for (size_t i = 0; i < corpus.queries.size(); ++i) {
    const Query& q = corpus.queries[i];
    QueryFeatures& f = feats_[i];
    f.term_set = sorted_unique(q.terms);
    f.joined_terms = q.raw_text.empty() ? join_terms(q.terms) : q.raw_text;
    for (const std::string& u : q.clicked_urls) {
      std::string nu = normalize_url(u);
      f.url_token_sets.push_back(sorted_unique(url_tokens(nu)));
      f.norm_urls.push_back(std::move(nu));
    }
    if (table && !table->empty())
      f.embedding = mean_term_vector(q.terms, *table);
    f.user = &q.user_id;
    f.session = q.session_id;
  }
}

AffinityVec AffinityContext::pair(int64_t qa, int64_t qb) const {
  const QueryFeatures& a = feats_[static_cast<size_t>(qa)];
  const QueryFeatures& b = feats_[static_cast<size_t>(qb)];

  double cos = set_cosine(a.term_set, b.term_set);
  double jac = set_jaccard(a.term_set, b.term_set);
  double edit = 1.0 - normalized_edit_distance(a.joined_terms, b.joined_terms);
  double term = clamp01(cos) + clamp01(edit) + clamp01(jac) + clamp01(jac);

  double url = 0.0;
  if (!a.norm_urls.empty() && !b.norm_urls.empty()) {
    double min_edit = 1.0, sum_edit = 0.0, max_jac = 0.0, sum_jac = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < a.norm_urls.size(); ++i) {
      for (size_t j = 0; j < b.norm_urls.size(); ++j) {
        double ed = normalized_edit_distance(a.norm_urls[i], b.norm_urls[j]);
        double jc = set_jaccard(a.url_token_sets[i], b.url_token_sets[j]);
        min_edit = std::min(min_edit, ed);
        sum_edit += ed;
        max_jac = std::max(max_jac, jc);
        sum_jac += jc;
        ++pairs;
      }
    }
    url = clamp01(1.0 - min_edit) +
          clamp01(1.0 - sum_edit / static_cast<double>(pairs)) +
          clamp01(max_jac) + clamp01(sum_jac / static_cast<double>(pairs));
  }

  double sess = 0.0;
  if (*a.user == *b.user) {
    sess += 1.0;
    if (a.session == b.session && a.session >= 0) sess += 1.0;
  }

  double emb = 0.0;
  if (!a.embedding.empty() && !b.embedding.empty())
    emb = clamp01(vec_cosine(a.embedding, b.embedding));

  return {term, url, sess, emb};
}

AffinityStats AffinityContext::group_stats(
    const std::vector<int64_t>& ids) const {
  AffinityStats s;
  for (size_t i = 0; i < ids.size(); ++i)
    for (size_t j = i + 1; j < ids.size(); ++j) s.add_pair(pair(ids[i], ids[j]));
  return s;
}

AffinityStats AffinityContext::cross_stats(const std::vector<int64_t>& a,
                                           const std::vector<int64_t>& b) const {
  AffinityStats s;
  for (int64_t x : a)
    for (int64_t y : b) s.add_pair(pair(x, y));
  return s;
}

}  // namespace taskforest
