#include "taskforest/synthetic.hpp"

#include <array>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace taskforest {

namespace {

// Word-like lowercase string, unique within the generator run.
std::string fresh_word(std::mt19937_64& rng, std::set<std::string>& used) {
  while (true) {
    size_t len = 5 + rng() % 4;
    std::string w;
    for (size_t i = 0; i < len; ++i)
      w.push_back(static_cast<char>('a' + rng() % 26));
    if (used.insert(w).second) return w;
  }
}

std::string join_terms(const std::vector<std::string>& terms) {
  std::string out;
  for (const std::string& t : terms) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace

PlantedCorpus make_planted_corpus(const PlantedSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::set<std::string> used;

  std::vector<std::string> task_terms;
  std::vector<std::vector<std::array<std::string, 2>>> sub_terms(
      static_cast<size_t>(spec.tasks));
  for (int64_t t = 0; t < spec.tasks; ++t) {
    task_terms.push_back(fresh_word(rng, used));
    for (int64_t s = 0; s < spec.subtasks_per_task; ++s)
      sub_terms[static_cast<size_t>(t)].push_back(
          {fresh_word(rng, used), fresh_word(rng, used)});
  }

  PlantedCorpus planted;
  int64_t base_time = *parse_timestamp("2006-03-01 00:00:00");
  int64_t session_id = 0;
  for (int64_t t = 0; t < spec.tasks; ++t) {
    std::string user = std::to_string(1000 + t);
    int64_t cursor = base_time + t * 86400;
    for (int64_t s = 0; s < spec.subtasks_per_task; ++s) {
      const auto& subs = sub_terms[static_cast<size_t>(t)][static_cast<size_t>(s)];
      int64_t global_sub = t * spec.subtasks_per_task + s;
      int64_t per = spec.queries_per_subtask / spec.sessions_per_subtask;
      int64_t extra = spec.queries_per_subtask % spec.sessions_per_subtask;
      for (int64_t sess = 0; sess < spec.sessions_per_subtask; ++sess) {
        int64_t count = per + (sess < extra ? 1 : 0);
        if (count == 0) continue;
        cursor += 3600;  // over the session timeout: new session starts here
        for (int64_t i = 0; i < count; ++i) {
          cursor += 60;
          Query q;
          q.query_id = static_cast<int64_t>(planted.corpus.queries.size());
          q.user_id = user;
          q.session_id = session_id;
          q.timestamp = cursor;
          q.terms = {task_terms[static_cast<size_t>(t)], subs[0], subs[1]};
          q.raw_text = join_terms(q.terms);
          if (spec.with_clicks && i % 2 == 0)
            q.clicked_urls.push_back("http://www." + subs[0] + ".com/" +
                                     subs[1]);
          planted.corpus.queries.push_back(std::move(q));
          planted.task_of.push_back(t);
          planted.subtask_of.push_back(global_sub);
        }
        ++session_id;
      }
    }
  }
  return planted;
}

void write_planted_log(const PlantedCorpus& planted, std::ostream& out) {
  out << "AnonID\tQuery\tQueryTime\tItemRank\tClickURL\n";
  for (const Query& q : planted.corpus.queries) {
    out << q.user_id << '\t' << q.raw_text << '\t'
        << format_timestamp(q.timestamp);
    if (!q.clicked_urls.empty()) out << "\t1\t" << q.clicked_urls.front();
    out << '\n';
  }
}

void write_planted_gold(const PlantedCorpus& planted, std::ostream& out) {
  for (size_t i = 0; i < planted.subtask_of.size(); ++i)
    out << i << "\tsubtask_" << planted.subtask_of[i] << '\n';
}

LogCorpus make_random_corpus(int64_t n_queries, uint64_t seed) {
  static const char* kVocab[] = {"alpha", "bravo", "candle", "delta",
                                 "ember",  "frost", "grove",  "harbor"};
  static const char* kUrls[] = {
      "http://www.redsite.com/a", "http://www.redsite.com/b",
      "http://bluesite.org/page", "https://greensite.net/x?id=1"};
  std::mt19937_64 rng(seed);
  LogCorpus corpus;
  int64_t n_users = 1 + static_cast<int64_t>(rng() % 3);
  std::vector<int64_t> cursors(static_cast<size_t>(n_users),
                               *parse_timestamp("2006-05-01 08:00:00"));
  for (int64_t i = 0; i < n_queries; ++i) {
    Query q;
    q.query_id = i;
    int64_t user = static_cast<int64_t>(rng() % n_users);
    q.user_id = "u" + std::to_string(user);
    int64_t& cursor = cursors[static_cast<size_t>(user)];
    cursor += rng() % 4 == 0 ? 7200 : 60 + static_cast<int64_t>(rng() % 300);
    q.timestamp = cursor;
    size_t n_terms = 1 + rng() % 3;
    std::set<std::string> terms;
    while (terms.size() < n_terms) terms.insert(kVocab[rng() % 8]);
    q.terms.assign(terms.begin(), terms.end());
    q.raw_text = join_terms(q.terms);
    size_t n_clicks = rng() % 3;
    for (size_t c = 0; c < n_clicks; ++c)
      q.clicked_urls.push_back(kUrls[rng() % 4]);
    corpus.queries.push_back(std::move(q));
  }
  sessionize(corpus);
  return corpus;
}

}  // namespace taskforest
