#include "taskforest/query_log.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace taskforest {

namespace {

const std::unordered_set<std::string>& stopword_set() {
  static const std::unordered_set<std::string> kStopwords = {
      "a", "an",  "and", "are", "as",   "at",  "be", "by",   "for", "from",
      "in", "is", "it",  "of",  "on",   "or",  "s",  "the",  "to",  "was",
      "we", "what", "when", "where", "which", "who", "will", "with", "www"};
  return kStopwords;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

bool parse_int(const std::string& s, int64_t& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && !s.empty();
}

// Civil-date <-> epoch-day arithmetic (proleptic Gregorian, UTC).
int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

}  // namespace

std::vector<std::string> normalize_text(const std::string& raw) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (char c : raw) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc))
      cleaned.push_back(static_cast<char>(std::tolower(uc)));
    else
      cleaned.push_back(' ');
  }
  std::vector<std::string> terms;
  std::istringstream iss(cleaned);
  std::string tok;
  while (iss >> tok) terms.push_back(tok);
  return terms;
}

std::optional<int64_t> parse_timestamp(const std::string& s) {
  // Strict "YYYY-MM-DD HH:MM:SS".
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' || s[10] != ' ' ||
      s[13] != ':' || s[16] != ':')
    return std::nullopt;
  auto num = [&](size_t pos, size_t len) -> std::optional<int64_t> {
    std::string part = s.substr(pos, len);
    if (!all_digits(part)) return std::nullopt;
    int64_t v = 0;
    parse_int(part, v);
    return v;
  };
  auto y = num(0, 4), mo = num(5, 2), d = num(8, 2);
  auto h = num(11, 2), mi = num(14, 2), sec = num(17, 2);
  if (!y || !mo || !d || !h || !mi || !sec) return std::nullopt;
  if (*mo < 1 || *mo > 12 || *d < 1 || *d > 31 || *h > 23 || *mi > 59 ||
      *sec > 60)
    return std::nullopt;
  int64_t days = days_from_civil(*y, static_cast<unsigned>(*mo),
                                 static_cast<unsigned>(*d));
  return days * 86400 + *h * 3600 + *mi * 60 + *sec;
}

std::string format_timestamp(int64_t epoch_seconds) {
  int64_t days = epoch_seconds / 86400;
  int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u %02lld:%02lld:%02lld",
                static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600),
                static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

LogCorpus parse_log(std::istream& in, ParseReport* report,
                    bool drop_stopwords) {
  LogCorpus corpus;
  ParseReport local;
  std::string line;
  bool first = true;
  // Folding state: last emitted record's raw triple.
  std::string prev_user, prev_raw, prev_time;
  bool have_prev = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line.rfind("AnonID", 0) == 0) continue;  // header row
    }
    if (line.empty()) continue;
    ++local.rows;
    std::vector<std::string> cols = split_on(line, '\t');
    if (cols.size() < 3 || cols.size() > 5) {
      ++local.malformed;
      continue;
    }
    const std::string& user = cols[0];
    const std::string& raw = cols[1];
    const std::string& when = cols[2];
    std::string url = cols.size() >= 5 ? cols[4] : "";
    auto ts = parse_timestamp(when);
    if (user.empty() || !ts) {
      ++local.malformed;
      continue;
    }
    if (have_prev && user == prev_user && raw == prev_raw && when == prev_time) {
      // Click row for the same query event: fold the URL in.
      if (!url.empty()) corpus.queries.back().clicked_urls.push_back(url);
      continue;
    }
    std::vector<std::string> terms = normalize_text(raw);
    if (drop_stopwords) {
      const auto& stop = stopword_set();
      std::erase_if(terms, [&](const std::string& t) { return stop.count(t) > 0; });
    }
    if (terms.empty()) {
      ++local.dropped_empty;
      have_prev = false;
      continue;
    }
    Query q;
    q.query_id = static_cast<int64_t>(corpus.queries.size());
    q.user_id = user;
    q.timestamp = *ts;
    q.raw_text = raw;
    q.terms = std::move(terms);
    if (!url.empty()) q.clicked_urls.push_back(url);
    corpus.queries.push_back(std::move(q));
    ++local.records;
    prev_user = user;
    prev_raw = raw;
    prev_time = when;
    have_prev = true;
  }
  if (report) *report = local;
  return corpus;
}

std::string slurp_maybe_gzip(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (data.size() >= 2 && static_cast<unsigned char>(data[0]) == 0x1f &&
      static_cast<unsigned char>(data[1]) == 0x8b) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
      throw DataError("zlib init failed for: " + path);
    std::string out;
    std::array<char, 1 << 16> buf;
    zs.next_in = reinterpret_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    int rc = Z_OK;
    do {
      zs.next_out = reinterpret_cast<Bytef*>(buf.data());
      zs.avail_out = static_cast<uInt>(buf.size());
      rc = inflate(&zs, Z_NO_FLUSH);
      if (rc != Z_OK && rc != Z_STREAM_END) {
        inflateEnd(&zs);
        throw DataError("gzip decompression failed for: " + path);
      }
      out.append(buf.data(), buf.size() - zs.avail_out);
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
  }
  return data;
}

LogCorpus parse_log_file(const std::string& path, ParseReport* report,
                         bool drop_stopwords) {
  std::istringstream in(slurp_maybe_gzip(path));
  return parse_log(in, report, drop_stopwords);
}

void sessionize(LogCorpus& corpus, int64_t timeout_seconds) {
  if (timeout_seconds <= 0) throw DataError("session timeout must be positive");
  // user -> query indexes, users visited in lexicographic order.
  std::map<std::string, std::vector<size_t>> by_user;
  for (size_t i = 0; i < corpus.queries.size(); ++i)
    by_user[corpus.queries[i].user_id].push_back(i);
  int64_t next_session = 0;
  for (auto& [user, idxs] : by_user) {
    std::stable_sort(idxs.begin(), idxs.end(), [&](size_t a, size_t b) {
      const Query& qa = corpus.queries[a];
      const Query& qb = corpus.queries[b];
      if (qa.timestamp != qb.timestamp) return qa.timestamp < qb.timestamp;
      return qa.query_id < qb.query_id;
    });
    int64_t prev_ts = 0;
    bool open = false;
    for (size_t idx : idxs) {
      Query& q = corpus.queries[idx];
      if (!open || q.timestamp - prev_ts > timeout_seconds) {
        q.session_id = next_session++;
        open = true;
      } else {
        q.session_id = next_session - 1;
      }
      prev_ts = q.timestamp;
    }
  }
}

void write_corpus(const LogCorpus& corpus, std::ostream& out,
                  const std::string& header_comment) {
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  for (const Query& q : corpus.queries) {
    out << q.query_id << '\t' << q.user_id << '\t' << q.session_id << '\t'
        << q.timestamp << '\t';
    for (size_t i = 0; i < q.terms.size(); ++i) {
      if (i) out << ' ';
      out << q.terms[i];
    }
    out << '\t';
    for (size_t i = 0; i < q.clicked_urls.size(); ++i) {
      if (i) out << ',';
      out << q.clicked_urls[i];
    }
    out << '\n';
  }
}

void write_corpus_file(const LogCorpus& corpus, const std::string& path,
                       const std::string& header_comment) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path);
  write_corpus(corpus, f, header_comment);
}

LogCorpus read_corpus(std::istream& in) {
  LogCorpus corpus;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols = split_on(line, '\t');
    if (cols.size() != 6)
      throw DataError("corpus line " + std::to_string(lineno) +
                      ": expected 6 fields, got " + std::to_string(cols.size()));
    Query q;
    if (!parse_int(cols[0], q.query_id) || q.query_id < 0)
      throw DataError("corpus line " + std::to_string(lineno) + ": bad query_id");
    q.user_id = cols[1];
    if (!parse_int(cols[2], q.session_id))
      throw DataError("corpus line " + std::to_string(lineno) + ": bad session_id");
    if (!parse_int(cols[3], q.timestamp))
      throw DataError("corpus line " + std::to_string(lineno) + ": bad timestamp");
    q.terms = cols[4].empty() ? std::vector<std::string>{} : split_on(cols[4], ' ');
    std::erase(q.terms, "");
    if (q.terms.empty())
      throw DataError("corpus line " + std::to_string(lineno) + ": no terms");
    if (!cols[5].empty()) {
      q.clicked_urls = split_on(cols[5], ',');
      std::erase(q.clicked_urls, "");
    }
    q.raw_text = cols[4];  // raw text is not persisted; terms stand in
    corpus.queries.push_back(std::move(q));
  }
  // query_ids must be dense and in order for downstream indexing.
  for (size_t i = 0; i < corpus.queries.size(); ++i)
    if (corpus.queries[i].query_id != static_cast<int64_t>(i))
      throw DataError("corpus query_ids must be dense and ascending from 0");
  return corpus;
}

LogCorpus read_corpus_file(const std::string& path) {
  std::istringstream in(slurp_maybe_gzip(path));
  return read_corpus(in);
}

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace taskforest
