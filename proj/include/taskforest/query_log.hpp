#pragma once

// Query-log ingestion: AOL-style TSV parsing, normalization, sessionization
// and the normalized corpus file format.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace taskforest {

// Raised for malformed input files / values (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Query {
  int64_t query_id = -1;     // dense, assigned in input order
  std::string user_id;
  int64_t session_id = -1;   // -1 until sessionize() runs
  int64_t timestamp = 0;     // seconds since epoch, UTC
  std::string raw_text;
  std::vector<std::string> terms;        // normalized, may repeat
  std::vector<std::string> clicked_urls; // as recorded, possibly empty
};

struct LogCorpus {
  std::vector<Query> queries;

  int64_t size() const { return static_cast<int64_t>(queries.size()); }
};

struct ParseReport {
  int64_t rows = 0;            // data rows seen (header excluded)
  int64_t records = 0;         // Query records produced
  int64_t dropped_empty = 0;   // rows whose normalized text was empty
  int64_t malformed = 0;       // rows skipped as unparseable
};

// Lowercase, strip punctuation to spaces, split on whitespace.
// "Wedding-Dress NYC!" -> {"wedding","dress","nyc"}.
std::vector<std::string> normalize_text(const std::string& raw);

// "YYYY-MM-DD HH:MM:SS" (UTC) <-> epoch seconds. parse returns nullopt on
// malformed input; format is the exact inverse for valid timestamps.
std::optional<int64_t> parse_timestamp(const std::string& s);
std::string format_timestamp(int64_t epoch_seconds);

// Parse an AOL-style TSV stream (AnonID, Query, QueryTime, ItemRank,
// ClickURL; header row skipped). Consecutive click rows for the same
// (AnonID, Query, QueryTime) triple fold into one Query with several
// clicked_urls. Rows normalizing to zero terms are dropped and counted.
// query_ids are dense in input order; session_id is left at -1.
LogCorpus parse_log(std::istream& in, ParseReport* report = nullptr,
                    bool drop_stopwords = false);

// Convenience: open path (gzip accepted, sniffed by magic bytes) and parse.
LogCorpus parse_log_file(const std::string& path, ParseReport* report = nullptr,
                         bool drop_stopwords = false);

// Assign session ids: per user, a gap > timeout between consecutive queries
// starts a new session. Ids are globally unique, assigned over users in
// lexicographic order and time ascending within a user. Idempotent.
void sessionize(LogCorpus& corpus, int64_t timeout_seconds = 30 * 60);

// Normalized corpus file format, one record per line:
//   query_id \t user_id \t session_id \t timestamp \t terms \t urls
// terms space-joined, urls comma-joined; '#' lines are comments.
// Round-trips bit-exactly through write_corpus/read_corpus.
void write_corpus(const LogCorpus& corpus, std::ostream& out,
                  const std::string& header_comment = "");
void write_corpus_file(const LogCorpus& corpus, const std::string& path,
                       const std::string& header_comment = "");
LogCorpus read_corpus(std::istream& in);
LogCorpus read_corpus_file(const std::string& path);

// Reads a whole file into a string, transparently inflating gzip input.
std::string slurp_maybe_gzip(const std::string& path);

// FNV-1a 64-bit, used for config/corpus fingerprints.
uint64_t fnv1a64(const std::string& data);

}  // namespace taskforest
