#include "taskforest/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "taskforest/query_log.hpp"
#include "taskforest/version.hpp"

namespace taskforest {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size())
    throw DataError("config key '" + key + "': bad number '" + value + "'");
  return v;
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    int64_t v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("config key '" + key + "': bad integer '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw DataError("config key '" + key + "': bad boolean '" + value + "'");
}

std::vector<double> parse_fraction_list(const std::string& key,
                                        const std::string& value) {
  std::vector<double> out;
  size_t start = 0;
  while (start <= value.size()) {
    size_t pos = value.find(',', start);
    std::string part = pos == std::string::npos
                           ? value.substr(start)
                           : value.substr(start, pos - start);
    if (!part.empty()) out.push_back(parse_double(key, part));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (out.empty())
    throw DataError("config key '" + key + "': empty fraction list");
  return out;
}

int class_index(const std::string& name, const std::string& key) {
  if (name == "term") return kTermClass;
  if (name == "url") return kUrlClass;
  if (name == "session") return kSessionClass;
  if (name == "embedding") return kEmbeddingClass;
  throw DataError("config key '" + key + "': unknown affinity class");
}

}  // namespace

void apply_config_entry(RunConfig* config, const std::string& key,
                        const std::string& value) {
  if (key == "corpus") {
    config->corpus = value;
  } else if (key == "out_dir") {
    config->out_dir = value;
  } else if (key == "embeddings") {
    config->embeddings = value;
  } else if (key == "reference_corpus") {
    config->reference_corpus = value;
  } else if (key == "gold") {
    config->gold = value;
  } else if (key == "timeout_mins") {
    config->timeout_mins = parse_double(key, value);
  } else if (key == "drop_stopwords") {
    config->drop_stopwords = parse_bool(key, value);
  } else if (key == "gamma") {
    config->model.gamma = parse_double(key, value);
  } else if (key.rfind("alpha.", 0) == 0) {
    config->model.classes[class_index(key.substr(6), key)].alpha =
        parse_double(key, value);
  } else if (key.rfind("beta.", 0) == 0) {
    config->model.classes[class_index(key.substr(5), key)].beta =
        parse_double(key, value);
  } else if (key == "resolution") {
    config->model.resolution = parse_int(key, value);
  } else if (key == "threshold") {
    config->threshold = parse_double(key, value);
  } else if (key == "literal_pmi") {
    config->literal_pmi = parse_bool(key, value);
  } else if (key == "blocking") {
    config->blocking = parse_bool(key, value);
  } else if (key == "threads") {
    config->threads = static_cast<int>(parse_int(key, value));
  } else if (key == "k") {
    config->k = parse_int(key, value);
  } else if (key == "fractions") {
    config->fractions = parse_fraction_list(key, value);
  } else if (key == "seed") {
    config->seed = static_cast<uint64_t>(parse_int(key, value));
  } else {
    throw DataError("unknown config key '" + key + "'");
  }
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig config;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw DataError("config line " + std::to_string(lineno) +
                      ": expected key=value");
    apply_config_entry(&config, line.substr(0, eq), line.substr(eq + 1));
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open config file: " + path);
  return parse_run_config(f);
}

std::string serialize_run_config(const RunConfig& config) {
  static const char* kClassNames[kNumAffinityClasses] = {"term", "url",
                                                         "session", "embedding"};
  std::ostringstream out;
  out << "corpus=" << config.corpus << "\n";
  out << "out_dir=" << config.out_dir << "\n";
  out << "embeddings=" << config.embeddings << "\n";
  out << "reference_corpus=" << config.reference_corpus << "\n";
  out << "gold=" << config.gold << "\n";
  out << "timeout_mins=" << format_double(config.timeout_mins) << "\n";
  out << "drop_stopwords=" << (config.drop_stopwords ? "true" : "false")
      << "\n";
  out << "gamma=" << format_double(config.model.gamma) << "\n";
  for (int k = 0; k < kNumAffinityClasses; ++k)
    out << "alpha." << kClassNames[k] << "="
        << format_double(config.model.classes[k].alpha) << "\n";
  for (int k = 0; k < kNumAffinityClasses; ++k)
    out << "beta." << kClassNames[k] << "="
        << format_double(config.model.classes[k].beta) << "\n";
  out << "resolution=" << config.model.resolution << "\n";
  out << "threshold=" << format_double(config.threshold) << "\n";
  out << "literal_pmi=" << (config.literal_pmi ? "true" : "false") << "\n";
  out << "blocking=" << (config.blocking ? "true" : "false") << "\n";
  out << "threads=" << config.threads << "\n";
  out << "k=" << config.k << "\n";
  out << "fractions=";
  for (size_t i = 0; i < config.fractions.size(); ++i) {
    if (i) out << ',';
    out << format_double(config.fractions[i]);
  }
  out << "\n";
  out << "seed=" << config.seed << "\n";
  return out.str();
}

void save_run_config(const RunConfig& config, std::ostream& out) {
  out << serialize_run_config(config);
}

std::string run_config_hash(const RunConfig& config) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(serialize_run_config(config))));
  return buf;
}

std::string artifact_header(const RunConfig& config) {
  return std::string("taskforest ") + kVersion +
         " config=" + run_config_hash(config);
}

}  // namespace taskforest
