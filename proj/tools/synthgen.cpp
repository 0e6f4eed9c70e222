// Regenerates the bundled synthetic data under data/:
//   sample_queries.tsv            200-query log (5 tasks x 2 subtasks x 20)
//   synthetic_10k.tsv.gz          10,000-query log (100 tasks x 4 subtasks x 25)
//   synthetic_10k_gold.tsv        planted subtask labels for the 10k log
//   synthetic_10k_gold_tasks.tsv  the same queries labeled at task granularity
// Output is a pure function of the seeds below, so the files are stable.

#include <zlib.h>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "taskforest/synthetic.hpp"

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    std::cerr << "cannot write " << path << "\n";
    std::exit(1);
  }
  f << content;
}

void write_gzip(const std::string& path, const std::string& content) {
  gzFile f = gzopen(path.c_str(), "wb9");
  if (!f) {
    std::cerr << "cannot write " << path << "\n";
    std::exit(1);
  }
  if (gzwrite(f, content.data(), static_cast<unsigned>(content.size())) == 0) {
    std::cerr << "gzwrite failed for " << path << "\n";
    std::exit(1);
  }
  gzclose(f);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: synthgen <output-dir>\n";
    return 1;
  }
  std::string dir = argv[1];

  {
    taskforest::PlantedSpec spec;
    spec.tasks = 5;
    spec.subtasks_per_task = 2;
    spec.queries_per_subtask = 20;
    spec.sessions_per_subtask = 5;
    spec.with_clicks = true;
    spec.seed = 7;
    taskforest::PlantedCorpus planted = taskforest::make_planted_corpus(spec);
    std::ostringstream log;
    taskforest::write_planted_log(planted, log);
    write_file(dir + "/sample_queries.tsv", log.str());
  }

  {
    taskforest::PlantedSpec spec;
    spec.tasks = 100;
    spec.subtasks_per_task = 4;
    spec.queries_per_subtask = 25;
    spec.sessions_per_subtask = 5;
    spec.with_clicks = true;
    spec.seed = 42;
    taskforest::PlantedCorpus planted = taskforest::make_planted_corpus(spec);
    std::ostringstream log;
    taskforest::write_planted_log(planted, log);
    write_gzip(dir + "/synthetic_10k.tsv.gz", log.str());
    std::ostringstream gold;
    taskforest::write_planted_gold(planted, gold);
    write_file(dir + "/synthetic_10k_gold.tsv", gold.str());
    std::ostringstream tasks;
    for (size_t i = 0; i < planted.task_of.size(); ++i)
      tasks << i << "\ttask_" << planted.task_of[i] << '\n';
    write_file(dir + "/synthetic_10k_gold_tasks.tsv", tasks.str());
  }

  std::cout << "wrote sample_queries.tsv, synthetic_10k.tsv.gz, "
               "synthetic_10k_gold.tsv, synthetic_10k_gold_tasks.tsv to "
            << dir << "\n";
  return 0;
}
