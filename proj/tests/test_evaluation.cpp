#include <random>
#include <sstream>

#include "doctest.h"
#include "taskforest/evaluation.hpp"

using namespace taskforest;

namespace {

TaskLabeling labeling_of(const std::vector<std::string>& labels) {
  TaskLabeling l;
  for (size_t i = 0; i < labels.size(); ++i)
    l.assignment[static_cast<int64_t>(i)] = labels[i];
  return l;
}

// Brute force over all unordered pairs, the definition itself.
PairwiseScore brute_force_prf(const TaskLabeling& pred,
                              const TaskLabeling& gold) {
  std::vector<int64_t> ids;
  for (const auto& [qid, label] : pred.assignment) ids.push_back(qid);
  PairwiseScore s;
  for (size_t i = 0; i < ids.size(); ++i) {
    for (size_t j = i + 1; j < ids.size(); ++j) {
      bool p = pred.assignment.at(ids[i]) == pred.assignment.at(ids[j]);
      bool g = gold.assignment.at(ids[i]) == gold.assignment.at(ids[j]);
      s.same_predicted += p;
      s.same_gold += g;
      s.same_both += (p && g);
    }
  }
  s.precision = s.same_predicted ? double(s.same_both) / s.same_predicted : 0.0;
  s.recall = s.same_gold ? double(s.same_both) / s.same_gold : 0.0;
  s.f1 = (s.precision + s.recall) == 0.0
             ? 0.0
             : 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// Two leaf tasks over a six-query corpus, as a pruned hierarchy would leave.
TaskForest two_leaf_forest() {
  TaskForest f;
  f.nodes.resize(3);
  f.n_queries = 6;
  f.nodes[0].id = 0;
  f.nodes[0].parent = 2;
  f.nodes[0].queries = {0, 1, 2};
  f.nodes[1].id = 1;
  f.nodes[1].parent = 2;
  f.nodes[1].queries = {3, 4, 5};
  f.nodes[2].id = 2;
  f.nodes[2].parent = -1;
  f.nodes[2].children = {0, 1};
  f.roots = {2};
  return f;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("pairwise scores on the canonical hand example") {
  // Gold groups {a,b} and {c}; the prediction lumps all three together.
  TaskLabeling gold = labeling_of({"t1", "t1", "t2"});
  TaskLabeling pred = labeling_of({"x", "x", "x"});
  PairwiseScore s = pairwise_prf(pred, gold);
  CHECK(s.same_predicted == 3);
  CHECK(s.same_gold == 1);
  CHECK(s.same_both == 1);
  CHECK(s.precision == doctest::Approx(1.0 / 3.0));
  CHECK(s.recall == doctest::Approx(1.0));
  CHECK(s.f1 == doctest::Approx(0.5));
}

TEST_CASE("pairwise scores: identity, singletons, and invariances") {
  TaskLabeling gold = labeling_of({"a", "a", "b", "b", "c"});
  PairwiseScore perfect = pairwise_prf(gold, gold);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  // All singletons on both sides: every ratio is 0/0, scored 0.
  TaskLabeling singles = labeling_of({"1", "2", "3", "4", "5"});
  PairwiseScore none = pairwise_prf(singles, singles);
  CHECK(none.same_predicted == 0);
  CHECK(none.f1 == 0.0);

  // Scores depend on the grouping, not the label strings.
  TaskLabeling renamed = labeling_of({"zz", "zz", "qq", "qq", "ww"});
  TaskLabeling pred = labeling_of({"x", "x", "x", "y", "y"});
  PairwiseScore s1 = pairwise_prf(pred, gold);
  PairwiseScore s2 = pairwise_prf(pred, renamed);
  CHECK(s1.precision == s2.precision);
  CHECK(s1.recall == s2.recall);
  CHECK(s1.f1 == s2.f1);

  // Swapping the roles swaps precision and recall.
  PairwiseScore fwd = pairwise_prf(pred, gold);
  PairwiseScore rev = pairwise_prf(gold, pred);
  CHECK(fwd.precision == doctest::Approx(rev.recall));
  CHECK(fwd.recall == doctest::Approx(rev.precision));
  CHECK(fwd.f1 == doctest::Approx(rev.f1));
}

TEST_CASE("pairwise scores require identical query id sets") {
  TaskLabeling a = labeling_of({"x", "x"});
  TaskLabeling b = labeling_of({"x", "x", "y"});
  CHECK_THROWS_AS(pairwise_prf(a, b), DataError);

  TaskLabeling c;
  c.assignment[0] = "x";
  c.assignment[7] = "x";
  CHECK_THROWS_AS(pairwise_prf(a, c), DataError);
}

TEST_CASE("pairwise scores agree with the brute-force definition") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    int64_t n = 2 + static_cast<int64_t>(rng() % 29);
    int64_t n_pred = 1 + static_cast<int64_t>(rng() % 6);
    int64_t n_gold = 1 + static_cast<int64_t>(rng() % 6);
    TaskLabeling pred, gold;
    for (int64_t q = 0; q < n; ++q) {
      pred.assignment[q] = "p" + std::to_string(rng() % n_pred);
      gold.assignment[q] = "g" + std::to_string(rng() % n_gold);
    }
    PairwiseScore fast = pairwise_prf(pred, gold);
    PairwiseScore slow = brute_force_prf(pred, gold);
    CHECK(fast.same_predicted == slow.same_predicted);
    CHECK(fast.same_gold == slow.same_gold);
    CHECK(fast.same_both == slow.same_both);
    CHECK(fast.f1 == doctest::Approx(slow.f1).epsilon(1e-12));
  }
}

TEST_CASE("leaf_labeling labels each query by its bottom-level node") {
  TaskForest f = two_leaf_forest();
  TaskLabeling l = leaf_labeling(f);
  REQUIRE(l.assignment.size() == 6);
  CHECK(l.assignment.at(0) == l.assignment.at(1));
  CHECK(l.assignment.at(0) == l.assignment.at(2));
  CHECK(l.assignment.at(3) == l.assignment.at(4));
  CHECK(l.assignment.at(0) != l.assignment.at(3));

  // A query listed under two leaves is a structural error.
  TaskForest broken = f;
  broken.nodes[1].queries = {2, 3, 4};
  CHECK_THROWS_AS(leaf_labeling(broken), DataError);
}

TEST_CASE("gold labels load from tab-separated text") {
  std::istringstream in(
      "# comment\n"
      "\n"
      "0\tbooking flights\n"
      "2\thotels\n"
      "1\tbooking flights\n");
  TaskLabeling gold = load_gold(in);
  REQUIRE(gold.assignment.size() == 3);
  CHECK(gold.assignment.at(0) == "booking flights");
  CHECK(gold.assignment.at(1) == "booking flights");
  CHECK(gold.assignment.at(2) == "hotels");

  auto parse = [](const std::string& text) {
    std::istringstream s(text);
    return load_gold(s);
  };
  CHECK_THROWS_AS(parse("no-tab-here\n"), DataError);
  CHECK_THROWS_AS(parse("x\tlabel\n"), DataError);
  CHECK_THROWS_AS(parse("0\tfirst\n0\tsecond\n"), DataError);
  CHECK_THROWS_AS(parse("0\t\n"), DataError);
}

TEST_CASE("match_task_node picks the most similar leaf, ties low") {
  std::istringstream in(
      "u\tred apple\t2006-03-01 01:00:00\n"
      "u\tred apple tree\t2006-03-01 01:01:00\n"
      "u\tapple pie\t2006-03-01 01:02:00\n"
      "u\tblue sky\t2006-03-01 01:03:00\n"
      "u\tsky chart\t2006-03-01 01:04:00\n"
      "u\tblue moon\t2006-03-01 01:05:00\n");
  LogCorpus corpus = parse_log(in, nullptr);
  sessionize(corpus, 1800);
  TaskForest forest = two_leaf_forest();

  Query probe;
  probe.terms = {"apple"};
  CHECK(match_task_node({probe}, forest, corpus) == 0);
  probe.terms = {"sky", "blue"};
  CHECK(match_task_node({probe}, forest, corpus) == 1);
  // No overlap anywhere: every cosine is zero, so the smallest id wins.
  probe.terms = {"unrelated"};
  CHECK(match_task_node({probe}, forest, corpus) == 0);

  CHECK_THROWS_AS(match_task_node({}, forest, corpus), DataError);
}

TEST_CASE("term prediction splits sessions and counts held-out hits") {
  std::istringstream in(
      "u\tred apple\t2006-03-01 01:00:00\n"
      "u\tapple pie recipe\t2006-03-01 01:05:00\n"
      "u\tblue sky\t2006-03-01 05:00:00\n");
  LogCorpus corpus = parse_log(in, nullptr);
  sessionize(corpus, 1800);

  TaskForest forest;
  forest.nodes.resize(2);
  forest.n_queries = 3;
  forest.nodes[0].id = 0;
  forest.nodes[0].queries = {0, 1};
  forest.nodes[1].id = 1;
  forest.nodes[1].queries = {2};
  forest.roots = {0, 1};

  auto results = term_prediction_eval(forest, corpus, {0.5}, 2);
  REQUIRE(results.size() == 1);
  const TermPredictionResult& r = results[0];
  CHECK(r.fraction == 0.5);
  // The two-query session splits after "red apple"; its match is node 0,
  // whose unseen top terms "pie" and "recipe" both appear afterwards.
  CHECK(r.sessions_evaluated == 1);
  CHECK(r.sessions_skipped == 1);  // the lone "blue sky" session
  CHECK(r.mean_matched == doctest::Approx(2.0));

  // With k = 1 only the most frequent unseen term is recommended.
  auto top1 = term_prediction_eval(forest, corpus, {0.5}, 1);
  CHECK(top1[0].mean_matched == doctest::Approx(1.0));

  CHECK_THROWS_AS(term_prediction_eval(forest, corpus, {0.5}, 0), DataError);
  CHECK_THROWS_AS(term_prediction_eval(forest, corpus, {0.0}, 2), DataError);
  CHECK_THROWS_AS(term_prediction_eval(forest, corpus, {1.0}, 2), DataError);

  LogCorpus unsessionized = corpus;
  for (Query& q : unsessionized.queries) q.session_id = -1;
  CHECK_THROWS_AS(term_prediction_eval(forest, unsessionized, {0.5}, 2),
                  DataError);
}

}  // TEST_SUITE
