#pragma once

// Marginal count likelihoods and tree-mixture arithmetic, all in log space.
//
// A group's discretized affinity counts r_k are modeled per class with a
// Poisson rate drawn from Gamma(alpha_k, beta_k); integrating the rate out
// gives the closed-form (negative-binomial) marginal
//   p(r | a, b) = G(a+r) / (r! G(a)) * (b/(b+1))^a * (1/(b+1))^r.

#include <array>
#include <cstdint>
#include <vector>

#include "taskforest/affinity.hpp"

namespace taskforest {

struct GammaPoissonParams {
  double alpha = 1.0;
  double beta = 1.0;
};

struct ModelConfig {
  double gamma = 0.5;  // mixture hyperparameter, 0 < gamma < 1
  std::array<GammaPoissonParams, kNumAffinityClasses> classes{};
  int64_t resolution = 100;

  void validate() const;  // throws DataError on out-of-range values
};

// log p(r | alpha, beta); log-gamma based, stable for large r.
// Throws DataError for negative r or non-positive alpha/beta.
double gamma_poisson_log_pmf(int64_t r, double alpha, double beta);

// Sum of per-class log pmfs for a count vector.
double marginal_log_likelihood(
    const std::array<int64_t, kNumAffinityClasses>& counts,
    const ModelConfig& config);

struct LogMix {
  double log_pi;            // -inf when n_children == 1
  double log_one_minus_pi;  // 0 when n_children == 1
};

// pi = 1 - (1-gamma)^(n_children-1), returned as (log pi, log(1-pi)).
LogMix mixing_log_pi(int64_t n_children, double gamma);

// log(exp(a) + exp(b)) without overflow; handles -inf arguments.
double log_sum_exp(double a, double b);

// Recursive candidate-node likelihood given the node's own counts and its
// children's cached subtree log-likelihoods (left-to-right accumulation):
//   p = pi * f(counts) + (1 - pi) * prod_c p(D_c | T_c)
double node_log_likelihood(
    const std::array<int64_t, kNumAffinityClasses>& counts,
    const std::vector<double>& child_logliks, const ModelConfig& config);

// Fast path used by the merge engine: children enter as a precomputed sum.
double node_log_likelihood_sum(
    const std::array<int64_t, kNumAffinityClasses>& counts,
    double child_loglik_sum, int64_t n_children, const ModelConfig& config);

// Same mixture, but with log f(counts) already evaluated; lets the engine
// score all merge shapes of a pair off one marginal evaluation.
double node_log_likelihood_sum_from(double marginal, double child_loglik_sum,
                                    int64_t n_children,
                                    const ModelConfig& config);

// Log-pmf evaluator with per-class tables for the bounded count range the
// engine touches (r <= 4 * resolution); falls back to the direct formula.
class LikelihoodTables {
 public:
  explicit LikelihoodTables(const ModelConfig& config);

  double class_log_pmf(int k, int64_t r) const;
  double marginal(const std::array<int64_t, kNumAffinityClasses>& counts) const;
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  std::array<std::vector<double>, kNumAffinityClasses> table_;
};

}  // namespace taskforest
