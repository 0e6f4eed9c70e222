#include "taskforest/likelihood.hpp"

#include <cmath>
#include <limits>

namespace taskforest {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void ModelConfig::validate() const {
  if (!(gamma > 0.0) || !(gamma < 1.0))
    throw DataError("gamma must lie strictly between 0 and 1");
  for (const GammaPoissonParams& p : classes)
    if (!(p.alpha > 0.0) || !(p.beta > 0.0))
      throw DataError("alpha and beta must be positive");
  if (resolution < 1) throw DataError("affinity resolution must be >= 1");
}

double gamma_poisson_log_pmf(int64_t r, double alpha, double beta) {
  if (r < 0) throw DataError("count must be non-negative");
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw DataError("alpha and beta must be positive");
  double rd = static_cast<double>(r);
  return std::lgamma(alpha + rd) - std::lgamma(rd + 1.0) - std::lgamma(alpha) -
         alpha * std::log1p(1.0 / beta) - rd * std::log1p(beta);
}

double marginal_log_likelihood(
    const std::array<int64_t, kNumAffinityClasses>& counts,
    const ModelConfig& config) {
  double total = 0.0;
  for (int k = 0; k < kNumAffinityClasses; ++k)
    total += gamma_poisson_log_pmf(counts[k], config.classes[k].alpha,
                                   config.classes[k].beta);
  return total;
}

LogMix mixing_log_pi(int64_t n_children, double gamma) {
  if (n_children < 1) throw DataError("node must have at least one child");
  if (!(gamma > 0.0) || !(gamma < 1.0))
    throw DataError("gamma must lie strictly between 0 and 1");
  if (n_children == 1) return {kNegInf, 0.0};
  // (1-gamma)^(n-1) computed in log space; pi = -expm1 of that.
  double log_one_minus_pi =
      static_cast<double>(n_children - 1) * std::log1p(-gamma);
  double pi = -std::expm1(log_one_minus_pi);
  return {std::log(pi), log_one_minus_pi};
}

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double node_log_likelihood(
    const std::array<int64_t, kNumAffinityClasses>& counts,
    const std::vector<double>& child_logliks, const ModelConfig& config) {
  double sum = 0.0;
  for (double l : child_logliks) sum += l;
  return node_log_likelihood_sum(counts, sum,
                                 static_cast<int64_t>(child_logliks.size()),
                                 config);
}

double node_log_likelihood_sum(
    const std::array<int64_t, kNumAffinityClasses>& counts,
    double child_loglik_sum, int64_t n_children, const ModelConfig& config) {
  return node_log_likelihood_sum_from(marginal_log_likelihood(counts, config),
                                      child_loglik_sum, n_children, config);
}

double node_log_likelihood_sum_from(double marginal, double child_loglik_sum,
                                    int64_t n_children,
                                    const ModelConfig& config) {
  if (n_children == 0) return marginal;  // leaf: no partition to mix over
  LogMix mix = mixing_log_pi(n_children, config.gamma);
  return log_sum_exp(mix.log_pi + marginal,
                     mix.log_one_minus_pi + child_loglik_sum);
}

LikelihoodTables::LikelihoodTables(const ModelConfig& config)
    : config_(config) {
  config_.validate();
  // Counts produced by group_affinity are bounded by 4 * resolution (every
  // per-pair class value lies in [0,4]); cap the table to keep memory sane.
  int64_t limit = std::min<int64_t>(4 * config_.resolution + 2, 1 << 18);
  for (int k = 0; k < kNumAffinityClasses; ++k) {
    table_[k].resize(static_cast<size_t>(limit));
    for (int64_t r = 0; r < limit; ++r)
      table_[k][static_cast<size_t>(r)] = gamma_poisson_log_pmf(
          r, config_.classes[k].alpha, config_.classes[k].beta);
  }
}

double LikelihoodTables::class_log_pmf(int k, int64_t r) const {
  const std::vector<double>& t = table_[k];
  if (r >= 0 && static_cast<size_t>(r) < t.size())
    return t[static_cast<size_t>(r)];
  return gamma_poisson_log_pmf(r, config_.classes[k].alpha,
                               config_.classes[k].beta);
}

double LikelihoodTables::marginal(
    const std::array<int64_t, kNumAffinityClasses>& counts) const {
  double total = 0.0;
  for (int k = 0; k < kNumAffinityClasses; ++k)
    total += class_log_pmf(k, counts[k]);
  return total;
}

}  // namespace taskforest
