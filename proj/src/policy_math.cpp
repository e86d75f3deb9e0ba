#include "lanerl/policy_math.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace lanerl::policy_math {

namespace {

constexpr double kSumTolerance = 1e-6;

double log_in_base(double x, LogBase base) {
  return base == LogBase::kTwo ? std::log2(x) : std::log(x);
}

}  // namespace

void validate_distribution(std::span<const double> v) {
  if (v.empty()) throw DomainError("empty distribution");
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= 0.0)) throw DomainError("negative or NaN probability: " + std::to_string(x));
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSumTolerance)
    throw DomainError("probabilities sum to " + std::to_string(sum) + ", expected 1");
}

double kl_divergence(std::span<const double> p, std::span<const double> q,
                     const DivergenceConfig& cfg) {
  validate_distribution(p);
  validate_distribution(q);
  if (p.size() != q.size()) throw DomainError("distribution sizes differ");

  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 log 0 = 0
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    acc += p[i] * log_in_base(p[i] / q[i], cfg.log_base);
  }
  return acc;
}

PolicyDistribution mixture(std::span<const double> p, std::span<const double> q) {
  validate_distribution(p);
  validate_distribution(q);
  if (p.size() != q.size()) throw DomainError("distribution sizes differ");
  PolicyDistribution m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return m;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  const PolicyDistribution m = mixture(p, q);
  // The mixture is positive wherever either argument is, so both KL terms
  // are finite without flooring.
  DivergenceConfig base2;
  return 0.5 * kl_divergence(p, m, base2) + 0.5 * kl_divergence(q, m, base2);
}

std::vector<double> js_gradient_wrt_p(std::span<const double> p, std::span<const double> q,
                                      const DivergenceConfig& cfg) {
  const PolicyDistribution m = mixture(p, q);
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], cfg.floor);
    const double mi = std::max(m[i], 0.5 * cfg.floor);
    g[i] = 0.5 * std::log2(pi / mi);
  }
  return g;
}

double entropy(std::span<const double> p) {
  validate_distribution(p);
  double acc = 0.0;
  for (double x : p) {
    if (x > 0.0) acc -= x * std::log(x);
  }
  return acc;
}

}  // namespace lanerl::policy_math
