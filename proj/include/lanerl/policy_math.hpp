#pragma once

#include <span>

#include "lanerl/core.hpp"

namespace lanerl::policy_math {

enum class LogBase { kTwo, kNatural };

struct DivergenceConfig {
  LogBase log_base = LogBase::kTwo;
  // Floor applied only inside logs of the first argument; keeps gradients
  // finite when a probability underflows to exactly zero.
  double floor = 1e-12;
};

/// Throws DomainError unless v is a probability vector (entries >= 0,
/// sum within 1e-6 of 1).
void validate_distribution(std::span<const double> v);

/// KL(p || q) = sum_i p_i * log(p_i / q_i), with 0 log 0 = 0. Returns +inf
/// when p has mass where q is zero.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     const DivergenceConfig& cfg = {});

/// Entrywise (p + q) / 2.
PolicyDistribution mixture(std::span<const double> p, std::span<const double> q);

/// Jensen-Shannon divergence in base-2 logs: 0.5 KL(p||m) + 0.5 KL(q||m)
/// with m the mixture. Bounded in [0, 1]; always finite.
double js_divergence(std::span<const double> p, std::span<const double> q);

/// d js(p, q) / d p_k = 0.5 * log2(p_k / m_k). p entries at zero get the
/// floored-log value; callers chaining through a softmax multiply by p_k,
/// which kills those terms exactly.
std::vector<double> js_gradient_wrt_p(std::span<const double> p, std::span<const double> q,
                                      const DivergenceConfig& cfg = {});

/// Shannon entropy with natural logs.
double entropy(std::span<const double> p);

}  // namespace lanerl::policy_math
