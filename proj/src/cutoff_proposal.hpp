#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "lotta/random.hpp"
#include "lotta/treatment.hpp"

namespace lotta::detail {

struct CutoffProposal {
  double value = 0.0;
  double log_q_ratio = 0.0;  // log q(current | value) - log q(value | current)
  bool random_walk = true;
  bool valid = true;
};

inline constexpr double kPriorDrawShare = 0.1;

/// Mixture proposal for the cutoff: a local move (Gaussian step, or one grid
/// point left/right for discrete priors) with probability 0.9, otherwise an
/// independent draw from the prior.
inline double cutoff_proposal_density(const CutoffPrior& prior, double from, double to,
                                      double sigma) {
  double local = 0.0;
  if (prior.is_discrete()) {
    const auto kf = prior.index_of(from);
    const auto kt = prior.index_of(to);
    if (kf && kt && (*kf + 1 == *kt || *kt + 1 == *kf)) local = 0.5;
  } else {
    const double z = (to - from) / sigma;
    local = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
  }
  const double lp = prior.log_density(to);
  const double global = std::isfinite(lp) ? std::exp(lp) : 0.0;
  return (1.0 - kPriorDrawShare) * local + kPriorDrawShare * global;
}

inline CutoffProposal propose_cutoff(const CutoffPrior& prior, double current, double sigma,
                                     Rng& rng) {
  CutoffProposal out;
  if (rng.uniform() < kPriorDrawShare) {
    out.value = prior.sample(rng);
    out.random_walk = false;
  } else if (prior.is_discrete()) {
    const auto k = prior.index_of(current);
    const bool up = rng.uniform() < 0.5;
    if (!k || (!up && *k == 0) || (up && *k + 1 >= prior.points().size())) {
      out.valid = false;
      return out;
    }
    out.value = prior.points()[up ? *k + 1 : *k - 1];
  } else {
    out.value = current + sigma * rng.normal();
  }
  const double fwd = cutoff_proposal_density(prior, current, out.value, sigma);
  const double back = cutoff_proposal_density(prior, out.value, current, sigma);
  if (!(fwd > 0.0)) {
    out.valid = false;
    return out;
  }
  out.log_q_ratio = back > 0.0 ? std::log(back) - std::log(fwd)
                               : -std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace lotta::detail
