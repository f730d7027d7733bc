#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "cutoff_proposal.hpp"
#include "lotta/error.hpp"
#include "lotta/mcmc.hpp"

namespace lotta {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  return y > 0.0 ? x * std::log(y) : kNegInf;
}

/// Sorted scores with prefix counts of treated units, so the likelihood for
/// any cutoff is O(log n).
class SplitCounts {
 public:
  explicit SplitCounts(const Dataset& data) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return data.scores[a] < data.scores[b]; });
    treated_.push_back(0);
    for (std::size_t i : order) {
      scores_.push_back(data.scores[i]);
      treated_.push_back(treated_.back() + data.treatments[i]);
    }
  }

  /// (units below c, treated below c, units at or above c, treated at or above c).
  std::array<double, 4> at(double c) const {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(scores_.begin(), scores_.end(), c) - scores_.begin());
    const double n_l = static_cast<double>(k);
    const double t_l = static_cast<double>(treated_[k]);
    const double n = static_cast<double>(scores_.size());
    const double t = static_cast<double>(treated_.back());
    return {n_l, t_l, n - n_l, t - t_l};
  }

  double log_lik(double c, double left, double right) const {
    const auto [n_l, t_l, n_r, t_r] = at(c);
    return xlogy(t_l, left) + xlogy(n_l - t_l, 1.0 - left) + xlogy(t_r, right) +
           xlogy(n_r - t_r, 1.0 - right);
  }

 private:
  std::vector<double> scores_;
  std::vector<long> treated_;
};

double log_prior(const CutoffPrior& prior, double eta, double c, double left, double right,
                 const SupportBounds* feasible) {
  if (!(left >= 0.0 && right <= 1.0 && right - left >= eta)) return kNegInf;
  if (feasible && !(c - feasible->lower > feasible->d_x && feasible->upper - c > feasible->d_x))
    return kNegInf;
  // Area of {0 <= l, r <= 1, r - l >= eta} is (1 - eta)^2 / 2.
  return prior.log_density(c) - std::log(0.5 * (1.0 - eta) * (1.0 - eta));
}

/// Beta(a, b) truncated to [lo, hi] by inversion.
double truncated_beta(double a, double b, double lo, double hi, Rng& rng) {
  lo = std::clamp(lo, 0.0, 1.0);
  hi = std::clamp(hi, 0.0, 1.0);
  if (!(hi > lo)) return lo;
  const double f_lo = boost::math::ibeta(a, b, lo);
  const double f_hi = boost::math::ibeta(a, b, hi);
  if (!(f_hi - f_lo > 1e-300)) {
    // All mass sits beyond one end; take the endpoint nearest the mode.
    const double mode = (a + b > 2.0) ? (a - 1.0) / (a + b - 2.0) : 0.5;
    return mode <= lo ? lo : hi;
  }
  const double u = f_lo + (f_hi - f_lo) * rng.uniform();
  return std::clamp(boost::math::ibeta_inv(a, b, u), lo, hi);
}

}  // namespace

double two_constant_log_posterior(const Dataset& data, const CutoffPrior& prior, double eta,
                                  double c, double left, double right,
                                  const SupportBounds* feasible) {
  const double lp = log_prior(prior, eta, c, left, right, feasible);
  if (!std::isfinite(lp)) return kNegInf;
  return lp + SplitCounts(data).log_lik(c, left, right);
}

TwoConstantDraws two_constant_posterior(const Dataset& data, const CutoffPrior& prior,
                                        double eta, const TwoConstantConfig& config,
                                        const SupportBounds* feasible) {
  if (!(eta >= 0.0 && eta < 1.0)) throw Error("eta must lie in [0, 1)");
  if (config.draws < 1 || config.burn_in < 0) throw Error("invalid two-constant run length");
  const SplitCounts counts(data);
  Rng rng(config.seed, config.stream, 0);

  // Start from the prior, keeping only feasible cutoffs.
  double c = prior.sample(rng);
  for (int k = 0; k < 10000 && !std::isfinite(log_prior(prior, eta, c, 0.0, 1.0, feasible)); ++k)
    c = prior.sample(rng);
  if (!std::isfinite(log_prior(prior, eta, c, 0.0, 1.0, feasible)))
    throw Error("cutoff prior has no mass where the model windows fit");
  double left = 0.5 * (1.0 - eta) * rng.uniform();
  double right = left + eta + (1.0 - eta - left) * rng.uniform();

  const double sigma0 = 0.05 * std::max(1e-6, prior.upper() - prior.lower());
  AdaptiveProposal cutoff_rw("two_constant_cutoff", {sigma0});
  BlockStats discrete_stats{"two_constant_cutoff_discrete", 0, 0};

  auto log_target = [&](double cc, double l, double r) {
    const double lp = log_prior(prior, eta, cc, l, r, feasible);
    return std::isfinite(lp) ? lp + counts.log_lik(cc, l, r) : kNegInf;
  };

  TwoConstantDraws out;
  out.eta = eta;
  const int total = config.burn_in + config.draws;
  double current = log_target(c, left, right);
  for (int it = 0; it < total; ++it) {
    const bool adapting = config.adapt_enabled && it < config.burn_in;
    const auto prop = detail::propose_cutoff(prior, c, cutoff_rw.scale(0), rng);
    bool ok = false;
    if (prop.valid) {
      const double cand = log_target(prop.value, left, right);
      const double delta = cand - current + prop.log_q_ratio;
      if (std::isfinite(cand) && (delta >= 0.0 || std::log(rng.uniform()) < delta)) {
        c = prop.value;
        current = cand;
        ok = true;
      }
    }
    if (prior.is_discrete()) {
      ++discrete_stats.attempts;
      if (ok) ++discrete_stats.accepted;
    } else if (prop.random_walk) {
      Eigen::VectorXd v(1);
      v[0] = c;
      cutoff_rw.update(v, ok, adapting);
    }

    // Exact conditionals of the levels: truncated betas.
    const auto [n_l, t_l, n_r, t_r] = counts.at(c);
    left = truncated_beta(t_l + 1.0, n_l - t_l + 1.0, 0.0, right - eta, rng);
    right = truncated_beta(t_r + 1.0, n_r - t_r + 1.0, left + eta, 1.0, rng);
    current = log_target(c, left, right);

    if (it >= config.burn_in) {
      out.cutoff.push_back(c);
      out.left.push_back(left);
      out.right.push_back(right);
    }
  }
  std::size_t piled = 0;
  const double edge = eta + 0.05 * (1.0 - eta);
  for (std::size_t i = 0; i < out.cutoff.size(); ++i)
    if (out.right[i] - out.left[i] <= edge) ++piled;
  out.lower_bound_share = static_cast<double>(piled) / static_cast<double>(out.cutoff.size());
  out.jump_at_lower_bound = out.lower_bound_share > 0.5;
  if (cutoff_rw.stats().attempts > 0) out.acceptance.push_back(cutoff_rw.stats());
  if (discrete_stats.attempts > 0) out.acceptance.push_back(discrete_stats);
  return out;
}

GridOracleResult grid_oracle_posterior(const GridOracleSpec& spec) {
  if (spec.cutoffs.empty() || spec.cutoffs.size() != spec.cutoff_log_prior.size())
    throw Error("grid oracle needs matching cutoffs and log prior");
  if (spec.grids.size() > 2) throw Error("grid oracle supports at most two parameters");
  if (!spec.log_density) throw Error("grid oracle needs a log density");
  std::size_t cells = 1;
  for (const auto& g : spec.grids) {
    if (g.empty()) throw Error("grid oracle parameter grid is empty");
    cells *= g.size();
  }
  const std::size_t evaluations = cells * spec.cutoffs.size();
  if (evaluations > spec.max_evaluations) throw Error("grid oracle exceeds its evaluation cap");

  GridOracleResult out;
  out.table.resize(evaluations);
  std::vector<double> theta(spec.grids.size());
  for (std::size_t k = 0; k < spec.cutoffs.size(); ++k) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      std::size_t rest = cell;
      for (std::size_t g = spec.grids.size(); g-- > 0;) {
        theta[g] = spec.grids[g][rest % spec.grids[g].size()];
        rest /= spec.grids[g].size();
      }
      out.table[k * cells + cell] =
          spec.cutoff_log_prior[k] + spec.log_density(spec.cutoffs[k], theta);
    }
  }
  const double top = *std::max_element(out.table.begin(), out.table.end());
  if (!std::isfinite(top)) throw Error("grid oracle: posterior has no mass on the grid");
  double z = 0.0;
  for (double& v : out.table) {
    v = std::exp(v - top);
    z += v;
  }
  out.cutoff_pmf.assign(spec.cutoffs.size(), 0.0);
  for (std::size_t k = 0; k < spec.cutoffs.size(); ++k) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      double& v = out.table[k * cells + cell];
      v /= z;
      out.cutoff_pmf[k] += v;
    }
  }
  return out;
}

}  // namespace lotta
