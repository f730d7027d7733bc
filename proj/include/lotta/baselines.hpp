#pragma once

#include <optional>

#include <json.hpp>

#include "lotta/data.hpp"
#include "lotta/mcmc.hpp"
#include "lotta/treatment.hpp"

namespace lotta {

struct LLRConfig {
  std::optional<double> bandwidth;  // rule of thumb when empty
  double level = 0.95;
  bool sharp = false;  // skip the treatment-jump denominator
};

/// Jump estimates at the cutoff with a naive Wald interval.
struct LLREstimate {
  double tau_hat = 0.0;
  double se = 0.0;
  Interval ci;
  double outcome_jump = 0.0;
  double outcome_jump_se = 0.0;
  double treatment_jump = 1.0;  // 1 with se 0 in sharp fits
  double treatment_jump_se = 0.0;
  std::size_t n_left = 0;  // points with positive weight
  std::size_t n_right = 0;
  double bandwidth = 0.0;
  bool unstable = false;  // |treatment jump| < 1e-3

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kMinSidePoints = 10;
inline constexpr double kUnstableJump = 1e-3;

/// 1.06 sd(x) n^(-1/5), enlarged until each side keeps kMinSidePoints
/// points with positive triangular weight.
double rule_of_thumb_bandwidth(const Dataset& data, double cutoff);

/// Triangular-kernel local linear fits on each side, HC0 standard errors,
/// delta method for the fuzzy ratio.
LLREstimate llr_fit(const Dataset& data, double cutoff, const LLRConfig& config = {});

/// Global cubic on each side (unweighted OLS over all data), same inference.
LLREstimate cubic_two_sided(const Dataset& data, double cutoff, double level = 0.95,
                            bool sharp = false);

enum class CutoffSource { two_constant_map, treatment_only_map };

struct PluginConfig {
  CutoffPrior cutoff_prior = CutoffPrior::uniform(0.0, 1.0);
  double eta = 0.2;
  LLRConfig llr;
  TwoConstantConfig two_constant;
  SamplerConfig sampler;  // treatment-only fit; the mode is overridden
};

struct PluginEstimate {
  double cutoff = 0.0;
  LLREstimate llr;
};

/// Point-estimates the cutoff by the chosen MAP, then runs llr_fit there
/// without propagating its uncertainty.
PluginEstimate plugin_estimate(const Dataset& data, CutoffSource source,
                               const PluginConfig& config);

}  // namespace lotta
