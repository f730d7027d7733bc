#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lotta/adaptive.hpp"
#include "lotta/data.hpp"
#include "lotta/outcome.hpp"
#include "lotta/treatment.hpp"

namespace lotta {

enum class FitMode { joint, treatment_only, cut };

std::string to_string(FitMode mode);
FitMode parse_fit_mode(const std::string& text);

/// Everything the posterior depends on besides the data.
struct ModelSpec {
  TreatmentPriorSpec treatment;
  OutcomePriorSpec outcome;
  /// Sharp design: no treatment model, j fixed at 1, tau is the outcome jump.
  bool sharp = false;
};

/// Priors for `data` (normalized scale). Support bounds are computed from the
/// data unless `bounds` is given (needed for empty datasets).
ModelSpec make_model_spec(const Dataset& data, double eta, CutoffPrior cutoff_prior,
                          bool sharp = false, int n_bounds = 25, double radius_quantile = 1.0,
                          const SupportBounds* bounds = nullptr);

struct SamplerConfig {
  int chains = 4;
  int burn_in = 10000;
  int adapt = 1000;
  int draws = 25000;
  std::uint64_t seed = 1;
  FitMode mode = FitMode::joint;
  double smoothing_s = 100.0;
  int threads = 0;          // 0 picks the hardware concurrency
  int cut_inner_sweeps = 2;  // outcome sweeps per plugged cutoff in cut mode
  int init_burn_in = 500;    // two-constant run used for initialization
  int init_draws = 1000;
  bool adapt_enabled = true;

  void validate() const;
};

struct State {
  TreatmentParams treatment;
  OutcomeParams outcome;
  bool has_outcome = true;
};

struct Draw {
  TreatmentParams treatment;
  OutcomeParams outcome;
  double tau = 0.0;  // NaN without an outcome model
};

/// tau = (right level - left level) / j, or the bare jump in sharp designs.
double tau_per_draw(const Draw& draw, bool sharp);

struct PosteriorDraws {
  FitMode mode = FitMode::joint;
  bool sharp = false;
  bool has_outcome = true;
  std::vector<std::vector<Draw>> chains;
  std::vector<std::vector<BlockStats>> acceptance;

  std::size_t total() const;
  std::vector<Draw> flattened() const;
  /// Per-chain values of a named scalar (see `scalar_names`).
  std::vector<std::vector<double>> column(const std::string& name) const;
  std::vector<double> pooled(const std::string& name) const;
};

std::vector<std::string> scalar_names(bool has_outcome);
std::vector<double> scalar_values(const Draw& draw, bool has_outcome);

struct Diagnostics {
  std::vector<std::string> names;
  std::vector<double> rhat;
  std::vector<double> ess;
  std::vector<BlockStats> acceptance;  // summed over chains
  bool converged = true;               // every R-hat <= 1.05
};

/// Split R-hat; 1 for constant parameters.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Multi-chain ESS with Geyer's initial monotone sequence.
double effective_sample_size(const std::vector<std::vector<double>>& chains);
Diagnostics diagnose(const PosteriorDraws& draws);

double log_posterior(const State& state, const Dataset& data, const ModelSpec& spec,
                     FitMode mode, Smoothing smoothing = Smoothing::sigmoid_with(100.0));

/// One state per chain, initialized from the two-constant cutoff posterior.
std::vector<State> init_chains(const Dataset& data, const ModelSpec& spec,
                               const SamplerConfig& config);

struct FitResult {
  PosteriorDraws draws;
  Diagnostics diagnostics;
};

/// Samples the posterior selected by `config.mode`.
FitResult run(const Dataset& data, const ModelSpec& spec, const SamplerConfig& config);

/// Two-stage cut posterior: treatment-only draws, then outcome parameters
/// given each plugged-in cutoff.
PosteriorDraws cut_run(const Dataset& data, const ModelSpec& spec, const SamplerConfig& config);

/// Writes one row per retained draw: chain, iteration, every scalar and tau,
/// plus c and tau on the raw scale.
void write_draws_csv(std::ostream& out, const PosteriorDraws& draws, const ScoreScale& scores,
                     const OutcomeScale& outcomes);
/// Reads what write_draws_csv wrote, at full precision. Acceptance
/// statistics are not stored and come back empty.
PosteriorDraws read_draws_csv(std::istream& in, FitMode mode, bool sharp);

// ---------------------------------------------------------------------------
// Two-constant changepoint model

struct TwoConstantConfig {
  int burn_in = 1000;
  int draws = 5000;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  bool adapt_enabled = true;
};

struct TwoConstantDraws {
  std::vector<double> cutoff;
  std::vector<double> left;
  std::vector<double> right;
  double eta = 0.0;
  /// Share of draws whose jump lies within 5% of the range above eta.
  double lower_bound_share = 0.0;
  bool jump_at_lower_bound = false;
  std::vector<BlockStats> acceptance;
};

/// Log posterior of constant take-up `left` below and `right` at or above
/// the cutoff, with a uniform prior on {0 <= left, right <= 1, right - left >= eta}.
/// When `feasible` is given, cutoffs leaving no room for the LoTTA windows
/// get zero prior mass.
double two_constant_log_posterior(const Dataset& data, const CutoffPrior& prior, double eta,
                                  double c, double left, double right,
                                  const SupportBounds* feasible = nullptr);

TwoConstantDraws two_constant_posterior(const Dataset& data, const CutoffPrior& prior,
                                        double eta, const TwoConstantConfig& config,
                                        const SupportBounds* feasible = nullptr);

// ---------------------------------------------------------------------------
// Exhaustive enumeration oracle for reduced models

struct GridOracleSpec {
  std::vector<double> cutoffs;
  std::vector<double> cutoff_log_prior;
  /// At most two parameter grids; the integrand is summed over their product.
  std::vector<std::vector<double>> grids;
  /// Unnormalized log density of (theta | c) times the likelihood.
  std::function<double(double c, std::span<const double> theta)> log_density;
  std::size_t max_evaluations = 50'000'000;
};

struct GridOracleResult {
  std::vector<double> cutoff_pmf;
  /// Posterior over (c, theta) laid out as [c][theta0][theta1].
  std::vector<double> table;
};

GridOracleResult grid_oracle_posterior(const GridOracleSpec& spec);

}  // namespace lotta
