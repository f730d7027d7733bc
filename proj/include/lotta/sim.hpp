#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lotta/data.hpp"
#include "lotta/mcmc.hpp"
#include "lotta/treatment.hpp"

namespace lotta::sim {

enum class OutcomeFn { A, B, C, lee, ludwig };
enum class TreatmentFn { none, p1, p2 };

std::string to_string(OutcomeFn f);
std::string to_string(TreatmentFn f);
OutcomeFn parse_outcome_fn(const std::string& text);
TreatmentFn parse_treatment_fn(const std::string& text);

/// Mean outcome at x, with the true cutoff at 0 (the right branch owns 0).
double outcome_fn(OutcomeFn f, double x);
/// Treatment probability at x; 1{x >= 0} for `none`.
double treatment_fn(TreatmentFn f, double x);

struct ScenarioSpec {
  std::string name = "custom";
  bool sharp = false;
  OutcomeFn outcome = OutcomeFn::A;
  TreatmentFn treatment = TreatmentFn::p1;
  int n = 500;
  double noise_sd = 0.1;
  int replications = 50;
  std::uint64_t seed = 1;
  double true_cutoff = 0.0;
  Interval cutoff_prior{-0.8, 0.2};
  /// Sharp scenarios fit LoTTA with a point-mass prior at the true cutoff.
  bool known_cutoff = false;
  double eta = 0.2;
  double level = 0.95;
  SamplerConfig sampler;
  int threads = 1;

  void validate() const;
  /// The LoTTA cutoff prior on the raw score scale.
  CutoffPrior raw_cutoff_prior() const;
};

/// Named presets: 1A-1C (sharp), 2A-2C (fuzzy, p1), 3A-3C (fuzzy, p2),
/// lee, ludwig (sharp, noise sd 0.1295).
ScenarioSpec scenario(const std::string& name);
std::vector<std::string> scenario_names();

/// X = 2 Z - 1 with Z ~ Beta(2, 4).
std::vector<double> gen_scores(int n, std::uint64_t seed);
/// Raw-scale dataset with support [-1, 1]; deterministic in (seed, replication).
Dataset gen_dataset(const ScenarioSpec& spec, int replication);

struct TrueEstimands {
  double tau = 0.0;
  double jump = 1.0;
  double cutoff = 0.0;
  double outcome_jump = 0.0;
};

TrueEstimands true_estimands(const ScenarioSpec& spec);

enum class Estimator {
  lotta_joint,
  lotta_cut,
  lotta_treatment_only,
  llr_known_cutoff,
  plugin_two_constant,
  plugin_treatment_only,
  cubic_two_sided,
};

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& text);
std::vector<Estimator> all_estimators();

/// One estimator on one replication. Missing quantities are NaN.
struct ReplicationResult {
  std::string scenario;
  int replication = 0;
  Estimator estimator = Estimator::lotta_joint;
  bool ok = true;
  std::string error;
  double tau_hat = 0.0;
  double tau_lo = 0.0;
  double tau_hi = 0.0;
  double c_hat = 0.0;
  double c_lo = 0.0;
  double c_hi = 0.0;
  double j_hat = 0.0;
  bool unstable = false;
};

ReplicationResult run_estimator(const ScenarioSpec& spec, const Dataset& raw, int replication,
                                Estimator estimator);

struct LateMetrics {
  double rmse = 0.0;
  double mean_bias = 0.0;
  double median_bias = 0.0;
  double median_ae = 0.0;
  double mean_ci_len = 0.0;
  double median_ci_len = 0.0;
  double coverage = 0.0;
  std::optional<double> correct_sign;  // absent when the truth is 0
};

struct CutoffMetrics {
  double rmse = 0.0;
  double mean_bias = 0.0;
  std::optional<double> mean_ci_len;
  std::optional<double> median_ci_len;
  std::optional<double> coverage;
};

struct EstimatorMetrics {
  Estimator estimator = Estimator::lotta_joint;
  int replications = 0;
  int failures = 0;
  std::optional<LateMetrics> late;
  std::optional<CutoffMetrics> cutoff;
  std::optional<double> compliance_rmse;
};

struct MetricsTable {
  std::string scenario;
  TrueEstimands truth;
  std::vector<EstimatorMetrics> rows;
};

/// Aggregates stored per-replication results; failed replications are
/// counted and skipped.
MetricsTable aggregate(const std::string& scenario, const TrueEstimands& truth,
                       const std::vector<ReplicationResult>& results);

struct ScenarioRun {
  std::vector<ReplicationResult> results;
  MetricsTable table;
};

ScenarioRun run_scenario(const ScenarioSpec& spec, const std::vector<Estimator>& estimators);

void write_results_csv(std::ostream& out, const std::vector<ReplicationResult>& results);
std::vector<ReplicationResult> read_results_csv(std::istream& in);
void write_metrics_csv(std::ostream& out, const MetricsTable& table);

nlohmann::json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

}  // namespace lotta::sim
