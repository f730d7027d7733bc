#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lotta/data.hpp"
#include "lotta/mcmc.hpp"
#include "lotta/treatment.hpp"

namespace lotta {

enum class SampleKind { continuous, discrete };

/// Gaussian KDE with Silverman's bandwidth on `points` equally spaced values
/// spanning the sample range. Constant samples give a single point.
struct KernelDensity {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

KernelDensity kernel_density(std::span<const double> samples, int points = 512);

/// Discrete: the most frequent value (ties to the smallest). Continuous: the
/// KDE argmax. Needs at least `kMinSamples` values.
double map_estimate(std::span<const double> samples, SampleKind kind);

/// Shortest window of ceil(level * N) sorted samples; ties keep the smallest
/// lower endpoint.
Interval hdi(std::span<const double> samples, double level = 0.95);

inline constexpr std::size_t kMinSamples = 100;

/// More than one local KDE maximum above 10% of the global maximum.
bool multimodal(std::span<const double> samples);

struct EstimateSummary {
  double map = 0.0;
  Interval hdi;
  double mean = 0.0;
  double median = 0.0;
};

EstimateSummary summarize(std::span<const double> samples, SampleKind kind, double level = 0.95);

/// tau, c and j on the raw scale. tau is absent without an outcome model and
/// j is absent in sharp designs.
struct EstimateReport {
  double level = 0.95;
  std::string mode;
  bool sharp = false;
  std::size_t draws = 0;
  std::optional<EstimateSummary> tau;
  EstimateSummary cutoff;
  std::optional<EstimateSummary> jump;

  nlohmann::json to_json() const;
};

/// Raw cutoffs are snapped to the nearest of `raw_points` when given, so a
/// discrete prior's support survives the scale round trip exactly.
EstimateReport make_report(const PosteriorDraws& draws, const ScoreScale& score_scale,
                           const OutcomeScale& outcome_scale, SampleKind cutoff_kind,
                           double level = 0.95, std::span<const double> raw_points = {});

/// Pooled cutoff draws on the raw scale, snapped as in make_report.
std::vector<double> raw_cutoffs(const PosteriorDraws& draws, const ScoreScale& score_scale,
                                std::span<const double> raw_points = {});

enum class BandTarget { treatment, outcome };

struct FunctionBand {
  std::vector<double> grid;
  std::vector<double> median;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;
};

/// Pointwise median and central `level` interval of p(x) or f(x) over the
/// draws, evaluated without smoothing. Binary outcomes use the logit tails.
FunctionBand function_band(std::span<const Draw> draws, std::span<const double> grid,
                           BandTarget target, bool sharp, ScoreSupport support,
                           OutcomeKind kind = OutcomeKind::continuous, double level = 0.95);

/// Evenly spaced grid including both ends.
std::vector<double> linear_grid(double lo, double hi, int points);

struct CTauGroup {
  double c = 0.0;  // the discrete value, or the bin median
  double c_lo = 0.0;
  double c_hi = 0.0;
  std::size_t count = 0;
  double share = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double whisker_lo = 0.0;  // most extreme values within 1.5 IQR of the box
  double whisker_hi = 0.0;
};

struct JointCTauSummary {
  std::vector<CTauGroup> groups;
  std::size_t total = 0;
};

/// Groups tau by distinct c (discrete) or by `bins` equal-mass c bins.
JointCTauSummary joint_c_tau(std::span<const double> c, std::span<const double> tau,
                             SampleKind kind, int bins = 20);

void write_band_csv(std::ostream& out, const FunctionBand& band);
void write_joint_csv(std::ostream& out, const JointCTauSummary& summary);
/// `value,density` rows: the pmf for discrete samples, the KDE otherwise.
void write_histogram_csv(std::ostream& out, std::span<const double> samples, SampleKind kind);

}  // namespace lotta
