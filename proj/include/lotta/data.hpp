#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lotta {

enum class ScoreKind { continuous, discrete_grid };
enum class OutcomeKind { continuous, binary, bounded };

struct OutcomeBounds {
  double lower = 0.0;
  double upper = 1.0;
};

/// Score/treatment/outcome triples on the normalized scale.
///
/// `support_lo`/`support_hi` is the score interval [I1, I2] every prior
/// refers to. Treatments are 0/1; binary outcomes are 0/1.
struct Dataset {
  std::vector<double> scores;
  std::vector<int> treatments;
  std::vector<double> outcomes;

  ScoreKind score_kind = ScoreKind::continuous;
  double grid_step = 0.0;  // only meaningful for discrete_grid
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  OutcomeBounds outcome_bounds;  // only meaningful for bounded
  double support_lo = 0.0;
  double support_hi = 1.0;

  std::size_t size() const { return scores.size(); }
  bool empty() const { return scores.empty(); }

  /// Throws lotta::Error when an invariant is broken. Empty datasets are
  /// accepted only with `allow_empty` (prior-only sampling).
  void validate(bool allow_empty = false) const;

  /// A dataset with no rows, used to sample from the prior.
  static Dataset empty_with_support(double lo, double hi);
};

/// Affine map raw score -> normalized score, (x - offset) / range.
struct ScoreScale {
  double range = 1.0;
  double offset = 0.0;

  double to_normalized(double raw) const { return (raw - offset) / range; }
  double to_raw(double normalized) const { return normalized * range + offset; }
  /// Distances and widths (window lengths, HDI lengths) map without offset.
  double length_to_raw(double normalized) const { return normalized * range; }
  double length_to_normalized(double raw) const { return raw / range; }
};

/// Outcomes are divided by `scale`; effects and outcome values multiply back.
struct OutcomeScale {
  double scale = 1.0;

  double to_raw(double normalized) const { return normalized * scale; }
  double to_normalized(double raw) const { return raw / scale; }
};

struct NormalizedData {
  Dataset data;
  ScoreScale score_scale;
  OutcomeScale outcome_scale;
};

/// Divides scores by their observed range (offset = min) and rescales
/// continuous or bounded outcomes to unit standard deviation. Binary outcomes
/// are left untouched.
NormalizedData normalize(const std::vector<double>& raw_scores,
                         const std::vector<double>& raw_outcomes,
                         const std::vector<int>& treatments, OutcomeKind kind,
                         std::optional<OutcomeBounds> raw_bounds = std::nullopt);

/// Classifies sorted distinct scores as a regular grid when all consecutive
/// gaps agree within `tolerance`. Returns the step, or nullopt.
std::optional<double> detect_grid_step(const std::vector<double>& scores,
                                       double tolerance = 1e-9);

struct SupportBounds {
  double d_x = 0.0;    // minimal window half-width
  double lower = 0.0;  // l_n: the n-th smallest score
  double upper = 0.0;  // u_n: the n-th largest score
  int n = 25;
};

/// Window-population bounds for the priors. `radius_quantile` selects the
/// quantile of the two-neighbour ball radii used as d_x for continuous
/// scores; 1.0 takes the maximum.
SupportBounds compute_support_bounds(const Dataset& data, int n = 25,
                                     double radius_quantile = 1.0);

/// Keeps rows with lo <= score <= hi. The scale is not recomputed.
Dataset trim(const Dataset& data, double lo, double hi);

enum class BinnedVariable { treatment, outcome };

struct BinnedSeries {
  std::vector<double> bin_centers;
  std::vector<double> bin_means;  // NaN for empty bins
  std::vector<int> bin_counts;
  std::vector<int> sides;  // -1 left of split, +1 at or right of split
  double split_point = 0.0;
};

/// Equal-width bins on each side of `split_point` over the dataset support.
BinnedSeries bin_series(const Dataset& data, double split_point,
                        int bins_per_side, BinnedVariable variable);

/// Maps bin centers back to raw score units (and outcome means to raw units
/// when `outcome_scale` is given).
BinnedSeries to_raw_units(BinnedSeries series, const ScoreScale& score_scale,
                          const OutcomeScale* outcome_scale);

/// Rows as read from a `score,treatment,outcome` CSV, before normalization.
struct RawTable {
  std::vector<double> scores;
  std::vector<int> treatments;
  std::vector<double> outcomes;
};

RawTable read_csv(std::istream& in);
RawTable read_csv_file(const std::string& path);

/// Writes `bin_center,mean,count,side`.
void write_binned_csv(std::ostream& out, const BinnedSeries& series);

}  // namespace lotta
