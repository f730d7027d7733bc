#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lotta/data.hpp"
#include "lotta/random.hpp"

namespace lotta {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool empty() const { return !(lo <= hi); }
  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Score interval [I1, I2].
struct ScoreSupport {
  double lo = 0.0;
  double hi = 1.0;
};

struct LinearPiece {
  double slope = 0.0;
  double intercept = 0.0;

  double at(double x) const { return slope * x + intercept; }
};

/// Piecewise-linear take-up probability with a jump at the cutoff.
///
/// Pieces are, from left to right: `outer_left` on x < c - k_l,
/// `inner_left` on [c - k_l, c), `inner_right` on [c, c + k_r] and
/// `outer_right` beyond. Slopes and intercepts are in absolute score
/// coordinates. `inner_left.intercept`, `inner_right.intercept` and
/// `outer_right.intercept` are determined by the others (see
/// `derive_intercepts`).
struct TreatmentParams {
  double cutoff = 0.0;
  double jump = 1.0;
  double window_left = 0.0;
  double window_right = 0.0;
  LinearPiece outer_left;
  LinearPiece inner_left;
  LinearPiece inner_right;
  LinearPiece outer_right;

  /// Unchecked evaluation; right-continuous at the cutoff.
  double prob(double x) const {
    if (x < cutoff) return x < cutoff - window_left ? outer_left.at(x) : inner_left.at(x);
    return x <= cutoff + window_right ? inner_right.at(x) : outer_right.at(x);
  }
  double left_limit_at_cutoff() const { return inner_left.at(cutoff); }
};

/// Free coefficients in their sampling order.
enum class FreeCoefficient {
  outer_left_slope,
  outer_left_intercept,
  inner_left_slope,
  inner_right_slope,
  outer_right_slope,
};

struct DerivedIntercepts {
  double inner_left = 0.0;
  double inner_right = 0.0;
  double outer_right = 0.0;
};

/// Intercepts implied by continuity at the window edges and a jump of
/// exactly `jump` at the cutoff, given the free coefficients.
DerivedIntercepts derived_intercepts(const TreatmentParams& p);
void derive_intercepts(TreatmentParams& p);

/// Admissible interval for `which`, given the cutoff, jump, windows and every
/// free coefficient earlier in the sampling order (intercepts that depend
/// only on earlier coefficients are derived internally). An empty interval
/// means the partial assignment is infeasible.
Interval coefficient_bounds(const TreatmentParams& partial, FreeCoefficient which,
                            ScoreSupport support);

/// Checked evaluation; throws when x lies outside the support.
double treatment_prob(const TreatmentParams& p, double x, ScoreSupport support);

/// Prior on the cutoff location: continuous uniform, scaled beta, or a
/// discrete pmf (grid, beta-binomial, point-mass mixtures, point mass).
class CutoffPrior {
 public:
  enum class Kind { uniform, scaled_beta, discrete };

  static CutoffPrior uniform(double lo, double hi);
  static CutoffPrior scaled_beta(double lo, double hi, double alpha, double beta);
  static CutoffPrior discrete(std::vector<double> points, std::vector<double> weights);
  static CutoffPrior point_mass(double value);
  /// Equally weighted grid lo, lo + step, ..., hi.
  static CutoffPrior discrete_uniform(double lo, double hi, double step);
  static CutoffPrior beta_binomial(double lo, double hi, double step, double alpha,
                                   double beta);
  /// `weight` on `point`, the remainder spread uniformly over the other grid
  /// points lo, lo + step, ..., hi.
  static CutoffPrior point_mass_mixture(double point, double weight, double lo,
                                        double hi, double step);

  Kind kind() const { return kind_; }
  bool is_discrete() const { return kind_ == Kind::discrete; }
  double lower() const { return lo_; }
  double upper() const { return hi_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  const std::vector<double>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Log density (continuous) or log pmf (discrete); -inf off support.
  double log_density(double c) const;
  std::optional<std::size_t> index_of(double c) const;
  double sample(Rng& rng) const;
  double mean() const;
  double variance() const;

  /// Same prior after the affine score map x -> (x - offset) / range.
  CutoffPrior mapped(const ScoreScale& scale) const;
  /// Inverse of `mapped`.
  CutoffPrior unmapped(const ScoreScale& scale) const;

  /// Round-trippable text form, e.g. "uniform:-0.8:0.2".
  std::string to_string() const;
  static CutoffPrior parse(const std::string& text);

 private:
  Kind kind_ = Kind::uniform;
  double lo_ = 0.0;
  double hi_ = 1.0;
  double alpha_ = 1.0;
  double beta_ = 1.0;
  std::vector<double> points_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<double> cumulative_;
  std::string source_;  // original text, echoed by to_string when set
};

struct TreatmentPriorSpec {
  double eta = 0.2;
  CutoffPrior cutoff_prior = CutoffPrior::uniform(0.25, 0.75);
  SupportBounds bounds;
  ScoreSupport support;
};

/// Sum of the conditional-uniform coefficient log densities, the window,
/// jump and cutoff priors. -inf for any violated constraint.
double log_prior_treatment(const TreatmentParams& p, const TreatmentPriorSpec& spec);

/// Bernoulli log-likelihood with p clipped to [1e-12, 1 - 1e-12].
double log_lik_treatment(const TreatmentParams& p, std::span<const double> scores,
                         std::span<const int> treatments);
double log_lik_treatment(const TreatmentParams& p, const Dataset& data);

/// Draws every parameter except the cutoff from its conditional prior.
TreatmentParams sample_treatment_prior_given_cutoff(double cutoff,
                                                    const TreatmentPriorSpec& spec,
                                                    Rng& rng);
TreatmentParams sample_treatment_prior(const TreatmentPriorSpec& spec, Rng& rng);

}  // namespace lotta
