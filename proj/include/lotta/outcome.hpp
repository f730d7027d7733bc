#pragma once

#include <span>
#include <utility>

#include "lotta/data.hpp"
#include "lotta/random.hpp"
#include "lotta/treatment.hpp"

namespace lotta {

/// Coefficients of one side, in powers of (x - c).
struct OutcomeCoefficients {
  double level = 0.0;
  double slope = 0.0;
  double quadratic = 0.0;
  double cubic = 0.0;
};

/// Noise precisions: `inner_*` inside the linear window, `outer_*` in the tail.
struct NoisePrecisions {
  double inner_left = 1.0;
  double outer_left = 1.0;
  double inner_right = 1.0;
  double outer_right = 1.0;
};

/// LoTTA outcome function. The linear piece is used on (edge_left, c) and
/// [c, edge_right); the tails add the quadratic and cubic terms. For binary
/// outcomes the tails become inverse-logit cubics whose first-order Taylor
/// expansion at c is the linear piece.
struct OutcomeParams {
  double edge_left = 0.0;
  double edge_right = 0.0;
  OutcomeCoefficients left;
  OutcomeCoefficients right;
  NoisePrecisions noise;
};

struct Smoothing {
  bool sigmoid = false;
  double s = 100.0;

  static Smoothing exact() { return {}; }
  static Smoothing sigmoid_with(double s) { return {true, s}; }
};

/// Weight of the tail piece at x: 0/1 in exact mode, a logistic ramp in
/// sigmoid mode.
double tail_weight(const OutcomeParams& p, double x, double c, Smoothing smoothing);

double outcome_mean(const OutcomeParams& p, double x, double c,
                    Smoothing smoothing = Smoothing::exact());

/// 1/sqrt(inner precision) on [edge_left, edge_right], 1/sqrt(outer) beyond.
double outcome_sd(const OutcomeParams& p, double x, double c);

/// (logit(f0), f1 / (f0 (1 - f0))). Throws unless 0 < f0 < 1.
std::pair<double, double> binary_tilde_transform(double f0, double f1);

double outcome_mean_binary(const OutcomeParams& p, double x, double c,
                           Smoothing smoothing = Smoothing::exact());

struct OutcomePriorSpec {
  OutcomeKind kind = OutcomeKind::continuous;
  OutcomeBounds bounds;    // bounded outcomes only
  SupportBounds support;   // l_n, u_n and d_x for the window edges
  double coef_sd = 100.0;  // standard deviation, not precision
  double gamma_shape = 0.01;
  double gamma_rate = 0.01;
  double epsilon = 0.01;  // margin of the binary linear pieces
  double eta = 0.2;       // lower bound on j, used by the bounded coupling
  bool couple_jump = true;
};

/// Admissible slope interval keeping the linear piece within
/// [epsilon, 1 - epsilon] at both ends of its window.
Interval binary_slope_bounds(double level, double edge, double c, double epsilon);

/// Gaussian level/slope priors, window-scaled quadratic/cubic priors, gamma
/// inner precisions, uniform tail precisions and uniform window edges.
double log_prior_outcome_continuous(const OutcomeParams& p, double c,
                                    const SupportBounds& support,
                                    const OutcomePriorSpec& spec = {});

/// Full outcome prior for the configured kind. For bounded and binary
/// outcomes with `couple_jump` (and a fuzzy design, signalled by a finite
/// `jump`), adds log(1 - eta) - log(1 - lb) with lb = max(eta, |dlevel|/(b-a)):
/// combined with the treatment prior this turns j ~ U(eta, 1) into
/// j ~ U(lb, 1).
double log_prior_outcome(const OutcomeParams& p, double c, double jump,
                         const OutcomePriorSpec& spec);

double log_lik_outcome(const OutcomeParams& p, std::span<const double> scores,
                       std::span<const double> outcomes, double c, OutcomeKind kind,
                       Smoothing smoothing = Smoothing::exact());
double log_lik_outcome(const OutcomeParams& p, const Dataset& data, double c,
                       Smoothing smoothing = Smoothing::exact());

/// Draws from the outcome prior given the cutoff (without the jump coupling).
OutcomeParams sample_outcome_prior(double c, const OutcomePriorSpec& spec, Rng& rng);

/// Shared-coefficient check helper: cubic tail minus linear piece at x.
double taylor_remainder(const OutcomeCoefficients& k, double x, double c);

}  // namespace lotta
