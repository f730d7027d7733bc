#include "lotta/mcmc.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <thread>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include "cutoff_proposal.hpp"
#include "lotta/error.hpp"
#include "lotta/stats.hpp"

namespace lotta {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kInitRetries = 1000;

// Rng substreams; the chain index is the stream.
constexpr std::uint64_t kSweepStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kCutStream = 3;
constexpr std::uint64_t kTwoConstantStream = 0x7c0;

enum TermMask : unsigned {
  kTreatPrior = 1u,
  kTreatLik = 2u,
  kOutPrior = 4u,
  kOutLik = 8u,
  kAllTerms = 15u,
};

struct Terms {
  double treat_prior = 0.0;
  double treat_lik = 0.0;
  double out_prior = 0.0;
  double out_lik = 0.0;

  double total() const { return treat_prior + treat_lik + out_prior + out_lik; }
};

/// u in (0, 1) with density proportional to u^(a-1) exp(-rate u).
double truncated_gamma_unit(double a, double rate, Rng& rng) {
  if (rate < 1e-8) {
    for (;;) {
      const double u = std::pow(1.0 - rng.uniform(), 1.0 / a);
      if (rng.uniform() < std::exp(-rate * u)) return u;
    }
  }
  const double mass = boost::math::gamma_p(a, rate);
  if (mass > 1e-250) {
    const double target = mass * (1.0 - rng.uniform());
    const double u = boost::math::gamma_p_inv(a, target) / rate;
    return std::clamp(u, std::numeric_limits<double>::min(), 1.0);
  }
  // Underflow means a >> rate: propose Beta(a - rate, 1), accept with
  // (u e^(1-u))^rate, which is bounded by one on (0, 1].
  const double a_prop = a - rate;
  for (;;) {
    const double u = std::pow(1.0 - rng.uniform(), 1.0 / a_prop);
    if (std::log(rng.uniform()) < rate * (std::log(u) + 1.0 - u)) return u;
  }
}

Dataset sorted_by_score(const Dataset& data) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data.scores[a] < data.scores[b]; });
  Dataset out = data;
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.scores[k] = data.scores[order[k]];
    out.treatments[k] = data.treatments[order[k]];
    out.outcomes[k] = data.outcomes[order[k]];
  }
  return out;
}

double pooled_variance(const std::vector<double>& y) {
  if (y.size() < 2) return 1.0;
  const double v = stats::variance(y);
  return v > 0.0 ? v : 1.0;
}

class ChainSampler {
 public:
  ChainSampler(const Dataset& data, const ModelSpec& spec, const SamplerConfig& cfg,
               std::uint64_t chain, State init, bool update_treatment, bool update_outcome,
               std::uint64_t stream = kSweepStream)
      : data_(sorted_by_score(data)),
        spec_(spec),
        smoothing_(Smoothing::sigmoid_with(cfg.smoothing_s)),
        rng_(cfg.seed, chain, stream),
        state_(std::move(init)),
        update_treatment_(update_treatment && !spec.sharp),
        update_cutoff_(update_treatment && !(spec.treatment.cutoff_prior.is_discrete() &&
                                             spec.treatment.cutoff_prior.points().size() == 1)),
        use_outcome_(state_.has_outcome),
        update_outcome_(update_outcome && state_.has_outcome),
        cutoff_rw_("cutoff", {0.02}),
        cutoff_shift_("cutoff_shift", {0.01}),
        jump_("jump", {0.05}),
        jump_left_("jump_left_shift", {0.05}),
        windows_("windows", {0.05, 0.05}),
        relative_("relative", {0.05, 0.05, 0.05}),
        cutoff_relative_("cutoff_relative", {0.02}),
        coefficients_("treatment_coefficients", {0.05, 0.05, 0.05, 0.05, 0.05}),
        joint_("treatment_joint", {0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02}),
        edge_left_("edge_left", {0.03}),
        edge_right_("edge_right", {0.03}),
        binary_left_("binary_left", {0.02, 0.05, 0.5, 0.5}),
        binary_right_("binary_right", {0.02, 0.05, 0.5, 0.5}) {
    cutoff_shift_stats_.name = "cutoff_shift_discrete";
    cutoff_discrete_stats_.name = "cutoff_discrete";
    bounded_stats_.name = "bounded_coefficients";
    cutoff_relative_stats_.name = "cutoff_relative_discrete";
    terms_ = evaluate(state_, kAllTerms, Terms{});
    if (!std::isfinite(terms_.total()))
      throw Error("sampler started from a state with zero posterior density");
  }

  const State& state() const { return state_; }
  double log_density() const { return terms_.total(); }

  void sweep(bool adapting) {
    if (update_cutoff_) {
      move_cutoff(adapting);
      if (use_outcome_ || update_treatment_) shift_cutoff(adapting);
    }
    if (update_treatment_) {
      move_jump(adapting);
      move_jump_left(adapting);
      move_windows(adapting);
      move_relative(adapting);
      if (update_cutoff_) move_cutoff_relative(adapting);
      move_coefficients(adapting);
      move_joint(adapting);
    }
    if (update_outcome_) outcome_sweep(adapting);
  }

  void outcome_sweep(bool adapting) {
    move_edge(true, adapting);
    move_edge(false, adapting);
    switch (spec_.outcome.kind) {
      case OutcomeKind::continuous:
        gibbs_coefficients(true);
        gibbs_coefficients(false);
        break;
      case OutcomeKind::bounded:
        bounded_coefficients(true);
        bounded_coefficients(false);
        break;
      case OutcomeKind::binary:
        binary_coefficients(true, adapting);
        binary_coefficients(false, adapting);
        break;
    }
    if (spec_.outcome.kind != OutcomeKind::binary) {
      gibbs_precisions(true);
      gibbs_precisions(false);
      invalidate_marginals();
    }
    terms_ = evaluate(state_, kOutPrior | kOutLik, terms_);
  }

  /// Replaces the treatment parameters (cut posterior stage 2), carrying
  /// the outcome windows along with the cutoff.
  void plug_treatment(const TreatmentParams& t) {
    const double dc = t.cutoff - state_.treatment.cutoff;
    invalidate_marginals();
    state_.treatment = t;
    state_.outcome.edge_left += dc;
    state_.outcome.edge_right += dc;
    terms_ = evaluate(state_, kAllTerms, terms_);
    const auto& b = spec_.outcome.support;
    for (int attempt = 0; attempt < kInitRetries && !std::isfinite(terms_.total()); ++attempt) {
      if (attempt < kInitRetries / 2) {
        state_.outcome.edge_left = rng_.uniform(b.lower, t.cutoff - b.d_x);
        state_.outcome.edge_right = rng_.uniform(t.cutoff + b.d_x, b.upper);
      } else {
        state_.outcome = initial_outcome(data_, spec_, t, rng_);
      }
      terms_ = evaluate(state_, kAllTerms, terms_);
    }
    if (!std::isfinite(terms_.total()))
      throw Error("cut posterior: no admissible outcome state for a plugged cutoff");
  }

  std::vector<BlockStats> stats() const {
    std::vector<BlockStats> out;
    auto add = [&](const BlockStats& s) {
      if (s.attempts > 0) out.push_back(s);
    };
    add(cutoff_rw_.stats());
    add(cutoff_discrete_stats_);
    add(cutoff_shift_.stats());
    add(cutoff_shift_stats_);
    add(jump_.stats());
    add(jump_left_.stats());
    add(windows_.stats());
    add(relative_.stats());
    add(cutoff_relative_.stats());
    add(cutoff_relative_stats_);
    add(coefficients_.stats());
    add(joint_.stats());
    add(edge_left_.stats());
    add(edge_right_.stats());
    add(bounded_stats_);
    add(binary_left_.stats());
    add(binary_right_.stats());
    return out;
  }

  long total_accepted() const {
    long n = 0;
    for (const auto& s : stats()) n += s.accepted;
    return n;
  }

  static OutcomeParams initial_outcome(const Dataset& data, const ModelSpec& spec,
                                       const TreatmentParams& t, Rng& rng);

  Terms evaluate(const State& s, unsigned mask, const Terms& base) const {
    Terms out = base;
    const auto& t = s.treatment;
    if (mask & kTreatPrior) {
      out.treat_prior = spec_.sharp ? spec_.treatment.cutoff_prior.log_density(t.cutoff)
                                    : log_prior_treatment(t, spec_.treatment);
    }
    if (mask & kTreatLik) out.treat_lik = spec_.sharp ? 0.0 : log_lik_treatment(t, data_);
    if (!s.has_outcome) {
      out.out_prior = 0.0;
      out.out_lik = 0.0;
      return out;
    }
    if (mask & kOutPrior) {
      const double j = spec_.sharp ? std::numeric_limits<double>::quiet_NaN() : t.jump;
      out.out_prior = log_prior_outcome(s.outcome, t.cutoff, j, spec_.outcome);
    }
    if (mask & kOutLik) {
      // The likelihood is only needed where the prior is finite.
      out.out_lik = std::isfinite(out.out_prior)
                        ? log_lik_outcome(s.outcome, data_.scores, data_.outcomes, t.cutoff,
                                          spec_.outcome.kind, smoothing_)
                        : 0.0;
    }
    return out;
  }

 private:
  // Accepts `proposal` with the Metropolis-Hastings rule for the given terms.
  bool metropolis(State& proposal, unsigned mask, double log_q_ratio = 0.0) {
    Terms t = evaluate(proposal, mask & (kTreatPrior | kOutPrior), terms_);
    if (!std::isfinite(t.treat_prior) || !std::isfinite(t.out_prior)) return false;
    t = evaluate(proposal, mask & (kTreatLik | kOutLik), t);
    const double delta = t.total() - terms_.total() + log_q_ratio;
    if (!std::isfinite(delta)) return false;
    if (delta >= 0.0 || std::log(rng_.uniform()) < delta) {
      state_ = std::move(proposal);
      terms_ = t;
      return true;
    }
    return false;
  }

  template <class Get, class Set>
  void random_walk(AdaptiveProposal& block, unsigned mask, bool adapting, Get get, Set set,
                   bool left = true, bool right = true) {
    const Eigen::VectorXd current = get(state_);
    Eigen::VectorXd next;
    block.propose(current, next, rng_);
    State proposal = state_;
    set(proposal, next);
    const bool ok = move(proposal, mask, 0.0, left, right);
    block.update(get(state_), ok, adapting);
  }

  void move_cutoff(bool adapting) {
    const auto& prior = spec_.treatment.cutoff_prior;
    const double c = state_.treatment.cutoff;
    const auto prop = detail::propose_cutoff(prior, c, cutoff_rw_.scale(0), rng_);
    bool ok = false;
    if (prop.valid) {
      State s = state_;
      s.treatment.cutoff = prop.value;
      if (!spec_.sharp) derive_intercepts(s.treatment);
      ok = move(s, kAllTerms, prop.log_q_ratio);
    }
    if (prior.is_discrete()) {
      ++cutoff_discrete_stats_.attempts;
      if (ok) ++cutoff_discrete_stats_.accepted;
    } else if (prop.random_walk) {
      Eigen::VectorXd v(1);
      v[0] = state_.treatment.cutoff;
      cutoff_rw_.update(v, ok, adapting);
    }
  }

  // Moves the cutoff together with the outcome windows and translates the
  // treatment curve, so the local fit is carried along.
  void shift_cutoff(bool adapting) {
    const auto& prior = spec_.treatment.cutoff_prior;
    const double c = state_.treatment.cutoff;
    double target = 0.0;
    double log_q = 0.0;
    if (prior.is_discrete()) {
      const auto prop = detail::propose_cutoff(prior, c, 0.0, rng_);
      ++cutoff_shift_stats_.attempts;
      if (!prop.valid || !prop.random_walk) return;
      target = prop.value;
    } else {
      target = c + cutoff_shift_.scale(0) * rng_.normal();
    }
    const double dc = target - c;
    State s = state_;
    auto& t = s.treatment;
    t.cutoff = target;
    if (!spec_.sharp) {
      t.outer_left.intercept -= t.outer_left.slope * dc;
      derive_intercepts(t);
    }
    s.outcome.edge_left += dc;
    s.outcome.edge_right += dc;
    const bool ok = move(s, kAllTerms, log_q);
    if (prior.is_discrete()) {
      if (ok) ++cutoff_shift_stats_.accepted;
    } else {
      Eigen::VectorXd v(1);
      v[0] = state_.treatment.cutoff;
      cutoff_shift_.update(v, ok, adapting);
    }
  }

  void move_jump(bool adapting) {
    random_walk(
        jump_, kTreatPrior | kTreatLik | kOutPrior, adapting,
        [](const State& s) {
          Eigen::VectorXd v(1);
          v[0] = s.treatment.jump;
          return v;
        },
        [](State& s, const Eigen::VectorXd& v) {
          s.treatment.jump = v[0];
          derive_intercepts(s.treatment);
        });
  }

  // Raises j and lowers the whole left side by the same amount, leaving the
  // take-up to the right of the cutoff unchanged.
  void move_jump_left(bool adapting) {
    random_walk(
        jump_left_, kTreatPrior | kTreatLik | kOutPrior, adapting,
        [](const State& s) {
          Eigen::VectorXd v(1);
          v[0] = s.treatment.jump;
          return v;
        },
        [](State& s, const Eigen::VectorXd& v) {
          auto& t = s.treatment;
          t.outer_left.intercept -= v[0] - t.jump;
          t.jump = v[0];
          derive_intercepts(t);
        });
  }

  void move_windows(bool adapting) {
    random_walk(
        windows_, kTreatPrior | kTreatLik, adapting,
        [](const State& s) {
          Eigen::VectorXd v(2);
          v << s.treatment.window_left, s.treatment.window_right;
          return v;
        },
        [](State& s, const Eigen::VectorXd& v) {
          s.treatment.window_left = v[0];
          s.treatment.window_right = v[1];
          derive_intercepts(s.treatment);
        });
  }

  // Position of each free coefficient within its admissible interval. With
  // the positions held fixed, moves of c, j and the windows carry the
  // coefficients along; the log Jacobian is the sum of log interval lengths.
  struct Fractions {
    std::array<double, 5> u{};
    double log_jacobian = 0.0;
  };

  static constexpr std::array<FreeCoefficient, 5> kCoefficientOrder = {
      FreeCoefficient::outer_left_slope, FreeCoefficient::outer_left_intercept,
      FreeCoefficient::inner_left_slope, FreeCoefficient::inner_right_slope,
      FreeCoefficient::outer_right_slope};

  static double& coefficient(TreatmentParams& t, FreeCoefficient which) {
    switch (which) {
      case FreeCoefficient::outer_left_slope: return t.outer_left.slope;
      case FreeCoefficient::outer_left_intercept: return t.outer_left.intercept;
      case FreeCoefficient::inner_left_slope: return t.inner_left.slope;
      case FreeCoefficient::inner_right_slope: return t.inner_right.slope;
      case FreeCoefficient::outer_right_slope: break;
    }
    return t.outer_right.slope;
  }

  std::optional<Fractions> fractions(TreatmentParams t) const {
    Fractions f;
    for (std::size_t i = 0; i < kCoefficientOrder.size(); ++i) {
      const auto iv = coefficient_bounds(t, kCoefficientOrder[i], spec_.treatment.support);
      if (!(iv.length() > 0.0)) return std::nullopt;
      f.u[i] = (coefficient(t, kCoefficientOrder[i]) - iv.lo) / iv.length();
      f.log_jacobian += std::log(iv.length());
    }
    return f;
  }

  // Rebuilds the free coefficients from `f`; returns the log Jacobian, or
  // nullopt when an interval is empty.
  std::optional<double> apply_fractions(TreatmentParams& t, const Fractions& f) const {
    double log_jacobian = 0.0;
    for (std::size_t i = 0; i < kCoefficientOrder.size(); ++i) {
      const auto iv = coefficient_bounds(t, kCoefficientOrder[i], spec_.treatment.support);
      if (!(iv.length() > 0.0)) return std::nullopt;
      coefficient(t, kCoefficientOrder[i]) = iv.lo + f.u[i] * iv.length();
      log_jacobian += std::log(iv.length());
    }
    derive_intercepts(t);
    return log_jacobian;
  }

  void move_relative(bool adapting) {
    auto get = [](const State& s) {
      Eigen::VectorXd v(3);
      v << s.treatment.jump, s.treatment.window_left, s.treatment.window_right;
      return v;
    };
    const auto f = fractions(state_.treatment);
    if (!f) return;
    Eigen::VectorXd next;
    relative_.propose(get(state_), next, rng_);
    State s = state_;
    s.treatment.jump = next[0];
    s.treatment.window_left = next[1];
    s.treatment.window_right = next[2];
    bool ok = false;
    if (const auto lj = apply_fractions(s.treatment, *f))
      ok = move(s, kTreatPrior | kTreatLik | kOutPrior, *lj - f->log_jacobian);
    relative_.update(get(state_), ok, adapting);
  }

  void move_cutoff_relative(bool adapting) {
    const auto& prior = spec_.treatment.cutoff_prior;
    const auto f = fractions(state_.treatment);
    if (!f) return;
    const auto prop =
        detail::propose_cutoff(prior, state_.treatment.cutoff, cutoff_relative_.scale(0), rng_);
    bool ok = false;
    if (prop.valid) {
      State s = state_;
      s.treatment.cutoff = prop.value;
      if (const auto lj = apply_fractions(s.treatment, *f))
        ok = move(s, kAllTerms, prop.log_q_ratio + *lj - f->log_jacobian);
    }
    if (prior.is_discrete()) {
      ++cutoff_relative_stats_.attempts;
      if (ok) ++cutoff_relative_stats_.accepted;
    } else if (prop.random_walk) {
      Eigen::VectorXd v(1);
      v[0] = state_.treatment.cutoff;
      cutoff_relative_.update(v, ok, adapting);
    }
  }

  static Eigen::VectorXd free_coefficients(const TreatmentParams& t) {
    Eigen::VectorXd v(5);
    v << t.outer_left.slope, t.outer_left.intercept, t.inner_left.slope, t.inner_right.slope,
        t.outer_right.slope;
    return v;
  }

  static void set_free_coefficients(TreatmentParams& t, const Eigen::VectorXd& v,
                                    Eigen::Index at) {
    t.outer_left.slope = v[at];
    t.outer_left.intercept = v[at + 1];
    t.inner_left.slope = v[at + 2];
    t.inner_right.slope = v[at + 3];
    t.outer_right.slope = v[at + 4];
    derive_intercepts(t);
  }

  void move_coefficients(bool adapting) {
    random_walk(
        coefficients_, kTreatPrior | kTreatLik, adapting,
        [](const State& s) { return free_coefficients(s.treatment); },
        [](State& s, const Eigen::VectorXd& v) { set_free_coefficients(s.treatment, v, 0); });
  }

  void move_joint(bool adapting) {
    random_walk(
        joint_, kTreatPrior | kTreatLik | kOutPrior, adapting,
        [](const State& s) {
          Eigen::VectorXd v(8);
          const auto& t = s.treatment;
          v << t.jump, t.window_left, t.window_right, free_coefficients(t);
          return v;
        },
        [](State& s, const Eigen::VectorXd& v) {
          auto& t = s.treatment;
          t.jump = v[0];
          t.window_left = v[1];
          t.window_right = v[2];
          set_free_coefficients(t, v, 3);
        });
  }

  void move_edge(bool left, bool adapting) {
    random_walk(
        left ? edge_left_ : edge_right_, kOutPrior | kOutLik, adapting,
        [left](const State& s) {
          Eigen::VectorXd v(1);
          v[0] = left ? s.outcome.edge_left : s.outcome.edge_right;
          return v;
        },
        [left](State& s, const Eigen::VectorXd& v) {
          (left ? s.outcome.edge_left : s.outcome.edge_right) = v[0];
        },
        left, !left);
  }

  struct SideSystem {
    Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
    Eigen::Vector4d b = Eigen::Vector4d::Zero();
    double half_log_w = 0.0;  // sum of log(w_i) / 2
    double wyy = 0.0;         // sum of w_i y_i^2
    double n = 0.0;
  };

  // Precision-weighted normal equations of one side, with the smoothed
  // design [1, d, g d^2, g d^3], d = x - c.
  SideSystem side_system(const State& s, bool left) const {
    const auto& o = s.outcome;
    const double c = s.treatment.cutoff;
    const auto split = static_cast<std::size_t>(
        std::lower_bound(data_.scores.begin(), data_.scores.end(), c) - data_.scores.begin());
    const std::size_t begin = left ? 0 : split;
    const std::size_t end = left ? split : data_.size();
    const double w_in = left ? o.noise.inner_left : o.noise.inner_right;
    const double w_out = left ? o.noise.outer_left : o.noise.outer_right;
    SideSystem sys;
    double n_in = 0.0;
    // Upper triangle of A accumulated as scalars; A is symmetric.
    double a[10] = {0.0};
    double bv[4] = {0.0};
    const double edge = left ? o.edge_left : o.edge_right;
    for (std::size_t i = begin; i < end; ++i) {
      const double x = data_.scores[i];
      const double d = x - c;
      const bool inner = left ? x >= edge : x <= edge;
      double g = 0.0;
      if (smoothing_.sigmoid) {
        const double z = smoothing_.s * (left ? edge - x : x - edge);
        g = z > 40.0 ? 1.0 : (z < -40.0 ? 0.0 : stats::inv_logit(z));
      } else {
        g = inner ? 0.0 : 1.0;
      }
      const double w = inner ? w_in : w_out;
      n_in += inner ? 1.0 : 0.0;
      const double y = data_.outcomes[i];
      const double h2 = g * d * d;
      const double h3 = h2 * d;
      const double wd = w * d, w2 = w * h2, w3 = w * h3;
      a[0] += w;      a[1] += wd;      a[2] += w2;      a[3] += w3;
      a[4] += wd * d; a[5] += wd * h2; a[6] += wd * h3;
      a[7] += w2 * h2; a[8] += w2 * h3;
      a[9] += w3 * h3;
      bv[0] += w * y; bv[1] += wd * y; bv[2] += w2 * y; bv[3] += w3 * y;
      sys.wyy += w * y * y;
    }
    sys.A << a[0], a[1], a[2], a[3],
             a[1], a[4], a[5], a[6],
             a[2], a[5], a[7], a[8],
             a[3], a[6], a[8], a[9];
    sys.b << bv[0], bv[1], bv[2], bv[3];
    sys.n = static_cast<double>(end - begin);
    sys.half_log_w = 0.5 * (n_in * std::log(w_in) + (sys.n - n_in) * std::log(w_out));
    return sys;
  }

  Eigen::Vector4d prior_precisions(const State& s, bool left) const {
    const auto& o = s.outcome;
    const double c = s.treatment.cutoff;
    const double sd = spec_.outcome.coef_sd;
    const double width = left ? c - o.edge_left : o.edge_right - c;
    const double p01 = 1.0 / (sd * sd);
    const double p23 = width / (sd * sd);
    return {p01, p01, p23, p23};
  }
  Eigen::Vector4d prior_precisions(bool left) const { return prior_precisions(state_, left); }

  struct SideMarginal {
    double value = kNegInf;
    Eigen::Matrix4d A;  // posterior precision of the side coefficients
    Eigen::Vector4d b;
  };

  // Log marginal likelihood of one side with its Gaussian coefficients
  // integrated out.
  SideMarginal side_marginal(const State& s, bool left) const {
    SideSystem sys = side_system(s, left);
    const Eigen::Vector4d p = prior_precisions(s, left);
    sys.A.diagonal() += p;
    SideMarginal m{kNegInf, sys.A, sys.b};
    Eigen::LLT<Eigen::Matrix4d> llt(sys.A);
    if (llt.info() != Eigen::Success) return m;
    const Eigen::Matrix4d L = llt.matrixL();
    const double log_det_a = 2.0 * L.diagonal().array().log().sum();
    const double quad = sys.b.dot(llt.solve(sys.b));
    m.value = sys.half_log_w - 0.5 * sys.n * std::log(2.0 * std::numbers::pi) - 0.5 * sys.wyy +
              0.5 * quad - 0.5 * log_det_a + 0.5 * p.array().log().sum();
    return m;
  }

  double current_marginal(bool left) {
    const int k = left ? 0 : 1;
    if (!marginal_ok_[k]) {
      marginal_[k] = side_marginal(state_, left).value;
      marginal_ok_[k] = true;
    }
    return marginal_[k];
  }

  void invalidate_marginals() { marginal_ok_[0] = marginal_ok_[1] = false; }

  double edge_log_prior(const State& s) const {
    const auto& b = spec_.outcome.support;
    const auto& o = s.outcome;
    const double c = s.treatment.cutoff;
    if (!(o.edge_left > b.lower && o.edge_left < c - b.d_x && o.edge_right > c + b.d_x &&
          o.edge_right < b.upper))
      return kNegInf;
    return -std::log(c - b.d_x - b.lower) - std::log(b.upper - c - b.d_x);
  }

  // Metropolis-Hastings with the continuous outcome coefficients of the
  // touched sides integrated out; on acceptance they are redrawn from their
  // conditional.
  bool collapsed_metropolis(State& proposal, unsigned treat_mask, bool left, bool right,
                            double log_q_ratio = 0.0) {
    Terms t = evaluate(proposal, treat_mask & kTreatPrior, terms_);
    if (!std::isfinite(t.treat_prior)) return false;
    const double edge_new = edge_log_prior(proposal);
    if (!std::isfinite(edge_new)) return false;
    SideMarginal m_left, m_right;
    double delta = edge_new - edge_log_prior(state_) + log_q_ratio;
    if (left) {
      m_left = side_marginal(proposal, true);
      delta += m_left.value - current_marginal(true);
    }
    if (right) {
      m_right = side_marginal(proposal, false);
      delta += m_right.value - current_marginal(false);
    }
    if (!std::isfinite(delta)) return false;
    t = evaluate(proposal, treat_mask & kTreatLik, t);
    delta += t.treat_prior + t.treat_lik - terms_.treat_prior - terms_.treat_lik;
    if (!std::isfinite(delta)) return false;
    if (delta >= 0.0 || std::log(rng_.uniform()) < delta) {
      state_ = std::move(proposal);
      if (left) {
        set_side(state_.outcome, true, gaussian_draw(m_left.A, m_left.b));
        marginal_[0] = m_left.value;
        marginal_ok_[0] = true;
      }
      if (right) {
        set_side(state_.outcome, false, gaussian_draw(m_right.A, m_right.b));
        marginal_[1] = m_right.value;
        marginal_ok_[1] = true;
      }
      terms_ = evaluate(state_, kOutPrior | kOutLik, t);
      return true;
    }
    return false;
  }

  bool collapsible() const {
    return use_outcome_ && update_outcome_ && spec_.outcome.kind == OutcomeKind::continuous;
  }

  // Dispatches to the collapsed update when the move touches the outcome
  // likelihood of a continuous outcome.
  bool move(State& proposal, unsigned mask, double log_q_ratio = 0.0, bool left = true,
            bool right = true) {
    if (collapsible() && (mask & kOutLik))
      return collapsed_metropolis(proposal, mask & (kTreatPrior | kTreatLik), left, right,
                                  log_q_ratio);
    return metropolis(proposal, mask, log_q_ratio);
  }

  Eigen::Vector4d gaussian_draw(const Eigen::Matrix4d& A, const Eigen::Vector4d& b) {
    Eigen::LLT<Eigen::Matrix4d> llt(A);
    if (llt.info() != Eigen::Success) throw Error("outcome coefficient system not positive definite");
    const Eigen::Vector4d mean = llt.solve(b);
    Eigen::Vector4d z;
    for (int k = 0; k < 4; ++k) z[k] = rng_.normal();
    // A = L L^T, so L^T x = z has covariance A^-1.
    return mean + llt.matrixU().solve(z);
  }

  static void set_side(OutcomeParams& o, bool left, const Eigen::Vector4d& v) {
    auto& k = left ? o.left : o.right;
    k.level = v[0];
    k.slope = v[1];
    k.quadratic = v[2];
    k.cubic = v[3];
  }

  void gibbs_coefficients(bool left) {
    SideSystem sys = side_system(state_, left);
    sys.A.diagonal() += prior_precisions(left);
    set_side(state_.outcome, left, gaussian_draw(sys.A, sys.b));
  }

  // Independence proposal from the Gaussian conditional with a wide normal
  // stand-in for the uniform level prior; the weights correct for it and
  // for the jump coupling.
  void bounded_coefficients(bool left) {
    const auto bounds = spec_.outcome.bounds;
    const double mid = 0.5 * (bounds.lower + bounds.upper);
    const double p_level = 1.0 / ((bounds.upper - bounds.lower) * (bounds.upper - bounds.lower));
    SideSystem sys = side_system(state_, left);
    Eigen::Matrix4d& A = sys.A;
    Eigen::Vector4d& b = sys.b;
    Eigen::Vector4d prior = prior_precisions(left);
    prior[0] = p_level;
    A.diagonal() += prior;
    b[0] += p_level * mid;
    const Eigen::Vector4d draw = gaussian_draw(A, b);

    auto log_weight = [&](const State& s) {
      const double lp = evaluate(s, kOutPrior, terms_).out_prior;
      const auto& k = left ? s.outcome.left : s.outcome.right;
      // The Gaussian parts of the target cancel against the proposal.
      const double gauss = -0.5 * prior_precisions(left)[1] * k.slope * k.slope -
                           0.5 * prior_precisions(left)[2] * (k.quadratic * k.quadratic + k.cubic * k.cubic);
      return lp - gauss + 0.5 * p_level * (k.level - mid) * (k.level - mid);
    };
    State s = state_;
    set_side(s.outcome, left, draw);
    const double w_new = log_weight(s);
    const double w_old = log_weight(state_);
    ++bounded_stats_.attempts;
    if (!std::isfinite(w_new)) return;
    if (w_new >= w_old || std::log(rng_.uniform()) < w_new - w_old) {
      state_ = std::move(s);
      ++bounded_stats_.accepted;
    }
  }

  void binary_coefficients(bool left, bool adapting) {
    random_walk(
        left ? binary_left_ : binary_right_, kOutPrior | kOutLik, adapting,
        [left](const State& s) {
          const auto& k = left ? s.outcome.left : s.outcome.right;
          Eigen::VectorXd v(4);
          v << k.level, k.slope, k.quadratic, k.cubic;
          return v;
        },
        [left](State& s, const Eigen::VectorXd& v) {
          set_side(s.outcome, left, Eigen::Vector4d(v[0], v[1], v[2], v[3]));
        });
  }

  // Gibbs update of (inner, outer = u * inner) on one side: the inner
  // precision is conjugate given u, and u given the inner precision is a
  // gamma truncated to (0, 1).
  void gibbs_precisions(bool left) {
    auto& o = state_.outcome;
    const double c = state_.treatment.cutoff;
    double n1 = 0, ss1 = 0, n2 = 0, ss2 = 0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double x = data_.scores[i];
      if ((x < c) != left) continue;
      const double r = data_.outcomes[i] - outcome_mean(o, x, c, smoothing_);
      const bool inner = left ? x >= o.edge_left : x <= o.edge_right;
      if (inner) {
        n1 += 1;
        ss1 += r * r;
      } else {
        n2 += 1;
        ss2 += r * r;
      }
    }
    double& inner = left ? o.noise.inner_left : o.noise.inner_right;
    double& outer = left ? o.noise.outer_left : o.noise.outer_right;
    const double u0 = outer / inner;
    const double rho = rng_.gamma(spec_.outcome.gamma_shape + 0.5 * (n1 + n2),
                                  spec_.outcome.gamma_rate + 0.5 * (ss1 + u0 * ss2));
    const double u = truncated_gamma_unit(0.5 * n2 + 1.0, 0.5 * rho * ss2, rng_);
    // Keep both precisions representable when the vague gamma prior
    // dominates (empty or tiny sides).
    inner = std::clamp(rho, 1e-250, 1e250);
    outer = std::max(u * inner, 1e-300);
  }

  double marginal_[2] = {0.0, 0.0};
  bool marginal_ok_[2] = {false, false};
  const Dataset data_;  // sorted by score so each side is a contiguous range
  const ModelSpec& spec_;
  Smoothing smoothing_;
  Rng rng_;
  State state_;
  Terms terms_;
  bool update_treatment_;
  bool update_cutoff_;
  bool use_outcome_;
  bool update_outcome_;

  AdaptiveProposal cutoff_rw_;
  AdaptiveProposal cutoff_shift_;
  AdaptiveProposal jump_;
  AdaptiveProposal jump_left_;
  AdaptiveProposal windows_;
  AdaptiveProposal relative_;
  AdaptiveProposal cutoff_relative_;
  AdaptiveProposal coefficients_;
  AdaptiveProposal joint_;
  AdaptiveProposal edge_left_;
  AdaptiveProposal edge_right_;
  AdaptiveProposal binary_left_;
  AdaptiveProposal binary_right_;
  BlockStats cutoff_discrete_stats_;
  BlockStats cutoff_shift_stats_;
  BlockStats bounded_stats_;
  BlockStats cutoff_relative_stats_;
};

OutcomeParams ChainSampler::initial_outcome(const Dataset& data, const ModelSpec& spec,
                                            const TreatmentParams& t, Rng& rng) {
  const auto& b = spec.outcome.support;
  const double c = t.cutoff;
  OutcomeParams o;
  o.edge_left = rng.uniform(b.lower, c - b.d_x);
  o.edge_right = rng.uniform(c + b.d_x, b.upper);

  double sum_l = 0, sum_r = 0;
  int n_l = 0, n_r = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data.scores[i];
    if (x < c && x > o.edge_left) {
      sum_l += data.outcomes[i];
      ++n_l;
    } else if (x >= c && x < o.edge_right) {
      sum_r += data.outcomes[i];
      ++n_r;
    }
  }
  const auto kind = spec.outcome.kind;
  const double fallback = kind == OutcomeKind::continuous
                              ? 0.0
                              : kind == OutcomeKind::binary
                                    ? 0.5
                                    : 0.5 * (spec.outcome.bounds.lower + spec.outcome.bounds.upper);
  double lvl_l = n_l > 0 ? sum_l / n_l : fallback;
  double lvl_r = n_r > 0 ? sum_r / n_r : fallback;
  if (kind == OutcomeKind::binary) {
    lvl_l = std::clamp(lvl_l, 0.05, 0.95);
    lvl_r = std::clamp(lvl_r, 0.05, 0.95);
  } else if (kind == OutcomeKind::bounded) {
    const double lo = spec.outcome.bounds.lower;
    const double hi = spec.outcome.bounds.upper;
    const double m = 0.01 * (hi - lo);
    lvl_l = std::clamp(lvl_l, lo + m, hi - m);
    lvl_r = std::clamp(lvl_r, lo + m, hi - m);
  }
  if (kind != OutcomeKind::continuous && !spec.sharp) {
    const double range = kind == OutcomeKind::binary
                             ? 1.0
                             : spec.outcome.bounds.upper - spec.outcome.bounds.lower;
    if (std::abs(lvl_r - lvl_l) / range >= t.jump) lvl_l = lvl_r = 0.5 * (lvl_l + lvl_r);
  }
  o.left.level = lvl_l;
  o.right.level = lvl_r;
  if (kind != OutcomeKind::binary) {
    const double precision = 1.0 / pooled_variance(data.outcomes);
    o.noise = {precision, 0.999 * precision, precision, 0.999 * precision};
  }
  return o;
}

TreatmentParams initial_treatment(const ModelSpec& spec, double c, double q_left,
                                  double q_right, Rng& rng) {
  TreatmentParams t;
  t.cutoff = c;
  if (spec.sharp) return t;
  const auto& ts = spec.treatment;
  const double eta = ts.eta;
  t.jump = std::clamp(q_right - q_left, eta + 0.05 * (1.0 - eta), 0.95);
  t.window_left = rng.uniform(ts.bounds.d_x, c - ts.bounds.lower);
  t.window_right = rng.uniform(ts.bounds.d_x, ts.bounds.upper - c);
  auto small = [&](FreeCoefficient which) {
    const auto iv = coefficient_bounds(t, which, ts.support);
    return iv.empty() ? 0.0 : iv.lo + 0.1 * rng.uniform() * iv.length();
  };
  t.outer_left.slope = small(FreeCoefficient::outer_left_slope);
  const auto iv = coefficient_bounds(t, FreeCoefficient::outer_left_intercept, ts.support);
  const double target = std::min(q_left, 1.0 - t.jump) - t.outer_left.slope * (c - t.window_left);
  t.outer_left.intercept = iv.empty() ? 0.0 : std::clamp(target, iv.lo, iv.hi);
  t.inner_left.slope = small(FreeCoefficient::inner_left_slope);
  t.inner_right.slope = small(FreeCoefficient::inner_right_slope);
  t.outer_right.slope = small(FreeCoefficient::outer_right_slope);
  derive_intercepts(t);
  return t;
}

template <class Fn>
void run_parallel(int tasks, int threads, Fn fn) {
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, std::max(1, tasks));
  if (workers == 1) {
    for (int k = 0; k < tasks; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int k = next++; k < tasks; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Draw make_draw(const State& s, bool sharp) {
  Draw d{s.treatment, s.outcome, 0.0};
  if (!s.has_outcome) {
    d.outcome = OutcomeParams{};
    d.tau = std::numeric_limits<double>::quiet_NaN();
  } else {
    d.tau = tau_per_draw(d, sharp);
  }
  return d;
}

PosteriorDraws sample_chains(const Dataset& data, const ModelSpec& spec,
                             const SamplerConfig& cfg, FitMode mode) {
  auto inits = init_chains(data, spec, cfg);
  PosteriorDraws out;
  out.mode = mode;
  out.sharp = spec.sharp;
  out.has_outcome = mode != FitMode::treatment_only;
  out.chains.resize(static_cast<std::size_t>(cfg.chains));
  out.acceptance.resize(static_cast<std::size_t>(cfg.chains));
  const int warmup = cfg.adapt + cfg.burn_in;
  run_parallel(cfg.chains, cfg.threads, [&](int k) {
    const auto ck = static_cast<std::size_t>(k);
    ChainSampler sampler(data, spec, cfg, ck, inits[ck], true, true);
    for (int it = 0; it < warmup; ++it) sampler.sweep(cfg.adapt_enabled);
    if (warmup > 0 && sampler.total_accepted() == 0)
      throw Error(fmt::format("chain {}: every proposal was rejected during adaptation", k));
    auto& draws = out.chains[ck];
    draws.reserve(static_cast<std::size_t>(cfg.draws));
    for (int it = 0; it < cfg.draws; ++it) {
      sampler.sweep(false);
      draws.push_back(make_draw(sampler.state(), spec.sharp));
    }
    out.acceptance[ck] = sampler.stats();
  });
  return out;
}

}  // namespace

std::string to_string(FitMode mode) {
  switch (mode) {
    case FitMode::joint:
      return "joint";
    case FitMode::treatment_only:
      return "treatment-only";
    case FitMode::cut:
      return "cut";
  }
  return "joint";
}

FitMode parse_fit_mode(const std::string& text) {
  if (text == "joint") return FitMode::joint;
  if (text == "treatment-only") return FitMode::treatment_only;
  if (text == "cut") return FitMode::cut;
  throw Error("unknown mode '" + text + "' (expected joint, cut or treatment-only)");
}

ModelSpec make_model_spec(const Dataset& data, double eta, CutoffPrior cutoff_prior, bool sharp,
                          int n_bounds, double radius_quantile, const SupportBounds* bounds) {
  if (!(eta > 0.0 && eta < 1.0)) throw Error("eta must lie in (0, 1)");
  ModelSpec spec;
  spec.sharp = sharp;
  spec.treatment.eta = eta;
  spec.treatment.cutoff_prior = std::move(cutoff_prior);
  spec.treatment.bounds = bounds ? *bounds : compute_support_bounds(data, n_bounds, radius_quantile);
  spec.treatment.support = {data.support_lo, data.support_hi};
  spec.outcome.kind = data.outcome_kind;
  spec.outcome.bounds = data.outcome_bounds;
  spec.outcome.support = spec.treatment.bounds;
  spec.outcome.eta = eta;
  spec.outcome.couple_jump = !sharp;
  return spec;
}

void SamplerConfig::validate() const {
  if (chains < 1) throw Error("chains must be >= 1");
  if (burn_in < 0 || adapt < 0) throw Error("burn-in and adapt must be >= 0");
  if (draws < 1) throw Error("draws must be >= 1");
  if (!(smoothing_s > 0.0)) throw Error("smoothing must be positive");
  if (cut_inner_sweeps < 1) throw Error("cut inner sweeps must be >= 1");
  if (init_draws < 1 || init_burn_in < 0) throw Error("invalid initialization run length");
}

double tau_per_draw(const Draw& draw, bool sharp) {
  const double num = draw.outcome.right.level - draw.outcome.left.level;
  return sharp ? num : num / draw.treatment.jump;
}

double log_posterior(const State& state, const Dataset& data, const ModelSpec& spec,
                     FitMode mode, Smoothing smoothing) {
  double lp = spec.sharp ? spec.treatment.cutoff_prior.log_density(state.treatment.cutoff)
                         : log_prior_treatment(state.treatment, spec.treatment);
  if (!std::isfinite(lp)) return kNegInf;
  if (!spec.sharp) lp += log_lik_treatment(state.treatment, data);
  if (mode == FitMode::treatment_only || !state.has_outcome) return lp;
  const double j = spec.sharp ? std::numeric_limits<double>::quiet_NaN() : state.treatment.jump;
  const double op = log_prior_outcome(state.outcome, state.treatment.cutoff, j, spec.outcome);
  if (!std::isfinite(op)) return kNegInf;
  return lp + op +
         log_lik_outcome(state.outcome, data.scores, data.outcomes, state.treatment.cutoff,
                         spec.outcome.kind, smoothing);
}

std::vector<State> init_chains(const Dataset& data, const ModelSpec& spec,
                               const SamplerConfig& config) {
  config.validate();
  TwoConstantConfig tc;
  tc.burn_in = config.init_burn_in;
  tc.draws = config.init_draws;
  tc.seed = config.seed;
  tc.stream = kTwoConstantStream;
  const double eta = spec.sharp ? 0.5 : spec.treatment.eta;
  const auto pilot =
      two_constant_posterior(data, spec.treatment.cutoff_prior, eta, tc, &spec.treatment.bounds);

  const bool with_outcome = config.mode != FitMode::treatment_only;
  const Smoothing smoothing = Smoothing::sigmoid_with(config.smoothing_s);
  std::vector<State> states;
  for (int chain = 0; chain < config.chains; ++chain) {
    Rng rng(config.seed, static_cast<std::uint64_t>(chain), kInitStream);
    bool found = false;
    for (int attempt = 0; attempt < kInitRetries && !found; ++attempt) {
      const std::size_t k = rng.index(pilot.cutoff.size());
      State s;
      s.has_outcome = with_outcome;
      const double c = pilot.cutoff[k];
      if (attempt < kInitRetries / 2) {
        s.treatment = initial_treatment(spec, c, pilot.left[k], pilot.right[k], rng);
      } else if (spec.sharp) {
        s.treatment.cutoff = c;
      } else {
        try {
          s.treatment = sample_treatment_prior_given_cutoff(c, spec.treatment, rng);
        } catch (const Error&) {
          continue;
        }
      }
      if (with_outcome) s.outcome = ChainSampler::initial_outcome(data, spec, s.treatment, rng);
      if (std::isfinite(log_posterior(s, data, spec, config.mode, smoothing))) {
        states.push_back(s);
        found = true;
      }
    }
    if (!found)
      throw Error(fmt::format("chain {}: no finite-density initial state after {} attempts",
                              chain, kInitRetries));
  }
  return states;
}

PosteriorDraws cut_run(const Dataset& data, const ModelSpec& spec, const SamplerConfig& config) {
  config.validate();
  SamplerConfig stage1 = config;
  stage1.mode = FitMode::treatment_only;
  PosteriorDraws first = sample_chains(data, spec, stage1, FitMode::treatment_only);

  SamplerConfig stage2 = config;
  stage2.mode = FitMode::cut;
  auto inits = init_chains(data, spec, stage2);
  PosteriorDraws out;
  out.mode = FitMode::cut;
  out.sharp = spec.sharp;
  out.has_outcome = true;
  out.chains.resize(first.chains.size());
  out.acceptance.resize(first.chains.size());
  const int warmup = config.adapt + config.burn_in;
  run_parallel(config.chains, config.threads, [&](int k) {
    const auto ck = static_cast<std::size_t>(k);
    const auto& stage1_draws = first.chains[ck];
    State init = inits[ck];
    init.treatment = stage1_draws.front().treatment;
    Rng rng(config.seed, ck, kCutStream);
    init.outcome = ChainSampler::initial_outcome(data, spec, init.treatment, rng);
    ChainSampler sampler(data, spec, config, ck, init, false, true, kCutStream);
    const std::size_t m = stage1_draws.size();
    for (int it = 0; it < warmup; ++it) {
      sampler.plug_treatment(stage1_draws[static_cast<std::size_t>(it) % m].treatment);
      for (int r = 0; r < config.cut_inner_sweeps; ++r) sampler.outcome_sweep(config.adapt_enabled);
    }
    auto& draws = out.chains[ck];
    draws.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      sampler.plug_treatment(stage1_draws[i].treatment);
      for (int r = 0; r < config.cut_inner_sweeps; ++r) sampler.outcome_sweep(false);
      draws.push_back(make_draw(sampler.state(), spec.sharp));
    }
    out.acceptance[ck] = first.acceptance[ck];
    for (const auto& s : sampler.stats()) out.acceptance[ck].push_back(s);
  });
  return out;
}

FitResult run(const Dataset& data, const ModelSpec& spec, const SamplerConfig& config) {
  config.validate();
  if (spec.sharp && config.mode == FitMode::treatment_only)
    throw Error("a sharp design has no treatment model to fit on its own");
  FitResult result;
  if (config.mode == FitMode::cut && !spec.sharp)
    result.draws = cut_run(data, spec, config);
  else
    result.draws = sample_chains(data, spec, config, config.mode);
  result.diagnostics = diagnose(result.draws);
  return result;
}

}  // namespace lotta
