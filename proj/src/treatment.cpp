#include "lotta/treatment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>
#include <fmt/format.h>

#include "lotta/error.hpp"

namespace lotta {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kProbClip = 1e-12;
constexpr double kDerivedTol = 1e-9;

double log_uniform_density(const Interval& iv, double x) {
  if (!(iv.length() > 0.0) || !iv.contains(x)) return kNegInf;
  return -std::log(iv.length());
}

std::vector<double> grid_points(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo <= hi)) throw Error("invalid cutoff grid");
  std::vector<double> pts;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) pts.push_back(lo + static_cast<double>(k) * step);
  return pts;
}

std::vector<double> split(const std::string& s, char sep) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string f;
  while (std::getline(ss, f, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(f, &used));
      if (used != f.size()) throw Error("");
    } catch (const std::exception&) {
      throw Error("cannot parse number '" + f + "' in cutoff prior");
    }
  }
  return out;
}

}  // namespace

DerivedIntercepts derived_intercepts(const TreatmentParams& p) {
  DerivedIntercepts d;
  const double c = p.cutoff;
  d.inner_left = (c - p.window_left) * (p.outer_left.slope - p.inner_left.slope) +
                 p.outer_left.intercept;
  d.inner_right = (p.inner_left.slope - p.inner_right.slope) * c + d.inner_left + p.jump;
  d.outer_right = (c + p.window_right) * (p.inner_right.slope - p.outer_right.slope) +
                  d.inner_right;
  return d;
}

void derive_intercepts(TreatmentParams& p) {
  const auto d = derived_intercepts(p);
  p.inner_left.intercept = d.inner_left;
  p.inner_right.intercept = d.inner_right;
  p.outer_right.intercept = d.outer_right;
}

Interval coefficient_bounds(const TreatmentParams& partial, FreeCoefficient which,
                            ScoreSupport support) {
  const double c = partial.cutoff;
  const double j = partial.jump;
  const double kl = partial.window_left;
  const double kr = partial.window_right;
  const double edge_l = c - kl;
  const double edge_r = c + kr;
  if (!(support.lo < edge_l && edge_l < c && c < edge_r && edge_r < support.hi))
    return {1.0, 0.0};
  const auto d = derived_intercepts(partial);
  switch (which) {
    case FreeCoefficient::outer_left_slope:
      return {0.0, (1.0 - j) / (edge_l - support.lo)};
    case FreeCoefficient::outer_left_intercept: {
      const double a = partial.outer_left.slope;
      return {-a * support.lo, 1.0 - j - a * edge_l};
    }
    case FreeCoefficient::inner_left_slope: {
      // The left limit at c, p(c-kl) + slope * kl, must stay below 1 - j.
      const double at_edge = partial.outer_left.at(edge_l);
      return {0.0, (1.0 - j - at_edge) / kl};
    }
    case FreeCoefficient::inner_right_slope: {
      const double left_limit = partial.inner_left.slope * c + d.inner_left;
      return {0.0, (1.0 - left_limit - j) / kr};
    }
    case FreeCoefficient::outer_right_slope: {
      const double at_edge = partial.inner_right.slope * edge_r + d.inner_right;
      return {0.0, (1.0 - at_edge) / (support.hi - edge_r)};
    }
  }
  return {1.0, 0.0};
}

double treatment_prob(const TreatmentParams& p, double x, ScoreSupport support) {
  if (x < support.lo || x > support.hi)
    throw Error(fmt::format("score {} outside support [{}, {}]", x, support.lo, support.hi));
  return p.prob(x);
}

// ---------------------------------------------------------------------------
// CutoffPrior

CutoffPrior CutoffPrior::uniform(double lo, double hi) {
  if (!(lo < hi)) throw Error("uniform cutoff prior needs lo < hi");
  CutoffPrior p;
  p.kind_ = Kind::uniform;
  p.lo_ = lo;
  p.hi_ = hi;
  return p;
}

CutoffPrior CutoffPrior::scaled_beta(double lo, double hi, double alpha, double beta) {
  if (!(lo < hi) || !(alpha > 0.0) || !(beta > 0.0))
    throw Error("scaled beta cutoff prior needs lo < hi and positive shapes");
  CutoffPrior p;
  p.kind_ = Kind::scaled_beta;
  p.lo_ = lo;
  p.hi_ = hi;
  p.alpha_ = alpha;
  p.beta_ = beta;
  return p;
}

CutoffPrior CutoffPrior::discrete(std::vector<double> points, std::vector<double> weights) {
  if (points.empty() || points.size() != weights.size())
    throw Error("discrete cutoff prior needs matching non-empty points and weights");
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
  CutoffPrior p;
  p.kind_ = Kind::discrete;
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("cutoff prior weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw Error("cutoff prior weights sum to zero");
  for (std::size_t k : order) {
    if (weights[k] == 0.0) continue;
    if (!p.points_.empty() && points[k] == p.points_.back())
      throw Error("duplicate cutoff prior support point");
    p.points_.push_back(points[k]);
    p.weights_.push_back(weights[k] / total);
  }
  double acc = 0.0;
  for (double w : p.weights_) {
    p.log_weights_.push_back(std::log(w));
    acc += w;
    p.cumulative_.push_back(acc);
  }
  p.cumulative_.back() = 1.0;
  p.lo_ = p.points_.front();
  p.hi_ = p.points_.back();
  return p;
}

CutoffPrior CutoffPrior::point_mass(double value) { return discrete({value}, {1.0}); }

CutoffPrior CutoffPrior::discrete_uniform(double lo, double hi, double step) {
  auto pts = grid_points(lo, hi, step);
  std::vector<double> w(pts.size(), 1.0);
  return discrete(std::move(pts), std::move(w));
}

CutoffPrior CutoffPrior::beta_binomial(double lo, double hi, double step, double alpha,
                                       double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw Error("beta-binomial shapes must be positive");
  auto pts = grid_points(lo, hi, step);
  const double trials = static_cast<double>(pts.size() - 1);
  std::vector<double> w;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double kk = static_cast<double>(k);
    const double log_choose =
        std::lgamma(trials + 1) - std::lgamma(kk + 1) - std::lgamma(trials - kk + 1);
    const double lb = std::log(boost::math::beta(kk + alpha, trials - kk + beta)) -
                      std::log(boost::math::beta(alpha, beta));
    w.push_back(std::exp(log_choose + lb));
  }
  return discrete(std::move(pts), std::move(w));
}

CutoffPrior CutoffPrior::point_mass_mixture(double point, double weight, double lo,
                                            double hi, double step) {
  if (!(weight > 0.0 && weight <= 1.0)) throw Error("mixture weight must lie in (0, 1]");
  auto pts = grid_points(lo, hi, step);
  const double tol = 1e-9 * std::max(1.0, std::abs(step));
  const auto hit = std::find_if(pts.begin(), pts.end(),
                                [&](double v) { return std::abs(v - point) <= tol; });
  if (hit == pts.end()) throw Error("mixture point is not on the cutoff grid");
  const double others = static_cast<double>(pts.size() - 1);
  std::vector<double> w(pts.size(), others > 0 ? (1.0 - weight) / others : 0.0);
  w[static_cast<std::size_t>(hit - pts.begin())] = others > 0 ? weight : 1.0;
  return discrete(std::move(pts), std::move(w));
}

std::optional<std::size_t> CutoffPrior::index_of(double c) const {
  if (!is_discrete()) return std::nullopt;
  const double tol = 1e-9 * std::max(1.0, hi_ - lo_);
  const auto it = std::lower_bound(points_.begin(), points_.end(), c - tol);
  if (it != points_.end() && std::abs(*it - c) <= tol)
    return static_cast<std::size_t>(it - points_.begin());
  return std::nullopt;
}

double CutoffPrior::log_density(double c) const {
  switch (kind_) {
    case Kind::uniform:
      return (c >= lo_ && c <= hi_) ? -std::log(hi_ - lo_) : kNegInf;
    case Kind::scaled_beta: {
      if (!(c > lo_ && c < hi_)) return kNegInf;
      const double u = (c - lo_) / (hi_ - lo_);
      return (alpha_ - 1) * std::log(u) + (beta_ - 1) * std::log1p(-u) -
             std::log(boost::math::beta(alpha_, beta_)) - std::log(hi_ - lo_);
    }
    case Kind::discrete: {
      const auto k = index_of(c);
      return k ? log_weights_[*k] : kNegInf;
    }
  }
  return kNegInf;
}

double CutoffPrior::sample(Rng& rng) const {
  switch (kind_) {
    case Kind::uniform:
      return rng.uniform(lo_, hi_);
    case Kind::scaled_beta:
      return lo_ + (hi_ - lo_) * rng.beta(alpha_, beta_);
    case Kind::discrete: {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                           points_.size() - 1);
      return points_[k];
    }
  }
  return lo_;
}

double CutoffPrior::mean() const {
  switch (kind_) {
    case Kind::uniform:
      return 0.5 * (lo_ + hi_);
    case Kind::scaled_beta:
      return lo_ + (hi_ - lo_) * alpha_ / (alpha_ + beta_);
    case Kind::discrete: {
      double m = 0.0;
      for (std::size_t k = 0; k < points_.size(); ++k) m += points_[k] * weights_[k];
      return m;
    }
  }
  return 0.0;
}

double CutoffPrior::variance() const {
  switch (kind_) {
    case Kind::uniform:
      return (hi_ - lo_) * (hi_ - lo_) / 12.0;
    case Kind::scaled_beta: {
      const double s = alpha_ + beta_;
      return (hi_ - lo_) * (hi_ - lo_) * alpha_ * beta_ / (s * s * (s + 1));
    }
    case Kind::discrete: {
      const double m = mean();
      double v = 0.0;
      for (std::size_t k = 0; k < points_.size(); ++k)
        v += (points_[k] - m) * (points_[k] - m) * weights_[k];
      return v;
    }
  }
  return 0.0;
}

CutoffPrior CutoffPrior::mapped(const ScoreScale& scale) const {
  switch (kind_) {
    case Kind::uniform:
      return uniform(scale.to_normalized(lo_), scale.to_normalized(hi_));
    case Kind::scaled_beta:
      return scaled_beta(scale.to_normalized(lo_), scale.to_normalized(hi_), alpha_, beta_);
    case Kind::discrete: {
      std::vector<double> pts;
      for (double v : points_) pts.push_back(scale.to_normalized(v));
      return discrete(std::move(pts), weights_);
    }
  }
  return *this;
}

CutoffPrior CutoffPrior::unmapped(const ScoreScale& scale) const {
  switch (kind_) {
    case Kind::uniform:
      return uniform(scale.to_raw(lo_), scale.to_raw(hi_));
    case Kind::scaled_beta:
      return scaled_beta(scale.to_raw(lo_), scale.to_raw(hi_), alpha_, beta_);
    case Kind::discrete: {
      std::vector<double> pts;
      for (double v : points_) pts.push_back(scale.to_raw(v));
      return discrete(std::move(pts), weights_);
    }
  }
  return *this;
}

std::string CutoffPrior::to_string() const {
  if (!source_.empty()) return source_;
  switch (kind_) {
    case Kind::uniform:
      return fmt::format("uniform:{:.17g}:{:.17g}", lo_, hi_);
    case Kind::scaled_beta:
      return fmt::format("beta:{:.17g}:{:.17g}:{:.17g}:{:.17g}", lo_, hi_, alpha_, beta_);
    case Kind::discrete: {
      std::string s = "pmf:";
      for (std::size_t k = 0; k < points_.size(); ++k)
        s += fmt::format("{}{:.17g}={:.17g}", k ? "," : "", points_[k], weights_[k]);
      return s;
    }
  }
  return {};
}

CutoffPrior CutoffPrior::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error("cutoff prior must look like 'kind:args'");
  const std::string kind = text.substr(0, colon);
  const std::string rest = text.substr(colon + 1);
  CutoffPrior p;
  if (kind == "pmf") {
    std::vector<double> pts, w;
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw Error("pmf entries must look like value=weight");
      pts.push_back(split(item.substr(0, eq), ':').at(0));
      w.push_back(split(item.substr(eq + 1), ':').at(0));
    }
    p = discrete(pts, w);
  } else {
    const auto a = split(rest, ':');
    auto need = [&](std::size_t n) {
      if (a.size() != n)
        throw Error(fmt::format("cutoff prior '{}' expects {} arguments", kind, n));
    };
    if (kind == "uniform") {
      need(2);
      p = uniform(a[0], a[1]);
    } else if (kind == "beta") {
      need(4);
      p = scaled_beta(a[0], a[1], a[2], a[3]);
    } else if (kind == "point") {
      need(1);
      p = point_mass(a[0]);
    } else if (kind == "grid") {
      need(3);
      p = discrete_uniform(a[0], a[1], a[2]);
    } else if (kind == "betabinom") {
      need(5);
      p = beta_binomial(a[0], a[1], a[2], a[3], a[4]);
    } else if (kind == "mixture") {
      need(5);
      p = point_mass_mixture(a[0], a[1], a[2], a[3], a[4]);
    } else {
      throw Error("unknown cutoff prior kind '" + kind + "'");
    }
  }
  p.source_ = text;
  return p;
}

// ---------------------------------------------------------------------------
// Prior and likelihood

double log_prior_treatment(const TreatmentParams& p, const TreatmentPriorSpec& spec) {
  const double c = p.cutoff;
  double lp = spec.cutoff_prior.log_density(c);
  if (lp == kNegInf) return kNegInf;
  if (!(p.jump >= spec.eta && p.jump <= 1.0)) return kNegInf;
  lp += -std::log(1.0 - spec.eta);
  lp += log_uniform_density({spec.bounds.d_x, c - spec.bounds.lower}, p.window_left);
  lp += log_uniform_density({spec.bounds.d_x, spec.bounds.upper - c}, p.window_right);
  if (lp == kNegInf) return kNegInf;

  const auto d = derived_intercepts(p);
  if (std::abs(d.inner_left - p.inner_left.intercept) > kDerivedTol ||
      std::abs(d.inner_right - p.inner_right.intercept) > kDerivedTol ||
      std::abs(d.outer_right - p.outer_right.intercept) > kDerivedTol)
    return kNegInf;

  const std::pair<FreeCoefficient, double> order[] = {
      {FreeCoefficient::outer_left_slope, p.outer_left.slope},
      {FreeCoefficient::outer_left_intercept, p.outer_left.intercept},
      {FreeCoefficient::inner_left_slope, p.inner_left.slope},
      {FreeCoefficient::inner_right_slope, p.inner_right.slope},
      {FreeCoefficient::outer_right_slope, p.outer_right.slope},
  };
  for (const auto& [which, value] : order) {
    lp += log_uniform_density(coefficient_bounds(p, which, spec.support), value);
    if (lp == kNegInf) return kNegInf;
  }
  return lp;
}

double log_lik_treatment(const TreatmentParams& p, std::span<const double> scores,
                         std::span<const int> treatments) {
  double ll = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double q = std::clamp(p.prob(scores[i]), kProbClip, 1.0 - kProbClip);
    ll += treatments[i] ? std::log(q) : std::log1p(-q);
  }
  return ll;
}

double log_lik_treatment(const TreatmentParams& p, const Dataset& data) {
  return log_lik_treatment(p, data.scores, data.treatments);
}

TreatmentParams sample_treatment_prior_given_cutoff(double cutoff,
                                                    const TreatmentPriorSpec& spec,
                                                    Rng& rng) {
  const double kl_hi = cutoff - spec.bounds.lower;
  const double kr_hi = spec.bounds.upper - cutoff;
  if (!(kl_hi > spec.bounds.d_x) || !(kr_hi > spec.bounds.d_x))
    throw Error(fmt::format("cutoff {} leaves no room for the treatment windows", cutoff));
  TreatmentParams p;
  p.cutoff = cutoff;
  p.jump = rng.uniform(spec.eta, 1.0);
  p.window_left = rng.uniform(spec.bounds.d_x, kl_hi);
  p.window_right = rng.uniform(spec.bounds.d_x, kr_hi);
  auto draw = [&](FreeCoefficient which) {
    const auto iv = coefficient_bounds(p, which, spec.support);
    if (iv.empty()) throw Error("infeasible treatment prior draw");
    return rng.uniform(iv.lo, iv.hi);
  };
  p.outer_left.slope = draw(FreeCoefficient::outer_left_slope);
  p.outer_left.intercept = draw(FreeCoefficient::outer_left_intercept);
  p.inner_left.slope = draw(FreeCoefficient::inner_left_slope);
  p.inner_right.slope = draw(FreeCoefficient::inner_right_slope);
  p.outer_right.slope = draw(FreeCoefficient::outer_right_slope);
  derive_intercepts(p);
  return p;
}

TreatmentParams sample_treatment_prior(const TreatmentPriorSpec& spec, Rng& rng) {
  return sample_treatment_prior_given_cutoff(spec.cutoff_prior.sample(rng), spec, rng);
}

}  // namespace lotta
