#include "lotta/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "lotta/error.hpp"
#include "lotta/outcome.hpp"
#include "lotta/stats.hpp"

namespace lotta {

namespace {

void require_samples(std::span<const double> samples) {
  if (samples.size() < kMinSamples)
    throw Error(fmt::format("need at least {} samples, got {}", kMinSamples, samples.size()));
}

std::vector<double> sorted_copy(std::span<const double> xs) {
  std::vector<double> out(xs.begin(), xs.end());
  std::sort(out.begin(), out.end());
  return out;
}

double silverman_bandwidth(const std::vector<double>& sorted) {
  const double n = static_cast<double>(sorted.size());
  const double sd = stats::sd(sorted);
  const double iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

nlohmann::json summary_json(const EstimateSummary& s) {
  return {{"map", s.map},
          {"hdi", {s.hdi.lo, s.hdi.hi}},
          {"mean", s.mean},
          {"median", s.median}};
}

}  // namespace

KernelDensity kernel_density(std::span<const double> samples, int points) {
  if (samples.empty()) throw Error("kernel density needs samples");
  if (points < 2) throw Error("kernel density needs at least two grid points");
  const auto sorted = sorted_copy(samples);
  KernelDensity kde;
  const double lo = sorted.front();
  const double hi = sorted.back();
  kde.bandwidth = silverman_bandwidth(sorted);
  if (!(hi > lo) || !(kde.bandwidth > 0.0)) {
    kde.grid = {lo};
    kde.density = {1.0};
    return kde;
  }
  // Linear binning onto the grid, then a discrete convolution with the kernel.
  const auto m = static_cast<std::size_t>(points);
  const double step = (hi - lo) / static_cast<double>(m - 1);
  kde.grid = linear_grid(lo, hi, points);
  std::vector<double> mass(m, 0.0);
  for (double x : sorted) {
    const double pos = (x - lo) / step;
    const auto k = std::min(static_cast<std::size_t>(pos), m - 2);
    const double f = pos - static_cast<double>(k);
    mass[k] += 1.0 - f;
    mass[k + 1] += f;
  }
  const double n = static_cast<double>(sorted.size());
  const double norm = 1.0 / (n * kde.bandwidth * std::sqrt(2.0 * std::numbers::pi));
  const double h_steps = kde.bandwidth / step;
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(8.0 * h_steps));
  std::vector<double> kernel(static_cast<std::size_t>(std::min<std::ptrdiff_t>(reach, points)) + 1);
  for (std::size_t d = 0; d < kernel.size(); ++d) {
    const double z = static_cast<double>(d) / h_steps;
    kernel[d] = std::exp(-0.5 * z * z);
  }
  kde.density.assign(m, 0.0);
  const auto last = static_cast<std::ptrdiff_t>(kernel.size()) - 1;
  for (std::size_t j = 0; j < m; ++j) {
    if (mass[j] == 0.0) continue;
    const auto jj = static_cast<std::ptrdiff_t>(j);
    const auto from = std::max<std::ptrdiff_t>(0, jj - last);
    const auto to = std::min<std::ptrdiff_t>(points - 1, jj + last);
    for (std::ptrdiff_t i = from; i <= to; ++i)
      kde.density[static_cast<std::size_t>(i)] += mass[j] * kernel[static_cast<std::size_t>(std::abs(i - jj))];
  }
  for (double& d : kde.density) d *= norm;
  return kde;
}

double map_estimate(std::span<const double> samples, SampleKind kind) {
  require_samples(samples);
  if (kind == SampleKind::discrete) {
    std::map<double, std::size_t> counts;
    for (double x : samples) ++counts[x];
    double best = counts.begin()->first;
    std::size_t top = 0;
    for (const auto& [v, n] : counts) {
      if (n > top) {
        top = n;
        best = v;
      }
    }
    return best;
  }
  const auto kde = kernel_density(samples);
  const auto it = std::max_element(kde.density.begin(), kde.density.end());
  return kde.grid[static_cast<std::size_t>(it - kde.density.begin())];
}

Interval hdi(std::span<const double> samples, double level) {
  require_samples(samples);
  if (!(level > 0.0 && level < 1.0)) throw Error("HDI level must lie in (0, 1)");
  const auto s = sorted_copy(samples);
  const std::size_t n = s.size();
  // The small slack keeps level * n from rounding up past an exact integer.
  auto m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, n);
  std::size_t best = 0;
  double width = s[m - 1] - s[0];
  for (std::size_t i = 1; i + m <= n; ++i) {
    const double w = s[i + m - 1] - s[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {s[best], s[best + m - 1]};
}

bool multimodal(std::span<const double> samples) {
  const auto kde = kernel_density(samples);
  const auto& d = kde.density;
  if (d.size() < 3) return false;
  const double top = *std::max_element(d.begin(), d.end());
  int modes = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool left_ok = i == 0 || d[i] >= d[i - 1];
    const bool right_ok = i + 1 == d.size() || d[i] > d[i + 1];
    // Plateaus count once, at their right end.
    if (left_ok && right_ok && d[i] > 0.1 * top) ++modes;
  }
  return modes > 1;
}

EstimateSummary summarize(std::span<const double> samples, SampleKind kind, double level) {
  EstimateSummary s;
  s.map = map_estimate(samples, kind);
  s.hdi = hdi(samples, level);
  s.mean = stats::mean(samples);
  s.median = stats::median(std::vector<double>(samples.begin(), samples.end()));
  return s;
}

nlohmann::json EstimateReport::to_json() const {
  nlohmann::json j = {{"level", level}, {"mode", mode}, {"sharp", sharp}, {"draws", draws}};
  j["cutoff"] = summary_json(cutoff);
  j["jump"] = jump ? summary_json(*jump) : nlohmann::json(nullptr);
  j["tau"] = tau ? summary_json(*tau) : nlohmann::json(nullptr);
  return j;
}

std::vector<double> raw_cutoffs(const PosteriorDraws& draws, const ScoreScale& score_scale,
                                std::span<const double> raw_points) {
  auto c = draws.pooled("c");
  for (double& v : c) {
    v = score_scale.to_raw(v);
    if (raw_points.empty()) continue;
    const auto it = std::min_element(raw_points.begin(), raw_points.end(), [&](double a, double b) {
      return std::abs(a - v) < std::abs(b - v);
    });
    v = *it;
  }
  return c;
}

EstimateReport make_report(const PosteriorDraws& draws, const ScoreScale& score_scale,
                           const OutcomeScale& outcome_scale, SampleKind cutoff_kind,
                           double level, std::span<const double> raw_points) {
  EstimateReport r;
  r.level = level;
  r.mode = to_string(draws.mode);
  r.sharp = draws.sharp;
  r.draws = draws.total();
  r.cutoff = summarize(raw_cutoffs(draws, score_scale, raw_points), cutoff_kind, level);
  if (!draws.sharp) r.jump = summarize(draws.pooled("j"), SampleKind::continuous, level);
  if (draws.has_outcome) {
    auto tau = draws.pooled("tau");
    for (double& v : tau) v = outcome_scale.to_raw(v);
    r.tau = summarize(tau, SampleKind::continuous, level);
  }
  return r;
}

std::vector<double> linear_grid(double lo, double hi, int points) {
  if (points < 1) throw Error("grid needs at least one point");
  if (points == 1) return {lo};
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
  g.back() = hi;
  return g;
}

FunctionBand function_band(std::span<const Draw> draws, std::span<const double> grid,
                           BandTarget target, bool sharp, ScoreSupport support, OutcomeKind kind,
                           double level) {
  if (draws.empty()) throw Error("function band needs draws");
  if (!(level > 0.0 && level < 1.0)) throw Error("band level must lie in (0, 1)");
  FunctionBand band;
  band.level = level;
  band.grid.assign(grid.begin(), grid.end());
  std::vector<double> values(draws.size());
  for (double x : grid) {
    for (std::size_t k = 0; k < draws.size(); ++k) {
      const auto& d = draws[k];
      const double c = d.treatment.cutoff;
      if (target == BandTarget::treatment) {
        values[k] = sharp ? (x >= c ? 1.0 : 0.0) : treatment_prob(d.treatment, x, support);
      } else if (kind == OutcomeKind::binary) {
        values[k] = outcome_mean_binary(d.outcome, x, c, Smoothing::exact());
      } else {
        values[k] = outcome_mean(d.outcome, x, c, Smoothing::exact());
      }
    }
    std::sort(values.begin(), values.end());
    band.median.push_back(stats::quantile_sorted(values, 0.5));
    band.lower.push_back(stats::quantile_sorted(values, 0.5 * (1.0 - level)));
    band.upper.push_back(stats::quantile_sorted(values, 0.5 * (1.0 + level)));
  }
  return band;
}

JointCTauSummary joint_c_tau(std::span<const double> c, std::span<const double> tau,
                             SampleKind kind, int bins) {
  if (c.empty() || c.size() != tau.size()) throw Error("joint summary needs matching c and tau");
  if (bins < 1) throw Error("joint summary needs at least one bin");
  const std::size_t n = c.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return c[a] < c[b]; });

  // Group boundaries in sorted order.
  std::vector<std::size_t> cuts = {0};
  if (kind == SampleKind::discrete) {
    for (std::size_t i = 1; i < n; ++i)
      if (c[order[i]] != c[order[i - 1]]) cuts.push_back(i);
  } else {
    const auto b = std::min<std::size_t>(static_cast<std::size_t>(bins), n);
    for (std::size_t k = 1; k < b; ++k) cuts.push_back(k * n / b);
  }
  cuts.push_back(n);

  JointCTauSummary out;
  out.total = n;
  for (std::size_t g = 0; g + 1 < cuts.size(); ++g) {
    if (cuts[g + 1] == cuts[g]) continue;
    std::vector<double> cs, ts;
    for (std::size_t i = cuts[g]; i < cuts[g + 1]; ++i) {
      cs.push_back(c[order[i]]);
      ts.push_back(tau[order[i]]);
    }
    std::sort(ts.begin(), ts.end());
    CTauGroup grp;
    grp.c = kind == SampleKind::discrete ? cs.front() : stats::quantile_sorted(cs, 0.5);
    grp.c_lo = cs.front();
    grp.c_hi = cs.back();
    grp.count = cs.size();
    grp.share = static_cast<double>(grp.count) / static_cast<double>(n);
    grp.min = ts.front();
    grp.max = ts.back();
    grp.q1 = stats::quantile_sorted(ts, 0.25);
    grp.median = stats::quantile_sorted(ts, 0.5);
    grp.q3 = stats::quantile_sorted(ts, 0.75);
    const double iqr = grp.q3 - grp.q1;
    grp.whisker_lo = *std::lower_bound(ts.begin(), ts.end(), grp.q1 - 1.5 * iqr);
    grp.whisker_hi = *(std::upper_bound(ts.begin(), ts.end(), grp.q3 + 1.5 * iqr) - 1);
    out.groups.push_back(grp);
  }
  return out;
}

void write_band_csv(std::ostream& out, const FunctionBand& band) {
  out << "grid,median,lo,hi\n";
  for (std::size_t i = 0; i < band.grid.size(); ++i)
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", band.grid[i], band.median[i],
                       band.lower[i], band.upper[i]);
}

void write_joint_csv(std::ostream& out, const JointCTauSummary& summary) {
  out << "c,c_lo,c_hi,count,share,min,whisker_lo,q1,median,q3,whisker_hi,max\n";
  for (const auto& g : summary.groups)
    out << fmt::format("{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},"
                       "{:.17g},{:.17g},{:.17g}\n",
                       g.c, g.c_lo, g.c_hi, g.count, g.share, g.min, g.whisker_lo, g.q1, g.median,
                       g.q3, g.whisker_hi, g.max);
}

void write_histogram_csv(std::ostream& out, std::span<const double> samples, SampleKind kind) {
  out << "value,density\n";
  if (samples.empty()) return;
  if (kind == SampleKind::discrete) {
    std::map<double, std::size_t> counts;
    for (double x : samples) ++counts[x];
    for (const auto& [v, k] : counts)
      out << fmt::format("{:.17g},{:.17g}\n", v,
                         static_cast<double>(k) / static_cast<double>(samples.size()));
    return;
  }
  const auto kde = kernel_density(samples);
  for (std::size_t i = 0; i < kde.grid.size(); ++i)
    out << fmt::format("{:.17g},{:.17g}\n", kde.grid[i], kde.density[i]);
}

}  // namespace lotta
