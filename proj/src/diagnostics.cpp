#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "lotta/error.hpp"
#include "lotta/mcmc.hpp"
#include "lotta/stats.hpp"

namespace lotta {

namespace {

const std::vector<std::string> kTreatmentNames = {
    "c",
    "j",
    "window_left",
    "window_right",
    "outer_left_slope",
    "outer_left_intercept",
    "inner_left_slope",
    "inner_left_intercept",
    "inner_right_slope",
    "inner_right_intercept",
    "outer_right_slope",
    "outer_right_intercept",
};

const std::vector<std::string> kOutcomeNames = {
    "edge_left",        "edge_right",        "left_level",       "left_slope",
    "left_quadratic",   "left_cubic",        "right_level",      "right_slope",
    "right_quadratic",  "right_cubic",       "precision_inner_left", "precision_outer_left",
    "precision_inner_right", "precision_outer_right", "tau",
};

// Autocovariance at lags 0..n-1 (biased normalization) via zero-padded FFT.
std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const double m = stats::mean(x);
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> padded(len, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - m;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& f : freq) f = std::complex<double>(std::norm(f), 0.0);
  std::vector<double> back;
  fft.inv(back, freq);
  std::vector<double> acov(n);
  for (std::size_t t = 0; t < n; ++t) acov[t] = back[t] / static_cast<double>(n);
  return acov;
}

}  // namespace

std::size_t PosteriorDraws::total() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.size();
  return n;
}

std::vector<Draw> PosteriorDraws::flattened() const {
  std::vector<Draw> out;
  out.reserve(total());
  for (const auto& c : chains) out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<std::string> scalar_names(bool has_outcome) {
  auto names = kTreatmentNames;
  if (has_outcome) names.insert(names.end(), kOutcomeNames.begin(), kOutcomeNames.end());
  return names;
}

std::vector<double> scalar_values(const Draw& d, bool has_outcome) {
  const auto& t = d.treatment;
  std::vector<double> v = {t.cutoff,
                           t.jump,
                           t.window_left,
                           t.window_right,
                           t.outer_left.slope,
                           t.outer_left.intercept,
                           t.inner_left.slope,
                           t.inner_left.intercept,
                           t.inner_right.slope,
                           t.inner_right.intercept,
                           t.outer_right.slope,
                           t.outer_right.intercept};
  if (has_outcome) {
    const auto& o = d.outcome;
    const double extra[] = {o.edge_left,        o.edge_right,        o.left.level,
                            o.left.slope,       o.left.quadratic,    o.left.cubic,
                            o.right.level,      o.right.slope,       o.right.quadratic,
                            o.right.cubic,      o.noise.inner_left,  o.noise.outer_left,
                            o.noise.inner_right, o.noise.outer_right, d.tau};
    v.insert(v.end(), std::begin(extra), std::end(extra));
  }
  return v;
}

std::vector<std::vector<double>> PosteriorDraws::column(const std::string& name) const {
  const auto names = scalar_names(has_outcome);
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error("unknown draw scalar '" + name + "'");
  const auto k = static_cast<std::size_t>(it - names.begin());
  std::vector<std::vector<double>> out;
  for (const auto& chain : chains) {
    std::vector<double> col;
    col.reserve(chain.size());
    for (const auto& d : chain) col.push_back(scalar_values(d, has_outcome)[k]);
    out.push_back(std::move(col));
  }
  return out;
}

std::vector<double> PosteriorDraws::pooled(const std::string& name) const {
  std::vector<double> out;
  for (auto& c : column(name)) out.insert(out.end(), c.begin(), c.end());
  return out;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) throw Error("split R-hat needs at least four draws per chain");
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  const double n = static_cast<double>(halves.front().size());
  const double m = static_cast<double>(halves.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& h : halves) {
    means.push_back(stats::mean(h));
    w += stats::variance(h);
  }
  w /= m;
  const double b = n * stats::variance(means);
  if (!(w > 0.0)) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw Error("ESS needs chains of equal length");
  const double m = static_cast<double>(chains.size());
  const double total = m * static_cast<double>(n);
  if (n < 4) return total;

  std::vector<std::vector<double>> acov;
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    acov.push_back(autocovariance(c));
    means.push_back(stats::mean(c));
    w += acov.back()[0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  w /= m;
  const double nn = static_cast<double>(n);
  const double b = chains.size() > 1 ? nn * stats::variance(means) : 0.0;
  const double var_plus = (nn - 1.0) / nn * w + b / nn;
  if (!(var_plus > 0.0)) return total;

  auto rho = [&](std::size_t t) {
    double s = 0.0;
    for (const auto& a : acov) s += a[t];
    return 1.0 - (w - s / m) / var_plus;
  };
  // Geyer's initial monotone sequence over paired lags.
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    tau += 2.0 * pair;
    prev = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

Diagnostics diagnose(const PosteriorDraws& draws) {
  Diagnostics d;
  d.names = scalar_names(draws.has_outcome);
  bool enough = true;
  for (const auto& c : draws.chains) enough = enough && c.size() >= 4;
  for (const auto& name : d.names) {
    const auto cols = draws.column(name);
    const double r = enough ? split_rhat(cols) : std::numeric_limits<double>::quiet_NaN();
    d.rhat.push_back(r);
    d.ess.push_back(enough ? effective_sample_size(cols) : static_cast<double>(draws.total()));
    if (enough && !(r <= 1.05)) d.converged = false;
  }
  for (const auto& chain : draws.acceptance) {
    for (const auto& s : chain) {
      auto it = std::find_if(d.acceptance.begin(), d.acceptance.end(),
                             [&](const BlockStats& b) { return b.name == s.name; });
      if (it == d.acceptance.end()) {
        d.acceptance.push_back(s);
      } else {
        it->attempts += s.attempts;
        it->accepted += s.accepted;
      }
    }
  }
  return d;
}

void write_draws_csv(std::ostream& out, const PosteriorDraws& draws, const ScoreScale& scores,
                     const OutcomeScale& outcomes) {
  const auto names = scalar_names(draws.has_outcome);
  out << "chain,iteration";
  for (const auto& n : names) out << ',' << n;
  out << ",c_raw,tau_raw\n";
  for (std::size_t k = 0; k < draws.chains.size(); ++k) {
    for (std::size_t i = 0; i < draws.chains[k].size(); ++i) {
      const auto& d = draws.chains[k][i];
      out << k << ',' << i;
      for (double v : scalar_values(d, draws.has_outcome)) out << fmt::format(",{:.17g}", v);
      const double tau_raw = draws.has_outcome ? outcomes.to_raw(d.tau)
                                               : std::numeric_limits<double>::quiet_NaN();
      out << fmt::format(",{:.17g},{:.17g}\n", scores.to_raw(d.treatment.cutoff), tau_raw);
    }
  }
}

PosteriorDraws read_draws_csv(std::istream& in, FitMode mode, bool sharp) {
  std::string line;
  if (!std::getline(in, line)) throw Error("draws CSV is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  PosteriorDraws out;
  out.mode = mode;
  out.sharp = sharp;
  out.has_outcome = std::find(header.begin(), header.end(), "tau") != header.end();
  const auto names = scalar_names(out.has_outcome);
  // chain, iteration, the scalars, c_raw, tau_raw
  if (header.size() != names.size() + 4 || header[0] != "chain" ||
      !std::equal(names.begin(), names.end(), header.begin() + 2))
    throw Error("draws CSV header does not match the expected columns");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(cell == "nan" ? std::nan("") : std::stod(cell));
    if (v.size() != header.size()) throw Error("malformed draws row: " + line);
    const auto chain = static_cast<std::size_t>(v[0]);
    if (chain >= out.chains.size()) out.chains.resize(chain + 1);
    const double* x = v.data() + 2;
    Draw d;
    auto& t = d.treatment;
    t.cutoff = x[0];
    t.jump = x[1];
    t.window_left = x[2];
    t.window_right = x[3];
    t.outer_left = {x[4], x[5]};
    t.inner_left = {x[6], x[7]};
    t.inner_right = {x[8], x[9]};
    t.outer_right = {x[10], x[11]};
    if (out.has_outcome) {
      auto& o = d.outcome;
      o.edge_left = x[12];
      o.edge_right = x[13];
      o.left = {x[14], x[15], x[16], x[17]};
      o.right = {x[18], x[19], x[20], x[21]};
      o.noise = {x[22], x[23], x[24], x[25]};
      d.tau = x[26];
    } else {
      d.tau = std::numeric_limits<double>::quiet_NaN();
    }
    out.chains[chain].push_back(d);
  }
  if (out.chains.empty()) throw Error("draws CSV has no rows");
  return out;
}

}  // namespace lotta
