#include "lotta/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "lotta/error.hpp"
#include "lotta/stats.hpp"

namespace lotta {

namespace {

std::vector<double> sorted_distinct(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, std::size_t line) {
  const std::string f = trim_ws(field);
  if (f.empty() || f == "NA" || f == "na" || f == "NaN" || f == "nan")
    throw Error(fmt::format("line {}: missing value", line));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(f, &used);
  } catch (const std::exception&) {
    throw Error(fmt::format("line {}: cannot parse '{}'", line, f));
  }
  if (used != f.size() || !std::isfinite(v))
    throw Error(fmt::format("line {}: cannot parse '{}'", line, f));
  return v;
}

}  // namespace

void Dataset::validate(bool allow_empty) const {
  if (scores.size() != treatments.size() || scores.size() != outcomes.size())
    throw Error("dataset columns have different lengths");
  if (scores.empty() && !allow_empty) throw Error("dataset is empty");
  if (!(support_lo < support_hi)) throw Error("dataset support is empty");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= support_lo && scores[i] <= support_hi))
      throw Error(fmt::format("score {} outside support [{}, {}]", scores[i],
                              support_lo, support_hi));
    if (treatments[i] != 0 && treatments[i] != 1)
      throw Error("treatment values must be 0 or 1");
    if (outcome_kind == OutcomeKind::binary && outcomes[i] != 0.0 &&
        outcomes[i] != 1.0)
      throw Error("binary outcomes must be 0 or 1");
  }
}

Dataset Dataset::empty_with_support(double lo, double hi) {
  Dataset d;
  d.support_lo = lo;
  d.support_hi = hi;
  return d;
}

std::optional<double> detect_grid_step(const std::vector<double>& scores,
                                       double tolerance) {
  const auto v = sorted_distinct(scores);
  if (v.size() < 2) return std::nullopt;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double g = v[i] - v[i - 1];
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  if (hi - lo <= tolerance) return 0.5 * (lo + hi);
  return std::nullopt;
}

NormalizedData normalize(const std::vector<double>& raw_scores,
                         const std::vector<double>& raw_outcomes,
                         const std::vector<int>& treatments, OutcomeKind kind,
                         std::optional<OutcomeBounds> raw_bounds) {
  if (raw_scores.size() != raw_outcomes.size() ||
      raw_scores.size() != treatments.size())
    throw Error("score, treatment and outcome columns differ in length");
  if (raw_scores.empty()) throw Error("no rows to normalize");
  const auto [mn, mx] = std::minmax_element(raw_scores.begin(), raw_scores.end());
  if (!(*mx > *mn)) throw Error("degenerate score range (max == min)");

  NormalizedData out;
  out.score_scale = ScoreScale{*mx - *mn, *mn};
  Dataset& d = out.data;
  d.scores.reserve(raw_scores.size());
  for (double x : raw_scores) d.scores.push_back(out.score_scale.to_normalized(x));
  // Guard the endpoints against rounding so the support is exactly [0, 1].
  for (double& x : d.scores) x = std::clamp(x, 0.0, 1.0);
  d.support_lo = 0.0;
  d.support_hi = 1.0;
  d.treatments = treatments;
  d.outcome_kind = kind;

  if (kind == OutcomeKind::binary) {
    d.outcomes = raw_outcomes;
  } else {
    double s = stats::sd(raw_outcomes);
    if (!(s > 0.0)) s = 1.0;
    out.outcome_scale = OutcomeScale{s};
    d.outcomes.reserve(raw_outcomes.size());
    for (double y : raw_outcomes) d.outcomes.push_back(y / s);
    if (kind == OutcomeKind::bounded) {
      if (!raw_bounds || !(raw_bounds->lower < raw_bounds->upper))
        throw Error("bounded outcomes need bounds a < b");
      d.outcome_bounds = {raw_bounds->lower / s, raw_bounds->upper / s};
    }
  }

  if (auto step = detect_grid_step(d.scores)) {
    d.score_kind = ScoreKind::discrete_grid;
    d.grid_step = *step;
  }
  d.validate();
  return out;
}

SupportBounds compute_support_bounds(const Dataset& data, int n,
                                     double radius_quantile) {
  if (n < 1) throw Error("support bound count n must be >= 1");
  const auto distinct = sorted_distinct(data.scores);
  if (distinct.size() < static_cast<std::size_t>(2 * n + 2))
    throw Error(fmt::format("need at least {} distinct scores, have {}", 2 * n + 2,
                            distinct.size()));
  std::vector<double> sorted = data.scores;
  std::sort(sorted.begin(), sorted.end());

  SupportBounds b;
  b.n = n;
  b.lower = sorted[static_cast<std::size_t>(n - 1)];
  b.upper = sorted[sorted.size() - static_cast<std::size_t>(n)];

  if (data.score_kind == ScoreKind::discrete_grid) {
    b.d_x = data.grid_step;
  } else {
    std::vector<double> radii;
    radii.reserve(distinct.size() - 2);
    for (std::size_t i = 1; i + 1 < distinct.size(); ++i)
      radii.push_back(std::max(distinct[i] - distinct[i - 1],
                               distinct[i + 1] - distinct[i]));
    std::sort(radii.begin(), radii.end());
    b.d_x = stats::quantile_sorted(radii, radius_quantile);
  }
  if (!(b.lower < b.upper)) throw Error("support bounds collapse (l_n >= u_n)");
  return b;
}

Dataset trim(const Dataset& data, double lo, double hi) {
  if (!(lo < hi)) throw Error("trim bounds need lo < hi");
  if (lo < data.support_lo || hi > data.support_hi)
    throw Error("trim bounds outside the dataset support");
  Dataset out;
  out.score_kind = data.score_kind;
  out.grid_step = data.grid_step;
  out.outcome_kind = data.outcome_kind;
  out.outcome_bounds = data.outcome_bounds;
  out.support_lo = lo;
  out.support_hi = hi;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.scores[i] >= lo && data.scores[i] <= hi) {
      out.scores.push_back(data.scores[i]);
      out.treatments.push_back(data.treatments[i]);
      out.outcomes.push_back(data.outcomes[i]);
    }
  }
  if (out.empty()) throw Error("trimming removed every row");
  return out;
}

BinnedSeries bin_series(const Dataset& data, double split_point, int bins_per_side,
                        BinnedVariable variable) {
  if (bins_per_side < 1) throw Error("bins_per_side must be >= 1");
  if (!(split_point > data.support_lo && split_point < data.support_hi))
    throw Error("split point must lie strictly inside the support");

  const auto nb = static_cast<std::size_t>(bins_per_side);
  const double wl = (split_point - data.support_lo) / static_cast<double>(nb);
  const double wr = (data.support_hi - split_point) / static_cast<double>(nb);
  std::vector<double> sums(2 * nb, 0.0);
  std::vector<int> counts(2 * nb, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data.scores[i];
    std::size_t k = 0;
    if (x < split_point) {
      k = std::min(nb - 1, static_cast<std::size_t>((x - data.support_lo) / wl));
    } else {
      k = nb + std::min(nb - 1, static_cast<std::size_t>((x - split_point) / wr));
    }
    sums[k] += variable == BinnedVariable::treatment ? data.treatments[i]
                                                     : data.outcomes[i];
    ++counts[k];
  }

  BinnedSeries s;
  s.split_point = split_point;
  for (std::size_t k = 0; k < 2 * nb; ++k) {
    const bool left = k < nb;
    const double lo = left ? data.support_lo + static_cast<double>(k) * wl
                           : split_point + static_cast<double>(k - nb) * wr;
    s.bin_centers.push_back(lo + 0.5 * (left ? wl : wr));
    s.bin_counts.push_back(counts[k]);
    s.bin_means.push_back(counts[k] > 0 ? sums[k] / counts[k]
                                        : std::numeric_limits<double>::quiet_NaN());
    s.sides.push_back(left ? -1 : 1);
  }
  return s;
}

BinnedSeries to_raw_units(BinnedSeries series, const ScoreScale& score_scale,
                          const OutcomeScale* outcome_scale) {
  for (double& c : series.bin_centers) c = score_scale.to_raw(c);
  series.split_point = score_scale.to_raw(series.split_point);
  if (outcome_scale)
    for (double& m : series.bin_means) m = outcome_scale->to_raw(m);
  return series;
}

RawTable read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("empty CSV input");
  if (trim_ws(line) != "score,treatment,outcome")
    throw Error("CSV header must be 'score,treatment,outcome'");
  RawTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_ws(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 3)
      throw Error(fmt::format("line {}: expected 3 fields, got {}", lineno,
                              fields.size()));
    const double x = parse_number(fields[0], lineno);
    const double tr = parse_number(fields[1], lineno);
    const double y = parse_number(fields[2], lineno);
    if (tr != 0.0 && tr != 1.0)
      throw Error(fmt::format("line {}: treatment must be 0 or 1", lineno));
    t.scores.push_back(x);
    t.treatments.push_back(static_cast<int>(tr));
    t.outcomes.push_back(y);
  }
  if (t.scores.empty()) throw Error("CSV has no data rows");
  return t;
}

RawTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_csv(in);
}

void write_binned_csv(std::ostream& out, const BinnedSeries& series) {
  out << "bin_center,mean,count,side\n";
  for (std::size_t k = 0; k < series.bin_centers.size(); ++k) {
    out << fmt::format("{:.17g},{},{},{}\n", series.bin_centers[k],
                       std::isnan(series.bin_means[k])
                           ? std::string("nan")
                           : fmt::format("{:.17g}", series.bin_means[k]),
                       series.bin_counts[k], series.sides[k] < 0 ? "left" : "right");
  }
}

}  // namespace lotta
