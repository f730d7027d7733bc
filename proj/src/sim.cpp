#include "lotta/sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "lotta/baselines.hpp"
#include "lotta/error.hpp"
#include "lotta/posterior.hpp"
#include "lotta/random.hpp"
#include "lotta/stats.hpp"

namespace lotta::sim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double g(double x) { return stats::inv_logit(x); }

double poly(std::initializer_list<double> coefs, double x) {
  // Horner on coefficients listed from degree 0 upwards.
  double v = 0.0;
  for (auto it = std::rbegin(coefs); it != std::rend(coefs); ++it) v = v * x + *it;
  return v;
}

double left_limit_outcome(OutcomeFn f) {
  switch (f) {
    case OutcomeFn::A: return 0.05;
    case OutcomeFn::B: return g(0.0) - 0.1;
    case OutcomeFn::C: return outcome_fn(OutcomeFn::C, 0.0);
    case OutcomeFn::lee: return 0.48;
    case OutcomeFn::ludwig: return 3.71;
  }
  return kNaN;
}

double left_limit_treatment(TreatmentFn f) {
  return f == TreatmentFn::none ? 0.0 : 1.0 / 15.0 + 0.05;
}

bool finite(double x) { return std::isfinite(x); }

std::uint64_t replication_seed(std::uint64_t seed, int replication) {
  // splitmix64 of the pair, so neighbouring replications get unrelated seeds.
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(replication) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string csv_safe(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ' ';
  return s;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string to_string(OutcomeFn f) {
  switch (f) {
    case OutcomeFn::A: return "A";
    case OutcomeFn::B: return "B";
    case OutcomeFn::C: return "C";
    case OutcomeFn::lee: return "lee";
    case OutcomeFn::ludwig: return "ludwig";
  }
  return "?";
}

std::string to_string(TreatmentFn f) {
  switch (f) {
    case TreatmentFn::none: return "none";
    case TreatmentFn::p1: return "p1";
    case TreatmentFn::p2: return "p2";
  }
  return "?";
}

OutcomeFn parse_outcome_fn(const std::string& text) {
  for (auto f : {OutcomeFn::A, OutcomeFn::B, OutcomeFn::C, OutcomeFn::lee, OutcomeFn::ludwig})
    if (to_string(f) == text) return f;
  throw Error("unknown outcome function '" + text + "'");
}

TreatmentFn parse_treatment_fn(const std::string& text) {
  for (auto f : {TreatmentFn::none, TreatmentFn::p1, TreatmentFn::p2})
    if (to_string(f) == text) return f;
  throw Error("unknown treatment function '" + text + "'");
}

double outcome_fn(OutcomeFn f, double x) {
  const bool right = x >= 0.0;
  switch (f) {
    case OutcomeFn::A:
      return right ? 0.05 * x - 0.1 * x * x + 0.22 : 1.8 * x * x * x + 2.0 * x * x + 0.05;
    case OutcomeFn::B:
      return right ? 0.6 * (std::log(2.0 * x + 1.0) - 0.15 * x * x) + 0.20 : g(2.0 * x) - 0.1;
    case OutcomeFn::C:
      return poly({-0.952, -0.27, 0.118, 0.121, 0.254, -0.3, -0.19}, x) -
             0.5 * g(10.0 * (x + 1.0)) + std::sin(5.0 * x - 2.0);
    case OutcomeFn::lee:
      return right ? poly({0.52, 0.84, -3.0, 7.99, -9.01, 3.56}, x)
                   : poly({0.48, 1.27, 7.18, 20.21, 21.54, 7.33}, x);
    case OutcomeFn::ludwig:
      return right ? poly({0.26, 18.49, -54.81, 74.3, -45.02, 9.83}, x)
                   : poly({3.71, 2.3, 3.28, 1.45, 0.23, 0.03}, x);
  }
  return kNaN;
}

double treatment_fn(TreatmentFn f, double x) {
  if (f == TreatmentFn::none) return x >= 0.0 ? 1.0 : 0.0;
  if (x < 0.0) return std::pow(x + 1.0, 4) / 15.0 + 0.05;
  const double top = f == TreatmentFn::p1 ? 0.65 : 0.35;
  return g(8.5 * x - 1.5) / 10.5 - g(-1.5) / 10.5 + 1.0 / 15.0 + top;
}

void ScenarioSpec::validate() const {
  if (sharp != (treatment == TreatmentFn::none))
    throw Error("sharp scenarios take treatment 'none' and fuzzy ones need p1 or p2");
  if (n < 1) throw Error("scenario needs n >= 1");
  if (!(noise_sd >= 0.0)) throw Error("noise sd must be non-negative");
  if (replications < 1) throw Error("scenario needs at least one replication");
  if (!(cutoff_prior.lo < cutoff_prior.hi)) throw Error("cutoff prior interval is empty");
  if (!(eta >= 0.0 && eta < 1.0)) throw Error("eta must lie in [0, 1)");
  if (!(level > 0.0 && level < 1.0)) throw Error("level must lie in (0, 1)");
  if (threads < 1) throw Error("threads must be positive");
  sampler.validate();
}

CutoffPrior ScenarioSpec::raw_cutoff_prior() const {
  if (known_cutoff) return CutoffPrior::point_mass(true_cutoff);
  return CutoffPrior::uniform(cutoff_prior.lo, cutoff_prior.hi);
}

std::vector<std::string> scenario_names() {
  return {"1A", "1B", "1C", "2A", "2B", "2C", "3A", "3B", "3C", "lee", "ludwig"};
}

ScenarioSpec scenario(const std::string& name) {
  ScenarioSpec s;
  s.name = name;
  if (name == "lee" || name == "ludwig") {
    s.sharp = true;
    s.known_cutoff = true;
    s.treatment = TreatmentFn::none;
    s.outcome = name == "lee" ? OutcomeFn::lee : OutcomeFn::ludwig;
    s.noise_sd = 0.1295;
    return s;
  }
  if (name.size() != 2 || name[0] < '1' || name[0] > '3' || name[1] < 'A' || name[1] > 'C')
    throw Error("unknown scenario '" + name + "'");
  s.outcome = name[1] == 'A' ? OutcomeFn::A : name[1] == 'B' ? OutcomeFn::B : OutcomeFn::C;
  switch (name[0]) {
    case '1':
      s.sharp = true;
      s.known_cutoff = true;
      s.treatment = TreatmentFn::none;
      break;
    case '2': s.treatment = TreatmentFn::p1; break;
    default: s.treatment = TreatmentFn::p2; break;
  }
  return s;
}

std::vector<double> gen_scores(int n, std::uint64_t seed) {
  if (n < 1) throw Error("need n >= 1 scores");
  Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = 2.0 * rng.beta(2.0, 4.0) - 1.0;
  return x;
}

Dataset gen_dataset(const ScenarioSpec& spec, int replication) {
  spec.validate();
  const auto seed = replication_seed(spec.seed, replication);
  Dataset d;
  d.scores = gen_scores(spec.n, seed);
  Rng treat(seed, 1);
  Rng noise(seed, 2);
  for (double x : d.scores) {
    d.treatments.push_back(spec.sharp ? (x >= spec.true_cutoff ? 1 : 0)
                                      : (treat.bernoulli(treatment_fn(spec.treatment, x)) ? 1 : 0));
    d.outcomes.push_back(outcome_fn(spec.outcome, x) + spec.noise_sd * noise.normal());
  }
  d.support_lo = -1.0;
  d.support_hi = 1.0;
  d.outcome_kind = OutcomeKind::continuous;
  return d;
}

TrueEstimands true_estimands(const ScenarioSpec& spec) {
  TrueEstimands t;
  t.cutoff = spec.true_cutoff;
  t.outcome_jump = outcome_fn(spec.outcome, 0.0) - left_limit_outcome(spec.outcome);
  t.jump = spec.sharp ? 1.0 : treatment_fn(spec.treatment, 0.0) - left_limit_treatment(spec.treatment);
  t.tau = t.outcome_jump / t.jump;
  return t;
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::lotta_joint: return "lotta-joint";
    case Estimator::lotta_cut: return "lotta-cut";
    case Estimator::lotta_treatment_only: return "lotta-treatment-only";
    case Estimator::llr_known_cutoff: return "llr-known-cutoff";
    case Estimator::plugin_two_constant: return "plugin-two-constant";
    case Estimator::plugin_treatment_only: return "plugin-treatment-only";
    case Estimator::cubic_two_sided: return "cubic-two-sided";
  }
  return "?";
}

std::vector<Estimator> all_estimators() {
  return {Estimator::lotta_joint,          Estimator::lotta_cut,
          Estimator::lotta_treatment_only, Estimator::llr_known_cutoff,
          Estimator::plugin_two_constant,  Estimator::plugin_treatment_only,
          Estimator::cubic_two_sided};
}

Estimator parse_estimator(const std::string& text) {
  for (auto e : all_estimators())
    if (to_string(e) == text) return e;
  throw Error("unknown estimator '" + text + "'");
}

ReplicationResult run_estimator(const ScenarioSpec& spec, const Dataset& raw, int replication,
                                Estimator estimator) {
  ReplicationResult r;
  r.scenario = spec.name;
  r.replication = replication;
  r.estimator = estimator;
  r.tau_hat = r.tau_lo = r.tau_hi = r.c_hat = r.c_lo = r.c_hi = r.j_hat = kNaN;
  try {
    const auto nd = normalize(raw.scores, raw.outcomes, raw.treatments, OutcomeKind::continuous);
    const auto raw_prior = spec.raw_cutoff_prior();
    const auto prior = raw_prior.mapped(nd.score_scale);
    const auto seed = replication_seed(spec.seed ^ 0x5eedULL, replication);
    const auto c_kind = prior.is_discrete() ? SampleKind::discrete : SampleKind::continuous;

    switch (estimator) {
      case Estimator::lotta_joint:
      case Estimator::lotta_cut:
      case Estimator::lotta_treatment_only: {
        auto cfg = spec.sampler;
        cfg.seed = seed;
        cfg.mode = estimator == Estimator::lotta_joint  ? FitMode::joint
                   : estimator == Estimator::lotta_cut ? FitMode::cut
                                                       : FitMode::treatment_only;
        if (spec.sharp && cfg.mode == FitMode::treatment_only)
          throw Error("treatment-only fit is undefined for sharp designs");
        const auto model = make_model_spec(nd.data, spec.eta, prior, spec.sharp);
        const auto fit = run(nd.data, model, cfg);
        const auto rep = make_report(fit.draws, nd.score_scale, nd.outcome_scale, c_kind,
                                     spec.level, raw_prior.points());
        r.c_hat = rep.cutoff.map;
        r.c_lo = rep.cutoff.hdi.lo;
        r.c_hi = rep.cutoff.hdi.hi;
        if (rep.jump) r.j_hat = rep.jump->map;
        if (rep.tau) {
          r.tau_hat = rep.tau->map;
          r.tau_lo = rep.tau->hdi.lo;
          r.tau_hi = rep.tau->hdi.hi;
        }
        break;
      }
      case Estimator::llr_known_cutoff:
      case Estimator::cubic_two_sided: {
        LLRConfig llr;
        llr.level = spec.level;
        llr.sharp = spec.sharp;
        const auto e = estimator == Estimator::llr_known_cutoff
                           ? llr_fit(raw, spec.true_cutoff, llr)
                           : cubic_two_sided(raw, spec.true_cutoff, spec.level, spec.sharp);
        r.tau_hat = e.tau_hat;
        r.tau_lo = e.ci.lo;
        r.tau_hi = e.ci.hi;
        r.c_hat = spec.true_cutoff;
        if (!spec.sharp) r.j_hat = e.treatment_jump;
        r.unstable = e.unstable;
        break;
      }
      case Estimator::plugin_two_constant:
      case Estimator::plugin_treatment_only: {
        PluginConfig pc;
        pc.cutoff_prior = prior;
        pc.eta = spec.eta;
        pc.llr.level = spec.level;
        pc.llr.sharp = spec.sharp;
        pc.two_constant.seed = seed;
        pc.sampler = spec.sampler;
        pc.sampler.seed = seed;
        const auto source = estimator == Estimator::plugin_two_constant
                                ? CutoffSource::two_constant_map
                                : CutoffSource::treatment_only_map;
        const auto e = plugin_estimate(nd.data, source, pc);
        const auto& os = nd.outcome_scale;
        r.tau_hat = os.to_raw(e.llr.tau_hat);
        r.tau_lo = os.to_raw(e.llr.ci.lo);
        r.tau_hi = os.to_raw(e.llr.ci.hi);
        r.c_hat = nd.score_scale.to_raw(e.cutoff);
        for (double p : raw_prior.points())
          if (std::abs(p - r.c_hat) < 1e-9 * nd.score_scale.range) r.c_hat = p;
        if (!spec.sharp) r.j_hat = e.llr.treatment_jump;
        r.unstable = e.llr.unstable;
        break;
      }
    }
  } catch (const std::exception& ex) {
    r.ok = false;
    r.error = ex.what();
  }
  return r;
}

MetricsTable aggregate(const std::string& scenario, const TrueEstimands& truth,
                       const std::vector<ReplicationResult>& results) {
  MetricsTable table;
  table.scenario = scenario;
  table.truth = truth;
  std::vector<Estimator> order;
  for (const auto& r : results)
    if (std::find(order.begin(), order.end(), r.estimator) == order.end())
      order.push_back(r.estimator);

  for (auto est : order) {
    EstimatorMetrics m;
    m.estimator = est;
    std::vector<const ReplicationResult*> ok;
    for (const auto& r : results) {
      if (r.estimator != est) continue;
      ++m.replications;
      if (r.ok) ok.push_back(&r);
      else ++m.failures;
    }

    std::vector<double> err, len;
    double covered = 0.0, signed_ok = 0.0;
    std::vector<double> c_err, c_len, j_err;
    double c_covered = 0.0;
    for (const auto* r : ok) {
      if (finite(r->tau_hat)) {
        err.push_back(r->tau_hat - truth.tau);
        len.push_back(r->tau_hi - r->tau_lo);
        covered += (r->tau_lo <= truth.tau && truth.tau <= r->tau_hi) ? 1.0 : 0.0;
        signed_ok += (truth.tau > 0.0 && r->tau_lo > 0.0) || (truth.tau < 0.0 && r->tau_hi < 0.0);
      }
      if (finite(r->c_hat)) {
        c_err.push_back(r->c_hat - truth.cutoff);
        if (finite(r->c_lo)) {
          c_len.push_back(r->c_hi - r->c_lo);
          c_covered += (r->c_lo <= truth.cutoff && truth.cutoff <= r->c_hi) ? 1.0 : 0.0;
        }
      }
      if (finite(r->j_hat)) j_err.push_back(r->j_hat - truth.jump);
    }
    auto rmse = [](const std::vector<double>& e) {
      double s = 0.0;
      for (double v : e) s += v * v;
      return std::sqrt(s / static_cast<double>(e.size()));
    };
    if (!err.empty()) {
      LateMetrics l;
      const double n = static_cast<double>(err.size());
      l.rmse = rmse(err);
      l.mean_bias = stats::mean(err);
      l.median_bias = stats::median(err);
      std::vector<double> ae;
      for (double v : err) ae.push_back(std::abs(v));
      l.median_ae = stats::median(ae);
      l.mean_ci_len = stats::mean(len);
      l.median_ci_len = stats::median(len);
      l.coverage = covered / n;
      if (truth.tau != 0.0) l.correct_sign = signed_ok / n;
      m.late = l;
    }
    // A cutoff fixed at the truth carries no information.
    auto zero = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    };
    const bool known = zero(c_err) && zero(c_len);
    if (!c_err.empty() && !known) {
      CutoffMetrics c;
      c.rmse = rmse(c_err);
      c.mean_bias = stats::mean(c_err);
      if (!c_len.empty()) {
        c.mean_ci_len = stats::mean(c_len);
        c.median_ci_len = stats::median(c_len);
        c.coverage = c_covered / static_cast<double>(c_len.size());
      }
      m.cutoff = c;
    }
    if (!j_err.empty()) m.compliance_rmse = rmse(j_err);
    table.rows.push_back(m);
  }
  return table;
}

ScenarioRun run_scenario(const ScenarioSpec& spec, const std::vector<Estimator>& estimators) {
  spec.validate();
  if (spec.replications < 2) throw Error("a scenario run needs at least two replications");
  if (estimators.empty()) throw Error("no estimators selected");
  const auto reps = static_cast<std::size_t>(spec.replications);
  std::vector<std::vector<ReplicationResult>> per_rep(reps);
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      std::size_t k = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= reps) return;
        k = next++;
      }
      const auto data = gen_dataset(spec, static_cast<int>(k));
      for (auto e : estimators)
        per_rep[k].push_back(run_estimator(spec, data, static_cast<int>(k), e));
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(spec.threads), reps);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  ScenarioRun out;
  for (auto& v : per_rep) out.results.insert(out.results.end(), v.begin(), v.end());
  out.table = aggregate(spec.name, true_estimands(spec), out.results);
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<ReplicationResult>& results) {
  out << "scenario,replication,estimator,ok,tau_hat,tau_lo,tau_hi,c_hat,c_lo,c_hi,j_hat,"
         "unstable,error\n";
  for (const auto& r : results)
    out << fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n",
                       csv_safe(r.scenario), r.replication, to_string(r.estimator), r.ok ? 1 : 0,
                       r.tau_hat, r.tau_lo, r.tau_hi, r.c_hat, r.c_lo, r.c_hi, r.j_hat,
                       r.unstable ? 1 : 0, csv_safe(r.error));
}

std::vector<ReplicationResult> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("results CSV is empty");
  std::vector<ReplicationResult> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 12) f.emplace_back();
    if (f.size() != 13) throw Error("malformed results row: " + line);
    auto num = [](const std::string& s) { return s == "nan" ? kNaN : std::stod(s); };
    ReplicationResult r;
    r.scenario = f[0];
    r.replication = std::stoi(f[1]);
    r.estimator = parse_estimator(f[2]);
    r.ok = f[3] == "1";
    r.tau_hat = num(f[4]);
    r.tau_lo = num(f[5]);
    r.tau_hi = num(f[6]);
    r.c_hat = num(f[7]);
    r.c_lo = num(f[8]);
    r.c_hi = num(f[9]);
    r.j_hat = num(f[10]);
    r.unstable = f[11] == "1";
    r.error = f[12];
    out.push_back(r);
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const MetricsTable& table) {
  out << "scenario,estimator,replications,failures,true_tau,rmse,mean_bias,median_bias,"
         "median_ae,mean_ci_len,median_ci_len,coverage,correct_sign,cutoff_rmse,"
         "cutoff_mean_bias,cutoff_mean_ci_len,cutoff_median_ci_len,cutoff_coverage,"
         "compliance_rmse\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.17g}", *v) : std::string();
  };
  for (const auto& m : table.rows) {
    out << fmt::format("{},{},{},{},{:.17g}", csv_safe(table.scenario), to_string(m.estimator),
                       m.replications, m.failures, table.truth.tau);
    if (m.late) {
      const auto& l = *m.late;
      out << fmt::format(",{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}", l.rmse,
                         l.mean_bias, l.median_bias, l.median_ae, l.mean_ci_len, l.median_ci_len,
                         l.coverage, opt(l.correct_sign));
    } else {
      out << ",,,,,,,,";
    }
    if (m.cutoff) {
      const auto& c = *m.cutoff;
      out << fmt::format(",{:.17g},{:.17g},{},{},{}", c.rmse, c.mean_bias, opt(c.mean_ci_len),
                         opt(c.median_ci_len), opt(c.coverage));
    } else {
      out << ",,,,,";
    }
    out << ',' << opt(m.compliance_rmse) << '\n';
  }
}

nlohmann::json to_json(const ScenarioSpec& s) {
  const auto& c = s.sampler;
  return {{"name", s.name},
          {"sharp", s.sharp},
          {"outcome", to_string(s.outcome)},
          {"treatment", to_string(s.treatment)},
          {"n", s.n},
          {"noise_sd", s.noise_sd},
          {"replications", s.replications},
          {"seed", s.seed},
          {"true_cutoff", s.true_cutoff},
          {"cutoff_prior", {s.cutoff_prior.lo, s.cutoff_prior.hi}},
          {"known_cutoff", s.known_cutoff},
          {"eta", s.eta},
          {"level", s.level},
          {"threads", s.threads},
          {"sampler",
           {{"chains", c.chains},
            {"burn_in", c.burn_in},
            {"adapt", c.adapt},
            {"draws", c.draws},
            {"smoothing_s", c.smoothing_s},
            {"threads", c.threads},
            {"cut_inner_sweeps", c.cut_inner_sweeps}}}};
}

ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {
      "preset", "name", "sharp", "outcome", "treatment", "n", "noise_sd", "replications", "seed",
      "true_cutoff", "cutoff_prior", "known_cutoff", "eta", "level", "threads", "sampler"};
  static const std::set<std::string> sampler_keys = {
      "chains", "burn_in", "adapt", "draws", "smoothing_s", "threads", "cut_inner_sweeps"};
  if (!j.is_object()) throw Error("scenario config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw Error("unknown scenario key '" + k + "'");
  ScenarioSpec s = j.contains("preset") ? scenario(j.at("preset").get<std::string>()) : ScenarioSpec{};
  s.name = get_or(j, "name", s.name);
  s.sharp = get_or(j, "sharp", s.sharp);
  if (j.contains("outcome")) s.outcome = parse_outcome_fn(j.at("outcome").get<std::string>());
  if (j.contains("treatment"))
    s.treatment = parse_treatment_fn(j.at("treatment").get<std::string>());
  s.n = get_or(j, "n", s.n);
  s.noise_sd = get_or(j, "noise_sd", s.noise_sd);
  s.replications = get_or(j, "replications", s.replications);
  s.seed = get_or(j, "seed", s.seed);
  s.true_cutoff = get_or(j, "true_cutoff", s.true_cutoff);
  if (j.contains("cutoff_prior")) {
    const auto v = j.at("cutoff_prior").get<std::vector<double>>();
    if (v.size() != 2) throw Error("cutoff_prior must be [lo, hi]");
    s.cutoff_prior = {v[0], v[1]};
  }
  s.known_cutoff = get_or(j, "known_cutoff", s.known_cutoff);
  s.eta = get_or(j, "eta", s.eta);
  s.level = get_or(j, "level", s.level);
  s.threads = get_or(j, "threads", s.threads);
  if (j.contains("sampler")) {
    const auto& sj = j.at("sampler");
    if (!sj.is_object()) throw Error("sampler config must be a JSON object");
    for (const auto& [k, v] : sj.items())
      if (!sampler_keys.count(k)) throw Error("unknown sampler key '" + k + "'");
    auto& c = s.sampler;
    c.chains = get_or(sj, "chains", c.chains);
    c.burn_in = get_or(sj, "burn_in", c.burn_in);
    c.adapt = get_or(sj, "adapt", c.adapt);
    c.draws = get_or(sj, "draws", c.draws);
    c.smoothing_s = get_or(sj, "smoothing_s", c.smoothing_s);
    c.threads = get_or(sj, "threads", c.threads);
    c.cut_inner_sweeps = get_or(sj, "cut_inner_sweeps", c.cut_inner_sweeps);
  }
  s.validate();
  return s;
}

}  // namespace lotta::sim
