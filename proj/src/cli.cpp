#include "lotta/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "lotta/baselines.hpp"
#include "lotta/error.hpp"
#include "lotta/posterior.hpp"
#include "lotta/sim.hpp"

namespace lotta::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::continuous: return "continuous";
    case OutcomeKind::binary: return "binary";
    case OutcomeKind::bounded: return "bounded";
  }
  return "?";
}

OutcomeKind parse_outcome_kind(const std::string& s) {
  for (auto k : {OutcomeKind::continuous, OutcomeKind::binary, OutcomeKind::bounded})
    if (to_string(k) == s) return k;
  throw Error("unknown outcome kind '" + s + "'");
}

/// "lo:hi" with lo < hi.
Interval parse_range(const std::string& text, const char* what) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(fmt::format("{} must look like lo:hi", what));
  try {
    std::size_t used = 0;
    const double lo = std::stod(text.substr(0, colon), &used);
    const std::string rest = text.substr(colon + 1);
    const double hi = std::stod(rest, &used);
    if (used != rest.size() || !(lo < hi)) throw Error("");
    return {lo, hi};
  } catch (const std::exception&) {
    throw Error(fmt::format("{} must look like lo:hi with lo < hi, got '{}'", what, text));
  }
}

json nullable_pair(const std::optional<Interval>& v) {
  return v ? json{v->lo, v->hi} : json(nullptr);
}

template <typename T>
void read_key(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

std::optional<Interval> read_pair(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2 || !(v[0] < v[1])) throw Error(fmt::format("'{}' must be [lo, hi]", key));
  return Interval{v[0], v[1]};
}

json diagnostics_json(const Diagnostics& d) {
  json acc = json::array();
  for (const auto& b : d.acceptance)
    acc.push_back({{"block", b.name}, {"attempts", b.attempts}, {"rate", b.rate()}});
  return {{"names", d.names}, {"rhat", d.rhat}, {"ess", d.ess},
          {"acceptance", acc}, {"converged", d.converged}};
}

std::string draws_name(FitMode mode) { return "draws_" + to_string(mode) + ".csv"; }

struct FitOutput {
  FitResult fit;
  EstimateReport report;
  CutoffPrior prior;      // normalized scale
  CutoffPrior raw_prior;  // as given
};

CutoffPrior checked_prior(const PreparedData& prep, const std::string& text) {
  if (text.empty()) throw Error("a cutoff prior is required (--cutoff-prior)");
  const auto raw = CutoffPrior::parse(text);
  const auto& ss = prep.normalized.score_scale;
  const auto& d = prep.normalized.data;
  const double lo = ss.to_raw(d.support_lo);
  const double hi = ss.to_raw(d.support_hi);
  const double tol = 1e-9 * std::max(1.0, hi - lo);
  if (raw.lower() < lo - tol || raw.upper() > hi + tol)
    throw Error(fmt::format("cutoff prior [{}, {}] leaves the score range [{}, {}]", raw.lower(),
                            raw.upper(), lo, hi));
  return raw.mapped(ss);
}

FitOutput fit_once(const PreparedData& prep, const RunConfig& cfg, double eta,
                   const std::string& prior_text, FitMode mode) {
  const auto& data = prep.normalized.data;
  auto prior = checked_prior(prep, prior_text);
  const auto spec =
      make_model_spec(data, eta, prior, cfg.sharp, cfg.n_bounds, cfg.radius_quantile);
  auto sampler = cfg.sampler;
  sampler.seed = cfg.seed;
  sampler.mode = mode;
  FitOutput out{run(data, spec, sampler), {}, prior, CutoffPrior::parse(prior_text)};
  const auto kind = prior.is_discrete() ? SampleKind::discrete : SampleKind::continuous;
  out.report = make_report(out.fit.draws, prep.normalized.score_scale,
                           prep.normalized.outcome_scale, kind, cfg.level,
                           out.raw_prior.points());
  return out;
}

std::vector<double> raw_values(const PosteriorDraws& draws, const std::string& name,
                               const PreparedData& prep, const CutoffPrior& raw_prior) {
  if (name == "c") return raw_cutoffs(draws, prep.normalized.score_scale, raw_prior.points());
  auto v = draws.pooled(name);
  if (name == "tau")
    for (double& x : v) x = prep.normalized.outcome_scale.to_raw(x);
  return v;
}

void write_histograms(ArtifactWriter& w, const FitOutput& f, const PreparedData& prep,
                      const std::string& suffix) {
  const auto& d = f.fit.draws;
  const auto kind = f.prior.is_discrete() ? SampleKind::discrete : SampleKind::continuous;
  std::ostringstream c;
  write_histogram_csv(c, raw_values(d, "c", prep, f.raw_prior), kind);
  w.write("hist_c_" + suffix + ".csv", c.str());
  if (!d.sharp) {
    std::ostringstream j;
    write_histogram_csv(j, d.pooled("j"), SampleKind::continuous);
    w.write("hist_j_" + suffix + ".csv", j.str());
  }
  if (d.has_outcome) {
    std::ostringstream t;
    write_histogram_csv(t, raw_values(d, "tau", prep, f.raw_prior), SampleKind::continuous);
    w.write("hist_tau_" + suffix + ".csv", t.str());
  }
}

json software_json() { return {{"name", "lotta"}, {"version", kVersion}}; }

json scales_json(const PreparedData& prep) {
  const auto& n = prep.normalized;
  return {{"score_range", n.score_scale.range},
          {"score_offset", n.score_scale.offset},
          {"outcome_scale", n.outcome_scale.scale}};
}

Dataset raw_dataset(const RawTable& raw, OutcomeKind kind) {
  Dataset d;
  d.scores = raw.scores;
  d.treatments = raw.treatments;
  d.outcomes = raw.outcomes;
  d.outcome_kind = kind;
  const auto [mn, mx] = std::minmax_element(d.scores.begin(), d.scores.end());
  d.support_lo = *mn;
  d.support_hi = *mx;
  return d;
}

}  // namespace

json RunConfig::to_json() const {
  const auto& s = sampler;
  return {{"input", input},
          {"cutoff_prior", cutoff_prior},
          {"eta", eta},
          {"mode", lotta::to_string(mode)},
          {"trim", nullable_pair(trim)},
          {"flip_treatment", flip_treatment},
          {"sharp", sharp},
          {"outcome_kind", cli::to_string(outcome_kind)},
          {"outcome_bounds", outcome_bounds ? json{outcome_bounds->lower, outcome_bounds->upper}
                                            : json(nullptr)},
          {"seed", seed},
          {"out", out},
          {"level", level},
          {"n_bounds", n_bounds},
          {"radius_quantile", radius_quantile},
          {"sampler",
           {{"chains", s.chains},
            {"burn_in", s.burn_in},
            {"adapt", s.adapt},
            {"draws", s.draws},
            {"smoothing_s", s.smoothing_s},
            {"threads", s.threads},
            {"cut_inner_sweeps", s.cut_inner_sweeps},
            {"init_burn_in", s.init_burn_in},
            {"init_draws", s.init_draws}}},
          {"etas", etas},
          {"priors", priors},
          {"cutoffs", cutoffs},
          {"bandwidth", bandwidth ? json(*bandwidth) : json(nullptr)},
          {"fit_dir", fit_dir},
          {"bins_per_side", bins_per_side},
          {"grid_points", grid_points}};
}

RunConfig RunConfig::from_json(const json& j) {
  static const std::set<std::string> keys = {
      "input",   "cutoff_prior", "eta",   "mode",   "trim",      "flip_treatment",
      "sharp",   "outcome_kind", "outcome_bounds",  "seed",      "out",
      "level",   "n_bounds",     "radius_quantile", "sampler",   "etas",
      "priors",  "cutoffs",      "bandwidth",       "fit_dir",   "bins_per_side",
      "grid_points"};
  static const std::set<std::string> sampler_keys = {
      "chains", "burn_in", "adapt", "draws", "smoothing_s", "threads", "cut_inner_sweeps",
      "init_burn_in", "init_draws"};
  if (!j.is_object()) throw Error("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw Error("unknown config key '" + k + "'");
  RunConfig c;
  try {
    read_key(j, "input", c.input);
    read_key(j, "cutoff_prior", c.cutoff_prior);
    read_key(j, "eta", c.eta);
    if (j.contains("mode")) c.mode = parse_fit_mode(j.at("mode").get<std::string>());
    c.trim = read_pair(j, "trim");
    read_key(j, "flip_treatment", c.flip_treatment);
    read_key(j, "sharp", c.sharp);
    if (j.contains("outcome_kind"))
      c.outcome_kind = parse_outcome_kind(j.at("outcome_kind").get<std::string>());
    if (auto b = read_pair(j, "outcome_bounds")) c.outcome_bounds = OutcomeBounds{b->lo, b->hi};
    read_key(j, "seed", c.seed);
    read_key(j, "out", c.out);
    read_key(j, "level", c.level);
    read_key(j, "n_bounds", c.n_bounds);
    read_key(j, "radius_quantile", c.radius_quantile);
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      if (!s.is_object()) throw Error("'sampler' must be a JSON object");
      for (const auto& [k, v] : s.items())
        if (!sampler_keys.count(k)) throw Error("unknown sampler key '" + k + "'");
      read_key(s, "chains", c.sampler.chains);
      read_key(s, "burn_in", c.sampler.burn_in);
      read_key(s, "adapt", c.sampler.adapt);
      read_key(s, "draws", c.sampler.draws);
      read_key(s, "smoothing_s", c.sampler.smoothing_s);
      read_key(s, "threads", c.sampler.threads);
      read_key(s, "cut_inner_sweeps", c.sampler.cut_inner_sweeps);
      read_key(s, "init_burn_in", c.sampler.init_burn_in);
      read_key(s, "init_draws", c.sampler.init_draws);
    }
    read_key(j, "etas", c.etas);
    read_key(j, "priors", c.priors);
    read_key(j, "cutoffs", c.cutoffs);
    if (j.contains("bandwidth") && !j.at("bandwidth").is_null())
      c.bandwidth = j.at("bandwidth").get<double>();
    read_key(j, "fit_dir", c.fit_dir);
    read_key(j, "bins_per_side", c.bins_per_side);
    read_key(j, "grid_points", c.grid_points);
  } catch (const json::exception& e) {
    throw Error(std::string("config has a value of the wrong type: ") + e.what());
  }
  c.sampler.validate();
  if (!(c.level > 0.0 && c.level < 1.0)) throw Error("level must lie in (0, 1)");
  if (c.bins_per_side < 1) throw Error("bins_per_side must be >= 1");
  if (c.grid_points < 2) throw Error("grid_points must be >= 2");
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

ArtifactWriter::ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

void ArtifactWriter::write(const std::string& name, const std::string& content) {
  std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir_ / name).string());
  out << content;
  if (!out) throw Error("failed writing " + (dir_ / name).string());
  entries_.push_back({{"path", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
}

void ArtifactWriter::write_json(const std::string& name, const json& j) {
  write(name, j.dump(2) + "\n");
}

json ArtifactWriter::entries() const { return entries_; }

void ArtifactWriter::finish() {
  const json manifest = {{"software", software_json()}, {"files", entries_}};
  std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
  out << manifest.dump(2) << "\n";
  if (!out) throw Error("failed writing manifest");
}

PreparedData prepare_data(const RunConfig& config) {
  if (config.input.empty()) throw Error("an input CSV is required (--input)");
  PreparedData p;
  p.raw = read_csv_file(config.input);
  if (config.flip_treatment)
    for (int& t : p.raw.treatments) t = 1 - t;
  std::optional<OutcomeBounds> bounds;
  if (config.outcome_kind == OutcomeKind::bounded) {
    if (!config.outcome_bounds) throw Error("bounded outcomes need --outcome-bounds a:b");
    bounds = config.outcome_bounds;
  }
  p.normalized = normalize(p.raw.scores, p.raw.outcomes, p.raw.treatments, config.outcome_kind,
                           bounds);
  if (config.trim) {
    const auto& ss = p.normalized.score_scale;
    p.normalized.data = lotta::trim(p.normalized.data, ss.to_normalized(config.trim->lo),
                                    ss.to_normalized(config.trim->hi));
    RawTable kept;
    for (std::size_t i = 0; i < p.raw.scores.size(); ++i) {
      const double x = p.raw.scores[i];
      if (x >= config.trim->lo && x <= config.trim->hi) {
        kept.scores.push_back(x);
        kept.treatments.push_back(p.raw.treatments[i]);
        kept.outcomes.push_back(p.raw.outcomes[i]);
      }
    }
    p.raw = std::move(kept);
  }
  p.normalized.data.validate();
  return p;
}

int cmd_fit(const RunConfig& cfg) {
  const auto prep = prepare_data(cfg);
  ArtifactWriter w(cfg.out);
  w.write_json("config.json", cfg.to_json());

  std::vector<FitMode> modes;
  if (!cfg.sharp && cfg.mode != FitMode::treatment_only) modes.push_back(FitMode::treatment_only);
  modes.push_back(cfg.mode);

  json fits = json::object();
  for (auto mode : modes) {
    const auto f = fit_once(prep, cfg, cfg.eta, cfg.cutoff_prior, mode);
    std::ostringstream draws;
    write_draws_csv(draws, f.fit.draws, prep.normalized.score_scale, prep.normalized.outcome_scale);
    w.write(draws_name(mode), draws.str());
    write_histograms(w, f, prep, to_string(mode));
    fits[to_string(mode)] = {{"estimates", f.report.to_json()},
                             {"diagnostics", diagnostics_json(f.fit.diagnostics)}};
  }

  json report = {{"software", software_json()},
                 {"config", cfg.to_json()},
                 {"rows", prep.normalized.data.size()},
                 {"scales", scales_json(prep)},
                 {"fits", fits}};
  if (!cfg.sharp) {
    // Warns when the data barely support a jump above eta.
    TwoConstantConfig tc;
    tc.seed = cfg.seed;
    const auto bounds = compute_support_bounds(prep.normalized.data, cfg.n_bounds,
                                               cfg.radius_quantile);
    const auto prior = checked_prior(prep, cfg.cutoff_prior);
    const auto two = two_constant_posterior(prep.normalized.data, prior, cfg.eta, tc, &bounds);
    report["two_constant_check"] = {{"lower_bound_share", two.lower_bound_share},
                                    {"jump_at_lower_bound", two.jump_at_lower_bound}};
  }
  report["artifacts"] = w.entries();
  w.write_json("report.json", report);
  w.finish();
  std::cout << report["fits"][to_string(cfg.mode)]["estimates"].dump(2) << "\n";
  return 0;
}

int cmd_diagnose(const RunConfig& cfg) {
  if (cfg.fit_dir.empty()) throw Error("diagnose needs --fit-dir");
  const fs::path dir = cfg.fit_dir;
  auto base = RunConfig::load(dir / "config.json");
  const auto prep = prepare_data(base);
  const auto& data = prep.normalized.data;
  const auto& ss = prep.normalized.score_scale;
  const auto& os = prep.normalized.outcome_scale;

  std::ifstream in(dir / draws_name(base.mode));
  if (!in) throw Error("missing draws file " + (dir / draws_name(base.mode)).string());
  const auto draws = read_draws_csv(in, base.mode, base.sharp);
  const auto prior = checked_prior(prep, base.cutoff_prior);
  const auto kind = prior.is_discrete() ? SampleKind::discrete : SampleKind::continuous;
  const double map_c = map_estimate(draws.pooled("c"), kind);

  ArtifactWriter w(cfg.out);
  for (auto var : {BinnedVariable::treatment, BinnedVariable::outcome}) {
    const bool is_outcome = var == BinnedVariable::outcome;
    auto series = to_raw_units(bin_series(data, map_c, cfg.bins_per_side, var), ss,
                               is_outcome ? &os : nullptr);
    std::ostringstream s;
    write_binned_csv(s, series);
    w.write(is_outcome ? "binned_outcome.csv" : "binned_treatment.csv", s.str());
  }

  const auto flat = draws.flattened();
  const auto grid = linear_grid(data.support_lo, data.support_hi, cfg.grid_points);
  const ScoreSupport support{data.support_lo, data.support_hi};
  std::vector<BandTarget> targets = {BandTarget::treatment};
  if (draws.has_outcome) targets.push_back(BandTarget::outcome);
  for (auto target : targets) {
    auto band = function_band(flat, grid, target, draws.sharp, support, data.outcome_kind,
                              cfg.level);
    for (double& x : band.grid) x = ss.to_raw(x);
    if (target == BandTarget::outcome)
      for (auto* v : {&band.median, &band.lower, &band.upper})
        for (double& y : *v) y = os.to_raw(y);
    std::ostringstream s;
    write_band_csv(s, band);
    w.write(target == BandTarget::treatment ? "band_treatment.csv" : "band_outcome.csv", s.str());
  }

  json summary = {{"software", software_json()},
                  {"fit_dir", cfg.fit_dir},
                  {"mode", to_string(base.mode)},
                  {"map_cutoff", ss.to_raw(map_c)},
                  {"diagnostics", diagnostics_json(diagnose(draws))}};
  if (draws.has_outcome) {
    const auto raw_prior = CutoffPrior::parse(base.cutoff_prior);
    const auto c = raw_values(draws, "c", prep, raw_prior);
    const auto tau = raw_values(draws, "tau", prep, raw_prior);
    std::ostringstream s;
    write_joint_csv(s, joint_c_tau(c, tau, kind));
    w.write("joint_c_tau.csv", s.str());
    summary["tau_multimodal"] = multimodal(tau);
  }
  summary["artifacts"] = w.entries();
  w.write_json("diagnose.json", summary);
  w.finish();
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_sensitivity(const RunConfig& cfg) {
  const auto prep = prepare_data(cfg);
  const auto etas = cfg.etas.empty() ? std::vector<double>{cfg.eta} : cfg.etas;
  const auto priors = cfg.priors.empty() ? std::vector<std::string>{cfg.cutoff_prior} : cfg.priors;
  ArtifactWriter w(cfg.out);
  w.write_json("config.json", cfg.to_json());

  std::ostringstream table;
  table << "variant,eta,cutoff_prior,estimand,map,hdi_lo,hdi_hi,mean,median\n";
  json variants = json::array();
  int k = 0;
  for (double eta : etas) {
    for (const auto& prior : priors) {
      const auto f = fit_once(prep, cfg, eta, prior, cfg.mode);
      const std::string canonical = CutoffPrior::parse(prior).to_string();
      const auto& r = f.report;
      auto row = [&](const char* name, const EstimateSummary& s) {
        table << fmt::format("{},{:.17g},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", k, eta,
                             canonical, name, s.map, s.hdi.lo, s.hdi.hi, s.mean, s.median);
      };
      row("c", r.cutoff);
      if (r.jump) row("j", *r.jump);
      if (r.tau) row("tau", *r.tau);
      write_histograms(w, f, prep, fmt::format("variant{}", k));
      variants.push_back({{"variant", k},
                          {"eta", eta},
                          {"cutoff_prior", canonical},
                          {"estimates", r.to_json()},
                          {"converged", f.fit.diagnostics.converged}});
      ++k;
    }
  }
  w.write("sensitivity.csv", table.str());
  w.write_json("sensitivity.json", {{"software", software_json()},
                                    {"config", cfg.to_json()},
                                    {"variants", variants}});
  w.finish();
  std::cout << table.str();
  return 0;
}

int cmd_baseline(const RunConfig& cfg) {
  if (cfg.cutoffs.empty()) throw Error("baseline needs at least one --cutoff");
  const auto prep = prepare_data(cfg);
  const auto data = raw_dataset(prep.raw, cfg.outcome_kind);
  LLRConfig llr;
  llr.bandwidth = cfg.bandwidth;
  llr.level = cfg.level;
  llr.sharp = cfg.sharp;
  json results = json::array();
  for (double c : cfg.cutoffs)
    results.push_back({{"cutoff", c}, {"estimate", llr_fit(data, c, llr).to_json()}});
  ArtifactWriter w(cfg.out);
  w.write_json("config.json", cfg.to_json());
  const json report = {{"software", software_json()}, {"config", cfg.to_json()},
                       {"results", results}};
  w.write_json("baseline.json", report);
  w.finish();
  std::cout << results.dump(2) << "\n";
  return 0;
}

int cmd_simulate(const json& scenario_json, const std::string& out,
                 const std::vector<std::string>& estimator_names) {
  const auto spec = sim::scenario_from_json(scenario_json);
  std::vector<sim::Estimator> estimators;
  for (const auto& e : estimator_names) estimators.push_back(sim::parse_estimator(e));
  if (estimators.empty()) estimators = {sim::Estimator::lotta_joint, sim::Estimator::llr_known_cutoff};
  const auto run = sim::run_scenario(spec, estimators);
  ArtifactWriter w(out);
  w.write_json("scenario.json", sim::to_json(spec));
  std::ostringstream results, metrics;
  sim::write_results_csv(results, run.results);
  sim::write_metrics_csv(metrics, run.table);
  w.write("results.csv", results.str());
  w.write("metrics.csv", metrics.str());
  w.finish();
  for (const auto& r : run.results)
    if (!r.ok)
      std::cerr << fmt::format("replication {} {} failed: {}\n", r.replication,
                               sim::to_string(r.estimator), r.error);
  std::cout << metrics.str();
  return 0;
}

int run_main(int argc, char** argv) {
  CLI::App app{"lotta: Bayesian regression discontinuity with an unknown cutoff"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // Raw flag values; applied on top of --config only when given.
  std::string config_path, input, out, cutoff_prior, trim, mode, outcome_kind, outcome_bounds;
  std::string fit_dir, scenario_name;
  std::uint64_t seed = 1;
  double eta = 0.2, level = 0.95, bandwidth = 0.0;
  int chains = 0, burnin = 0, adapt = 0, draws = 0, threads = 0, bins = 0, grid_points = 0;
  int replications = 0;
  bool flip = false, sharp = false;
  std::vector<double> etas, cutoffs;
  std::vector<std::string> priors, estimators;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", config_path, "JSON config; flags override its values");
    s->add_option("--input", input, "CSV with header score,treatment,outcome");
    s->add_option("--out", out, "output directory");
    s->add_option("--seed", seed, "random seed");
    s->add_option("--eta", eta, "lower bound on the treatment jump");
    s->add_option("--cutoff-prior", cutoff_prior,
                  "uniform:lo:hi, beta:lo:hi:a:b, point:v, grid:lo:hi:step, "
                  "betabinom:lo:hi:step:a:b, mixture:point:weight:lo:hi:step, pmf:v=w,...");
    s->add_option("--trim", trim, "keep scores in lo:hi (raw units)");
    s->add_option("--mode", mode, "joint, cut or treatment-only");
    s->add_flag("--flip-treatment", flip, "recode treatment as 1 - t");
    s->add_flag("--sharp", sharp, "sharp design (no treatment model)");
    s->add_option("--outcome-kind", outcome_kind, "continuous, binary or bounded");
    s->add_option("--outcome-bounds", outcome_bounds, "a:b for bounded outcomes");
    s->add_option("--chains", chains, "number of chains");
    s->add_option("--burnin", burnin, "burn-in iterations per chain");
    s->add_option("--adapt", adapt, "adaptation iterations per chain");
    s->add_option("--draws", draws, "retained draws per chain");
    s->add_option("--threads", threads, "worker threads (0: hardware)");
    s->add_option("--level", level, "credible/confidence level");
  };

  auto* fit = app.add_subcommand("fit", "fit treatment-only and joint (or cut) models");
  common(fit);
  auto* diag = app.add_subcommand("diagnose", "binned series, bands and joint c-tau summary");
  common(diag);
  diag->add_option("--fit-dir", fit_dir, "directory written by fit")->required();
  diag->add_option("--bins", bins, "bins per side");
  diag->add_option("--grid-points", grid_points, "grid size for function bands");
  auto* sens = app.add_subcommand("sensitivity", "refit over eta values and cutoff priors");
  common(sens);
  sens->add_option("--eta-grid", etas, "comma-separated eta values")->delimiter(',');
  sens->add_option("--prior", priors, "cutoff prior variant (repeatable)");
  auto* base = app.add_subcommand("baseline", "local linear regression at given cutoffs");
  common(base);
  base->add_option("--cutoff", cutoffs, "cutoff in raw units (repeatable)");
  base->add_option("--bandwidth", bandwidth, "bandwidth in raw units (default: rule of thumb)");
  auto* simc = app.add_subcommand("simulate", "replicated simulation study");
  simc->add_option("--config", config_path, "scenario JSON");
  simc->add_option("--scenario", scenario_name, "preset: 1A-3C, lee, ludwig");
  simc->add_option("--replications", replications, "number of replications");
  simc->add_option("--estimators", estimators, "comma-separated estimator names")->delimiter(',');
  simc->add_option("--out", out, "output directory");
  simc->add_option("--seed", seed, "random seed");
  simc->add_option("--chains", chains, "number of chains");
  simc->add_option("--burnin", burnin, "burn-in iterations per chain");
  simc->add_option("--draws", draws, "retained draws per chain");
  simc->add_option("--threads", threads, "replication worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; any other usage error exits 2.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (simc->parsed()) {
      json j = json::object();
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw Error("cannot open scenario config " + config_path);
        j = json::parse(in);
      }
      if (simc->count("--scenario")) j["preset"] = scenario_name;
      if (simc->count("--replications")) j["replications"] = replications;
      if (simc->count("--seed")) j["seed"] = seed;
      if (simc->count("--threads")) j["threads"] = threads;
      for (auto [flag, key, value] : {std::tuple{"--chains", "chains", chains},
                                      std::tuple{"--burnin", "burn_in", burnin},
                                      std::tuple{"--draws", "draws", draws}})
        if (simc->count(flag)) j["sampler"][key] = value;
      return cmd_simulate(j, out.empty() ? "lotta-sim" : out, estimators);
    }

    CLI::App* sub = fit->parsed() ? fit : diag->parsed() ? diag : sens->parsed() ? sens : base;
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    auto given = [&](const char* flag) { return sub->count(flag) > 0; };
    if (given("--input")) cfg.input = input;
    if (given("--out")) cfg.out = out;
    if (given("--seed")) cfg.seed = seed;
    if (given("--eta")) cfg.eta = eta;
    if (given("--cutoff-prior")) cfg.cutoff_prior = cutoff_prior;
    if (given("--trim")) cfg.trim = parse_range(trim, "--trim");
    if (given("--mode")) cfg.mode = parse_fit_mode(mode);
    if (given("--flip-treatment")) cfg.flip_treatment = flip;
    if (given("--sharp")) cfg.sharp = sharp;
    if (given("--outcome-kind")) cfg.outcome_kind = parse_outcome_kind(outcome_kind);
    if (given("--outcome-bounds")) {
      const auto b = parse_range(outcome_bounds, "--outcome-bounds");
      cfg.outcome_bounds = OutcomeBounds{b.lo, b.hi};
    }
    if (given("--chains")) cfg.sampler.chains = chains;
    if (given("--burnin")) cfg.sampler.burn_in = burnin;
    if (given("--adapt")) cfg.sampler.adapt = adapt;
    if (given("--draws")) cfg.sampler.draws = draws;
    if (given("--threads")) cfg.sampler.threads = threads;
    if (given("--level")) cfg.level = level;
    cfg.sampler.validate();

    if (sub == diag) {
      cfg.fit_dir = fit_dir;
      if (!given("--out")) cfg.out = (fs::path(fit_dir) / "diagnose").string();
      if (given("--bins")) cfg.bins_per_side = bins;
      if (given("--grid-points")) cfg.grid_points = grid_points;
      return cmd_diagnose(cfg);
    }
    if (sub == sens) {
      if (given("--eta-grid")) cfg.etas = etas;
      if (given("--prior")) cfg.priors = priors;
      return cmd_sensitivity(cfg);
    }
    if (sub == base) {
      if (given("--cutoff")) cfg.cutoffs = cutoffs;
      if (given("--bandwidth")) cfg.bandwidth = bandwidth;
      return cmd_baseline(cfg);
    }
    return cmd_fit(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lotta::cli
