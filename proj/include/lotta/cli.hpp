#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lotta/data.hpp"
#include "lotta/mcmc.hpp"
#include "lotta/treatment.hpp"

namespace lotta::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Settings shared by fit, diagnose, sensitivity and baseline. JSON configs
/// use the same field names; unknown keys are rejected.
struct RunConfig {
  std::string input;
  std::string cutoff_prior;  // raw score units, see CutoffPrior::parse
  double eta = 0.2;
  FitMode mode = FitMode::joint;
  std::optional<Interval> trim;  // raw score units
  bool flip_treatment = false;
  bool sharp = false;
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  std::optional<OutcomeBounds> outcome_bounds;  // raw units, bounded outcomes only
  std::uint64_t seed = 1;
  std::string out = "lotta-out";
  double level = 0.95;
  int n_bounds = 25;
  double radius_quantile = 1.0;
  SamplerConfig sampler;

  // sensitivity
  std::vector<double> etas;
  std::vector<std::string> priors;

  // baseline
  std::vector<double> cutoffs;
  std::optional<double> bandwidth;

  // diagnose
  std::string fit_dir;
  int bins_per_side = 20;
  int grid_points = 201;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

std::string sha256_hex(const std::string& bytes);

/// Writes artifacts into one directory and records their hashes.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir);

  void write(const std::string& name, const std::string& content);
  void write_json(const std::string& name, const nlohmann::json& j);
  /// `[{"path", "sha256", "bytes"}]` for everything written so far.
  nlohmann::json entries() const;
  /// Writes manifest.json listing every other artifact.
  void finish();

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json entries_ = nlohmann::json::array();
};

/// Rows read from `input`, flipped and normalized, then trimmed.
struct PreparedData {
  NormalizedData normalized;
  RawTable raw;  // after flipping and trimming, raw units
};

PreparedData prepare_data(const RunConfig& config);

int cmd_fit(const RunConfig& config);
int cmd_diagnose(const RunConfig& config);
int cmd_sensitivity(const RunConfig& config);
int cmd_baseline(const RunConfig& config);
int cmd_simulate(const nlohmann::json& scenario, const std::string& out,
                 const std::vector<std::string>& estimators);

/// Parses argv and dispatches; returns the process exit code.
int run_main(int argc, char** argv);

}  // namespace lotta::cli
