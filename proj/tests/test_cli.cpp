#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "lotta/cli.hpp"
#include "lotta/error.hpp"
#include "lotta/sim.hpp"

using namespace lotta;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lotta-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_dataset(const fs::path& dir) {
  auto spec = sim::scenario("2A");
  spec.n = 300;
  const auto d = sim::gen_dataset(spec, 0);
  const auto path = dir / "data.csv";
  std::ofstream out(path);
  out << "score,treatment,outcome\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    out << d.scores[i] << "," << d.treatments[i] << "," << d.outcomes[i] << "\n";
  return path;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lotta");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(cli::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(RunConfig, JsonRoundTripAndStrictKeys) {
  cli::RunConfig c;
  c.input = "x.csv";
  c.cutoff_prior = "uniform:-0.8:0.2";
  c.eta = 0.3;
  c.mode = FitMode::cut;
  c.trim = Interval{-0.9, 0.9};
  c.sampler.chains = 3;
  c.etas = {0.1, 0.2};
  const auto back = cli::RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto j = c.to_json();
  j["chain"] = 2;
  EXPECT_THROW(cli::RunConfig::from_json(j), Error);
}

TEST(ArtifactWriter, ManifestHashes) {
  const auto dir = scratch("writer");
  cli::ArtifactWriter w(dir);
  w.write("a.txt", "hello");
  w.write_json("b.json", nlohmann::json{{"k", 1}});
  w.finish();
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  ASSERT_EQ(manifest["files"].size(), 2u);
  for (const auto& f : manifest["files"]) {
    const auto content = slurp(dir / f["path"].get<std::string>());
    EXPECT_EQ(f["sha256"], cli::sha256_hex(content));
    EXPECT_EQ(f["bytes"], content.size());
  }
}

TEST(Cli, FitDiagnoseBaselineEndToEnd) {
  const auto dir = scratch("e2e");
  const auto data = write_dataset(dir);
  const auto out = dir / "fit";
  ASSERT_EQ(run_cli({"fit", "--input", data.string(), "--cutoff-prior", "uniform:-0.8:0.2",
                     "--out", out.string(), "--chains", "2", "--burnin", "400", "--adapt", "200",
                     "--draws", "300", "--threads", "1"}),
            0);
  for (const auto* f : {"config.json", "report.json", "manifest.json", "draws_joint.csv",
                        "draws_treatment-only.csv", "hist_tau_joint.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  const double c = report["fits"]["joint"]["estimates"]["cutoff"]["map"];
  EXPECT_NEAR(c, 0.0, 0.1);

  ASSERT_EQ(run_cli({"diagnose", "--fit-dir", out.string()}), 0);
  for (const auto* f : {"binned_treatment.csv", "band_outcome.csv", "joint_c_tau.csv",
                        "diagnose.json"})
    EXPECT_TRUE(fs::exists(out / "diagnose" / f)) << f;

  const auto base = dir / "base";
  ASSERT_EQ(run_cli({"baseline", "--input", data.string(), "--cutoff", "0", "--out",
                     base.string()}),
            0);
  EXPECT_TRUE(fs::exists(base / "baseline.json"));

  // Same seed, same artifacts apart from the echoed output path.
  const auto again = dir / "fit2";
  ASSERT_EQ(run_cli({"fit", "--input", data.string(), "--cutoff-prior", "uniform:-0.8:0.2",
                     "--out", again.string(), "--chains", "2", "--burnin", "400", "--adapt",
                     "200", "--draws", "300", "--threads", "1"}),
            0);
  EXPECT_EQ(slurp(out / "draws_joint.csv"), slurp(again / "draws_joint.csv"));
}

TEST(Cli, ErrorExitCodes) {
  EXPECT_EQ(run_cli({"fit", "--input", "/nonexistent.csv", "--cutoff-prior", "uniform:0:1"}), 1);
  EXPECT_EQ(run_cli({"fit", "--bogus"}), 2);
  EXPECT_EQ(run_cli({"--help"}), 0);
  const auto dir = scratch("badprior");
  const auto data = write_dataset(dir);
  EXPECT_EQ(run_cli({"fit", "--input", data.string(), "--cutoff-prior", "uniform:5:6", "--out",
                     (dir / "o").string()}),
            1);
}
