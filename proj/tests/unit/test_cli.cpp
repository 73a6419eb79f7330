#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "hbm/commands.hpp"

namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
};

// Runs the CLI with `env` prepended, capturing stdout.
Run cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + HBM_CLI_PATH + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() /
                     ("hbm_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                      "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  fs::create_directories(d);
  return d;
}

const std::string kSmallEstimate =
    "HBM_ESTIMATE_N_PATHS=3000 HBM_ESTIMATE_PAYOFFS='x|one'";
const std::string kSmallSelftest =
    "HBM_SELFTEST_N_PATHS=2000 HBM_SELFTEST_CLOCKS=5000 HBM_SELFTEST_THETA_SAMPLES=200";

}  // namespace

TEST(Config, DefaultsCoverTheSchema) {
  const hbm::RunConfig cfg;
  EXPECT_EQ(cfg.get_u64("run", "seed"), 20240601u);
  EXPECT_EQ(cfg.get_string("drift", "kind"), "linear_y");
  EXPECT_EQ(cfg.get_real_list("kernels", "t"), (std::vector<double>{0.25, 1.0, 4.0}));
  EXPECT_FALSE(cfg.get_bool("compare", "negative_control"));
}

TEST(Config, RoundTripIsIdempotent) {
  const auto cfg = hbm::RunConfig::from_string(
      "[estimate]\nt = 0.1\nn_paths = 500\n[drift]\nkind = sine_x\nc=0.3\n");
  const std::string once = cfg.serialize();
  const std::string twice = hbm::RunConfig::from_string(once).serialize();
  EXPECT_EQ(once, twice);
  EXPECT_NE(once.find("t = 0.10000000000000001"), std::string::npos);
  EXPECT_EQ(hbm::RunConfig::from_string(once).hash(), cfg.hash());
  EXPECT_NE(cfg.hash(), hbm::RunConfig().hash());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  try {
    hbm::RunConfig::from_string("[estimate]\nhorizon = 1\n");
    FAIL();
  } catch (const hbm::ConfigError& e) {
    EXPECT_EQ(e.field(), "estimate.horizon");
  }
  EXPECT_THROW(hbm::RunConfig::from_string("[estimate]\nt = fast\n"), hbm::ConfigError);
  EXPECT_THROW(hbm::RunConfig::from_string("[run]\nseed = -3\n"), hbm::ConfigError);
  EXPECT_THROW(hbm::RunConfig::from_string("[compare]\nnegative_control = maybe\n"), hbm::ConfigError);
  EXPECT_THROW(hbm::RunConfig::from_string("[nowhere]\nx = 1\n"), hbm::ConfigError);
}

TEST(Config, EnvironmentOverrides) {
  ::setenv("HBM_ESTIMATE_T", "0.75", 1);
  hbm::RunConfig cfg;
  cfg.apply_env();
  ::unsetenv("HBM_ESTIMATE_T");
  EXPECT_EQ(cfg.get_real("estimate", "t"), 0.75);
}

TEST(Report, CsvQuotingFollowsRfc4180) {
  EXPECT_EQ(hbm::csv_field("plain"), "plain");
  EXPECT_EQ(hbm::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(hbm::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(hbm::format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(hbm::format_number(-INFINITY), "-inf");
}

TEST(Commands, KernelConfigValidation) {
  auto cfg = hbm::RunConfig::from_string("[kernel]\nrel_tol = -1e-8\n");
  try {
    hbm::kernel_config(cfg);
    FAIL();
  } catch (const hbm::ConfigError& e) {
    EXPECT_EQ(e.field(), "kernel.rel_tol");
  }
}

TEST(Commands, DriftParsing) {
  const auto d = hbm::parse_drift("sine_x:0.5:1", "f");
  EXPECT_EQ(d.name(), "sine_x");
  EXPECT_EQ(d.coefficient(), 0.5);
  EXPECT_THROW(hbm::parse_drift("sine_x:2:1", "f"), hbm::ConfigError);
  EXPECT_THROW(hbm::parse_drift("cubic:1:1", "f"), hbm::ConfigError);
  EXPECT_THROW(hbm::parse_drift("sine_x:1", "f"), hbm::ConfigError);
  EXPECT_THROW(hbm::parse_payoffs("x|bogus", "f"), hbm::ConfigError);
}

TEST(Cli, KernelsSinglePoint) {
  const auto r = cli("kernels", "HBM_KERNELS_N=2 HBM_KERNELS_T=1 HBM_KERNELS_R=0");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("n,t,r,p_mckean,p_gruet,p_milson,rel_diff"), std::string::npos);
  EXPECT_NE(r.out.find("# config_hash="), std::string::npos);
}

TEST(Cli, PrintConfigRoundTrips) {
  const auto r = cli("--print-config --seed 9", "HBM_ESTIMATE_T=0.3");
  EXPECT_EQ(r.code, 0);
  const auto cfg = hbm::RunConfig::from_string(r.out);
  EXPECT_EQ(cfg.get_u64("run", "seed"), 9u);
  EXPECT_EQ(cfg.get_real("estimate", "t"), 0.3);
  EXPECT_EQ(cfg.serialize(), r.out);
  EXPECT_EQ(cli("").code, 2);
}

TEST(Cli, ConfigErrorsExitTwoWithoutOutput) {
  const fs::path d = temp_dir();
  const auto r = cli("kernels --out " + (d / "k.csv").string(), "HBM_KERNELS_T=0.05");
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(d / "k.csv"));
  EXPECT_EQ(cli("selftest", "HBM_KERNEL_REL_TOL=-1").code, 2);
  EXPECT_EQ(cli("estimate --format xml").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  std::ofstream(d / "bad.ini") << "[estimate]\nplacement = sideways\n";
  EXPECT_EQ(cli("estimate --config " + (d / "bad.ini").string()).code, 2);
  fs::remove_all(d);
}

TEST(Cli, EstimateIsByteReproducible) {
  const auto a = cli("estimate --seed 5", kSmallEstimate);
  const auto b = cli("estimate --seed 5", kSmallEstimate);
  const auto c = cli("estimate --seed 6", kSmallEstimate);
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
}

TEST(Cli, WorkerCountDoesNotChangeResults) {
  const auto a = cli("estimate --seed 5 --workers 1", kSmallEstimate);
  const auto b = cli("estimate --seed 5 --workers 4", kSmallEstimate);
  // Identical apart from the config hash, which records the worker count.
  auto body = [](const std::string& s) { return s.substr(s.find("payoff,")); };
  EXPECT_EQ(body(a.out), body(b.out));
}

TEST(Cli, OutWritesTableAndSummary) {
  const fs::path d = temp_dir();
  const auto r = cli("estimate --out " + (d / "e.csv").string(), kSmallEstimate);
  EXPECT_EQ(r.code, 0);
  const std::string table = slurp(d / "e.csv");
  const auto summary = nlohmann::json::parse(slurp(d / "e.csv.json"));
  EXPECT_NE(table.find("x,"), std::string::npos);
  EXPECT_TRUE(summary["summary"].contains("weight_second_moment_bound"));
  EXPECT_TRUE(summary["summary"]["diagnostics"].contains("ceiling_violations"));
  EXPECT_EQ(summary["provenance"]["seed"], 20240601u);
  fs::remove_all(d);
}

TEST(Cli, JsonFormat) {
  const auto r = cli("validate-drift --format json", "HBM_VALIDATE_DRIFT_SAMPLES=100");
  EXPECT_EQ(r.code, 0);
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc["rows"].size(), 3u);
  EXPECT_EQ(doc["summary"]["passed"], true);
}

TEST(Cli, ValidateDriftFailsForOversizedTable) {
  const fs::path d = temp_dir();
  std::ofstream(d / "t.csv") << "x,y,mu\n0,1,0\n0,2,0\n1,1,3\n1,2,0\n";
  const auto r = cli("validate-drift",
                     "HBM_DRIFT_KIND=table HBM_DRIFT_TABLE=" + (d / "t.csv").string() +
                         " HBM_VALIDATE_DRIFT_X_LO=0 HBM_VALIDATE_DRIFT_X_HI=1"
                         " HBM_VALIDATE_DRIFT_Y_LO=1 HBM_VALIDATE_DRIFT_Y_HI=2"
                         " HBM_VALIDATE_DRIFT_SAMPLES=100");
  EXPECT_EQ(r.code, 1);
  fs::remove_all(d);
}

// The theta bound and weight ceiling checks fail, so selftest exits 1; its
// output is still byte-identical across runs.
TEST(Cli, SelftestIsDeterministic) {
  const auto a = cli("selftest", kSmallSelftest);
  const auto b = cli("selftest", kSmallSelftest);
  EXPECT_EQ(a.code, 1);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("normalization t=0.25"), std::string::npos);
}

TEST(Cli, NegativeControlIsDetected) {
  const auto r = cli("compare",
                     "HBM_COMPARE_N_PATHS=20000 HBM_COMPARE_EULER_PATHS=20000 "
                     "HBM_COMPARE_EULER_STEPS=128 HBM_COMPARE_T=0.5 "
                     "HBM_COMPARE_DRIFTS='linear_y:1:1' HBM_COMPARE_PAYOFFS='x' "
                     "HBM_COMPARE_NEGATIVE_CONTROL=true");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(",false\r\n"), std::string::npos);
}
