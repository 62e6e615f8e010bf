#include "mphase/cli/commands.hpp"
#include "mphase/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace mphase;
using mphase::cli::Json;
using mphase::cli::run;
using mphase::cli::read_csv;
using mphase::cli::to_csv;
using mphase::cli::format_number;
using mphase::cli::kOk;
using mphase::cli::kValidationError;
using mphase::cli::kIdentifiability;
using mphase::cli::kRuntimeError;
using mphase::cli::kFailureBudget;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MPHASE_TEST_DATA_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mphase");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("mphase_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str(const std::string& leaf = "") const { return (leaf.empty() ? path_ : path_ / leaf).string(); }
  fs::path write(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name, std::ios::binary) << content;
    return path_ / name;
  }

 private:
  fs::path path_;
};

}  // namespace

TEST(ReadCsv, ParsesFixture) {
  const Dataset d = read_csv(kData / "step_noiseless.csv");
  ASSERT_EQ(d.size(), 12u);
  EXPECT_EQ(d.xs()[7], 7.0);
  EXPECT_EQ(d.ys()[7], 3.0);
}

TEST(ReadCsv, AcceptsCrlfAndBom) {
  TempDir t;
  const Dataset d = read_csv(t.write("a.csv", "\xEF\xBB\xBFx,y\r\n1,2\r\n3.5,-4e-3\r\n"));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.ys()[1], -4e-3);
}

TEST(ReadCsv, ErrorsNameTheLine) {
  TempDir t;
  const auto expect_line = [&](const std::string& content, const std::string& needle) {
    const auto p = t.write("bad.csv", content);
    try {
      read_csv(p);
      ADD_FAILURE() << "no error for " << content;
    } catch (const InvalidArgument& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line("x,y\n1,2\n1,2,3\n", "bad.csv:3:");
  expect_line("x,y\n1,2\n\n3,4\n", "bad.csv:3:");
  expect_line("x,y\n1\n", "bad.csv:2:");
  expect_line("x,y\n1,nan\n", "bad.csv:2:");
  expect_line("x,y\n1,inf\n", "bad.csv:2:");
  expect_line("a,b\n1,2\n", "bad.csv:1:");
  expect_line("", "bad.csv:1:");
  try {
    read_csv(kData / "bad_value.csv");
    ADD_FAILURE();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("bad_value.csv:4:"), std::string::npos) << e.what();
  }
}

TEST(ToCsv, RoundTripsShortestForm) {
  const Dataset d({0.1, 1.0 / 3.0, -2.0}, {1e-300, 5.0, 0.0});
  EXPECT_EQ(to_csv(d).substr(0, 4), "x,y\n");
  TempDir t;
  const Dataset back = read_csv(t.write("r.csv", to_csv(d)));
  EXPECT_EQ(back.xs(), d.xs());
  EXPECT_EQ(back.ys(), d.ys());
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(2.0), "2");
}

TEST(CliFit, NoiselessStep) {
  TempDir t;
  const auto r = run_cli({"fit", "--input", (kData / "step_noiseless.csv").string(), "--K", "1", "--out", t.str()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const Json rep = Json::parse(slurp(t.path() / "fit_report.json"));
  EXPECT_EQ(rep["boundary_indices"][0], 5);
  EXPECT_EQ(rep["model"]["taus"][0].get<double>(), 5.0);
  EXPECT_EQ(rep["jumps"][0]["value"].get<double>(), 3.0);
  EXPECT_EQ(rep["objective"].get<double>(), 0.0);
  EXPECT_EQ(rep["n"], 12);
}

TEST(CliFit, KnownErrorInference) {
  TempDir t;
  const auto r = run_cli({"fit", "--input", (kData / "step_noiseless.csv").string(), "--K", "1", "--err",
                          "gaussian:0.5", "--level", "0.9", "--out", t.str()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const Json inf = Json::parse(slurp(t.path() / "fit_report.json"))["inference"];
  ASSERT_TRUE(inf["available"].get<bool>());
  // sigma^2 / n_k for each constant segment.
  EXPECT_NEAR(inf["cov_theta1"][0][0].get<double>(), 0.25 / 6.0, 1e-12);
  EXPECT_EQ(inf["intervals"].size(), 2u);
}

TEST(CliFit, ConfigFileAndFlagPrecedence) {
  TempDir t;
  const auto cfg = t.write("c.json", Json{{"input", (kData / "step_noiseless.csv").string()},
                                          {"K", 3},
                                          {"family", "constant"},
                                          {"loss", "absolute"},
                                          {"out", t.str("from_file")}}
                                         .dump());
  const auto r = run_cli({"fit", "--config", cfg.string(), "--K", "1", "--out", t.str("from_flag")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_FALSE(fs::exists(t.path() / "from_file"));
  const Json rep = Json::parse(slurp(t.path() / "from_flag" / "fit_report.json"));
  EXPECT_EQ(rep["K"], 1);
  EXPECT_EQ(rep["loss"]["kind"], "absolute");
}

TEST(CliExitCodes, Validation) {
  TempDir t;
  const auto input = (kData / "step_noiseless.csv").string();
  EXPECT_EQ(run_cli({}).code, kValidationError);
  EXPECT_EQ(run_cli({"fit", "--bogus"}).code, kValidationError);
  EXPECT_EQ(run_cli({"fit", "--input", (kData / "bad_value.csv").string(), "--out", t.str()}).code,
            kValidationError);
  EXPECT_EQ(run_cli({"fit", "--input", input, "--family", "cubic", "--out", t.str()}).code, kValidationError);
  EXPECT_EQ(run_cli({"fit", "--input", input, "--loss", "cauchy", "--out", t.str()}).code, kValidationError);
  EXPECT_EQ(run_cli({"mc", "--experiment", "normality", "--reps", "1", "--out", t.str()}).code, kValidationError);
  EXPECT_EQ(run_cli({"limit", "--rate", "0", "--out", t.str()}).code, kValidationError);
  EXPECT_EQ(run_cli({"limit", "--jump", "0", "--out", t.str()}).code, kValidationError);
  const auto cfg = t.write("c.json", R"({"input": "x.csv", "Kk": 1})");
  const auto r = run_cli({"fit", "--config", cfg.string()});
  EXPECT_EQ(r.code, kValidationError);
  EXPECT_NE(r.err.find("Kk"), std::string::npos) << r.err;
  const auto broken = t.write("broken.json", "{not json");
  EXPECT_EQ(run_cli({"fit", "--config", broken.string()}).code, kValidationError);
}

TEST(CliExitCodes, InfeasibleIdentifiabilityRuntime) {
  TempDir t;
  const auto input = (kData / "step_noiseless.csv").string();
  EXPECT_EQ(run_cli({"fit", "--input", input, "--K", "5", "--out", t.str()}).code, cli::kInfeasible);
  const auto cfg = t.write(
      "zero.json", R"({"design": {"truth": {"family": "constant", "alphas": [[1], [1]], "taus": [0]}}})");
  const auto r = run_cli({"simulate", "--config", cfg.string(), "--out", t.str()});
  EXPECT_EQ(r.code, kIdentifiability);
  EXPECT_NE(r.err.find("identifiab"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"fit", "--input", t.str("missing.csv"), "--out", t.str()}).code, kValidationError);
  // The output path exists as a regular file.
  t.write("occupied", "");
  EXPECT_EQ(run_cli({"limit", "--n-samples", "5", "--out", t.str("occupied")}).code, kRuntimeError);
}

TEST(CliExitCodes, FailureBudget) {
  TempDir t;
  const auto cfg = t.write("fb.json", R"({"experiment": "normality", "n": 8, "reps": 300,
    "design": {"truth": {"family": "constant", "alphas": [[0], [1], [0], [1]], "taus": [-0.5, 0, 0.5]}}})");
  const auto r = run_cli({"mc", "--config", cfg.string(), "--out", t.str()});
  EXPECT_EQ(r.code, kFailureBudget);
  EXPECT_NE(r.err.find("300/300"), std::string::npos) << r.err;
}

TEST(CliSimulate, EmptySampleWritesHeaderOnly) {
  TempDir t;
  ASSERT_EQ(run_cli({"simulate", "--n", "0", "--out", t.str()}).code, kOk);
  EXPECT_EQ(slurp(t.path() / "data.csv"), "x,y\n");
}

TEST(CliSimulate, ErrFlagOverridesFile) {
  TempDir t;
  const auto cfg = t.write("s.json", R"({"n": 50, "design": {"err": {"kind": "laplace", "b": 2}}})");
  ASSERT_EQ(run_cli({"simulate", "--config", cfg.string(), "--err", "degenerate", "--out", t.str()}).code, kOk);
  const Dataset d = read_csv(t.path() / "data.csv");
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.ys()[i], d.xs()[i] <= 0.0 ? 0.0 : 2.0);
  const Json truth = Json::parse(slurp(t.path() / "truth.json"));
  EXPECT_EQ(truth["design"]["err"]["kind"], "degenerate");
}

TEST(CliSimulate, FitRecoversSimulatedTruth) {
  TempDir t;
  ASSERT_EQ(run_cli({"simulate", "--n", "400", "--seed", "3", "--err", "gaussian:0.2", "--out", t.str()}).code, kOk);
  ASSERT_EQ(run_cli({"fit", "--input", t.str("data.csv"), "--K", "1", "--out", t.str()}).code, kOk);
  const Json rep = Json::parse(slurp(t.path() / "fit_report.json"));
  EXPECT_NEAR(rep["model"]["taus"][0].get<double>(), 0.0, 0.05);
  EXPECT_NEAR(rep["jumps"][0]["value"].get<double>(), 2.0, 0.1);
}

// Same seed, different thread counts: every output byte-identical.
TEST(CliDeterminism, OutputsIndependentOfThreads) {
  TempDir t;
  const std::vector<std::vector<std::string>> commands = {
      {"simulate", "--n", "300", "--seed", "5"},
      {"mc", "--experiment", "rate", "--reps", "100", "--n-grid", "100,400", "--seed", "5"},
      {"mc", "--experiment", "normality", "--reps", "300", "--n", "200", "--seed", "5"},
      {"mc", "--experiment", "limitlaw", "--reps", "50", "--n", "200", "--n-samples", "100", "--seed", "5"},
      {"limit", "--n-samples", "500", "--seed", "5"},
  };
  for (std::size_t c = 0; c < commands.size(); ++c) {
    for (const char* threads : {"1", "3"}) {
      auto args = commands[c];
      args.insert(args.end(), {"--threads", threads, "--out", t.str(std::to_string(c) + "_" + threads)});
      ASSERT_EQ(run_cli(args).code, kOk) << commands[c][0];
    }
    const fs::path a = t.path() / (std::to_string(c) + "_1");
    const fs::path b = t.path() / (std::to_string(c) + "_3");
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
      ++files;
      EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
    }
    EXPECT_GT(files, 0u);
  }
}

TEST(CliDeterminism, ThreadsEnvironmentDefault) {
  TempDir t;
  ::setenv("MPHASE_THREADS", "2", 1);
  EXPECT_EQ(run_cli({"limit", "--n-samples", "50", "--out", t.str("a")}).code, kOk);
  ::setenv("MPHASE_THREADS", "two", 1);
  EXPECT_EQ(run_cli({"limit", "--n-samples", "50", "--out", t.str("b")}).code, kValidationError);
  EXPECT_EQ(run_cli({"limit", "--n-samples", "50", "--threads", "1", "--out", t.str("c")}).code, kOk);
  ::unsetenv("MPHASE_THREADS");
  EXPECT_EQ(slurp(t.path() / "a" / "limit_samples.csv"), slurp(t.path() / "c" / "limit_samples.csv"));
}

TEST(CliLimit, ReportFields) {
  TempDir t;
  ASSERT_EQ(run_cli({"limit", "--rate", "2", "--jump", "-1.5", "--n-samples", "400", "--loss", "huber", "--err",
                     "laplace:0.5", "--out", t.str()})
                .code,
            kOk);
  const Json rep = Json::parse(slurp(t.path() / "limit_report.json"));
  EXPECT_EQ(rep["n_samples"], 400);
  EXPECT_EQ(rep["spec"]["rate"].get<double>(), 2.0);
  EXPECT_EQ(rep["spec"]["loss"]["kind"], "huber");
  EXPECT_EQ(rep["censored"], 0);
  const std::string csv = slurp(t.path() / "limit_samples.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "draw,value");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 401);
}

TEST(CliHelp, ExitsCleanly) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("simulate"), std::string::npos);
}
