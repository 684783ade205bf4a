#include "hardylab/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace hardylab;
namespace cli = hardylab::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* root = std::getenv("HARDYLAB_TEST_TMP");
  fs::path p = fs::path(root && *root ? root : fs::temp_directory_path().string()) / name;
  fs::remove_all(p);
  return p;
}

cli::Overrides out_to(const fs::path& p) {
  cli::Overrides ov;
  ov.out = p.string();
  return ov;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::size_t lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

} // namespace

TEST(Config, UniformWeightsByDefault) {
  const auto rc = cli::validate_config(R"({"poles": [[0,0,0],[1,0,0]], "tasks": []})", std::nullopt);
  ASSERT_EQ(rc.poles->size(), 2);
  EXPECT_DOUBLE_EQ(rc.poles->weight(0), 0.5);
  EXPECT_DOUBLE_EQ(rc.poles->weight(1), 0.5);
  EXPECT_EQ(rc.seed, cli::kDefaultSeed);
  const auto w = cli::validate_config(R"({"poles": [[0,0,0],[1,0,0]], "weights": [0.25, 0.75], "tasks": []})",
                                      std::nullopt);
  EXPECT_DOUBLE_EQ(w.poles->weight(1), 0.75);
}

TEST(Config, Rejections) {
  try {
    cli::validate_config(R"({"poles": [[0,0,0],[0,0,0]]})", cli::TaskKind::Potential);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate configuration"), std::string::npos);
  }
  EXPECT_THROW(cli::validate_config("{not json", cli::TaskKind::Potential), Error);
  EXPECT_THROW(cli::validate_config(R"({"poles": []})", cli::TaskKind::Potential), Error);
  EXPECT_THROW(cli::validate_config(R"({"poles": [[0,0,0],[1,0,0]], "weights": [0.2, 0.2]})",
                                    cli::TaskKind::Potential),
               Error);
  EXPECT_THROW(cli::validate_config(R"({"poles": [[0,0,0]], "tol": 2})", cli::TaskKind::Potential), Error);
  EXPECT_THROW(cli::validate_config(R"({"poles": [[0,0,0]], "tasks": [{"task": "nope"}]})", std::nullopt),
               Error);
  EXPECT_THROW(cli::validate_config(R"({"poles": [[0,0,0]], "tasks": [{"ids": ["T4.1"]}]})",
                                    cli::TaskKind::Audit),
               Error);
  EXPECT_THROW(cli::validate_config(R"({"poles": [[0,0,0]], "tasks": [{"variant": "max", "schedule": [0.1, 0.2]}]})",
                                    cli::TaskKind::Sharpness),
               Error);
}

TEST(Config, GeometricMeanWarning) {
  const auto rc = cli::validate_config(
      R"({"poles": [[0,0,0],[1,0,0]], "tasks": [{"potential": {"family": "power_mean", "lambda": 0}}]})",
      cli::TaskKind::Potential);
  ASSERT_EQ(rc.warnings.size(), 1u);
  const auto& t = std::get<cli::PotentialTask>(rc.tasks.at(0).params);
  EXPECT_TRUE(std::holds_alternative<family::GeometricMean>(t.family));
}

TEST(Config, C23ExpandsOverLambdas) {
  const auto rc = cli::validate_config(
      R"({"poles": [[0,0,0],[1,0,0]], "tasks": [{"ids": ["C2.3", "CP"], "random_bumps": 2}]})",
      cli::TaskKind::Audit);
  const auto& t = std::get<cli::AuditTask>(rc.tasks.at(0).params);
  ASSERT_EQ(t.cases.size(), 5u);
  EXPECT_EQ(t.cases[0].label, "C2.3[lambda=-1]");
  EXPECT_EQ(t.cases[3].label, "C2.3[lambda=2]");
  EXPECT_EQ(t.fields.size(), 2u);
}

TEST(Run, EmptyTaskListPasses) {
  const fs::path out = scratch("empty");
  const auto rc = cli::validate_config(R"({"poles": [[0,0,0]], "tasks": []})", std::nullopt, out_to(out));
  const auto m = cli::run(rc);
  EXPECT_EQ(m.at("summary").at("executed").get<int>(), 0);
  EXPECT_TRUE(m.at("summary").at("pass").get<bool>());
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  EXPECT_TRUE(ends_with(cli::emit_report(m), "PASS\n"));
}

TEST(Run, SharpnessWritesOneRowPerEps) {
  const fs::path out = scratch("sharpness");
  const auto rc = cli::validate_config(
      R"({"poles": [[0,0,0],[1,0,0]], "tol": 1e-5,
          "tasks": [{"variant": "min", "schedule": [0.2, 0.1, 0.05, 0.02, 0.01]}]})",
      cli::TaskKind::Sharpness, out_to(out));
  const auto m = cli::run(rc);
  const std::string csv = slurp(out / "sharpness.csv");
  EXPECT_EQ(lines(csv), 6u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "eps,quotient,numerator,denominator,fit_c,fit_limit,fit_r_squared");
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest.at("tasks").at(0).at("files").at(0), "sharpness.csv");
  EXPECT_EQ(manifest.at("tool"), "hardylab");
  EXPECT_EQ(manifest.at("tasks").at(0).at("pass").get<bool>(), m.at("summary").at("pass").get<bool>());
}

TEST(Run, AuditRowsAndFailureReport) {
  const fs::path out = scratch("audit");
  const auto rc = cli::validate_config(
      R"({"poles": [[0,0,0],[1,0,0]], "tol": 1e-6,
          "tasks": [{"ids": ["T2.1", "CP"], "fields": [{"kind": "minimizer_max", "eps": 0.01}]},
                    {"ids": ["T2.2"], "random_bumps": 2}]})",
      cli::TaskKind::Audit, out_to(out));
  const auto m = cli::run(rc);
  EXPECT_EQ(lines(slurp(out / "audit_0.csv")), 1u + 2u);
  EXPECT_EQ(lines(slurp(out / "audit_1.csv")), 1u + 2u);
  EXPECT_FALSE(m.at("summary").at("pass").get<bool>());
  EXPECT_FALSE(m.at("tasks").at(0).at("pass").get<bool>());
  EXPECT_TRUE(m.at("tasks").at(1).at("pass").get<bool>());
  const std::string report = cli::emit_report(m);
  EXPECT_NE(report.find("T2.1 on field0: margin -"), std::string::npos) << report;
  EXPECT_TRUE(ends_with(report, "1/2 tasks passed\nFAIL\n"));
}

TEST(Run, EigenReportShowsTheBracket) {
  const fs::path out = scratch("eigen");
  const auto rc = cli::validate_config(
      R"({"poles": [[0.375,0.5,0.5],[0.625,0.5,0.5]],
          "tasks": [{"mode": "best_constant", "h_list": [0.05, 0.04]},
                    {"mode": "laplacian", "h_list": [0.0625, 0.03125]}]})",
      cli::TaskKind::Eigen, out_to(out));
  const auto m = cli::run(rc);
  EXPECT_TRUE(fs::exists(out / "eigen_0.json"));
  EXPECT_TRUE(fs::exists(out / "eigen_1.csv"));
  const std::string report = cli::emit_report(m);
  EXPECT_NE(report.find("versus (0.125, 0.25]"), std::string::npos) << report;
  EXPECT_TRUE(m.at("tasks").at(1).at("pass").get<bool>());
}

TEST(Run, RerunIsByteIdentical) {
  const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
  const std::string cfg = R"({"poles": [[0,0,0],[1,0,0]], "tol": 1e-5, "seed": 7,
      "tasks": [{"task": "audit", "ids": ["C2.4"], "random_bumps": 3},
                {"task": "potential", "samples": 20}]})";
  cli::run(cli::validate_config(cfg, std::nullopt, out_to(a)));
  cli::run(cli::validate_config(cfg, std::nullopt, out_to(b)));
  EXPECT_EQ(slurp(a / "audit.csv"), slurp(b / "audit.csv"));
  EXPECT_EQ(slurp(a / "potential.csv"), slurp(b / "potential.csv"));
  cli::Overrides ov = out_to(b);
  ov.seed = 8;
  cli::run(cli::validate_config(cfg, std::nullopt, ov));
  EXPECT_NE(slurp(a / "audit.csv"), slurp(b / "audit.csv"));
}

TEST(Run, OutputDirectoryFromEnvironment) {
  const fs::path out = scratch("from_env");
  ::setenv("HARDYLAB_OUT", out.c_str(), 1);
  const auto rc = cli::validate_config(R"({"poles": [[0,0,0]], "tasks": []})", std::nullopt, out_to(scratch("ignored")));
  ::unsetenv("HARDYLAB_OUT");
  EXPECT_EQ(rc.out, out);
  cli::run(rc);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST(Csv, NumbersRoundTrip) {
  EXPECT_EQ(cli::fmt(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(cli::fmt(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(cli::fmt(true), "true");
  EXPECT_THROW(cli::parse_task("bogus"), Error);
  EXPECT_EQ(cli::parse_task("heisenberg"), cli::TaskKind::Heisenberg);
}
