#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "fdtlab/cli/config.hpp"
#include "fdtlab/cli/report.hpp"
#include "fdtlab/cli/run.hpp"
#include "fdtlab/rng.hpp"

namespace fs = std::filesystem;
using namespace fdtlab;
using namespace fdtlab::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string config_error(const json& doc) {
  try {
    load_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

/// Runs the built CLI on a document in a scratch directory.
class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    const char* cli = std::getenv("FDTLAB_CLI");
    cli_ = cli ? cli : FDTLAB_CLI_PATH;
    ASSERT_TRUE(fs::exists(cli_)) << cli_;
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("fdtlab_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    if (!dir_.empty()) fs::remove_all(dir_, ec);
  }

  int run(const json& doc, const std::string& prefix, const std::string& extra = "") {
    const fs::path cfg = dir_ / (prefix + ".config.json");
    std::ofstream(cfg) << doc.dump();
    const std::string cmd = cli_ + " --config " + cfg.string() + " --output " + (dir_ / prefix).string() + " " +
                            extra + " >" + (dir_ / (prefix + ".out")).string() + " 2>" +
                            (dir_ / (prefix + ".err")).string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string err(const std::string& prefix) { return slurp(dir_ / (prefix + ".err")); }

  std::string cli_;
  fs::path dir_;
};

json small_simulate() {
  return json{{"command", "simulate"},
              {"master_seed", 17},
              {"system", {{"preset", "scalar_cubic"}}},
              {"scheme", {{"dt", 0.01}}},
              {"ensemble", {{"burn_in", 1.0}, {"n_samples", 200}, {"thinning", 0.1}, {"n_streams", 4}}}};
}

}  // namespace

TEST(Config, MinimalDocumentGetsDefaults) {
  const auto cfg = load_config(json{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}});
  EXPECT_EQ(cfg.command, Command::check);
  EXPECT_EQ(cfg.master_seed, 1u);
  EXPECT_EQ(cfg.observable, "x1");
  EXPECT_EQ(cfg.scheme.scheme, Scheme::tamed_euler);
  EXPECT_EQ(cfg.resolved["scheme"]["method"], "tamed-euler");
  EXPECT_DOUBLE_EQ(cfg.resolved["scheme"]["dt"].get<double>(), cfg.scheme.dt);
  EXPECT_EQ(cfg.resolved["check"]["n_directions"], 64);
  EXPECT_EQ(cfg.resolved["system"]["sigma"], 1.0);
}

TEST(Config, UnknownKeySuggestsNearest) {
  const std::string msg = config_error(
      json{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}, {"schme", {{"dt", 0.01}}}});
  EXPECT_NE(msg.find("unknown key 'schme'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("did you mean 'scheme'"), std::string::npos) << msg;

  const std::string nested = config_error(
      json{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}, {"scheme", {{"dtt", 0.01}}}});
  EXPECT_NE(nested.find("scheme.dtt"), std::string::npos) << nested;
  EXPECT_NE(nested.find("'dt'"), std::string::npos) << nested;
}

TEST(Config, BadTestbedRowIsNamed) {
  const std::string msg = config_error(json{{"command", "testbed"},
                                            {"testbed",
                                             {{"P0", {{0.5, 0.5}, {0.5, 0.49}}},
                                              {"dP", {{0.0, 0.0}, {0.0, 0.0}}}}}});
  EXPECT_NE(msg.find("testbed.P0.row[1]"), std::string::npos) << msg;
}

TEST(Config, RejectsBadValuesWithPath) {
  EXPECT_NE(config_error(json{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}, {"scheme", {{"dt", -1.0}}}})
                .find("dt"),
            std::string::npos);
  EXPECT_NE(config_error(json{{"command", "chek"}}).find("did you mean 'check'"), std::string::npos);
  EXPECT_NE(config_error(json{{"command", "response"}, {"system", {{"preset", "scalar_ou"}}}}).find("direction"),
            std::string::npos);
  EXPECT_NE(config_error(json{{"command", "response"},
                              {"system", {{"preset", "scalar_ou"}}},
                              {"direction", {{"forcing", {1.0}}, {"sigma", {{"row", 0}}}}}})
                .find("exactly one"),
            std::string::npos);
  EXPECT_NE(config_error(json{{"command", "simulate"}, {"system", {{"preset", "triad"}, {"b", {1.0, 2.0}}}}})
                .find("system.b"),
            std::string::npos);
}

TEST(Config, ExplicitSystemMatchesPreset) {
  // x - x^3 written out as terms.
  const json doc{{"command", "check"},
                 {"system",
                  {{"sigma", {{1.0}}},
                   {"terms",
                    {{{"out", 0}, {"monomial", {0}}, {"coeff", 1.0}},
                     {{"out", 0}, {"monomial", {0, 0, 0}}, {"coeff", -1.0}}}}}}};
  const auto cfg = load_config(doc);
  const auto preset = presets::scalar_cubic(1.0);
  EXPECT_EQ(cfg.system->system.degree(), 3u);
  for (double x : {-1.3, 0.2, 2.5}) {
    Eigen::VectorXd v(1);
    v << x;
    EXPECT_DOUBLE_EQ(eval_drift(cfg.system->system, v)[0], eval_drift(preset, v)[0]);
  }
  EXPECT_FALSE(cfg.system->linear_drift.has_value());
}

TEST(Report, CsvRoundTripIsExact) {
  RngStream rng(99, 0);
  CsvTable t({"a", "b", "c"});
  std::vector<std::vector<double>> rows;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const double u = rng.normal(i, 0), v = rng.normal(i, 1);
    rows.push_back({u * 1e-300, v * 1e300, u / 3.0});
    t.add_row(rows.back());
  }
  rows.push_back({0.1, -0.0, 5e-324});
  t.add_row(rows.back());
  std::istringstream in(t.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "a,b,c");
  for (const auto& r : rows) {
    ASSERT_TRUE(std::getline(in, line));
    std::istringstream ls(line);
    std::string cell;
    for (double expected : r) {
      ASSERT_TRUE(std::getline(ls, cell, ','));
      const double back = std::strtod(cell.c_str(), nullptr);
      EXPECT_EQ(std::memcmp(&back, &expected, sizeof(double)), 0) << cell;
    }
  }
  EXPECT_EQ(t.str().find('\r'), std::string::npos);
  EXPECT_EQ(t.str().back(), '\n');
}

TEST(Report, EmptyResultsAreValidJson) {
  auto doc = small_simulate();
  doc["ensemble"]["n_samples"] = 0;
  const auto cfg = load_config(doc);
  const auto res = run(cfg, "/nonexistent/prefix");
  EXPECT_EQ(res.exit_code, 0);
  const json back = json::parse(report_text(res.report));
  ASSERT_TRUE(back["results"].is_array());
  EXPECT_TRUE(back["results"].empty());
  EXPECT_EQ(back["provenance"]["seed"], 17);
  EXPECT_EQ(back["provenance"]["version"], version);
}

TEST(Report, KeysAreSorted) {
  const auto res = run(load_config(json{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}}), "p");
  const std::string text = report_text(res.report);
  EXPECT_LT(text.find("\"files\""), text.find("\"provenance\""));
  EXPECT_LT(text.find("\"provenance\""), text.find("\"results\""));
}

TEST(Report, CompareCarriesZMatrix) {
  const json doc{{"command", "compare"},
                 {"master_seed", 4},
                 {"system", {{"preset", "scalar_ou"}, {"gamma", 2.0}}},
                 {"direction", {{"forcing", {1.0}}}},
                 {"scheme", {{"dt", 0.01}}},
                 {"response",
                  {{"methods", {"tangent", "green-kubo", "finite-difference"}},
                   {"n_paths", 400},
                   {"horizon", 4.0},
                   {"start", {{"burn_in", 2.0}, {"n_streams", 4}}}}},
                 {"fd", {{"ensemble", {{"burn_in", 2.0}, {"n_samples", 2000}, {"thinning", 0.2}, {"n_streams", 8}}}}}};
  const auto res = run(load_config(doc), "p");
  const json& c = res.report["comparison"];
  ASSERT_EQ(c["z"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(c["z"][i].size(), 3u);
    EXPECT_EQ(c["z"][i][i], 0.0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(c["z"][i][j].get<double>(), -c["z"][j][i].get<double>());
  }
  // Independent recomputation from the reported estimates.
  const json& r = res.report["results"];
  const double z01 = (r[0]["value"].get<double>() - r[1]["value"].get<double>()) /
                     std::hypot(r[0]["stderr"].get<double>(), r[1]["stderr"].get<double>());
  EXPECT_NEAR(c["z"][0][1].get<double>(), z01, 1e-12 * (1.0 + std::abs(z01)));
  EXPECT_EQ(c["methods"][2], "finite-difference");
}

TEST_F(CliRun, CheckCubicExitsZero) {
  EXPECT_EQ(run(json{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}}, "ok"), 0) << err("ok");
  const json rep = json::parse(slurp(dir_ / "ok.json"));
  EXPECT_TRUE(rep["verdict"]["coercivity"].get<bool>());
  EXPECT_TRUE(rep["verdict"]["hypoellipticity"].get<bool>());
}

TEST_F(CliRun, AntiDissipativeExitsTwo) {
  EXPECT_EQ(run(json{{"command", "check"}, {"system", {{"preset", "anti_dissipative_cubic"}}}}, "bad"), 2);
  const json rep = json::parse(slurp(dir_ / "bad.json"));
  EXPECT_FALSE(rep["verdict"]["coercivity"].get<bool>());
}

TEST_F(CliRun, ConfigErrorExitsFourAndWritesNothing) {
  EXPECT_EQ(run(json{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}, {"schme", 1}}, "cfg"), 4);
  EXPECT_NE(err("cfg").find("did you mean 'scheme'"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "cfg.json"));
}

TEST_F(CliRun, UnwritablePathExitsFour) {
  const json doc{{"command", "check"}, {"system", {{"preset", "scalar_cubic"}}}};
  std::ofstream(dir_ / "c.json") << doc.dump();
  const std::string cmd = cli_ + " --config " + (dir_ / "c.json").string() + " --output " +
                          (dir_ / "missing_dir" / "x").string() + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 4);
}

TEST_F(CliRun, DivergenceExitsThreeAndRemovesArtifacts) {
  // Plain Euler on a stiff cubic blows up quickly from the default start.
  json doc = small_simulate();
  doc["system"] = {{"preset", "scalar_cubic"}, {"sigma", 30.0}};
  doc["scheme"] = {{"dt", 0.4}, {"method", "euler"}};
  EXPECT_EQ(run(doc, "div"), 3) << err("div");
  EXPECT_NE(err("div").find("last finite state"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "div.json"));
  EXPECT_FALSE(fs::exists(dir_ / "div_ensemble.csv"));
}

TEST_F(CliRun, SameConfigGivesIdenticalBytes) {
  const json doc = small_simulate();
  ASSERT_EQ(run(doc, "a"), 0) << err("a");
  ASSERT_EQ(run(doc, "b", "--threads 3"), 0) << err("b");
  const std::string a = slurp(dir_ / "a_ensemble.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b_ensemble.csv"));
  EXPECT_EQ(a.substr(0, 10), "stream,x1\n");
  // Everything but the output path and run section is hashable.
  json ja = json::parse(slurp(dir_ / "a.json")), jb = json::parse(slurp(dir_ / "b.json"));
  ja["provenance"]["config"].erase("output");
  jb["provenance"]["config"].erase("output");
  ja.erase("run");
  jb.erase("run");
  EXPECT_EQ(ja.dump(), jb.dump());
}

TEST_F(CliRun, SeedFlagOverridesDocument) {
  ASSERT_EQ(run(small_simulate(), "s", "--seed 5"), 0) << err("s");
  const json rep = json::parse(slurp(dir_ / "s.json"));
  EXPECT_EQ(rep["provenance"]["seed"], 5);
  EXPECT_EQ(rep["provenance"]["config"]["master_seed"], 5);
}

TEST_F(CliRun, ResponseCurveCsvLayout) {
  const json doc{{"command", "response"},
                 {"system", {{"preset", "scalar_ou"}, {"gamma", 2.0}}},
                 {"direction", {{"forcing", {1.0}}}},
                 {"scheme", {{"dt", 0.01}}},
                 {"response", {{"n_paths", 200}, {"horizon", 2.0}, {"start", {{"burn_in", 2.0}, {"n_streams", 4}}}}}};
  ASSERT_EQ(run(doc, "r"), 0) << err("r");
  std::istringstream in(slurp(dir_ / "r_tangent.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,R,stderr");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 41u);
}
