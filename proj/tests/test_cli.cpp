#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "impact/cli/runner.hpp"
#include "oracles.hpp"

using namespace impact;
using namespace impact::cli;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = IMPACT_SCENARIO_DIR;

fs::path fresh_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("impact_cli_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ScenarioConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

int run_scenario(const std::string& command, const std::string& scenario, const fs::path& out) {
  std::ostringstream log;
  return run_main(command, kScenarios + "/" + scenario, out.string(), log);
}

}  // namespace

TEST(CliConfig, Defaults) {
  const auto c = parse("[scenario]\nname = t\n");
  EXPECT_EQ(c.name, "t");
  EXPECT_EQ(c.driver.kind, "entropic");
  EXPECT_EQ(c.numerics.n_steps, 200);
  EXPECT_EQ(c.y_grid().size(), 161u);
  EXPECT_EQ(c.y_grid().front(), -4.0);
  EXPECT_EQ(c.y_grid().back(), 4.0);
}

TEST(CliConfig, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse("[driver]\nkind = entropic\ngama = 1\n"), ConfigError);
  EXPECT_THROW(parse("[solver]\nx = 1\n"), ConfigError);
}

TEST(CliConfig, RejectsBadValues) {
  EXPECT_THROW(parse("[driver]\nkind = cubic\n"), ConfigError);
  EXPECT_THROW(parse("[driver]\ngamma = abc\n"), ConfigError);
  EXPECT_THROW(parse("[driver]\nkind = entropic\ngamma = -1\n"), ConfigError);
  EXPECT_THROW(parse("[numerics]\ndamping = 0\n"), ConfigError);
  EXPECT_THROW(parse("[numerics]\nn_x = 5\n"), ConfigError);
  EXPECT_THROW(parse("[numerics]\ntopology = full_binary\nn_steps = 40\n"), ConfigError);
  EXPECT_THROW(parse("[market]\npayoff = digital\n"), ConfigError);
  EXPECT_THROW(parse("[numerics]\nmode = sideways\n"), ConfigError);
  EXPECT_THROW(parse("[utility]\nkind = power\n"), ConfigError);
  EXPECT_THROW(parse("not an ini line without equals\n"), ConfigError);
}

TEST(CliConfig, ShippedScenariosParse) {
  for (const auto& e : fs::directory_iterator(kScenarios)) {
    if (e.path().extension() == ".ini") {
      EXPECT_NO_THROW((void)load_config(e.path().string())) << e.path();
    }
  }
}

TEST(CliExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorKind::invalid_argument), kExitConfig);
  EXPECT_EQ(exit_code_for(ErrorKind::mode_conflict), kExitConfig);
  EXPECT_EQ(exit_code_for(ErrorKind::step_size_violation), kExitConfig);
  EXPECT_EQ(exit_code_for(ErrorKind::non_convergence), kExitSolver);
  EXPECT_EQ(exit_code_for(ErrorKind::root_not_found), kExitSolver);
  EXPECT_EQ(exit_code_for(ErrorKind::numeric_overflow), kExitNumeric);
}

TEST(CliExitCodes, MissingConfigAndUnknownCommand) {
  const auto dir = fresh_dir("missing");
  std::ostringstream log;
  EXPECT_EQ(run_main("solve", (dir / "nope.ini").string(), dir.string(), log), kExitConfig);
  EXPECT_EQ(run_main("dance", kScenarios + "/exponential.ini", dir.string(), log), kExitConfig);
}

TEST(CliExitCodes, IterationCapIsSolverFailureWithOutputs) {
  auto cfg = load_config(kScenarios + "/mixed_utility.ini");
  cfg.numerics.max_iter = 2;
  const auto dir = fresh_dir("cap");
  const auto r = run("solve", cfg, dir);
  EXPECT_EQ(r.exit_code, kExitSolver);
  const auto rep = read_json(dir / "solve.json");
  EXPECT_TRUE(rep["flags"]["non_convergence"].get<bool>());
  EXPECT_TRUE(fs::exists(dir / "solve.csv"));
}

TEST(CliExitCodes, StepGuardIsConfigurationError) {
  auto cfg = parse("[driver]\nkind = entropic\ngamma = 5\n[numerics]\nn_steps = 4\n");
  const auto dir = fresh_dir("guard");
  const auto r = run("price", cfg, dir);
  EXPECT_EQ(r.exit_code, kExitConfig);
  EXPECT_EQ(read_json(dir / "price.json")["error"]["kind"], "step-size-violation");
  EXPECT_FALSE(fs::exists(dir / "price.csv"));
}

TEST(CliExitCodes, InvalidThreadCount) {
  ::setenv("THREADS", "zero", 1);
  const auto dir = fresh_dir("threads");
  const auto r = run("gexp", parse("[numerics]\nn_steps = 10\n"), dir);
  ::unsetenv("THREADS");
  EXPECT_EQ(r.exit_code, kExitConfig);
}

TEST(CliCsv, Formatting) {
  EXPECT_EQ(CsvTable::format(-0.0), "0");
  EXPECT_EQ(CsvTable::format(0.1), "0.1");
  EXPECT_EQ(CsvTable::format(1.0 / 3.0), "0.333333333333333");
  CsvTable t({"a"});
  t.row();
  EXPECT_THROW(t.num(std::nan("")), Error);
}

TEST(CliCommands, HeadersMatchSchema) {
  const auto dir = fresh_dir("headers");
  ASSERT_EQ(run_scenario("gexp", "entropic_gexp.ini", dir), kExitOk);
  ASSERT_EQ(run_scenario("price", "zero_driver_price.ini", dir), kExitOk);
  ASSERT_EQ(run_scenario("solve", "no_trade_quadratic.ini", dir), kExitOk);
  ASSERT_EQ(run_scenario("closedform", "no_trade_quadratic.ini", dir), kExitOk);
  ASSERT_EQ(run_scenario("value", "no_trade_quadratic.ini", dir), kExitOk);
  ASSERT_EQ(run_scenario("verify", "no_trade_quadratic.ini", dir), kExitOk);
  for (const auto& cmd : commands()) {
    const auto rows = read_csv(dir / (cmd + ".csv"));
    ASSERT_FALSE(rows.empty()) << cmd;
    EXPECT_EQ(rows.front(), csv_header(cmd)) << cmd;
    for (std::size_t i = 1; i < rows.size(); ++i) ASSERT_EQ(rows[i].size(), rows.front().size()) << cmd << " row " << i;
    const auto rep = read_json(dir / (cmd + ".json"));
    EXPECT_EQ(rep["command"], cmd);
    EXPECT_EQ(rep["exit_code"], 0);
    EXPECT_TRUE(rep.contains("timing_seconds"));
  }
}

TEST(CliCommands, GexpEntropic) {
  const auto dir = fresh_dir("gexp");
  ASSERT_EQ(run_scenario("gexp", "entropic_gexp.ini", dir), kExitOk);
  const auto res = read_json(dir / "gexp.json")["results"];
  EXPECT_NEAR(res["pi0"].get<double>(), -0.5, 0.01);
  EXPECT_LE(res["entropic_max_gap"].get<double>(), 0.01);
  // terminal rows leave z blank
  const auto rows = read_csv(dir / "gexp.csv");
  EXPECT_EQ(rows.back()[5], "");
  EXPECT_EQ(rows.back()[0], "200");
}

TEST(CliCommands, ZeroDriverPriceIsLinear) {
  const auto dir = fresh_dir("price");
  ASSERT_EQ(run_scenario("price", "zero_driver_price.ini", dir), kExitOk);
  const double es = oracle::walk_expectation(1.0, 50, [](double w) { return 2 * w + 1; });
  const auto rows = read_csv(dir / "price.csv");
  ASSERT_EQ(rows.size(), 1u + 9 * 3);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double y = std::stod(rows[i][2]);
    EXPECT_NEAR(std::stod(rows[i][3]), y * es, 1e-12);
  }
}

TEST(CliCommands, SolveExponential) {
  const auto dir = fresh_dir("solve");
  ASSERT_EQ(run_scenario("solve", "exponential.ini", dir), kExitOk);
  const auto rep = read_json(dir / "solve.json");
  const auto fb = rep["results"]["fbsde"];
  EXPECT_NEAR(fb["z_star"].get<double>(), 0.1, 1e-12);
  EXPECT_NEAR(fb["zeta0"].get<double>(), 0.09 / 6.0, 1e-3);
  EXPECT_TRUE(fb["converged"].get<bool>());
}

TEST(CliCommands, VerifyNoTradeRoutesAgree) {
  const auto dir = fresh_dir("verify_nt");
  ASSERT_EQ(run_scenario("verify", "no_trade_quadratic.ini", dir), kExitOk);
  const auto res = read_json(dir / "verify.json")["results"];
  for (const auto& [name, route] : res["routes"].items()) EXPECT_TRUE(route["x_identically_x0"].get<bool>()) << name;
  // lattice routes agree exactly; the surface route carries the V_x interpolation error in zeta
  for (const auto& g : res["route_gaps"]) {
    const bool surface = g["pair"].get<std::string>().find("surface") != std::string::npos;
    EXPECT_LE(g["max_gap"].get<double>(), surface ? 1e-5 : 0.0) << g["pair"];
  }
  const auto rows = read_csv(dir / "verify.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!rows[i][6].empty()) {
      EXPECT_EQ(std::stod(rows[i][6]), 0.0);
    }
  }
}

TEST(CliCommands, VerifyExponentialRoutesAgree) {
  const auto dir = fresh_dir("verify_exp");
  ASSERT_EQ(run_scenario("verify", "exponential.ini", dir), kExitOk);
  const auto rep = read_json(dir / "verify.json");
  for (const auto& g : rep["results"]["route_gaps"]) EXPECT_LE(g["max_gap"].get<double>(), 1e-3) << g["pair"];
  EXPECT_LE(rep["results"]["perturbation"]["max_gain"].get<double>(), 1e-6);
  for (const auto& [k, v] : rep["flags"].items()) EXPECT_FALSE(v.get<bool>()) << k;
}

TEST(CliCommands, DeterministicOutput) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  ASSERT_EQ(run_scenario("verify", "homogeneous_band.ini", a), kExitOk);
  ASSERT_EQ(run_scenario("verify", "homogeneous_band.ini", b), kExitOk);
  EXPECT_EQ(slurp(a / "verify.csv"), slurp(b / "verify.csv"));
}

TEST(CliCommands, OutputsCanBeSwitchedOff) {
  auto cfg = parse("[numerics]\nn_steps = 10\n[outputs]\ncsv = false\n");
  const auto dir = fresh_dir("nocsv");
  EXPECT_EQ(run("gexp", cfg, dir).exit_code, kExitOk);
  EXPECT_FALSE(fs::exists(dir / "gexp.csv"));
  EXPECT_TRUE(fs::exists(dir / "gexp.json"));
}
