#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lgchaos/harness.hpp"

using namespace lgchaos;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lgchaos_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LGCHAOS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ConfigError config_error(const json& j, const std::string& method = {}) {
  try {
    parse_config(j, method);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "config accepted: " << j.dump();
  return ConfigError("", "");
}

json ou_problem() {
  return {{"potential", "quadratic"}, {"beta", 1.0}, {"u0", 1.0}, {"epsilon", 0.1}, {"t_final", 1.0}};
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const auto c = parse_config(json{{"method", "mc"}});
  EXPECT_EQ(c.method, "mc");
  EXPECT_EQ(c.potential, "zero");
  EXPECT_EQ(c.dimension, 1u);
  EXPECT_EQ(c.beta, 1.0);
  EXPECT_EQ(c.u0, std::vector<double>({0.0}));
  EXPECT_EQ(c.epsilon, 0.1);
  EXPECT_EQ(c.t_final, 1.0);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.mc.n_particles, 100'000u);
  EXPECT_EQ(c.mc.dt, 1e-3);
  EXPECT_TRUE(c.mc.regularized);
  EXPECT_EQ(c.chaos.p, 4u);
  EXPECT_EQ(c.chaos.nodes(), 12u);
  EXPECT_EQ(c.compare.tol_det, 1e-3);
  EXPECT_EQ(c.compare.se_multiplier, 3.0);
  ASSERT_EQ(c.observables.size(), 2u);
  EXPECT_EQ(c.observables[1].label(), "x0^2");
}

TEST(Config, SemanticErrorsNameTheKey) {
  const auto beta = config_error(json{{"beta", 0.0}});
  EXPECT_EQ(beta.key(), "beta");
  EXPECT_NE(std::string(beta.what()).find("beta must be nonzero"), std::string::npos);

  const auto typo = config_error(json{{"betta", 1.0}});
  EXPECT_EQ(typo.key(), "betta");
  EXPECT_NE(std::string(typo.what()).find("did you mean 'beta'"), std::string::npos);

  const auto nested = config_error(json{{"chaos", {{"dtt", 0.1}}}});
  EXPECT_EQ(nested.key(), "chaos.dtt");
  EXPECT_NE(std::string(nested.what()).find("'dt'"), std::string::npos);

  EXPECT_EQ(config_error(json{{"epsilon", 0.0}}).key(), "epsilon");
  EXPECT_EQ(config_error(json{{"potential", "cubic"}}).key(), "potential");
  EXPECT_EQ(config_error(json{{"chaos", {{"p", 4}, {"q", 3}}}}).key(), "chaos");
  EXPECT_EQ(config_error(json{{"mc", {{"n_particles", 0}}}}).key(), "mc");
  EXPECT_EQ(config_error(json{{"seed", -3}}).key(), "seed");
  EXPECT_EQ(config_error(json{{"observables", {"x^9"}}}).key(), "observables[0]");
  EXPECT_EQ(config_error(json{{"compare", {{"methods", {"chaos"}}}}}).key(), "compare.methods");
  EXPECT_EQ(config_error(json{{"wiener", {{"tol", 0.0}}}}).key(), "wiener.tol");
  EXPECT_EQ(config_error(json{{"method", "fp"}}, "chaos").key(), "method");
  EXPECT_EQ(config_error(json{{"beta", "one"}}).key(), "beta");
  EXPECT_THROW(parse_config(json{{"potential", "tabulated:/nonexistent.csv"}}), IoError);
}

TEST(Config, ParseErrorLineAndMissingFile) {
  const auto dir = scratch("parse");
  const auto bad = write_file(dir / "bad.json", "{\n  \"beta\": 1.0,\n  \"u0\": [0.0,\n}\n");
  try {
    load_config(bad);
    FAIL() << "expected parse error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
}

TEST(Config, EchoRoundTrips) {
  json j = ou_problem();
  j["method"] = "compare";
  j["observables"] = {"x", "x^3", {{"kind", "tanh"}, {"scale", 2.0}},
                      {{"kind", "polynomial"}, {"coefficients", {1.0, 0.0, -2.0}}}};
  j["fp"] = {{"cells", 512}};
  const auto c = parse_config(j);
  const json echo = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_config(echo)), echo);
  EXPECT_FALSE(echo["fp"].contains("x_min"));  // automatic grid is not frozen
  j["fp"] = {{"x_min", -3.0}, {"x_max", 4.0}};
  EXPECT_EQ(config_to_json(parse_config(j))["fp"]["x_max"], 4.0);
  EXPECT_EQ(problem_hash(parse_config(echo)), problem_hash(c));
  // a manifest is accepted as a config
  EXPECT_EQ(config_to_json(parse_config(json{{"manifest_version", 1}, {"config", echo}})), echo);
}

TEST(Run, ChaosArtifacts) {
  json j = ou_problem();
  j["chaos"] = {{"p", 2}, {"dt", 1e-2}, {"output_stride", 50}};
  const auto dir = scratch("chaos");
  const auto out = run(parse_config(j, "chaos"), dir);
  EXPECT_EQ(out.exit_code, 0);
  const auto rows = read_csv(dir / "coefficients.csv");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], std::vector<std::string>({"t", "i", "alpha", "m"}));
  EXPECT_EQ(rows.size(), 1u + 3u * 3u);  // states at t = 0, 0.5, 1 times three coefficients
  EXPECT_EQ(rows.back()[0], "1");
  EXPECT_NEAR(std::stod(rows[rows.size() - 3][3]), std::exp(-1.0), 1e-6);
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["method"], "chaos");
  EXPECT_EQ(manifest["config"]["chaos"]["q"], 8);
  EXPECT_TRUE(manifest.contains("wall_time_seconds"));
  EXPECT_TRUE(manifest["error"].is_null());
  EXPECT_LT(manifest["results"]["quadrature_consistency"]["max_coeff_diff"].get<double>(), 1e-12);
}

TEST(Run, DegenerateMapKeepsPartialTrajectory) {
  const json j = {{"potential", "quadratic"}, {"potential_params", {{"k", 5.0}}},
                  {"beta", 0.1},              {"epsilon", 1.0},
                  {"t_final", 1.0},           {"chaos", {{"p", 3}, {"jac_floor", 0.5}, {"output_stride", 10}}}};
  const auto dir = scratch("degenerate");
  const auto out = run(parse_config(j, "chaos"), dir);
  EXPECT_EQ(out.exit_code, exit_numerical);
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["status"], "error");
  EXPECT_EQ(manifest["error"]["kind"], "map_degeneracy");
  EXPECT_LE(manifest["error"]["determinant"].get<double>(), 0.5);
  EXPECT_GT(manifest["error"]["t"].get<double>(), 0.0);
  const auto rows = read_csv(dir / "coefficients.csv");
  EXPECT_GT(rows.size(), 1u + 4u);
  EXPECT_LT(std::stod(rows.back()[0]), 1.0);
}

TEST(Compare, OrnsteinUhlenbeckAgreement) {
  json j = ou_problem();
  j["method"] = "compare";
  j["seed"] = 17;
  j["chaos"] = {{"p", 3}};
  j["mc"] = {{"n_particles", 20000}, {"dt", 2e-3}};
  j["fp"] = {{"cells", 2048}, {"dt", 1e-4}, {"theta", 0.5}};
  const auto dir = scratch("compare");
  const auto out = run(parse_config(j), dir);
  ASSERT_EQ(out.exit_code, 0);
  const auto& rep = *out.comparison;
  EXPECT_TRUE(rep.all_pass());
  EXPECT_EQ(rep.rows.size(), 6u);
  EXPECT_EQ(rep.discrepancies.size(), 6u);
  EXPECT_NEAR(rep.find("x0", "chaos")->value, std::exp(-1.0), 1e-8);
  const auto rows = read_csv(dir / "comparison.csv");
  EXPECT_EQ(rows[0], std::vector<std::string>({"observable", "method", "value", "uncertainty", "status"}));
  const auto disc = read_csv(dir / "discrepancies.csv");
  EXPECT_EQ(disc[0], std::vector<std::string>({"observable", "pair", "abs_diff", "tolerance", "pass"}));
  for (std::size_t r = 1; r < disc.size(); ++r) EXPECT_EQ(disc[r][4], "true");
}

TEST(Compare, FreeDiffusionDeterministicPair) {
  json j = {{"potential", "zero"}, {"u0", 0.0}, {"epsilon", 0.1}, {"t_final", 0.5}, {"observables", {"x^2"}}};
  j["compare"] = {{"methods", {"chaos", "fp"}}, {"tol_det", 1e-6}};
  j["chaos"] = {{"p", 3}, {"q", 10}};
  j["fp"] = {{"x_min", -6.0}, {"x_max", 6.0}, {"cells", 2048}};
  const auto rep = compare_methods(parse_config(j, "compare"));
  ASSERT_EQ(rep.discrepancies.size(), 1u);
  EXPECT_EQ(rep.discrepancies[0].pair, "chaos-fp");
  EXPECT_TRUE(rep.discrepancies[0].pass) << rep.discrepancies[0].abs_diff;
  EXPECT_NEAR(rep.find("x0^2", "chaos")->value, 0.51, 1e-8);
}

TEST(Compare, BoundedObservableAgainstMonteCarlo) {
  json j = {{"potential", "cosine"}, {"u0", 0.5}, {"epsilon", 0.4}, {"t_final", 0.5}, {"seed", 4}};
  j["potential_params"] = {{"a", 0.3}};
  j["observables"] = {"tanh"};
  j["compare"] = {{"methods", {"chaos", "mc"}}};
  j["chaos"] = {{"p", 5}};
  j["mc"] = {{"n_particles", 20000}, {"dt", 5e-3}};
  const auto rep = compare_methods(parse_config(j, "compare"));
  ASSERT_EQ(rep.discrepancies.size(), 1u);
  EXPECT_EQ(rep.discrepancies[0].pair, "chaos-mc");
  EXPECT_TRUE(rep.discrepancies[0].pass) << rep.discrepancies[0].abs_diff << " vs " << rep.discrepancies[0].tolerance;
}

TEST(Compare, FailedSubRunNeverAgrees) {
  json j = {{"potential", "quadratic"}, {"potential_params", {{"k", 5.0}}}, {"beta", 0.1}, {"epsilon", 1.0},
            {"t_final", 1.0}};
  j["chaos"] = {{"p", 3}, {"jac_floor", 0.5}};
  j["compare"] = {{"methods", {"chaos", "fp"}}};
  j["fp"] = {{"cells", 512}};
  const auto rep = compare_methods(parse_config(j, "compare"));
  ASSERT_EQ(rep.failures.size(), 1u);
  EXPECT_EQ(rep.failures[0].first, "chaos");
  EXPECT_FALSE(rep.all_pass());
  for (const auto& d : rep.discrepancies) {
    EXPECT_FALSE(d.pass);
    EXPECT_TRUE(std::isnan(d.abs_diff));
  }
  EXPECT_FALSE(rep.find("x0", "chaos")->ok);
  EXPECT_TRUE(rep.find("x0", "fp")->ok);
}

TEST(WienerDimension, BinomialAccounting) {
  EXPECT_EQ(chaos_basis_count(16, 3), 969.0);
  EXPECT_EQ(chaos_basis_count(1, 3), 4.0);
  const std::vector<double> ts{0.5, 1.0, 2.0, 4.0, 8.0};
  const auto rows = wiener_dimension_rows(ts, 0.01, 3, 1, 0.1);
  ASSERT_EQ(rows.size(), ts.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].m_l, static_cast<std::size_t>(std::ceil(0.1 * ts[k] / 0.01 - 1e-12)));
    EXPECT_EQ(rows[k].transformed_basis, 4.0);
    const double m = static_cast<double>(rows[k].m_l);
    EXPECT_EQ(rows[k].wiener_basis, std::round((m + 1) * (m + 2) * (m + 3) / 6.0));
    if (k > 0) {
      EXPECT_GT(rows[k].wiener_basis, rows[k - 1].wiener_basis);
    }
  }
  EXPECT_THROW(wiener_dimension_rows(ts, 0.0, 3, 1, 0.1), DomainError);
}

TEST(WienerDimension, MeasuredReport) {
  WienerSettings w;
  w.n_samples = 500;
  const auto rep = wiener_dimension_report(w, 2, 9, 1);
  EXPECT_NEAR(rep.truncation.slope, -1.0, 0.25);
  // Parseval: error * m / t tends to 1/pi^2
  EXPECT_NEAR(rep.constant, 1.0 / (std::numbers::pi * std::numbers::pi), 0.03);
  for (const auto& r : rep.rows) EXPECT_EQ(r.transformed_basis, binomial(2 + 3, 3));
}

TEST(EpsilonStudyRun, FreeDiffusionAndRejectedZero) {
  json j = {{"potential", "zero"}, {"u0", 0.0}, {"t_final", 0.5}, {"seed", 2}};
  j["mc"] = {{"n_particles", 4000}, {"dt", 1e-2}};
  j["chaos"] = {{"p", 2}};
  j["fp"] = {{"cells", 2048}, {"dt", 1e-4}};
  j["epsilon_study"] = {{"epsilons", {0.4, 0.2, 0.1, 0.05, 0.0}}};
  const auto dir = scratch("eps");
  const auto out = run(parse_config(j, "epsilon-study"), dir);
  ASSERT_EQ(out.exit_code, 0);
  const auto& rep = *out.epsilon;
  ASSERT_EQ(rep.rows.size(), 5u);
  EXPECT_NE(rep.rows[4].chaos_status.find("rejected"), std::string::npos);
  EXPECT_EQ(rep.rows[4].mc_gap, 0.0);
  for (std::size_t e = 0; e + 2 < 4; ++e)
    EXPECT_NEAR(rep.rows[e].chaos_m2_step / rep.rows[e + 1].chaos_m2_step, 4.0, 1e-4);
  for (std::size_t e = 0; e < 4; ++e) EXPECT_LT(rep.rows[e].chaos_fp_gap, 1e-6);
  EXPECT_NEAR(rep.mc_slope, 2.0, 1e-9);
  EXPECT_NEAR(rep.chaos_step_slope, 2.0, 1e-4);
  EXPECT_EQ(read_csv(dir / "epsilon_study.csv").size(), 6u);
}

TEST(Run, RerunFromManifestIsByteIdentical) {
  json j = ou_problem();
  j["seed"] = 23;
  j["mc"] = {{"n_particles", 3000}, {"dt", 1e-2}};
  j["observables"] = {"x", "x^2", "tanh"};
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  const auto first = run(parse_config(j, "mc"), a);
  const auto second = run(load_config(a / "manifest.json", "mc"), b);
  ASSERT_EQ(first.artifacts, second.artifacts);
  for (const auto& name : first.artifacts) EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  auto ma = json::parse(slurp(a / "manifest.json")), mb = json::parse(slurp(b / "manifest.json"));
  ma.erase("wall_time_seconds");
  mb.erase("wall_time_seconds");
  EXPECT_EQ(ma, mb);
}

TEST(Run, EpsilonStudyRerunKeepsPerEpsilonGrids) {
  json j = {{"potential", "quadratic"}, {"u0", 1.0}, {"t_final", 0.5}, {"seed", 9}};
  j["mc"] = {{"n_particles", 500}, {"dt", 1e-2}};
  j["chaos"] = {{"p", 2}};
  j["fp"] = {{"cells", 256}, {"dt", 1e-3}};
  j["epsilon_study"] = {{"epsilons", {0.4, 0.1}}};
  const auto a = scratch("eps_rerun_a"), b = scratch("eps_rerun_b");
  run(parse_config(j, "epsilon-study"), a);
  run(load_config(a / "manifest.json"), b);
  EXPECT_EQ(slurp(a / "epsilon_study.csv"), slurp(b / "epsilon_study.csv"));
}

TEST(Run, FokkerPlanckArtifacts) {
  json j = ou_problem();
  j["fp"] = {{"cells", 256}, {"dt", 1e-3}, {"output_stride", 500}};
  const auto dir = scratch("fp");
  const auto out = run(parse_config(j, "fp"), dir);
  ASSERT_EQ(out.exit_code, 0);
  EXPECT_TRUE(fs::exists(dir / "density_0000.csv"));
  EXPECT_TRUE(fs::exists(dir / "density_0002.csv"));
  EXPECT_FALSE(fs::exists(dir / "density_0003.csv"));
  const std::string snap = slurp(dir / "density_0002.csv");
  EXPECT_EQ(snap.rfind("# t=1\n# problem_hash=" + problem_hash(parse_config(j, "fp")) + "\nx,f\n", 0), 0u);
  const auto diag = read_csv(dir / "diagnostics.csv");
  ASSERT_EQ(diag.size(), 4u);
  EXPECT_GT(std::stod(diag[1][2]), std::stod(diag[3][2]));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto good = write_file(dir / "good.json", R"({"potential": "quadratic", "u0": 1.0, "chaos": {"p": 2, "dt": 0.01}})");
  const auto bad = write_file(dir / "bad.json", R"({"betta": 1.0})");
  const auto degenerate = write_file(
      dir / "degenerate.json",
      R"({"potential": "quadratic", "potential_params": {"k": 5}, "beta": 0.1, "epsilon": 1.0,
          "chaos": {"p": 3, "jac_floor": 0.5}})");
  EXPECT_EQ(run_cli("chaos --config " + good.string() + " --out " + (dir / "a").string()), 0);
  EXPECT_EQ(run_cli("chaos --config " + bad.string() + " --out " + (dir / "b").string()), 2);
  EXPECT_EQ(run_cli("chaos --config " + (dir / "nope.json").string() + " --out " + (dir / "c").string()), 4);
  EXPECT_EQ(run_cli("chaos --config " + degenerate.string() + " --out " + (dir / "d").string()), 3);
  EXPECT_TRUE(fs::exists(dir / "d" / "coefficients.csv"));
  const auto tagged = write_file(dir / "tagged.json", R"({"method": "chaos"})");
  EXPECT_EQ(run_cli("fp --config " + tagged.string() + " --out " + (dir / "e").string()), 2);
  EXPECT_EQ(run_cli("frobnicate --config " + good.string() + " --out " + (dir / "f").string()), 2);
  write_file(dir / "blocker", "not a directory");
  EXPECT_EQ(run_cli("chaos --config " + good.string() + " --out " + (dir / "blocker" / "x").string()), 4);

  const auto mc = write_file(dir / "mc.json", R"({"mc": {"n_particles": 100, "dt": 0.1}})");
  EXPECT_EQ(run_cli("mc --config " + mc.string() + " --out " + (dir / "g").string() + " --seed 77"), 0);
  EXPECT_EQ(json::parse(slurp(dir / "g" / "manifest.json"))["seed"], 77);
}

TEST(Cli, ShippedConfigsParse) {
  for (const auto& entry : fs::directory_iterator(LGCHAOS_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
  }
}
