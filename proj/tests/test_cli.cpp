#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gne/experiment.hpp"

namespace ex = gne::experiment;
namespace fs = std::filesystem;
using gne::Algorithm;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gne_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GNE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

ex::ExperimentConfig small_config(std::uint64_t seed = 3) {
  ex::ExperimentConfig c;
  c.instance = ex::GeneratorSpec{seed, 4, 2, 0.6};
  c.stop = {3000, 1e-9};
  c.mode = ex::Mode::netsim_strict;
  return c;
}

}  // namespace

TEST(ConfigJson, CournotRoundTripIsExact) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = gne::cournot::sample_random_instance(seed, 6, 3, 0.5);
    if (seed % 2 == 0) cfg.multiplier_edges = std::vector<gne::Edge>{{0, 1, 0.7}, {1, 2, 1.3}, {2, 3, 1.0}, {3, 4, 2.0}, {4, 5, 0.5}};
    const auto text = nlohmann::json(cfg).dump();
    const auto back = nlohmann::json::parse(text).get<gne::cournot::CournotConfig>();
    EXPECT_TRUE(back == cfg) << "seed " << seed;
    EXPECT_EQ(nlohmann::json(back).dump(), text);
  }
}

TEST(ConfigJson, ExperimentRoundTrip) {
  std::vector<ex::ExperimentConfig> cs;
  cs.push_back(small_config());
  ex::ExperimentConfig inl;
  inl.instance = gne::cournot::sample_random_instance(9, 5, 3, 0.5);
  inl.algorithm = Algorithm::inertial;
  inl.alpha = 0.12;
  inl.parameters.automatic = false;
  inl.parameters.tau = {0.03};
  inl.parameters.nu = {0.2};
  inl.parameters.sigma = {0.02, 0.02, 0.02, 0.02, 0.02};
  inl.parameters.delta = 4.0;
  inl.outputs.message_log = "messages.jsonl";
  inl.full_trace = true;
  inl.schedule = {4, 3, 2, 1, 0};
  cs.push_back(inl);
  ex::ExperimentConfig ref;
  ref.instance = ex::ReferenceSpec{"duopoly", 2.5, {4.0, 6.0}};
  ref.parameters.epsilon = 0.01;
  ref.mode = ex::Mode::direct;
  cs.push_back(ref);
  ex::ExperimentConfig file;
  file.instance = ex::CournotFile{"instance.json"};
  cs.push_back(file);
  for (const auto& c : cs) {
    const auto back = ex::parse_config(nlohmann::json::parse(ex::to_json(c).dump()));
    EXPECT_TRUE(back == c) << ex::to_json(c).dump();
  }
}

TEST(ConfigJson, RejectsMalformed) {
  using nlohmann::json;
  EXPECT_THROW(ex::parse_config(json::object()), gne::InvalidConfig);
  EXPECT_THROW(ex::parse_config(json{{"instance", {{"reference", "triopoly"}}}}), gne::InvalidConfig);
  EXPECT_THROW(ex::parse_config(json{{"instance", {{"generator", json::object()}}}, {"mode", "async"}}),
               gne::InvalidConfig);
  EXPECT_THROW(ex::parse_config(json{{"instance", {{"generator", json::object()}}}, {"alpha", 1.0}}),
               gne::InvalidConfig);
  EXPECT_THROW(ex::parse_config(json{{"instance", {{"generator", json::object()}, {"reference", "duopoly"}}}}),
               gne::InvalidConfig);
}

TEST(Generate, ByteIdenticalAcrossCalls) {
  const auto dir = scratch("generate");
  ASSERT_EQ(run_cli("generate --seed 42 --out " + (dir / "a.json").string()), 0);
  ASSERT_EQ(run_cli("generate --seed 42 --out " + (dir / "b.json").string()), 0);
  ASSERT_EQ(run_cli("generate --seed 43 --out " + (dir / "c.json").string()), 0);
  const auto a = slurp(dir / "a.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b.json"));
  EXPECT_NE(a, slurp(dir / "c.json"));
  const auto parsed = nlohmann::json::parse(a).get<gne::cournot::CournotConfig>();
  EXPECT_TRUE(parsed == gne::cournot::sample_random_instance(42, 20, 7, 0.15));
}

TEST(Run, TraceDeterministicForFixedSchedule) {
  auto c = small_config(5);
  c.schedule = {2, 0, 3, 1};
  const auto cfg = ex::resolve_instance(c);
  const auto a = ex::execute(c, cfg);
  const auto b = ex::execute(c, cfg);
  EXPECT_EQ(a.trace_csv, b.trace_csv);
  EXPECT_EQ(a.solution.dump(), b.solution.dump());
  c.mode = ex::Mode::direct;
  c.schedule.clear();
  EXPECT_EQ(ex::execute(c, cfg).trace_csv, a.trace_csv);
}

TEST(Run, TraceColumns) {
  auto c = small_config(6);
  c.stop.max_iters = 10;
  c.full_trace = true;
  const auto cfg = ex::resolve_instance(c);
  const auto out = ex::execute(c, cfg);
  std::istringstream in(out.trace_csv);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header.rfind("round,dx_norm,dw_norm,rel_x_err,rel_w_err,consensus,complementarity,feasibility,fejer_phi", 0),
            0u);
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  const auto game = gne::cournot::build_cournot_game(cfg);
  EXPECT_EQ(count(header), static_cast<long>(9 + game.total_dim() + game.players.size() * game.m));
  EXPECT_EQ(count(first), count(header));
  // Capped run: no converged reference, so rel_w_err and fejer_phi are blank.
  EXPECT_EQ(out.result.status, gne::RunStatus::cap);
  std::vector<std::string> cells;
  std::stringstream row(first);
  for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
  EXPECT_FALSE(cells[3].empty());
  EXPECT_TRUE(cells[4].empty());
  EXPECT_TRUE(cells[8].empty());
}

TEST(Run, ManualStepsFlaggedWhenOutsideGuarantee) {
  ex::ExperimentConfig c = small_config(7);
  c.parameters.automatic = false;
  c.parameters.tau = {3.0};
  c.parameters.nu = {0.2};
  c.parameters.sigma = {0.02};
  c.stop.max_iters = 5;
  const auto out = ex::execute(c, ex::resolve_instance(c));
  EXPECT_EQ(out.summary["parameters"]["provenance"], "manual");
  EXPECT_FALSE(out.summary["parameters"]["guaranteed"].get<bool>());
  EXPECT_EQ(out.summary["trace_flag"], "unguaranteed");
}

TEST(Compare, ZeroAlphaMatchesPlain) {
  const auto dir = scratch("compare");
  auto a = small_config(8);
  auto b = a;
  b.algorithm = Algorithm::inertial;
  b.alpha = 0.0;
  const auto res = ex::cmd_compare({{a, dir}, {b, dir}}, 1e-6);
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_EQ(res.rows[0].rounds, res.rows[1].rounds);
  std::istringstream in(res.series_csv);
  std::string line;
  std::getline(in, line);
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto p1 = line.find(',');
    const auto p2 = line.find(',', p1 + 1);
    EXPECT_EQ(line.substr(p1 + 1, p2 - p1 - 1), line.substr(p2 + 1)) << line;
    ++n;
  }
  EXPECT_EQ(n, res.rows[0].rounds);
}

TEST(Compare, RefusesDifferentInstances) {
  auto a = small_config(8);
  auto b = small_config(9);
  EXPECT_THROW(ex::cmd_compare({{a, "."}, {b, "."}}, 1e-6), gne::InvalidConfig);
}

TEST(Verify, OracleSolutionPassesAndPerturbationFails) {
  const auto dir = scratch("verify");
  ex::ExperimentConfig c;
  c.instance = ex::GeneratorSpec{11, 3, 2, 0.6};
  const auto game = gne::cournot::build_cournot_game(ex::resolve_instance(c));
  const auto oracle = gne::active_set_solve(game);
  ex::write_text_file(dir / "oracle.json", ex::solution_json(oracle.x_star, oracle.lambda_star).dump());
  const auto good = ex::cmd_verify(c, dir, dir / "oracle.json", 1e-8);
  EXPECT_TRUE(good.pass);
  EXPECT_LE(good.residual.max(), 1e-8);

  // Bump the multiplier of the slackest coupling constraint.
  const gne::Vec slack = game.coupling_matrix() * oracle.x_star.stacked() - game.coupling_rhs();
  Eigen::Index row = 0;
  ASSERT_GT(slack.maxCoeff(&row), 1e-3);
  gne::Vec bumped = oracle.lambda_star;
  bumped(row) += 1.0;
  ex::write_text_file(dir / "bumped.json", ex::solution_json(oracle.x_star, bumped).dump());
  const auto bad = ex::cmd_verify(c, dir, dir / "bumped.json", 1e-8);
  EXPECT_FALSE(bad.pass);
  EXPECT_NE(std::find(bad.failures.begin(), bad.failures.end(), "complementarity"), bad.failures.end());
}

TEST(ExitCodes, MatchRunStatus) {
  const auto dir = scratch("exit");
  auto c = small_config(4);
  ex::write_text_file(dir / "ok.json", ex::to_json(c).dump(2));
  EXPECT_EQ(run_cli("run --config " + (dir / "ok.json").string() + " --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "solution.json"));
  EXPECT_EQ(run_cli("verify --config " + (dir / "ok.json").string() + " --solution " + (dir / "solution.json").string() +
                    " --tol 1e-5"),
            0);

  EXPECT_EQ(run_cli("run --config " + (dir / "ok.json").string() + " --out " + dir.string() + " --max-iters 5"), 2);

  auto blowup = c;
  blowup.mode = ex::Mode::direct;
  blowup.parameters.automatic = false;
  blowup.parameters.tau = {1e6};
  blowup.parameters.nu = {1e6};
  blowup.parameters.sigma = {1e6};
  blowup.stop.max_iters = 100000;
  ex::write_text_file(dir / "blowup.json", ex::to_json(blowup).dump(2));
  EXPECT_EQ(run_cli("run --config " + (dir / "blowup.json").string() + " --out " + dir.string()), 3);

  ex::write_text_file(dir / "broken.json", "{\"instance\": {}}");
  EXPECT_EQ(run_cli("run --config " + (dir / "broken.json").string() + " --out " + dir.string()), 1);
  EXPECT_EQ(run_cli("run"), 1);
  EXPECT_EQ(run_cli("bogus"), 1);
  EXPECT_EQ(run_cli("run --config " + (dir / "ok.json").string() + " --mode async"), 1);
}
