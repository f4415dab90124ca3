// Command-line front end: generate, run, verify, compare.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "gne/experiment.hpp"

namespace ex = gne::experiment;
namespace fs = std::filesystem;

namespace {

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("GNE_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::set_level(spdlog::level::info);
  if (env && level != "error" && level != "info" && level != "debug")
    spdlog::warn("GNE_LOG_LEVEL='{}' not recognised, using info", level);
}

struct Overrides {
  std::optional<std::string> mode;
  std::optional<std::size_t> max_iters;
  std::optional<double> tol;
  std::optional<double> alpha;
  std::optional<double> delta;
  std::optional<std::uint64_t> seed;
  bool full_trace = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--mode", o.mode, "direct | netsim-strict | netsim-permissive");
  cmd->add_option("--max-iters", o.max_iters, "round cap");
  cmd->add_option("--tol", o.tol, "stopping tolerance on the decision drift");
  cmd->add_option("--alpha", o.alpha, "inertia; a positive value selects the inertial variant");
  cmd->add_option("--delta", o.delta, "delta used by the step-size synthesis");
  cmd->add_option("--seed", o.seed, "generator seed (generator instances only)");
  cmd->add_flag("--full-trace", o.full_trace, "add per-agent x and lambda columns to the trace");
}

void apply(const Overrides& o, ex::ExperimentConfig& c) {
  if (o.mode) c.mode = ex::parse_mode(*o.mode);
  if (o.max_iters) c.stop.max_iters = *o.max_iters;
  if (o.tol) c.stop.tol = *o.tol;
  if (o.alpha) {
    if (!(*o.alpha >= 0.0 && *o.alpha < 1.0)) throw gne::InvalidConfig("--alpha must lie in [0, 1)");
    c.alpha = *o.alpha;
    c.algorithm = *o.alpha > 0.0 ? gne::Algorithm::inertial : gne::Algorithm::plain;
  }
  if (o.delta) c.parameters.delta = *o.delta;
  if (o.seed) {
    auto* g = std::get_if<ex::GeneratorSpec>(&c.instance);
    if (!g) throw gne::InvalidConfig("--seed applies only to generator instances");
    g->seed = *o.seed;
  }
  if (o.full_trace) c.full_trace = true;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Distributed generalized Nash equilibrium seeking on networks"};
  app.require_subcommand(1);

  std::uint64_t gen_seed = 1;
  std::size_t gen_companies = 20, gen_markets = 7;
  double gen_density = 0.15;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a random Cournot instance as JSON");
  gen->add_option("--seed", gen_seed, "instance seed");
  gen->add_option("--companies", gen_companies, "number of companies");
  gen->add_option("--markets", gen_markets, "number of markets");
  gen->add_option("--density", gen_density, "probability a company serves a market");
  gen->add_option("--out", gen_out, "output file (stdout when omitted)");

  std::string run_config, run_out = ".";
  Overrides run_over;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("--config", run_config, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "directory for relative output paths");
  add_overrides(run, run_over);

  std::string ver_config, ver_solution;
  double ver_tol = 1e-6;
  auto* ver = app.add_subcommand("verify", "KKT check of a solution file");
  ver->add_option("--config", ver_config, "experiment JSON naming the instance")->required()->check(CLI::ExistingFile);
  ver->add_option("--solution", ver_solution, "solution JSON")->required()->check(CLI::ExistingFile);
  ver->add_option("--tol", ver_tol, "residual tolerance");

  std::vector<std::string> cmp_configs;
  std::string cmp_out;
  double cmp_tol = 1e-6;
  Overrides cmp_over;
  auto* cmp = app.add_subcommand("compare", "run two configs on one instance and compare convergence");
  cmp->add_option("--config", cmp_configs, "two experiment configs")->required()->expected(2)->check(CLI::ExistingFile);
  cmp->add_option("--out", cmp_out, "directory for the aligned series CSV");
  cmp->add_option("--report-tol", cmp_tol, "tolerance for the rounds-to-tolerance column");
  cmp->add_option("--mode", cmp_over.mode, "override the mode of both runs");
  cmp->add_option("--max-iters", cmp_over.max_iters, "override the round cap of both runs");
  cmp->add_option("--tol", cmp_over.tol, "override the stopping tolerance of both runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const std::string text = ex::cmd_generate(gen_seed, gen_companies, gen_markets, gen_density, gen_out);
      if (gen_out.empty())
        std::cout << text;
      else
        spdlog::info("wrote {}", gen_out);
      return 0;
    }
    if (*run) {
      auto loaded = ex::load_config(run_config);
      apply(run_over, loaded.config);
      spdlog::info("run {} ({}, alpha {}) mode {}", run_config, ex::to_string(loaded.config.algorithm),
                   loaded.config.alpha, ex::to_string(loaded.config.mode));
      const auto out = ex::cmd_run(loaded.config, loaded.base_dir, run_out);
      for (const auto& note : out.summary["notes"]) spdlog::info("{}", note.get<std::string>());
      if (!out.summary["parameters"]["guaranteed"].get<bool>())
        spdlog::warn("step sizes fall outside the guaranteed region; trace flagged unguaranteed");
      spdlog::info("status {} after {} rounds, drift {:.3e}, kkt {:.3e}", gne::to_string(out.result.status),
                   out.result.rounds, out.result.last_drift, out.kkt.max());
      if (!out.result.error.empty()) spdlog::error("{}", out.result.error);
      spdlog::debug("summary {}", out.summary.dump());
      return out.exit_code;
    }
    if (*ver) {
      const auto loaded = ex::load_config(ver_config);
      const auto rep = ex::cmd_verify(loaded.config, loaded.base_dir, ver_solution, ver_tol);
      std::cout << (rep.pass ? "PASS" : "FAIL") << " stationarity=" << rep.residual.stationarity
                << " primal=" << rep.residual.primal << " dual=" << rep.residual.dual
                << " complementarity=" << rep.residual.complementarity << " consensus=" << rep.residual.consensus
                << " tol=" << rep.tol << '\n';
      for (const auto& f : rep.failures) spdlog::info("{} residual above tolerance", f);
      return rep.pass ? 0 : 2;
    }
    if (*cmp) {
      std::vector<ex::LoadedConfig> cs;
      for (const auto& p : cmp_configs) {
        cs.push_back(ex::load_config(p));
        apply(cmp_over, cs.back().config);
      }
      const auto res = ex::cmd_compare(cs, cmp_tol);
      std::cout << res.table;
      if (!cmp_out.empty()) {
        ex::write_text_file(fs::path(cmp_out) / "compare.csv", res.series_csv);
        spdlog::info("wrote {}", (fs::path(cmp_out) / "compare.csv").string());
      }
      return 0;
    }
  } catch (const gne::LocalityError& e) {
    spdlog::error("locality violation: {}", e.what());
    return 1;
  } catch (const gne::NumericFailure& e) {
    spdlog::error("numeric failure: {}", e.what());
    return 3;
  } catch (const gne::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
