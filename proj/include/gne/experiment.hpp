#pragma once

#include <nlohmann/json.hpp>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gne/cournot.hpp"
#include "gne/engine.hpp"
#include "gne/netsim.hpp"
#include "gne/verify.hpp"

namespace gne {

namespace cournot {

inline void to_json(nlohmann::json& j, const CournotConfig& c) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  std::vector<std::vector<double>> cost_b, box;
  for (const auto& v : c.cost_b) cost_b.push_back(vec(v));
  for (const auto& v : c.box_upper) box.push_back(vec(v));
  j = nlohmann::json{{"companies", c.companies},
                     {"markets", c.markets},
                     {"incidence", c.incidence},
                     {"capacities", vec(c.capacities)},
                     {"price_intercept", vec(c.price_intercept)},
                     {"price_slope", vec(c.price_slope)},
                     {"cost_pi", vec(c.cost_pi)},
                     {"cost_b", cost_b},
                     {"box_upper", box},
                     {"seed", c.seed}};
  if (c.multiplier_edges) {
    auto edges = nlohmann::json::array();
    for (const Edge& e : *c.multiplier_edges) edges.push_back({e.i, e.j, e.weight});
    j["multiplier_edges"] = edges;
  }
}

inline void from_json(const nlohmann::json& j, CournotConfig& c) {
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  c = CournotConfig{};
  c.companies = j.at("companies").get<std::size_t>();
  c.markets = j.at("markets").get<std::size_t>();
  c.incidence = j.at("incidence").get<std::vector<std::vector<std::size_t>>>();
  c.capacities = vec(j.at("capacities"));
  c.price_intercept = vec(j.at("price_intercept"));
  c.price_slope = vec(j.at("price_slope"));
  c.cost_pi = vec(j.at("cost_pi"));
  for (const auto& v : j.at("cost_b")) c.cost_b.push_back(vec(v));
  for (const auto& v : j.at("box_upper")) c.box_upper.push_back(vec(v));
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("multiplier_edges")) {
    std::vector<Edge> edges;
    for (const auto& e : j.at("multiplier_edges")) {
      if (!e.is_array() || e.size() != 3) throw InvalidConfig("multiplier edge must be [i, j, weight]");
      edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>(), e[2].get<double>()});
    }
    c.multiplier_edges = edges;
  }
}

}  // namespace cournot

namespace experiment {

using nlohmann::json;

enum class Mode { direct, netsim_strict, netsim_permissive };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::direct: return "direct";
    case Mode::netsim_strict: return "netsim-strict";
    case Mode::netsim_permissive: return "netsim-permissive";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "direct") return Mode::direct;
  if (s == "netsim-strict") return Mode::netsim_strict;
  if (s == "netsim-permissive") return Mode::netsim_permissive;
  throw InvalidConfig("unknown mode '" + s + "' (direct, netsim-strict, netsim-permissive)");
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "plain") return Algorithm::plain;
  if (s == "inertial") return Algorithm::inertial;
  throw InvalidConfig("unknown algorithm '" + s + "' (plain, inertial)");
}

inline const char* to_string(Algorithm a) { return a == Algorithm::plain ? "plain" : "inertial"; }

struct GeneratorSpec {
  std::uint64_t seed = 1;
  std::size_t companies = 20;
  std::size_t markets = 7;
  double density = 0.15;

  bool operator==(const GeneratorSpec&) const = default;
};

/// Built-in two-company instance; capacity and box are the only knobs.
struct ReferenceSpec {
  std::string name = "duopoly";
  double capacity = 3.0;
  std::vector<double> box{10.0, 10.0};

  bool operator==(const ReferenceSpec&) const = default;
};

struct CournotFile {
  std::string path;

  bool operator==(const CournotFile&) const = default;
};

using InstanceSource = std::variant<cournot::CournotConfig, CournotFile, GeneratorSpec, ReferenceSpec>;

/// Step sizes: automatic synthesis (optional delta, epsilon) or manual scalars/vectors.
struct ParameterSpec {
  bool automatic = true;
  std::optional<double> delta;
  std::optional<double> epsilon;
  std::vector<double> tau, nu, sigma;  // manual: one entry (broadcast) or one per player

  bool operator==(const ParameterSpec&) const = default;
};

struct Outputs {
  std::string trace = "trace.csv";
  std::string summary = "summary.json";
  std::string solution = "solution.json";
  std::string message_log;  // netsim JSON lines; empty disables
  bool reference_pass = true;

  bool operator==(const Outputs&) const = default;
};

struct ExperimentConfig {
  InstanceSource instance = GeneratorSpec{};
  Algorithm algorithm = Algorithm::plain;
  double alpha = 0.0;
  ParameterSpec parameters;
  StopRule stop;
  Mode mode = Mode::direct;
  Outputs outputs;
  bool full_trace = false;
  std::vector<std::size_t> schedule;

  bool operator==(const ExperimentConfig& o) const {
    return instance == o.instance && algorithm == o.algorithm && alpha == o.alpha && parameters == o.parameters &&
           stop.max_iters == o.stop.max_iters && stop.tol == o.stop.tol && mode == o.mode && outputs == o.outputs &&
           full_trace == o.full_trace && schedule == o.schedule;
  }
};

inline json to_json(const ExperimentConfig& c) {
  json j;
  std::visit(
      [&](const auto& src) {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, cournot::CournotConfig>)
          j["instance"] = {{"cournot", src}};
        else if constexpr (std::is_same_v<T, CournotFile>)
          j["instance"] = {{"cournot_file", src.path}};
        else if constexpr (std::is_same_v<T, GeneratorSpec>)
          j["instance"] = {{"generator",
                            {{"seed", src.seed},
                             {"companies", src.companies},
                             {"markets", src.markets},
                             {"density", src.density}}}};
        else
          j["instance"] = {{"reference", src.name}, {"capacity", src.capacity}, {"box", src.box}};
      },
      c.instance);
  j["algorithm"] = to_string(c.algorithm);
  j["alpha"] = c.alpha;
  if (c.parameters.automatic) {
    json a = json::object();
    if (c.parameters.delta) a["delta"] = *c.parameters.delta;
    if (c.parameters.epsilon) a["epsilon"] = *c.parameters.epsilon;
    j["parameters"] = a.empty() ? json("auto") : json{{"auto", a}};
  } else {
    json p = {{"tau", c.parameters.tau}, {"nu", c.parameters.nu}, {"sigma", c.parameters.sigma}};
    if (c.parameters.delta) p["delta"] = *c.parameters.delta;
    if (c.parameters.epsilon) p["epsilon"] = *c.parameters.epsilon;
    j["parameters"] = p;
  }
  j["stop"] = {{"max_iters", c.stop.max_iters}, {"tol", c.stop.tol}};
  j["mode"] = to_string(c.mode);
  json out = {{"trace", c.outputs.trace},
              {"summary", c.outputs.summary},
              {"solution", c.outputs.solution},
              {"reference_pass", c.outputs.reference_pass}};
  if (!c.outputs.message_log.empty()) out["message_log"] = c.outputs.message_log;
  j["outputs"] = out;
  j["full_trace"] = c.full_trace;
  if (!c.schedule.empty()) j["schedule"] = c.schedule;
  return j;
}

inline std::vector<double> scalar_or_list(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  return j.get<std::vector<double>>();
}

inline ExperimentConfig parse_config(const json& j) {
  try {
    ExperimentConfig c;
    const json& inst = j.at("instance");
    const int sources = static_cast<int>(inst.contains("cournot")) + static_cast<int>(inst.contains("cournot_file")) +
                        static_cast<int>(inst.contains("generator")) + static_cast<int>(inst.contains("reference"));
    if (sources != 1) throw InvalidConfig("instance needs exactly one of cournot, cournot_file, generator, reference");
    if (inst.contains("cournot")) {
      c.instance = inst.at("cournot").get<cournot::CournotConfig>();
    } else if (inst.contains("cournot_file")) {
      c.instance = CournotFile{inst.at("cournot_file").get<std::string>()};
    } else if (inst.contains("generator")) {
      const json& g = inst.at("generator");
      GeneratorSpec spec;
      spec.seed = g.value("seed", spec.seed);
      spec.companies = g.value("companies", spec.companies);
      spec.markets = g.value("markets", spec.markets);
      spec.density = g.value("density", spec.density);
      c.instance = spec;
    } else {
      ReferenceSpec ref;
      ref.name = inst.at("reference").get<std::string>();
      if (ref.name != "duopoly") throw InvalidConfig("unknown reference game '" + ref.name + "'");
      ref.capacity = inst.value("capacity", ref.capacity);
      ref.box = inst.value("box", ref.box);
      if (ref.box.size() != 2) throw InvalidConfig("duopoly box needs two entries");
      c.instance = ref;
    }
    c.algorithm = parse_algorithm(j.value("algorithm", std::string("plain")));
    c.alpha = j.value("alpha", c.algorithm == Algorithm::inertial ? 0.12 : 0.0);
    if (j.contains("parameters")) {
      const json& p = j.at("parameters");
      if (p.is_string()) {
        if (p.get<std::string>() != "auto") throw InvalidConfig("parameters must be \"auto\" or an object");
      } else if (p.contains("auto")) {
        const json& a = p.at("auto");
        if (a.contains("delta")) c.parameters.delta = a.at("delta").get<double>();
        if (a.contains("epsilon")) c.parameters.epsilon = a.at("epsilon").get<double>();
      } else {
        c.parameters.automatic = false;
        c.parameters.tau = scalar_or_list(p.at("tau"));
        c.parameters.nu = scalar_or_list(p.at("nu"));
        c.parameters.sigma = scalar_or_list(p.at("sigma"));
        if (p.contains("delta")) c.parameters.delta = p.at("delta").get<double>();
        if (p.contains("epsilon")) c.parameters.epsilon = p.at("epsilon").get<double>();
      }
    }
    if (j.contains("stop")) {
      c.stop.max_iters = j.at("stop").value("max_iters", c.stop.max_iters);
      c.stop.tol = j.at("stop").value("tol", c.stop.tol);
    }
    c.mode = parse_mode(j.value("mode", std::string("direct")));
    if (j.contains("outputs")) {
      const json& o = j.at("outputs");
      c.outputs.trace = o.value("trace", c.outputs.trace);
      c.outputs.summary = o.value("summary", c.outputs.summary);
      c.outputs.solution = o.value("solution", c.outputs.solution);
      c.outputs.message_log = o.value("message_log", c.outputs.message_log);
      c.outputs.reference_pass = o.value("reference_pass", c.outputs.reference_pass);
    }
    c.full_trace = j.value("full_trace", false);
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<std::vector<std::size_t>>();
    if (!(c.alpha >= 0.0 && c.alpha < 1.0)) throw InvalidConfig("alpha must lie in [0, 1)");
    if (!(c.stop.tol >= 0.0)) throw InvalidConfig("stop.tol must be non-negative");
    return c;
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("config: ") + e.what());
  }
}

inline json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw InvalidConfig("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidConfig(p.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + p.string());
  out << text;
  if (!out) throw InvalidConfig("failed writing " + p.string());
}

/// Loaded config plus the directory relative paths resolve against.
struct LoadedConfig {
  ExperimentConfig config;
  std::filesystem::path base_dir;
};

inline LoadedConfig load_config(const std::filesystem::path& p) {
  return {parse_config(read_json_file(p)), p.has_parent_path() ? p.parent_path() : std::filesystem::path(".")};
}

inline cournot::CournotConfig resolve_instance(const ExperimentConfig& c, const std::filesystem::path& base = ".") {
  return std::visit(
      [&](const auto& src) -> cournot::CournotConfig {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, cournot::CournotConfig>) {
          return src;
        } else if constexpr (std::is_same_v<T, CournotFile>) {
          std::filesystem::path p(src.path);
          if (p.is_relative()) p = base / p;
          try {
            return read_json_file(p).get<cournot::CournotConfig>();
          } catch (const json::exception& e) {
            throw InvalidConfig(p.string() + ": " + e.what());
          }
        } else if constexpr (std::is_same_v<T, GeneratorSpec>) {
          return cournot::sample_random_instance(src.seed, src.companies, src.markets, src.density);
        } else {
          return cournot::duopoly(src.capacity, Vec(Eigen::Map<const Vec>(src.box.data(), 2)));
        }
      },
      c.instance);
}

inline Vec broadcast(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() == 1) return Vec::Constant(static_cast<Eigen::Index>(n), v[0]);
  if (v.size() != n) throw InvalidConfig(std::string(what) + " needs 1 or " + std::to_string(n) + " entries");
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(n));
}

/// Step sizes for the run. Manual bundles get beta from the declared monotonicity and, when
/// no delta is given, the largest delta their steps admit, so the guarantee flag is meaningful.
inline StepSizeBundle resolve_step_sizes(const ExperimentConfig& c, const GameSpec& game) {
  if (c.parameters.automatic) return auto_step_sizes(game, c.parameters.delta, c.alpha, c.parameters.epsilon);
  const std::size_t n = game.players.size();
  StepSizeBundle s;
  s.tau = broadcast(c.parameters.tau, n, "tau");
  s.nu = broadcast(c.parameters.nu, n, "nu");
  s.sigma = broadcast(c.parameters.sigma, n, "sigma");
  s.alpha = c.alpha;
  s.epsilon = c.parameters.epsilon.value_or(c.alpha);
  if (game.monotonicity)
    s.beta = compute_beta(build_laplacian(game.multiplier).d_star, game.monotonicity->eta, game.monotonicity->theta);
  s.delta = c.parameters.delta.value_or(std::max(0.0, check_step_sizes(game, s).max_admissible_delta));
  return s;
}

/// Shortest round-trip decimal form.
inline std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

inline json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json kkt_json(const KKTResidual& r) {
  return {{"stationarity", r.stationarity},
          {"primal", r.primal},
          {"dual", r.dual},
          {"complementarity", r.complementarity},
          {"consensus", r.consensus}};
}

inline json solution_json(const NetworkState& states) {
  json x = json::array(), z = json::array(), lam = json::array();
  Vec mean = Vec::Zero(states.empty() ? 0 : states[0].lambda.size());
  for (const auto& a : states) {
    x.push_back(vec_json(a.x));
    z.push_back(vec_json(a.z));
    lam.push_back(vec_json(a.lambda));
    mean += a.lambda;
  }
  if (!states.empty()) mean /= static_cast<double>(states.size());
  return {{"x", x}, {"z", z}, {"lambda", lam}, {"lambda_mean", vec_json(mean)}};
}

/// Single-multiplier solution file (e.g. an oracle point).
inline json solution_json(const DecisionProfile& x, const Vec& lambda) {
  json xs = json::array();
  for (const auto& b : x.blocks) xs.push_back(vec_json(b));
  return {{"x", xs}, {"lambda", vec_json(lambda)}};
}

struct RunOutcome {
  RunResult result;
  std::vector<TraceRow> rows;
  KKTResidual kkt;
  json summary;
  std::string trace_csv;
  json solution;
  int exit_code = 0;
};

inline int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return 0;
    case RunStatus::cap: return 2;
    case RunStatus::numeric_failure: return 3;
  }
  return 1;
}

inline constexpr std::size_t oracle_active_set_limit = active_set_max_size;
inline constexpr std::size_t oracle_central_limit = 40;

struct Engine {
  const GameSpec& game;
  const StepSizeBundle& steps;
  const ExperimentConfig& config;
  std::ostream* message_log = nullptr;

  RunResult operator()(const StopRule& stop, const RoundObserver& obs) const {
    if (config.mode == Mode::direct) return run(game, steps, config.algorithm, zero_state(game), stop, obs);
    netsim::Options opt;
    opt.mode = config.mode == Mode::netsim_strict ? netsim::Mode::strict : netsim::Mode::permissive;
    opt.schedule = config.schedule;
    opt.message_log = message_log;
    return netsim::run(game, steps, config.algorithm, zero_state(game), stop, opt, obs).result;
  }
};

/// Runs one experiment in memory: oracle pass when affordable, optional reference pass for
/// the full-iterate columns, then the traced run.
inline RunOutcome execute(const ExperimentConfig& c, const cournot::CournotConfig& cfg,
                          std::ostream* message_log = nullptr) {
  const GameSpec game = cournot::build_cournot_game(cfg);
  const auto report = validate_game(game, cfg.seed);
  if (!report.ok()) throw InvalidConfig(report.violations.front().code + ": " + report.violations.front().message);
  const StepSizeBundle steps = resolve_step_sizes(c, game);
  const StepSizeAudit audit = check_step_sizes(game, steps);

  json notes = json::array();
  TraceReference ref;
  const std::size_t size = game.total_dim() + game.m;
  if (size <= oracle_active_set_limit) {
    ref.x_star = active_set_solve(game).x_star.stacked();
  } else if (size <= oracle_central_limit) {
    try {
      ref.x_star = central_solve(game, 1e-9).x_star.stacked();
    } catch (const NonConvergence& e) {
      notes.push_back(std::string("oracle unavailable: ") + e.what());
    }
  } else {
    notes.push_back("oracle skipped: n + m = " + std::to_string(size) + " exceeds " +
                    std::to_string(oracle_central_limit));
  }

  Engine engine{game, steps, c, nullptr};
  if (c.outputs.reference_pass) {
    // Deterministic trajectory: a converged first pass yields the limit used by rel_w_err and fejer_phi.
    const RunResult first = engine(c.stop, {});
    if (first.status == RunStatus::converged) {
      ref.w_star = stack_iterate(game, first.states);
      ref.phi = assemble_phi(game, steps);
    } else {
      notes.push_back("reference pass did not converge; rel_w_err and fejer_phi left blank");
    }
  }

  RunOutcome out;
  TraceRecorder rec(game, ref);
  std::vector<std::string> extra;
  auto observer = [&](std::size_t r, const NetworkState& before, const NetworkState& after) {
    rec(r, before, after);
    if (c.full_trace) {
      std::string cols;
      for (const auto& a : after)
        for (Eigen::Index k = 0; k < a.x.size(); ++k) cols += "," + fmt_double(a.x(k));
      for (const auto& a : after)
        for (Eigen::Index k = 0; k < a.lambda.size(); ++k) cols += "," + fmt_double(a.lambda(k));
      extra.push_back(std::move(cols));
    }
  };
  engine.message_log = message_log;
  const auto t0 = std::chrono::steady_clock::now();
  out.result = engine(c.stop, observer);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.rows = rec.rows();
  out.kkt = kkt_residual(game, out.result.states);
  out.exit_code = exit_code(out.result.status);

  std::ostringstream csv;
  csv << "round,dx_norm,dw_norm,rel_x_err,rel_w_err,consensus,complementarity,feasibility,fejer_phi";
  if (c.full_trace) {
    for (std::size_t i = 0; i < game.players.size(); ++i)
      for (std::size_t k = 0; k < game.players[i].dim; ++k) csv << ",x_" << i << "_" << k;
    for (std::size_t i = 0; i < game.players.size(); ++i)
      for (std::size_t k = 0; k < game.m; ++k) csv << ",lambda_" << i << "_" << k;
  }
  csv << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    const TraceRow& row = out.rows[r];
    csv << row.round << ',' << fmt_double(row.dx_norm) << ',' << fmt_double(row.dw_norm) << ',' << opt(row.rel_x_err)
        << ',' << opt(row.rel_w_err) << ',' << fmt_double(row.consensus) << ',' << fmt_double(row.complementarity)
        << ',' << fmt_double(row.feasibility) << ',' << opt(row.fejer_phi);
    if (c.full_trace) csv << extra[r];
    csv << '\n';
  }
  out.trace_csv = csv.str();

  json objectives = json::array();
  DecisionProfile prof;
  for (const auto& a : out.result.states) prof.blocks.push_back(a.x);
  for (std::size_t i = 0; i < game.players.size(); ++i)
    objectives.push_back(game.players[i].objective(prof.blocks[i], neighbor_view(game, prof, i)));

  out.summary = {{"status", to_string(out.result.status)},
                 {"rounds", out.result.rounds},
                 {"last_drift", out.result.last_drift},
                 {"kkt", kkt_json(out.kkt)},
                 {"objectives", objectives},
                 {"wall_time_s", wall},
                 {"algorithm", to_string(c.algorithm)},
                 {"mode", to_string(c.mode)},
                 {"parameters",
                  {{"provenance", c.parameters.automatic ? "auto" : "manual"},
                   {"guaranteed", audit.guaranteed()},
                   {"tau", vec_json(steps.tau)},
                   {"nu", vec_json(steps.nu)},
                   {"sigma", vec_json(steps.sigma)},
                   {"delta", steps.delta},
                   {"beta", steps.beta},
                   {"alpha", steps.alpha},
                   {"epsilon", steps.epsilon}}},
                 {"rounds_to_1e-6", rounds_to_tolerance(out.rows, 1e-6)},
                 {"notes", notes}};
  if (!out.result.error.empty()) out.summary["error"] = out.result.error;
  if (!audit.guaranteed()) out.summary["trace_flag"] = "unguaranteed";
  out.solution = solution_json(out.result.states);
  return out;
}

inline std::filesystem::path output_path(const std::string& p, const std::filesystem::path& out_dir) {
  std::filesystem::path path(p);
  return path.is_relative() ? out_dir / path : path;
}

/// Writes the generated instance as JSON and returns the text.
inline std::string cmd_generate(std::uint64_t seed, std::size_t companies, std::size_t markets, double density,
                                const std::filesystem::path& out) {
  const auto cfg = cournot::sample_random_instance(seed, companies, markets, density);
  const std::string text = json(cfg).dump(2) + "\n";
  if (!out.empty()) write_text_file(out, text);
  return text;
}

/// Runs the config and writes trace, summary and solution under out_dir.
inline RunOutcome cmd_run(const ExperimentConfig& c, const std::filesystem::path& base_dir,
                          const std::filesystem::path& out_dir) {
  const auto cfg = resolve_instance(c, base_dir);
  std::ofstream log_stream;
  if (!c.outputs.message_log.empty()) {
    const auto p = output_path(c.outputs.message_log, out_dir);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    log_stream.open(p, std::ios::binary);
    if (!log_stream) throw InvalidConfig("cannot write " + p.string());
  }
  RunOutcome out = execute(c, cfg, log_stream.is_open() ? &log_stream : nullptr);
  write_text_file(output_path(c.outputs.trace, out_dir), out.trace_csv);
  write_text_file(output_path(c.outputs.summary, out_dir), out.summary.dump(2) + "\n");
  write_text_file(output_path(c.outputs.solution, out_dir), out.solution.dump(2) + "\n");
  return out;
}

struct VerifyReport {
  KKTResidual residual;
  double tol = 0.0;
  bool pass = false;
  std::vector<std::string> failures;  // residual components above tol
};

/// KKT check of a solution file. A "lambda" list of per-agent vectors uses the
/// multi-multiplier residual; a flat vector is a shared multiplier.
inline VerifyReport cmd_verify(const ExperimentConfig& c, const std::filesystem::path& base_dir,
                               const std::filesystem::path& solution_file, double tol) {
  const auto cfg = resolve_instance(c, base_dir);
  const GameSpec game = cournot::build_cournot_game(cfg);
  const json sol = read_json_file(solution_file);
  VerifyReport rep;
  rep.tol = tol;
  try {
    DecisionProfile x;
    for (const auto& b : sol.at("x")) {
      const auto v = b.get<std::vector<double>>();
      x.blocks.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    const json& lam = sol.at("lambda");
    if (!lam.empty() && lam[0].is_array()) {
      NetworkState st;
      for (std::size_t i = 0; i < lam.size(); ++i) {
        const auto l = lam[i].get<std::vector<double>>();
        Vec z = Vec::Zero(static_cast<Eigen::Index>(l.size()));
        if (i >= x.blocks.size()) throw DimensionError("more multipliers than players");
        st.push_back(AgentState::at(x.blocks[i], z, Eigen::Map<const Vec>(l.data(), static_cast<Eigen::Index>(l.size()))));
      }
      rep.residual = kkt_residual(game, st);
    } else {
      const auto l = lam.get<std::vector<double>>();
      rep.residual = kkt_residual(game, x, Eigen::Map<const Vec>(l.data(), static_cast<Eigen::Index>(l.size())));
    }
  } catch (const json::exception& e) {
    throw InvalidConfig(solution_file.string() + ": " + e.what());
  }
  const std::pair<const char*, double> parts[] = {{"stationarity", rep.residual.stationarity},
                                                  {"primal", rep.residual.primal},
                                                  {"dual", rep.residual.dual},
                                                  {"complementarity", rep.residual.complementarity},
                                                  {"consensus", rep.residual.consensus}};
  for (const auto& [name, v] : parts)
    if (!(v <= tol)) rep.failures.push_back(name);
  rep.pass = rep.failures.empty();
  return rep;
}

struct CompareRow {
  std::string label;
  Algorithm algorithm = Algorithm::plain;
  double alpha = 0.0;
  RunStatus status = RunStatus::cap;
  std::size_t rounds = 0;
  std::size_t rounds_to_tol = 0;
  double final_dx = 0.0;
  double final_kkt = 0.0;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::string series_csv;  // round, dx of each run aligned by round
  std::string table;
};

/// Runs both configs on the same instance and lines up their decision-drift series.
inline CompareResult cmd_compare(const std::vector<LoadedConfig>& configs, double tol) {
  if (configs.size() != 2) throw InvalidConfig("compare needs exactly two configs");
  const auto a = resolve_instance(configs[0].config, configs[0].base_dir);
  const auto b = resolve_instance(configs[1].config, configs[1].base_dir);
  if (!(a == b)) throw InvalidConfig("compare refuses configs describing different instances");

  CompareResult res;
  std::vector<std::vector<TraceRow>> series;
  for (std::size_t k = 0; k < 2; ++k) {
    ExperimentConfig c = configs[k].config;
    c.outputs.reference_pass = false;
    const RunOutcome out = execute(c, a);
    CompareRow row;
    row.label = k == 0 ? "A" : "B";
    row.algorithm = c.algorithm;
    row.alpha = c.alpha;
    row.status = out.result.status;
    row.rounds = out.result.rounds;
    row.rounds_to_tol = rounds_to_tolerance(out.rows, tol);
    row.final_dx = out.rows.empty() ? 0.0 : out.rows.back().dx_norm;
    row.final_kkt = out.kkt.max();
    res.rows.push_back(row);
    series.push_back(out.rows);
  }
  std::ostringstream csv;
  csv << "round,dx_norm_a,dx_norm_b\n";
  const std::size_t len = std::max(series[0].size(), series[1].size());
  for (std::size_t r = 0; r < len; ++r) {
    csv << r + 1 << ',' << (r < series[0].size() ? fmt_double(series[0][r].dx_norm) : "") << ','
        << (r < series[1].size() ? fmt_double(series[1][r].dx_norm) : "") << '\n';
  }
  res.series_csv = csv.str();

  std::ostringstream t;
  t << "run  algorithm  alpha  status           rounds  rounds_to_" << fmt_double(tol) << "  final_dx  final_kkt\n";
  for (const auto& r : res.rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-10s %-6.3g %-16s %7zu  %14zu  %.3e  %.3e\n", r.label.c_str(),
                  to_string(r.algorithm), r.alpha, to_string(r.status), r.rounds, r.rounds_to_tol, r.final_dx,
                  r.final_kkt);
    t << line;
  }
  res.table = t.str();
  return res;
}

}  // namespace experiment
}  // namespace gne
