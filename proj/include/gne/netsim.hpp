#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <compare>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "gne/engine.hpp"
#include "gne/errors.hpp"
#include "gne/game.hpp"

namespace gne::netsim {

enum class MessageKind : std::uint8_t { decision_obs = 0, multiplier_share = 1, aux_share = 2 };

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::decision_obs: return "DecisionObs";
    case MessageKind::multiplier_share: return "MultiplierShare";
    case MessageKind::aux_share: return "AuxShare";
  }
  return "?";
}

struct Envelope {
  MessageKind kind = MessageKind::decision_obs;
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t round = 0;
  Vec payload;
};

struct LocalityViolation {
  std::size_t round = 0;
  std::size_t agent = 0;  // the agent that sent or read illegally
  MessageKind kind = MessageKind::decision_obs;
  std::size_t from = 0;
  std::size_t to = 0;
  std::string detail;
};

struct EdgeKey {
  MessageKind kind;
  std::size_t from;
  std::size_t to;

  auto operator<=>(const EdgeKey&) const = default;
};

struct RoundLog {
  std::size_t round = 0;
  std::array<std::size_t, 3> counts{};
  std::vector<LocalityViolation> violations;

  std::size_t total_messages() const { return counts[0] + counts[1] + counts[2]; }
  std::size_t count(MessageKind k) const { return counts[static_cast<std::size_t>(k)]; }
};

enum class Mode { strict, permissive };

/// Fault injection: agent reads an envelope of `kind` from `from` every round.
struct PlantedRead {
  std::size_t agent = 0;
  MessageKind kind = MessageKind::multiplier_share;
  std::size_t from = 0;
};

struct Options {
  Mode mode = Mode::strict;
  std::vector<PlantedRead> planted_reads;
  std::ostream* message_log = nullptr;  // JSON lines {round, kind, from, to, norm}
  std::vector<std::size_t> schedule;    // agent execution order inside a sub-phase; empty = 0..N-1
};

/// Synchronous two-sub-phase execution of the distributed iteration where every agent
/// sees only envelopes the interference and multiplier graphs allow.
///
/// Sub-phase 1 delivers decisions over the interference graph and multipliers over the
/// multiplier graph; agents then update x and z. Sub-phase 2 delivers the fresh z and
/// agents update lambda. In inertial mode each agent first extrapolates locally, and
/// neighbors' extrapolated z is rebuilt from the last two AuxShare payloads.
class Network {
 public:
  Network(const GameSpec& game, StepSizeBundle steps, Algorithm algorithm, NetworkState init, Options options = {})
      : game_(game), steps_(std::move(steps)), algorithm_(algorithm), options_(std::move(options)) {
    detail::check_states(game_, init);
    detail::check_steps(game_, steps_);
    const std::size_t n = game_.players.size();
    n_ = n;
    if (options_.schedule.empty()) {
      options_.schedule.resize(n);
      std::iota(options_.schedule.begin(), options_.schedule.end(), std::size_t{0});
    }
    std::vector<std::size_t> sorted = options_.schedule;
    std::sort(sorted.begin(), sorted.end());
    bool permutation = sorted.size() == n;
    for (std::size_t k = 0; permutation && k < n; ++k) permutation = sorted[k] == k;
    if (!permutation) throw InvalidConfig("schedule must be a permutation of the agents");

    agents_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Agent& a = agents_[i];
      a.state = std::move(init[i]);
      a.observers = game_.interference.neighbors(i);
      a.multiplier_nbrs = game_.multiplier.neighbors(i);
      for (std::size_t j : a.multiplier_nbrs) a.weights.push_back(game_.multiplier.weight(i, j));
      a.nbr_z.resize(a.multiplier_nbrs.size());
      a.prev_nbr_z.resize(a.multiplier_nbrs.size());
    }
    for (auto& box : inbox_) box.assign(n * n, Slot{});
    traffic_.assign(3 * n * n, 0);
    handshake();
  }

  /// Executes one full round and returns its log.
  RoundLog run_round() {
    ++round_;
    history_.push_back(RoundLog{});
    current_ = &history_.back();
    current_->round = round_;
    const std::size_t n = n_;

    // Acceleration phase (local, no communication).
    for (std::size_t i = 0; i < n; ++i) local_point(agents_[i], points_[i]);

    // Sub-phase 1: observations and multiplier shares of the round's point.
    for (auto kind : {MessageKind::decision_obs, MessageKind::multiplier_share, MessageKind::aux_share}) clear(kind);
    for (std::size_t i : options_.schedule) {
      for (std::size_t j : agents_[i].observers) post(MessageKind::decision_obs, i, j, points_[i].x);
      for (std::size_t j : agents_[i].multiplier_nbrs) post(MessageKind::multiplier_share, i, j, points_[i].lambda);
    }
    for (std::size_t i : options_.schedule) {
      Agent& a = agents_[i];
      for (const auto& f : options_.planted_reads)
        if (f.agent == i) read(i, f.kind, f.from);
      NeighborDecisions view([this, i](std::size_t j) {
        record({round_, i, MessageKind::decision_obs, j, i,
                "agent " + std::to_string(i) + " gradient oracle requested x_" + std::to_string(j) +
                    " without a delivered envelope"},
               /*fatal=*/false);
      });
      for (std::size_t j = 0; j < n; ++j) {
        const Slot& s = slot(MessageKind::decision_obs, j, i);
        if (s.delivered) view.insert(j, s.payload);
      }
      a.nbrs.clear();
      for (std::size_t t = 0; t < a.multiplier_nbrs.size(); ++t) {
        const std::size_t j = a.multiplier_nbrs[t];
        const Vec* lam_j = read(i, MessageKind::multiplier_share, j);
        a.z_point[t] = algorithm_ == Algorithm::plain ? a.nbr_z[t]
                                                      : local::extrapolate(a.nbr_z[t], a.prev_nbr_z[t], steps_.alpha);
        a.nbrs.push_back({a.weights[t], lam_j, &a.z_point[t], nullptr});
      }
      const auto k = static_cast<Eigen::Index>(i);
      a.x_next = local::primal_step(game_.players[i], i, points_[i].x, view, points_[i].lambda, steps_.tau(k));
      a.z_next = local::aux_step(i, points_[i].z, points_[i].lambda, a.nbrs, steps_.nu(k));
    }

    // Sub-phase 2: fresh auxiliary variables. Multiplier shares stay readable.
    clear(MessageKind::aux_share);
    for (std::size_t i : options_.schedule)
      for (std::size_t j : agents_[i].multiplier_nbrs) post(MessageKind::aux_share, i, j, agents_[i].z_next);
    for (std::size_t i : options_.schedule) {
      Agent& a = agents_[i];
      for (std::size_t t = 0; t < a.multiplier_nbrs.size(); ++t)
        a.nbrs[t].z_new = read(i, MessageKind::aux_share, a.multiplier_nbrs[t]);
      const auto k = static_cast<Eigen::Index>(i);
      a.lambda_next = local::multiplier_step(game_.players[i], i, points_[i].lambda, points_[i].x, a.x_next,
                                             points_[i].z, a.z_next, a.nbrs, steps_.sigma(k));
    }

    for (std::size_t i = 0; i < n; ++i) {
      Agent& a = agents_[i];
      for (std::size_t t = 0; t < a.multiplier_nbrs.size(); ++t) {
        std::swap(a.prev_nbr_z[t], a.nbr_z[t]);
        a.nbr_z[t] = *a.nbrs[t].z_new;
      }
      std::swap(a.state.prev_x, a.state.x);
      std::swap(a.state.prev_z, a.state.z);
      std::swap(a.state.prev_lambda, a.state.lambda);
      std::swap(a.state.x, a.x_next);
      std::swap(a.state.z, a.z_next);
      std::swap(a.state.lambda, a.lambda_next);
    }
    current_ = nullptr;
    return history_.back();
  }

  NetworkState states() const {
    NetworkState s;
    s.reserve(n_);
    for (const auto& a : agents_) s.push_back(a.state);
    return s;
  }

  const std::vector<RoundLog>& history() const { return history_; }
  const RoundLog& setup_log() const { return setup_; }
  std::size_t round() const { return round_; }

  /// Cumulative per-edge message totals, setup handshake included.
  std::map<EdgeKey, std::size_t> traffic() const {
    std::map<EdgeKey, std::size_t> out;
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t from = 0; from < n_; ++from)
        for (std::size_t to = 0; to < n_; ++to)
          if (std::size_t c = traffic_[(k * n_ + from) * n_ + to])
            out[{static_cast<MessageKind>(k), from, to}] = c;
    return out;
  }

 private:
  struct Point {
    Vec x, z, lambda;
  };

  struct Slot {
    Vec payload;
    bool delivered = false;
  };

  struct Agent {
    AgentState state;
    std::vector<std::size_t> observers;  // agents whose objective reads this agent's decision
    std::vector<std::size_t> multiplier_nbrs;
    std::vector<double> weights;
    std::vector<Vec> nbr_z;       // z_j at the current round, from AuxShare
    std::vector<Vec> prev_nbr_z;  // z_j one round earlier
    std::vector<Vec> z_point;     // z_j at the round's (possibly extrapolated) point
    std::vector<local::MultiplierNeighbor> nbrs;
    Vec x_next, z_next, lambda_next;
  };

  void local_point(const Agent& a, Point& p) const {
    if (algorithm_ == Algorithm::plain) {
      p.x = a.state.x;
      p.z = a.state.z;
      p.lambda = a.state.lambda;
      return;
    }
    p.x = local::extrapolate(a.state.x, a.state.prev_x, steps_.alpha);
    p.z = local::extrapolate(a.state.z, a.state.prev_z, steps_.alpha);
    p.lambda = local::extrapolate(a.state.lambda, a.state.prev_lambda, steps_.alpha);
  }

  Slot& slot(MessageKind kind, std::size_t from, std::size_t to) {
    return inbox_[static_cast<std::size_t>(kind)][to * n_ + from];
  }

  bool permitted(MessageKind kind, std::size_t from, std::size_t to) const {
    if (from >= n_ || to >= n_) return false;
    if (kind == MessageKind::decision_obs) return game_.interference.has_edge(from, to);
    return game_.multiplier.has_edge(from, to);
  }

  void record(LocalityViolation v, bool fatal = true) {
    RoundLog& log = current_ ? *current_ : setup_;
    log.violations.push_back(v);
    if (fatal && options_.mode == Mode::strict)
      throw LocalityError("locality violation in round " + std::to_string(v.round) + ": " + v.detail);
  }

  void post(MessageKind kind, std::size_t from, std::size_t to, const Vec& payload) {
    const std::size_t expected = kind == MessageKind::decision_obs ? game_.players[from].dim : game_.m;
    if (static_cast<std::size_t>(payload.size()) != expected)
      throw DimensionError(std::string(to_string(kind)) + " payload has wrong length");
    if (!permitted(kind, from, to)) {
      record({round_, from, kind, from, to,
              "agent " + std::to_string(from) + " sent " + to_string(kind) + " to non-neighbor " + std::to_string(to)});
      return;
    }
    RoundLog& log = current_ ? *current_ : setup_;
    ++log.counts[static_cast<std::size_t>(kind)];
    ++traffic_[(static_cast<std::size_t>(kind) * n_ + from) * n_ + to];
    if (options_.message_log) {
      nlohmann::json line = {
          {"round", round_}, {"kind", to_string(kind)}, {"from", from}, {"to", to}, {"norm", payload.norm()}};
      *options_.message_log << line.dump() << '\n';
    }
    Slot& s = slot(kind, from, to);
    s.payload = payload;
    s.delivered = true;
  }

  /// Payload delivered to `agent` by `from`; a missing envelope is a locality violation.
  const Vec* read(std::size_t agent, MessageKind kind, std::size_t from) {
    if (from < n_) {
      const Slot& s = slot(kind, from, agent);
      if (s.delivered) return &s.payload;
    }
    record({round_, agent, kind, from, agent,
            "agent " + std::to_string(agent) + " read " + to_string(kind) + " from " + std::to_string(from) +
                " without a delivered envelope"});
    static const Vec empty;
    return &empty;
  }

  void clear(MessageKind kind) {
    for (auto& s : inbox_[static_cast<std::size_t>(kind)]) s.delivered = false;
  }

  /// Deployment-time exchange of the initial z and its history over the multiplier graph.
  void handshake() {
    for (int pass = 0; pass < 2; ++pass) {
      clear(MessageKind::aux_share);
      for (std::size_t i = 0; i < n_; ++i) {
        const Vec& z = pass == 0 ? agents_[i].state.prev_z : agents_[i].state.z;
        for (std::size_t j : agents_[i].multiplier_nbrs) post(MessageKind::aux_share, i, j, z);
      }
      for (std::size_t i = 0; i < n_; ++i) {
        Agent& a = agents_[i];
        for (std::size_t t = 0; t < a.multiplier_nbrs.size(); ++t)
          (pass == 0 ? a.prev_nbr_z : a.nbr_z)[t] = *read(i, MessageKind::aux_share, a.multiplier_nbrs[t]);
      }
    }
    clear(MessageKind::aux_share);
    points_.resize(n_);
    for (auto& a : agents_) a.z_point.resize(a.multiplier_nbrs.size());
  }

  const GameSpec& game_;
  StepSizeBundle steps_;
  Algorithm algorithm_;
  Options options_;
  std::size_t n_ = 0;
  std::vector<Agent> agents_;
  std::vector<Point> points_;
  std::array<std::vector<Slot>, 3> inbox_;  // [kind][to * N + from]
  std::vector<std::size_t> traffic_;        // [(kind * N + from) * N + to]
  std::vector<RoundLog> history_;
  RoundLog setup_;
  RoundLog* current_ = nullptr;
  std::size_t round_ = 0;
};

struct AuditReport {
  std::vector<LocalityViolation> violations;
  std::map<EdgeKey, std::size_t> traffic;

  bool clean() const { return violations.empty(); }

  std::size_t traffic_on(MessageKind kind, std::size_t from, std::size_t to) const {
    auto it = traffic.find({kind, from, to});
    return it == traffic.end() ? 0 : it->second;
  }
};

/// Every violation recorded so far (setup included) and the per-edge traffic totals.
inline AuditReport locality_audit(const Network& net) {
  AuditReport rep;
  rep.violations = net.setup_log().violations;
  for (const auto& log : net.history())
    rep.violations.insert(rep.violations.end(), log.violations.begin(), log.violations.end());
  rep.traffic = net.traffic();
  return rep;
}

struct NetsimRun {
  RunResult result;
  std::vector<RoundLog> history;
  AuditReport audit;
};

/// Runs the simulator until the stop rule fires. In strict mode a locality violation
/// aborts with LocalityError.
inline NetsimRun run(const GameSpec& game, const StepSizeBundle& steps, Algorithm algorithm, NetworkState init,
                     const StopRule& stop, Options options = {}, const RoundObserver& observer = {}) {
  Network net(game, steps, algorithm, init, std::move(options));
  NetsimRun out;
  auto step = [&](const NetworkState&) {
    net.run_round();
    return net.states();
  };
  out.result = run_loop(std::move(init), stop, step, observer);
  out.result.guaranteed = check_step_sizes(game, steps).guaranteed();
  out.audit = locality_audit(net);
  out.history = net.history();
  return out;
}

}  // namespace gne::netsim
