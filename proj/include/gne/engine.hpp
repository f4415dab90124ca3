#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gne/errors.hpp"
#include "gne/game.hpp"
#include "gne/graph.hpp"

namespace gne {

/// One player's local iterate with a one-round history for the inertial variant.
struct AgentState {
  Vec x;
  Vec z;
  Vec lambda;
  Vec prev_x;
  Vec prev_z;
  Vec prev_lambda;

  static AgentState zeros(std::size_t dim, std::size_t m) {
    AgentState s;
    s.x = Vec::Zero(static_cast<Eigen::Index>(dim));
    s.z = Vec::Zero(static_cast<Eigen::Index>(m));
    s.lambda = Vec::Zero(static_cast<Eigen::Index>(m));
    s.prev_x = s.x;
    s.prev_z = s.z;
    s.prev_lambda = s.lambda;
    return s;
  }

  /// Start from (x, z, lambda) with zero momentum.
  static AgentState at(Vec x, Vec z, Vec lambda) {
    AgentState s;
    s.x = std::move(x);
    s.z = std::move(z);
    s.lambda = std::move(lambda);
    s.prev_x = s.x;
    s.prev_z = s.z;
    s.prev_lambda = s.lambda;
    return s;
  }
};

using NetworkState = std::vector<AgentState>;

inline NetworkState zero_state(const GameSpec& game) {
  NetworkState s;
  for (const auto& p : game.players) s.push_back(AgentState::zeros(p.dim, game.m));
  return s;
}

enum class Algorithm { plain, inertial };

struct StepSizeBundle {
  Vec tau;
  Vec nu;
  Vec sigma;
  double delta = 0.0;
  double beta = 0.0;  // 0 when unknown
  double alpha = 0.0;
  double epsilon = 0.0;
  bool automatic = false;

  static StepSizeBundle uniform(std::size_t players, double tau, double nu, double sigma, double alpha = 0.0) {
    StepSizeBundle s;
    const auto n = static_cast<Eigen::Index>(players);
    s.tau = Vec::Constant(n, tau);
    s.nu = Vec::Constant(n, nu);
    s.sigma = Vec::Constant(n, sigma);
    s.alpha = alpha;
    s.epsilon = alpha;
    return s;
  }
};

/// Cocoercivity constant of the augmented forward operator: min{1/(2 d*), eta/theta^2}.
inline double compute_beta(double d_star, double eta, double theta) {
  if (!(eta > 0.0)) throw AssumptionViolation("strong monotonicity constant eta must be positive");
  if (!(theta > 0.0)) throw AssumptionViolation("Lipschitz constant theta must be positive");
  if (d_star < 0.0) throw InvalidGraph("negative maximal degree");
  const double graph_term = d_star > 0.0 ? 1.0 / (2.0 * d_star) : std::numeric_limits<double>::infinity();
  return std::min(graph_term, eta / (theta * theta));
}

/// max_j sum_k |M_jk|.
inline double max_abs_row_sum(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Each player's steps at their upper bounds for the given delta:
/// tau_i = 1/(|A_i^T|_row + delta), nu_i = 1/(2 d_i + delta), sigma_i = 1/(|A_i|_row + 2 d_i + delta).
inline StepSizeBundle synthesize_step_sizes(const GameSpec& game, double delta) {
  if (!(delta > 0.0)) throw InvalidConfig("delta must be positive");
  const std::size_t n = game.players.size();
  StepSizeBundle s;
  s.tau.resize(static_cast<Eigen::Index>(n));
  s.nu.resize(s.tau.size());
  s.sigma.resize(s.tau.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const Mat& a = game.players[i].A;
    const double di = game.multiplier.degree(i);
    s.tau(k) = 1.0 / (max_abs_row_sum(a.transpose()) + delta);
    s.nu(k) = 1.0 / (2.0 * di + delta);
    s.sigma(k) = 1.0 / (max_abs_row_sum(a) + 2.0 * di + delta);
  }
  s.delta = delta;
  s.automatic = true;
  return s;
}

/// 2 beta delta (1 - 3 alpha - epsilon) >= (1 - alpha)^2.
inline bool check_inertia(double alpha, double epsilon, double beta, double delta) {
  return 2.0 * beta * delta * (1.0 - 3.0 * alpha - epsilon) >= (1.0 - alpha) * (1.0 - alpha);
}

/// beta from the multiplier graph and declared (eta, theta); delta defaults to 1/beta and
/// epsilon to alpha.
inline StepSizeBundle auto_step_sizes(const GameSpec& game, std::optional<double> delta = std::nullopt,
                                      double alpha = 0.0, std::optional<double> epsilon = std::nullopt) {
  if (!game.monotonicity)
    throw InvalidConfig("automatic step sizes need declared monotonicity constants (eta, theta)");
  const double d_star = build_laplacian(game.multiplier).d_star;
  const double beta = compute_beta(d_star, game.monotonicity->eta, game.monotonicity->theta);
  StepSizeBundle s = synthesize_step_sizes(game, delta.value_or(1.0 / beta));
  s.beta = beta;
  s.alpha = alpha;
  s.epsilon = epsilon.value_or(alpha);
  return s;
}

struct StepSizeAudit {
  bool dimensions_ok = true;
  bool positive = true;
  bool bounds_hold = false;             // steps within their upper bounds at the bundle's delta
  double max_admissible_delta = 0.0;    // largest delta for which every bound holds (<= 0: none)
  bool delta_exceeds_half_inverse_beta = false;
  bool inertia_ok = true;

  /// Convergence guarantee applies to the bundle as given.
  bool guaranteed() const {
    return dimensions_ok && positive && bounds_hold && delta_exceeds_half_inverse_beta && inertia_ok;
  }
};

inline StepSizeAudit check_step_sizes(const GameSpec& game, const StepSizeBundle& s) {
  StepSizeAudit audit;
  const auto n = static_cast<Eigen::Index>(game.players.size());
  if (s.tau.size() != n || s.nu.size() != n || s.sigma.size() != n) {
    audit.dimensions_ok = false;
    return audit;
  }
  audit.positive = (s.tau.array() > 0).all() && (s.nu.array() > 0).all() && (s.sigma.array() > 0).all() &&
                   s.alpha >= 0.0 && s.alpha < 1.0;
  double slack = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const Mat& a = game.players[i].A;
    const double di = game.multiplier.degree(i);
    slack = std::min(slack, 1.0 / s.tau(k) - max_abs_row_sum(a.transpose()));
    slack = std::min(slack, 1.0 / s.nu(k) - 2.0 * di);
    slack = std::min(slack, 1.0 / s.sigma(k) - max_abs_row_sum(a) - 2.0 * di);
  }
  audit.max_admissible_delta = slack;
  // Relative slack absorbs the rounding of 1/(1/x).
  audit.bounds_hold = s.delta > 0.0 && slack >= s.delta * (1.0 - 1e-12);
  audit.delta_exceeds_half_inverse_beta = s.beta > 0.0 && s.delta > 1.0 / (2.0 * s.beta);
  if (s.alpha > 0.0)
    audit.inertia_ok = s.beta > 0.0 && s.epsilon > 0.0 && s.epsilon < 1.0 && check_inertia(s.alpha, s.epsilon, s.beta, s.delta);
  return audit;
}

/// Layout helpers for the stacked iterate col(x, z_1..z_N, lambda_1..lambda_N).
struct StackLayout {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t players = 0;

  explicit StackLayout(const GameSpec& game) : n(game.total_dim()), m(game.m), players(game.players.size()) {}

  std::size_t size() const { return n + 2 * m * players; }
  Eigen::Index z_offset(std::size_t i) const { return static_cast<Eigen::Index>(n + m * i); }
  Eigen::Index lambda_offset(std::size_t i) const { return static_cast<Eigen::Index>(n + m * players + m * i); }
};

/// varpi = col(x, z-bar, lambda-bar).
inline Vec stack_iterate(const GameSpec& game, const NetworkState& states) {
  const StackLayout lay(game);
  Vec w(static_cast<Eigen::Index>(lay.size()));
  Eigen::Index off = 0;
  const auto m = static_cast<Eigen::Index>(lay.m);
  for (std::size_t i = 0; i < states.size(); ++i) {
    w.segment(off, states[i].x.size()) = states[i].x;
    off += states[i].x.size();
    w.segment(lay.z_offset(i), m) = states[i].z;
    w.segment(lay.lambda_offset(i), m) = states[i].lambda;
  }
  return w;
}

inline NetworkState unstack_iterate(const GameSpec& game, const Vec& w) {
  const StackLayout lay(game);
  if (static_cast<std::size_t>(w.size()) != lay.size()) throw DimensionError("stacked iterate has wrong length");
  NetworkState s;
  Eigen::Index off = 0;
  const auto m = static_cast<Eigen::Index>(lay.m);
  for (std::size_t i = 0; i < game.players.size(); ++i) {
    const auto d = static_cast<Eigen::Index>(game.players[i].dim);
    s.push_back(AgentState::at(w.segment(off, d), w.segment(lay.z_offset(i), m), w.segment(lay.lambda_offset(i), m)));
    off += d;
  }
  return s;
}

/// Symmetric metric
///   [ tau^-1   0       Lambda^T ]
///   [ 0        nu^-1   L-bar    ]
///   [ Lambda   L-bar   sigma^-1 ]
/// with Lambda = diag{A_1..A_N} and L-bar = L (x) I_m.
struct PhiMetric {
  Mat matrix;
  double min_eigenvalue = 0.0;

  double norm(const Vec& v) const { return std::sqrt(std::max(0.0, v.dot(matrix * v))); }
};

inline PhiMetric assemble_phi(const GameSpec& game, const StepSizeBundle& s) {
  const StackLayout lay(game);
  const auto total = static_cast<Eigen::Index>(lay.size());
  const auto m = static_cast<Eigen::Index>(lay.m);
  const Mat lap = build_laplacian(game.multiplier).laplacian;
  PhiMetric phi;
  phi.matrix = Mat::Zero(total, total);
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < game.players.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const Mat& a = game.players[i].A;
    const auto d = a.cols();
    phi.matrix.block(off, off, d, d).diagonal().setConstant(1.0 / s.tau(k));
    phi.matrix.block(lay.lambda_offset(i), off, m, d) = a;
    phi.matrix.block(off, lay.lambda_offset(i), d, m) = a.transpose();
    phi.matrix.block(lay.z_offset(i), lay.z_offset(i), m, m).diagonal().setConstant(1.0 / s.nu(k));
    phi.matrix.block(lay.lambda_offset(i), lay.lambda_offset(i), m, m).diagonal().setConstant(1.0 / s.sigma(k));
    for (std::size_t j = 0; j < game.players.size(); ++j) {
      const double l = lap(k, static_cast<Eigen::Index>(j));
      if (l == 0.0) continue;
      phi.matrix.block(lay.z_offset(i), lay.lambda_offset(j), m, m).diagonal().setConstant(l);
      phi.matrix.block(lay.lambda_offset(i), lay.z_offset(j), m, m).diagonal().setConstant(l);
    }
    off += d;
  }
  if (total > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(phi.matrix, Eigen::EigenvaluesOnly);
    phi.min_eigenvalue = eig.eigenvalues().minCoeff();
  }
  return phi;
}

/// Row-wise diagonal dominance of Phi - delta I (the Gershgorin argument behind the step bounds).
inline bool phi_rows_dominant(const PhiMetric& phi, double delta) {
  const Mat& p = phi.matrix;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double off_diag = p.row(r).cwiseAbs().sum() - std::abs(p(r, r));
    if (p(r, r) - delta < off_diag - 1e-12 * std::abs(p(r, r))) return false;
  }
  return true;
}

/// Forward operator col(F(x), 0, L-bar lambda-bar - b-bar) on a stacked iterate.
inline Vec augmented_forward(const GameSpec& game, const Vec& w) {
  const StackLayout lay(game);
  const NetworkState s = unstack_iterate(game, w);
  DecisionProfile x;
  for (const auto& a : s) x.blocks.push_back(a.x);
  Vec out = Vec::Zero(w.size());
  out.head(static_cast<Eigen::Index>(lay.n)) = pseudo_gradient(game, x);
  const auto m = static_cast<Eigen::Index>(lay.m);
  for (std::size_t i = 0; i < s.size(); ++i) {
    Vec r = -game.players[i].b;
    for (std::size_t j : game.multiplier.neighbors(i)) r += game.multiplier.weight(i, j) * (s[i].lambda - s[j].lambda);
    out.segment(lay.lambda_offset(i), m) = r;
  }
  return out;
}

/// Local update kernels shared by the direct engine and the message-passing simulator.
/// Neighbor sums run in ascending neighbor id so both paths are bit-identical.
namespace local {

struct MultiplierNeighbor {
  double weight = 0.0;
  const Vec* lambda = nullptr;  // lambda_j at the round's (possibly extrapolated) point
  const Vec* z_old = nullptr;   // z_j at the round's point
  const Vec* z_new = nullptr;   // z_j after this round's aux step
};

inline void require_finite(const Vec& v, std::size_t agent, const char* phase) {
  if (!v.allFinite()) throw NumericFailure(agent, phase);
}

/// x_i+ = P_Omega_i[x_i - tau_i (grad_i f_i(x_i, x_Ni) - A_i^T lambda_i)].
inline Vec primal_step(const PlayerSpec& p, std::size_t agent, const Vec& x, const NeighborDecisions& neighbors,
                       const Vec& lambda, double tau) {
  Vec g = p.gradient(x, neighbors);
  if (static_cast<std::size_t>(g.size()) != p.dim)
    throw DimensionError("gradient oracle of player " + std::to_string(agent) + " returned wrong length");
  require_finite(g, agent, "gradient");
  Vec next = p.project(x - tau * (g - p.A.transpose() * lambda));
  require_finite(next, agent, "primal");
  return next;
}

/// z_i+ = z_i + nu_i sum_j w_ij (lambda_i - lambda_j).
inline Vec aux_step(std::size_t agent, const Vec& z, const Vec& lambda, std::span<const MultiplierNeighbor> nbrs,
                    double nu) {
  Vec disagreement = Vec::Zero(z.size());
  for (const auto& nb : nbrs) disagreement += nb.weight * (lambda - *nb.lambda);
  Vec next = z + nu * disagreement;
  require_finite(next, agent, "aux");
  return next;
}

/// lambda_i+ = P_+{lambda_i - sigma_i [A_i(2 x_i+ - x_i) - b_i + sum w (lambda_i - lambda_j)
///                                     + 2 sum w (z_i+ - z_j+) - sum w (z_i - z_j)]}.
inline Vec multiplier_step(const PlayerSpec& p, std::size_t agent, const Vec& lambda, const Vec& x_old,
                           const Vec& x_new, const Vec& z_old, const Vec& z_new,
                           std::span<const MultiplierNeighbor> nbrs, double sigma) {
  Vec r = 2.0 * (p.A * x_new) - p.A * x_old - p.b;
  for (const auto& nb : nbrs) {
    r += nb.weight * (lambda - *nb.lambda);
    r += 2.0 * nb.weight * (z_new - *nb.z_new);
    r -= nb.weight * (z_old - *nb.z_old);
  }
  Vec next = (lambda - sigma * r).cwiseMax(0.0);
  require_finite(next, agent, "multiplier");
  return next;
}

/// Acceleration phase: v + alpha (v - v_prev).
inline Vec extrapolate(const Vec& v, const Vec& prev, double alpha) { return v + alpha * (v - prev); }

}  // namespace local

namespace detail {

/// One forward-backward round evaluated at the points (x, z, lambda) given per agent.
/// Phase (a)+(b) reads only the frozen round inputs; phase (c) additionally reads
/// the fresh z+ of multiplier neighbors.
inline void forward_backward(const GameSpec& game, const std::vector<Vec>& x, const std::vector<Vec>& z,
                             const std::vector<Vec>& lambda, const StepSizeBundle& s, std::vector<Vec>& x_next,
                             std::vector<Vec>& z_next, std::vector<Vec>& lambda_next) {
  const std::size_t n = game.players.size();
  x_next.assign(n, Vec());
  z_next.assign(n, Vec());
  lambda_next.assign(n, Vec());
  std::vector<std::vector<std::size_t>> ids(n);
  std::vector<std::vector<local::MultiplierNeighbor>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = game.multiplier.neighbors(i);
    for (std::size_t j : ids[i]) nbrs[i].push_back({game.multiplier.weight(i, j), &lambda[j], &z[j], nullptr});
  }

  for (std::size_t i = 0; i < n; ++i) {
    NeighborDecisions view;
    for (std::size_t j : game.interference.neighbors(i)) view.insert(j, x[j]);
    const auto k = static_cast<Eigen::Index>(i);
    x_next[i] = local::primal_step(game.players[i], i, x[i], view, lambda[i], s.tau(k));
    z_next[i] = local::aux_step(i, z[i], lambda[i], nbrs[i], s.nu(k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < ids[i].size(); ++t) nbrs[i][t].z_new = &z_next[ids[i][t]];
    const auto k = static_cast<Eigen::Index>(i);
    lambda_next[i] = local::multiplier_step(game.players[i], i, lambda[i], x[i], x_next[i], z[i], z_next[i], nbrs[i],
                                            s.sigma(k));
  }
}

inline void check_states(const GameSpec& game, const NetworkState& states) {
  if (states.size() != game.players.size()) throw DimensionError("state count differs from player count");
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& a = states[i];
    const auto d = static_cast<Eigen::Index>(game.players[i].dim);
    const auto m = static_cast<Eigen::Index>(game.m);
    if (a.x.size() != d || a.prev_x.size() != d || a.z.size() != m || a.prev_z.size() != m ||
        a.lambda.size() != m || a.prev_lambda.size() != m)
      throw DimensionError("agent " + std::to_string(i) + " state has wrong dimensions");
  }
}

inline void check_steps(const GameSpec& game, const StepSizeBundle& s) {
  const auto n = static_cast<Eigen::Index>(game.players.size());
  if (s.tau.size() != n || s.nu.size() != n || s.sigma.size() != n)
    throw DimensionError("step-size bundle does not match player count");
}

}  // namespace detail

/// One round of the distributed forward-backward iteration.
inline NetworkState fb_round(const GameSpec& game, const NetworkState& states, const StepSizeBundle& s) {
  detail::check_states(game, states);
  detail::check_steps(game, s);
  std::vector<Vec> x, z, lambda;
  for (const auto& a : states) {
    x.push_back(a.x);
    z.push_back(a.z);
    lambda.push_back(a.lambda);
  }
  std::vector<Vec> xn, zn, ln;
  detail::forward_backward(game, x, z, lambda, s, xn, zn, ln);
  NetworkState out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i].prev_x = states[i].x;
    out[i].prev_z = states[i].z;
    out[i].prev_lambda = states[i].lambda;
    out[i].x = std::move(xn[i]);
    out[i].z = std::move(zn[i]);
    out[i].lambda = std::move(ln[i]);
  }
  return out;
}

/// Local extrapolation with weight alpha followed by a forward-backward round at the
/// extrapolated point.
inline NetworkState inertial_round(const GameSpec& game, const NetworkState& states, const StepSizeBundle& s) {
  detail::check_states(game, states);
  detail::check_steps(game, s);
  std::vector<Vec> x, z, lambda;
  for (const auto& a : states) {
    x.push_back(local::extrapolate(a.x, a.prev_x, s.alpha));
    z.push_back(local::extrapolate(a.z, a.prev_z, s.alpha));
    lambda.push_back(local::extrapolate(a.lambda, a.prev_lambda, s.alpha));
  }
  std::vector<Vec> xn, zn, ln;
  detail::forward_backward(game, x, z, lambda, s, xn, zn, ln);
  NetworkState out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i].prev_x = states[i].x;
    out[i].prev_z = states[i].z;
    out[i].prev_lambda = states[i].lambda;
    out[i].x = std::move(xn[i]);
    out[i].z = std::move(zn[i]);
    out[i].lambda = std::move(ln[i]);
  }
  return out;
}

struct StopRule {
  std::size_t max_iters = 10000;
  double tol = 1e-8;  // on the infinity norm of varpi_{k+1} - varpi_k
};

enum class RunStatus { converged, cap, numeric_failure };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::cap: return "cap";
    case RunStatus::numeric_failure: return "numeric-failure";
  }
  return "unknown";
}

struct RunResult {
  NetworkState states;
  RunStatus status = RunStatus::cap;
  std::size_t rounds = 0;
  double last_drift = std::numeric_limits<double>::infinity();
  std::string error;
  bool guaranteed = false;  // step sizes satisfy the convergence conditions
};

/// Called after every completed round with the states before and after it.
using RoundObserver = std::function<void(std::size_t round, const NetworkState& before, const NetworkState& after)>;

inline double iterate_drift(const NetworkState& a, const NetworkState& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, (a[i].x - b[i].x).lpNorm<Eigen::Infinity>());
    d = std::max(d, (a[i].z - b[i].z).lpNorm<Eigen::Infinity>());
    d = std::max(d, (a[i].lambda - b[i].lambda).lpNorm<Eigen::Infinity>());
  }
  return d;
}

/// Shared loop: apply `step` until the drift drops to tol or the cap is hit.
/// Numeric failures stop the loop with the last good states.
template <class Step>
RunResult run_loop(NetworkState init, const StopRule& stop, Step&& step, const RoundObserver& observer) {
  RunResult res;
  res.states = std::move(init);
  for (std::size_t k = 0; k < stop.max_iters; ++k) {
    NetworkState next;
    try {
      next = step(res.states);
    } catch (const NumericFailure& e) {
      res.status = RunStatus::numeric_failure;
      res.error = NumericFailure(e.agent, e.phase, k + 1).what();
      return res;
    }
    res.last_drift = iterate_drift(res.states, next);
    res.rounds = k + 1;
    if (observer) observer(res.rounds, res.states, next);
    res.states = std::move(next);
    if (res.last_drift <= stop.tol) {
      res.status = RunStatus::converged;
      return res;
    }
  }
  res.status = RunStatus::cap;
  return res;
}

/// Direct (in-process) execution of the distributed iteration.
inline RunResult run(const GameSpec& game, const StepSizeBundle& s, Algorithm algorithm, NetworkState init,
                     const StopRule& stop, const RoundObserver& observer = {}) {
  detail::check_states(game, init);
  detail::check_steps(game, s);
  auto step = [&](const NetworkState& st) {
    return algorithm == Algorithm::inertial ? inertial_round(game, st, s) : fb_round(game, st, s);
  };
  RunResult res = run_loop(std::move(init), stop, step, observer);
  res.guaranteed = check_step_sizes(game, s).guaranteed();
  return res;
}

}  // namespace gne
