#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gne/errors.hpp"
#include "gne/game.hpp"
#include "gne/graph.hpp"
#include "gne/rng.hpp"

namespace gne::cournot {

/// Network Cournot market: N companies deliver to m markets with capacities r,
/// linear inverse demand P = Pbar - D A x and cost c_i(x_i) = pi_i (1^T x_i)^2 + b_i^T x_i.
struct CournotConfig {
  std::size_t companies = 0;
  std::size_t markets = 0;
  std::vector<std::vector<std::size_t>> incidence;  // markets served by each company, one per column of A_i
  Vec capacities;                                   // r
  Vec price_intercept;                              // Pbar
  Vec price_slope;                                  // diagonal of D
  Vec cost_pi;
  std::vector<Vec> cost_b;
  std::vector<Vec> box_upper;  // Theta_i; local set is [0, Theta_i]
  std::uint64_t seed = 0;
  std::optional<std::vector<Edge>> multiplier_edges;  // defaults to interference graph plus a cycle

  bool operator==(const CournotConfig& o) const {
    auto same = [](const Vec& a, const Vec& b) { return a.size() == b.size() && a == b; };
    auto same_list = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (!same(a[i], b[i])) return false;
      return true;
    };
    return companies == o.companies && markets == o.markets && incidence == o.incidence &&
           same(capacities, o.capacities) && same(price_intercept, o.price_intercept) &&
           same(price_slope, o.price_slope) && same(cost_pi, o.cost_pi) && same_list(cost_b, o.cost_b) &&
           same_list(box_upper, o.box_upper) && seed == o.seed && multiplier_edges == o.multiplier_edges;
  }

  std::size_t total_dim() const {
    std::size_t n = 0;
    for (const auto& inc : incidence) n += inc.size();
    return n;
  }
};

inline void validate(const CournotConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.companies);
  const auto m = static_cast<Eigen::Index>(cfg.markets);
  if (cfg.companies == 0 || cfg.markets == 0) throw InvalidConfig("need at least one company and one market");
  if (cfg.incidence.size() != cfg.companies || cfg.cost_b.size() != cfg.companies ||
      cfg.box_upper.size() != cfg.companies || cfg.cost_pi.size() != n)
    throw InvalidConfig("per-company arrays must have one entry per company");
  if (cfg.capacities.size() != m || cfg.price_intercept.size() != m || cfg.price_slope.size() != m)
    throw InvalidConfig("per-market arrays must have one entry per market");
  for (std::size_t i = 0; i < cfg.companies; ++i) {
    const auto& inc = cfg.incidence[i];
    const std::string who = "company " + std::to_string(i);
    if (inc.empty()) throw InvalidConfig(who + " serves no market");
    if (std::set<std::size_t>(inc.begin(), inc.end()).size() != inc.size())
      throw InvalidConfig(who + " lists a market twice");
    for (std::size_t k : inc)
      if (k >= cfg.markets) throw InvalidConfig(who + " serves unknown market " + std::to_string(k));
    const auto ni = static_cast<Eigen::Index>(inc.size());
    if (cfg.cost_b[i].size() != ni || cfg.box_upper[i].size() != ni)
      throw InvalidConfig(who + " cost_b/box_upper length must match its market count");
    if (!(cfg.cost_pi(static_cast<Eigen::Index>(i)) > 0.0)) throw InvalidConfig(who + " needs pi > 0");
    if (!(cfg.box_upper[i].array() > 0.0).all()) throw InvalidConfig(who + " needs Theta > 0");
    if (!cfg.cost_b[i].allFinite()) throw InvalidConfig(who + " has non-finite cost_b");
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    if (!(cfg.capacities(k) > 0.0)) throw InvalidConfig("market " + std::to_string(k) + " needs capacity > 0");
    if (!(cfg.price_slope(k) > 0.0)) throw InvalidConfig("market " + std::to_string(k) + " needs slope d > 0");
    if (!std::isfinite(cfg.price_intercept(k))) throw InvalidConfig("non-finite price intercept");
  }
  if (cfg.multiplier_edges) {
    for (const Edge& e : *cfg.multiplier_edges)
      if (e.i >= cfg.companies || e.j >= cfg.companies || e.i == e.j || !(e.weight > 0.0))
        throw InvalidConfig("bad multiplier edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")");
  }
}

/// A_i: m x n_i with a single 1 per column, in the row of the market served.
inline Mat incidence_block(const CournotConfig& cfg, std::size_t i) {
  const auto& inc = cfg.incidence[i];
  Mat a = Mat::Zero(static_cast<Eigen::Index>(cfg.markets), static_cast<Eigen::Index>(inc.size()));
  for (std::size_t c = 0; c < inc.size(); ++c) a(static_cast<Eigen::Index>(inc[c]), static_cast<Eigen::Index>(c)) = 1.0;
  return a;
}

/// Market-coordinate A = [A_1, ..., A_N] (total supply is A x).
inline Mat supply_matrix(const CournotConfig& cfg) {
  Mat a(static_cast<Eigen::Index>(cfg.markets), static_cast<Eigen::Index>(cfg.total_dim()));
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < cfg.companies; ++i) {
    Mat ai = incidence_block(cfg, i);
    a.middleCols(col, ai.cols()) = ai;
    col += ai.cols();
  }
  return a;
}

/// j and i are interference neighbors iff they serve a common market.
inline WeightedGraph interference_graph(const CournotConfig& cfg) {
  WeightedGraph g(cfg.companies);
  for (std::size_t i = 0; i < cfg.companies; ++i)
    for (std::size_t j = i + 1; j < cfg.companies; ++j) {
      const auto& a = cfg.incidence[i];
      const auto& b = cfg.incidence[j];
      bool shared = false;
      for (std::size_t k : a)
        if (std::find(b.begin(), b.end(), k) != b.end()) shared = true;
      if (shared) g.add_edge(i, j, 1.0);
    }
  return g;
}

inline WeightedGraph multiplier_graph(const CournotConfig& cfg) {
  if (cfg.multiplier_edges) return WeightedGraph::from_edges(cfg.companies, *cfg.multiplier_edges);
  return graph_union(interference_graph(cfg), cycle_graph(cfg.companies));
}

/// Q = diag{A_i^T D A_i} + S^T S with S = [sqrt(D) A_1, ..., sqrt(D) A_N].
inline Mat assemble_q_factored(const CournotConfig& cfg) {
  const Mat a = supply_matrix(cfg);
  const Vec sqrt_d = cfg.price_slope.cwiseSqrt();
  const Mat s = sqrt_d.asDiagonal() * a;
  Mat q = s.transpose() * s;
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < cfg.companies; ++i) {
    const Mat ai = incidence_block(cfg, i);
    q.block(off, off, ai.cols(), ai.cols()) += ai.transpose() * cfg.price_slope.asDiagonal() * ai;
    off += ai.cols();
  }
  return q;
}

/// Q with blocks A_i^T D A_j off the diagonal and 2 A_i^T D A_i on it.
inline Mat assemble_q_blockwise(const CournotConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.total_dim());
  Mat q(n, n);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < cfg.companies; ++i) {
    const Mat ai = incidence_block(cfg, i);
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < cfg.companies; ++j) {
      const Mat aj = incidence_block(cfg, j);
      Mat blk = ai.transpose() * cfg.price_slope.asDiagonal() * aj;
      if (i == j) blk *= 2.0;
      q.block(row, col, ai.cols(), aj.cols()) = blk;
      col += aj.cols();
    }
    row += ai.cols();
  }
  return q;
}

struct CournotDerived {
  Mat q;
  Mat jacobian;  // JF = diag{grad^2 c_i} + Q, constant
  Monotonicity eta_theta;
};

inline Mat assemble_q(const CournotConfig& cfg) {
  Mat q = assemble_q_factored(cfg);
  const Mat q_blocks = assemble_q_blockwise(cfg);
  if ((q - q_blocks).lpNorm<Eigen::Infinity>() > 1e-12)
    throw Error("factored and blockwise Q disagree beyond 1e-12");
  return q;
}

inline Mat cost_hessian(const CournotConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.total_dim());
  Mat h = Mat::Zero(n, n);
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < cfg.companies; ++i) {
    const auto ni = static_cast<Eigen::Index>(cfg.incidence[i].size());
    h.block(off, off, ni, ni).setConstant(2.0 * cfg.cost_pi(static_cast<Eigen::Index>(i)));
    off += ni;
  }
  return h;
}

inline CournotDerived derive(const CournotConfig& cfg) {
  validate(cfg);
  CournotDerived d;
  d.q = assemble_q(cfg);
  d.jacobian = cost_hessian(cfg) + d.q;
  Eigen::SelfAdjointEigenSolver<Mat> eig(d.jacobian, Eigen::EigenvaluesOnly);
  d.eta_theta.eta = eig.eigenvalues().minCoeff();
  d.eta_theta.theta = eig.eigenvalues().cwiseAbs().maxCoeff();
  return d;
}

/// (eta, theta) = (lambda_min, lambda_max) of the constant symmetric Jacobian.
inline Monotonicity estimate_monotonicity(const CournotConfig& cfg) {
  const CournotDerived d = derive(cfg);
  if (!(d.eta_theta.eta > 0.0))
    throw AssumptionViolation("pseudo-gradient is not strongly monotone (eta = " + std::to_string(d.eta_theta.eta) + ")");
  return d.eta_theta;
}

/// Closed form F(x) = grad c(x) + Q x - A^T Pbar on the stacked profile.
inline Vec closed_form_pseudo_gradient(const CournotConfig& cfg, const Vec& x) {
  const Mat a = supply_matrix(cfg);
  Vec grad_c(x.size());
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < cfg.companies; ++i) {
    const auto ni = static_cast<Eigen::Index>(cfg.incidence[i].size());
    const double total = x.segment(off, ni).sum();
    grad_c.segment(off, ni) =
        Vec::Constant(ni, 2.0 * cfg.cost_pi(static_cast<Eigen::Index>(i)) * total) + cfg.cost_b[i];
    off += ni;
  }
  return grad_c + assemble_q(cfg) * x - a.transpose() * cfg.price_intercept;
}

/// f_i(x) = c_i(x_i) - P(Ax)^T A_i x_i on the full stacked profile.
inline double company_objective(const CournotConfig& cfg, std::size_t i, const Vec& x) {
  const Mat a = supply_matrix(cfg);
  Eigen::Index off = 0;
  for (std::size_t j = 0; j < i; ++j) off += static_cast<Eigen::Index>(cfg.incidence[j].size());
  const auto ni = static_cast<Eigen::Index>(cfg.incidence[i].size());
  const Vec xi = x.segment(off, ni);
  const double total = xi.sum();
  const double cost = cfg.cost_pi(static_cast<Eigen::Index>(i)) * total * total + cfg.cost_b[i].dot(xi);
  const Vec price = cfg.price_intercept - cfg.price_slope.asDiagonal() * (a * x);
  return cost - price.dot(incidence_block(cfg, i) * xi);
}

/// Game in the algorithm's Ax >= b convention: A_block = -A_i, b_i = -r/N.
inline GameSpec build_cournot_game(const CournotConfig& cfg) {
  validate(cfg);
  const CournotDerived derived = derive(cfg);

  GameSpec game;
  game.m = cfg.markets;
  game.interference = interference_graph(cfg);
  game.multiplier = multiplier_graph(cfg);
  game.monotonicity = derived.eta_theta;

  const Vec slope = cfg.price_slope;
  const Vec intercept = cfg.price_intercept;
  const Vec share = -cfg.capacities / static_cast<double>(cfg.companies);

  for (std::size_t i = 0; i < cfg.companies; ++i) {
    const Mat ai = incidence_block(cfg, i);
    const double pi = cfg.cost_pi(static_cast<Eigen::Index>(i));
    const Vec bi = cfg.cost_b[i];
    std::vector<std::pair<std::size_t, Mat>> neighbor_blocks;
    for (std::size_t j : game.interference.neighbors(i)) neighbor_blocks.emplace_back(j, incidence_block(cfg, j));

    // Supply in every market i serves: own delivery plus interference neighbors'.
    auto market_supply = [ai, neighbor_blocks](const Vec& own, const NeighborDecisions& nbrs) {
      Vec s = ai * own;
      for (const auto& [j, aj] : neighbor_blocks) s += aj * nbrs.at(j);
      return s;
    };

    PlayerSpec p;
    p.dim = cfg.incidence[i].size();
    p.gradient = [=](const Vec& own, const NeighborDecisions& nbrs) -> Vec {
      const Vec supply = market_supply(own, nbrs);
      const Vec grad_cost = Vec::Constant(own.size(), 2.0 * pi * own.sum()) + bi;
      return grad_cost + ai.transpose() * (slope.asDiagonal() * (supply + ai * own)) - ai.transpose() * intercept;
    };
    p.objective = [=](const Vec& own, const NeighborDecisions& nbrs) -> double {
      const Vec supply = market_supply(own, nbrs);
      const double total = own.sum();
      const Vec price = intercept - slope.asDiagonal() * supply;
      return pi * total * total + bi.dot(own) - price.dot(ai * own);
    };
    Box box{Vec::Zero(static_cast<Eigen::Index>(p.dim)), cfg.box_upper[i]};
    p.project = [box](const Vec& v) { return box.project(v); };
    p.box = box;
    p.A = -ai;
    p.b = share;
    game.players.push_back(std::move(p));
  }

  Vec offset(static_cast<Eigen::Index>(cfg.total_dim()));
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < cfg.companies; ++i) {
    offset.segment(off, cfg.cost_b[i].size()) = cfg.cost_b[i];
    off += cfg.cost_b[i].size();
  }
  offset -= supply_matrix(cfg).transpose() * intercept;
  game.affine_pseudo_gradient = AffineMap{derived.jacobian, offset};
  return game;
}

/// Draw ranges used by sample_random_instance.
struct DrawRanges {
  double theta_lo = 10, theta_hi = 25;
  double capacity_lo = 20, capacity_hi = 80;
  double pi_lo = 1, pi_hi = 8;
  double cost_b_lo = 1, cost_b_hi = 4;
  double intercept_lo = 250, intercept_hi = 500;
  double slope_lo = 1, slope_hi = 5;
};

/// Reproducible random instance. Draw order (all from one SplitMix64 stream):
/// incidence (company-major, market-minor Bernoulli(density), then one uniform market
/// for any company left empty), Theta, r, pi, b, Pbar, d. The multiplier graph is the
/// cycle 0-1-...-(N-1)-0, which is connected by construction.
inline CournotConfig sample_random_instance(std::uint64_t seed, std::size_t companies, std::size_t markets,
                                            double density, const DrawRanges& ranges = {}) {
  if (companies == 0 || markets == 0) throw InvalidConfig("need at least one company and one market");
  SplitMix64 rng(seed);
  CournotConfig cfg;
  cfg.companies = companies;
  cfg.markets = markets;
  cfg.seed = seed;
  cfg.incidence.resize(companies);
  for (std::size_t i = 0; i < companies; ++i) {
    for (std::size_t k = 0; k < markets; ++k)
      if (rng.bernoulli(density)) cfg.incidence[i].push_back(k);
  }
  for (std::size_t i = 0; i < companies; ++i)
    if (cfg.incidence[i].empty()) cfg.incidence[i].push_back(rng.below(markets));

  const auto n_co = static_cast<Eigen::Index>(companies);
  const auto n_mk = static_cast<Eigen::Index>(markets);
  auto draw = [&](Eigen::Index len, double lo, double hi) {
    Vec v(len);
    for (Eigen::Index k = 0; k < len; ++k) v(k) = rng.uniform(lo, hi);
    return v;
  };
  for (std::size_t i = 0; i < companies; ++i)
    cfg.box_upper.push_back(draw(static_cast<Eigen::Index>(cfg.incidence[i].size()), ranges.theta_lo, ranges.theta_hi));
  cfg.capacities = draw(n_mk, ranges.capacity_lo, ranges.capacity_hi);
  cfg.cost_pi = draw(n_co, ranges.pi_lo, ranges.pi_hi);
  for (std::size_t i = 0; i < companies; ++i)
    cfg.cost_b.push_back(draw(static_cast<Eigen::Index>(cfg.incidence[i].size()), ranges.cost_b_lo, ranges.cost_b_hi));
  cfg.price_intercept = draw(n_mk, ranges.intercept_lo, ranges.intercept_hi);
  cfg.price_slope = draw(n_mk, ranges.slope_lo, ranges.slope_hi);

  std::vector<Edge> ring;
  for (const Edge& e : cycle_graph(companies).edges()) ring.push_back(e);
  cfg.multiplier_edges = ring;
  return cfg;
}

/// Two companies sharing one market: Pbar = 10, d = 1, c_i(q) = q^2, Theta = (10, 10).
inline CournotConfig duopoly(double capacity = 3.0, Vec box = Vec::Constant(2, 10.0)) {
  CournotConfig cfg;
  cfg.companies = 2;
  cfg.markets = 1;
  cfg.incidence = {{0}, {0}};
  cfg.capacities = Vec::Constant(1, capacity);
  cfg.price_intercept = Vec::Constant(1, 10.0);
  cfg.price_slope = Vec::Constant(1, 1.0);
  cfg.cost_pi = Vec::Constant(2, 1.0);
  cfg.cost_b = {Vec::Zero(1), Vec::Zero(1)};
  cfg.box_upper = {Vec::Constant(1, box(0)), Vec::Constant(1, box(1))};
  cfg.multiplier_edges = std::vector<Edge>{{0, 1, 1.0}};
  return cfg;
}

}  // namespace gne::cournot
