#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gne/errors.hpp"
#include "gne/graph.hpp"
#include "gne/rng.hpp"

namespace gne {

/// The decisions a player is allowed to see: its interference neighbors only.
/// Reading any other player's block is a locality breach.
class NeighborDecisions {
 public:
  using MissHook = std::function<void(std::size_t)>;

  NeighborDecisions() = default;
  explicit NeighborDecisions(MissHook on_miss) : on_miss_(std::move(on_miss)) {}

  void insert(std::size_t player, const Vec& x) {
    auto pos = std::lower_bound(entries_.begin(), entries_.end(), player,
                                [](const Entry& e, std::size_t id) { return e.first < id; });
    entries_.insert(pos, {player, &x});
  }

  bool contains(std::size_t player) const { return find(player) != nullptr; }

  const Vec& at(std::size_t player) const {
    if (const Vec* x = find(player)) return *x;
    if (on_miss_) on_miss_(player);
    throw LocalityError("read of non-neighbor decision x_" + std::to_string(player));
  }

  std::size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  using Entry = std::pair<std::size_t, const Vec*>;

  const Vec* find(std::size_t player) const {
    auto pos = std::lower_bound(entries_.begin(), entries_.end(), player,
                                [](const Entry& e, std::size_t id) { return e.first < id; });
    return (pos != entries_.end() && pos->first == player) ? pos->second : nullptr;
  }

  std::vector<Entry> entries_;
  MissHook on_miss_;
};

struct Box {
  Vec lower;
  Vec upper;

  Vec project(const Vec& v) const { return v.cwiseMax(lower).cwiseMin(upper); }
};

using GradientOracle = std::function<Vec(const Vec& own, const NeighborDecisions& neighbors)>;
using ObjectiveOracle = std::function<double(const Vec& own, const NeighborDecisions& neighbors)>;
using Projection = std::function<Vec(const Vec&)>;

struct PlayerSpec {
  std::size_t dim = 0;
  GradientOracle gradient;
  Projection project;
  ObjectiveOracle objective;  // optional, used for reporting
  Mat A;                      // m x dim block of the coupling constraint Ax >= b
  Vec b;                      // this player's share of b
  std::optional<Box> box;     // set when the local set is a box
  bool serial = false;        // oracle is not safe for concurrent calls
};

/// Strong monotonicity (eta) and Lipschitz (theta) constants of the pseudo-gradient.
struct Monotonicity {
  double eta = 0.0;
  double theta = 0.0;
};

/// F(x) = jacobian * x + offset, when the pseudo-gradient is affine.
struct AffineMap {
  Mat jacobian;
  Vec offset;
};

struct GameSpec {
  std::vector<PlayerSpec> players;
  std::size_t m = 0;
  WeightedGraph interference;
  WeightedGraph multiplier;
  std::optional<Monotonicity> monotonicity;
  std::optional<AffineMap> affine_pseudo_gradient;

  std::size_t player_count() const { return players.size(); }

  std::size_t total_dim() const {
    std::size_t n = 0;
    for (const auto& p : players) n += p.dim;
    return n;
  }

  std::vector<std::size_t> offsets() const {
    std::vector<std::size_t> off;
    std::size_t acc = 0;
    for (const auto& p : players) {
      off.push_back(acc);
      acc += p.dim;
    }
    return off;
  }

  /// A = [A_1, ..., A_N].
  Mat coupling_matrix() const {
    Mat a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(total_dim()));
    Eigen::Index col = 0;
    for (const auto& p : players) {
      a.middleCols(col, p.A.cols()) = p.A;
      col += p.A.cols();
    }
    return a;
  }

  /// b = sum of the per-player shares.
  Vec coupling_rhs() const {
    Vec b = Vec::Zero(static_cast<Eigen::Index>(m));
    for (const auto& p : players) b += p.b;
    return b;
  }

  bool all_boxes() const {
    return std::all_of(players.begin(), players.end(), [](const PlayerSpec& p) { return p.box.has_value(); });
  }
};

struct DecisionProfile {
  std::vector<Vec> blocks;

  static DecisionProfile zeros(const GameSpec& game) {
    DecisionProfile p;
    for (const auto& pl : game.players) p.blocks.push_back(Vec::Zero(static_cast<Eigen::Index>(pl.dim)));
    return p;
  }

  static DecisionProfile from_stacked(const GameSpec& game, const Vec& x) {
    if (static_cast<std::size_t>(x.size()) != game.total_dim()) throw DimensionError("stacked profile has wrong length");
    DecisionProfile p;
    Eigen::Index off = 0;
    for (const auto& pl : game.players) {
      const auto d = static_cast<Eigen::Index>(pl.dim);
      p.blocks.push_back(x.segment(off, d));
      off += d;
    }
    return p;
  }

  Vec stacked() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks) n += b.size();
    Vec x(n);
    Eigen::Index off = 0;
    for (const auto& b : blocks) {
      x.segment(off, b.size()) = b;
      off += b.size();
    }
    return x;
  }
};

inline void check_profile(const GameSpec& game, const DecisionProfile& x) {
  if (x.blocks.size() != game.players.size()) throw DimensionError("profile has wrong number of blocks");
  for (std::size_t i = 0; i < x.blocks.size(); ++i)
    if (static_cast<std::size_t>(x.blocks[i].size()) != game.players[i].dim)
      throw DimensionError("block " + std::to_string(i) + " has wrong length");
}

/// Masked view of a profile holding only player i's interference neighbors.
inline NeighborDecisions neighbor_view(const GameSpec& game, const DecisionProfile& x, std::size_t i) {
  NeighborDecisions view;
  for (std::size_t j : game.interference.neighbors(i)) view.insert(j, x.blocks[j]);
  return view;
}

/// Calls player i's gradient oracle and checks the block length.
inline Vec player_gradient(const GameSpec& game, std::size_t i, const Vec& own, const NeighborDecisions& view) {
  Vec g = game.players[i].gradient(own, view);
  if (static_cast<std::size_t>(g.size()) != game.players[i].dim)
    throw DimensionError("gradient oracle of player " + std::to_string(i) + " returned length " +
                         std::to_string(g.size()));
  return g;
}

/// F(x) = col(grad_{x_1} f_1(x), ..., grad_{x_N} f_N(x)).
inline Vec pseudo_gradient(const GameSpec& game, const DecisionProfile& x) {
  check_profile(game, x);
  Vec f(static_cast<Eigen::Index>(game.total_dim()));
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < game.players.size(); ++i) {
    Vec g = player_gradient(game, i, x.blocks[i], neighbor_view(game, x, i));
    f.segment(off, g.size()) = g;
    off += g.size();
  }
  return f;
}

/// b - Ax; componentwise <= 0 iff the coupling constraint holds.
inline Vec feasibility_residual(const GameSpec& game, const DecisionProfile& x) {
  check_profile(game, x);
  Vec r = game.coupling_rhs();
  for (std::size_t i = 0; i < game.players.size(); ++i) r -= game.players[i].A * x.blocks[i];
  return r;
}

/// Random point of Omega: uniform in the box when known, otherwise the projection
/// of a wide uniform draw.
inline DecisionProfile sample_point(const GameSpec& game, SplitMix64& rng, double spread = 10.0) {
  DecisionProfile p;
  for (const auto& pl : game.players) {
    Vec v(static_cast<Eigen::Index>(pl.dim));
    if (pl.box) {
      for (Eigen::Index k = 0; k < v.size(); ++k) {
        const double lo = std::isfinite(pl.box->lower(k)) ? pl.box->lower(k) : -spread;
        const double hi = std::isfinite(pl.box->upper(k)) ? pl.box->upper(k) : spread;
        v(k) = rng.uniform(lo, hi);
      }
    } else {
      for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = rng.uniform(-spread, spread);
      v = pl.project(v);
    }
    p.blocks.push_back(std::move(v));
  }
  return p;
}

struct MonotonicitySample {
  std::size_t pairs = 0;
  std::size_t strong_monotonicity_failures = 0;
  std::size_t lipschitz_failures = 0;
  double worst_monotonicity_ratio = 0.0;  // min <dF,dx>/|dx|^2 seen
  double worst_lipschitz_ratio = 0.0;     // max |dF|/|dx| seen

  bool passed() const { return strong_monotonicity_failures == 0 && lipschitz_failures == 0; }
};

/// Sampled check of the declared (eta, theta) on random pairs in Omega.
inline MonotonicitySample sample_monotonicity(const GameSpec& game, const Monotonicity& mono, std::size_t pairs,
                                              SplitMix64& rng, double slack = 1e-9) {
  MonotonicitySample s;
  s.worst_monotonicity_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pairs; ++k) {
    const DecisionProfile x = sample_point(game, rng);
    const DecisionProfile y = sample_point(game, rng);
    const Vec dx = x.stacked() - y.stacked();
    const Vec df = pseudo_gradient(game, x) - pseudo_gradient(game, y);
    const double dx2 = dx.squaredNorm();
    if (dx2 == 0.0) continue;
    ++s.pairs;
    const double inner = df.dot(dx);
    if (inner < mono.eta * dx2 - slack) ++s.strong_monotonicity_failures;
    if (df.norm() > mono.theta * std::sqrt(dx2) + slack) ++s.lipschitz_failures;
    s.worst_monotonicity_ratio = std::min(s.worst_monotonicity_ratio, inner / dx2);
    s.worst_lipschitz_ratio = std::max(s.worst_lipschitz_ratio, df.norm() / std::sqrt(dx2));
  }
  return s;
}

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<std::string> notes;

  bool ok() const { return violations.empty(); }

  bool has(const std::string& code) const {
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.code == code; });
  }
};

namespace detail {

/// Strictly interior point of a box-constrained X = prod Omega_i cap {Ax >= b}, searched
/// along the segments from the box center towards each face family.
inline bool find_slater_point(const GameSpec& game) {
  const Mat a = game.coupling_matrix();
  const Vec b = game.coupling_rhs();
  Vec lo(static_cast<Eigen::Index>(game.total_dim())), hi(lo.size());
  Eigen::Index off = 0;
  for (const auto& p : game.players) {
    lo.segment(off, p.box->lower.size()) = p.box->lower;
    hi.segment(off, p.box->upper.size()) = p.box->upper;
    off += p.box->lower.size();
  }
  for (Eigen::Index k = 0; k < lo.size(); ++k)
    if (!(lo(k) < hi(k))) return false;
  const double ts[] = {0.5, 0.25, 0.75, 0.1, 0.9, 0.01, 0.99, 1e-3, 1 - 1e-3, 1e-5, 1 - 1e-5};
  for (double t : ts) {
    Vec x(lo.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double l = std::isfinite(lo(k)) ? lo(k) : (std::isfinite(hi(k)) ? hi(k) - 1.0 : 0.0);
      const double h = std::isfinite(hi(k)) ? hi(k) : l + 1.0;
      x(k) = l + t * (h - l);
    }
    if (game.m == 0 || ((a * x - b).array() > 0.0).all()) return true;
  }
  return false;
}

}  // namespace detail

/// Machine-checkable prerequisites: dimensions, multiplier-graph connectivity,
/// projection idempotence and non-expansiveness on sampled points, presence of (eta, theta).
/// Never throws on a malformed game; every problem becomes a violation entry.
inline ValidationReport validate_game(const GameSpec& game, std::uint64_t seed = 0, std::size_t samples = 20) {
  ValidationReport rep;
  const std::size_t n_players = game.players.size();
  if (n_players == 0) rep.violations.push_back({"dimension", "game has no players"});
  bool dims_ok = n_players > 0;
  for (std::size_t i = 0; i < n_players; ++i) {
    const auto& p = game.players[i];
    const std::string who = "player " + std::to_string(i);
    if (p.dim == 0) {
      rep.violations.push_back({"dimension", who + " has zero decision dimension"});
      dims_ok = false;
    }
    if (static_cast<std::size_t>(p.A.rows()) != game.m || static_cast<std::size_t>(p.A.cols()) != p.dim) {
      rep.violations.push_back({"dimension", who + " constraint block is " + std::to_string(p.A.rows()) + "x" +
                                                 std::to_string(p.A.cols()) + ", expected " + std::to_string(game.m) +
                                                 "x" + std::to_string(p.dim)});
      dims_ok = false;
    }
    if (static_cast<std::size_t>(p.b.size()) != game.m) {
      rep.violations.push_back({"dimension", who + " share b_i has wrong length"});
      dims_ok = false;
    }
    if (!p.gradient || !p.project) {
      rep.violations.push_back({"oracle", who + " is missing a gradient or projection oracle"});
      dims_ok = false;
    }
    if (p.box && (static_cast<std::size_t>(p.box->lower.size()) != p.dim ||
                  static_cast<std::size_t>(p.box->upper.size()) != p.dim)) {
      rep.violations.push_back({"dimension", who + " box bounds have wrong length"});
      dims_ok = false;
    }
  }
  if (game.interference.size() != n_players)
    rep.violations.push_back({"dimension", "interference graph node count differs from player count"});
  if (game.multiplier.size() != n_players) {
    rep.violations.push_back({"dimension", "multiplier graph node count differs from player count"});
  } else if (!is_connected(game.multiplier)) {
    rep.violations.push_back({"Assumption 3", "multiplier graph is not connected"});
  }

  if (dims_ok) {
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < n_players; ++i) {
      const auto& p = game.players[i];
      for (std::size_t s = 0; s < samples; ++s) {
        Vec u(static_cast<Eigen::Index>(p.dim)), v(u.size());
        for (Eigen::Index k = 0; k < u.size(); ++k) {
          u(k) = rng.uniform(-100.0, 100.0);
          v(k) = rng.uniform(-100.0, 100.0);
        }
        const Vec pu = p.project(u);
        const Vec pv = p.project(v);
        if ((p.project(pu) - pu).lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + pu.lpNorm<Eigen::Infinity>())) {
          rep.violations.push_back({"projection", "projection of player " + std::to_string(i) + " is not idempotent"});
          break;
        }
        if ((pu - pv).norm() > (u - v).norm() * (1.0 + 1e-12)) {
          rep.violations.push_back({"projection", "projection of player " + std::to_string(i) + " expands distances"});
          break;
        }
      }
    }
    if (game.all_boxes()) {
      if (!detail::find_slater_point(game))
        rep.violations.push_back({"Assumption 1", "no strictly feasible point found in the box-constrained set"});
    } else {
      rep.notes.push_back("Slater condition unverified: local sets are not boxes");
    }
  }

  if (!game.monotonicity) {
    rep.notes.push_back("monotonicity constants not declared; automatic step sizes unavailable");
  } else if (!(game.monotonicity->eta > 0.0) || game.monotonicity->theta < game.monotonicity->eta) {
    rep.violations.push_back({"Assumption 2", "declared (eta, theta) must satisfy 0 < eta <= theta"});
  }
  return rep;
}

}  // namespace gne
