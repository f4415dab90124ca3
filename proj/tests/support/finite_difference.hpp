#pragma once

#include <cmath>

#include "gne/cournot.hpp"

namespace gne::fixtures {

/// Central differences of company i's objective in its own coordinates; h = 1e-6 * max(1, |x_k|).
inline Vec fd_own_gradient(const cournot::CournotConfig& cfg, std::size_t i, const Vec& x) {
  Eigen::Index off = 0;
  for (std::size_t j = 0; j < i; ++j) off += static_cast<Eigen::Index>(cfg.incidence[j].size());
  const auto ni = static_cast<Eigen::Index>(cfg.incidence[i].size());
  Vec g(ni);
  for (Eigen::Index k = 0; k < ni; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(off + k)));
    Vec xp = x, xm = x;
    xp(off + k) += h;
    xm(off + k) -= h;
    g(k) = (cournot::company_objective(cfg, i, xp) - cournot::company_objective(cfg, i, xm)) / (2.0 * h);
  }
  return g;
}

/// Largest relative error ||oracle - fd|| / ||fd|| over players at profile x.
inline double gradient_fd_error(const cournot::CournotConfig& cfg, const GameSpec& game, const DecisionProfile& x) {
  double worst = 0.0;
  const Vec xs = x.stacked();
  for (std::size_t i = 0; i < game.players.size(); ++i) {
    const Vec g = player_gradient(game, i, x.blocks[i], neighbor_view(game, x, i));
    const Vec fd = fd_own_gradient(cfg, i, xs);
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-300));
  }
  return worst;
}

}  // namespace gne::fixtures
