#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gne/engine.hpp"
#include "gne/errors.hpp"
#include "gne/game.hpp"
#include "gne/graph.hpp"

namespace gne {

/// Optimality residuals of a (possibly multi-multiplier) profile. All entries are >= 0.
struct KKTResidual {
  double stationarity = 0.0;     // max_i ||x_i - P_i(x_i - (grad_i f_i - A_i^T lambda))||_inf
  double primal = 0.0;           // ||max(0, b - Ax)||_inf
  double dual = 0.0;             // ||max(0, -lambda)||_inf
  double complementarity = 0.0;  // |lambda^T (b - Ax)|
  double consensus = 0.0;        // ||(L x I_m) lambda_bar||_inf, zero for a single multiplier

  double max() const { return std::max({stationarity, primal, dual, complementarity, consensus}); }
  bool within(double tol) const { return max() <= tol; }
};

namespace detail {

inline Vec stacked_pseudo_gradient(const GameSpec& game, const DecisionProfile& x) {
  if (game.affine_pseudo_gradient)
    return game.affine_pseudo_gradient->jacobian * x.stacked() + game.affine_pseudo_gradient->offset;
  return pseudo_gradient(game, x);
}

inline double natural_map(const GameSpec& game, const DecisionProfile& x, const Vec& F,
                          const std::vector<const Vec*>& lambdas) {
  double worst = 0.0;
  const auto off = game.offsets();
  for (std::size_t i = 0; i < game.players.size(); ++i) {
    const auto& p = game.players[i];
    const Vec g = F.segment(static_cast<Eigen::Index>(off[i]), static_cast<Eigen::Index>(p.dim)) -
                  p.A.transpose() * *lambdas[i];
    const Vec step = x.blocks[i] - p.project(x.blocks[i] - g);
    if (step.size() > 0) worst = std::max(worst, step.lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace detail

inline KKTResidual kkt_residual(const GameSpec& game, const DecisionProfile& x, const Vec& lambda) {
  check_profile(game, x);
  if (static_cast<std::size_t>(lambda.size()) != game.m) throw DimensionError("lambda must have length m");
  KKTResidual r;
  const Vec F = detail::stacked_pseudo_gradient(game, x);
  r.stationarity = detail::natural_map(game, x, F, std::vector<const Vec*>(game.players.size(), &lambda));
  const Vec slack = feasibility_residual(game, x);  // b - Ax
  if (game.m > 0) {
    r.primal = slack.cwiseMax(0.0).maxCoeff();
    r.dual = (-lambda).cwiseMax(0.0).maxCoeff() + 0.0;  // no -0.0
  }
  r.complementarity = std::abs(lambda.dot(slack));
  return r;
}

/// Multi-multiplier variant: player i is checked against its own lambda_i; primal, dual and
/// complementarity use the mean multiplier.
inline KKTResidual kkt_residual(const GameSpec& game, const NetworkState& states) {
  detail::check_states(game, states);
  DecisionProfile x;
  std::vector<const Vec*> lambdas;
  Vec mean = Vec::Zero(static_cast<Eigen::Index>(game.m));
  for (const auto& a : states) {
    x.blocks.push_back(a.x);
    lambdas.push_back(&a.lambda);
    mean += a.lambda;
  }
  mean /= static_cast<double>(states.size());
  KKTResidual r = kkt_residual(game, x, mean);
  r.stationarity = detail::natural_map(game, x, detail::stacked_pseudo_gradient(game, x), lambdas);
  for (const auto& a : states) r.dual = std::max(r.dual, game.m ? (-a.lambda).cwiseMax(0.0).maxCoeff() : 0.0);
  const Mat& w = game.multiplier.weights();
  for (std::size_t i = 0; i < states.size(); ++i) {
    Vec c = Vec::Zero(mean.size());
    for (std::size_t j = 0; j < states.size(); ++j)
      if (w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0)
        c += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (states[i].lambda - states[j].lambda);
    if (c.size() > 0) r.consensus = std::max(r.consensus, c.lpNorm<Eigen::Infinity>());
  }
  return r;
}

enum class OracleMethod { central_splitting, active_set };

inline const char* to_string(OracleMethod m) {
  return m == OracleMethod::central_splitting ? "central-splitting" : "active-set";
}

struct OracleSolution {
  DecisionProfile x_star;
  Vec lambda_star;
  OracleMethod method = OracleMethod::central_splitting;
  KKTResidual residual;
  std::size_t iterations = 0;
};

struct CentralNonConvergence : NonConvergence {
  CentralNonConvergence(const std::string& msg, OracleSolution best) : NonConvergence(msg), best(std::move(best)) {}
  OracleSolution best;
};

struct CentralOptions {
  std::size_t max_iters = 200000;
  std::optional<double> delta;  // default 1/beta with beta = eta/theta^2
  std::optional<double> tau;    // explicit steps override the synthesized ones
  std::optional<double> sigma;
  std::size_t check_every = 10;
};

/// Forward-backward iteration on the centralized operators with one virtual agent that owns
/// the whole coupling constraint:
///   x+ = P[x - tau (F(x) - A^T lambda)],  lambda+ = P_+[lambda - sigma (A(2x+ - x) - b)].
inline OracleSolution central_solve(const GameSpec& game, double tol, const CentralOptions& opt = {}) {
  const Mat A = game.coupling_matrix();
  const Vec b = game.coupling_rhs();
  double tau = 0.0, sigma = 0.0;
  if (opt.tau && opt.sigma) {
    tau = *opt.tau;
    sigma = *opt.sigma;
  } else {
    double delta = 0.0;
    if (opt.delta) {
      delta = *opt.delta;
    } else {
      if (!game.monotonicity) throw InvalidConfig("central_solve needs (eta, theta) or explicit steps");
      delta = 1.0 / compute_beta(0.0, game.monotonicity->eta, game.monotonicity->theta);
    }
    tau = 1.0 / (max_abs_row_sum(A.transpose()) + delta);
    sigma = 1.0 / (max_abs_row_sum(A) + delta);
  }
  if (!(tau > 0.0) || !(sigma > 0.0)) throw InvalidConfig("central_solve step sizes must be positive");

  const auto off = game.offsets();
  DecisionProfile x = DecisionProfile::zeros(game);
  Vec lambda = Vec::Zero(static_cast<Eigen::Index>(game.m));
  OracleSolution best;
  best.method = OracleMethod::central_splitting;
  double best_score = std::numeric_limits<double>::infinity();
  const std::size_t every = std::max<std::size_t>(1, opt.check_every);

  for (std::size_t k = 1; k <= opt.max_iters; ++k) {
    const Vec F = detail::stacked_pseudo_gradient(game, x);
    const Vec g = F - A.transpose() * lambda;
    DecisionProfile xn;
    xn.blocks.resize(game.players.size());
    for (std::size_t i = 0; i < game.players.size(); ++i) {
      const auto& p = game.players[i];
      xn.blocks[i] =
          p.project(x.blocks[i] - tau * g.segment(static_cast<Eigen::Index>(off[i]), static_cast<Eigen::Index>(p.dim)));
    }
    const Vec xs = x.stacked(), xns = xn.stacked();
    lambda = (lambda - sigma * (A * (2.0 * xns - xs) - b)).cwiseMax(0.0);
    x = std::move(xn);
    if (!xns.allFinite() || !lambda.allFinite()) throw NumericFailure(0, "central", k);
    if (k % every == 0 || k == opt.max_iters) {
      const KKTResidual r = kkt_residual(game, x, lambda);
      if (r.max() < best_score) {
        best_score = r.max();
        best.x_star = x;
        best.lambda_star = lambda;
        best.residual = r;
        best.iterations = k;
      }
      if (r.within(tol)) return best;
    }
  }
  std::ostringstream msg;
  msg << "central_solve did not reach tolerance " << tol << " within " << opt.max_iters << " iterations (best residual "
      << best_score << ")";
  throw CentralNonConvergence(msg.str(), best);
}

struct ActiveSetResult {
  OracleSolution solution;
  std::vector<OracleSolution> solutions;  // every distinct candidate passing the sign conditions
  bool non_unique = false;
  bool degenerate = false;
  std::size_t candidates = 0;
};

inline constexpr std::size_t active_set_max_size = 12;

/// Exact KKT solve for box-constrained games with affine pseudo-gradient F(x) = Jx + c by
/// enumerating {lower, free, upper} per coordinate and {active, inactive} per coupling row.
inline ActiveSetResult active_set_enumerate(const GameSpec& game, double tol = 1e-9) {
  if (!game.affine_pseudo_gradient) throw InvalidConfig("active_set_solve needs an affine pseudo-gradient");
  if (!game.all_boxes()) throw InvalidConfig("active_set_solve needs box local sets");
  const std::size_t n = game.total_dim(), m = game.m;
  if (n + m > active_set_max_size)
    throw InvalidConfig("active_set_solve limited to n + m <= " + std::to_string(active_set_max_size));

  const Mat& J = game.affine_pseudo_gradient->jacobian;
  const Vec& c = game.affine_pseudo_gradient->offset;
  const Mat A = game.coupling_matrix();
  const Vec b = game.coupling_rhs();
  Vec lo(static_cast<Eigen::Index>(n)), hi(static_cast<Eigen::Index>(n));
  {
    Eigen::Index k = 0;
    for (const auto& p : game.players) {
      lo.segment(k, static_cast<Eigen::Index>(p.dim)) = p.box->lower;
      hi.segment(k, static_cast<Eigen::Index>(p.dim)) = p.box->upper;
      k += static_cast<Eigen::Index>(p.dim);
    }
  }

  ActiveSetResult out;
  const double scale = 1.0 + J.cwiseAbs().maxCoeff() + c.cwiseAbs().maxCoeff() + (m ? b.cwiseAbs().maxCoeff() : 0.0);
  const double eps = tol * scale;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 3;
  total <<= m;

  std::vector<int> status(n);  // -1 lower, 0 free, +1 upper
  std::vector<bool> active(m);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    bool skip = false;
    for (std::size_t r = 0; r < m; ++r) {
      active[r] = rest & 1u;
      rest >>= 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      status[i] = static_cast<int>(rest % 3) - 1;
      rest /= 3;
      const auto k = static_cast<Eigen::Index>(i);
      if ((status[i] == -1 && !std::isfinite(lo(k))) || (status[i] == 1 && !std::isfinite(hi(k)))) skip = true;
    }
    if (skip) continue;
    ++out.candidates;

    std::vector<Eigen::Index> free_idx, act_idx;
    Vec x = Vec::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      if (status[i] == 0)
        free_idx.push_back(k);
      else
        x(k) = status[i] < 0 ? lo(k) : hi(k);
    }
    for (std::size_t r = 0; r < m; ++r)
      if (active[r]) act_idx.push_back(static_cast<Eigen::Index>(r));

    // Unknowns (x_free, lambda_active); rows: stationarity on free coords, equality on active rows.
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    const auto na = static_cast<Eigen::Index>(act_idx.size());
    Vec lambda = Vec::Zero(static_cast<Eigen::Index>(m));
    if (nf + na > 0) {
      Mat K = Mat::Zero(nf + na, nf + na);
      Vec rhs = Vec::Zero(nf + na);
      const Vec jx_fixed = J * x;
      const Vec ax_fixed = A * x;
      for (Eigen::Index r = 0; r < nf; ++r) {
        for (Eigen::Index s = 0; s < nf; ++s) K(r, s) = J(free_idx[r], free_idx[s]);
        for (Eigen::Index s = 0; s < na; ++s) K(r, nf + s) = -A(act_idx[s], free_idx[r]);
        rhs(r) = -c(free_idx[r]) - jx_fixed(free_idx[r]);
      }
      for (Eigen::Index r = 0; r < na; ++r) {
        for (Eigen::Index s = 0; s < nf; ++s) K(nf + r, s) = A(act_idx[r], free_idx[s]);
        rhs(nf + r) = b(act_idx[r]) - ax_fixed(act_idx[r]);
      }
      Eigen::FullPivLU<Mat> lu(K);
      if (!lu.isInvertible()) continue;
      const Vec sol = lu.solve(rhs);
      for (Eigen::Index r = 0; r < nf; ++r) x(free_idx[r]) = sol(r);
      for (Eigen::Index r = 0; r < na; ++r) lambda(act_idx[r]) = sol(nf + r);
    }

    bool ok = true, degenerate = false;
    const Vec g = J * x + c - A.transpose() * lambda;
    const Vec slack = m ? Vec(A * x - b) : Vec();
    for (std::size_t i = 0; i < n && ok; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      if (x(k) < lo(k) - eps || x(k) > hi(k) + eps) ok = false;
      if (status[i] == -1 && g(k) < -eps) ok = false;
      if (status[i] == 1 && g(k) > eps) ok = false;
      if (status[i] != 0 && std::abs(g(k)) <= eps) degenerate = true;
      if (status[i] == 0 && (std::abs(x(k) - lo(k)) <= eps || std::abs(x(k) - hi(k)) <= eps)) degenerate = true;
    }
    for (std::size_t r = 0; r < m && ok; ++r) {
      const auto k = static_cast<Eigen::Index>(r);
      if (active[r]) {
        if (lambda(k) < -eps) ok = false;
        if (std::abs(lambda(k)) <= eps) degenerate = true;
      } else {
        if (slack(k) < -eps) ok = false;
        if (std::abs(slack(k)) <= eps) degenerate = true;
      }
    }
    if (!ok) continue;
    out.degenerate = out.degenerate || degenerate;

    OracleSolution s;
    s.method = OracleMethod::active_set;
    s.x_star = DecisionProfile::from_stacked(game, x);
    s.lambda_star = lambda.cwiseMax(0.0);
    bool seen = false;
    for (const auto& prev : out.solutions)
      if ((prev.x_star.stacked() - x).lpNorm<Eigen::Infinity>() <= 1e-7 * (1.0 + x.lpNorm<Eigen::Infinity>()) &&
          (prev.lambda_star - s.lambda_star).lpNorm<Eigen::Infinity>() <=
              1e-7 * (1.0 + s.lambda_star.lpNorm<Eigen::Infinity>()))
        seen = true;
    if (seen) continue;
    s.residual = kkt_residual(game, s.x_star, s.lambda_star);
    out.solutions.push_back(std::move(s));
  }

  if (out.solutions.empty())
    throw AssumptionViolation("no active set satisfies the KKT sign conditions (infeasible or degenerate instance)");
  for (const auto& s : out.solutions)
    if ((s.x_star.stacked() - out.solutions.front().x_star.stacked()).lpNorm<Eigen::Infinity>() >
        1e-7 * (1.0 + s.x_star.stacked().lpNorm<Eigen::Infinity>()))
      out.non_unique = true;
  out.solution = out.solutions.front();
  return out;
}

inline OracleSolution active_set_solve(const GameSpec& game, double tol = 1e-9) {
  return active_set_enumerate(game, tol).solution;
}

/// One row of the per-round trace. Optional columns are empty when no reference is known.
struct TraceRow {
  std::size_t round = 0;
  double dx_norm = 0.0;
  double dw_norm = 0.0;
  std::optional<double> rel_x_err;
  std::optional<double> rel_w_err;
  double consensus = 0.0;
  double complementarity = 0.0;
  double feasibility = 0.0;
  std::optional<double> fejer_phi;
};

/// Reference points for the optional trace columns.
struct TraceReference {
  std::optional<Vec> x_star;  // stacked decisions
  std::optional<Vec> w_star;  // full stacked iterate (x, z, lambda)
  std::optional<PhiMetric> phi;
};

inline TraceRow trace_metrics(const GameSpec& game, std::size_t round, const NetworkState& before,
                              const NetworkState& after, const TraceReference& ref = {}) {
  TraceRow row;
  row.round = round;
  const Vec w0 = stack_iterate(game, before);
  const Vec w1 = stack_iterate(game, after);
  const StackLayout lay(game);
  const auto n = static_cast<Eigen::Index>(game.total_dim());
  row.dx_norm = (w1.head(n) - w0.head(n)).norm();
  row.dw_norm = (w1 - w0).norm();

  const Vec x = w1.head(n);
  if (ref.x_star) row.rel_x_err = (x - *ref.x_star).norm() / std::max(ref.x_star->norm(), 1e-300);
  if (ref.w_star) {
    row.rel_w_err = (w1 - *ref.w_star).norm() / std::max(ref.w_star->norm(), 1e-300);
    if (ref.phi) {
      const Vec d = w1 - *ref.w_star;
      row.fejer_phi = std::sqrt(std::max(0.0, d.dot(ref.phi->matrix * d)));
    }
  }

  const auto m = static_cast<Eigen::Index>(game.m);
  const Mat& w = game.multiplier.weights();
  Vec lam_sum = Vec::Zero(m);
  double consensus_sq = 0.0;
  for (std::size_t i = 0; i < after.size(); ++i) {
    lam_sum += after[i].lambda;
    Vec c = Vec::Zero(m);
    for (std::size_t j = 0; j < after.size(); ++j) {
      const double wij = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (wij > 0.0) c += wij * (after[i].lambda - after[j].lambda);
    }
    consensus_sq += c.squaredNorm();
  }
  row.consensus = std::sqrt(consensus_sq);
  DecisionProfile prof;
  for (const auto& a : after) prof.blocks.push_back(a.x);
  const Vec slack = feasibility_residual(game, prof);
  row.complementarity = lam_sum.dot(slack);
  row.feasibility = m > 0 ? slack.cwiseMax(0.0).maxCoeff() : 0.0;
  return row;
}

/// Observer adaptor that collects a TraceRow per round.
class TraceRecorder {
 public:
  TraceRecorder(const GameSpec& game, TraceReference ref = {}) : game_(game), ref_(std::move(ref)) {}

  void operator()(std::size_t round, const NetworkState& before, const NetworkState& after) {
    rows_.push_back(trace_metrics(game_, round, before, after, ref_));
  }

  RoundObserver observer() {
    return [this](std::size_t r, const NetworkState& a, const NetworkState& b) { (*this)(r, a, b); };
  }

  const std::vector<TraceRow>& rows() const { return rows_; }

 private:
  const GameSpec& game_;
  TraceReference ref_;
  std::vector<TraceRow> rows_;
};

/// 1 + the last round whose decision drift was at or above tol (1 if none was).
inline std::size_t rounds_to_tolerance(const std::vector<TraceRow>& rows, double tol) {
  std::size_t last = 0;
  bool any = false;
  for (const auto& r : rows)
    if (r.dx_norm >= tol) {
      last = r.round;
      any = true;
    }
  return any ? last + 1 : 1;
}

}  // namespace gne
