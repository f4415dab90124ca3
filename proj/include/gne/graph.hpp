#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "gne/errors.hpp"

namespace gne {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 1.0;

  bool operator==(const Edge&) const = default;
};

/// Undirected weighted graph stored as a dense symmetric adjacency matrix.
/// Node ids are 0-based.
class WeightedGraph {
 public:
  WeightedGraph() = default;

  explicit WeightedGraph(std::size_t node_count) : weights_(Mat::Zero(as_index(node_count), as_index(node_count))) {
    if (node_count == 0) throw InvalidGraph("graph needs at least one node");
  }

  explicit WeightedGraph(Mat weights) : weights_(std::move(weights)) { validate(); }

  static WeightedGraph from_edges(std::size_t node_count, std::span<const Edge> edges) {
    WeightedGraph g(node_count);
    for (const Edge& e : edges) g.add_edge(e.i, e.j, e.weight);
    return g;
  }

  std::size_t size() const { return static_cast<std::size_t>(weights_.rows()); }

  const Mat& weights() const { return weights_; }

  double weight(std::size_t i, std::size_t j) const { return weights_(as_index(i), as_index(j)); }

  bool has_edge(std::size_t i, std::size_t j) const { return weight(i, j) > 0.0; }

  /// Sets w_ij = w_ji = w. A zero weight removes the edge.
  void add_edge(std::size_t i, std::size_t j, double w = 1.0) {
    if (i >= size() || j >= size())
      throw InvalidGraph("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
    if (i == j) throw InvalidGraph("self loop at node " + std::to_string(i));
    if (!(w >= 0.0)) throw InvalidGraph("negative or NaN edge weight");
    weights_(as_index(i), as_index(j)) = w;
    weights_(as_index(j), as_index(i)) = w;
  }

  /// Neighbors in ascending id order.
  std::vector<std::size_t> neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < size(); ++j)
      if (has_edge(i, j)) out.push_back(j);
    return out;
  }

  /// Each undirected edge once, with i < j.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j)
        if (has_edge(i, j)) out.push_back({i, j, weight(i, j)});
    return out;
  }

  std::size_t edge_count() const { return edges().size(); }

  double degree(std::size_t i) const { return weights_.row(as_index(i)).sum(); }

 private:
  static Eigen::Index as_index(std::size_t i) { return static_cast<Eigen::Index>(i); }

  void validate() const {
    if (weights_.rows() == 0 || weights_.rows() != weights_.cols())
      throw InvalidGraph("weight matrix must be square and non-empty");
    for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
      if (weights_(i, i) != 0.0) throw InvalidGraph("nonzero diagonal at node " + std::to_string(i));
      for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
        if (!(weights_(i, j) >= 0.0)) throw InvalidGraph("negative or NaN weight");
        if (weights_(i, j) != weights_(j, i)) throw InvalidGraph("weight matrix is not symmetric");
      }
    }
  }

  Mat weights_;
};

struct LaplacianInfo {
  Mat laplacian;
  Vec degrees;
  double d_star = 0.0;
  Vec eigenvalues;  // ascending
};

/// L = Deg - W together with degrees, the maximal weighted degree and the spectrum.
inline LaplacianInfo build_laplacian(const WeightedGraph& g) {
  LaplacianInfo info;
  const Mat& w = g.weights();
  info.degrees = w.rowwise().sum();
  info.laplacian = -w;
  info.laplacian.diagonal() += info.degrees;
  info.d_star = info.degrees.maxCoeff();
  Eigen::SelfAdjointEigenSolver<Mat> eig(info.laplacian, Eigen::EigenvaluesOnly);
  info.eigenvalues = eig.eigenvalues();
  return info;
}

inline bool is_connected(const WeightedGraph& g) {
  const std::size_t n = g.size();
  if (n == 0) return false;
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v = 0; v < n; ++v) {
      if (!seen[v] && g.has_edge(u, v)) {
        seen[v] = true;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n;
}

inline WeightedGraph path_graph(std::size_t n, double w = 1.0) {
  WeightedGraph g(n);
  for (std::size_t i = 0; i + 1 < n; ++i) g.add_edge(i, i + 1, w);
  return g;
}

inline WeightedGraph cycle_graph(std::size_t n, double w = 1.0) {
  WeightedGraph g = path_graph(n, w);
  if (n > 2) g.add_edge(n - 1, 0, w);
  return g;
}

inline WeightedGraph complete_graph(std::size_t n, double w = 1.0) {
  WeightedGraph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) g.add_edge(i, j, w);
  return g;
}

/// Edge union; where both graphs carry an edge the larger weight wins.
inline WeightedGraph graph_union(const WeightedGraph& a, const WeightedGraph& b) {
  if (a.size() != b.size()) throw InvalidGraph("graph union of different node counts");
  return WeightedGraph(Mat(a.weights().cwiseMax(b.weights())));
}

}  // namespace gne
