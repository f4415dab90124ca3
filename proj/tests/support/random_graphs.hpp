#pragma once

#include "gne/graph.hpp"
#include "gne/rng.hpp"

namespace gne::fixtures {

/// Random spanning tree plus extra edges with probability p; weights uniform in (wlo, whi).
inline WeightedGraph random_connected_graph(SplitMix64& rng, std::size_t n, double p, double wlo = 0.1,
                                            double whi = 5.0) {
  WeightedGraph g(n);
  for (std::size_t v = 1; v < n; ++v) g.add_edge(v, rng.below(v), rng.uniform(wlo, whi));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!g.has_edge(i, j) && rng.bernoulli(p)) g.add_edge(i, j, rng.uniform(wlo, whi));
  return g;
}

}  // namespace gne::fixtures
