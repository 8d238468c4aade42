#pragma once

#include <random>

#include "motformer/graph.hpp"

namespace motformer::testing {

struct GraphInstance {
  ad::Matrix detections;   // N_D x d
  ad::Matrix tracks;       // N_T x d
  ad::Matrix edges;        // E_A x d
  SparseGraph det_graph;
  SparseGraph track_graph;
  SparseGraph assoc;
};

// Symmetric graph with self-loops over n nodes, edges ordered by (dst, src).
inline SparseGraph random_symmetric_graph(std::mt19937_64& rng, int n, double p) {
  std::bernoulli_distribution keep(p);
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i) {
    adj[i][i] = true;
    for (int j = i + 1; j < n; ++j) adj[i][j] = adj[j][i] = keep(rng);
  }
  SparseGraph g;
  g.num_src = g.num_dst = n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (adj[i][j]) g.edges.push_back({j, i});
  return g;
}

inline GraphInstance random_instance(std::mt19937_64& rng, int dim, int max_nodes = 12) {
  std::uniform_int_distribution<int> nd(1, max_nodes), nt(1, max_nodes);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution link(0.35);
  auto fill = [&](ad::Index r, ad::Index c) {
    ad::Matrix m(r, c);
    for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    return m;
  };
  GraphInstance g;
  const int n_d = nd(rng), n_t = nt(rng);
  g.det_graph = random_symmetric_graph(rng, n_d, 0.4);
  g.track_graph = random_symmetric_graph(rng, n_t, 0.4);
  g.assoc.num_src = n_t;
  g.assoc.num_dst = n_d;
  for (int i = 0; i < n_d; ++i)
    for (int j = 0; j < n_t; ++j)
      if (link(rng)) g.assoc.edges.push_back({j, i});
  g.detections = fill(n_d, dim);
  g.tracks = fill(n_t, dim);
  g.edges = fill(static_cast<ad::Index>(g.assoc.edges.size()), dim);
  return g;
}

}  // namespace motformer::testing
