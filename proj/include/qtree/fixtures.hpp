#pragma once

#include <cstdint>

#include "qtree/graph.hpp"

namespace qtree {

// Equilateral (q+1)-regular tree as a one-label cone system.
ConeSystem regular_tree_system(int q, double L = 1.0, double alpha = 0.0,
                               const PotentialSpec& w = PotentialSpec::zero());

// Complete graph K_n and the cycle C_n, equal lengths and couplings.
QuantumGraphSpec complete_graph(int n, double L = 1.0, double alpha = 0.0);
QuantumGraphSpec cycle_graph(int n, double L = 1.0, double alpha = 0.0);

// One to three labels with an irreducible M (row sums 2 or 3), lengths in
// [0.6, 1.6], couplings in [0, 3], potentials zero, constant or cosine.
ConeSystem random_cone_system(std::uint64_t seed);

struct RandomTree {
  ConeSystem sys;
  TruncatedQuantumTree tree;
};

// A truncated tree of random_cone_system(seed), at most max_depth levels and
// about max_vertices vertices, with every edge and vertex redrawn on its own:
// lengths within 20% of the label value, couplings in [0, 3], potentials
// from the same three kinds.
RandomTree random_tree(std::uint64_t seed, int max_depth = 8, std::size_t max_vertices = 4000);

}  // namespace qtree
