#include "qtree/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qtree {

ConeSystem regular_tree_system(int q, double L, double alpha, const PotentialSpec& w) {
  ConeSystem s;
  s.labels = {{L, w, alpha}};
  s.M = {{q}};
  s.root_reverse_label = 0;
  s.root_row = {q + 1};
  s.root_alpha = alpha;
  return s;
}

QuantumGraphSpec complete_graph(int n, double L, double alpha) {
  QuantumGraphSpec g;
  for (int v = 0; v < n; ++v) {
    g.vertices.push_back(v);
    g.couplings[v] = alpha;
    for (int u = 0; u < v; ++u) g.edges.push_back({u, v, L, PotentialSpec::zero()});
  }
  return g;
}

QuantumGraphSpec cycle_graph(int n, double L, double alpha) {
  QuantumGraphSpec g;
  for (int v = 0; v < n; ++v) {
    g.vertices.push_back(v);
    g.couplings[v] = alpha;
    g.edges.push_back({v, (v + 1) % n, L, PotentialSpec::zero()});
  }
  return g;
}

namespace {

PotentialSpec random_potential(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  switch (rng() % 3) {
    case 0:
      return PotentialSpec::zero();
    case 1:
      return PotentialSpec::constant(u(rng));
    default: {
      const double a = u(rng), b = u(rng);
      return PotentialSpec::cosine(a, b);
    }
  }
}

}  // namespace

ConeSystem random_cone_system(std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed));
  std::uniform_real_distribution<double> len(0.6, 1.6), cpl(0.0, 3.0);
  const int m = 1 + static_cast<int>(rng() % 3);
  ConeSystem s;
  for (int j = 0; j < m; ++j) {
    const double L = len(rng), a = cpl(rng);
    s.labels.push_back({L, random_potential(rng), a});
  }
  for (;;) {
    s.M.assign(m, std::vector<int>(m, 0));
    for (int j = 0; j < m; ++j) {
      const int total = 2 + static_cast<int>(rng() % 2);
      for (int c = 0; c < total; ++c) ++s.M[j][rng() % m];
    }
    if (check_conditions(s).c1_star) break;
  }
  s.root_label = static_cast<int>(rng() % m);
  s.root_reverse_label = static_cast<int>(rng() % m);
  return s;
}

RandomTree random_tree(std::uint64_t seed, int max_depth, std::size_t max_vertices) {
  RandomTree r;
  r.sys = random_cone_system(seed);
  // deepest truncation within the vertex budget
  int depth = 0;
  std::size_t level = 1, total = 2;
  double growth = 0.0;
  for (int j = 0; j < r.sys.size(); ++j) growth = std::max(growth, double(r.sys.row_sum(j)));
  while (depth < max_depth) {
    level = static_cast<std::size_t>(double(level) * growth);
    if (total + level > max_vertices) break;
    total += level;
    ++depth;
  }
  r.tree = expand_truncated_tree(r.sys, std::max(depth, 1));
  std::mt19937_64 rng(mix64(seed ^ 0xA0761D6478BD642FULL));
  std::uniform_real_distribution<double> u(-1.0, 1.0), cpl(0.0, 3.0);
  auto& t = r.tree;
  for (std::size_t v = 1; v < t.size(); ++v) {
    auto& tv = t.vertices[v];
    tv.alpha = cpl(rng);
    tv.length *= 1.0 + 0.2 * u(rng);
    t.potentials.push_back(random_potential(rng));
    tv.potential = static_cast<int>(t.potentials.size()) - 1;
  }
  return r;
}

}  // namespace qtree
