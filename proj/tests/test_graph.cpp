#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>
#include <set>

#include "qtree/errors.hpp"
#include "qtree/graph.hpp"

using namespace qtree;

namespace {

QuantumGraphSpec complete_graph(int n, double L = 1.0) {
  QuantumGraphSpec g;
  for (int i = 0; i < n; ++i) g.vertices.push_back(i);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) g.edges.push_back({i, j, L, PotentialSpec::zero()});
  return g;
}

QuantumGraphSpec cycle(int n, double L = 1.0) {
  QuantumGraphSpec g;
  for (int i = 0; i < n; ++i) g.vertices.push_back(i);
  for (int i = 0; i < n; ++i) g.edges.push_back({i, (i + 1) % n, L, PotentialSpec::zero()});
  return g;
}

// Irreducibility by positivity of (I + M)^m.
bool irreducible_by_powers(const std::vector<std::vector<int>>& M) {
  const int m = static_cast<int>(M.size());
  std::vector<std::vector<double>> A(m, std::vector<double>(m, 0.0)), P = A;
  for (int i = 0; i < m; ++i) {
    P[i][i] = 1.0;
    for (int j = 0; j < m; ++j) A[i][j] = (i == j) + (M[i][j] > 0);
  }
  for (int s = 0; s < m; ++s) {
    std::vector<std::vector<double>> Q(m, std::vector<double>(m, 0.0));
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) Q[i][j] += P[i][k] * A[k][j];
    P = Q;
  }
  // (I+M)^m > 0 entrywise; combined with >= 1 step reachability for the diagonal
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (P[i][j] <= 0.0) return false;
  for (int i = 0; i < m; ++i) {
    bool out = false;
    for (int j = 0; j < m; ++j) out = out || M[i][j] > 0;
    if (!out) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("graph validation") {
  auto g = complete_graph(4);
  CHECK_NOTHROW(g.validate());
  auto loop = g;
  loop.edges.push_back({1, 1, 1.0, {}});
  CHECK_THROWS_AS(loop.validate(), PreconditionError);
  auto multi = g;
  multi.edges.push_back({1, 0, 1.0, {}});
  CHECK_THROWS_AS(multi.validate(), PreconditionError);
  auto bad = g;
  bad.edges[0].length = 0.0;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  QuantumGraphSpec split;
  split.vertices = {0, 1, 2, 3};
  split.edges = {{0, 1, 1.0, {}}, {2, 3, 1.0, {}}};
  CHECK_THROWS_AS(split.validate(), PreconditionError);
}

TEST_CASE("universal cover of K4") {
  auto sys = build_universal_cover_system(complete_graph(4));
  REQUIRE(sys.size() == 1);
  CHECK(sys.M[0][0] == 2);
  CHECK(sys.root_row == std::vector<int>{3});
  CHECK(sys.root_reverse_label == 0);
  auto rep = check_conditions(sys);
  CHECK(rep.c0);
  CHECK(rep.c1_star);
  CHECK(rep.c2);
}

TEST_CASE("regular equilateral bases give a 1x1 system") {
  // Petersen graph: 3-regular
  QuantumGraphSpec g;
  for (int i = 0; i < 10; ++i) g.vertices.push_back(i);
  for (int i = 0; i < 5; ++i) {
    g.edges.push_back({i, (i + 1) % 5, 1.0, {}});
    g.edges.push_back({i, i + 5, 1.0, {}});
    g.edges.push_back({5 + i, 5 + (i + 2) % 5, 1.0, {}});
  }
  auto sys = build_universal_cover_system(g);
  REQUIRE(sys.size() == 1);
  CHECK(sys.M[0][0] == 2);
  auto k5 = build_universal_cover_system(complete_graph(5));
  REQUIRE(k5.size() == 1);
  CHECK(k5.M[0][0] == 3);
}

TEST_CASE("path base graph is rejected") {
  QuantumGraphSpec g;
  g.vertices = {0, 1, 2};
  g.edges = {{0, 1, 1.0, {}}, {1, 2, 1.0, {}}};
  CHECK_THROWS_AS(build_universal_cover_system(g), ConditionError);
}

TEST_CASE("cycle cover is a line") {
  auto sys = build_universal_cover_system(cycle(5));
  REQUIRE(sys.size() == 1);
  CHECK(sys.M[0][0] == 1);
  auto t = expand_truncated_tree(sys, 6);
  for (std::size_t v = 1; v < t.size(); ++v)
    if (!t.vertices[v].truncated) CHECK(t.vertices[v].children.size() == 1);
}

TEST_CASE("mixed data produces several labels") {
  QuantumGraphSpec g = complete_graph(4);
  g.edges[0].length = 2.0;  // edge 0-1
  g.couplings[2] = 1.5;
  auto sys = build_universal_cover_system(g);
  CHECK(sys.size() > 1);
  // each label's data is uniform and rows reproduce the base degrees
  for (int j = 0; j < sys.size(); ++j) CHECK(sys.row_sum(j) == 2);
  // lifted tree: equal labels carry equal data
  auto t = expand_truncated_tree(sys, 5);
  std::map<int, std::tuple<double, double>> seen;
  for (std::size_t v = 1; v < t.size(); ++v) {
    auto key = std::make_tuple(t.vertices[v].length, t.vertices[v].alpha);
    auto [it, fresh] = seen.emplace(t.vertices[v].label, key);
    if (!fresh && v > 1) CHECK(it->second == key);
  }
}

TEST_CASE("condition checks") {
  ConeSystem a;
  a.labels = {{1.0, {}, 0.0}, {1.0, {}, 0.0}};
  a.M = {{1, 1}, {0, 1}};
  auto ra = check_conditions(a);
  CHECK_FALSE(ra.c1_star);
  CHECK(ra.c1_pair == std::pair<int, int>{1, 0});  // witness (2,1) in 1-based labels
  CHECK(ra.summary().find("label 1 unreachable from 2") != std::string::npos);
  CHECK_FALSE(ra.c0);

  ConeSystem b;
  b.labels = a.labels;
  b.M = {{0, 2}, {2, 0}};
  auto rb = check_conditions(b);
  CHECK(rb.c0);
  CHECK(rb.c1_star);
  // row 1 has only label-2 children and label 2 has no label-2 children
  CHECK_FALSE(rb.c2);

  ConeSystem c;
  c.labels = {{1.0, {}, 0.0}};
  c.M = {{3}};
  auto rc = check_conditions(c);
  CHECK(rc.c0);
  CHECK(rc.c1_star);
  CHECK(rc.c2);
  CHECK(rc.c2_choice == std::vector<int>{0});
}

TEST_CASE("C1* agrees with matrix-power irreducibility") {
  std::mt19937 rng(3);
  for (int t = 0; t < 400; ++t) {
    int m = 1 + rng() % 4;
    ConeSystem s;
    s.labels.assign(m, {1.0, {}, 0.0});
    s.M.assign(m, std::vector<int>(m, 0));
    for (auto& row : s.M)
      for (auto& x : row) x = (rng() % 3 == 0) ? static_cast<int>(rng() % 3) : 0;
    CHECK(check_conditions(s).c1_star == irreducible_by_powers(s.M));
  }
}

TEST_CASE("expansion counts") {
  ConeSystem s;
  s.labels = {{1.0, {}, 0.0}};
  s.M = {{2}};
  auto t = expand_truncated_tree(s, 3);
  CHECK(t.cone_size() == 15);
  CHECK(t.leaves.size() == 8);
  CHECK_THROWS_AS(expand_truncated_tree(s, 0), PreconditionError);
  CHECK_THROWS_AS(expand_truncated_tree(s, 25, TreeMode::Cone, 1000), PreconditionError);

  ConeSystem u;
  u.labels = {{1.0, {}, 0.0}, {1.5, {}, 0.0}};
  u.M = {{1, 2}, {1, 1}};
  u.root_label = 0;
  auto e = expand_truncated_tree(u, 2);
  const auto& root = e.vertices[1];
  REQUIRE(root.children.size() == 3);
  int n0 = 0, n1 = 0;
  for (int c : root.children) (e.vertices[c].label == 0 ? n0 : n1)++;
  CHECK(n0 == 1);
  CHECK(n1 == 2);
  // brute-force count of depth-2 vertices: label-0 child has 3, label-1 children 2 each
  int depth2 = 0;
  for (const auto& v : e.vertices) depth2 += v.depth == 2;
  CHECK(depth2 == 3 + 2 * 2);
}

TEST_CASE("full-tree expansion from a vertex root") {
  auto sys = build_universal_cover_system(complete_graph(4));
  auto t = expand_truncated_tree(sys, 3, TreeMode::Full);
  CHECK(t.vertices[0].children.size() == 3);
  CHECK(t.size() == 1 + 3 + 6 + 12);
}

TEST_CASE("paths and keys") {
  ConeSystem s;
  s.labels = {{1.0, {}, 0.0}};
  s.M = {{2}};
  auto t = expand_truncated_tree(s, 4);
  std::set<std::uint64_t> keys;
  for (const auto& v : t.vertices) keys.insert(v.key);
  CHECK(keys.size() == t.size());
  // deeper expansion keeps the keys of shallower vertices
  auto d = expand_truncated_tree(s, 6);
  for (std::size_t v = 0; v < t.size(); ++v) CHECK(d.vertices[v].key == t.vertices[v].key);

  int a = t.leaves.front(), b = t.leaves.back();
  auto p = t.path_between(a, b);
  CHECK(p.front() == a);
  CHECK(p.back() == b);
  CHECK(p.size() == 9);  // 4 up to the root and 4 down
  for (std::size_t i = 1; i < p.size(); ++i)
    CHECK((t.vertices[p[i]].parent == p[i - 1] || t.vertices[p[i - 1]].parent == p[i]));
  auto order = t.preorder();
  std::vector<int> pos(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
  for (std::size_t v = 1; v < t.size(); ++v) CHECK(pos[t.vertices[v].parent] < pos[v]);
}

TEST_CASE("coherent orientation") {
  ConeSystem s;
  s.labels = {{1.0, {}, 0.0}};
  s.M = {{2}};
  auto t = expand_truncated_tree(s, 3);
  int bo = t.vertices[1].children[0];
  auto o = orient(t, bo);
  int fwd = 0;
  for (auto f : o.forward) fwd += f;
  CHECK(fwd == 1 + 2 + 4);
  // every non-end vertex steps towards b_o
  for (std::size_t v = 0; v < t.size(); ++v) {
    if (static_cast<int>(v) == bo || static_cast<int>(v) == t.vertices[bo].parent) continue;
    int w = static_cast<int>(v), steps = 0;
    while (o.coherent_next[w] >= 0 && steps < 20) w = o.coherent_next[w], ++steps;
    CHECK((w == bo || w == t.vertices[bo].parent));
  }
}
