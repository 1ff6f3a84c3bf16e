#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "qtree/cone_solver.hpp"
#include "qtree/errors.hpp"
#include "qtree/green.hpp"
#include "qtree/hyperbolic.hpp"

using namespace qtree;
using std::numbers::pi;

namespace {

ConeSystem regular(int q, double L = 1.0, double alpha = 0.0) {
  ConeSystem s;
  s.labels = {{L, PotentialSpec::zero(), alpha}};
  s.M = {{q}};
  s.root_reverse_label = 0;
  return s;
}

ConeSystem two_labels() {
  ConeSystem s;
  s.labels = {{1.0, PotentialSpec::cosine(0.3, 0.5), 0.2}, {1.4, PotentialSpec::zero(), -0.4}};
  s.M = {{1, 2}, {1, 1}};
  s.root_reverse_label = 1;
  return s;
}

// Full trees need a vertex root: the cover of K4.
ConeSystem k4_cover() {
  ConeSystem s = regular(2);
  s.root_row = {3};
  return s;
}

cplx free_root(cplx z) { return cplx(0.0, 1.0) * sqrt_branch(z); }

// Random lengths, couplings and potentials on every edge of the tree.
void scramble(TruncatedQuantumTree& t, std::uint64_t seed, double spread = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t v = 0; v < t.size(); ++v) {
    auto& tv = t.vertices[v];
    tv.alpha += 0.5 * u(rng);
    if (!t.has_edge(static_cast<int>(v))) continue;
    tv.length *= 1.0 + spread * u(rng);
    if (v % 3 == 0) {
      t.potentials.push_back(PotentialSpec::cosine(0.4 * u(rng), 0.6 * u(rng)));
      tv.potential = static_cast<int>(t.potentials.size()) - 1;
    } else if (v % 3 == 1) {
      t.potentials.push_back(PotentialSpec::sampled({0.0, 0.5 * u(rng), 0.3, 0.8 * u(rng)}));
      tv.potential = static_cast<int>(t.potentials.size()) - 1;
    }
  }
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("free line: every WT value is i sqrt(z)") {
  auto sys = regular(1);
  auto t = expand_truncated_tree(sys, 10);
  for (cplx z : {cplx(0.0, 1.0), cplx(3.0, 0.2), cplx(-2.0, 0.5)}) {
    auto s = wt_recursion(t, z);
    const cplx r = free_root(z);
    for (std::size_t v = 1; v < t.size(); ++v) {
      CHECK(std::abs(s.rp_t[v] - r) < 1e-12);
      CHECK(std::abs(s.rp_o[v] - r) < 1e-12);
      CHECK(std::abs(s.rm_o[v] - r) < 1e-12);
      CHECK(std::abs(s.rm_t[v] - r) < 1e-12);
      CHECK(std::abs(green_diag(s, static_cast<int>(v)).value - cplx(0.0, 1.0) / (2.0 * sqrt_branch(z))) < 1e-10);
    }
    auto rep = identity_suite(s);
    CHECK(rep.max_residual() < 1e-12);
    CHECK(rep.current_slack >= 0.0);
  }
  // z = i: |G| = 1/2
  auto s = wt_recursion(t, {0.0, 1.0});
  CHECK(std::abs(std::abs(green_diag(s, 4).value) - 0.5) < 1e-12);
}

TEST_CASE("free line kernel") {
  auto t = expand_truncated_tree(regular(1), 8);
  const cplx z{0.0, 1.0};
  auto s = wt_recursion(t, z);
  const cplx k = sqrt_branch(z);
  auto exact = [&](double d) { return cplx(0.0, 1.0) / (2.0 * k) * std::exp(cplx(0.0, 1.0) * k * d); };
  auto pos = [&](EdgePoint p) { return t.vertices[p.vertex].depth + p.s; };
  std::vector<std::pair<EdgePoint, EdgePoint>> pairs = {
      {{3, 0.2}, {3, 0.7}}, {{3, 0.9}, {3, 0.1}}, {{2, 0.3}, {5, 0.6}}, {{6, 1.0}, {4, 0.0}}, {{1, 0.5}, {1, 0.5}}};
  for (auto [x, y] : pairs) CHECK(std::abs(green_kernel(s, x, y) - exact(std::abs(pos(x) - pos(y)))) < 1e-9);
}

// Attracting/repelling ratio of the 1x1 map h -> 1/(F - q h/S^2): the
// per-level contraction of the truncated recursion near the fixed point.
double regular_rate(int q, double L, double alpha, cplx z) {
  auto e = fundamental_solution(PotentialSpec::zero(), L, z);
  cplx F = alpha + (q + 1.0) * e.C / e.S, a = double(q) / (e.S * e.S);
  cplx d = std::sqrt(F * F - 4.0 * a), r1 = (F + d) / (2.0 * a), r2 = (F - d) / (2.0 * a);
  return std::min(std::abs(r1 / r2), std::abs(r2 / r1));
}

TEST_CASE("truncated recursion converges to the cone solution") {
  const cplx z{2.0, 0.5};
  {
    auto sys = two_labels();
    auto exact = wt_plus(label_solutions(sys, z), solve_cone_system(sys, z).h);
    auto deep = cone_truncated_rplus(sys, z, 30);
    for (int j = 0; j < sys.size(); ++j) CHECK(std::abs(deep[j] - exact[j]) < 1e-8);
  }
  for (int q : {2, 3}) {
    auto sys = regular(q);
    auto exact = wt_plus(label_solutions(sys, z), solve_cone_system(sys, z).h)[0];
    // the error decays at the rate of the scalar map
    const double rate = regular_rate(q, 1.0, 0.0, z);
    const double e20 = std::abs(cone_truncated_rplus(sys, z, 20)[0] - exact);
    const double e30 = std::abs(cone_truncated_rplus(sys, z, 30)[0] - exact);
    CHECK(std::abs(std::log(e30 / e20) / 10.0 - std::log(rate)) < 0.01);
    // depth where rate^d is far below the target
    const int d = static_cast<int>(std::ceil(std::log(1e-11) / std::log(rate)));
    CHECK(std::abs(cone_truncated_rplus(sys, z, d)[0] - exact) < 1e-8);
    MESSAGE("q=" << q << " rate " << rate << ", depth-30 error " << e30 << ", depth-" << d << " used");
  }
  for (auto sys : {regular(2), regular(3, 0.8, 0.5), two_labels()}) {
    auto exact = wt_plus(label_solutions(sys, z), solve_cone_system(sys, z).h);
    // the exact seed is a fixed point at every depth
    auto seeded = cone_truncated_rplus(sys, z, 3, BoundaryRule::exact(sys, exact));
    for (int j = 0; j < sys.size(); ++j) CHECK(std::abs(seeded[j] - exact[j]) < 1e-10);
  }
}

TEST_CASE("shared-subtree recursion equals the expanded tree") {
  auto sys = two_labels();
  const cplx z{1.5, 0.3};
  for (int j = 0; j < sys.size(); ++j) {
    sys.root_label = j;
    auto t = expand_truncated_tree(sys, 6);
    for (auto b : {BoundaryRule::free(), BoundaryRule::dirichlet(), BoundaryRule::neumann()}) {
      auto s = wt_recursion(t, z, b);
      auto c = cone_truncated_rplus(sys, z, 6, b);
      CHECK(std::abs(s.rp_o[1] - c[j]) < 1e-12);
    }
  }
}

TEST_CASE("recursion stability under deeper truncation") {
  for (cplx z : {cplx(2.0, 0.2), cplx(6.0, 0.5)}) {
    for (auto sys : {regular(2), two_labels()}) {
      auto h = [&](int d, BoundaryRule b) { return cone_truncated_rplus(sys, z, d, b); };
      double prev = INFINITY;
      for (int d : {40, 80, 160}) {
        auto a = h(d, {}), b = h(d + 5, {});
        double g = 0.0;
        for (int j = 0; j < sys.size(); ++j) g = std::max(g, gamma_metric(a[j], b[j]));
        CHECK((g < prev || g < 1e-14));
        prev = g;
      }
      CHECK(prev < 1e-8);
      // and the seed no longer matters
      auto f = h(160, BoundaryRule::free()), d = h(160, BoundaryRule::dirichlet());
      for (int j = 0; j < sys.size(); ++j) CHECK(gamma_metric(f[j], d[j]) < 1e-8);
    }
  }
}

TEST_CASE("single Dirichlet leaf") {
  auto t = expand_truncated_tree(regular(1, 1.3), 1);
  const cplx z{2.0, 0.4};
  auto s = wt_recursion(t, z, BoundaryRule::dirichlet());
  const int leaf = t.leaves.front();
  auto e = fundamental_solution(PotentialSpec::zero(), 1.3, z);
  CHECK(s.rp_t_inf[leaf]);
  CHECK(std::abs(s.rp_o[leaf] + e.C / e.S) < 1e-14);
  CHECK(std::abs(s.zf[leaf]) == 0.0);
  CHECK(green_diag(s, leaf).value == cplx(0.0));
  // the parent sees only the leaf branch
  CHECK(std::abs(s.rp_t[1] - s.rp_o[leaf]) < 1e-14);
}

TEST_CASE("identities on random trees") {
  const cplx z{3.0, 0.2};
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto sys = seed % 2 ? regular(2) : two_labels();
    auto t = seed == 3 ? expand_truncated_tree(k4_cover(), 7, TreeMode::Full) : expand_truncated_tree(sys, 8);
    scramble(t, seed);
    for (auto b : {BoundaryRule::free(), BoundaryRule::neumann()}) {
      auto s = wt_recursion(t, z, b);
      auto rep = identity_suite(s, 200, seed);
      for (const auto& r : rep.residuals) {
        INFO(r.name << " at vertex " << r.where);
        CHECK(r.max_residual < 1e-8);
      }
      for (const char* name : {"zetawt", "r+-id", "e:1", "e:2", "zetainv", "greenmul", "sym", "reversal"})
        CHECK(rep.find(name) != nullptr);
      CHECK(rep.current_slack >= 0.0);
    }
  }
}

TEST_CASE("Herglotz properties and the diagonal bound") {
  double min_ratio = INFINITY;
  for (cplx z : {cplx(0.5, 0.3), cplx(3.0, 0.2), cplx(8.0, 1.0), cplx(-1.0, 0.4)}) {
    auto t = expand_truncated_tree(two_labels(), 6);
    scramble(t, 11);
    auto s = wt_recursion(t, z);
    for (std::size_t v = 1; v < t.size(); ++v) {
      const int i = static_cast<int>(v);
      auto g = green_diag(s, i).value;
      CHECK(g.imag() > 0.0);
      CHECK(s.rm_t[v].imag() > 0.0);
      CHECK((s.edge[v].S * s.zf[v]).imag() > 0.0);
      if (!t.vertices[v].children.empty()) {
        CHECK(std::abs(g) <= 1.0 / s.rp_t[v].imag() * (1 + 1e-12));
        min_ratio = std::min(min_ratio, s.rp_t[v].imag() / z.imag());
      }
      auto go = green_origin(s, i).value;
      CHECK(std::abs(go) <= 1.0 / s.rp_o[v].imag() * (1 + 1e-12));
    }
  }
  MESSAGE("min Im R+/Im z over the grid: " << min_ratio);
  CHECK(min_ratio > 0.0);
}

TEST_CASE("off-diagonal products") {
  const cplx z{1.0, 0.3};
  auto t = expand_truncated_tree(regular(2), 6);
  scramble(t, 5);
  auto s = wt_recursion(t, z);
  // k = 1 is the definition of zeta
  const int c = t.vertices[1].children[0];
  auto one = green_offdiag(s, {1, c});
  CHECK(rel(one.forward, green_origin(s, c).value * s.zf[c]) < 1e-14);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 300; ++k) {
    int a = static_cast<int>(rng() % t.size()), b = static_cast<int>(rng() % t.size());
    if (a == b) continue;
    auto p = t.path_between(a, b);
    auto od = green_offdiag(s, p);
    CHECK(rel(od.forward, od.reverse) < 1e-9);
    CHECK(rel(green_vertices(s, a, b), green_vertices(s, b, a)) < 1e-9);
  }
  CHECK_THROWS_AS(green_offdiag(s, {1, c, 1}), PreconditionError);
  CHECK_THROWS_AS(green_offdiag(s, {1, t.leaves.back()}), PreconditionError);
}

TEST_CASE("kernel: symmetry, vertex values and continuity") {
  const cplx z{2.5, 0.4};
  auto t = expand_truncated_tree(two_labels(), 5);
  scramble(t, 7);
  auto s = wt_recursion(t, z);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 60; ++k) {
    int a = 1 + static_cast<int>(rng() % (t.size() - 1)), b = 1 + static_cast<int>(rng() % (t.size() - 1));
    if (k % 4 == 0) b = a;
    EdgePoint x{a, u(rng) * t.vertices[a].length}, y{b, u(rng) * t.vertices[b].length};
    CHECK(rel(green_kernel(s, x, y), green_kernel(s, y, x)) < 1e-9);
  }
  for (int v : {1, 3, 8, 20}) {
    const double L = t.vertices[v].length;
    CHECK(rel(green_kernel(s, {v, L}, {v, L}), green_diag(s, v).value) < 1e-10);
    CHECK(rel(green_kernel(s, {v, 0.0}, {v, 0.0}), green_diag(s, t.vertices[v].parent).value) < 1e-10);
    // the same vertex seen from the incoming edge and from a child edge
    const int c = t.vertices[v].children.front();
    EdgePoint y{t.leaves.front(), 0.3};
    CHECK(rel(green_kernel(s, {v, L}, y), green_kernel(s, {c, 0.0}, y)) < 1e-9);
  }
}

TEST_CASE("reversal relation") {
  const cplx z{1.7, 0.25};
  const auto w = PotentialSpec::sampled({0.0, 1.0, -0.5, 2.0, 0.3});
  REQUIRE_FALSE(w.symmetric);
  auto e = fundamental_solution(w, 1.2, z);
  auto r = fundamental_solution(w.reversed(), 1.2, z);
  auto er = e.reversed();
  CHECK(std::abs(er.C - r.C) < 1e-9);
  CHECK(std::abs(er.S - r.S) < 1e-9);
  CHECK(std::abs(er.Cp - r.Cp) < 1e-9);
  CHECK(std::abs(er.Sp - r.Sp) < 1e-9);
  // R-(t_b) = R+(o_b^) with the monodromy of the reversed edge
  const cplx rmo{0.3, 0.9};
  cplx rmt = (e.Sp * rmo - e.Cp) / (e.C - e.S * rmo);
  cplx rpo_hat = (r.C * rmo - r.Cp) / (r.Sp - r.S * rmo);
  CHECK(std::abs(rmt - rpo_hat) < 1e-9);
  // symmetric potentials have C = S'
  auto s = fundamental_solution(PotentialSpec::cosine(0.2, 0.7), 1.0, z);
  CHECK(std::abs(s.C - s.Sp) < 1e-9);
}

TEST_CASE("pole tagging") {
  // a path of two unit edges with Neumann ends: eigenvalue (pi/2)^2
  auto t = expand_truncated_tree(regular(1), 1);
  WTOptions opt;
  opt.back = BoundaryRule::neumann();
  auto s = wt_recursion(t, {pi * pi / 4.0, 0.0}, BoundaryRule::neumann(), opt);
  CHECK(green_diag(s, 0).pole);
  CHECK(green_diag(s, t.leaves.front()).pole);
  auto off = wt_recursion(t, {pi * pi / 4.0 + 0.3, 0.0}, BoundaryRule::neumann(), opt);
  CHECK_FALSE(green_diag(off, 0).pole);
}

TEST_CASE("exact seeds on the axis") {
  auto sys = regular(2);
  auto t = expand_truncated_tree(sys, 4);
  auto b = exact_boundary(sys, {3.0, 0.0});
  REQUIRE(b.rplus[0].imag() > 0.0);
  auto s = wt_recursion(t, {3.0, 0.0}, b);
  // every edge sees the infinite tree: two forward branches on each side
  for (std::size_t v = 1; v < t.size(); ++v) {
    CHECK(std::abs(s.rp_o[v] - b.rplus[0]) < 1e-9);
    CHECK(std::abs(s.rm_o[v] - 2.0 * b.rplus[0]) < 1e-9);
    CHECK(std::abs(s.rm_t[v] - s.rp_o[v]) < 1e-9);
  }
  // on the axis the current relation is an equality
  auto rep = identity_suite(s);
  CHECK(rep.current_gap < 1e-8);
  CHECK(rep.max_residual() < 1e-8);
}

TEST_CASE("quadratic form") {
  SUBCASE("real WT values give zero") {
    auto t = expand_truncated_tree(regular(1), 1);
    WTOptions opt;
    opt.back = BoundaryRule::fixed(0.7);
    auto s = wt_recursion(t, {2.0, 0.0}, BoundaryRule::fixed(-0.4), opt);
    auto q = im_quadratic_form(s, 1, [](double x) { return 1.0 + x * x; });
    CHECK(std::abs(q.formula) < 1e-14);
    CHECK(std::abs(q.kernel) < 1e-12);
  }
  SUBCASE("free line in band, f = Re phi-") {
    auto t = expand_truncated_tree(regular(1), 3);
    const double lambda = 3.0;
    auto s = wt_recursion(t, {lambda, 0.0});
    const cplx rm = s.rm_o[2];
    auto f = [&](double x) {
      return std::cos(std::sqrt(lambda) * x) - rm.real() * std::sin(std::sqrt(lambda) * x) / std::sqrt(lambda);
    };
    auto q = im_quadratic_form(s, 2, f);
    CHECK(q.formula > 0.0);
    CHECK(std::abs(q.formula - q.kernel) < 1e-6 * std::max(1.0, std::abs(q.kernel)));
  }
  SUBCASE("random tree in a band") {
    auto sys = regular(2);
    auto t = expand_truncated_tree(sys, 5);
    scramble(t, 21, 0.05);
    const cplx z{3.0, 0.0};
    auto s = wt_recursion(t, z, exact_boundary(sys, z));
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int v : {1, 2, 5, 17}) {
      const double a = u(rng), b = u(rng), c = u(rng);
      auto q = im_quadratic_form(s, v, [&](double x) { return a + b * std::sin(3 * x) + c * x * x; });
      CHECK(q.converged);
      CHECK(std::abs(q.formula - q.kernel) < 1e-6 * std::max(1.0, std::abs(q.kernel)));
      CHECK(q.formula >= 0.0);
    }
    std::vector<double> samples;
    for (int i = 0; i < 9; ++i) samples.push_back(u(rng));
    auto q = im_quadratic_form(s, 3, samples);
    CHECK(std::abs(q.formula - q.kernel) < 1e-6 * std::max(1.0, std::abs(q.kernel)));
  }
}
