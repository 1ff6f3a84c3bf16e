#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "qtree/cone_solver.hpp"
#include "qtree/errors.hpp"
#include "qtree/green.hpp"
#include "qtree/oracle.hpp"

using namespace qtree;
using std::numbers::pi;

namespace {

ConeSystem regular(int q, double L = 1.0, double alpha = 0.0) {
  ConeSystem s;
  s.labels = {{L, PotentialSpec::zero(), alpha}};
  s.M = {{q}};
  s.root_reverse_label = 0;
  s.root_row = {q + 1};
  return s;
}

QuantumGraphSpec complete_graph(int n, double L = 1.0) {
  QuantumGraphSpec g;
  for (int i = 0; i < n; ++i) g.vertices.push_back(i);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) g.edges.push_back({i, j, L, PotentialSpec::zero()});
  return g;
}

// Interval [0, l] with Dirichlet ends: G(x, x).
cplx interval_green(cplx z, double l, double x) {
  cplx k = sqrt_branch(z);
  return std::sin(k * x) * std::sin(k * (l - x)) / (k * std::sin(k * l));
}

}  // namespace

TEST_CASE("Dirichlet segment against the interval resolvent") {
  auto t = expand_truncated_tree(regular(1), 3);  // four unit edges
  const cplx z{2.0, 0.5};
  OracleOptions opt;
  opt.boundary = BoundaryRule::dirichlet();
  opt.probes = {1, 2, 3};
  auto coarse = oracle_green(t, z, opt);
  opt.step /= 2;
  auto fine = oracle_green(t, z, opt);
  for (std::size_t i = 0; i < opt.probes.size(); ++i) {
    const double x = t.vertices[opt.probes[i]].depth + 1.0;
    const cplx g = interval_green(z, 4.0, x);
    const double e1 = std::abs(coarse.diag_coarse[i] - g), e2 = std::abs(coarse.diag_fine[i] - g);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));  // second order
    CHECK(std::abs(coarse.diag[i] - g) < 1e-6);
    CHECK(std::abs(fine.diag[i] - g) < std::abs(coarse.diag[i] - g));
  }
  // and the recursion with the same cut conditions
  auto s = wt_recursion(t, z, BoundaryRule::dirichlet());
  for (int v : {1, 2, 3}) CHECK(std::abs(green_diag(s, v).value - interval_green(z, 4.0, double(v))) < 1e-10);
}

TEST_CASE("depth-8 regular tree: oracle against the recursion") {
  auto t = expand_truncated_tree(regular(2), 8);
  const cplx z{2.0, 0.5};
  OracleOptions opt;
  for (int v : {1, 2, 3, 7, 20, 100, 300, t.leaves.front(), t.leaves.back()}) opt.probes.push_back(v);
  auto o = oracle_green(t, z, opt);
  auto s = wt_recursion(t, z);
  double worst = 0.0, c_coarse = 0.0, c_fine = 0.0;
  const double h = opt.step;
  for (std::size_t i = 0; i < o.vertices.size(); ++i) {
    const cplx g = green_diag(s, o.vertices[i]).value;
    worst = std::max(worst, std::abs(o.diag[i] - g));
    c_coarse = std::max(c_coarse, std::abs(o.diag_coarse[i] - g) / (h * h));
    c_fine = std::max(c_fine, std::abs(o.diag_fine[i] - g) / (h * h / 4));
  }
  MESSAGE("extrapolated error " << worst << ", fitted C " << c_coarse << " / " << c_fine);
  CHECK(worst < 1e-5);
  CHECK(c_fine / c_coarse == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("oracle with mixed potentials, couplings and cut rules") {
  ConeSystem sys;
  sys.labels = {{1.0, PotentialSpec::cosine(0.3, 0.5), 0.7}, {1.4, PotentialSpec::constant(-0.5), 1.5}};
  sys.M = {{1, 2}, {1, 1}};
  sys.root_reverse_label = 1;
  auto t = expand_truncated_tree(sys, 4);
  const cplx z{3.0, 0.4};
  for (auto b : {BoundaryRule::free(), BoundaryRule::neumann(), BoundaryRule::dirichlet(), exact_boundary(sys, z)}) {
    OracleOptions opt;
    opt.boundary = b;
    auto o = oracle_green(t, z, opt);
    auto s = wt_recursion(t, z, b);
    double worst = 0.0;
    for (std::size_t i = 0; i < o.vertices.size(); ++i)
      worst = std::max(worst, std::abs(o.diag[i] - green_diag(s, o.vertices[i]).value));
    INFO("boundary " << boundary_name(b.kind));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("kernel probes") {
  auto t = expand_truncated_tree(regular(2), 3);
  const cplx z{1.0, 0.6};
  OracleOptions opt;
  opt.probes = {1};
  std::vector<std::pair<EdgePoint, EdgePoint>> probes = {
      {{2, 0.25}, {2, 0.5}}, {{5, 0.75}, {1, 0.5}}, {{9, 0.5}, {3, 1.0}}, {{1, 0.125}, {12, 0.5}}};
  opt.kernel_probes = probes;
  auto o = oracle_green(t, z, opt);
  auto s = wt_recursion(t, z);
  for (std::size_t i = 0; i < probes.size(); ++i)
    CHECK(std::abs(o.kernel[i] - green_kernel(s, probes[i].first, probes[i].second)) < 1e-5);
}

TEST_CASE("flux balance at a vertex is first order") {
  ConeSystem sys = regular(2, 1.0, 1.3);
  auto t = expand_truncated_tree(sys, 3);
  auto g = metric_graph(t, {2.0, 0.5}, BoundaryRule::free(), BoundaryRule::free());
  const int v = 2;  // interior vertex
  std::vector<double> err;
  for (int refine : {1, 2, 4}) {
    DiscretizedOperator op(g, 1.0 / 32, 32, refine);
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu(op.shifted({2.0, 0.5}));
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(op.size());
    rhs[op.vertex_node(t.leaves.front())] = 1.0;
    Eigen::VectorXcd u = lu.solve(rhs);
    // one-sided differences: children outgoing, incoming edge at its end
    const int incoming = v - 1;  // edges are listed by terminal vertex minus one in cone mode
    REQUIRE(g.edges[incoming].v == v);
    const int n = op.cells(incoming);
    cplx flux = -(u[op.vertex_node(v)] - u[op.edge_node(incoming, n - 1)]) / op.cell(incoming);
    for (int c : t.vertices[v].children) {
      const int e = c - 1;
      flux += (u[op.edge_node(e, 1)] - u[op.vertex_node(v)]) / op.cell(e);
    }
    err.push_back(std::abs(flux - 1.3 * u[op.vertex_node(v)]));
  }
  CHECK(err[1] < 0.6 * err[0]);
  CHECK(err[2] < 0.6 * err[1]);
}

TEST_CASE("discrete reduction on K4") {
  auto g = complete_graph(4);
  // cos sqrt(lambda) = -1/3 with multiplicity three
  const double a = std::acos(-1.0 / 3.0);
  std::vector<double> expect;
  for (int n = 0; n < 3; ++n)
    for (double k : {a + 2 * pi * n, 2 * pi - a + 2 * pi * n})
      if (k * k < 150.0) expect.push_back(k * k);
  std::sort(expect.begin(), expect.end());
  auto zeros = reduction_zeros(g, 0.5, 150.0);
  REQUIRE(zeros.size() == expect.size());
  for (std::size_t i = 0; i < zeros.size(); ++i) {
    CHECK(std::abs(zeros[i].lambda - expect[i]) < 1e-8);
    CHECK(zeros[i].multiplicity == 3);
  }
  // the discretized graph has a triple eigenvalue there
  DiscretizedOperator op(metric_graph(g), 1.0 / 64);
  CHECK(op.count_below(expect[0] + 0.05) - op.count_below(expect[0] - 0.05) == 3);
  // Dirichlet values are refused
  CHECK_THROWS_AS(discrete_reduction(g, pi * pi), DirichletProximityError);
}

TEST_CASE("discrete reduction on a triangle") {
  QuantumGraphSpec g;
  g.vertices = {0, 1, 2};
  g.edges = {{0, 1, 1.0, {}}, {1, 2, 1.0, {}}, {2, 0, 1.0, {}}};
  auto zeros = reduction_zeros(g, 0.5, 200.0);
  std::vector<double> expect;
  for (int n = 1; n < 12; ++n) {
    const double l = std::pow(2 * pi * n / 3, 2);
    if (n % 3 != 0 && l < 200.0) expect.push_back(l);
  }
  REQUIRE(zeros.size() == expect.size());
  for (std::size_t i = 0; i < zeros.size(); ++i) {
    CHECK(std::abs(zeros[i].lambda - expect[i]) < 1e-8);
    CHECK(zeros[i].multiplicity == 2);
  }
}

TEST_CASE("coupling shifts the reduction diagonal") {
  auto g = complete_graph(4);
  auto base = discrete_reduction(g, 2.0);
  for (int v = 0; v < 4; ++v) g.couplings[v] = 0.75;
  auto shifted = discrete_reduction(g, 2.0);
  CHECK((shifted.A - base.A).norm() == 0.0);
  for (int v = 0; v < 4; ++v) CHECK(shifted.W[v] - base.W[v] == 0.75);
}

TEST_CASE("star bottom") {
  auto s = star_bottom(3, {1.0}, {}, 0.0);
  CHECK(std::abs(s.E0 - pi * pi / 4) < 1e-9);
  CHECK(std::abs(s.ED - pi * pi) < 1e-9);
  CHECK(!s.trace.empty());

  auto shifted = star_bottom(3, {1.0}, {}, 5.0);
  CHECK(shifted.E0 > s.E0);
  CHECK(shifted.E0 < pi * pi);

  auto mixed = star_bottom(2, {1.0, 2.0}, {}, 0.0);
  CHECK(std::abs(mixed.ED - pi * pi / 4) < 1e-9);
  CHECK(mixed.E0 < pi * pi / 4);

  // discretized star with Dirichlet extremities
  auto star_graph = [](const std::vector<double>& L, const std::vector<PotentialSpec>& W, double alpha) {
    MetricGraph g;
    g.resize(static_cast<int>(L.size()) + 1);
    g.alpha[0] = alpha;
    for (std::size_t i = 0; i < L.size(); ++i) {
      g.edges.push_back({0, static_cast<int>(i) + 1, L[i], W[i]});
      g.dirichlet[i + 1] = 1;
    }
    return g;
  };
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const int d = 2 + static_cast<int>(rng() % 4);
    std::vector<double> L;
    std::vector<PotentialSpec> W;
    for (int i = 0; i < d; ++i) {
      L.push_back(0.5 + 1.5 * u(rng));
      W.push_back(k % 2 ? PotentialSpec::cosine(2 * u(rng) - 1, 2 * u(rng) - 1) : PotentialSpec::constant(u(rng)));
    }
    const double alpha = 6 * u(rng) - 3;
    auto r = star_bottom(d, L, W, alpha);
    CHECK(r.E0 < r.ED);
    if (k < 6) {
      auto a = smallest_eigenvalue(star_graph(L, W, alpha), 1.0 / 64);
      CHECK(std::abs(a.value - r.E0) < 1e-5);
    }
  }
  CHECK_THROWS_AS(star_bottom(1, {1.0}, {}, 0.0), PreconditionError);
}

TEST_CASE("bottom of a truncated tree lies below the star bottom") {
  for (double alpha : {0.0, 1.0, -1.0}) {
    auto sys = regular(2, 1.0, alpha);
    sys.root_alpha = alpha;
    auto t = expand_truncated_tree(sys, 4, TreeMode::Full);
    auto g = metric_graph(t, 0.0, BoundaryRule::dirichlet(), BoundaryRule::dirichlet());
    auto a0 = smallest_eigenvalue(g, 1.0 / 32);
    auto star = star_bottom(3, {1.0}, {}, alpha);
    INFO("alpha " << alpha << ": a0 " << a0.value << ", E0 " << star.E0);
    CHECK(a0.value <= star.E0 + 1e-6);
    CHECK(star.E0 < star.ED);
  }
}

TEST_CASE("regular tree reference") {
  for (cplx z : {cplx(2.0, 0.5), cplx(0.3, 1.0), cplx(-1.0, 0.2)}) {
    auto line = regular_tree_reference(1, 1.3, 0.0, z);
    CHECK(std::abs(line.zeta - std::exp(cplx(0.0, 1.0) * sqrt_branch(z) * 1.3)) < 1e-12);
    CHECK(std::abs(line.green - cplx(0.0, 1.0) / (2.0 * sqrt_branch(z))) < 1e-12);
    for (int q : {2, 3}) {
      auto sys = regular(q, 1.0, 0.4);
      auto h = solve_cone_system(sys, z);
      auto ref = regular_tree_reference(q, 1.0, 0.4, z);
      CHECK(std::abs(ref.h - h.h[0]) < 1e-10);
      // vertex Green function from the recursion on a full tree with exact seeds
      auto t = expand_truncated_tree(sys, 2, TreeMode::Full);
      sys.root_alpha = 0.4;
      auto tf = expand_truncated_tree(sys, 2, TreeMode::Full);
      auto s = wt_recursion(tf, z, exact_boundary(sys, z));
      CHECK(std::abs(green_diag(s, 0).value - ref.green) < 1e-10);
    }
  }
  // mid-band on the axis
  auto mid = regular_tree_reference(2, 1.0, 0.0, {3.0, 0.0});
  CHECK(mid.in_band);
  CHECK(mid.rplus.imag() > 0.0);
  CHECK(std::norm(mid.zeta) <= 0.5 + 1e-9);
  auto gap = regular_tree_reference(2, 1.0, 0.0, {pi * pi - 0.05, 0.0});
  CHECK_FALSE(gap.in_band);
  CHECK(std::abs(gap.zeta) < 1.0);
}

TEST_CASE("discriminant band edge against detect_bands") {
  // first band edge of the 3-regular tree: cos sqrt(lambda) = 2 sqrt(2)/3
  auto disc = [](double l) { return regular_tree_reference(2, 1.0, 0.0, {l, 0.0}).discriminant; };
  double lo = 0.05, hi = 0.2;
  REQUIRE((disc(lo) > 0) != (disc(hi) > 0));
  while (hi - lo > 1e-13) {
    const double m = 0.5 * (lo + hi);
    ((disc(m) > 0) == (disc(lo) > 0) ? lo : hi) = m;
  }
  const double edge = std::pow(std::acos(2 * std::sqrt(2.0) / 3), 2);
  CHECK(std::abs(lo - edge) < 1e-10);
  std::vector<double> grid;
  for (int i = 0; i <= 30; ++i) grid.push_back(0.05 + 0.15 * i / 30);
  auto rep = detect_bands(regular(2), grid);
  REQUIRE(!rep.bands.empty());
  CHECK(std::abs(rep.bands.front().lo - lo) < 1e-6);
}

TEST_CASE("no point mass away from Dirichlet values") {
  // eta |G(lambda + i eta)| -> 0 on the 3-regular tree off the Dirichlet set
  for (double lambda = 0.5; lambda < 40.0; lambda += 0.37) {
    bool near = false;
    for (int n = 1; n <= 3; ++n) near = near || std::abs(lambda - n * n * pi * pi) < 0.05;
    if (near) continue;
    const double eta = 1e-7;
    auto r = regular_tree_reference(2, 1.0, 0.0, {lambda, eta});
    CHECK(eta * std::abs(r.green) < 1e-5);
  }
}
