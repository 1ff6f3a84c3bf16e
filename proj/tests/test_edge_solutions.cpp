#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "qtree/edge_solutions.hpp"
#include "qtree/errors.hpp"

using namespace qtree;
using std::numbers::pi;

namespace {

void check_close(cplx a, cplx b, double tol) {
  CHECK_MESSAGE(std::abs(a - b) <= tol, a, " vs ", b);
}

void check_matrix(const EdgeSolutionMatrix& m, cplx C, cplx S, cplx Cp, cplx Sp, double tol) {
  check_close(m.C, C, tol);
  check_close(m.S, S, tol);
  check_close(m.Cp, Cp, tol);
  check_close(m.Sp, Sp, tol);
}

// Transfer-matrix product for a piecewise constant W: independent of the
// closed form and the integrator.
EdgeSolutionMatrix piecewise_constant(const std::vector<double>& values, double L, cplx z) {
  const double h = L / values.size();
  cplx a = 1, b = 0, c = 0, d = 1;  // [[a,b],[c,d]]
  for (double v : values) {
    cplx k = std::sqrt(z - v);
    cplx co = std::cos(k * h), si = std::sin(k * h);
    cplx ta = co, tb = si / k, tc = -k * si, td = co;
    cplx na = ta * a + tb * c, nb = ta * b + tb * d;
    cplx nc = tc * a + td * c, nd = tc * b + td * d;
    a = na, b = nb, c = nc, d = nd;
  }
  return {a, b, c, d};
}

}  // namespace

TEST_CASE("closed forms") {
  check_matrix(fundamental_solution(PotentialSpec::zero(), pi / 2, cplx(4, 0)), -1, 0, 0, -1, 1e-14);
  check_matrix(fundamental_solution(PotentialSpec::zero(), 1.0, cplx(0, 0)), 1, 1, 0, 1, 1e-15);
  auto shifted = fundamental_solution(PotentialSpec::constant(1.0), 1.0, cplx(1, 0));
  auto free0 = fundamental_solution(PotentialSpec::zero(), 1.0, cplx(0, 0));
  check_matrix(shifted, free0.C, free0.S, free0.Cp, free0.Sp, 1e-15);
}

TEST_CASE("series branch is continuous with the trigonometric branch") {
  for (double r : {1e-3, 3e-3, 9.9e-3, 1.01e-2, 2e-2}) {
    for (double ph : {0.0, 1.0, 2.5}) {
      cplx z = std::polar(r, ph);
      auto m = fundamental_solution(PotentialSpec::zero(), 1.0, z);
      cplx k = std::sqrt(z);
      check_close(m.C, std::cos(k), 1e-13);
      check_close(m.S, std::sin(k) / k, 1e-13);
      check_close(m.Cp, -k * std::sin(k), 1e-13);
    }
  }
}

TEST_CASE("sqrt branch") {
  CHECK(sqrt_branch(cplx(-4, 0)).imag() == doctest::Approx(2.0));
  CHECK(sqrt_branch(cplx(-4, -0.0)).imag() >= 0.0);
  CHECK(sqrt_branch(cplx(3, 1e-9)).imag() > 0.0);
  CHECK(ComplexEnergy{2.0, 0.5}.z() == cplx(2.0, 0.5));
}

TEST_CASE("integrator agrees with the closed form") {
  // A zero-amplitude cosine goes through the ODE path.
  auto w = PotentialSpec::cosine(2.0, 0.0);
  REQUIRE_FALSE(w.closed_form());
  for (cplx z : {cplx(3.0, 0.2), cplx(-7.0, 1.0), cplx(40.0, 0.01)}) {
    auto a = fundamental_solution(w, 1.3, z);
    auto b = fundamental_solution(PotentialSpec::constant(2.0), 1.3, z);
    double s = 1e-9 * (1 + std::abs(b.Cp));
    check_matrix(a, b.C, b.S, b.Cp, b.Sp, s);
  }
}

TEST_CASE("sampled potential matches a transfer-matrix oracle in the step limit") {
  // Linear interpolation of samples (0,4,0) against a fine staircase.
  auto w = PotentialSpec::sampled({0.0, 4.0, 0.0});
  const cplx z(6.0, 0.3);
  auto m = fundamental_solution(w, 1.0, z);
  std::vector<double> stairs;
  const int n = 4000;
  for (int i = 0; i < n; ++i) stairs.push_back(w((i + 0.5) / n, 1.0));
  auto o = piecewise_constant(stairs, 1.0, z);
  check_matrix(m, o.C, o.S, o.Cp, o.Sp, 1e-6);
}

TEST_CASE("Wronskian over the energy grid") {
  const PotentialSpec ws[] = {PotentialSpec::cosine(1.0, 2.0), PotentialSpec::sampled({0.5, 3.0, -1.0, 2.0})};
  for (const auto& w : ws) {
    double worst = 0.0;
    for (double l = -10.0; l <= 50.0; l += 5.0)
      for (double e : {0.0, 0.25, 1.0}) {
        auto m = fundamental_solution(w, 1.0, cplx(l, e));
        worst = std::max({worst, m.wronskian_residual(), last_ode_stats().max_step_wronskian});
      }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("grid evaluation is consistent with point evaluation") {
  auto w = PotentialSpec::cosine(0.5, 1.5);
  std::vector<double> xs = {0.0, 0.2, 0.5, 0.9, 1.4};
  auto g = fundamental_solution_grid(w, 1.4, xs, cplx(5, 0.5));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto p = fundamental_solution_at(w, 1.4, xs[i], cplx(5, 0.5));
    check_matrix(g[i], p.C, p.S, p.Cp, p.Sp, 1e-9);
  }
  check_matrix(g[0], 1, 0, 0, 1, 0.0);
}

TEST_CASE("reversed edge") {
  // Integrating W(L - x) gives the reversed monodromy.
  auto w = PotentialSpec::sampled({0.0, 3.0, 1.0, -2.0});
  const cplx z(4.0, 0.7);
  auto f = fundamental_solution(w, 1.2, z);
  auto r = fundamental_solution(w.reversed(), 1.2, z);
  auto fr = f.reversed();
  check_matrix(r, fr.C, fr.S, fr.Cp, fr.Sp, 1e-9);
}

TEST_CASE("analyticity in z") {
  auto w = PotentialSpec::cosine(1.0, 2.0);
  const cplx z(7.0, 0.4);
  const double h = 1e-4;
  auto dx = (fundamental_solution(w, 1.0, z + h).C - fundamental_solution(w, 1.0, z - h).C) / (2 * h);
  auto dy = (fundamental_solution(w, 1.0, z + cplx(0, h)).C -
             fundamental_solution(w, 1.0, z - cplx(0, h)).C) /
            (cplx(0, 2 * h));
  CHECK(std::abs(dx - dy) <= 1e-5 * std::abs(dx));
}

TEST_CASE("Herglotz property of -S'/S") {
  for (const auto& w : {PotentialSpec::zero(), PotentialSpec::cosine(1.0, 1.0), PotentialSpec::sampled({-3.0, 2.0, 1.0})})
    for (double l = -10; l <= 50; l += 2.5)
      for (double e : {0.01, 0.3, 1.0}) {
        auto m = fundamental_solution(w, 1.1, cplx(l, e));
        cplx r = -m.Sp / m.S;
        CHECK(r.imag() >= -1e-12);
        if (w.min_value() >= 0.0) {
          cplx q = r / sqrt_branch(cplx(l, e));
          CHECK(q.imag() >= -1e-12);
        }
      }
}

TEST_CASE("large negative energy asymptotics") {
  for (double r : {20.0, 40.0}) {
    auto m = fundamental_solution(PotentialSpec::zero(), 1.0, cplx(-r * r, 0.0));
    CHECK(std::abs(m.C / (r * m.S) - 1.0) < 1e-3);
  }
  // With a potential the ratio still tends to 1, at rate O(1/r^2).
  auto w = PotentialSpec::cosine(1.0, 2.0);
  double prev = 1e300;
  for (double r : {20.0, 40.0, 80.0}) {
    auto m = fundamental_solution(w, 1.0, cplx(-r * r, 0.0));
    double dev = std::abs(m.C / (r * m.S) - 1.0);
    CHECK(dev < 2.0 * w.sup_norm() / (r * r));
    CHECK(dev < prev);
    prev = dev;
  }
}

TEST_CASE("Dirichlet spectrum") {
  auto a = dirichlet_spectrum(PotentialSpec::zero(), 1.0, 50.0);
  REQUIRE(a.size() == 2);
  CHECK(a[0] == doctest::Approx(pi * pi).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(4 * pi * pi).epsilon(1e-14));

  auto b = dirichlet_spectrum(PotentialSpec::constant(5.0), 1.0, 50.0);
  REQUIRE(b.size() == 2);
  CHECK(b[0] == doctest::Approx(pi * pi + 5));
  CHECK(b[1] == doctest::Approx(4 * pi * pi + 5));

  ConeSystem sys;
  sys.labels = {{1.0, PotentialSpec::zero(), 0.0}, {2.0, PotentialSpec::zero(), 0.0}};
  sys.M = {{1, 1}, {1, 1}};
  auto per = dirichlet_spectrum(sys, 12.0);
  REQUIRE(per.size() == 2);
  CHECK(per[0].size() == 1);
  // 9 pi^2 / 4 ~ 22.2 lies above lambda_max = 12
  CHECK(per[1].size() == 2);
  auto merged = merge_values(per);
  REQUIRE(merged.size() == 2);
  CHECK(merged[0] == doctest::Approx(pi * pi / 4));
  CHECK(merged[1] == doctest::Approx(pi * pi));
  auto wide = merge_values(dirichlet_spectrum(sys, 23.0));
  REQUIRE(wide.size() == 3);
  CHECK(wide[2] == doctest::Approx(9 * pi * pi / 4));
}

TEST_CASE("Dirichlet spectrum of a non-closed-form potential") {
  // Cosine with zero amplitude takes the scan path and must land on the shifted values.
  auto v = dirichlet_spectrum(PotentialSpec::cosine(5.0, 0.0), 1.0, 50.0);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == doctest::Approx(pi * pi + 5).epsilon(1e-10));
  CHECK(v[1] == doctest::Approx(4 * pi * pi + 5).epsilon(1e-10));
  // Every value is a zero of S and sits next to a sign change.
  auto w = PotentialSpec::cosine(0.0, 3.0);
  for (double l : dirichlet_spectrum(w, 1.5, 60.0)) {
    CHECK(std::abs(fundamental_solution(w, 1.5, cplx(l, 0)).S) < 1e-9);
    CHECK(near_dirichlet(w, 1.5, l, 1e-6));
    CHECK_FALSE(near_dirichlet(w, 1.5, l + 0.05, 1e-6));
  }
}

TEST_CASE("near Dirichlet guard") {
  CHECK(near_dirichlet(PotentialSpec::zero(), 1.0, pi * pi + 5e-7, 1e-6));
  CHECK_FALSE(near_dirichlet(PotentialSpec::zero(), 1.0, pi * pi + 5e-6, 1e-6));
  CHECK_FALSE(near_dirichlet(PotentialSpec::zero(), 1.0, 2.0, 1e-6));
  CHECK(near_dirichlet(PotentialSpec::constant(2.0), 1.0, 4 * pi * pi + 2.0, 1e-6));
}

TEST_CASE("thickened Dirichlet set") {
  auto t = thickened_dirichlet(std::vector<double>{1.0}, 0.1, 13.0);
  REQUIRE(t.size() == 2);
  CHECK(t[0].lo == 0.0);
  CHECK(t[0].hi == 0.0);
  CHECK(t[1].lo == doctest::Approx(pi * pi / 1.21));
  CHECK(t[1].hi == doctest::Approx(pi * pi / 0.81));
  CHECK(t[1].lo == doctest::Approx(8.157).epsilon(1e-3));
  CHECK(t[1].hi == doctest::Approx(12.185).epsilon(1e-3));

  auto z = thickened_dirichlet(std::vector<double>{1.0, 2.0}, 0.0, 50.0);
  for (const auto& iv : z) CHECK(iv.lo == iv.hi);
  CHECK(z.size() == 1 + 4);  // 0, pi^2/4, pi^2, 9pi^2/4, 4pi^2 (16pi^2/4 merges)

  CHECK_THROWS_AS(thickened_dirichlet(std::vector<double>{1.0, 0.5}, 0.5, 10.0), PreconditionError);
}

TEST_CASE("thickened Dirichlet set against brute-force enumeration") {
  const std::vector<double> Ls = {1.0, 2.0};
  const double eps = 0.05, lmax = 15.0;
  auto t = thickened_dirichlet(Ls, eps, lmax);
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i - 1].hi < t[i].lo);
  // membership on a fine grid
  for (double x = 0.0; x <= lmax; x += 1e-3) {
    bool direct = false;
    for (double L : Ls)
      for (int n = 0; n < 20; ++n) {
        double lo = pi * pi * n * n / ((L + eps) * (L + eps));
        double hi = pi * pi * n * n / ((L - eps) * (L - eps));
        direct = direct || (x >= lo && x <= hi);
      }
    bool got = false;
    for (const auto& iv : t) got = got || iv.contains(x);
    CHECK(direct == got);
  }
}
