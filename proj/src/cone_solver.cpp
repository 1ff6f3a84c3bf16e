#include "qtree/cone_solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "qtree/errors.hpp"
#include "qtree/hyperbolic.hpp"
#include "qtree/parallel.hpp"

namespace qtree {

namespace {

double max_abs(const std::vector<cplx>& v) {
  double m = 0.0;
  for (auto x : v) m = std::max(m, std::abs(x));
  return m;
}

void require_c1_star(const ConeSystem& sys) {
  auto rep = check_conditions(sys);
  if (!rep.c1_star) throw ConditionError("cone system is not irreducible: " + rep.summary());
}

void check_herglotz(const std::vector<cplx>& h, const char* where) {
  for (auto x : h)
    if (!(x.imag() > 0.0))
      throw HerglotzViolation(std::string(where) + ": multiplier left the upper half-plane");
}

}  // namespace

std::vector<EdgeSolutionMatrix> label_solutions(const ConeSystem& sys, cplx z, double delta_D) {
  std::vector<EdgeSolutionMatrix> out;
  out.reserve(sys.labels.size());
  for (const auto& l : sys.labels) {
    if (z.imag() == 0.0 && near_dirichlet(l.potential, l.length, z.real(), delta_D))
      throw DirichletProximityError("energy is within the Dirichlet guard of a label", z.real());
    out.push_back(fundamental_solution(l.potential, l.length, z));
  }
  return out;
}

std::vector<cplx> f_coefficients(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e) {
  const int m = sys.size();
  std::vector<cplx> F(m);
  for (int j = 0; j < m; ++j) {
    cplx f = sys.labels[j].alpha + e[j].Sp / e[j].S;
    for (int k = 0; k < m; ++k)
      if (sys.M[j][k]) f += static_cast<double>(sys.M[j][k]) * e[k].C / e[k].S;
    F[j] = f;
  }
  return F;
}

std::vector<cplx> f_coefficients(const ConeSystem& sys, cplx z, double delta_D) {
  return f_coefficients(sys, label_solutions(sys, z, delta_D));
}

std::vector<cplx> cone_residual(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e,
                                const std::vector<cplx>& F, const std::vector<cplx>& h) {
  const int m = sys.size();
  std::vector<cplx> P(m);
  for (int j = 0; j < m; ++j) {
    cplx s = 0.0;
    for (int k = 0; k < m; ++k)
      if (sys.M[j][k]) s += static_cast<double>(sys.M[j][k]) * h[k] / (e[k].S * e[k].S);
    P[j] = s * h[j] - F[j] * h[j] + 1.0;
  }
  return P;
}

std::vector<cplx> cone_map(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e,
                           const std::vector<cplx>& F, const std::vector<cplx>& h) {
  const int m = sys.size();
  std::vector<cplx> out(m);
  for (int j = 0; j < m; ++j) {
    cplx s = F[j];
    for (int k = 0; k < m; ++k)
      if (sys.M[j][k]) s -= static_cast<double>(sys.M[j][k]) * h[k] / (e[k].S * e[k].S);
    out[j] = 1.0 / s;
  }
  return out;
}

bool newton_polish(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e,
                   const std::vector<cplx>& F, std::vector<cplx>& h, int max_steps, double target,
                   double* residual_out) {
  const int m = sys.size();
  Eigen::MatrixXcd a(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k) a(j, k) = static_cast<double>(sys.M[j][k]) / (e[k].S * e[k].S);
  auto P = cone_residual(sys, e, F, h);
  double res = max_abs(P);
  int stalls = 0;
  for (int it = 0; it < max_steps && res > target; ++it) {
    Eigen::MatrixXcd J(m, m);
    Eigen::VectorXcd rhs(m);
    for (int j = 0; j < m; ++j) {
      cplx row = -F[j];
      for (int k = 0; k < m; ++k) {
        J(j, k) = a(j, k) * h[j];
        row += a(j, k) * h[k];
      }
      J(j, j) += row;
      rhs(j) = -P[j];
    }
    Eigen::VectorXcd d = J.partialPivLu().solve(rhs);
    std::vector<cplx> hn(h);
    for (int j = 0; j < m; ++j) hn[j] += d(j);
    auto Pn = cone_residual(sys, e, F, hn);
    double rn = max_abs(Pn);
    if (!std::isfinite(rn)) break;
    if (rn >= res) {
      if (++stalls >= 3) break;
    } else {
      stalls = 0;
    }
    h = std::move(hn);
    P = std::move(Pn);
    res = rn;
  }
  if (residual_out) *residual_out = res;
  return res <= target;
}

HerglotzVector solve_cone_system(const ConeSystem& sys, cplx z, const SolverOptions& opt,
                                 const std::vector<cplx>* warm) {
  if (!(z.imag() > 0.0)) throw PreconditionError("solve_cone_system needs Im z > 0");
  sys.validate();
  require_c1_star(sys);
  const int m = sys.size();
  auto e = label_solutions(sys, z, opt.delta_D);
  auto F = f_coefficients(sys, e);
  // Start inside the invariant cone {h : R+(h) in the upper half-plane}: the
  // free half-line value R+ = i sqrt(z), or a warm start that lies in it.
  const cplx seed = cplx(0.0, 1.0) * sqrt_branch(z);
  std::vector<cplx> h(m);
  for (int j = 0; j < m; ++j) h[j] = e[j].S * (e[j].C + e[j].S * seed);
  if (warm && static_cast<int>(warm->size()) == m) {
    auto r = wt_plus(e, *warm);
    bool ok = true;
    for (int j = 0; j < m; ++j) ok = ok && (*warm)[j].imag() > 0.0 && r[j].imag() > 0.0;
    if (ok) h = *warm;
  }
  HerglotzVector out;
  out.z = z;
  double gap = std::numeric_limits<double>::infinity();
  long it = 0;
  while (it < opt.max_iter) {
    auto hn = cone_map(sys, e, F, h);
    ++it;
    check_herglotz(hn, "solve_cone_system");
    gap = 0.0;
    for (int j = 0; j < m; ++j) gap = std::max(gap, gamma_metric(hn[j], h[j]));
    h = std::move(hn);
    if (gap < opt.tol) break;
  }
  if (!(gap < opt.tol))
    throw ConvergenceError("cone fixed-point iteration did not converge", gap, h);
  double res = 0.0;
  std::vector<cplx> hp = h;
  newton_polish(sys, e, F, hp, opt.newton_steps, 0.0, &res);
  // a Newton step that leaves the half-plane is discarded
  if (std::all_of(hp.begin(), hp.end(), [](cplx x) { return x.imag() > 0.0; })) h = hp;
  res = max_abs(cone_residual(sys, e, F, h));
  if (res > 10.0 * opt.tol) {
    std::vector<cplx> more = h;
    double r2 = res;
    newton_polish(sys, e, F, more, 10, opt.tol, &r2);
    if (r2 < res && std::all_of(more.begin(), more.end(), [](cplx x) { return x.imag() > 0.0; })) {
      h = more;
      res = r2;
    }
  }
  out.h = std::move(h);
  out.residual = res;
  out.iterations = it;
  out.gamma_gap = gap;
  return out;
}

std::vector<cplx> wt_plus(const std::vector<EdgeSolutionMatrix>& e, const std::vector<cplx>& h) {
  std::vector<cplx> r(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) r[j] = (h[j] / e[j].S - e[j].C) / e[j].S;
  return r;
}

std::vector<cplx> zeta_from_h(const std::vector<EdgeSolutionMatrix>& e, const std::vector<cplx>& h) {
  std::vector<cplx> r(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) r[j] = h[j] / e[j].S;
  return r;
}

cplx root_green(const ConeSystem& sys, const std::vector<cplx>& rplus) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (!sys.root_row.empty()) {
    cplx den = -sys.root_alpha;
    for (int k = 0; k < sys.size(); ++k) den += static_cast<double>(sys.root_row[k]) * rplus[k];
    return -1.0 / den;
  }
  const int r = sys.root_label;
  if (sys.root_reverse_label >= 0 && sys.L_o() == sys.labels[r].length) {
    cplx den = -sys.labels[r].alpha + rplus[sys.root_reverse_label];
    for (int k = 0; k < sys.size(); ++k) den += static_cast<double>(sys.M[r][k]) * rplus[k];
    return -1.0 / den;
  }
  return {nan, nan};
}

std::vector<double> eta_schedule(const AxisOptions& opt) {
  if (!opt.schedule.empty()) return opt.schedule;
  std::vector<double> s;
  double eta = opt.eta0;
  for (int k = 0; k < opt.steps; ++k, eta *= opt.rho) s.push_back(eta);
  return s;
}

namespace {

// Lagrange extrapolation to eta = 0 through (eta_i, h_i).
std::vector<cplx> extrapolate(const std::vector<double>& eta, const std::vector<std::vector<cplx>>& hs,
                              std::size_t first, std::size_t count) {
  const std::size_t m = hs[first].size();
  std::vector<cplx> out(m, 0.0);
  for (std::size_t i = first; i < first + count; ++i) {
    double w = 1.0;
    for (std::size_t j = first; j < first + count; ++j)
      if (j != i) w *= eta[j] / (eta[j] - eta[i]);
    for (std::size_t c = 0; c < m; ++c) out[c] += w * hs[i][c];
  }
  return out;
}

double max_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

AxisLimit limit_on_axis(const ConeSystem& sys, double lambda, const AxisOptions& opt,
                        const std::vector<cplx>* warm) {
  for (const auto& l : sys.labels)
    if (near_dirichlet(l.potential, l.length, lambda, opt.delta_D))
      throw DirichletProximityError("limit_on_axis: lambda is within the Dirichlet guard", lambda);
  const auto sched = eta_schedule(opt);
  if (sched.empty()) throw PreconditionError("limit_on_axis: empty eta schedule");
  for (std::size_t i = 0; i < sched.size(); ++i)
    if (!(sched[i] > 0.0) || (i > 0 && sched[i] >= sched[i - 1]))
      throw PreconditionError("limit_on_axis: eta schedule must be positive and decreasing");

  AxisLimit out;
  SolverOptions so;
  so.delta_D = opt.delta_D;
  std::vector<double> etas;
  std::vector<std::vector<cplx>> hs;
  std::vector<cplx> h;
  for (std::size_t k = 0; k < sched.size(); ++k) {
    const cplx z(lambda, sched[k]);
    if (k == 0) {
      h = solve_cone_system(sys, z, so, warm).h;
    } else {
      auto e = label_solutions(sys, z);
      auto F = f_coefficients(sys, e);
      std::vector<cplx> trial = h;
      const double target = 1e-13 * std::max(1.0, max_abs(h));
      bool ok = newton_polish(sys, e, F, trial, 30, target);
      if (ok) {
        auto r = wt_plus(e, trial);
        for (std::size_t j = 0; j < trial.size(); ++j)
          ok = ok && trial[j].imag() > 0.0 && r[j].imag() > 0.0;
      }
      if (ok) {
        h = trial;
      } else {
        try {
          h = solve_cone_system(sys, z, so, &h).h;
        } catch (const ConvergenceError&) {
          out.diverged = max_abs(h) > opt.divergence_cap;
          break;
        }
      }
    }
    etas.push_back(sched[k]);
    hs.push_back(h);
    if (max_abs(h) > opt.divergence_cap) {
      out.diverged = true;
      break;
    }
  }
  out.h_first = hs.front();
  out.h_last = hs.back();
  out.eta_final = etas.back();
  const std::size_t n = hs.size();
  if (n >= 4) {
    out.h_extrapolated = extrapolate(etas, hs, n - 3, 3);
    out.gap = max_diff(out.h_extrapolated, extrapolate(etas, hs, n - 4, 3));
  } else if (n >= 2) {
    out.h_extrapolated = extrapolate(etas, hs, n - std::min<std::size_t>(n, 3), std::min<std::size_t>(n, 3));
    out.gap = max_diff(out.h_extrapolated, hs.back());
  } else {
    out.h_extrapolated = hs.back();
    out.gap = std::numeric_limits<double>::infinity();
  }
  const double scale = std::max(1.0, max_abs(out.h_extrapolated));
  out.converged = !out.diverged && out.gap < opt.tol * scale && n == sched.size();
  out.h = out.h_extrapolated;
  out.edges = label_solutions(sys, cplx(lambda, 0.0), opt.delta_D);
  if (opt.polish_on_axis && !out.diverged) {
    auto F = f_coefficients(sys, out.edges);
    std::vector<cplx> ha = out.h_extrapolated;
    bool ok = newton_polish(sys, out.edges, F, ha, 40, 1e-12 * scale);
    ok = ok && std::all_of(ha.begin(), ha.end(),
                           [&](cplx x) { return x.imag() >= -1e-9 * scale; });
    ok = ok && max_diff(ha, out.h_extrapolated) <= 1e-2 * scale;
    if (ok) {
      for (auto& x : ha)
        if (x.imag() < 0.0) x.imag(0.0);
      out.h = ha;
      out.polished = true;
    }
  }
  return out;
}

namespace {

struct PointEval {
  BandRow row;
  std::vector<cplx> h_first;
};

PointEval evaluate_point(const ConeSystem& sys, double lambda, const BandOptions& opt,
                         const std::vector<cplx>* warm) {
  PointEval p;
  p.row.lambda = lambda;
  for (const auto& l : sys.labels)
    if (near_dirichlet(l.potential, l.length, lambda, opt.axis.delta_D)) {
      p.row.guard = true;
      return p;
    }
  try {
    auto lim = limit_on_axis(sys, lambda, opt.axis, warm);
    p.h_first = lim.h_first;
    p.row.eta_final = lim.eta_final;
    if (lim.diverged || !(lim.converged || lim.polished)) {
      p.row.exceptional = true;
      return p;
    }
    auto rp = wt_plus(lim.edges, lim.h);
    for (std::size_t j = 0; j < rp.size(); ++j) {
      p.row.im_h.push_back(lim.h[j].imag());
      p.row.im_rplus.push_back(rp[j].imag());
    }
    p.row.green_root = root_green(sys, rp);
  } catch (const ConvergenceError&) {
    p.row.exceptional = true;
  } catch (const HerglotzViolation&) {
    p.row.exceptional = true;
  }
  return p;
}

bool in_band(const BandRow& r, double threshold) {
  if (r.guard || r.exceptional || r.im_rplus.empty()) return false;
  return *std::min_element(r.im_rplus.begin(), r.im_rplus.end()) > threshold;
}

// Bisection between an in-band point a and an out-of-band point b.
double refine_edge(const ConeSystem& sys, double a, double b, std::vector<cplx> warm,
                   const BandOptions& opt) {
  while (std::abs(b - a) > opt.refine_tol) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    auto p = evaluate_point(sys, mid, opt, warm.empty() ? nullptr : &warm);
    if (in_band(p.row, opt.im_threshold)) {
      a = mid;
      if (!p.h_first.empty()) warm = p.h_first;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

BandReport detect_bands(const ConeSystem& sys, const std::vector<double>& grid,
                        const BandOptions& opt) {
  sys.validate();
  require_c1_star(sys);
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw PreconditionError("detect_bands: grid must be increasing");
  BandReport rep;
  const std::size_t n = grid.size();
  std::vector<PointEval> pts(n);
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  parallel_chunks(
      n_chunks,
      [&](std::size_t c) {
        std::vector<cplx> warm;
        for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
          pts[i] = evaluate_point(sys, grid[i], opt, warm.empty() ? nullptr : &warm);
          if (!pts[i].h_first.empty()) warm = pts[i].h_first;
        }
      },
      opt.workers);

  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_band(pts[i].row, opt.im_threshold)) continue;
    if (!runs.empty() && runs.back().second + 1 == i)
      runs.back().second = i;
    else
      runs.push_back({i, i});
  }
  std::vector<Interval> bands(runs.size());
  parallel_chunks(
      runs.size(),
      [&](std::size_t r) {
        auto [a, b] = runs[r];
        double lo = grid[a], hi = grid[b];
        if (opt.refine) {
          if (a > 0) lo = refine_edge(sys, grid[a], grid[a - 1], pts[a].h_first, opt);
          if (b + 1 < n) hi = refine_edge(sys, grid[b], grid[b + 1], pts[b].h_first, opt);
        }
        bands[r] = {lo, hi};
      },
      opt.workers);
  rep.bands = bands;
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (std::size_t i = runs[r].first; i <= runs[r].second; ++i)
      pts[i].row.band_id = static_cast<int>(r);
  for (auto& p : pts) {
    if (p.row.exceptional) rep.exceptional.push_back(p.row.lambda);
    if (p.row.guard) rep.guarded.push_back(p.row.lambda);
    rep.rows.push_back(std::move(p.row));
  }
  return rep;
}

}  // namespace qtree
