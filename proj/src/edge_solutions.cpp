#include "qtree/edge_solutions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "qtree/errors.hpp"

namespace qtree {

cplx sqrt_branch(cplx z) {
  cplx r = std::sqrt(z);
  if (r.imag() < 0.0) r = -r;
  return r;
}

namespace {

thread_local OdeStats g_stats;

EdgeSolutionMatrix closed_form_at(double shift, double x, cplx z) {
  const cplx w = z - shift;
  EdgeSolutionMatrix m;
  if (x == 0.0) return m;
  const cplx u = w * (x * x);
  if (std::abs(u) < 1e-2) {
    // cos and sin(kx)/k as series in u = k^2 x^2; five terms suffice here
    cplx c = 0.0, s = 0.0, term_c = 1.0, term_s = 1.0;
    for (int k = 0; k < 5; ++k) {
      c += term_c;
      s += term_s;
      term_c *= -u / static_cast<double>((2 * k + 1) * (2 * k + 2));
      term_s *= -u / static_cast<double>((2 * k + 2) * (2 * k + 3));
    }
    m.C = c;
    m.S = x * s;
  } else {
    const cplx k = sqrt_branch(w);
    m.C = std::cos(k * x);
    m.S = std::sin(k * x) / k;
  }
  m.Cp = -w * m.S;
  m.Sp = m.C;
  return m;
}

using State = std::array<cplx, 4>;  // C, C', S, S'

State to_state(const EdgeSolutionMatrix& m) { return {m.C, m.Cp, m.S, m.Sp}; }
EdgeSolutionMatrix from_state(const State& y) { return {y[0], y[2], y[1], y[3]}; }

// Dormand-Prince 5(4)
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Integrator {
  const PotentialSpec& w;
  double length;
  cplx z;
  const OdeOptions& opt;
  double h;

  State rhs(double x, const State& y) const {
    const cplx q = w(x, length) - z;
    return {y[1], q * y[0], y[3], q * y[2]};
  }

  // Advance y from x0 to x1 (W smooth in between).
  void run(double x0, double x1, State& y) {
    if (x1 <= x0) return;
    double x = x0;
    State k1 = rhs(x, y);
    while (x < x1) {
      if (g_stats.steps + g_stats.rejected > opt.max_steps)
        throw IntegratorError("ODE integrator exceeded the step budget",
                              from_state(y).wronskian_residual());
      bool last = false;
      double step = h;
      if (x + step >= x1) {
        step = x1 - x;
        last = true;
      }
      if (!last && step < 1e-14 * std::max(1.0, std::abs(x)))
        throw IntegratorError("ODE step size underflow", from_state(y).wronskian_residual());
      auto add = [&](std::initializer_list<std::pair<double, const State*>> terms) {
        State r = y;
        for (auto [c, k] : terms)
          for (int i = 0; i < 4; ++i) r[i] += step * c * (*k)[i];
        return r;
      };
      State k2 = rhs(x + c2 * step, add({{a21, &k1}}));
      State k3 = rhs(x + c3 * step, add({{a31, &k1}, {a32, &k2}}));
      State k4 = rhs(x + c4 * step, add({{a41, &k1}, {a42, &k2}, {a43, &k3}}));
      State k5 = rhs(x + c5 * step, add({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
      State k6 = rhs(x + step, add({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
      State yn = add({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
      State k7 = rhs(x + step, yn);
      double err = 0.0;
      for (int i = 0; i < 4; ++i) {
        cplx e = step * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                         e7 * k7[i]);
        double sc = opt.tol * (1.0 + std::max(std::abs(y[i]), std::abs(yn[i])));
        err = std::max(err, std::abs(e) / sc);
      }
      double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      if (err <= 1.0) {
        x = last ? x1 : x + step;
        y = yn;
        k1 = k7;
        ++g_stats.steps;
        g_stats.max_step_wronskian =
            std::max(g_stats.max_step_wronskian, from_state(y).wronskian_residual());
        // a short final step says nothing about the step size
        if (!last || (fac < 1.0 && step >= 0.5 * h)) h = step * fac;
      } else {
        ++g_stats.rejected;
        h = step * std::max(fac, 0.1);
      }
    }
  }
};

std::vector<double> breakpoints(const PotentialSpec& w, double length) {
  std::vector<double> b;
  if (w.kind == PotentialSpec::Kind::Sampled && w.samples.size() > 2) {
    const std::size_t n = w.samples.size();
    for (std::size_t i = 1; i + 1 < n; ++i)
      b.push_back(length * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return b;
}

void check_wronskian(const EdgeSolutionMatrix& m, const OdeOptions& opt) {
  const double res = m.wronskian_residual();
  if (!(res <= opt.wronskian_rel * std::max(1.0, m.wronskian_scale())))
    throw IntegratorError("fundamental solutions lost the Wronskian identity", res);
}

}  // namespace

OdeStats last_ode_stats() { return g_stats; }

std::vector<EdgeSolutionMatrix> fundamental_solution_grid(const PotentialSpec& w, double length,
                                                          const std::vector<double>& xs, cplx z,
                                                          const OdeOptions& opt) {
  if (!(length > 0.0)) throw PreconditionError("fundamental_solution: length must be positive");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < 0.0 || xs[i] > length * (1.0 + 1e-14))
      throw PreconditionError("fundamental_solution: point outside the edge");
    if (i > 0 && xs[i] < xs[i - 1]) throw PreconditionError("fundamental_solution: unsorted points");
  }
  std::vector<EdgeSolutionMatrix> out;
  out.reserve(xs.size());
  if (w.closed_form()) {
    for (double x : xs) out.push_back(closed_form_at(w.shift(), x, z));
    return out;
  }
  g_stats = {};
  const double scale = std::sqrt(std::abs(z) + w.sup_norm());
  Integrator in{w, length, z, opt, std::min(length, 0.05 / (1.0 + scale))};
  State y = to_state(EdgeSolutionMatrix{});
  const auto bp = breakpoints(w, length);
  std::size_t next_bp = 0;
  double x = 0.0;
  for (double target : xs) {
    target = std::min(target, length);
    while (next_bp < bp.size() && bp[next_bp] < target) {
      in.run(x, bp[next_bp], y);
      x = bp[next_bp++];
    }
    in.run(x, target, y);
    x = std::max(x, target);
    EdgeSolutionMatrix m = from_state(y);
    check_wronskian(m, opt);
    out.push_back(m);
  }
  return out;
}

EdgeSolutionMatrix fundamental_solution_at(const PotentialSpec& w, double length, double x, cplx z,
                                           const OdeOptions& opt) {
  return fundamental_solution_grid(w, length, {x}, z, opt).front();
}

EdgeSolutionMatrix fundamental_solution(const PotentialSpec& w, double length, cplx z,
                                        const OdeOptions& opt) {
  return fundamental_solution_at(w, length, length, z, opt);
}

bool near_dirichlet(const PotentialSpec& w, double length, double lambda, double delta) {
  const double first = w.min_value() + std::numbers::pi * std::numbers::pi / (length * length);
  if (lambda + delta < first) return false;
  if (w.closed_form()) {
    const double mu = lambda - w.shift();
    const double base = std::numbers::pi / length;
    if (mu <= 0.0) return base * base - mu <= delta;
    const double n0 = std::round(std::sqrt(mu) / base);
    for (double n = std::max(1.0, n0 - 1.0); n <= n0 + 1.0; n += 1.0)
      if (std::abs(base * base * n * n - mu) <= delta) return true;
    return false;
  }
  const double a = fundamental_solution(w, length, cplx(lambda - delta, 0.0)).S.real();
  const double b = fundamental_solution(w, length, cplx(lambda + delta, 0.0)).S.real();
  return a == 0.0 || b == 0.0 || (a < 0.0) != (b < 0.0);
}

std::vector<double> dirichlet_spectrum(const PotentialSpec& w, double length, double lambda_max,
                                       double scan_step) {
  if (!std::isfinite(lambda_max)) throw PreconditionError("dirichlet_spectrum: lambda_max must be finite");
  std::vector<double> out;
  const double base = std::numbers::pi / length;
  if (w.closed_form()) {
    for (int n = 1;; ++n) {
      double v = base * base * n * n + w.shift();
      if (v > lambda_max) break;
      out.push_back(v);
    }
    return out;
  }
  if (!(scan_step > 0.0)) throw PreconditionError("dirichlet_spectrum: scan step must be positive");
  auto S = [&](double l) { return fundamental_solution(w, length, cplx(l, 0.0)).S.real(); };
  double lo = w.min_value() + 0.5 * base * base;
  double slo = S(lo);
  while (lo < lambda_max) {
    double hi = std::min(lo + scan_step, lambda_max);
    double shi = S(hi);
    if (shi == 0.0) {
      out.push_back(hi);
    } else if (slo != 0.0 && (slo < 0.0) != (shi < 0.0)) {
      double a = lo, b = hi, sa = slo;
      for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, std::abs(a)); ++it) {
        double mid = 0.5 * (a + b);
        double sm = S(mid);
        if (sm == 0.0) {
          a = b = mid;
          break;
        }
        if ((sm < 0.0) == (sa < 0.0)) {
          a = mid;
          sa = sm;
        } else {
          b = mid;
        }
      }
      out.push_back(0.5 * (a + b));
    }
    lo = hi;
    slo = shi;
  }
  return out;
}

std::vector<std::vector<double>> dirichlet_spectrum(const ConeSystem& sys, double lambda_max,
                                                    double scan_step) {
  std::vector<std::vector<double>> out;
  for (const auto& l : sys.labels)
    out.push_back(dirichlet_spectrum(l.potential, l.length, lambda_max, scan_step));
  return out;
}

std::vector<double> merge_values(const std::vector<std::vector<double>>& per_label, double tol) {
  std::vector<double> all;
  for (const auto& v : per_label) all.insert(all.end(), v.begin(), v.end());
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  for (double v : all)
    if (out.empty() || v - out.back() > tol * std::max(1.0, std::abs(v))) out.push_back(v);
  return out;
}

std::vector<Interval> thickened_dirichlet(const std::vector<double>& lengths, double eps,
                                          double lambda_max) {
  if (lengths.empty()) return {};
  const double lmin = *std::min_element(lengths.begin(), lengths.end());
  if (eps < 0.0 || eps >= lmin)
    throw PreconditionError("thickened_dirichlet: need 0 <= eps < min length");
  const double pi2 = std::numbers::pi * std::numbers::pi;
  std::vector<Interval> raw;
  for (double L : lengths)
    for (int n = 0;; ++n) {
      double lo = pi2 * n * n / ((L + eps) * (L + eps));
      if (lo > lambda_max) break;
      double hi = std::min(pi2 * n * n / ((L - eps) * (L - eps)), lambda_max);
      raw.push_back({lo, hi});
    }
  std::sort(raw.begin(), raw.end(), [](const Interval& a, const Interval& b) {
    return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi);
  });
  std::vector<Interval> out;
  for (const auto& iv : raw) {
    if (!out.empty() && iv.lo <= out.back().hi)
      out.back().hi = std::max(out.back().hi, iv.hi);
    else
      out.push_back(iv);
  }
  return out;
}

std::vector<Interval> thickened_dirichlet(const ConeSystem& sys, double eps, double lambda_max) {
  std::vector<double> lengths;
  for (const auto& l : sys.labels) lengths.push_back(l.length);
  lengths.push_back(sys.L_o());
  return thickened_dirichlet(lengths, eps, lambda_max);
}

bool intersects(const std::vector<Interval>& set, double lo, double hi) {
  for (const auto& iv : set)
    if (iv.lo <= hi && lo <= iv.hi) return true;
  return false;
}

}  // namespace qtree
