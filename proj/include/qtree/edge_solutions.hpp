#pragma once

#include <complex>
#include <vector>

#include "qtree/graph.hpp"
#include "qtree/potential.hpp"

namespace qtree {

// Principal square root with Im sqrt(z) >= 0 (cut on the negative axis).
cplx sqrt_branch(cplx z);

struct ComplexEnergy {
  double lambda = 0.0;
  double eta = 0.0;

  cplx z() const { return {lambda, eta}; }
  cplx sqrt() const { return sqrt_branch(z()); }
  static ComplexEnergy from(cplx z) { return {z.real(), z.imag()}; }
};

// Monodromy entries at x: (psi(x), psi'(x)) = [[C, S], [Cp, Sp]] (psi(0), psi'(0)).
struct EdgeSolutionMatrix {
  cplx C{1.0, 0.0};
  cplx S{0.0, 0.0};
  cplx Cp{0.0, 0.0};
  cplx Sp{1.0, 0.0};

  cplx wronskian() const { return C * Sp - Cp * S; }
  double wronskian_residual() const { return std::abs(wronskian() - 1.0); }
  // Size of the products that cancel in the Wronskian.
  double wronskian_scale() const { return std::abs(C * Sp) + std::abs(Cp * S); }
  // Monodromy of the same edge traversed backwards (potential W(L - x)).
  EdgeSolutionMatrix reversed() const { return {Sp, S, Cp, C}; }
};

struct OdeOptions {
  double tol = 1e-11;       // abs and rel tolerance of the embedded pair
  long max_steps = 4000000;
  // Allowed |W - 1| relative to max(1, wronskian_scale()) before failing.
  double wronskian_rel = 1e-8;
};

EdgeSolutionMatrix fundamental_solution(const PotentialSpec& w, double length, cplx z,
                                        const OdeOptions& opt = {});

// Values at x in [0, length]; the potential is the one of the whole edge.
EdgeSolutionMatrix fundamental_solution_at(const PotentialSpec& w, double length, double x, cplx z,
                                           const OdeOptions& opt = {});

// Values at every x of an ascending list, in a single sweep.
std::vector<EdgeSolutionMatrix> fundamental_solution_grid(const PotentialSpec& w, double length,
                                                          const std::vector<double>& xs, cplx z,
                                                          const OdeOptions& opt = {});

// Integrator statistics of the last ODE sweep on this thread.
struct OdeStats {
  long steps = 0;
  long rejected = 0;
  double max_step_wronskian = 0.0;  // max |W - 1| over accepted step endpoints
};
OdeStats last_ode_stats();

// True when some Dirichlet value of the edge lies within delta of lambda.
bool near_dirichlet(const PotentialSpec& w, double length, double lambda, double delta);

// Dirichlet values (zeros of lambda -> S_lambda(L)) up to lambda_max.
std::vector<double> dirichlet_spectrum(const PotentialSpec& w, double length, double lambda_max,
                                       double scan_step = 1e-2);
// One sorted list per label.
std::vector<std::vector<double>> dirichlet_spectrum(const ConeSystem& sys, double lambda_max,
                                                    double scan_step = 1e-2);
std::vector<double> merge_values(const std::vector<std::vector<double>>& per_label,
                                 double tol = 1e-12);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// Union over labels and n >= 0 of [pi^2 n^2/(L+eps)^2, pi^2 n^2/(L-eps)^2],
// clipped to [0, lambda_max] and merged.
std::vector<Interval> thickened_dirichlet(const ConeSystem& sys, double eps, double lambda_max);
std::vector<Interval> thickened_dirichlet(const std::vector<double>& lengths, double eps,
                                          double lambda_max);
bool intersects(const std::vector<Interval>& set, double lo, double hi);

}  // namespace qtree
