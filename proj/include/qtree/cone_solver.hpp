#pragma once

#include <optional>
#include <vector>

#include "qtree/edge_solutions.hpp"
#include "qtree/graph.hpp"

namespace qtree {

// Normalized multipliers h_j = S_z(L_j) zeta_j at z.
struct HerglotzVector {
  std::vector<cplx> h;
  cplx z;
  double residual = 0.0;   // max_j |P_j(h)|
  long iterations = 0;     // fixed-point sweeps
  double gamma_gap = 0.0;  // last componentwise gamma step
};

struct SolverOptions {
  double tol = 1e-12;
  long max_iter = 2000000;
  int newton_steps = 2;
  double delta_D = 1e-6;  // real-axis Dirichlet guard
};

// Per-label monodromy at z. On the real axis, refuses lambda within delta_D of
// a Dirichlet value of some label.
std::vector<EdgeSolutionMatrix> label_solutions(const ConeSystem& sys, cplx z, double delta_D = 1e-6);

// F_j = alpha_j + sum_k M_jk C_k/S_k + S'_j/S_j.
std::vector<cplx> f_coefficients(const ConeSystem& sys, cplx z, double delta_D = 1e-6);
std::vector<cplx> f_coefficients(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e);

// P_j(h) = sum_k (M_jk/S_k^2) h_k h_j - F_j h_j + 1.
std::vector<cplx> cone_residual(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e,
                                const std::vector<cplx>& F, const std::vector<cplx>& h);

// One application of h_j <- 1/(F_j - sum_k M_jk h_k / S_k^2).
std::vector<cplx> cone_map(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e,
                           const std::vector<cplx>& F, const std::vector<cplx>& h);

HerglotzVector solve_cone_system(const ConeSystem& sys, cplx z, const SolverOptions& opt = {},
                                 const std::vector<cplx>* warm = nullptr);

// Newton iteration on P(h) = 0 at fixed z. Returns false when it stalls.
bool newton_polish(const ConeSystem& sys, const std::vector<EdgeSolutionMatrix>& e,
                   const std::vector<cplx>& F, std::vector<cplx>& h, int max_steps,
                   double target, double* residual_out = nullptr);

// Forward WT values at the origin of each label: R+_j = (h_j/S_j - C_j)/S_j.
std::vector<cplx> wt_plus(const std::vector<EdgeSolutionMatrix>& e, const std::vector<cplx>& h);
// zeta_j = h_j / S_j.
std::vector<cplx> zeta_from_h(const std::vector<EdgeSolutionMatrix>& e, const std::vector<cplx>& h);

// G(v,v) at a vertex root (root_row) or at the terminus of the root edge
// (needs root_reverse_label); NaN when neither is available.
cplx root_green(const ConeSystem& sys, const std::vector<cplx>& rplus);

struct AxisOptions {
  double eta0 = 1e-2;
  double rho = 0.5;
  int steps = 20;
  double tol = 1e-7;
  double divergence_cap = 1e6;
  double delta_D = 1e-6;
  bool polish_on_axis = true;
  std::vector<double> schedule;  // explicit eta list; overrides eta0/rho/steps
};

struct AxisLimit {
  std::vector<cplx> h;               // best value on the axis
  std::vector<cplx> h_extrapolated;  // extrapolation of the last three iterates
  std::vector<cplx> h_last;          // value at the smallest eta
  std::vector<cplx> h_first;         // value at the largest eta (warm starts)
  double eta_final = 0.0;
  double gap = 0.0;        // |extrapolation(last 3) - extrapolation(previous 3)|
  bool converged = false;  // gap < tol and no blow-up
  bool polished = false;   // Newton on the axis succeeded from the extrapolated value
  bool diverged = false;   // |h| exceeded the cap
  std::vector<EdgeSolutionMatrix> edges;  // label monodromies at real lambda
};

std::vector<double> eta_schedule(const AxisOptions& opt);

AxisLimit limit_on_axis(const ConeSystem& sys, double lambda, const AxisOptions& opt = {},
                        const std::vector<cplx>* warm = nullptr);

struct BandRow {
  double lambda = 0.0;
  double eta_final = 0.0;
  std::vector<double> im_h;
  std::vector<double> im_rplus;
  cplx green_root{0.0, 0.0};
  int band_id = -1;    // -1 outside bands
  bool guard = false;  // skipped: within delta_D of a Dirichlet value
  bool exceptional = false;
};

struct BandReport {
  std::vector<Interval> bands;
  std::vector<double> exceptional;
  std::vector<double> guarded;
  std::vector<BandRow> rows;
};

struct BandOptions {
  double im_threshold = 1e-6;
  double refine_tol = 1e-10;  // bisection width for band endpoints
  bool refine = true;
  std::size_t chunk = 64;  // grid points per work unit
  int workers = 0;
  AxisOptions axis;
};

BandReport detect_bands(const ConeSystem& sys, const std::vector<double>& grid,
                        const BandOptions& opt = {});

}  // namespace qtree
