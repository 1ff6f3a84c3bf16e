#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qtree/cone_solver.hpp"
#include "qtree/graph.hpp"
#include "qtree/green.hpp"

namespace qtree {

enum class Family {
  Uniform,   // flat on the box
  TwoPoint,  // the two ends of the box with probability 1/2 each
  Beta       // Beta(beta, beta) stretched over the box
};

const char* family_name(Family f);
Family parse_family(const std::string& name);  // PreconditionError on unknown names

struct EnsembleConfig {
  double eps = 0.0;
  Family family = Family::Uniform;
  double beta = 1.0;  // Beta shape; the Hölder exponent is min(beta, 1)
  std::uint64_t seed = 1;
  bool perturb_lengths = true;
  bool perturb_couplings = true;

  // Exponent in nu(I) <= C |I|^beta; 0 for the two-point family.
  double holder_exponent() const;
};

// Uniform double in [0, 1) from a 64-bit key.
double unit_uniform(std::uint64_t key);
// Key of Monte Carlo sample `index` under `seed`.
std::uint64_t sample_key(std::uint64_t seed, std::uint64_t index);
// A variate in [-1, 1] of the configured family from u in [0, 1).
double family_variate(const EnsembleConfig& cfg, double u);

// Length box [L - eps, L + eps] and coupling box [max(0, a - eps), a + eps].
double perturbed_length(const EnsembleConfig& cfg, double L0, std::uint64_t key);
double perturbed_coupling(const EnsembleConfig& cfg, double alpha0, std::uint64_t key);

// Throws PreconditionError unless every label (and the root edge) carries
// W = 0 and eps < min length.
void check_ensemble(const ConeSystem& sys, const EnsembleConfig& cfg);

// Throws DirichletProximityError when lambda lies in the eps-thickened
// Dirichlet set: [pi^2 n^2 / (L + eps)^2, pi^2 n^2 / (L - eps)^2], n >= 1.
void check_dirichlet_thickening(const ConeSystem& sys, double eps, double lambda);

// Overwrites the lengths and couplings of `tree` with the draws of sample
// `index`; `base` is the unperturbed expansion with the same shape. Each
// vertex draws from its own stream keyed by (seed, index, root-to-vertex path).
void perturb_tree(TruncatedQuantumTree& tree, const TruncatedQuantumTree& base,
                  const EnsembleConfig& cfg, std::uint64_t index);

TruncatedQuantumTree sample_random_tree(const ConeSystem& sys, const EnsembleConfig& cfg, int depth,
                                        std::uint64_t index = 0);

// Sum by recursive halving; the result depends only on the order of x.
double pairwise_sum(const std::vector<double>& x);

struct MeanEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};
MeanEstimate mean_estimate(const std::vector<double>& x);

struct BootstrapEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  double lo = 0.0;  // 2.5% percentile of resampled means
  double hi = 0.0;  // 97.5%
  double half_width() const { return 0.5 * (hi - lo); }
};
BootstrapEstimate bootstrap_mean(const std::vector<double>& x, std::uint64_t seed,
                                 int resamples = 1000);

// The two-step neighbourhood of a cone root * of label j: its children S_*,
// the child *' chosen by (C2), and the children S_*' of *'. S_{*,*'} lists
// S_* without *' first, then S_*'.
struct TwoStepGeometry {
  int label = 0;
  std::vector<int> star_labels;   // S_*
  int prime = 0;                  // index of *' in S_*
  std::vector<int> prime_labels;  // S_*'
  std::vector<int> labels;        // S_{*,*'}
  int n_star = 0;                 // entries of S_{*,*'} that lie in S_*

  cplx z{0.0, 0.0};
  std::vector<cplx> H;  // unperturbed h on S_{*,*'}
  cplx H_prime{0.0, 0.0};
  cplx H_star{0.0, 0.0};
  std::vector<double> p;  // weights p_x on S_{*,*'}; they sum to 1
  double alpha0 = 0.0;    // unperturbed coupling and length at *'
  double L0 = 1.0;
};

// H from per-label R+ at the origin: H_k = R+_k / sqrt z.
TwoStepGeometry two_step_geometry(const ConeSystem& sys, cplx z, int label,
                                  const std::vector<cplx>& rplus);
TwoStepGeometry two_step_geometry(const ConeSystem& sys, cplx z, int label);

// h at *' from values g on S_*' (W = 0): phi = sum g - alpha / sqrt z, then
// (phi cos kL + sin kL) / (-phi sin kL + cos kL), k = sqrt z.
cplx g_prime(cplx z, double alpha, double L, const std::vector<cplx>& g_children);

// Returned as kappa when every gamma vanishes (0/0).
inline constexpr double kKappaUndefined = -1.0;

struct ContractionDiagnostics {
  // Index set: S_{*,*'} in geometry order, then *' last.
  std::vector<cplx> h;       // g with g_*' appended
  std::vector<double> gamma;
  std::vector<double> q;     // q_y over S_* (in S_* order, with *' at its place), then over S_*'
  std::vector<double> p;     // p_x on S_{*,*'}
  std::vector<std::vector<double>> Q;
  std::vector<std::vector<double>> cos_alpha;
  std::vector<double> c;     // c_x on S_{*,*'}, then c_*'
  double kappa = kKappaUndefined;
  bool degenerate = false;   // all gamma vanish
  std::size_t permutations = 0;
};

// Quantities for g on S_{*,*'} (identity permutation), and kappa averaged over
// the label-preserving permutations. |sum p c gamma|^p is used in the
// numerator so that non-integer p is defined for negative sums.
ContractionDiagnostics contraction_diagnostics(const TwoStepGeometry& geo, const std::vector<cplx>& g,
                                               double alpha, double L, double p);

struct KappaScan {
  std::size_t draws = 0;
  std::size_t degenerate = 0;
  double max_kappa = 0.0;
  double delta = 0.0;  // 1 - max_kappa
  double radius = 0.0;
  // Draw with the smallest slack.
  std::vector<cplx> worst_g;
  cplx worst_z{0.0, 0.0};
  double worst_alpha = 0.0;
  double worst_L = 0.0;
};

// kappa over random g with max_x gamma(g_x, H_x) >= radius, couplings and
// lengths at *' drawn from the eps box, z from the given geometries.
KappaScan kappa_scan(const std::vector<TwoStepGeometry>& geos, double eps, double radius,
                     std::size_t draws, double p, std::uint64_t seed, double gamma_max = 50.0);

// One random tree rooted at label j, evaluated at z.
struct TreeSample {
  cplx rplus{0.0, 0.0};  // R+ at the origin of the root edge
  cplx h{0.0, 0.0};      // rplus / sqrt z
  cplx zeta{0.0, 0.0};   // zeta of the root edge
  double root_length = 0.0;
  std::vector<cplx> child_rplus;  // R+ at the origins of the children edges, S_* order
  std::vector<cplx> grand_h;      // h on S_*' (two-step sampling only)
  double alpha_prime = 0.0;
  double length_prime = 0.0;
};

struct SampleOptions {
  int depth = 10;
  int workers = 0;
  std::size_t chunk = 32;
  bool two_step = false;  // fill grand_h, alpha_prime, length_prime
};

// Samples 0..n-1 of the ensemble for the cone rooted at `label`, truncated at
// `depth` with exact unperturbed seeds below the cut (leaf couplings follow
// the draw). Sample i depends only on (seed, i).
std::vector<TreeSample> draw_samples(const ConeSystem& sys, const EnsembleConfig& cfg, cplx z, int label,
                                     std::size_t n, const SampleOptions& opt = {});

struct GammaStatistics {
  cplx z{0.0, 0.0};
  double eps = 0.0;
  double p = 2.0;
  int depth = 0;
  std::size_t samples = 0;
  std::vector<cplx> H;                  // per label
  std::vector<MeanEstimate> gamma_p;    // E[gamma(h, H)^p]
  std::vector<MeanEstimate> abs_p;      // E[|h - H|^p]
  std::vector<MeanEstimate> im_prod_p;  // E[(Im h Im H)^p]
  // E[|h-H|^p]^2 <= E[gamma^p] E[(Im h Im H)^p], relative slack per label.
  std::vector<double> cs_slack;
  double max_gamma = 0.0;
};

GammaStatistics gamma_statistics(const ConeSystem& sys, const EnsembleConfig& cfg, cplx z, int depth,
                                 std::size_t n, double p, const SampleOptions& opt = {});

struct MomentRow {
  cplx z{0.0, 0.0};
  int label = 0;
  BootstrapEstimate inv_im;   // E[|Im R+|^-s]
  BootstrapEstimate abs_pos;  // E[|R+|^p]
  BootstrapEstimate abs_neg;  // E[|R+|^-p]
  // E[|zeta|^p] against c1^-p sum_children E[|Im R+|^-p].
  double zeta_p = 0.0;
  double zeta_bound = 0.0;
};

struct InverseMoments {
  double s = 2.0;
  double p = 2.0;
  double c1 = 0.0;  // min |S_z(L)| over the grid and the length box
  std::vector<MomentRow> rows;
  double sup_inv_im = 0.0;
  double sup_abs_pos = 0.0;
  double sup_abs_neg = 0.0;
};

InverseMoments inverse_moments(const ConeSystem& sys, const EnsembleConfig& cfg,
                               const std::vector<cplx>& z_grid, int depth, std::size_t n, double s,
                               double p = 2.0, const SampleOptions& opt = {});

// Empirical distribution of Im R+ per label.
struct FDistribution {
  cplx z{0.0, 0.0};
  std::vector<double> x;
  std::vector<std::vector<double>> per_label;  // F^j(x)
  std::vector<double> F;                       // max_j F^j(x)
  // F(x) <= F(x y^-2)^q + C (y^beta F(4 Q c2 y / c1^2)^q + y^s) on the grid,
  // C the smallest constant that makes every (x, y) pass.
  double fitted_C = 0.0;
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, c_I = 0.0;
  int q = 0, Q = 0;
  double holder = 0.0;
  double varsigma = 3.0;
  // Least-squares fit of log F = log C + kappa log x on x <= x0 with F > 0.
  double decay_exponent = 0.0;
  double decay_constant = 0.0;
  double x0 = 0.0;
  int fit_points = 0;
};

FDistribution f_distribution(const ConeSystem& sys, const EnsembleConfig& cfg, cplx z,
                             const std::vector<double>& x_grid, std::size_t n,
                             const SampleOptions& opt = {}, double x0 = 0.0, double varsigma = 3.0);

// Empirical CDF of `values` at x (fraction <= x); values must be sorted.
double empirical_cdf(const std::vector<double>& sorted, double x);

struct ExpansionReport {
  std::size_t samples = 0;
  double fitted_C = 0.0;  // smallest C with gamma_* <= (1+C) sum p c gamma + C on every sample
  double min_slack = 0.0;  // at fitted_C
  std::vector<double> gamma_star;
  std::vector<double> weighted;  // sum_x p_x c_x gamma_x
};

// Two-step expansion slack on samples drawn with SampleOptions::two_step.
ExpansionReport expansion_inequality_check(const TwoStepGeometry& geo,
                                           const std::vector<TreeSample>& samples);

struct HyperbolicBoundCheck {
  std::size_t inputs = 0;
  std::size_t scaling_violations = 0;  // delta(l1 z, l2 w) against (|l1|^2 + C) delta + C
  std::size_t shift_violations = 0;    // gamma after a Herglotz shift
  double scaling_min_slack = 0.0;      // relative
  double shift_min_slack = 0.0;
};

HyperbolicBoundCheck hyperbolic_bound_check(std::size_t n, std::uint64_t seed, double r_K = 0.9);

// Constants of the uniform contraction argument on I + i[0, 1], from a grid.
struct ContractionConstants {
  double theta0 = 0.0;  // one tenth of the minimal angle of zeta sin(sqrt z L) to the real axis
  double varsigma0 = 0.0;  // min Im H
  double varsigma1 = 0.0;  // max |Gamma|
  double c_I = 0.0;        // |sin sqrt z t| <= c_I t on t in (0, 1]
  double c_I_prime = 0.0;  // 1 / |sqrt z|
  double eps_D = 0.0;      // min |sin(sqrt z L) sin(sqrt z L0_*')| over the eps box
  double M_ID = 0.0;
  double eps_star = 0.0;   // diagnostic only
  // R(eps) = theta^2 / (varsigma0 (varsigma0 - theta)), theta = (1 + theta0) M eps / theta0;
  // infinite when theta >= varsigma0.
  double radius(double eps) const;
};

ContractionConstants contraction_constants(const ConeSystem& sys, double lambda_lo, double lambda_hi,
                                           double eps, int lambda_points = 9, int eta_points = 6);

// W = 0 identities on a sampled state: the Cayley rotation between g_v and h_v,
// and sum_children h = g + alpha / sqrt z.
double cayley_rotation_residual(const WTState& s, int v);
double vertex_relation_residual(const WTState& s, int v);

}  // namespace qtree
