#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qtree/edge_solutions.hpp"
#include "qtree/graph.hpp"

namespace qtree {

enum class BoundaryKind {
  Free,       // half-line continuation: R+(t) = i sqrt(z)
  Dirichlet,  // psi = 0 at the cut: R+(t) = infinity
  Neumann,    // psi' = alpha psi at a degree-one vertex: R+(t) = -alpha
  Exact,      // infinite-cone values from the cone solver
  Value       // a fixed R+(t)
};

struct BoundaryRule {
  BoundaryKind kind = BoundaryKind::Free;
  // Exact: per label, R+ at the origin, sum_k M_jk R+_k and the label coupling.
  // A leaf v of label j is seeded with children_sum[j] - alpha_v.
  std::vector<cplx> rplus;
  std::vector<cplx> children_sum;
  std::vector<double> alpha;
  cplx value{0.0, 0.0};  // Value

  static BoundaryRule free() { return {}; }
  static BoundaryRule dirichlet() { return {BoundaryKind::Dirichlet, {}, {}, {}, {}}; }
  static BoundaryRule neumann() { return {BoundaryKind::Neumann, {}, {}, {}, {}}; }
  static BoundaryRule fixed(cplx v) { return {BoundaryKind::Value, {}, {}, {}, v}; }
  static BoundaryRule exact(const ConeSystem& sys, std::vector<cplx> rplus);
};

const char* boundary_name(BoundaryKind k);

// Exact seeds from the cone solver at z (Im z > 0), or from the continued
// limit on the axis when Im z == 0.
BoundaryRule exact_boundary(const ConeSystem& sys, cplx z);

struct WTOptions {
  // Seed of the backward value at the origin of the root edge (cone mode).
  // Defaults to the leaf rule.
  std::optional<BoundaryRule> back;
  bool check_herglotz = true;
  double delta_D = 1e-6;
};

// Values indexed by the vertex v that terminates edge b = (parent(v), v).
struct WTState {
  cplx z{0.0, 0.0};
  const TruncatedQuantumTree* tree = nullptr;  // must outlive the state
  BoundaryRule boundary;
  BoundaryRule back;

  std::vector<EdgeSolutionMatrix> edge;  // monodromy along parent -> v
  std::vector<cplx> rp_t;   // R+(t_b)
  std::vector<cplx> rp_o;   // R+(o_b)
  std::vector<cplx> rm_o;   // R-(o_b)
  std::vector<cplx> rm_t;   // R-(t_b)
  std::vector<cplx> zf;     // zeta(b)
  std::vector<cplx> zb;     // zeta(b^)
  std::vector<char> rp_t_inf;  // R+(t_b) infinite (Dirichlet cut)
  std::vector<char> rm_o_inf;  // R-(o_b) infinite (Dirichlet back seed)

  std::size_t size() const { return rp_t.size(); }
};

WTState wt_recursion(const TruncatedQuantumTree& tree, cplx z, const BoundaryRule& boundary = {},
                     const WTOptions& opt = {});

// Forward values of every label after `depth` levels of the recursion on the
// cone system, seeded by `boundary` below the deepest level. Same recursion
// as wt_recursion, with equal-label subtrees shared.
std::vector<cplx> cone_truncated_rplus(const ConeSystem& sys, cplx z, int depth,
                                       const BoundaryRule& boundary = {});

struct GreenDiag {
  cplx value{0.0, 0.0};
  bool pole = false;  // |R+ + R-| below the pole threshold
};

// G(v, v) for any vertex of the tree.
GreenDiag green_diag(const WTState& s, int vertex, double pole_threshold = 1e-12);
// G at the origin of edge(v), from R+(o_b) + R-(o_b).
GreenDiag green_origin(const WTState& s, int v, double pole_threshold = 1e-12);

struct OffDiag {
  cplx forward;  // G(v_0, v_0) zeta(b_1) ... zeta(b_k)
  cplx reverse;  // G(v_k, v_k) zeta(b^_1) ... zeta(b^_k)
};
// Path of consecutive, distinct vertices.
OffDiag green_offdiag(const WTState& s, const std::vector<int>& path);
cplx green_vertices(const WTState& s, int a, int b);

// A point on the edge that ends at `vertex`, at distance s from its origin.
struct EdgePoint {
  int vertex = 1;
  double s = 0.0;
};
cplx green_kernel(const WTState& st, EdgePoint x, EdgePoint y);

struct IdentityResidual {
  std::string name;
  double max_residual = 0.0;
  int where = -1;  // vertex of the worst case
};

struct IdentityReport {
  std::vector<IdentityResidual> residuals;
  // Current relation Im R+(t) <= Im R+(o)/|zeta|^2 and its backward twin:
  // min of (rhs - lhs)/max(1, rhs), >= 0 expected for Im z > 0, and the
  // largest relative gap, which vanishes on the real axis.
  double current_slack = 0.0;
  double current_gap = 0.0;
  int current_where = -1;
  double max_residual() const;
  const IdentityResidual* find(const std::string& name) const;
};

// `paths` random path checks of the multiplicative property and symmetry.
IdentityReport identity_suite(const WTState& s, int paths = 64, std::uint64_t seed = 1);

struct QuadraticForm {
  double formula = 0.0;  // (Im R+ g- + Im R- g+)/|R+ + R-|^2
  double kernel = 0.0;   // Im of the double integral of the kernel
  double g_plus = 0.0;
  double g_minus = 0.0;
  int panels = 0;
  bool converged = false;
};

// f real on [0, L_v] of the edge ending at v.
QuadraticForm im_quadratic_form(const WTState& s, int v, const std::function<double(double)>& f,
                                double rel_tol = 1e-9);
// Samples on a uniform grid over [0, L_v], linearly interpolated.
QuadraticForm im_quadratic_form(const WTState& s, int v, const std::vector<double>& samples,
                                double rel_tol = 1e-9);

}  // namespace qtree
