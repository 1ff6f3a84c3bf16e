#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <utility>
#include <vector>

#include "qtree/graph.hpp"
#include "qtree/green.hpp"

namespace qtree {

// A compact metric graph for the brute-force discretization.
struct MetricEdge {
  int u = 0;
  int v = 0;
  double length = 1.0;
  PotentialSpec potential;  // oriented u -> v
};

struct MetricGraph {
  int n_vertices = 0;
  std::vector<MetricEdge> edges;
  std::vector<double> alpha;    // delta coupling per vertex
  std::vector<cplx> robin;      // extra diagonal term per vertex (truncation seeds)
  std::vector<char> dirichlet;  // psi = 0 at the vertex

  void resize(int n);
  double min_length() const;
};

MetricGraph metric_graph(const QuantumGraphSpec& g);

// The truncated tree with its cut conditions: a leaf seeded with R+(t) = R
// contributes -R to its vertex row, and likewise the back seed at the origin
// of the root edge. Dirichlet seeds pin the vertex to zero.
MetricGraph metric_graph(const TruncatedQuantumTree& t, cplx z, const BoundaryRule& boundary,
                         const BoundaryRule& back);

// Piecewise-linear elements with lumped mass and trapezoidal potential:
// (K - z M) u = e_v approximates G(., v) at the nodes.
class DiscretizedOperator {
 public:
  // Each edge gets refine * max(min_nodes, ceil(L/step)) cells, the latter
  // rounded up to even; refine = 2 nests the grid for extrapolation.
  DiscretizedOperator(const MetricGraph& g, double step, int min_nodes = 32, int refine = 1);

  std::size_t size() const { return mass_.size(); }
  int vertex_node(int v) const { return vertex_node_[v]; }  // -1 if pinned
  // Node i in [0, cells(e)] along edge e (endpoints are vertex nodes).
  int edge_node(int e, int i) const;
  int cells(int e) const { return cells_[e]; }
  double cell(int e) const { return graph_.edges[e].length / cells_[e]; }
  const Eigen::VectorXd& mass() const { return mass_; }
  const MetricGraph& graph() const { return graph_; }

  Eigen::SparseMatrix<cplx> shifted(cplx z) const;  // K - z M
  Eigen::SparseMatrix<double> shifted_real(double sigma) const;  // needs real Robin terms
  // Eigenvalues of K u = lambda M u below sigma (inertia of K - sigma M).
  int count_below(double sigma) const;

 private:
  MetricGraph graph_;
  std::vector<int> cells_;
  std::vector<int> vertex_node_;
  std::vector<int> edge_offset_;
  Eigen::VectorXd mass_;
  std::vector<Eigen::Triplet<cplx>> stiffness_;
};

struct OracleOptions {
  double step = 1.0 / 32;
  int min_nodes = 32;
  std::vector<int> probes;  // vertices; empty means every vertex of the tree proper
  BoundaryRule boundary;
  std::optional<BoundaryRule> back;
  bool richardson = true;
  // Kernel probes (x, y): y must be a vertex point or an edge midpoint.
  std::vector<std::pair<EdgePoint, EdgePoint>> kernel_probes;
};

struct OracleGreen {
  std::vector<int> vertices;
  std::vector<cplx> diag;         // extrapolated (or coarse when richardson is off)
  std::vector<cplx> diag_coarse;  // step
  std::vector<cplx> diag_fine;    // step / 2
  std::vector<cplx> kernel;
  std::vector<cplx> kernel_coarse;
  std::vector<cplx> kernel_fine;
  std::size_t unknowns = 0;  // fine level
};

OracleGreen oracle_green(const TruncatedQuantumTree& tree, cplx z, const OracleOptions& opt = {});

// Smallest eigenvalue of the discretized operator, by bisection on the
// inertia; extrapolated over step and step/2.
struct SmallestEigenvalue {
  double value = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
};
SmallestEigenvalue smallest_eigenvalue(const MetricGraph& g, double step, double tol = 1e-10);

struct DiscreteReduction {
  Eigen::MatrixXd A;  // sum over edges uv of psi(u)/S(L_uv)
  Eigen::VectorXd W;  // alpha_v + sum C(L)/S(L), edges oriented away from v
  double residual = 0.0;  // smallest singular value of A - diag(W)
};

DiscreteReduction discrete_reduction(const QuantumGraphSpec& g, double lambda, double delta_D = 1e-6);

struct ReductionZero {
  double lambda = 0.0;
  int multiplicity = 0;
  double residual = 0.0;
};
// Zeros of the reduction in [lo, hi] from sign changes of its eigenvalues
// on a grid, refined by bisection. Sign changes within 1e-6 of a Dirichlet
// value (poles, and zeros the reduction cannot see) are discarded.
std::vector<ReductionZero> reduction_zeros(const QuantumGraphSpec& g, double lo, double hi,
                                           int grid = 2000, double tol = 1e-13);

struct StarBottom {
  double E0 = 0.0;
  double ED = 0.0;
  std::vector<std::pair<double, double>> trace;  // (E, Z(E)) visited
};

// Star with Dirichlet extremities; potentials oriented away from the centre.
// Lengths and potentials of size 1 are repeated for all d edges.
StarBottom star_bottom(int d, const std::vector<double>& lengths,
                       const std::vector<PotentialSpec>& potentials, double alpha_center);

// Smallest Dirichlet value of one edge.
double lowest_dirichlet(const PotentialSpec& w, double length);

struct RegularTreeReference {
  cplx h{0.0, 0.0};      // S zeta
  cplx zeta{0.0, 0.0};
  cplx rplus{0.0, 0.0};  // at the origin of an edge
  cplx green{0.0, 0.0};  // G(v, v) at a vertex of the (q+1)-regular tree
  double discriminant = 0.0;  // real part; < 0 inside a band on the axis
  bool in_band = false;
};

RegularTreeReference regular_tree_reference(int q, double L, double alpha, cplx z);

}  // namespace qtree
