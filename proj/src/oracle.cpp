#include "qtree/oracle.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "qtree/errors.hpp"

namespace qtree {

void MetricGraph::resize(int n) {
  n_vertices = n;
  alpha.assign(n, 0.0);
  robin.assign(n, 0.0);
  dirichlet.assign(n, 0);
}

double MetricGraph::min_length() const {
  double m = INFINITY;
  for (const auto& e : edges) m = std::min(m, e.length);
  return m;
}

MetricGraph metric_graph(const QuantumGraphSpec& g) {
  g.validate();
  MetricGraph m;
  m.resize(static_cast<int>(g.vertices.size()));
  for (std::size_t i = 0; i < g.vertices.size(); ++i) m.alpha[i] = g.coupling(g.vertices[i]);
  for (const auto& e : g.edges) m.edges.push_back({g.index_of(e.u), g.index_of(e.v), e.length, e.potential});
  return m;
}

namespace {

// R at a cut from the rule; sets *pinned for Dirichlet.
cplx cut_value(const BoundaryRule& b, int label, double alpha, cplx z, bool* pinned) {
  *pinned = false;
  switch (b.kind) {
    case BoundaryKind::Free: return cplx(0.0, 1.0) * sqrt_branch(z);
    case BoundaryKind::Dirichlet: *pinned = true; return 0.0;
    case BoundaryKind::Neumann: return -alpha;
    case BoundaryKind::Value: return b.value;
    case BoundaryKind::Exact:
      if (label < 0 || label >= static_cast<int>(b.children_sum.size()))
        throw PreconditionError("oracle: exact seed needs a label in the seed table");
      return b.children_sum[label] - alpha;
  }
  return 0.0;
}

}  // namespace

MetricGraph metric_graph(const TruncatedQuantumTree& t, cplx z, const BoundaryRule& boundary,
                         const BoundaryRule& back) {
  MetricGraph m;
  m.resize(static_cast<int>(t.size()));
  for (std::size_t v = 0; v < t.size(); ++v) {
    const auto& tv = t.vertices[v];
    m.alpha[v] = tv.alpha;
    if (t.has_edge(static_cast<int>(v)))
      m.edges.push_back({tv.parent, static_cast<int>(v), tv.length, t.potential_of(static_cast<int>(v))});
    if (tv.truncated && tv.children.empty()) {
      bool pin = false;
      cplx r = cut_value(boundary, tv.label, tv.alpha, z, &pin);
      m.alpha[v] = 0.0;
      m.robin[v] = -r;
      m.dirichlet[v] = pin;
    }
  }
  if (t.mode == TreeMode::Cone) {
    const double a0 = t.vertices[0].alpha;
    bool pin = false;
    const int rr = t.root_reverse_label;
    cplx r = back.kind == BoundaryKind::Exact
                 ? cut_value(back, rr, rr >= 0 && rr < static_cast<int>(back.alpha.size()) ? back.alpha[rr] : 0.0, z, &pin)
                 : cut_value(back, -1, a0, z, &pin);
    m.alpha[0] = 0.0;
    m.robin[0] = -r;
    m.dirichlet[0] = pin;
  }
  return m;
}

DiscretizedOperator::DiscretizedOperator(const MetricGraph& g, double step, int min_nodes, int refine)
    : graph_(g) {
  if (!(step > 0.0)) throw PreconditionError("discretization: step must be positive");
  const int nv = g.n_vertices;
  vertex_node_.assign(nv, -1);
  int next = 0;
  for (int v = 0; v < nv; ++v)
    if (!g.dirichlet[v]) vertex_node_[v] = next++;
  for (const auto& e : g.edges) {
    int c = std::max(min_nodes, static_cast<int>(std::ceil(e.length / step - 1e-9)));
    c += c % 2;  // midpoints are nodes
    c *= std::max(1, refine);
    cells_.push_back(c);
    edge_offset_.push_back(next);
    next += c - 1;
  }
  mass_ = Eigen::VectorXd::Zero(next);
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    const auto& e = g.edges[ei];
    const int c = cells_[ei];
    const double h = e.length / c;
    for (int i = 0; i < c; ++i) {
      const int a = edge_node(static_cast<int>(ei), i), b = edge_node(static_cast<int>(ei), i + 1);
      const double wa = e.potential(h * i, e.length), wb = e.potential(h * (i + 1), e.length);
      if (a >= 0) {
        stiffness_.emplace_back(a, a, 1.0 / h + 0.5 * h * wa);
        mass_[a] += 0.5 * h;
      }
      if (b >= 0) {
        stiffness_.emplace_back(b, b, 1.0 / h + 0.5 * h * wb);
        mass_[b] += 0.5 * h;
      }
      if (a >= 0 && b >= 0) {
        stiffness_.emplace_back(a, b, -1.0 / h);
        stiffness_.emplace_back(b, a, -1.0 / h);
      }
    }
  }
  for (int v = 0; v < nv; ++v) {
    const int k = vertex_node_[v];
    if (k >= 0 && (g.alpha[v] != 0.0 || g.robin[v] != 0.0)) stiffness_.emplace_back(k, k, g.alpha[v] + g.robin[v]);
  }
}

int DiscretizedOperator::edge_node(int e, int i) const {
  const auto& ed = graph_.edges[e];
  if (i == 0) return vertex_node_[ed.u];
  if (i == cells_[e]) return vertex_node_[ed.v];
  return edge_offset_[e] + i - 1;
}

Eigen::SparseMatrix<cplx> DiscretizedOperator::shifted(cplx z) const {
  auto t = stiffness_;
  for (Eigen::Index i = 0; i < mass_.size(); ++i) t.emplace_back(i, i, -z * mass_[i]);
  Eigen::SparseMatrix<cplx> A(size(), size());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

Eigen::SparseMatrix<double> DiscretizedOperator::shifted_real(double sigma) const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(stiffness_.size() + size());
  for (const auto& x : stiffness_) {
    if (x.value().imag() != 0.0) throw PreconditionError("discretization: complex cut conditions");
    t.emplace_back(x.row(), x.col(), x.value().real());
  }
  for (Eigen::Index i = 0; i < mass_.size(); ++i) t.emplace_back(i, i, -sigma * mass_[i]);
  Eigen::SparseMatrix<double> A(size(), size());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

int DiscretizedOperator::count_below(double sigma) const {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted_real(sigma));
  if (ldlt.info() != Eigen::Success) throw Error("discretization: LDLT failed");
  int neg = 0;
  const auto& d = ldlt.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i) neg += d[i] < 0.0;
  return neg;
}

OracleGreen oracle_green(const TruncatedQuantumTree& tree, cplx z, const OracleOptions& opt) {
  if (!(z.imag() > 0.0)) throw PreconditionError("oracle_green: needs Im z > 0");
  const auto g = metric_graph(tree, z, opt.boundary, opt.back ? *opt.back : opt.boundary);
  if (opt.step > g.min_length() / opt.min_nodes * (1.0 + 1e-12))
    throw PreconditionError("oracle_green: step must resolve the shortest edge with " +
                            std::to_string(opt.min_nodes) + " cells");
  std::vector<int> edge_of(tree.size(), -1);
  for (std::size_t e = 0; e < g.edges.size(); ++e) edge_of[g.edges[e].v] = static_cast<int>(e);

  OracleGreen out;
  out.vertices = opt.probes;
  if (out.vertices.empty())
    for (std::size_t v = tree.mode == TreeMode::Cone ? 1 : 0; v < tree.size(); ++v)
      out.vertices.push_back(static_cast<int>(v));

  auto level = [&](int refine, std::vector<cplx>& diag, std::vector<cplx>& kernel) {
    DiscretizedOperator op(g, opt.step, opt.min_nodes, refine);
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>, Eigen::COLAMDOrdering<int>> lu;
    auto A = op.shifted(z);
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw Error("oracle_green: sparse LU failed: " + lu.lastErrorMessage());
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(op.size());
    auto column = [&](int node) {
      rhs.setZero();
      rhs[node] = 1.0;
      Eigen::VectorXcd u = lu.solve(rhs);
      if (lu.info() != Eigen::Success) throw Error("oracle_green: sparse solve failed");
      return u;
    };
    for (int v : out.vertices) {
      const int k = op.vertex_node(v);
      diag.push_back(k < 0 ? cplx(0.0) : column(k)[k]);
    }
    auto node_of = [&](EdgePoint p, double* frac) {
      const int e = edge_of.at(p.vertex);
      if (e < 0) throw PreconditionError("oracle_green: kernel probe off the edges");
      const double u = p.s / op.cell(e);
      int i = std::clamp(static_cast<int>(std::floor(u)), 0, op.cells(e) - 1);
      *frac = u - i;
      return std::make_pair(op.edge_node(e, i), op.edge_node(e, i + 1));
    };
    for (auto [x, y] : opt.kernel_probes) {
      double fy = 0.0;
      auto [ya, yb] = node_of(y, &fy);
      int yn = fy < 1e-9 ? ya : (fy > 1.0 - 1e-9 ? yb : -2);
      if (yn == -2) throw PreconditionError("oracle_green: kernel source must sit on a node");
      if (yn < 0) {
        kernel.push_back(0.0);
        continue;
      }
      auto u = column(yn);
      double fx = 0.0;
      auto [xa, xb] = node_of(x, &fx);
      cplx va = xa < 0 ? cplx(0.0) : u[xa], vb = xb < 0 ? cplx(0.0) : u[xb];
      kernel.push_back((1.0 - fx) * va + fx * vb);
    }
    return op.size();
  };

  level(1, out.diag_coarse, out.kernel_coarse);
  if (!opt.richardson) {
    out.diag = out.diag_coarse;
    out.kernel = out.kernel_coarse;
    return out;
  }
  out.unknowns = level(2, out.diag_fine, out.kernel_fine);
  for (std::size_t i = 0; i < out.diag_fine.size(); ++i)
    out.diag.push_back((4.0 * out.diag_fine[i] - out.diag_coarse[i]) / 3.0);
  for (std::size_t i = 0; i < out.kernel_fine.size(); ++i)
    out.kernel.push_back((4.0 * out.kernel_fine[i] - out.kernel_coarse[i]) / 3.0);
  return out;
}

SmallestEigenvalue smallest_eigenvalue(const MetricGraph& g, double step, double tol) {
  auto bottom = [&](int refine) {
    DiscretizedOperator op(g, step, 32, refine);
    double lo = -1.0, hi = 1.0;
    while (op.count_below(lo) > 0) lo = 2.0 * lo - 1.0;
    while (op.count_below(hi) == 0) hi = 2.0 * hi + 1.0;
    while (hi - lo > tol * std::max(1.0, std::abs(hi))) {
      const double mid = 0.5 * (lo + hi);
      (op.count_below(mid) > 0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  };
  SmallestEigenvalue r;
  r.coarse = bottom(1);
  r.fine = bottom(2);
  r.value = (4.0 * r.fine - r.coarse) / 3.0;
  return r;
}

DiscreteReduction discrete_reduction(const QuantumGraphSpec& g, double lambda, double delta_D) {
  g.validate();
  const int n = static_cast<int>(g.vertices.size());
  DiscreteReduction r;
  r.A = Eigen::MatrixXd::Zero(n, n);
  r.W = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) r.W[i] = g.coupling(g.vertices[i]);
  for (const auto& e : g.edges) {
    if (near_dirichlet(e.potential, e.length, lambda, delta_D))
      throw DirichletProximityError("discrete_reduction: lambda at a Dirichlet value", lambda);
    auto m = fundamental_solution(e.potential, e.length, cplx(lambda, 0.0));
    const double S = m.S.real();
    const int u = g.index_of(e.u), v = g.index_of(e.v);
    r.A(u, v) += 1.0 / S;
    r.A(v, u) += 1.0 / S;
    r.W[u] += m.C.real() / S;   // edge leaves u
    r.W[v] += m.Sp.real() / S;  // reversed edge leaves v
  }
  Eigen::MatrixXd D = r.A;
  D.diagonal() -= r.W;
  r.residual = Eigen::JacobiSVD<Eigen::MatrixXd>(D).singularValues().minCoeff();
  return r;
}

std::vector<ReductionZero> reduction_zeros(const QuantumGraphSpec& g, double lo, double hi, int grid,
                                           double tol) {
  if (!(hi > lo) || grid < 2) throw PreconditionError("reduction_zeros: bad range");
  // number of negative eigenvalues of A - W; -1 at Dirichlet values
  auto negatives = [&](double lambda, double* scale = nullptr) {
    try {
      auto r = discrete_reduction(g, lambda, 1e-12);
      Eigen::MatrixXd D = r.A;
      D.diagonal() -= r.W;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D, Eigen::EigenvaluesOnly);
      if (scale) *scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      int neg = 0;
      for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) neg += es.eigenvalues()[i] < 0.0;
      return neg;
    } catch (const DirichletProximityError&) {
      return -1;
    }
  };
  std::vector<ReductionZero> out;
  double a = lo;
  int na = negatives(a);
  for (int i = 1; i <= grid; ++i) {
    const double b = lo + (hi - lo) * i / grid;
    const int nb = negatives(b);
    if (na >= 0 && nb >= 0 && na != nb) {
      double x = a, y = b;
      int nx = na;
      bool pole = false;
      while (y - x > tol * std::max(1.0, std::abs(x))) {
        const double m = 0.5 * (x + y);
        const int nm = negatives(m);
        if (nm < 0) {
          pole = true;
          break;
        }
        if (nm == nx) x = m;
        else y = m;
      }
      const double at = 0.5 * (x + y);
      double scale = 1.0;
      const int left = negatives(x, &scale), right = negatives(y);
      bool dirichlet = false;
      for (const auto& e : g.edges) dirichlet = dirichlet || near_dirichlet(e.potential, e.length, at, 1e-6);
      if (!pole && !dirichlet && left >= 0 && right >= 0) {
        double res = INFINITY;
        try {
          res = discrete_reduction(g, at, 1e-12).residual;
        } catch (const DirichletProximityError&) {
        }
        // a crossing through zero leaves a tiny singular value; a pole does not
        if (res < 1e-6 * scale) out.push_back({at, std::abs(left - right), res});
      }
    }
    a = b;
    na = nb;
  }
  return out;
}

double lowest_dirichlet(const PotentialSpec& w, double length) {
  const double base = std::numbers::pi * std::numbers::pi / (length * length);
  if (w.closed_form()) return w.shift() + base;
  // E_1 lies in [min W + base, max W + base] and E_2 >= min W + 4 base; when
  // that bracket holds only E_1, S_E(L) changes sign exactly once in it
  double lo = w.min_value() + base, hi = w.max_value() + base;
  if (hi < w.min_value() + 4.0 * base) {
    auto S = [&](double E) { return fundamental_solution(w, length, cplx(E, 0.0)).S.real(); };
    if (S(lo) > 0.0 && S(hi) <= 0.0) {
      while (hi - lo > 1e-14 * std::max(1.0, std::abs(hi))) {
        const double m = 0.5 * (lo + hi);
        (S(m) > 0.0 ? lo : hi) = m;
      }
      return 0.5 * (lo + hi);
    }
    if (S(hi) == 0.0) return hi;
  }
  double top = w.max_value() + 4.0 * base;
  for (int k = 0; k < 40; ++k, top *= 2.0) {
    auto d = dirichlet_spectrum(w, length, std::abs(top) + 1.0);
    if (!d.empty()) return d.front();
  }
  throw Error("lowest_dirichlet: no Dirichlet value found");
}

StarBottom star_bottom(int d, const std::vector<double>& lengths, const std::vector<PotentialSpec>& potentials,
                       double alpha_center) {
  if (d < 2) throw PreconditionError("star_bottom: degree must be >= 2");
  auto pick = [d](const auto& xs, const char* what) {
    if (xs.size() == 1) return std::vector<typename std::decay_t<decltype(xs)>::value_type>(d, xs[0]);
    if (static_cast<int>(xs.size()) != d) throw PreconditionError(std::string("star_bottom: ") + what + " size");
    return std::vector<typename std::decay_t<decltype(xs)>::value_type>(xs);
  };
  const auto L = pick(lengths, "lengths");
  const auto W = potentials.empty() ? std::vector<PotentialSpec>(d) : pick(potentials, "potentials");
  StarBottom out;
  out.ED = INFINITY;
  double wmax = 0.0;
  for (int i = 0; i < d; ++i) {
    out.ED = std::min(out.ED, lowest_dirichlet(W[i], L[i]));
    wmax = std::max(wmax, W[i].sup_norm());
  }
  auto Z = [&](double E) {
    double z = 0.0;
    for (int i = 0; i < d; ++i) {
      auto m = fundamental_solution(W[i], L[i], cplx(E, 0.0));
      z -= m.C.real() / m.S.real();
    }
    out.trace.emplace_back(E, z);
    return z;
  };
  const double a = alpha_center;
  double lo = -std::max(100.0, 4.0 * wmax + 4.0 * a * a);
  while (Z(lo) >= a) {
    lo *= 2.0;
    if (lo < -1e12) throw Error("star_bottom: no sign change below");
  }
  double delta = 1e-2 * std::max(1.0, std::abs(out.ED)), hi = out.ED - delta;
  int halvings = 0;
  while (Z(hi) <= a) {
    delta *= 0.5;
    hi = out.ED - delta;
    if (++halvings > 60) throw Error("star_bottom: no sign change below the Dirichlet value");
  }
  while (hi - lo > 1e-13 * std::max(1.0, std::abs(hi))) {
    const double m = 0.5 * (lo + hi);
    (Z(m) < a ? lo : hi) = m;
  }
  out.E0 = 0.5 * (lo + hi);
  if (!(out.E0 < out.ED)) throw Error("star_bottom: bottom not below the Dirichlet value");
  return out;
}

RegularTreeReference regular_tree_reference(int q, double L, double alpha, cplx z) {
  if (q < 1) throw PreconditionError("regular_tree_reference: q >= 1");
  if (!(L > 0.0)) throw PreconditionError("regular_tree_reference: L > 0");
  const cplx k = sqrt_branch(z);
  const cplx C = std::cos(k * L), S = std::abs(k) == 0.0 ? cplx(L) : std::sin(k * L) / k;
  const cplx F = alpha + (q + 1.0) * C / S, a = double(q) / (S * S);
  const cplx D = F * F - 4.0 * a, sd = std::sqrt(D);
  RegularTreeReference r;
  r.discriminant = D.real();
  r.in_band = D.real() < 0.0;
  // the decaying root: smallest |zeta| among those with Im R+ > 0, or among
  // all roots when both are real (gaps on the axis)
  const cplx roots[2] = {(F + sd) / (2.0 * a), (F - sd) / (2.0 * a)};
  auto im_r = [&](cplx h) { return ((h / S - C) / S).imag(); };
  auto tiny = [&](cplx h) { return 1e-12 * std::max(1.0, std::abs((h / S - C) / S)); };
  int pick = std::abs(roots[0]) <= std::abs(roots[1]) ? 0 : 1;
  const bool pos0 = im_r(roots[0]) > tiny(roots[0]), pos1 = im_r(roots[1]) > tiny(roots[1]);
  if (pos0 != pos1) pick = pos0 ? 0 : 1;
  const cplx best = roots[pick], best_r = (best / S - C) / S;
  r.h = best;
  r.zeta = best / S;
  r.rplus = best_r;
  r.green = -1.0 / ((q + 1.0) * r.rplus - alpha);
  return r;
}

}  // namespace qtree
