#include "qtree/green.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <map>
#include <random>

#include "qtree/cone_solver.hpp"
#include "qtree/errors.hpp"

namespace qtree {

namespace {

const cplx kInf{INFINITY, 0.0};

double rel(cplx l, cplx r) {
  return std::abs(l - r) / std::max({1.0, std::abs(l), std::abs(r)});
}

// R+(o) from R+(t) through the inverse of the edge Moebius map.
cplx pull_back(const EdgeSolutionMatrix& e, cplx rt, bool rt_inf) {
  if (rt_inf) return -e.C / e.S;
  return (e.C * rt - e.Cp) / (e.Sp - e.S * rt);
}

// R-(t) from R-(o).
cplx push_forward(const EdgeSolutionMatrix& e, cplx ro, bool ro_inf) {
  if (ro_inf) return -e.Sp / e.S;
  return (e.Sp * ro - e.Cp) / (e.C - e.S * ro);
}

void require_positive(bool check, cplx v, const char* what, int vertex) {
  if (check && !(v.imag() > 0.0))
    throw HerglotzViolation(std::string("wt_recursion: Im ") + what + " <= 0 at vertex " +
                            std::to_string(vertex));
}

cplx leaf_seed(const BoundaryRule& b, const TreeVertex& v, cplx z, bool* inf) {
  *inf = false;
  switch (b.kind) {
    case BoundaryKind::Free: return cplx(0.0, 1.0) * sqrt_branch(z);
    case BoundaryKind::Dirichlet: *inf = true; return kInf;
    case BoundaryKind::Neumann: return -v.alpha;
    case BoundaryKind::Value: return b.value;
    case BoundaryKind::Exact:
      if (v.label < 0 || v.label >= static_cast<int>(b.children_sum.size()))
        throw PreconditionError("exact boundary: label outside the seed table");
      return b.children_sum[v.label] - v.alpha;
  }
  return {};
}

}  // namespace

const char* boundary_name(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::Free: return "free";
    case BoundaryKind::Dirichlet: return "dirichlet";
    case BoundaryKind::Neumann: return "neumann";
    case BoundaryKind::Exact: return "exact";
    case BoundaryKind::Value: return "value";
  }
  return "?";
}

BoundaryRule BoundaryRule::exact(const ConeSystem& sys, std::vector<cplx> rplus) {
  if (static_cast<int>(rplus.size()) != sys.size())
    throw PreconditionError("exact boundary: one value per label expected");
  BoundaryRule b;
  b.kind = BoundaryKind::Exact;
  b.children_sum.assign(sys.size(), 0.0);
  for (int j = 0; j < sys.size(); ++j) {
    for (int k = 0; k < sys.size(); ++k) b.children_sum[j] += double(sys.M[j][k]) * rplus[k];
    b.alpha.push_back(sys.labels[j].alpha);
  }
  b.rplus = std::move(rplus);
  return b;
}

BoundaryRule exact_boundary(const ConeSystem& sys, cplx z) {
  if (z.imag() > 0.0) {
    auto h = solve_cone_system(sys, z);
    return BoundaryRule::exact(sys, wt_plus(label_solutions(sys, z), h.h));
  }
  if (z.imag() < 0.0) throw PreconditionError("exact_boundary: Im z < 0");
  auto lim = limit_on_axis(sys, z.real());
  if (lim.diverged || (!lim.converged && !lim.polished))
    throw ConvergenceError("exact_boundary: no limit on the axis", lim.gap, lim.h);
  return BoundaryRule::exact(sys, wt_plus(lim.edges, lim.h));
}

WTState wt_recursion(const TruncatedQuantumTree& tree, cplx z, const BoundaryRule& boundary,
                     const WTOptions& opt) {
  if (z.imag() < 0.0) throw PreconditionError("wt_recursion: Im z < 0");
  if (tree.size() < 2) throw PreconditionError("wt_recursion: empty tree");
  const std::size_t n = tree.size();
  const bool strict = opt.check_herglotz && z.imag() > 0.0;

  WTState s;
  s.z = z;
  s.tree = &tree;
  s.boundary = boundary;
  s.back = opt.back ? *opt.back : boundary;
  s.edge.resize(n);
  s.rp_t.assign(n, 0.0);
  s.rp_o.assign(n, 0.0);
  s.rm_o.assign(n, 0.0);
  s.rm_t.assign(n, 0.0);
  s.zf.assign(n, 0.0);
  s.zb.assign(n, 0.0);
  s.rp_t_inf.assign(n, 0);
  s.rm_o_inf.assign(n, 0);

  std::map<std::pair<int, double>, EdgeSolutionMatrix> cache;
  for (std::size_t v = 0; v < n; ++v) {
    if (!tree.has_edge(static_cast<int>(v))) continue;
    const auto& tv = tree.vertices[v];
    auto key = std::make_pair(tv.potential, tv.length);
    auto it = cache.find(key);
    if (it == cache.end()) {
      const auto& w = tree.potential_of(static_cast<int>(v));
      if (z.imag() == 0.0 && near_dirichlet(w, tv.length, z.real(), opt.delta_D))
        throw DirichletProximityError("wt_recursion: lambda at a Dirichlet value of an edge", z.real());
      it = cache.emplace(key, fundamental_solution(w, tv.length, z)).first;
    }
    s.edge[v] = it->second;
  }

  const auto order = tree.preorder();
  // forward: leaves to root
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    const auto& tv = tree.vertices[v];
    if (!tree.has_edge(v)) continue;
    if (tv.children.empty() && tv.truncated) {
      bool inf = false;
      s.rp_t[v] = leaf_seed(boundary, tv, z, &inf);
      s.rp_t_inf[v] = inf;
    } else {
      cplx sum = -tv.alpha;
      for (int c : tv.children) sum += s.rp_o[c];
      s.rp_t[v] = sum;
      if (!tv.children.empty()) require_positive(strict, sum, "R+(t)", v);
    }
    const auto& e = s.edge[v];
    s.rp_o[v] = pull_back(e, s.rp_t[v], s.rp_t_inf[v]);
    require_positive(strict, s.rp_o[v], "R+(o)", v);
    s.zf[v] = s.rp_t_inf[v] ? cplx(0.0) : e.C + s.rp_o[v] * e.S;
  }

  // backward: root to leaves
  auto seed_children = [&](int v, cplx incoming) {
    const auto& tv = tree.vertices[v];
    cplx all = 0.0;
    for (int c : tv.children) all += s.rp_o[c];
    for (int c : tv.children) {
      s.rm_o[c] = incoming + all - s.rp_o[c] - tv.alpha;
      require_positive(strict && (tv.children.size() > 1 || tree.has_edge(v)), s.rm_o[c], "R-(o)", c);
    }
  };
  if (tree.mode == TreeMode::Cone) {
    // vertex 0 is the origin of the root edge; its far side is the back seed
    const int r = tree.vertices[0].children.front();
    const auto& b = s.back;
    switch (b.kind) {
      case BoundaryKind::Free: s.rm_o[r] = cplx(0.0, 1.0) * sqrt_branch(z); break;
      case BoundaryKind::Dirichlet: s.rm_o[r] = kInf; s.rm_o_inf[r] = 1; break;
      case BoundaryKind::Neumann: s.rm_o[r] = -tree.vertices[0].alpha; break;
      case BoundaryKind::Value: s.rm_o[r] = b.value; break;
      case BoundaryKind::Exact: {
        const int rr = tree.root_reverse_label;
        if (rr < 0 || rr >= static_cast<int>(b.children_sum.size()))
          throw PreconditionError("wt_recursion: exact back seed needs the reversed root label");
        s.rm_o[r] = b.children_sum[rr] - b.alpha[rr];
        break;
      }
    }
  } else {
    seed_children(0, 0.0);
  }
  for (int v : order) {
    if (!tree.has_edge(v)) continue;
    const auto& e = s.edge[v];
    s.rm_t[v] = push_forward(e, s.rm_o[v], s.rm_o_inf[v]);
    require_positive(strict, s.rm_t[v], "R-(t)", v);
    s.zb[v] = s.rm_o_inf[v] ? cplx(0.0) : e.Sp + s.rm_t[v] * e.S;
    seed_children(v, s.rm_t[v]);
  }
  return s;
}

std::vector<cplx> cone_truncated_rplus(const ConeSystem& sys, cplx z, int depth,
                                       const BoundaryRule& boundary) {
  sys.validate();
  if (depth < 0) throw PreconditionError("cone_truncated_rplus: depth < 0");
  const int m = sys.size();
  std::vector<EdgeSolutionMatrix> e(m);
  for (int j = 0; j < m; ++j) e[j] = fundamental_solution(sys.labels[j].potential, sys.labels[j].length, z);
  std::vector<cplx> rt(m), ro(m);
  std::vector<char> inf(m, 0);
  for (int j = 0; j < m; ++j) {
    TreeVertex tv;
    tv.label = j;
    tv.alpha = sys.labels[j].alpha;
    bool f = false;
    rt[j] = leaf_seed(boundary, tv, z, &f);
    inf[j] = f;
  }
  for (int level = 0; level <= depth; ++level) {
    for (int j = 0; j < m; ++j) ro[j] = pull_back(e[j], rt[j], inf[j]);
    if (level == depth) break;
    for (int j = 0; j < m; ++j) {
      cplx sum = -sys.labels[j].alpha;
      for (int k = 0; k < m; ++k) sum += double(sys.M[j][k]) * ro[k];
      rt[j] = sum;
      inf[j] = 0;
    }
  }
  return ro;
}

GreenDiag green_origin(const WTState& s, int v, double pole_threshold) {
  if (!s.tree->has_edge(v)) throw PreconditionError("green_origin: vertex has no incoming edge");
  if (s.rm_o_inf[v]) return {0.0, false};
  cplx den = s.rp_o[v] + s.rm_o[v];
  if (std::abs(den) < pole_threshold) return {kInf, true};
  return {-1.0 / den, false};
}

GreenDiag green_diag(const WTState& s, int vertex, double pole_threshold) {
  const auto& t = *s.tree;
  if (vertex < 0 || vertex >= static_cast<int>(t.size())) throw PreconditionError("green_diag: bad vertex");
  if (!t.has_edge(vertex)) {
    const auto& ch = t.vertices[vertex].children;
    if (ch.empty()) throw PreconditionError("green_diag: isolated vertex");
    return green_origin(s, ch.front(), pole_threshold);
  }
  if (s.rp_t_inf[vertex]) return {0.0, false};
  cplx den = s.rp_t[vertex] + s.rm_t[vertex];
  if (std::abs(den) < pole_threshold) return {kInf, true};
  return {-1.0 / den, false};
}

OffDiag green_offdiag(const WTState& s, const std::vector<int>& path) {
  const auto& t = *s.tree;
  if (path.empty()) throw PreconditionError("green_offdiag: empty path");
  OffDiag out{green_diag(s, path.front()).value, green_diag(s, path.back()).value};
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const int a = path[i], b = path[i + 1];
    if (i + 2 < path.size() && path[i + 2] == a) throw PreconditionError("green_offdiag: backtracking path");
    if (b >= 0 && b < static_cast<int>(t.size()) && t.vertices[b].parent == a) {
      out.forward *= s.zf[b];
      out.reverse *= s.zb[b];
    } else if (a >= 0 && a < static_cast<int>(t.size()) && t.vertices[a].parent == b) {
      out.forward *= s.zb[a];
      out.reverse *= s.zf[a];
    } else {
      throw PreconditionError("green_offdiag: consecutive vertices are not adjacent");
    }
  }
  return out;
}

cplx green_vertices(const WTState& s, int a, int b) {
  if (a == b) return green_diag(s, a).value;
  return green_offdiag(s, s.tree->path_between(a, b)).forward;
}

cplx green_kernel(const WTState& st, EdgePoint x, EdgePoint y) {
  const auto& t = *st.tree;
  for (auto p : {x, y}) {
    if (p.vertex < 0 || p.vertex >= static_cast<int>(t.size()) || !t.has_edge(p.vertex))
      throw PreconditionError("green_kernel: point not on an edge");
    if (p.s < 0.0 || p.s > t.vertices[p.vertex].length) throw PreconditionError("green_kernel: s outside the edge");
  }
  auto at = [&](EdgePoint p) {
    return fundamental_solution_at(t.potential_of(p.vertex), t.vertices[p.vertex].length, p.s, st.z);
  };
  if (x.vertex == y.vertex) {
    const int v = x.vertex;
    const double lo = std::min(x.s, y.s), hi = std::max(x.s, y.s);
    auto el = at({v, lo}), eh = at({v, hi});
    cplx vp = eh.C + st.rp_o[v] * eh.S;
    if (st.rm_o_inf[v]) return el.S * vp;
    cplx um = el.C - st.rm_o[v] * el.S;
    return -um * vp / (st.rp_o[v] + st.rm_o[v]);
  }
  // interpolate between the endpoint values of each edge
  auto coef = [&](EdgePoint p, cplx* ca, cplx* cb) {
    const auto& full = st.edge[p.vertex];
    if (std::abs(full.S) < 1e-10)
      throw DirichletProximityError("green_kernel: S(L) vanishes on the edge", st.z.real());
    auto e = at(p);
    *ca = (full.S * e.C - full.C * e.S) / full.S;
    *cb = e.S / full.S;
  };
  cplx ax, bx, ay, by;
  coef(x, &ax, &bx);
  coef(y, &ay, &by);
  const int xo = t.vertices[x.vertex].parent, xt = x.vertex;
  const int yo = t.vertices[y.vertex].parent, yt = y.vertex;
  return ax * (ay * green_vertices(st, xo, yo) + by * green_vertices(st, xo, yt)) +
         bx * (ay * green_vertices(st, xt, yo) + by * green_vertices(st, xt, yt));
}

double IdentityReport::max_residual() const {
  double m = 0.0;
  for (const auto& r : residuals) m = std::max(m, r.max_residual);
  return m;
}

const IdentityResidual* IdentityReport::find(const std::string& name) const {
  for (const auto& r : residuals)
    if (r.name == name) return &r;
  return nullptr;
}

IdentityReport identity_suite(const WTState& s, int paths, std::uint64_t seed) {
  const auto& t = *s.tree;
  const int n = static_cast<int>(t.size());
  std::map<std::string, IdentityResidual> acc;
  std::vector<std::string> order;
  auto note = [&](const std::string& name, double r, int v) {
    auto [it, fresh] = acc.try_emplace(name, IdentityResidual{name, 0.0, -1});
    if (fresh) order.push_back(name);
    if (!(r <= it->second.max_residual)) it->second.max_residual = r, it->second.where = v;
  };

  IdentityReport rep;
  rep.current_slack = INFINITY;
  for (int v = 0; v < n; ++v) {
    if (!t.has_edge(v)) continue;
    const auto& e = s.edge[v];
    const auto& tv = t.vertices[v];
    const bool fin = !s.rp_t_inf[v] && !s.rm_o_inf[v];
    if (!s.rp_t_inf[v]) {
      note("zetawt", rel(s.zf[v], 1.0 / (e.Sp - e.S * s.rp_t[v])), v);
      note("r+-id", rel(s.rp_t[v], e.Sp / e.S - 1.0 / (e.S * s.zf[v])), v);
    }
    if (!s.rm_o_inf[v]) {
      note("zetawt", rel(s.zb[v], 1.0 / (e.C - e.S * s.rm_o[v])), v);
      note("r+-id", rel(s.rm_o[v], e.C / e.S - 1.0 / (e.S * s.zb[v])), v);
      // R-(t_b) equals R+ at the origin of the reversed edge
      auto rv = e.reversed();
      note("reversal", rel(s.rm_t[v], pull_back(rv, s.rm_o[v], false)), v);
    }
    if (fin) {
      const cplx gt = green_diag(s, v).value, go = green_origin(s, v).value;
      note("zetainv", rel(1.0 / s.zf[v] - s.zb[v], e.S / gt), v);
      note("zetainv", rel(s.zb[v] / s.zf[v], go / gt), v);
      note("greener", rel(1.0 / gt, -(s.rp_t[v] + s.rm_t[v])), v);
      for (int c : tv.children) note("greener", rel(green_origin(s, c).value, gt), c);
    }
    if (fin && !tv.children.empty()) {
      cplx lhs1 = 1.0 / (s.zf[v] * e.S), base = e.Sp / e.S + tv.alpha;
      cplx rhs2 = s.zb[v] / e.S + 1.0 / green_diag(s, v).value;
      for (int c : tv.children) {
        const auto& ec = s.edge[c];
        lhs1 += s.zf[c] / ec.S;
        rhs2 += s.zf[c] / ec.S;
        base += ec.C / ec.S;
      }
      note("e:1", rel(lhs1, base), v);
      note("e:2", rel(base, rhs2), v);
    }
    // current relations along b and along b^
    auto current = [&](double lhs, double rhs) {
      double scale = std::max(1.0, std::abs(rhs));
      double slack = (rhs - lhs) / scale;
      if (slack < rep.current_slack) rep.current_slack = slack, rep.current_where = v;
      rep.current_gap = std::max(rep.current_gap, std::abs(slack));
    };
    if (!s.rp_t_inf[v]) current(s.rp_t[v].imag(), s.rp_o[v].imag() / std::norm(s.zf[v]));
    if (!s.rm_o_inf[v]) current(s.rm_o[v].imag(), s.rm_t[v].imag() / std::norm(s.zb[v]));
  }

  // random non-backtracking paths: two product forms and symmetry
  std::mt19937_64 rng(seed);
  for (int p = 0; p < paths && n > 1; ++p) {
    int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
    if (a == b) continue;
    auto path = t.path_between(a, b);
    bool dirichlet = false;
    for (int v : path) dirichlet = dirichlet || (t.has_edge(v) && (s.rp_t_inf[v] || s.rm_o_inf[v]));
    if (dirichlet) continue;
    auto od = green_offdiag(s, path);
    note("greenmul", rel(od.forward, od.reverse), a);
    std::vector<int> back(path.rbegin(), path.rend());
    note("sym", rel(od.forward, green_offdiag(s, back).forward), a);
  }

  for (const auto& name : order) rep.residuals.push_back(acc[name]);
  if (!std::isfinite(rep.current_slack)) rep.current_slack = 0.0;
  return rep;
}

namespace {

using GL = boost::math::quadrature::gauss<double, 32>;

// Nodes and weights of the composite rule over the panels.
void composite_rule(const std::vector<double>& cuts, std::vector<double>& x, std::vector<double>& w) {
  const auto& ab = GL::abscissa();
  const auto& wt = GL::weights();
  x.clear();
  w.clear();
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double a = cuts[p], b = cuts[p + 1], m = 0.5 * (a + b), h = 0.5 * (b - a);
    for (std::size_t i = 0; i < ab.size(); ++i) {
      if (ab[i] == 0.0) {
        x.push_back(m), w.push_back(h * wt[i]);
        continue;
      }
      x.push_back(m - h * ab[i]), w.push_back(h * wt[i]);
      x.push_back(m + h * ab[i]), w.push_back(h * wt[i]);
    }
  }
}

struct FormValues {
  double formula = 0.0, kernel = 0.0, gp = 0.0, gm = 0.0;
};

FormValues form_on(const WTState& s, int v, const std::function<double(double)>& f,
                   const std::vector<double>& cuts) {
  const auto& tv = s.tree->vertices[v];
  const double L = tv.length;
  const cplx rp = s.rp_o[v], rm = s.rm_o[v];

  std::vector<double> x, w;
  composite_rule(cuts, x, w);
  const std::size_t per = x.size() / (cuts.size() - 1);
  // the triangle y < x: whole panels below x plus a scaled rule on [a_p, x]
  std::vector<double> ux, uw;
  composite_rule({0.0, 1.0}, ux, uw);
  std::vector<double> pts = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a0 = cuts[i / per];
    for (double u : ux) pts.push_back(a0 + u * (x[i] - a0));
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  auto grid = fundamental_solution_grid(s.tree->potential_of(v), L, pts, s.z);
  auto lookup = [&](double p) { return grid[std::lower_bound(pts.begin(), pts.end(), p) - pts.begin()]; };
  auto phi_p = [&](const EdgeSolutionMatrix& e) { return e.C + rp * e.S; };
  auto phi_m = [&](const EdgeSolutionMatrix& e) { return e.C - rm * e.S; };

  double pr = 0.0, pi = 0.0, mr = 0.0, mi = 0.0;
  cplx tri = 0.0, below = 0.0, panel = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i % per == 0) below += panel, panel = 0.0;
    auto e = lookup(x[i]);
    const double fx = f(x[i]);
    cplx pp = phi_p(e), pm = phi_m(e);
    pr += w[i] * fx * pp.real();
    pi += w[i] * fx * pp.imag();
    mr += w[i] * fx * pm.real();
    mi += w[i] * fx * pm.imag();
    panel += w[i] * fx * pm;
    const double a0 = cuts[i / per], h = x[i] - a0;
    cplx inner = below;
    for (std::size_t k = 0; k < ux.size(); ++k) {
      const double y = a0 + ux[k] * h;
      inner += uw[k] * h * f(y) * phi_m(lookup(y));
    }
    tri += w[i] * fx * pp * inner;
  }
  FormValues out;
  out.gp = pr * pr + pi * pi;
  out.gm = mr * mr + mi * mi;
  out.formula = (rp.imag() * out.gm + rm.imag() * out.gp) / std::norm(rp + rm);
  out.kernel = (-2.0 * tri / (rp + rm)).imag();
  return out;
}

QuadraticForm quadratic_form(const WTState& s, int v, const std::function<double(double)>& f,
                             std::vector<double> cuts, double rel_tol) {
  if (!s.tree->has_edge(v)) throw PreconditionError("im_quadratic_form: vertex has no incoming edge");
  if (s.rp_t_inf[v] || s.rm_o_inf[v]) throw PreconditionError("im_quadratic_form: infinite WT value on the edge");
  QuadraticForm q;
  FormValues prev = form_on(s, v, f, cuts);
  for (int level = 0; level < 4; ++level) {
    std::vector<double> finer;
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
      finer.push_back(cuts[p]);
      finer.push_back(0.5 * (cuts[p] + cuts[p + 1]));
    }
    finer.push_back(cuts.back());
    cuts = std::move(finer);
    FormValues cur = form_on(s, v, f, cuts);
    const double scale = std::max({1e-300, std::abs(cur.formula), std::abs(cur.kernel), cur.gp, cur.gm});
    const double change = std::max({std::abs(cur.formula - prev.formula), std::abs(cur.kernel - prev.kernel),
                                     std::abs(cur.gp - prev.gp), std::abs(cur.gm - prev.gm)});
    prev = cur;
    q.panels = static_cast<int>(cuts.size()) - 1;
    if (change <= rel_tol * scale || change < 1e-300) {
      q.converged = true;
      break;
    }
  }
  q.formula = prev.formula;
  q.kernel = prev.kernel;
  q.g_plus = prev.gp;
  q.g_minus = prev.gm;
  if (!q.converged)
    throw ConvergenceError("im_quadratic_form: quadrature tolerance not met", std::abs(q.formula - q.kernel));
  return q;
}

}  // namespace

QuadraticForm im_quadratic_form(const WTState& s, int v, const std::function<double(double)>& f,
                                double rel_tol) {
  const double L = s.tree->vertices.at(v).length;
  return quadratic_form(s, v, f, {0.0, L}, rel_tol);
}

QuadraticForm im_quadratic_form(const WTState& s, int v, const std::vector<double>& samples,
                                double rel_tol) {
  if (samples.size() < 2) throw PreconditionError("im_quadratic_form: need at least two samples");
  const double L = s.tree->vertices.at(v).length;
  const double h = L / double(samples.size() - 1);
  auto f = [&](double x) {
    double u = std::clamp(x / h, 0.0, double(samples.size() - 1));
    std::size_t i = std::min(static_cast<std::size_t>(u), samples.size() - 2);
    double r = u - double(i);
    return (1.0 - r) * samples[i] + r * samples[i + 1];
  };
  std::vector<double> cuts;
  for (std::size_t i = 0; i < samples.size(); ++i) cuts.push_back(h * double(i));
  cuts.back() = L;
  return quadratic_form(s, v, f, cuts, rel_tol);
}

}  // namespace qtree
