#include "qtree/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>
#include <tuple>

#include "qtree/errors.hpp"

namespace qtree {

double QuantumGraphSpec::coupling(int v) const {
  auto it = couplings.find(v);
  return it == couplings.end() ? 0.0 : it->second;
}

int QuantumGraphSpec::index_of(int vertex) const {
  auto it = std::find(vertices.begin(), vertices.end(), vertex);
  return it == vertices.end() ? -1 : static_cast<int>(it - vertices.begin());
}

std::vector<int> QuantumGraphSpec::degrees() const {
  std::vector<int> deg(vertices.size(), 0);
  for (const auto& e : edges) {
    int a = index_of(e.u), b = index_of(e.v);
    if (a >= 0) ++deg[a];
    if (b >= 0) ++deg[b];
  }
  return deg;
}

void QuantumGraphSpec::validate() const {
  if (vertices.empty()) throw PreconditionError("graph has no vertices");
  std::set<int> ids(vertices.begin(), vertices.end());
  if (ids.size() != vertices.size()) throw PreconditionError("duplicate vertex id");
  std::set<std::pair<int, int>> seen;
  for (const auto& e : edges) {
    if (!ids.count(e.u) || !ids.count(e.v))
      throw PreconditionError("edge refers to an unknown vertex");
    if (e.u == e.v) throw PreconditionError("self-loop at vertex " + std::to_string(e.u));
    if (!(e.length > 0.0) || !std::isfinite(e.length))
      throw PreconditionError("edge lengths must be positive and finite");
    auto key = std::minmax(e.u, e.v);
    if (!seen.insert(key).second)
      throw PreconditionError("multiple edges between " + std::to_string(key.first) + " and " +
                              std::to_string(key.second));
    e.potential.validate();
  }
  for (const auto& [v, a] : couplings) {
    if (!ids.count(v)) throw PreconditionError("coupling for unknown vertex");
    if (!std::isfinite(a)) throw PreconditionError("coupling must be finite");
  }
  // connectivity
  std::vector<std::vector<int>> adj(vertices.size());
  for (const auto& e : edges) {
    int a = index_of(e.u), b = index_of(e.v);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen_v(vertices.size(), 0);
  std::deque<int> queue{0};
  seen_v[0] = 1;
  std::size_t count = 1;
  while (!queue.empty()) {
    int a = queue.front();
    queue.pop_front();
    for (int b : adj[a])
      if (!seen_v[b]) {
        seen_v[b] = 1;
        ++count;
        queue.push_back(b);
      }
  }
  if (count != vertices.size()) throw PreconditionError("graph is not connected");
}

int ConeSystem::row_sum(int j) const {
  int s = 0;
  for (int v : M[j]) s += v;
  return s;
}

double ConeSystem::L_o() const {
  return root_length > 0.0 ? root_length : labels.at(root_label).length;
}

const PotentialSpec& ConeSystem::W_o() const {
  return root_potential ? *root_potential : labels.at(root_label).potential;
}

void ConeSystem::validate() const {
  const int m = size();
  if (m == 0) throw PreconditionError("cone system has no labels");
  if (static_cast<int>(M.size()) != m) throw PreconditionError("M must be m x m");
  for (const auto& row : M) {
    if (static_cast<int>(row.size()) != m) throw PreconditionError("M must be m x m");
    for (int v : row)
      if (v < 0) throw PreconditionError("M entries must be nonnegative");
  }
  for (const auto& l : labels) {
    if (!(l.length > 0.0) || !std::isfinite(l.length))
      throw PreconditionError("label lengths must be positive and finite");
    if (!std::isfinite(l.alpha)) throw PreconditionError("label couplings must be finite");
    l.potential.validate();
  }
  if (root_label < 0 || root_label >= m) throw PreconditionError("root label out of range");
  if (root_length < 0.0) throw PreconditionError("root length must be positive");
  if (root_reverse_label >= m) throw PreconditionError("root reverse label out of range");
  if (!root_row.empty()) {
    if (static_cast<int>(root_row.size()) != m) throw PreconditionError("root row must have m entries");
    for (int v : root_row)
      if (v < 0) throw PreconditionError("root row entries must be nonnegative");
  }
  if (root_potential) root_potential->validate();
}

std::string ConditionReport::summary() const {
  std::ostringstream os;
  os << "C0 " << (c0 ? "pass" : "fail");
  if (!c0) os << " (row " << c0_row + 1 << " has fewer than 2 children)";
  os << "; C1* " << (c1_star ? "pass" : "fail");
  if (!c1_star) os << " (label " << c1_pair.second + 1 << " unreachable from " << c1_pair.first + 1 << ")";
  os << "; C2 " << (c2 ? "pass" : "fail");
  if (!c2) os << " (row " << c2_row + 1 << ")";
  return os.str();
}

ConditionReport check_conditions(const ConeSystem& sys) {
  const int m = sys.size();
  ConditionReport r;
  for (int j = 0; j < m; ++j)
    if (sys.row_sum(j) < 2) {
      r.c0 = false;
      r.c0_row = j;
      break;
    }
  // reachability in >= 1 step
  for (int k = 0; k < m && r.c1_star; ++k) {
    std::vector<char> reach(m, 0);
    std::deque<int> queue;
    for (int l = 0; l < m; ++l)
      if (sys.M[k][l] > 0 && !reach[l]) {
        reach[l] = 1;
        queue.push_back(l);
      }
    while (!queue.empty()) {
      int a = queue.front();
      queue.pop_front();
      for (int l = 0; l < m; ++l)
        if (sys.M[a][l] > 0 && !reach[l]) {
          reach[l] = 1;
          queue.push_back(l);
        }
    }
    for (int l = 0; l < m; ++l)
      if (!reach[l]) {
        r.c1_star = false;
        r.c1_pair = {k, l};
        break;
      }
  }
  r.c2_choice.assign(m, -1);
  for (int k = 0; k < m; ++k) {
    for (int kp = 0; kp < m && r.c2_choice[k] < 0; ++kp) {
      if (sys.M[k][kp] < 1) continue;
      bool ok = true;
      for (int l = 0; l < m; ++l)
        if (sys.M[k][l] >= 1 && sys.M[kp][l] < 1) ok = false;
      if (ok) r.c2_choice[k] = kp;
    }
    if (r.c2_choice[k] < 0 && r.c2) {
      r.c2 = false;
      r.c2_row = k;
    }
  }
  return r;
}

namespace {

struct DirectedEdge {
  int from = 0;  // vertex index
  int to = 0;
  double length = 0.0;
  PotentialSpec potential;
  double alpha = 0.0;  // coupling at `to`
  std::vector<int> children;
};

}  // namespace

ConeSystem build_universal_cover_system(const QuantumGraphSpec& base) {
  base.validate();
  const auto deg = base.degrees();
  for (std::size_t i = 0; i < deg.size(); ++i)
    if (deg[i] < 2)
      throw ConditionError("vertex " + std::to_string(base.vertices[i]) +
                           " has degree " + std::to_string(deg[i]) +
                           "; the universal cover needs minimal degree >= 2");

  std::vector<DirectedEdge> de;
  for (const auto& e : base.edges) {
    int a = base.index_of(e.u), b = base.index_of(e.v);
    de.push_back({a, b, e.length, e.potential, base.coupling(e.v), {}});
    de.push_back({b, a, e.length, e.potential.reversed(), base.coupling(e.u), {}});
  }
  const int nd = static_cast<int>(de.size());
  for (int d = 0; d < nd; ++d)
    for (int c = 0; c < nd; ++c)
      if (de[c].from == de[d].to && de[c].to != de[d].from) de[d].children.push_back(c);

  // initial classes from edge data
  std::vector<int> cls(nd, -1);
  int ncls = 0;
  for (int d = 0; d < nd; ++d) {
    for (int e = 0; e < d; ++e)
      if (de[e].length == de[d].length && de[e].alpha == de[d].alpha &&
          de[e].potential == de[d].potential) {
        cls[d] = cls[e];
        break;
      }
    if (cls[d] < 0) cls[d] = ncls++;
  }
  // refine by child-class multisets until the partition is stable
  while (true) {
    std::map<std::pair<int, std::vector<int>>, int> ids;
    std::vector<int> next(nd);
    for (int d = 0; d < nd; ++d) {
      std::vector<int> kids;
      for (int c : de[d].children) kids.push_back(cls[c]);
      std::sort(kids.begin(), kids.end());
      auto key = std::make_pair(cls[d], kids);
      auto it = ids.find(key);
      if (it == ids.end()) it = ids.emplace(key, static_cast<int>(ids.size())).first;
      next[d] = it->second;
    }
    int n = static_cast<int>(ids.size());
    // renumber by first occurrence so labels are stable across runs
    std::vector<int> order(n, -1);
    int k = 0;
    for (int d = 0; d < nd; ++d)
      if (order[next[d]] < 0) order[next[d]] = k++;
    for (int d = 0; d < nd; ++d) next[d] = order[next[d]];
    bool stable = n == ncls;
    cls = next;
    ncls = n;
    if (stable) break;
  }

  ConeSystem sys;
  sys.labels.resize(ncls);
  sys.M.assign(ncls, std::vector<int>(ncls, 0));
  sys.names.resize(ncls);
  std::vector<char> done(ncls, 0);
  for (int d = 0; d < nd; ++d) {
    int j = cls[d];
    if (done[j]) continue;
    done[j] = 1;
    sys.labels[j] = {de[d].length, de[d].potential, de[d].alpha};
    for (int c : de[d].children) ++sys.M[j][cls[c]];
    sys.names[j] = std::to_string(base.vertices[de[d].from]) + ">" +
                   std::to_string(base.vertices[de[d].to]);
  }
  sys.root_label = cls[0];
  sys.root_reverse_label = cls[1];
  sys.root_length = 0.0;
  sys.root_row.assign(ncls, 0);
  for (int d = 0; d < nd; ++d)
    if (de[d].from == 0) ++sys.root_row[cls[d]];
  sys.root_alpha = base.coupling(base.vertices[0]);
  return sys;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t path_key(std::uint64_t parent_key, std::uint64_t child_index) {
  return mix64(parent_key ^ mix64(child_index + 0x632BE59BD9B4E019ULL));
}

std::vector<int> TruncatedQuantumTree::path_between(int a, int b) const {
  std::vector<int> up_a{a}, up_b{b};
  int x = a, y = b;
  while (vertices[x].depth > vertices[y].depth) up_a.push_back(x = vertices[x].parent);
  while (vertices[y].depth > vertices[x].depth) up_b.push_back(y = vertices[y].parent);
  while (x != y) {
    x = vertices[x].parent;
    y = vertices[y].parent;
    if (x < 0 || y < 0) throw PreconditionError("vertices are not in the same tree");
    up_a.push_back(x);
    up_b.push_back(y);
  }
  up_b.pop_back();
  up_a.insert(up_a.end(), up_b.rbegin(), up_b.rend());
  return up_a;
}

std::vector<int> TruncatedQuantumTree::preorder() const {
  std::vector<int> order;
  order.reserve(vertices.size());
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    const auto& ch = vertices[v].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return order;
}

TruncatedQuantumTree expand_truncated_tree(const ConeSystem& sys, int depth, TreeMode mode,
                                           std::size_t vertex_cap) {
  if (depth < 1) throw PreconditionError("expand_truncated_tree: depth must be >= 1");
  sys.validate();
  const int m = sys.size();
  TruncatedQuantumTree t;
  t.mode = mode;
  t.depth = depth;
  t.root_label = sys.root_label;
  t.root_reverse_label = sys.root_reverse_label;
  for (const auto& l : sys.labels) t.potentials.push_back(l.potential);
  int root_pot = sys.root_label;
  if (sys.root_potential) {
    t.potentials.push_back(*sys.root_potential);
    root_pot = m;
  }

  auto add = [&](int parent, int label, double length, int pot, double alpha, int gen,
                 std::uint64_t key) {
    if (t.vertices.size() >= vertex_cap)
      throw PreconditionError("expand_truncated_tree: vertex cap of " +
                              std::to_string(vertex_cap) + " exceeded");
    TreeVertex v;
    v.parent = parent;
    v.label = label;
    v.length = length;
    v.potential = pot;
    v.alpha = alpha;
    v.depth = gen;
    v.key = key;
    t.vertices.push_back(std::move(v));
    int id = static_cast<int>(t.vertices.size()) - 1;
    if (parent >= 0) t.vertices[parent].children.push_back(id);
    return id;
  };

  std::deque<int> frontier;
  const std::uint64_t root_key = 0x5851F42D4C957F2DULL;
  if (mode == TreeMode::Cone) {
    add(-1, -1, 0.0, -1, 0.0, -1, root_key);
    int r = add(0, sys.root_label, sys.L_o(), root_pot, sys.labels[sys.root_label].alpha, 0,
                path_key(root_key, 0));
    frontier.push_back(r);
  } else {
    if (sys.root_row.empty())
      throw PreconditionError("full-tree expansion needs a root row");
    int r = add(-1, -1, 0.0, -1, sys.root_alpha, 0, root_key);
    std::uint64_t idx = 0;
    for (int k = 0; k < m; ++k)
      for (int c = 0; c < sys.root_row[k]; ++c) {
        int v = add(r, k, sys.labels[k].length, k, sys.labels[k].alpha, 1,
                    path_key(root_key, idx++));
        frontier.push_back(v);
      }
  }
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop_front();
    const int j = t.vertices[v].label;
    if (sys.row_sum(j) == 0) continue;  // genuine leaf
    if (t.vertices[v].depth >= depth) {
      t.vertices[v].truncated = true;
      t.leaves.push_back(v);
      continue;
    }
    std::uint64_t idx = 0;
    const int gen = t.vertices[v].depth + 1;
    const std::uint64_t key = t.vertices[v].key;
    for (int k = 0; k < m; ++k)
      for (int c = 0; c < sys.M[j][k]; ++c) {
        int w = add(v, k, sys.labels[k].length, k, sys.labels[k].alpha, gen, path_key(key, idx++));
        frontier.push_back(w);
      }
  }
  return t;
}

OrientedTree orient(const TruncatedQuantumTree& tree, int bo_vertex) {
  if (bo_vertex <= 0 || bo_vertex >= static_cast<int>(tree.size()) || !tree.has_edge(bo_vertex))
    throw PreconditionError("orient: b_o must be the incoming edge of a non-root vertex");
  OrientedTree o;
  o.bo_vertex = bo_vertex;
  const std::size_t n = tree.size();
  o.forward.assign(n, 0);
  o.coherent_next.assign(n, -1);
  for (int v : tree.preorder()) {
    int p = tree.vertices[v].parent;
    if (v == bo_vertex) {
      o.forward[v] = 1;
    } else if (p >= 0 && o.forward[p]) {
      o.forward[v] = 1;
      o.coherent_next[v] = p;
    }
  }
  // backward side: walk from the origin of b_o outwards
  const int origin = tree.vertices[bo_vertex].parent;
  std::vector<int> stack{origin};
  std::vector<char> seen(n, 0);
  seen[origin] = 1;
  seen[bo_vertex] = 1;
  while (!stack.empty()) {
    int a = stack.back();
    stack.pop_back();
    std::vector<int> nb = tree.vertices[a].children;
    if (tree.vertices[a].parent >= 0) nb.push_back(tree.vertices[a].parent);
    for (int b : nb)
      if (!seen[b]) {
        seen[b] = 1;
        o.coherent_next[b] = a;
        stack.push_back(b);
      }
  }
  return o;
}

}  // namespace qtree
