#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qtree/potential.hpp"

namespace qtree {

// Potential oriented from u to v.
struct GraphEdge {
  int u = 0;
  int v = 0;
  double length = 1.0;
  PotentialSpec potential;
};

struct QuantumGraphSpec {
  std::vector<int> vertices;
  std::vector<GraphEdge> edges;
  std::map<int, double> couplings;  // missing vertices couple with 0

  double coupling(int v) const;
  int index_of(int vertex) const;  // position in `vertices`, -1 if absent
  // Throws PreconditionError on loops, multi-edges, bad lengths, disconnection.
  void validate() const;
  std::vector<int> degrees() const;  // aligned with `vertices`
};

struct LabelData {
  double length = 1.0;
  PotentialSpec potential;  // oriented along the labelled edge
  double alpha = 0.0;       // coupling at the edge's terminus
};

// Tree of finite cone type in the twisted view. Labels are 0-based.
struct ConeSystem {
  std::vector<LabelData> labels;
  std::vector<std::vector<int>> M;  // M[j][k]: type-k children of a type-j vertex

  int root_label = 0;
  double root_length = 0.0;  // L_o; 0 means the root label's length
  std::optional<PotentialSpec> root_potential;
  int root_reverse_label = -1;  // label of the reversed root edge, -1 if unknown

  // Children of a vertex root (full trees); empty when unavailable.
  std::vector<int> root_row;
  double root_alpha = 0.0;

  std::vector<std::string> names;  // optional, e.g. "0>1" for cover labels

  int size() const { return static_cast<int>(labels.size()); }
  int row_sum(int j) const;
  double L_o() const;
  const PotentialSpec& W_o() const;
  void validate() const;
};

struct ConditionReport {
  bool c0 = true;
  bool c1_star = true;
  bool c2 = true;
  int c0_row = -1;                    // a row with sum < 2
  std::pair<int, int> c1_pair{-1, -1};  // (k, l) with l unreachable from k
  int c2_row = -1;                    // a row without a dominating child label
  std::vector<int> c2_choice;         // k' per row, -1 when none
  std::string summary() const;        // 1-based labels, as printed to users
};

// Labels = directed base edges, merged by partition refinement on
// (length, oriented potential, terminal coupling, child-label multiset).
ConeSystem build_universal_cover_system(const QuantumGraphSpec& base);

ConditionReport check_conditions(const ConeSystem& sys);

// splitmix64 step; also used to key per-vertex random streams.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t path_key(std::uint64_t parent_key, std::uint64_t child_index);

enum class TreeMode {
  Cone,  // vertex 0 is the origin of the root edge b_o, vertex 1 its terminus
  Full   // vertex 0 is a genuine vertex with children given by root_row
};

struct TreeVertex {
  int parent = -1;
  int depth = 0;       // generation; the cone root and full-tree root have 0
  int label = -1;      // label of the incoming edge
  double alpha = 0.0;  // coupling at this vertex
  double length = 0.0;  // incoming edge length (0 when there is no incoming edge)
  int potential = -1;   // index into TruncatedQuantumTree::potentials
  std::vector<int> children;
  std::uint64_t key = 0;   // hash of the root-to-vertex path
  bool truncated = false;  // leaf cut off by the depth limit
};

struct TruncatedQuantumTree {
  TreeMode mode = TreeMode::Cone;
  int depth = 0;
  std::vector<TreeVertex> vertices;
  std::vector<PotentialSpec> potentials;
  std::vector<int> leaves;  // truncated leaves
  int root_label = -1;
  int root_reverse_label = -1;

  std::size_t size() const { return vertices.size(); }
  bool has_edge(int v) const { return vertices[v].parent >= 0; }
  const PotentialSpec& potential_of(int v) const { return potentials[vertices[v].potential]; }
  // Vertices of the tree proper (Cone mode excludes the origin point of b_o).
  std::size_t cone_size() const { return mode == TreeMode::Cone ? size() - 1 : size(); }
  // Vertex path from a to b through their lowest common ancestor.
  std::vector<int> path_between(int a, int b) const;
  // Parents before children.
  std::vector<int> preorder() const;
};

TruncatedQuantumTree expand_truncated_tree(const ConeSystem& sys, int depth,
                                           TreeMode mode = TreeMode::Cone,
                                           std::size_t vertex_cap = 1000000);

// Coherent view with respect to b_o = e(bo_vertex): vertices in the forward
// cone keep their parents; the others point towards b_o.
struct OrientedTree {
  int bo_vertex = 1;
  std::vector<char> forward;  // vertex lies in T^+ (terminus side of b_o)
  std::vector<int> coherent_next;  // neighbour one step towards b_o, -1 at the ends of b_o
};
OrientedTree orient(const TruncatedQuantumTree& tree, int bo_vertex);

}  // namespace qtree
