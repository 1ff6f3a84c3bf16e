#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qtree/errors.hpp"
#include "qtree/graph.hpp"
#include "qtree/green.hpp"

namespace qtree {

using json = nlohmann::ordered_json;

// Potentials are tagged unions:
//   {"type": "zero"}
//   {"type": "constant", "value": c}
//   {"type": "cosine", "c1": a, "c2": b}     a + b cos(2 pi x / L)
//   {"type": "sampled", "values": [...]}     uniform grid over [0, L]
PotentialSpec potential_from_json(const json& j);
json potential_to_json(const PotentialSpec& w);

// A finite base graph:
//   {"kind": "graph", "vertices": [0, 1, ...],
//    "edges": [{"u": 0, "v": 1, "length": 1.0, "potential": {...}}, ...],
//    "couplings": {"0": 0.5, ...}}
// or a cone system (labels 0-based):
//   {"kind": "cone", "labels": [{"length": 1.0, "alpha": 0.0, "potential": {...}}],
//    "M": [[2]], "root_label": 0, "root_length": 0.0, "root_potential": {...},
//    "root_reverse_label": 0, "root_row": [3], "root_alpha": 0.0}
// Missing optional fields take the ConeSystem defaults; "kind" may be
// omitted when "edges" or "labels" identifies the form.
QuantumGraphSpec graph_from_json(const json& j);
json graph_to_json(const QuantumGraphSpec& g);
ConeSystem cone_from_json(const json& j);
json cone_to_json(const ConeSystem& s);

struct LoadedSystem {
  ConeSystem sys;
  std::optional<QuantumGraphSpec> base;  // set for "kind": "graph"
};

// Throws IoError on unreadable files or malformed JSON, PreconditionError
// on invalid data.
LoadedSystem load_system(const std::string& path);
LoadedSystem system_from_json(const json& j);
json read_json_file(const std::string& path);

// Explicit trees, for replay cases. Children, leaves and depths are rebuilt
// from the parent links.
json tree_to_json(const TruncatedQuantumTree& t);
TruncatedQuantumTree tree_from_json(const json& j);

json boundary_to_json(const BoundaryRule& b);
BoundaryRule boundary_from_json(const json& j);

json cplx_to_json(cplx z);  // [re, im]
cplx cplx_from_json(const json& j);

// "3+0.5i", "-2", "0.5i", "1e-3-2i", "i".
cplx parse_complex(const std::string& s);
std::string format_complex(cplx z);
std::string format_double(double x);  // round-trip precision

class IoError : public Error {
 public:
  using Error::Error;
};

// Rows of numbers and short strings; complex values take two columns.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void header(const std::vector<std::string>& names);
  CsvWriter& operator<<(double x);
  CsvWriter& operator<<(int x);
  CsvWriter& operator<<(std::size_t x);
  CsvWriter& operator<<(cplx z);
  CsvWriter& operator<<(const std::string& s);
  CsvWriter& operator<<(const char* s) { return *this << std::string(s); }
  void end_row();

 private:
  void sep();
  std::ostream& os_;
  bool fresh_ = true;
};

// "name_re", "name_im".
std::vector<std::string> complex_columns(const std::string& name);

}  // namespace qtree
