#include "qtree/io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace qtree {

namespace {

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw IoError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

int integer(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw IoError(std::string("field '") + key + "' must be an integer");
  return j.at(key).get<int>();
}

const json& required(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw IoError(std::string("missing field '") + key + "'");
  return j.at(key);
}

std::vector<int> int_list(const json& j) {
  if (!j.is_array()) throw IoError("expected an array of integers");
  std::vector<int> out;
  for (const auto& x : j) {
    if (!x.is_number_integer()) throw IoError("expected an array of integers");
    out.push_back(x.get<int>());
  }
  return out;
}

}  // namespace

PotentialSpec potential_from_json(const json& j) {
  if (j.is_null()) return PotentialSpec::zero();
  const auto type = required(j, "type").get<std::string>();
  PotentialSpec w;
  if (type == "zero") {
    w = PotentialSpec::zero();
  } else if (type == "constant") {
    w = PotentialSpec::constant(number(j, "value", 0.0));
  } else if (type == "cosine") {
    w = PotentialSpec::cosine(number(j, "c1", 0.0), number(j, "c2", 0.0));
  } else if (type == "sampled") {
    std::vector<double> v;
    for (const auto& x : required(j, "values")) {
      if (!x.is_number()) throw IoError("sampled potential values must be numbers");
      v.push_back(x.get<double>());
    }
    w = PotentialSpec::sampled(std::move(v));
  } else {
    throw IoError("unknown potential type '" + type + "'");
  }
  w.validate();
  return w;
}

json potential_to_json(const PotentialSpec& w) {
  json j;
  switch (w.kind) {
    case PotentialSpec::Kind::Zero:
      j["type"] = "zero";
      break;
    case PotentialSpec::Kind::Constant:
      j["type"] = "constant";
      j["value"] = w.c1;
      break;
    case PotentialSpec::Kind::Cosine:
      j["type"] = "cosine";
      j["c1"] = w.c1;
      j["c2"] = w.c2;
      break;
    case PotentialSpec::Kind::Sampled:
      j["type"] = "sampled";
      j["values"] = w.samples;
      break;
  }
  return j;
}

QuantumGraphSpec graph_from_json(const json& j) {
  QuantumGraphSpec g;
  g.vertices = int_list(required(j, "vertices"));
  for (const auto& e : required(j, "edges")) {
    GraphEdge ge;
    ge.u = integer(e, "u", 0);
    ge.v = integer(e, "v", 0);
    if (!e.contains("u") || !e.contains("v")) throw IoError("edges need 'u' and 'v'");
    ge.length = number(e, "length", 1.0);
    ge.potential = potential_from_json(e.value("potential", json()));
    g.edges.push_back(ge);
  }
  if (j.contains("couplings")) {
    const auto& c = j.at("couplings");
    if (!c.is_object()) throw IoError("'couplings' must map vertex ids to numbers");
    for (const auto& [k, v] : c.items()) {
      int id = 0;
      try {
        std::size_t pos = 0;
        id = std::stoi(k, &pos);
        if (pos != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw IoError("coupling key '" + k + "' is not a vertex id");
      }
      if (!v.is_number()) throw IoError("couplings must be numbers");
      g.couplings[id] = v.get<double>();
    }
  }
  g.validate();
  return g;
}

json graph_to_json(const QuantumGraphSpec& g) {
  json j;
  j["kind"] = "graph";
  j["vertices"] = g.vertices;
  j["edges"] = json::array();
  for (const auto& e : g.edges)
    j["edges"].push_back({{"u", e.u}, {"v", e.v}, {"length", e.length}, {"potential", potential_to_json(e.potential)}});
  json c = json::object();
  for (const auto& [v, a] : g.couplings) c[std::to_string(v)] = a;
  j["couplings"] = c;
  return j;
}

ConeSystem cone_from_json(const json& j) {
  ConeSystem s;
  for (const auto& l : required(j, "labels")) {
    LabelData d;
    d.length = number(l, "length", 1.0);
    d.alpha = number(l, "alpha", 0.0);
    d.potential = potential_from_json(l.value("potential", json()));
    s.labels.push_back(d);
    s.names.push_back(l.value("name", std::string()));
  }
  for (const auto& row : required(j, "M")) s.M.push_back(int_list(row));
  s.root_label = integer(j, "root_label", 0);
  s.root_length = number(j, "root_length", 0.0);
  if (j.contains("root_potential")) s.root_potential = potential_from_json(j.at("root_potential"));
  s.root_reverse_label = integer(j, "root_reverse_label", -1);
  if (j.contains("root_row")) s.root_row = int_list(j.at("root_row"));
  s.root_alpha = number(j, "root_alpha", 0.0);
  bool named = false;
  for (const auto& n : s.names) named |= !n.empty();
  if (!named) s.names.clear();
  s.validate();
  return s;
}

json cone_to_json(const ConeSystem& s) {
  json j;
  j["kind"] = "cone";
  j["labels"] = json::array();
  for (int k = 0; k < s.size(); ++k) {
    json l;
    if (k < static_cast<int>(s.names.size()) && !s.names[k].empty()) l["name"] = s.names[k];
    l["length"] = s.labels[k].length;
    l["alpha"] = s.labels[k].alpha;
    l["potential"] = potential_to_json(s.labels[k].potential);
    j["labels"].push_back(l);
  }
  j["M"] = s.M;
  j["root_label"] = s.root_label;
  j["root_length"] = s.root_length;
  if (s.root_potential) j["root_potential"] = potential_to_json(*s.root_potential);
  j["root_reverse_label"] = s.root_reverse_label;
  if (!s.root_row.empty()) j["root_row"] = s.root_row;
  j["root_alpha"] = s.root_alpha;
  return j;
}

LoadedSystem system_from_json(const json& j) {
  if (!j.is_object()) throw IoError("graph file must hold a JSON object");
  std::string kind = j.value("kind", std::string());
  if (kind.empty()) kind = j.contains("edges") ? "graph" : j.contains("labels") ? "cone" : "";
  LoadedSystem out;
  if (kind == "graph") {
    out.base = graph_from_json(j);
    out.sys = build_universal_cover_system(*out.base);
  } else if (kind == "cone") {
    out.sys = cone_from_json(j);
  } else {
    throw IoError("graph file: 'kind' must be \"graph\" or \"cone\"");
  }
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

LoadedSystem load_system(const std::string& path) {
  auto j = read_json_file(path);
  try {
    return system_from_json(j);
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw IoError(path + ": " + e.what());
  }
}

json tree_to_json(const TruncatedQuantumTree& t) {
  json j;
  j["mode"] = t.mode == TreeMode::Cone ? "cone" : "full";
  j["depth"] = t.depth;
  j["root_label"] = t.root_label;
  j["root_reverse_label"] = t.root_reverse_label;
  j["potentials"] = json::array();
  for (const auto& w : t.potentials) j["potentials"].push_back(potential_to_json(w));
  j["vertices"] = json::array();
  for (const auto& v : t.vertices)
    j["vertices"].push_back({{"parent", v.parent},
                             {"label", v.label},
                             {"alpha", v.alpha},
                             {"length", v.length},
                             {"potential", v.potential},
                             {"key", v.key},
                             {"truncated", v.truncated}});
  return j;
}

TruncatedQuantumTree tree_from_json(const json& j) {
  TruncatedQuantumTree t;
  const auto mode = required(j, "mode").get<std::string>();
  if (mode != "cone" && mode != "full") throw IoError("tree mode must be cone or full");
  t.mode = mode == "cone" ? TreeMode::Cone : TreeMode::Full;
  t.depth = integer(j, "depth", 0);
  t.root_label = integer(j, "root_label", -1);
  t.root_reverse_label = integer(j, "root_reverse_label", -1);
  for (const auto& w : required(j, "potentials")) t.potentials.push_back(potential_from_json(w));
  const int npot = static_cast<int>(t.potentials.size());
  for (const auto& x : required(j, "vertices")) {
    TreeVertex v;
    v.parent = integer(x, "parent", -1);
    v.label = integer(x, "label", -1);
    v.alpha = number(x, "alpha", 0.0);
    v.length = number(x, "length", 0.0);
    v.potential = integer(x, "potential", -1);
    v.key = x.value("key", std::uint64_t{0});
    v.truncated = x.value("truncated", false);
    const int id = static_cast<int>(t.vertices.size());
    if (v.parent >= id) throw IoError("tree vertices must follow their parents");
    if (v.parent >= 0) {
      if (!(v.length > 0.0)) throw IoError("tree edge lengths must be positive");
      if (v.potential < 0 || v.potential >= npot) throw IoError("tree potential index out of range");
    }
    t.vertices.push_back(std::move(v));
  }
  if (t.vertices.empty() || t.vertices[0].parent != -1) throw IoError("tree must start at its root");
  const int base_depth = t.mode == TreeMode::Cone ? -1 : 0;
  for (std::size_t i = 0; i < t.vertices.size(); ++i) {
    auto& v = t.vertices[i];
    if (i > 0 && v.parent < 0) throw IoError("tree has more than one root");
    v.depth = v.parent < 0 ? base_depth : t.vertices[v.parent].depth + 1;
    if (v.parent >= 0) t.vertices[v.parent].children.push_back(static_cast<int>(i));
    if (v.truncated) t.leaves.push_back(static_cast<int>(i));
  }
  return t;
}

json boundary_to_json(const BoundaryRule& b) {
  json j;
  j["kind"] = boundary_name(b.kind);
  auto list = [](const std::vector<cplx>& v) {
    json a = json::array();
    for (auto z : v) a.push_back(cplx_to_json(z));
    return a;
  };
  if (b.kind == BoundaryKind::Exact) {
    j["rplus"] = list(b.rplus);
    j["children_sum"] = list(b.children_sum);
    j["alpha"] = b.alpha;
  }
  if (b.kind == BoundaryKind::Value) j["value"] = cplx_to_json(b.value);
  return j;
}

BoundaryRule boundary_from_json(const json& j) {
  const auto kind = required(j, "kind").get<std::string>();
  BoundaryRule b;
  if (kind == boundary_name(BoundaryKind::Free)) return BoundaryRule::free();
  if (kind == boundary_name(BoundaryKind::Dirichlet)) return BoundaryRule::dirichlet();
  if (kind == boundary_name(BoundaryKind::Neumann)) return BoundaryRule::neumann();
  if (kind == boundary_name(BoundaryKind::Value)) return BoundaryRule::fixed(cplx_from_json(required(j, "value")));
  if (kind != boundary_name(BoundaryKind::Exact)) throw IoError("unknown boundary kind '" + kind + "'");
  b.kind = BoundaryKind::Exact;
  for (const auto& z : required(j, "rplus")) b.rplus.push_back(cplx_from_json(z));
  for (const auto& z : required(j, "children_sum")) b.children_sum.push_back(cplx_from_json(z));
  for (const auto& a : required(j, "alpha")) b.alpha.push_back(a.get<double>());
  return b;
}

json cplx_to_json(cplx z) { return json::array({z.real(), z.imag()}); }

cplx cplx_from_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw IoError("complex numbers are [re, im] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

cplx parse_complex(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) throw IoError("empty complex number");
  auto fail = [&] { return IoError("cannot parse complex number '" + text + "'"); };
  // split at the last sign that is not part of an exponent
  std::size_t split = std::string::npos;
  for (std::size_t i = 1; i < s.size(); ++i)
    if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') split = i;
  auto real_part = [&](const std::string& t) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(t, &pos);
    } catch (const std::exception&) {
      throw fail();
    }
    if (pos != t.size()) throw fail();
    return x;
  };
  auto imag_part = [&](std::string t) {
    if (t.empty() || (t.back() != 'i' && t.back() != 'j')) throw fail();
    t.pop_back();
    if (t.empty() || t == "+") return 1.0;
    if (t == "-") return -1.0;
    return real_part(t);
  };
  const bool imag = s.back() == 'i' || s.back() == 'j';
  if (split == std::string::npos) return imag ? cplx(0.0, imag_part(s)) : cplx(real_part(s), 0.0);
  if (!imag) throw fail();
  return {real_part(s.substr(0, split)), imag_part(s.substr(split))};
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_complex(cplx z) {
  std::string im = format_double(std::abs(z.imag()));
  return format_double(z.real()) + (std::signbit(z.imag()) ? "-" : "+") + im + "i";
}

void CsvWriter::sep() {
  if (!fresh_) os_ << ',';
  fresh_ = false;
}

void CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) *this << n;
  end_row();
}

CsvWriter& CsvWriter::operator<<(double x) {
  sep();
  os_ << format_double(x);
  return *this;
}

CsvWriter& CsvWriter::operator<<(int x) {
  sep();
  os_ << x;
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::size_t x) {
  sep();
  os_ << x;
  return *this;
}

CsvWriter& CsvWriter::operator<<(cplx z) {
  *this << z.real();
  return *this << z.imag();
}

CsvWriter& CsvWriter::operator<<(const std::string& s) {
  sep();
  if (s.find_first_of(",\"\n") == std::string::npos) {
    os_ << s;
  } else {
    os_ << '"';
    for (char c : s) os_ << (c == '"' ? "\"\"" : std::string(1, c));
    os_ << '"';
  }
  return *this;
}

void CsvWriter::end_row() {
  os_ << '\n';
  fresh_ = true;
}

std::vector<std::string> complex_columns(const std::string& name) { return {name + "_re", name + "_im"}; }

}  // namespace qtree
