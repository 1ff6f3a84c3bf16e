#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "manifest.hpp"
#include "qtree/cone_solver.hpp"
#include "qtree/errors.hpp"
#include "qtree/fixtures.hpp"
#include "qtree/green.hpp"
#include "qtree/io.hpp"
#include "qtree/oracle.hpp"
#include "qtree/parallel.hpp"
#include "qtree/perturbation.hpp"

#ifndef QTREE_VERSION
#define QTREE_VERSION "0.0.0"
#endif

namespace qtree::cli {

namespace fs = std::filesystem;

namespace {

// Raised for bad flag combinations found after parsing.
struct UsageError : Error {
  using Error::Error;
};

// A verification that ran but did not pass.
struct CheckFailed : Error {
  using Error::Error;
};

struct Common {
  std::string out;
  std::string manifest;
  int workers = 0;
};

struct Run {
  std::string command;
  CLI::App* app = nullptr;
  std::vector<std::string> argv;
  Common common;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  int workers() const {
    if (const char* env = std::getenv("QTREE_WORKERS"); env && std::atoi(env) > 0) return worker_count();
    return common.workers > 0 ? common.workers : worker_count();
  }
  std::string out_path() const { return common.out.empty() ? command + ".csv" : common.out; }
  // A sibling of the main output: spectrum.csv -> spectrum.bands.csv.
  std::string aux_path(const std::string& tag) const {
    fs::path p(out_path());
    return (p.parent_path() / (p.stem().string() + "." + tag + p.extension().string())).string();
  }
  std::string manifest_path() const {
    if (!common.manifest.empty()) return common.manifest;
    fs::path p(out_path());
    return (p.parent_path() / (p.stem().string() + ".manifest.json")).string();
  }
  std::ofstream open(const std::string& path) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    outputs.push_back(path);
    return f;
  }
};

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Main CSV output (default <command>.csv)");
  sub->add_option("--manifest", c.manifest, "Run manifest (default <out stem>.manifest.json)");
  sub->add_option("--workers", c.workers, "Worker threads, 0 = available parallelism; QTREE_WORKERS overrides")
      ->check(CLI::NonNegativeNumber);
}

std::vector<cplx> parse_z_list(const std::vector<std::string>& items) {
  std::vector<cplx> zs;
  for (const auto& s : items) zs.push_back(parse_complex(s));
  return zs;
}

BoundaryRule parse_boundary(const std::string& name, const ConeSystem* sys, cplx z) {
  if (name == "free") return BoundaryRule::free();
  if (name == "dirichlet") return BoundaryRule::dirichlet();
  if (name == "neumann") return BoundaryRule::neumann();
  if (name == "exact") {
    if (!sys) throw UsageError("the exact boundary needs a cone system");
    return exact_boundary(*sys, z);
  }
  throw UsageError("unknown boundary '" + name + "'");
}

// Exact leaves without a reversed root label: the back seed falls back to
// the half-line value.
WTOptions wt_options(const TruncatedQuantumTree& tree, const BoundaryRule& b, std::ostream& err) {
  WTOptions opt;
  if (b.kind == BoundaryKind::Exact && tree.mode == TreeMode::Cone && tree.root_reverse_label < 0) {
    err << "warning: no root_reverse_label; the back seed of the root edge is free\n";
    opt.back = BoundaryRule::free();
  }
  return opt;
}

void require_conditions(const ConeSystem& sys, std::ostream& err) {
  auto rep = check_conditions(sys);
  if (!rep.c1_star) throw ConditionError("condition check failed: " + rep.summary());
  if (!rep.c0 || !rep.c2) err << "warning: " << rep.summary() << '\n';
}

// ---------------------------------------------------------------- spectrum

struct SpectrumOpts {
  std::string graph;
  double lmin = 0.0;
  double lmax = 0.0;
  int grid = 0;
  double eta0 = 1e-2;
  double threshold = 1e-6;
  double delta_d = 1e-6;
  bool no_refine = false;
};

void spectrum(Run& run, const SpectrumOpts& o) {
  if (!(o.lmax > o.lmin)) throw UsageError("--lmax must exceed --lmin");
  run.inputs.push_back(o.graph);
  const auto loaded = load_system(o.graph);
  const auto& sys = loaded.sys;
  require_conditions(sys, *run.err);

  std::vector<double> grid(o.grid);
  for (int i = 0; i < o.grid; ++i) grid[i] = o.lmin + (o.lmax - o.lmin) * i / (o.grid - 1);
  BandOptions bo;
  bo.workers = run.workers();
  bo.im_threshold = o.threshold;
  bo.refine = !o.no_refine;
  bo.axis.eta0 = o.eta0;
  bo.axis.delta_D = o.delta_d;
  const auto rep = detect_bands(sys, grid, bo);

  const int m = sys.size();
  auto f = run.open(run.out_path());
  CsvWriter csv(f);
  std::vector<std::string> cols{"lambda", "eta_final"};
  for (int j = 1; j <= m; ++j) cols.push_back("im_h_" + std::to_string(j));
  for (int j = 1; j <= m; ++j) cols.push_back("im_rplus_" + std::to_string(j));
  for (const auto& c : complex_columns("green_root")) cols.push_back(c);
  for (const char* c : {"band_id", "guard", "exceptional"}) cols.push_back(c);
  csv.header(cols);
  const double nan = std::nan("");
  for (const auto& r : rep.rows) {
    csv << r.lambda << r.eta_final;
    for (int j = 0; j < m; ++j) csv << (j < static_cast<int>(r.im_h.size()) ? r.im_h[j] : nan);
    for (int j = 0; j < m; ++j) csv << (j < static_cast<int>(r.im_rplus.size()) ? r.im_rplus[j] : nan);
    csv << r.green_root << r.band_id << int(r.guard) << int(r.exceptional);
    csv.end_row();
  }

  auto fb = run.open(run.aux_path("bands"));
  CsvWriter bands(fb);
  bands.header({"kind", "lo", "hi"});
  for (const auto& b : rep.bands) {
    bands << "band" << b.lo << b.hi;
    bands.end_row();
  }
  for (double x : rep.exceptional) {
    bands << "exceptional" << x << x;
    bands.end_row();
  }
  for (double x : rep.guarded) {
    bands << "guarded" << x << x;
    bands.end_row();
  }

  auto& out = *run.out;
  out << rep.bands.size() << " band(s) on [" << o.lmin << ", " << o.lmax << "]\n";
  for (const auto& b : rep.bands) out << "  [" << format_double(b.lo) << ", " << format_double(b.hi) << "]\n";
  if (!rep.exceptional.empty()) {
    out << "exceptional points:";
    for (double x : rep.exceptional) out << ' ' << x;
    out << '\n';
  }
  if (!rep.guarded.empty())
    out << rep.guarded.size() << " grid point(s) skipped near Dirichlet values (listed in "
        << run.aux_path("bands") << ")\n";
}

// ------------------------------------------------------------------- green

struct GreenOpts {
  std::string graph;
  std::string z;
  int depth = 8;
  std::string boundary = "exact";
  bool full = false;
};

void green(Run& run, const GreenOpts& o) {
  run.inputs.push_back(o.graph);
  const auto loaded = load_system(o.graph);
  const auto& sys = loaded.sys;
  const cplx z = parse_complex(o.z);
  if (z.imag() < 0.0) throw PreconditionError("green: needs Im z >= 0");
  if (o.boundary == "exact") require_conditions(sys, *run.err);
  const auto tree = expand_truncated_tree(sys, o.depth, o.full ? TreeMode::Full : TreeMode::Cone);
  const auto b = parse_boundary(o.boundary, &sys, z);
  const auto s = wt_recursion(tree, z, b, wt_options(tree, b, *run.err));

  auto f = run.open(run.out_path());
  CsvWriter csv(f);
  std::vector<std::string> cols{"vertex", "parent", "depth", "label", "length", "alpha"};
  for (const char* n : {"rplus_t", "rplus_o", "rminus_o", "rminus_t", "zeta", "zeta_hat", "green"})
    for (const auto& c : complex_columns(n)) cols.push_back(c);
  cols.push_back("pole");
  csv.header(cols);
  const cplx nan(std::nan(""), std::nan(""));
  for (std::size_t v = 0; v < tree.size(); ++v) {
    const auto& tv = tree.vertices[v];
    const bool edge = tree.has_edge(static_cast<int>(v));
    csv << static_cast<int>(v) << tv.parent << tv.depth << (tv.label < 0 ? -1 : tv.label + 1) << tv.length
        << tv.alpha;
    for (const auto* a : {&s.rp_t, &s.rp_o, &s.rm_o, &s.rm_t, &s.zf, &s.zb}) csv << (edge ? (*a)[v] : nan);
    const auto g = green_diag(s, static_cast<int>(v));
    csv << g.value << int(g.pole);
    csv.end_row();
  }
  *run.out << tree.size() << " vertices, boundary " << o.boundary << ", G(root) = "
           << format_complex(green_diag(s, tree.mode == TreeMode::Cone ? 1 : 0).value) << '\n';
}

// ----------------------------------------------------------------- perturb

struct PerturbOpts {
  std::string graph;
  std::vector<double> lambda;
  std::string bands;
  std::vector<double> eta;
  double eta0 = 0.1;
  std::vector<double> eps{0.02};
  std::size_t samples = 1000;
  int depth = 8;
  std::uint64_t seed = 1;
  double moment = 2.0;
  double s = 2.0;
  std::string family = "uniform";
  double beta = 1.0;
  bool fixed_lengths = false;
  bool fixed_couplings = false;
};

std::vector<Interval> read_bands(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::vector<Interval> out;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string kind, lo, hi;
    std::getline(ss, kind, ',');
    std::getline(ss, lo, ',');
    std::getline(ss, hi, ',');
    if (kind != "band") continue;
    try {
      out.push_back({std::stod(lo), std::stod(hi)});
    } catch (const std::exception&) {
      throw IoError(path + ": malformed band row '" + line + "'");
    }
  }
  return out;
}

void perturb(Run& run, const PerturbOpts& o) {
  run.inputs.push_back(o.graph);
  run.seed = o.seed;
  const auto loaded = load_system(o.graph);
  const auto& sys = loaded.sys;
  require_conditions(sys, *run.err);

  std::vector<double> lambdas = o.lambda;
  if (lambdas.empty()) {
    if (o.bands.empty()) throw UsageError("give --lambda or --bands");
    run.inputs.push_back(o.bands);
    const auto bands = read_bands(o.bands);
    if (bands.empty()) throw PreconditionError(o.bands + " lists no bands");
    auto widest = *std::max_element(bands.begin(), bands.end(),
                                    [](const Interval& a, const Interval& b) { return a.hi - a.lo < b.hi - b.lo; });
    lambdas.push_back(0.5 * (widest.lo + widest.hi));
    *run.out << "lambda " << format_double(lambdas[0]) << " (middle of the widest band)\n";
  }
  std::vector<double> eps = o.eps;
  std::sort(eps.begin(), eps.end());
  for (double e : eps)
    if (e < 0.0) throw UsageError("--eps values must be >= 0");
  // default: eta0 and its half, for the stability column
  const std::vector<double> etas = o.eta.empty() ? std::vector<double>{o.eta0, 0.5 * o.eta0} : o.eta;
  for (double h : etas) {
    if (h < 0.0) throw UsageError("--eta values must be >= 0");
    if (h > o.eta0) *run.err << "warning: eta " << format_double(h) << " above eta0 " << format_double(o.eta0) << "\n";
  }

  EnsembleConfig cfg;
  cfg.family = parse_family(o.family);
  cfg.beta = o.beta;
  cfg.seed = o.seed;
  cfg.perturb_lengths = !o.fixed_lengths;
  cfg.perturb_couplings = !o.fixed_couplings;
  cfg.eps = eps.back();
  check_ensemble(sys, cfg);
  for (double l : lambdas) check_dirichlet_thickening(sys, eps.back(), l);

  SampleOptions so;
  so.depth = o.depth;
  so.workers = run.workers();

  struct Row {
    double lambda, eta, eps;
    int label;
    MeanEstimate gamma;
    BootstrapEstimate inv;
    double decay;
    int fit_points;
  };
  std::vector<Row> rows;
  const int m = sys.size();
  for (double l : lambdas)
    for (double h : etas) {
      const cplx z(l, h);
      for (double e : eps) {
        cfg.eps = e;
        const auto gs = gamma_statistics(sys, cfg, z, o.depth, o.samples, o.moment, so);
        const auto im = inverse_moments(sys, cfg, {z}, o.depth, o.samples, o.s, o.moment, so);
        double lo = INFINITY, hi = 0.0;
        for (auto H : gs.H) {
          lo = std::min(lo, H.imag());
          hi = std::max(hi, H.imag());
        }
        if (!(hi > 0.0)) lo = 1e-6, hi = 1.0;
        std::vector<double> xs;
        const int nx = 200;
        const double a = std::log(1e-4 * lo), b = std::log(4.0 * hi);
        for (int i = 0; i < nx; ++i) xs.push_back(std::exp(a + (b - a) * i / (nx - 1)));
        const auto fd = f_distribution(sys, cfg, z, xs, o.samples, so);
        for (int j = 0; j < m; ++j) {
          const MomentRow* mr = nullptr;
          for (const auto& r : im.rows)
            if (r.label == j) mr = &r;
          rows.push_back({l, h, e, j, gs.gamma_p[j], mr ? mr->inv_im : BootstrapEstimate{},
                          fd.fit_points >= 2 ? fd.decay_exponent : std::nan(""), fd.fit_points});
        }
      }
    }

  auto f = run.open(run.out_path());
  CsvWriter csv(f);
  csv.header({"lambda", "eta", "eps", "label", "p", "s", "samples", "depth", "gamma_p", "gamma_p_stderr",
              "inv_im_s", "inv_im_s_stderr", "inv_im_s_lo", "inv_im_s_hi", "f_decay_exponent", "f_fit_points",
              "gamma_monotone_in_eps", "inv_im_s_stable_half_eta"});
  for (const auto& r : rows) {
    // non-decreasing in eps along the sweep at fixed (lambda, eta, label)
    std::string mono;
    if (eps.size() > 1) {
      bool ok = true;
      double prev = -INFINITY;
      for (const auto& q : rows)
        if (q.lambda == r.lambda && q.eta == r.eta && q.label == r.label) {
          ok = ok && q.gamma.mean >= prev;
          prev = q.gamma.mean;
        }
      mono = ok ? "1" : "0";
    }
    // compared with the row at eta/2: |difference| within two CI half-widths
    std::string stable;
    for (const auto& q : rows)
      if (q.lambda == r.lambda && q.eps == r.eps && q.label == r.label && q.eta == 0.5 * r.eta)
        stable = std::abs(q.inv.mean - r.inv.mean) <= 2.0 * std::max(q.inv.half_width(), r.inv.half_width()) ? "1" : "0";
    csv << r.lambda << r.eta << r.eps << r.label + 1 << o.moment << o.s << o.samples << o.depth << r.gamma.mean
        << r.gamma.stderr_ << r.inv.mean << r.inv.stderr_ << r.inv.lo << r.inv.hi << r.decay << r.fit_points << mono
        << stable;
    csv.end_row();
  }
  *run.out << rows.size() << " row(s), " << o.samples << " samples each\n";
}

// ------------------------------------------------------------------ verify

struct VerifyOpts {
  std::string graph;
  std::string fixture;
  std::string replay;
  std::vector<std::string> z{"1+0.5i", "3+0.2i", "8+1i", "-1+0.4i", "20+0.3i"};
  int depth = 8;
  int count = 10;
  std::uint64_t seed = 1;
  int paths = 64;
  double tol = 1e-8;
  double current_tol = 1e-10;
  std::string boundary;
  std::string case_out;
  std::string save_case;
};

struct VerifyCase {
  std::string name;
  TruncatedQuantumTree tree;
  std::optional<ConeSystem> sys;
  json overrides = json::array();
};

std::vector<cplx>& state_field(WTState& s, const std::string& field) {
  if (field == "rplus_t") return s.rp_t;
  if (field == "rplus_o") return s.rp_o;
  if (field == "rminus_o") return s.rm_o;
  if (field == "rminus_t") return s.rm_t;
  if (field == "zeta") return s.zf;
  if (field == "zeta_hat") return s.zb;
  throw IoError("unknown override field '" + field + "'");
}

json replay_case(const VerifyCase& c, cplx z, const BoundaryRule& b, const std::string& error) {
  json j;
  j["name"] = c.name;
  j["z"] = cplx_to_json(z);
  j["boundary"] = boundary_to_json(b);
  j["error"] = error;
  j["overrides"] = c.overrides;
  j["tree"] = tree_to_json(c.tree);
  return j;
}

void verify(Run& run, const VerifyOpts& o) {
  const int sources = !o.graph.empty() + !o.fixture.empty() + !o.replay.empty();
  if (sources != 1) throw UsageError("give exactly one of --graph, --fixture, --replay");

  std::vector<VerifyCase> cases;
  std::vector<cplx> zs = parse_z_list(o.z);
  std::string boundary = o.boundary;
  std::optional<BoundaryRule> replay_boundary;
  if (!o.graph.empty()) {
    run.inputs.push_back(o.graph);
    auto loaded = load_system(o.graph);
    cases.push_back({fs::path(o.graph).stem().string(), expand_truncated_tree(loaded.sys, o.depth), loaded.sys});
    if (boundary.empty()) boundary = "exact";
  } else if (o.fixture == "free-line") {
    auto sys = regular_tree_system(1);
    cases.push_back({"free-line", expand_truncated_tree(sys, o.depth), sys});
    if (boundary.empty()) boundary = "free";
  } else if (o.fixture == "random") {
    run.seed = o.seed;
    for (int i = 0; i < o.count; ++i) {
      auto r = random_tree(o.seed + i, std::min(o.depth, 8));
      cases.push_back({"random-" + std::to_string(o.seed + i), std::move(r.tree), r.sys});
    }
    if (boundary.empty()) boundary = "neumann";
  } else if (!o.replay.empty()) {
    run.inputs.push_back(o.replay);
    const auto j = read_json_file(o.replay);
    try {
      VerifyCase c{j.value("name", std::string("replay")), tree_from_json(j.at("tree")), std::nullopt,
                   j.value("overrides", json::array())};
      zs = {cplx_from_json(j.at("z"))};
      replay_boundary = boundary_from_json(j.at("boundary"));
      cases.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw IoError(o.replay + ": " + e.what());
    }
  } else {
    throw UsageError("--fixture must be free-line or random");
  }

  auto f = run.open(run.out_path());
  CsvWriter csv(f);
  std::vector<std::string> cols{"case"};
  for (const auto& c : complex_columns("z")) cols.push_back(c);
  for (const char* c : {"identity", "max_residual", "where", "tolerance", "pass"}) cols.push_back(c);
  csv.header(cols);

  if (!o.save_case.empty()) {
    const auto& c = cases.front();
    const auto b = replay_boundary ? *replay_boundary
                                   : parse_boundary(boundary, c.sys ? &*c.sys : nullptr, zs.front());
    auto cf = run.open(o.save_case);
    cf << replay_case(c, zs.front(), b, "").dump(1) << '\n';
  }

  std::vector<std::string> failures;
  for (auto& c : cases)
    for (cplx z : zs) {
      const auto b = replay_boundary ? *replay_boundary : parse_boundary(boundary, c.sys ? &*c.sys : nullptr, z);
      WTState s;
      try {
        s = wt_recursion(c.tree, z, b, wt_options(c.tree, b, *run.err));
      } catch (const HerglotzViolation& e) {
        const std::string path = o.case_out.empty() ? run.aux_path("case") : o.case_out;
        auto cf = run.open(path);
        cf << replay_case(c, z, b, e.what()).dump(1) << '\n';
        throw HerglotzViolation(std::string(e.what()) + " (case " + c.name + " at z = " + format_complex(z) +
                                " written to " + path + ")");
      }
      for (const auto& ov : c.overrides) {
        auto& field = state_field(s, ov.at("field").get<std::string>());
        const auto v = ov.at("vertex").get<std::size_t>();
        if (v >= field.size()) throw IoError("override vertex out of range");
        field[v] = cplx_from_json(ov.at("value"));
      }
      const auto rep = identity_suite(s, o.paths, o.seed);
      for (const auto& r : rep.residuals) {
        const bool pass = r.max_residual < o.tol;
        csv << c.name << z << r.name << r.max_residual << r.where << o.tol << int(pass);
        csv.end_row();
        if (!pass)
          failures.push_back(r.name + " on " + c.name + " at z = " + format_complex(z) + " (residual " +
                             format_double(r.max_residual) + " at vertex " + std::to_string(r.where) + ")");
      }
      if (z.imag() > 0.0) {
        const bool pass = rep.current_slack >= -o.current_tol;
        csv << c.name << z << "current" << rep.current_slack << rep.current_where << -o.current_tol << int(pass);
        csv.end_row();
        if (!pass) failures.push_back("current relation on " + c.name + " at z = " + format_complex(z));
      }
    }
  *run.out << cases.size() << " case(s) x " << zs.size() << " z value(s): " << failures.size() << " failure(s)\n";
  for (const auto& s : failures) *run.err << "FAILED " << s << '\n';
  if (!failures.empty()) throw CheckFailed("verify: " + std::to_string(failures.size()) + " identity check(s) failed");
}

// ------------------------------------------------------------------ oracle

struct OracleOpts {
  std::string kind;
  std::string graph;
  std::string z = "2+0.5i";
  int depth = 4;
  double step = 1.0 / 32;
  std::string boundary = "free";
  double lmin = 0.0;
  double lmax = 40.0;
  int grid = 2000;
  int degree = 3;
  std::vector<double> lengths{1.0};
  double alpha = 0.0;
  int q = 2;
  double length = 1.0;
};

void oracle(Run& run, const OracleOpts& o) {
  auto f = run.open(run.out_path());
  CsvWriter csv(f);
  auto& out = *run.out;
  if (o.kind == "green") {
    if (o.graph.empty()) throw UsageError("oracle green needs --graph");
    run.inputs.push_back(o.graph);
    const auto loaded = load_system(o.graph);
    const cplx z = parse_complex(o.z);
    const auto tree = expand_truncated_tree(loaded.sys, o.depth);
    OracleOptions opt;
    opt.step = o.step;
    opt.boundary = parse_boundary(o.boundary, &loaded.sys, z);
    const auto wo = wt_options(tree, opt.boundary, *run.err);
    opt.back = wo.back;
    const auto s = wt_recursion(tree, z, opt.boundary, wo);
    const auto og = oracle_green(tree, z, opt);
    std::vector<std::string> cols{"vertex"};
    for (const char* n : {"green_recursion", "green_oracle", "green_coarse", "green_fine"})
      for (const auto& c : complex_columns(n)) cols.push_back(c);
    cols.push_back("abs_diff");
    csv.header(cols);
    double worst = 0.0;
    for (std::size_t i = 0; i < og.vertices.size(); ++i) {
      const int v = og.vertices[i];
      const cplx g = green_diag(s, v).value;
      const double d = std::abs(g - og.diag[i]);
      worst = std::max(worst, d);
      csv << v << g << og.diag[i] << og.diag_coarse[i] << og.diag_fine[i] << d;
      csv.end_row();
    }
    out << og.vertices.size() << " vertices, " << og.unknowns << " unknowns, max |diff| " << format_double(worst)
        << '\n';
  } else if (o.kind == "reduction") {
    if (o.graph.empty()) throw UsageError("oracle reduction needs --graph");
    run.inputs.push_back(o.graph);
    const auto loaded = load_system(o.graph);
    if (!loaded.base) throw UsageError("oracle reduction needs a finite graph (\"kind\": \"graph\")");
    const auto zeros = reduction_zeros(*loaded.base, o.lmin, o.lmax, o.grid);
    csv.header({"lambda", "multiplicity", "residual", "cos_sqrt_lambda"});
    for (const auto& r : zeros) {
      csv << r.lambda << r.multiplicity << r.residual << std::cos(std::sqrt(r.lambda));
      csv.end_row();
    }
    out << zeros.size() << " reduction zero(s) on [" << o.lmin << ", " << o.lmax << "]\n";
  } else if (o.kind == "star") {
    std::vector<PotentialSpec> w(o.lengths.size(), PotentialSpec::zero());
    const auto sb = star_bottom(o.degree, o.lengths, w, o.alpha);
    csv.header({"degree", "alpha", "E0", "ED", "bracket_steps"});
    csv << o.degree << o.alpha << sb.E0 << sb.ED << sb.trace.size();
    csv.end_row();
    out << "E0 = " << format_double(sb.E0) << ", smallest Dirichlet value " << format_double(sb.ED) << '\n';
  } else if (o.kind == "regular") {
    const cplx z = parse_complex(o.z);
    const auto r = regular_tree_reference(o.q, o.length, o.alpha, z);
    std::vector<std::string> cols{"q", "L", "alpha"};
    for (const char* n : {"z", "h", "zeta", "rplus", "green"})
      for (const auto& c : complex_columns(n)) cols.push_back(c);
    cols.push_back("discriminant");
    cols.push_back("in_band");
    csv.header(cols);
    csv << o.q << o.length << o.alpha << z << r.h << r.zeta << r.rplus << r.green << r.discriminant << int(r.in_band);
    csv.end_row();
    out << "G(v,v) = " << format_complex(r.green) << (r.in_band ? " (in band)" : "") << '\n';
  } else {
    throw UsageError("--kind must be green, reduction, star or regular");
  }
}

// ------------------------------------------------------------------- rerun

struct RerunOpts {
  std::string manifest;
  std::string outdir;
};

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool nested);

int rerun(const RerunOpts& o, std::ostream& out, std::ostream& err) {
  const auto m = RunManifest::read(o.manifest);
  auto argv = m.argv;
  std::string new_manifest;
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--out" || argv[i] == "--manifest") {
      if (!o.outdir.empty()) argv[i + 1] = (fs::path(o.outdir) / fs::path(argv[i + 1]).filename()).string();
      if (argv[i] == "--manifest") new_manifest = argv[i + 1];
    }
  if (new_manifest.empty()) throw IoError(o.manifest + ": argv lacks --manifest");
  bool inputs_ok = true;
  for (const auto& f : m.inputs) {
    const bool same = fs::exists(f.path) && sha256_file(f.path) == f.sha256;
    if (!same) err << "input changed: " << f.path << '\n';
    inputs_ok = inputs_ok && same;
  }
  const int code = run_impl(argv, out, err, true);
  if (code != 0) return code;
  const auto again = RunManifest::read(new_manifest);
  bool ok = inputs_ok && again.outputs.size() == m.outputs.size();
  for (std::size_t i = 0; i < std::min(m.outputs.size(), again.outputs.size()); ++i) {
    const bool same = m.outputs[i].sha256 == again.outputs[i].sha256;
    out << (same ? "identical " : "DIFFERENT ") << again.outputs[i].path << '\n';
    ok = ok && same;
  }
  if (!ok) {
    err << "rerun: outputs do not reproduce the manifest\n";
    return 2;
  }
  return 0;
}

json flag_values(const CLI::App* sub) {
  json flags = json::object();
  for (const auto* opt : sub->get_options()) {
    const auto name = opt->get_name();
    if (name == "--help" || name == "-h") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      std::string v;
      for (std::size_t i = 0; i < r.size(); ++i) v += (i ? "," : "") + r[i];
      flags[name] = v;
    } else {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

// The user's argv with --out and --manifest pinned to the paths used.
std::vector<std::string> normalized_argv(const std::vector<std::string>& args, const Run& run) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a == "--out" || a == "--manifest") {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0 || a.rfind("--manifest=", 0) == 0) continue;
    v.push_back(a);
  }
  v.insert(v.end(), {"--out", run.out_path(), "--manifest", run.manifest_path()});
  return v;
}

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool nested) {
  CLI::App app{"Spectra, Green's functions and random perturbations of quantum trees of finite cone type", "qtree"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", QTREE_VERSION);
  Common common;

  SpectrumOpts sp;
  auto* c_sp = app.add_subcommand("spectrum", "Band structure on a lambda grid");
  c_sp->add_option("--graph", sp.graph, "Graph or cone-system JSON")->required();
  c_sp->add_option("--lmin", sp.lmin, "Lower end of the grid");
  c_sp->add_option("--lmax", sp.lmax, "Upper end of the grid")->required();
  c_sp->add_option("--grid", sp.grid, "Number of grid points (>= 2)")->required()->check(CLI::Range(2, 100000000));
  c_sp->add_option("--eta0", sp.eta0, "Largest eta of the approach to the axis");
  c_sp->add_option("--threshold", sp.threshold, "Im h above which a point is in a band");
  c_sp->add_option("--delta-d", sp.delta_d, "Dirichlet guard width");
  c_sp->add_flag("--no-refine", sp.no_refine, "Skip bisection of band endpoints");
  add_common(c_sp, common);

  GreenOpts gr;
  auto* c_gr = app.add_subcommand("green", "WT functions, multipliers and G(v,v) on a truncated tree");
  c_gr->add_option("--graph", gr.graph, "Graph or cone-system JSON")->required();
  c_gr->add_option("--z", gr.z, "Energy, e.g. 3+0.5i")->required();
  c_gr->add_option("--depth", gr.depth, "Truncation depth")->check(CLI::Range(1, 60));
  c_gr->add_option("--boundary", gr.boundary, "exact, free, dirichlet or neumann");
  c_gr->add_flag("--full", gr.full, "Expand around a vertex root (needs root_row)");
  add_common(c_gr, common);

  PerturbOpts pe;
  auto* c_pe = app.add_subcommand("perturb", "Monte Carlo moments under random lengths and couplings");
  c_pe->add_option("--graph", pe.graph, "Graph or cone-system JSON (W = 0)")->required();
  c_pe->add_option("--lambda", pe.lambda, "Energies (comma separated)")->delimiter(',');
  c_pe->add_option("--bands", pe.bands, "Bands CSV of a spectrum run; uses the middle of the widest band");
  c_pe->add_option("--eta", pe.eta, "Imaginary parts (comma separated; default eta0 and eta0/2)")->delimiter(',');
  c_pe->add_option("--eta0", pe.eta0, "Largest eta of the moment checks")->check(CLI::PositiveNumber);
  c_pe->add_option("--eps", pe.eps, "Disorder strengths (comma separated)")->delimiter(',');
  c_pe->add_option("--samples", pe.samples, "Samples per (lambda, eta, eps)")->check(CLI::Range(2, 100000000));
  c_pe->add_option("--depth", pe.depth, "Depth of each sampled tree")->check(CLI::Range(1, 40));
  c_pe->add_option("--seed", pe.seed, "Ensemble seed");
  c_pe->add_option("--moment", pe.moment, "p in E[gamma^p]")->check(CLI::PositiveNumber);
  c_pe->add_option("--s", pe.s, "s in E[|Im R+|^-s]")->check(CLI::PositiveNumber);
  c_pe->add_option("--family", pe.family, "uniform, two-point or beta");
  c_pe->add_option("--beta", pe.beta, "Shape of the beta family")->check(CLI::PositiveNumber);
  c_pe->add_flag("--fixed-lengths", pe.fixed_lengths, "Do not perturb lengths");
  c_pe->add_flag("--fixed-couplings", pe.fixed_couplings, "Do not perturb couplings");
  add_common(c_pe, common);

  VerifyOpts ve;
  auto* c_ve = app.add_subcommand("verify", "Residuals of the WT and Green identities");
  c_ve->add_option("--graph", ve.graph, "Graph or cone-system JSON");
  c_ve->add_option("--fixture", ve.fixture, "free-line or random");
  c_ve->add_option("--replay", ve.replay, "Case JSON written by a failed run (may carry overrides)");
  c_ve->add_option("--z", ve.z, "Energies (comma separated)")->delimiter(',');
  c_ve->add_option("--depth", ve.depth, "Truncation depth")->check(CLI::Range(1, 40));
  c_ve->add_option("--count", ve.count, "Number of random trees")->check(CLI::Range(1, 100000));
  c_ve->add_option("--seed", ve.seed, "Seed of the first random tree and of the path checks");
  c_ve->add_option("--paths", ve.paths, "Random paths per multiplicative check");
  c_ve->add_option("--tol", ve.tol, "Residual tolerance");
  c_ve->add_option("--current-tol", ve.current_tol, "Allowed negative slack of the current relation");
  c_ve->add_option("--boundary", ve.boundary, "Leaf rule: exact, free, dirichlet or neumann");
  c_ve->add_option("--case-out", ve.case_out, "Where to write a failing case");
  c_ve->add_option("--save-case", ve.save_case, "Write the first case at the first z as replay JSON");
  add_common(c_ve, common);

  OracleOpts orc;
  auto* c_or = app.add_subcommand("oracle", "Brute-force references: green, reduction, star, regular");
  c_or->add_option("--kind", orc.kind, "green, reduction, star or regular")->required();
  c_or->add_option("--graph", orc.graph, "Graph JSON (green, reduction)");
  c_or->add_option("--z", orc.z, "Energy (green, regular)");
  c_or->add_option("--depth", orc.depth, "Truncation depth (green)")->check(CLI::Range(1, 20));
  c_or->add_option("--step", orc.step, "Discretization step (green)")->check(CLI::PositiveNumber);
  c_or->add_option("--boundary", orc.boundary, "Leaf rule (green)");
  c_or->add_option("--lmin", orc.lmin, "Scan start (reduction)");
  c_or->add_option("--lmax", orc.lmax, "Scan end (reduction)");
  c_or->add_option("--grid", orc.grid, "Scan points (reduction)")->check(CLI::Range(2, 100000000));
  c_or->add_option("--degree", orc.degree, "Star degree")->check(CLI::Range(2, 1000));
  c_or->add_option("--lengths", orc.lengths, "Star edge lengths (one, or one per edge)")->delimiter(',');
  c_or->add_option("--alpha", orc.alpha, "Coupling (star centre, regular tree)");
  c_or->add_option("--q", orc.q, "Children per vertex (regular)")->check(CLI::Range(1, 1000));
  c_or->add_option("--length", orc.length, "Edge length (regular)")->check(CLI::PositiveNumber);
  add_common(c_or, common);

  RerunOpts re;
  auto* c_re = app.add_subcommand("rerun", "Re-run a manifest and compare output digests");
  c_re->add_option("--manifest", re.manifest, "Manifest JSON")->required();
  c_re->add_option("--outdir", re.outdir, "Write the outputs here instead of the recorded paths");

  CLI::App* active = nullptr;
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
    active = app.get_subcommands().front();
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Run run;
  run.command = active->get_name();
  run.app = active;
  run.common = common;
  run.out = &out;
  run.err = &err;
  if (active == c_re) {
    try {
      return rerun(re, out, err);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }
  int code = 0;
  try {
    if (active == c_sp) spectrum(run, sp);
    if (active == c_gr) green(run, gr);
    if (active == c_pe) perturb(run, pe);
    if (active == c_ve) verify(run, ve);
    if (active == c_or) oracle(run, orc);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << active->help();
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DirichletProximityError& e) {
    err << "error: " << e.what() << " (lambda = " << format_double(e.lambda()) << ")\n";
    code = 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    code = 2;
  }
  // failed checks keep the files they wrote, with a manifest
  if (code != 0 && run.outputs.empty()) return code;

  RunManifest m;
  m.command = run.command;
  m.argv = normalized_argv(args, run);
  m.flags = flag_values(active);
  m.flags["--out"] = run.out_path();
  m.flags["--manifest"] = run.manifest_path();
  for (const auto& p : run.inputs) m.inputs.push_back(digest(p));
  for (const auto& p : run.outputs) m.outputs.push_back(digest(p));
  m.seed = run.seed;
  m.workers = run.workers();
  m.version = QTREE_VERSION;
  m.started_utc = started;
  m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    m.write(run.manifest_path());
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  if (!nested) out << "wrote " << run.manifest_path() << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run_impl(args, out, err, false);
}

}  // namespace qtree::cli
