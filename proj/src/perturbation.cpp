#include "qtree/perturbation.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "qtree/errors.hpp"
#include "qtree/hyperbolic.hpp"
#include "qtree/parallel.hpp"

namespace qtree {

namespace {

constexpr std::uint64_t kLengthStream = 0x243F6A8885A308D3ULL;
constexpr std::uint64_t kCouplingStream = 0x13198A2E03707344ULL;

double min_abs_S(cplx k, double L0, double eps, int points = 201) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double L = L0 - eps + 2.0 * eps * i / std::max(1, points - 1);
    m = std::min(m, std::abs(std::sin(k * L) / k));
  }
  return m;
}

double max_abs_S(cplx k, double L0, double eps, int points = 201) {
  double m = 0.0;
  for (int i = 0; i < points; ++i) {
    const double L = L0 - eps + 2.0 * eps * i / std::max(1, points - 1);
    m = std::max(m, std::abs(std::sin(k * L) / k));
  }
  return m;
}

double max_abs_C(cplx k, double L0, double eps, int points = 201) {
  double m = 0.0;
  for (int i = 0; i < points; ++i) {
    const double L = L0 - eps + 2.0 * eps * i / std::max(1, points - 1);
    m = std::max(m, std::abs(std::cos(k * L)));
  }
  return m;
}

ConeSystem rooted_at(const ConeSystem& sys, int label) {
  if (label < 0 || label >= sys.size()) throw PreconditionError("label out of range");
  ConeSystem s = sys;
  s.root_label = label;
  s.root_length = 0.0;
  s.root_potential.reset();
  s.root_reverse_label = -1;
  return s;
}

int c2_prime_index(const ConeSystem& sys, int label) {
  auto rep = check_conditions(sys);
  const int kp = rep.c2_choice.empty() ? -1 : rep.c2_choice[label];
  if (kp < 0) throw ConditionError("two-step geometry: no (C2) child for label " + std::to_string(label + 1));
  int idx = 0;
  for (int k = 0; k < sys.size(); ++k)
    for (int c = 0; c < sys.M[label][k]; ++c, ++idx)
      if (k == kp) return idx;
  throw ConditionError("two-step geometry: (C2) child label missing");
}

std::vector<int> child_labels(const ConeSystem& sys, int j) {
  std::vector<int> out;
  for (int k = 0; k < sys.size(); ++k)
    for (int c = 0; c < sys.M[j][k]; ++c) out.push_back(k);
  return out;
}

double pairwise_range(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_range(x, h) + pairwise_range(x + h, n - h);
}

}  // namespace

const char* family_name(Family f) {
  switch (f) {
    case Family::Uniform: return "uniform";
    case Family::TwoPoint: return "two-point";
    case Family::Beta: return "beta";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "uniform") return Family::Uniform;
  if (name == "two-point" || name == "twopoint") return Family::TwoPoint;
  if (name == "beta") return Family::Beta;
  throw PreconditionError("unknown distribution family '" + name + "'");
}

double EnsembleConfig::holder_exponent() const {
  switch (family) {
    case Family::Uniform: return 1.0;
    case Family::TwoPoint: return 0.0;
    case Family::Beta: return std::min(beta, 1.0);
  }
  return 0.0;
}

double unit_uniform(std::uint64_t key) { return double(mix64(key) >> 11) * 0x1.0p-53; }

std::uint64_t sample_key(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index + 0xA4093822299F31D0ULL));
}

double family_variate(const EnsembleConfig& cfg, double u) {
  switch (cfg.family) {
    case Family::Uniform: return 2.0 * u - 1.0;
    case Family::TwoPoint: return u < 0.5 ? -1.0 : 1.0;
    case Family::Beta:
      if (!(cfg.beta > 0.0)) throw PreconditionError("beta family needs beta > 0");
      if (u <= 0.0) return -1.0;
      return 2.0 * boost::math::ibeta_inv(cfg.beta, cfg.beta, u) - 1.0;
  }
  return 0.0;
}

double perturbed_length(const EnsembleConfig& cfg, double L0, std::uint64_t key) {
  if (!cfg.perturb_lengths || cfg.eps == 0.0) return L0;
  return L0 + cfg.eps * family_variate(cfg, unit_uniform(key));
}

double perturbed_coupling(const EnsembleConfig& cfg, double alpha0, std::uint64_t key) {
  if (!cfg.perturb_couplings || cfg.eps == 0.0) return alpha0;
  const double lo = std::max(0.0, alpha0 - cfg.eps), hi = alpha0 + cfg.eps;
  return lo + (hi - lo) * 0.5 * (family_variate(cfg, unit_uniform(key)) + 1.0);
}

void check_ensemble(const ConeSystem& sys, const EnsembleConfig& cfg) {
  if (!(cfg.eps >= 0.0) || !std::isfinite(cfg.eps)) throw PreconditionError("eps must be >= 0");
  if (cfg.family == Family::Beta && !(cfg.beta > 0.0)) throw PreconditionError("beta must be > 0");
  double minL = sys.L_o();
  for (int j = 0; j < sys.size(); ++j) {
    if (!sys.labels[j].potential.is_zero())
      throw PreconditionError("random ensembles are potential-free; label " + std::to_string(j + 1) +
                              " carries a potential");
    if (sys.labels[j].alpha < 0.0) throw PreconditionError("couplings must be nonnegative");
    minL = std::min(minL, sys.labels[j].length);
  }
  if (sys.root_potential && !sys.root_potential->is_zero())
    throw PreconditionError("random ensembles are potential-free; the root edge carries a potential");
  if (cfg.eps >= minL) throw PreconditionError("eps too large: must be below the shortest length");
}

void check_dirichlet_thickening(const ConeSystem& sys, double eps, double lambda) {
  if (lambda <= 0.0) return;
  std::vector<double> lengths{sys.L_o()};
  for (const auto& l : sys.labels) lengths.push_back(l.length);
  const double r = std::sqrt(lambda) / std::numbers::pi;
  for (double L : lengths) {
    const double a = r * (L - eps), b = r * (L + eps);
    const double n = std::ceil(a - 1e-12);
    if (n >= 1.0 && n <= b + 1e-12)
      throw DirichletProximityError("lambda = " + std::to_string(lambda) +
                                        " lies in the thickened Dirichlet set of length " +
                                        std::to_string(L),
                                    lambda);
  }
}

void perturb_tree(TruncatedQuantumTree& tree, const TruncatedQuantumTree& base, const EnsembleConfig& cfg,
                  std::uint64_t index) {
  if (tree.size() != base.size()) throw PreconditionError("perturb_tree: shape mismatch");
  const std::uint64_t sk = sample_key(cfg.seed, index);
  for (std::size_t v = 0; v < base.size(); ++v) {
    const auto& b = base.vertices[v];
    auto& t = tree.vertices[v];
    if (base.mode == TreeMode::Cone && v == 0) continue;  // origin point of b_o
    const std::uint64_t k = mix64(sk ^ b.key);
    if (b.parent >= 0) t.length = perturbed_length(cfg, b.length, mix64(k ^ kLengthStream));
    t.alpha = perturbed_coupling(cfg, b.alpha, mix64(k ^ kCouplingStream));
  }
}

TruncatedQuantumTree sample_random_tree(const ConeSystem& sys, const EnsembleConfig& cfg, int depth,
                                        std::uint64_t index) {
  check_ensemble(sys, cfg);
  auto base = expand_truncated_tree(sys, depth);
  auto t = base;
  perturb_tree(t, base, cfg, index);
  return t;
}

double pairwise_sum(const std::vector<double>& x) { return pairwise_range(x.data(), x.size()); }

MeanEstimate mean_estimate(const std::vector<double>& x) {
  MeanEstimate m;
  if (x.empty()) return m;
  const double n = double(x.size());
  m.mean = pairwise_sum(x) / n;
  if (x.size() > 1) {
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = (x[i] - m.mean) * (x[i] - m.mean);
    m.stderr_ = std::sqrt(pairwise_sum(d) / (n - 1.0) / n);
  }
  return m;
}

BootstrapEstimate bootstrap_mean(const std::vector<double>& x, std::uint64_t seed, int resamples) {
  BootstrapEstimate b;
  if (x.empty()) return b;
  auto m = mean_estimate(x);
  b.mean = m.mean;
  std::mt19937_64 rng(mix64(seed ^ 0xB7E151628AED2A6BULL));
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> means(resamples), draw(x.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& d : draw) d = x[pick(rng)];
    means[r] = pairwise_sum(draw) / double(x.size());
  }
  b.stderr_ = mean_estimate(means).stderr_ * std::sqrt(double(resamples));
  std::sort(means.begin(), means.end());
  auto at = [&](double f) { return means[std::size_t(std::floor(f * (resamples - 1)))]; };
  b.lo = at(0.025);
  b.hi = at(0.975);
  return b;
}

TwoStepGeometry two_step_geometry(const ConeSystem& sys, cplx z, int label, const std::vector<cplx>& rplus) {
  if (z.imag() < 0.0) throw PreconditionError("two_step_geometry: Im z < 0");
  if (static_cast<int>(rplus.size()) != sys.size()) throw PreconditionError("two_step_geometry: bad R+ size");
  const cplx k = sqrt_branch(z);
  TwoStepGeometry g;
  g.label = label;
  g.z = z;
  g.star_labels = child_labels(sys, label);
  g.prime = c2_prime_index(sys, label);
  const int kp = g.star_labels[g.prime];
  g.prime_labels = child_labels(sys, kp);
  for (int i = 0; i < int(g.star_labels.size()); ++i)
    if (i != g.prime) g.labels.push_back(g.star_labels[i]);
  g.n_star = int(g.labels.size());
  for (int l : g.prime_labels) g.labels.push_back(l);
  for (int l : g.labels) g.H.push_back(rplus[l] / k);
  g.H_prime = rplus[kp] / k;
  g.H_star = rplus[label] / k;
  g.alpha0 = sys.labels[kp].alpha;
  g.L0 = sys.labels[kp].length;

  double sum_star = g.H_prime.imag(), sum_prime = 0.0;
  for (int i = 0; i < g.n_star; ++i) sum_star += g.H[i].imag();
  for (std::size_t i = g.n_star; i < g.labels.size(); ++i) sum_prime += g.H[i].imag();
  const double p_prime = g.H_prime.imag() / sum_star;
  for (std::size_t i = 0; i < g.labels.size(); ++i)
    g.p.push_back(int(i) < g.n_star ? g.H[i].imag() / sum_star : p_prime * g.H[i].imag() / sum_prime);
  return g;
}

TwoStepGeometry two_step_geometry(const ConeSystem& sys, cplx z, int label) {
  return two_step_geometry(sys, z, label, exact_boundary(sys, z).rplus);
}

cplx g_prime(cplx z, double alpha, double L, const std::vector<cplx>& g_children) {
  const cplx k = sqrt_branch(z);
  cplx phi = -alpha / k;
  for (auto g : g_children) phi += g;
  const cplx c = std::cos(k * L), s = std::sin(k * L);
  return (phi * c + s) / (-phi * s + c);
}

namespace {

struct TwoStepValues {
  std::vector<cplx> h;  // S_{*,*'} then *'
  std::vector<cplx> H;
  std::vector<double> gamma;
  std::vector<int> star_idx;   // S_* in N
  std::vector<int> prime_idx;  // S_*' in N
  std::vector<double> q_star, q_prime;
  std::vector<double> c;  // S_{*,*'} then *'
};

double pair_Q(const TwoStepValues& t, int x, int y) {
  if (t.gamma[x] == 0.0 || t.gamma[y] == 0.0) return 0.0;
  const double hx = t.h[x].imag(), hy = t.h[y].imag(), Hx = t.H[x].imag(), Hy = t.H[y].imag();
  const double num = std::sqrt(hx * hy * Hx * Hy * t.gamma[x] * t.gamma[y]);
  const double den = 0.5 * (hx * Hy * t.gamma[y] + hy * Hx * t.gamma[x]);
  return std::min(1.0, num / den);
}

double pair_cos(const TwoStepValues& t, int x, int y) {
  if (t.gamma[x] == 0.0 || t.gamma[y] == 0.0) return 0.0;
  const cplx w = (t.h[x] - t.H[x]) * std::conj(t.h[y] - t.H[y]);
  const double a = std::abs(w);
  return a == 0.0 ? 0.0 : w.real() / a;
}

TwoStepValues two_step_values(const TwoStepGeometry& geo, const std::vector<cplx>& g, double alpha, double L) {
  const int n = int(geo.labels.size());
  TwoStepValues t;
  t.h = g;
  t.h.push_back(g_prime(geo.z, alpha, L, std::vector<cplx>(g.begin() + geo.n_star, g.end())));
  t.H = geo.H;
  t.H.push_back(geo.H_prime);
  for (int i = 0; i <= n; ++i) t.gamma.push_back(t.h[i] == t.H[i] ? 0.0 : gamma_metric(t.h[i], t.H[i]));
  int next = 0;
  for (int s = 0; s < int(geo.star_labels.size()); ++s) t.star_idx.push_back(s == geo.prime ? n : next++);
  for (int i = geo.n_star; i < n; ++i) t.prime_idx.push_back(i);
  auto weights = [&](const std::vector<int>& idx) {
    double sum = 0.0;
    for (int i : idx) sum += t.h[i].imag();
    std::vector<double> q;
    for (int i : idx) q.push_back(t.h[i].imag() / sum);
    return q;
  };
  t.q_star = weights(t.star_idx);
  t.q_prime = weights(t.prime_idx);
  auto row = [&](int x, const std::vector<int>& idx, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a) s += q[a] * pair_Q(t, x, idx[a]) * pair_cos(t, x, idx[a]);
    return s;
  };
  t.c.assign(n + 1, 0.0);
  t.c[n] = row(n, t.star_idx, t.q_star);
  for (int i = 0; i < geo.n_star; ++i) t.c[i] = row(i, t.star_idx, t.q_star);
  for (int i = geo.n_star; i < n; ++i) t.c[i] = t.c[n] * row(i, t.prime_idx, t.q_prime);
  return t;
}

// Calls fn(perm) for every label-preserving permutation of positions.
void for_each_permutation(const std::vector<int>& labels, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<std::vector<int>> groups;
  std::vector<int> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(seen.begin(), seen.end(), labels[i]);
    if (it == seen.end()) {
      seen.push_back(labels[i]);
      groups.push_back({int(i)});
    } else {
      groups[it - seen.begin()].push_back(int(i));
    }
  }
  double count = 1.0;
  for (auto& gr : groups)
    for (std::size_t k = 2; k <= gr.size(); ++k) count *= double(k);
  if (count > 1e5) throw PreconditionError("too many label-preserving permutations");
  std::vector<int> perm(labels.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = int(i);
  std::vector<std::vector<int>> images = groups;
  std::function<void(std::size_t)> rec = [&](std::size_t gi) {
    if (gi == groups.size()) {
      fn(perm);
      return;
    }
    auto img = groups[gi];
    std::sort(img.begin(), img.end());
    do {
      for (std::size_t a = 0; a < img.size(); ++a) perm[groups[gi][a]] = img[a];
      rec(gi + 1);
    } while (std::next_permutation(img.begin(), img.end()));
  };
  rec(0);
}

}  // namespace

ContractionDiagnostics contraction_diagnostics(const TwoStepGeometry& geo, const std::vector<cplx>& g,
                                               double alpha, double L, double p) {
  const int n = int(geo.labels.size());
  if (int(g.size()) != n) throw PreconditionError("contraction_diagnostics: one value per S_{*,*'} entry");
  for (auto v : g)
    if (!(v.imag() > 0.0)) throw PreconditionError("contraction_diagnostics: g must lie in the upper half-plane");
  if (p < 1.0) throw PreconditionError("contraction_diagnostics: p >= 1");

  ContractionDiagnostics d;
  auto t = two_step_values(geo, g, alpha, L);
  d.h = t.h;
  d.gamma = t.gamma;
  d.p = geo.p;
  d.c = t.c;
  d.q = t.q_star;
  d.q.insert(d.q.end(), t.q_prime.begin(), t.q_prime.end());
  d.Q.assign(n + 1, std::vector<double>(n + 1, 0.0));
  d.cos_alpha = d.Q;
  for (int x = 0; x <= n; ++x)
    for (int y = 0; y <= n; ++y) {
      d.Q[x][y] = pair_Q(t, x, y);
      d.cos_alpha[x][y] = pair_cos(t, x, y);
    }

  double num = 0.0, den = 0.0;
  std::vector<cplx> gp(n);
  for_each_permutation(geo.labels, [&](const std::vector<int>& perm) {
    for (int x = 0; x < n; ++x) gp[x] = g[perm[x]];
    auto tp = two_step_values(geo, gp, alpha, L);
    double s = 0.0, w = 0.0;
    for (int x = 0; x < n; ++x) {
      s += geo.p[x] * tp.c[x] * tp.gamma[x];
      w += geo.p[x] * std::pow(tp.gamma[x], p);
    }
    num += std::pow(std::abs(s), p);
    den += w;
    ++d.permutations;
  });
  if (den == 0.0) {
    d.degenerate = true;
    d.kappa = kKappaUndefined;
  } else {
    d.kappa = num / den;
  }
  return d;
}

KappaScan kappa_scan(const std::vector<TwoStepGeometry>& geos, double eps, double radius, std::size_t draws,
                     double p, std::uint64_t seed, double gamma_max) {
  if (geos.empty()) throw PreconditionError("kappa_scan: no geometries");
  if (!(radius >= 0.0) || !(gamma_max > radius)) throw PreconditionError("kappa_scan: need 0 <= radius < gamma_max");
  KappaScan r;
  r.radius = radius;
  std::mt19937_64 rng(mix64(seed));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double lo_g = std::log(std::max(radius * 1e-2, 1e-8)), hi_g = std::log(gamma_max);
  const double lo_R = std::log(std::max(radius, 1e-8));
  auto point = [&](cplx H, double gamma) {
    const double rho = std::sqrt(gamma / (4.0 + gamma));
    const cplx u = std::polar(rho, 2.0 * std::numbers::pi * U(rng));
    const cplx w = cayley(H);
    return cayley_inv((u + w) / (1.0 + std::conj(w) * u));
  };
  for (std::size_t i = 0; i < draws; ++i) {
    const auto& geo = geos[std::size_t(U(rng) * geos.size()) % geos.size()];
    const int n = int(geo.labels.size());
    std::vector<double> gam(n, 0.0);
    for (int x = 0; x < n; ++x)
      if (U(rng) >= 0.1) gam[x] = std::exp(lo_g + (hi_g - lo_g) * U(rng));
    if (*std::max_element(gam.begin(), gam.end()) < std::max(radius, 1e-300))
      gam[std::size_t(U(rng) * n) % n] = std::exp(lo_R + (hi_g - lo_R) * U(rng));
    std::vector<cplx> g(n);
    for (int x = 0; x < n; ++x) g[x] = gam[x] == 0.0 ? geo.H[x] : point(geo.H[x], gam[x]);
    const double alo = std::max(0.0, geo.alpha0 - eps), ahi = geo.alpha0 + eps;
    const double alpha = alo + (ahi - alo) * U(rng);
    const double L = geo.L0 + eps * (2.0 * U(rng) - 1.0);
    auto d = contraction_diagnostics(geo, g, alpha, L, p);
    ++r.draws;
    if (d.degenerate) {
      ++r.degenerate;
      continue;
    }
    if (d.kappa > r.max_kappa || r.worst_g.empty()) {
      r.max_kappa = d.kappa;
      r.worst_g = g;
      r.worst_z = geo.z;
      r.worst_alpha = alpha;
      r.worst_L = L;
    }
  }
  r.delta = 1.0 - r.max_kappa;
  return r;
}

std::vector<TreeSample> draw_samples(const ConeSystem& sys_in, const EnsembleConfig& cfg, cplx z, int label,
                                     std::size_t n, const SampleOptions& opt) {
  if (!(z.imag() > 0.0)) throw PreconditionError("Monte Carlo sampling needs Im z > 0");
  if (opt.depth < (opt.two_step ? 2 : 1)) throw PreconditionError("sampling depth too small");
  auto sys = rooted_at(sys_in, label);
  check_ensemble(sys, cfg);
  check_dirichlet_thickening(sys, cfg.eps, z.real());
  const auto seeds = exact_boundary(sys, z);
  const auto base = expand_truncated_tree(sys, opt.depth);
  const int prime = opt.two_step ? c2_prime_index(sys, label) : -1;
  const cplx k = sqrt_branch(z);
  WTOptions wopt;
  wopt.back = BoundaryRule::free();

  std::vector<TreeSample> out(n);
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  parallel_chunks(
      n_chunks,
      [&](std::size_t c) {
        auto tree = base;
        for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
          perturb_tree(tree, base, cfg, i);
          auto st = wt_recursion(tree, z, seeds, wopt);
          TreeSample& s = out[i];
          s.rplus = st.rp_o[1];
          s.h = s.rplus / k;
          s.zeta = st.zf[1];
          s.root_length = tree.vertices[1].length;
          const auto& ch = tree.vertices[1].children;
          for (int v : ch) s.child_rplus.push_back(st.rp_o[v]);
          if (prime >= 0) {
            const int vp = ch[prime];
            for (int w : tree.vertices[vp].children) s.grand_h.push_back(st.rp_o[w] / k);
            s.alpha_prime = tree.vertices[vp].alpha;
            s.length_prime = tree.vertices[vp].length;
          }
        }
      },
      opt.workers);
  return out;
}

GammaStatistics gamma_statistics(const ConeSystem& sys, const EnsembleConfig& cfg, cplx z, int depth,
                                 std::size_t n, double p, const SampleOptions& opt_in) {
  if (n == 0) throw PreconditionError("gamma_statistics: no samples");
  GammaStatistics g;
  g.z = z;
  g.eps = cfg.eps;
  g.p = p;
  g.depth = depth;
  g.samples = n;
  SampleOptions opt = opt_in;
  opt.depth = depth;
  const cplx k = sqrt_branch(z);
  check_ensemble(sys, cfg);
  check_dirichlet_thickening(sys, cfg.eps, z.real());
  const auto rplus = exact_boundary(sys, z).rplus;
  for (int j = 0; j < sys.size(); ++j) {
    const cplx H = rplus[j] / k;
    g.H.push_back(H);
    auto samples = draw_samples(sys, cfg, z, j, n, opt);
    std::vector<double> gp(n), ap(n), ip(n);
    for (std::size_t i = 0; i < n; ++i) {
      const cplx h = samples[i].h;
      const double gam = h == H ? 0.0 : gamma_metric(h, H);
      g.max_gamma = std::max(g.max_gamma, gam);
      gp[i] = std::pow(gam, p);
      ap[i] = std::pow(std::abs(h - H), p);
      ip[i] = std::pow(h.imag() * H.imag(), p);
    }
    g.gamma_p.push_back(mean_estimate(gp));
    g.abs_p.push_back(mean_estimate(ap));
    g.im_prod_p.push_back(mean_estimate(ip));
    const double rhs = g.gamma_p.back().mean * g.im_prod_p.back().mean;
    const double lhs = g.abs_p.back().mean * g.abs_p.back().mean;
    g.cs_slack.push_back(rhs > 0.0 ? (rhs - lhs) / rhs : -lhs);
  }
  return g;
}

InverseMoments inverse_moments(const ConeSystem& sys, const EnsembleConfig& cfg, const std::vector<cplx>& z_grid,
                               int depth, std::size_t n, double s, double p, const SampleOptions& opt_in) {
  if (n == 0 || z_grid.empty()) throw PreconditionError("inverse_moments: empty grid or no samples");
  InverseMoments m;
  m.s = s;
  m.p = p;
  SampleOptions opt = opt_in;
  opt.depth = depth;
  check_ensemble(sys, cfg);
  m.c1 = std::numeric_limits<double>::infinity();
  for (auto z : z_grid) {
    const cplx k = sqrt_branch(z);
    for (const auto& l : sys.labels) m.c1 = std::min(m.c1, min_abs_S(k, l.length, cfg.eps));
    m.c1 = std::min(m.c1, min_abs_S(k, sys.L_o(), cfg.eps));
  }
  struct Pending {
    std::vector<TreeSample> samples;
    cplx z;
    int label;
  };
  std::vector<Pending> all;
  for (auto z : z_grid)
    for (int j = 0; j < sys.size(); ++j) {
      all.push_back({draw_samples(sys, cfg, z, j, n, opt), z, j});
      const cplx k = sqrt_branch(z);
      for (const auto& t : all.back().samples) m.c1 = std::min(m.c1, std::abs(std::sin(k * t.root_length) / k));
    }
  std::uint64_t row = 0;
  for (const auto& pend : all) {
    MomentRow r;
    r.z = pend.z;
    r.label = pend.label;
    std::vector<double> a(n), b(n), c(n), zp(n);
    const std::size_t nc = pend.samples.front().child_rplus.size();
    std::vector<std::vector<double>> child(nc, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = pend.samples[i];
      a[i] = std::pow(std::abs(t.rplus.imag()), -s);
      b[i] = std::pow(std::abs(t.rplus), p);
      c[i] = std::pow(std::abs(t.rplus), -p);
      zp[i] = std::pow(std::abs(t.zeta), p);
      for (std::size_t ch = 0; ch < nc; ++ch) child[ch][i] = std::pow(std::abs(t.child_rplus[ch].imag()), -p);
    }
    const std::uint64_t bs = mix64(cfg.seed ^ mix64(++row));
    r.inv_im = bootstrap_mean(a, bs);
    r.abs_pos = bootstrap_mean(b, mix64(bs + 1));
    r.abs_neg = bootstrap_mean(c, mix64(bs + 2));
    r.zeta_p = mean_estimate(zp).mean;
    for (auto& v : child) r.zeta_bound += mean_estimate(v).mean;
    r.zeta_bound *= std::pow(m.c1, -p);
    m.sup_inv_im = std::max(m.sup_inv_im, r.inv_im.mean);
    m.sup_abs_pos = std::max(m.sup_abs_pos, r.abs_pos.mean);
    m.sup_abs_neg = std::max(m.sup_abs_neg, r.abs_neg.mean);
    m.rows.push_back(r);
  }
  return m;
}

double empirical_cdf(const std::vector<double>& sorted, double x) {
  if (sorted.empty()) return 0.0;
  return double(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) / double(sorted.size());
}

FDistribution f_distribution(const ConeSystem& sys, const EnsembleConfig& cfg, cplx z,
                             const std::vector<double>& x_grid, std::size_t n, const SampleOptions& opt,
                             double x0, double varsigma) {
  if (x_grid.empty()) throw PreconditionError("f_distribution: empty x grid");
  FDistribution f;
  f.z = z;
  f.x = x_grid;
  f.varsigma = varsigma;
  f.holder = cfg.holder_exponent();
  std::vector<std::vector<double>> im(sys.size());
  for (int j = 0; j < sys.size(); ++j) {
    for (const auto& t : draw_samples(sys, cfg, z, j, n, opt)) im[j].push_back(t.rplus.imag());
    std::sort(im[j].begin(), im[j].end());
  }
  auto F = [&](double x) {
    double m = 0.0;
    for (const auto& v : im) m = std::max(m, empirical_cdf(v, x));
    return m;
  };
  f.per_label.assign(sys.size(), {});
  for (double x : x_grid) {
    for (int j = 0; j < sys.size(); ++j) f.per_label[j].push_back(empirical_cdf(im[j], x));
    f.F.push_back(F(x));
  }

  const cplx k = sqrt_branch(z);
  f.c1 = std::numeric_limits<double>::infinity();
  f.q = std::numeric_limits<int>::max();
  for (int j = 0; j < sys.size(); ++j) {
    const double L = sys.labels[j].length;
    f.c1 = std::min(f.c1, min_abs_S(k, L, cfg.eps));
    f.c2 = std::max(f.c2, max_abs_S(k, L, cfg.eps));
    f.c3 = std::max(f.c3, max_abs_C(k, L, cfg.eps));
    f.q = std::min(f.q, sys.row_sum(j));
    f.Q = std::max(f.Q, sys.row_sum(j));
  }
  f.c_I = f.c1 / (4.0 * f.Q * f.c2 * f.c3);
  for (double x : x_grid) {
    if (!(x > 0.0)) continue;
    for (int i = 1; i <= 24; ++i) {
      const double y = f.c_I * std::pow(10.0, -4.0 * (i - 1) / 23.0);
      const double lhs = F(x) - std::pow(F(x / (y * y)), f.q);
      const double den = std::pow(y, f.holder) * std::pow(F(4.0 * f.Q * f.c2 * y / (f.c1 * f.c1)), f.q) +
                         std::pow(y, varsigma);
      if (lhs > 0.0) f.fitted_C = std::max(f.fitted_C, lhs / den);
    }
  }

  f.x0 = x0;
  if (!(f.x0 > 0.0)) {
    for (std::size_t i = 0; i < x_grid.size(); ++i)
      if (f.F[i] >= 0.5) {
        f.x0 = x_grid[i];
        break;
      }
    if (!(f.x0 > 0.0)) f.x0 = x_grid.back();
  }
  std::vector<double> lx, lF;
  for (std::size_t i = 0; i < x_grid.size(); ++i)
    if (x_grid[i] > 0.0 && x_grid[i] <= f.x0 && f.F[i] > 0.0) {
      lx.push_back(std::log(x_grid[i]));
      lF.push_back(std::log(f.F[i]));
    }
  f.fit_points = int(lx.size());
  if (lx.size() >= 2) {
    const double mx = pairwise_sum(lx) / lx.size(), mF = pairwise_sum(lF) / lF.size();
    double sxx = 0.0, sxf = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxf += (lx[i] - mx) * (lF[i] - mF);
    }
    if (sxx > 0.0) {
      f.decay_exponent = sxf / sxx;
      for (std::size_t i = 0; i < lx.size(); ++i)
        f.decay_constant = std::max(f.decay_constant, std::exp(lF[i] - f.decay_exponent * lx[i]));
    }
  }
  return f;
}

ExpansionReport expansion_inequality_check(const TwoStepGeometry& geo, const std::vector<TreeSample>& samples) {
  ExpansionReport r;
  r.samples = samples.size();
  const cplx k = sqrt_branch(geo.z);
  for (const auto& s : samples) {
    if (s.grand_h.empty()) throw PreconditionError("expansion_inequality_check: samples lack two-step data");
    std::vector<cplx> g;
    for (int i = 0; i < int(s.child_rplus.size()); ++i)
      if (i != geo.prime) g.push_back(s.child_rplus[i] / k);
    g.insert(g.end(), s.grand_h.begin(), s.grand_h.end());
    auto t = two_step_values(geo, g, s.alpha_prime, s.length_prime);
    double w = 0.0;
    for (std::size_t x = 0; x < geo.labels.size(); ++x) w += geo.p[x] * t.c[x] * t.gamma[x];
    const double gs = s.h == geo.H_star ? 0.0 : gamma_metric(s.h, geo.H_star);
    r.gamma_star.push_back(gs);
    r.weighted.push_back(w);
    r.fitted_C = std::max(r.fitted_C, (gs - w) / (1.0 + w));
  }
  r.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.gamma_star.size(); ++i)
    r.min_slack = std::min(r.min_slack, (1.0 + r.fitted_C) * r.weighted[i] + r.fitted_C - r.gamma_star[i]);
  if (r.gamma_star.empty()) r.min_slack = 0.0;
  return r;
}

HyperbolicBoundCheck hyperbolic_bound_check(std::size_t n, std::uint64_t seed, double r_K) {
  if (!(r_K > 0.0 && r_K < 1.0)) throw PreconditionError("hyperbolic_bound_check: r_K in (0, 1)");
  HyperbolicBoundCheck c;
  c.inputs = n;
  c.scaling_min_slack = c.shift_min_slack = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(mix64(seed));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto disc = [&](double r) { return std::polar(r * std::sqrt(U(rng)), 2.0 * std::numbers::pi * U(rng)); };
  auto half = [&] {
    return cplx(std::tan(std::numbers::pi * (U(rng) - 0.5)), std::exp(std::log(1e-3) + std::log(1e6) * U(rng)));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const cplx z = disc(r_K), w = disc(0.999);
    const cplx l1 = disc(1.0);
    const cplx l2 = U(rng) < 0.1 ? l1 : disc(1.0);
    const double lhs = delta_disc(l1 * z, l2 * w), rhs = scaling_bound(l1, l2, z, w, r_K);
    const double sl = (rhs - lhs) / std::max(rhs, 1e-300);
    c.scaling_min_slack = std::min(c.scaling_min_slack, sl);
    if (sl < -1e-12) ++c.scaling_violations;

    const cplx g = half(), h = half();
    const cplx s = U(rng) < 0.1 ? cplx(0.0, 0.0) : half();
    const double lg = shifted_gamma(g, h, s), rg = shift_bound(g, h, s);
    const double sg = (rg - lg) / std::max(rg, 1e-300);
    c.shift_min_slack = std::min(c.shift_min_slack, sg);
    if (sg < -1e-12) ++c.shift_violations;
  }
  return c;
}

double ContractionConstants::radius(double eps) const {
  const double theta = (1.0 + theta0) / theta0 * M_ID * eps;
  if (!(theta < varsigma0)) return std::numeric_limits<double>::infinity();
  return theta * theta / (varsigma0 * (varsigma0 - theta));
}

ContractionConstants contraction_constants(const ConeSystem& sys, double lambda_lo, double lambda_hi, double eps,
                                           int lambda_points, int eta_points) {
  if (!(lambda_lo > 0.0) || !(lambda_hi >= lambda_lo)) throw PreconditionError("contraction_constants: need 0 < lo <= hi");
  if (lambda_points < 1 || eta_points < 2) throw PreconditionError("contraction_constants: grid too small");
  const double inf = std::numeric_limits<double>::infinity();
  ContractionConstants c;
  double min_angle = inf;
  c.varsigma0 = inf;
  c.eps_D = inf;
  auto rep = check_conditions(sys);
  for (int a = 0; a < lambda_points; ++a) {
    const double lam = lambda_points == 1 ? lambda_lo : lambda_lo + (lambda_hi - lambda_lo) * a / (lambda_points - 1);
    for (int b = 0; b < eta_points; ++b) {
      const cplx z(lam, double(b) / (eta_points - 1));
      const cplx k = sqrt_branch(z);
      const auto seeds = exact_boundary(sys, z);
      for (int j = 0; j < sys.size(); ++j) {
        const double L = sys.labels[j].length;
        const cplx R = seeds.rplus[j];
        c.varsigma0 = std::min(c.varsigma0, (R / k).imag());
        c.varsigma1 = std::max(c.varsigma1, std::abs((seeds.children_sum[j] - sys.labels[j].alpha) / k));
        const cplx Z = (std::cos(k * L) + std::sin(k * L) / k * R) * std::sin(k * L);
        const double ang = std::abs(std::arg(Z));
        min_angle = std::min(min_angle, std::min(ang, std::numbers::pi - ang));
        const int kp = rep.c2_choice.empty() ? -1 : rep.c2_choice[j];
        if (kp >= 0) {
          const double Lp = sys.labels[kp].length;
          for (int i = 0; i <= 40; ++i) {
            const double Lv = Lp - eps + 2.0 * eps * i / 40.0;
            c.eps_D = std::min(c.eps_D, std::abs(std::sin(k * Lv) * std::sin(k * Lp)));
          }
        }
      }
      c.c_I = std::max(c.c_I, std::abs(k));
      for (int i = 1; i <= 50; ++i) {
        const double t = i / 50.0;
        c.c_I = std::max(c.c_I, std::abs(std::sin(k * t)) / t);
      }
      c.c_I_prime = std::max(c.c_I_prime, 1.0 / std::abs(k));
    }
  }
  c.theta0 = 0.1 * min_angle;
  const double s1 = c.varsigma1, t0 = c.theta0;
  c.M_ID = std::max(c.c_I_prime, 2.0 * c.c_I * (1.0 + s1 * s1) / c.eps_D);
  c.eps_star = std::min({t0 / (c.c_I_prime * (1.0 + t0)) * c.varsigma0, t0 * c.eps_D / (4.0 * c.c_I * s1 * (1.0 + t0)),
                         t0 * c.eps_D / (2.0 * c.c_I * (1.0 + s1 * s1) * (1.0 + t0)) * c.varsigma0});
  return c;
}

double cayley_rotation_residual(const WTState& s, int v) {
  const auto& tv = s.tree->vertices[v];
  if (tv.parent < 0) throw PreconditionError("cayley_rotation_residual: vertex has no incoming edge");
  if (!s.tree->potential_of(v).is_zero()) throw PreconditionError("cayley_rotation_residual: needs W = 0");
  if (s.rp_t_inf[v]) throw PreconditionError("cayley_rotation_residual: Dirichlet cut");
  const cplx k = sqrt_branch(s.z);
  const cplx lhs = cayley(s.rp_t[v] / k);
  const cplx rhs = std::exp(cplx(0.0, -2.0) * k * tv.length) * cayley(s.rp_o[v] / k);
  return std::abs(lhs - rhs);
}

double vertex_relation_residual(const WTState& s, int v) {
  const auto& tv = s.tree->vertices[v];
  if (tv.children.empty()) throw PreconditionError("vertex_relation_residual: vertex has no children");
  const cplx k = sqrt_branch(s.z);
  cplx lhs = 0.0;
  for (int c : tv.children) lhs += s.rp_o[c] / k;
  const cplx rhs = s.rp_t[v] / k + tv.alpha / k;
  return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

}  // namespace qtree
