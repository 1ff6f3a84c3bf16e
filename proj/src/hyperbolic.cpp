#include "qtree/hyperbolic.hpp"

#include <algorithm>
#include <cmath>

namespace qtree {

double gamma_metric(cplx g, cplx h) { return std::norm(g - h) / (g.imag() * h.imag()); }

double delta_disc(cplx z, cplx w) {
  return 2.0 * std::norm(z - w) / ((1.0 - std::norm(z)) * (1.0 - std::norm(w)));
}

cplx cayley(cplx z) { return (z - cplx(0, 1)) / (z + cplx(0, 1)); }

cplx cayley_inv(cplx u) { return cplx(0, 1) * (1.0 + u) / (1.0 - u); }

double scaling_constant(double r_K, double t) { return 8.0 * t / ((1.0 - r_K) * (1.0 - r_K)); }

double scaling_bound(cplx l1, cplx l2, cplx z, cplx w, double r_K) {
  const double c = scaling_constant(r_K, std::abs(l1 - l2));
  return (std::norm(l1) + c) * delta_disc(z, w) + c;
}

double shift_constant(cplx g, cplx z) {
  const double a = std::abs(z) / g.imag();
  return 4.0 * a + 4.0 * a * a;
}

double shifted_gamma(cplx g, cplx h, cplx z) {
  return std::max(gamma_metric(g, h + z), gamma_metric(g + z, h));
}

double shift_bound(cplx g, cplx h, cplx z) {
  const double c = shift_constant(g, z);
  return (1.0 + c) * gamma_metric(g, h) + c;
}

}  // namespace qtree
