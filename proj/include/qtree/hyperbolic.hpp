#pragma once

#include "qtree/potential.hpp"

namespace qtree {

// |g - h|^2 / (Im g Im h) on the upper half-plane.
double gamma_metric(cplx g, cplx h);

// 2|z - z'|^2 / ((1 - |z|^2)(1 - |z'|^2)) on the unit disc.
double delta_disc(cplx z, cplx w);

// Upper half-plane to disc, (z - i)/(z + i), and its inverse.
cplx cayley(cplx z);
cplx cayley_inv(cplx u);

// Growth constant for delta(l1 z, l2 z') when |z| <= r_K: 8 t / (1 - r_K)^2.
double scaling_constant(double r_K, double t);
// Right side of delta(l1 z, l2 w) <= (|l1|^2 + C) delta(z, w) + C, C = scaling_constant(r_K, |l1 - l2|).
double scaling_bound(cplx l1, cplx l2, cplx z, cplx w, double r_K);

// 4|z|/Im g + 4|z|^2/(Im g)^2.
double shift_constant(cplx g, cplx z);
// max(gamma(g, h + z), gamma(g + z, h)) and its bound (1 + c) gamma(g, h) + c.
double shifted_gamma(cplx g, cplx h, cplx z);
double shift_bound(cplx g, cplx h, cplx z);

}  // namespace qtree
