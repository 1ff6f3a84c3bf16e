#pragma once

#include <complex>
#include <vector>

namespace qtree {

using cplx = std::complex<double>;

// Edge potential W on [0, L]. The Cosine period is the edge length:
// W(x) = c1 + c2 cos(2 pi x / L). Sampled values sit on a uniform grid
// over [0, L] and are linearly interpolated.
struct PotentialSpec {
  enum class Kind { Zero, Constant, Cosine, Sampled };

  Kind kind = Kind::Zero;
  double c1 = 0.0;
  double c2 = 0.0;
  std::vector<double> samples;
  bool symmetric = true;

  static PotentialSpec zero();
  static PotentialSpec constant(double c);
  static PotentialSpec cosine(double c1, double c2);
  // symmetric is computed from the samples.
  static PotentialSpec sampled(std::vector<double> values);

  double operator()(double x, double length) const;
  // W(L - x); the potential seen from the other end of the edge.
  PotentialSpec reversed() const;

  double min_value() const;
  double max_value() const;
  double sup_norm() const;

  bool is_zero() const;
  // Zero and Constant have trigonometric fundamental solutions.
  bool closed_form() const { return kind == Kind::Zero || kind == Kind::Constant; }
  // Shift for closed forms (0 or c).
  double shift() const { return kind == Kind::Constant ? c1 : 0.0; }

  // Throws PreconditionError if samples are non-finite or the flag lies.
  void validate() const;

  bool operator==(const PotentialSpec& o) const;
  bool operator!=(const PotentialSpec& o) const { return !(*this == o); }
};

const char* kind_name(PotentialSpec::Kind k);

}  // namespace qtree
