#include "qtree/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qtree/errors.hpp"

namespace qtree {

PotentialSpec PotentialSpec::zero() { return {}; }

PotentialSpec PotentialSpec::constant(double c) {
  PotentialSpec p;
  p.kind = c == 0.0 ? Kind::Zero : Kind::Constant;
  p.c1 = c;
  if (p.kind == Kind::Zero) p.c1 = 0.0;
  return p;
}

PotentialSpec PotentialSpec::cosine(double c1, double c2) {
  PotentialSpec p;
  p.kind = Kind::Cosine;
  p.c1 = c1;
  p.c2 = c2;
  return p;
}

PotentialSpec PotentialSpec::sampled(std::vector<double> values) {
  PotentialSpec p;
  p.kind = Kind::Sampled;
  p.samples = std::move(values);
  p.symmetric = std::equal(p.samples.begin(), p.samples.end(), p.samples.rbegin());
  return p;
}

double PotentialSpec::operator()(double x, double length) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return c1;
    case Kind::Cosine:
      return c1 + c2 * std::cos(2.0 * std::numbers::pi * x / length);
    case Kind::Sampled: {
      const std::size_t n = samples.size();
      if (n == 1) return samples[0];
      double t = std::clamp(x / length, 0.0, 1.0) * static_cast<double>(n - 1);
      std::size_t i = std::min(static_cast<std::size_t>(t), n - 2);
      double f = t - static_cast<double>(i);
      return samples[i] * (1.0 - f) + samples[i + 1] * f;
    }
  }
  return 0.0;
}

PotentialSpec PotentialSpec::reversed() const {
  PotentialSpec r = *this;
  if (kind == Kind::Sampled) std::reverse(r.samples.begin(), r.samples.end());
  return r;
}

double PotentialSpec::min_value() const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return c1;
    case Kind::Cosine:
      return c1 - std::abs(c2);
    case Kind::Sampled:
      return *std::min_element(samples.begin(), samples.end());
  }
  return 0.0;
}

double PotentialSpec::max_value() const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return c1;
    case Kind::Cosine:
      return c1 + std::abs(c2);
    case Kind::Sampled:
      return *std::max_element(samples.begin(), samples.end());
  }
  return 0.0;
}

double PotentialSpec::sup_norm() const {
  return std::max(std::abs(min_value()), std::abs(max_value()));
}

bool PotentialSpec::is_zero() const {
  switch (kind) {
    case Kind::Zero:
      return true;
    case Kind::Constant:
      return c1 == 0.0;
    case Kind::Cosine:
      return c1 == 0.0 && c2 == 0.0;
    case Kind::Sampled:
      return std::all_of(samples.begin(), samples.end(), [](double v) { return v == 0.0; });
  }
  return false;
}

void PotentialSpec::validate() const {
  if (kind == Kind::Sampled) {
    if (samples.empty()) throw PreconditionError("sampled potential without samples");
    for (double v : samples)
      if (!std::isfinite(v)) throw PreconditionError("sampled potential has non-finite value");
    bool sym = std::equal(samples.begin(), samples.end(), samples.rbegin());
    if (symmetric && !sym)
      throw PreconditionError("sampled potential flagged symmetric but W(L-x) != W(x)");
  } else if (!std::isfinite(c1) || !std::isfinite(c2)) {
    throw PreconditionError("potential coefficients must be finite");
  }
}

bool PotentialSpec::operator==(const PotentialSpec& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case Kind::Zero:
      return true;
    case Kind::Constant:
      return c1 == o.c1;
    case Kind::Cosine:
      return c1 == o.c1 && c2 == o.c2;
    case Kind::Sampled:
      return samples == o.samples;
  }
  return false;
}

const char* kind_name(PotentialSpec::Kind k) {
  switch (k) {
    case PotentialSpec::Kind::Zero:
      return "zero";
    case PotentialSpec::Kind::Constant:
      return "constant";
    case PotentialSpec::Kind::Cosine:
      return "cosine";
    case PotentialSpec::Kind::Sampled:
      return "sampled";
  }
  return "?";
}

}  // namespace qtree
