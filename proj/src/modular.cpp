#include "abflux/modular.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace abflux {

namespace {

constexpr double kPi = std::numbers::pi;

// Integral over the real line of exp(-A x^2 + B x + C), Re A > 0.
cplx gaussian_integral(cplx A, cplx B, cplx C) {
  return std::sqrt(kPi / A) * std::exp(B * B / (4.0 * A) + C);
}

// integral conj(f_i(x)) exp(i beta (x + d/2)) f_j(x + d) dx for two components.
cplx weyl_pair(const State1D::Component& fi, const State1D::Component& fj, double d,
               double beta) {
  const cplx I(0.0, 1.0);
  const cplx A = std::conj(fi.a) + fj.a;
  const cplx B = std::conj(fi.b) + I * beta - 2.0 * fj.a * d + fj.b;
  const cplx C = std::conj(fi.c) + I * beta * d / 2.0 - fj.a * d * d + fj.b * d + fj.c;
  return std::conj(fi.weight) * fj.weight * gaussian_integral(A, B, C);
}

}  // namespace

State1D::State1D(std::vector<Component> components, double mass, double elapsed)
    : components_(std::move(components)), mass_(mass), elapsed_(elapsed) {
  if (components_.empty()) throw std::invalid_argument("State1D: no components");
  if (!(mass_ > 0.0)) throw std::invalid_argument("State1D: mass must be positive");
  for (const auto& c : components_) {
    if (!(c.a.real() > 0.0))
      throw std::invalid_argument("State1D: component is not normalizable (Re a <= 0)");
  }
}

double State1D::norm() const {
  double total = 0.0;
  for (const auto& fi : components_)
    for (const auto& fj : components_) total += weyl_pair(fi, fj, 0.0, 0.0).real();
  return total;
}

cplx State1D::amplitude(double x) const {
  cplx sum = 0.0;
  for (const auto& f : components_) sum += f.weight * std::exp(-f.a * x * x + f.b * x + f.c);
  return sum;
}

State1D make_superposition_1d(std::span<const GaussianTerm> specs, double mass) {
  if (specs.empty()) throw std::invalid_argument("make_superposition_1d: empty spec list");
  std::vector<State1D::Component> comps;
  comps.reserve(specs.size());
  for (std::size_t n = 0; n < specs.size(); ++n) {
    const auto& s = specs[n];
    if (!(s.sigma > 0.0))
      throw std::invalid_argument("make_superposition_1d: term " + std::to_string(n) +
                                  " has non-positive sigma");
    if (!std::isfinite(s.coeff.real()) || !std::isfinite(s.coeff.imag()))
      throw std::invalid_argument("make_superposition_1d: term " + std::to_string(n) +
                                  " has a non-finite coefficient");
    const double a = 1.0 / (4.0 * s.sigma * s.sigma);
    comps.push_back({s.coeff, cplx(a, 0.0), cplx(2.0 * a * s.center, s.k),
                     cplx(-a * s.center * s.center, 0.0)});
  }
  State1D raw(comps, mass, 0.0);
  const double n = raw.norm();
  if (!(n > 0.0)) throw std::invalid_argument("make_superposition_1d: state has zero norm");
  const double scale = 1.0 / std::sqrt(n);
  for (auto& c : comps) c.weight *= scale;
  return State1D(std::move(comps), mass, 0.0);
}

State1D evolve_free_1d(const State1D& state, double t) {
  if (t < 0.0) throw std::invalid_argument("evolve_free_1d: negative duration");
  if (t == 0.0) return state;
  const cplx I(0.0, 1.0);
  std::vector<State1D::Component> out;
  out.reserve(state.components().size());
  for (const auto& f : state.components()) {
    // Im s > 0 for t > 0, so the principal log is continuous along the flow.
    const cplx s = 1.0 + 2.0 * I * f.a * t / state.mass();
    const cplx c = f.c + f.b * f.b / (4.0 * f.a) * (1.0 - 1.0 / s) - 0.5 * std::log(s);
    out.push_back({f.weight, f.a / s, f.b / s, c});
  }
  return State1D(std::move(out), state.mass(), state.elapsed() + t);
}

cplx weyl_expectation_1d(const State1D& state, double a, double b) {
  cplx total = 0.0;
  for (const auto& fi : state.components())
    for (const auto& fj : state.components()) total += weyl_pair(fi, fj, a, b);
  return total;
}

double interference_observable(const State1D& state, double t, double L, double k0) {
  const State1D evolved = evolve_free_1d(state, t);
  return weyl_expectation_1d(evolved, L - 2.0 * k0 * t / state.mass(), 2.0 * k0).real();
}

double moment_1d(const State1D& state, int n) {
  if (n < 1 || n > 8) throw std::invalid_argument("moment_1d: order must be in 1..8");
  const cplx I(0.0, 1.0);
  double total = 0.0;
  for (const auto& fi : state.components()) {
    for (const auto& fj : state.components()) {
      // Momentum-space amplitudes are Gaussians in p; multiply and take moments.
      const cplx ai = std::conj(fi.a);
      const cplx A = 1.0 / (4.0 * ai) + 1.0 / (4.0 * fj.a);
      const cplx B = I * std::conj(fi.b) / (2.0 * ai) - I * fj.b / (2.0 * fj.a);
      const cplx C = std::conj(fi.c + fi.b * fi.b / (4.0 * fi.a)) + fj.c +
                     fj.b * fj.b / (4.0 * fj.a);
      const cplx pref = std::conj(fi.weight * std::sqrt(kPi / fi.a)) * fj.weight *
                        std::sqrt(kPi / fj.a) / (2.0 * kPi);
      cplx prev = gaussian_integral(A, B, C);  // I_0
      cplx cur = B / (2.0 * A) * prev;          // I_1
      for (int k = 1; k < n; ++k) {
        const cplx next = (B * cur + static_cast<double>(k) * prev) / (2.0 * A);
        prev = cur;
        cur = next;
      }
      total += (pref * cur).real();
    }
  }
  return total;
}

ModularValue modular_reduce(double p, double p0) {
  if (!(p0 > 0.0)) throw std::invalid_argument("modular_reduce: modulus must be positive");
  double v = p - std::floor(p / p0) * p0;
  if (v >= p0 || v < 0.0) v = 0.0;
  return {v, p0};
}

double ellipse_residual(double p1, double p2, double p1_out, double p2_out, double p0) {
  if (!(p0 > 0.0)) throw std::invalid_argument("ellipse_residual: modulus must be positive");
  const double w = 2.0 * kPi / p0;
  const double C = std::cos(w * (p1 + p2));
  const double q1 = std::cos(w * p1_out);
  const double q2 = std::cos(w * p2_out);
  return std::abs(1.0 - C * C - (q1 * q1 + q2 * q2 - 2.0 * C * q1 * q2));
}

}  // namespace abflux
