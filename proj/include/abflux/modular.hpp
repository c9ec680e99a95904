// Closed-form one-dimensional toolkit: superposed Gaussian packets, exact free
// evolution, Weyl (displacement) expectations and modular momentum.
//
// Units: hbar = 1. Every state is a finite sum of complex Gaussians
//
//     psi(x) = sum_j  w_j * exp(-a_j x^2 + b_j x + c_j),   Re a_j > 0,
//
// which is closed under free propagation, so all expectations below are
// evaluated with exact Gaussian integrals rather than on a grid.
#pragma once

#include <complex>
#include <span>
#include <vector>

namespace abflux {

using cplx = std::complex<double>;

/// One packet of a 1D superposition:
/// coeff * exp(-(x - center)^2 / (4 sigma^2) + i k x).
struct GaussianTerm {
  cplx coeff{1.0, 0.0};
  double center = 0.0;
  double sigma = 1.0;
  double k = 0.0;
};

class State1D {
 public:
  struct Component {
    cplx weight;  // multiplies the Gaussian; absorbs normalization
    cplx a;       // quadratic coefficient, Re a > 0
    cplx b;       // linear coefficient
    cplx c;       // constant exponent
  };

  State1D(std::vector<Component> components, double mass, double elapsed);

  const std::vector<Component>& components() const { return components_; }
  double mass() const { return mass_; }
  double elapsed() const { return elapsed_; }

  /// <psi|psi> from exact overlaps, cross terms included.
  double norm() const;
  cplx amplitude(double x) const;

 private:
  std::vector<Component> components_;
  double mass_;
  double elapsed_;
};

State1D make_superposition_1d(std::span<const GaussianTerm> specs, double mass);

/// Exact free-particle propagation by t >= 0.
State1D evolve_free_1d(const State1D& state, double t);

/// <exp(i(a p + b x))>, Weyl ordered:
///   integral conj(psi(x)) exp(i b (x + a/2)) psi(x + a) dx.
cplx weyl_expectation_1d(const State1D& state, double a, double b);

/// <O(t)> with O(t) = cos[p L + 2 k0 (x(t) - p t / m)], evaluated on the state
/// propagated by t from the given (preparation-time) state.
double interference_observable(const State1D& state, double t, double L, double k0);

/// <p^n>, 1 <= n <= 8.
double moment_1d(const State1D& state, int n);

struct ModularValue {
  double value;
  double p0;
};

/// p mod p0 reduced into [0, p0).
ModularValue modular_reduce(double p, double p0);

/// Modulus p0 = 2 pi / L (h / L with hbar = 1).
inline double modular_period(double L) { return 2.0 * 3.14159265358979323846 / L; }

/// Residual of the modular conservation ellipse
///   1 - C^2 = pi1'^2 + pi2'^2 - 2 C pi1' pi2',
/// with C = cos(2 pi (p1 + p2) / p0) taken from the incoming momenta and
/// pi_i' = cos(2 pi p_i' / p0) from the outgoing ones. Zero when p1 + p2 = p1' + p2'.
double ellipse_residual(double p1, double p2, double p1_out, double p2_out, double p0);

}  // namespace abflux
