// Unitary evolution under the Peierls-coupled lattice Hamiltonian
//
//   (H psi)(s) = 2/(m dx^2) psi(s) - 1/(2 m dx^2) sum_n exp(-i theta(s -> n)) psi(n)
//
// with Dirichlet walls. The hopping sign makes H covariant under
// gauge_transform: H[field'] exp(i chi) psi = exp(i chi) H[field] psi.
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abflux/gauge.hpp"
#include "abflux/lattice.hpp"
#include "abflux/series.hpp"

namespace abflux {

class HamiltonianSpec {
 public:
  using FieldProvider = std::function<GaugeField(double t)>;

  /// Static field.
  HamiltonianSpec(double mass, GaugeField field);
  /// Field rebuilt from `provider` at every requested time.
  HamiltonianSpec(double mass, Grid2D grid, FieldProvider provider);

  double mass() const { return mass_; }
  const Grid2D& grid() const { return grid_; }
  bool is_static() const { return fixed_.has_value(); }
  GaugeField field_at(double t) const;

  double hopping() const { return 1.0 / (2.0 * mass_ * grid_.dx() * grid_.dx()); }
  double onsite() const { return 2.0 / (mass_ * grid_.dx() * grid_.dx()); }
  /// Upper bound of the spectrum (which lies in [0, 4/(m dx^2)]).
  double spectral_bound() const { return 2.0 * onsite(); }

 private:
  double mass_;
  Grid2D grid_;
  std::optional<GaugeField> fixed_;
  FieldProvider provider_;
};

WaveFunction apply_hamiltonian(const HamiltonianSpec& spec, const WaveFunction& psi, double t);

enum class StepMethod { implicit_midpoint, split_checkerboard };

const char* to_string(StepMethod method);
StepMethod step_method_from_string(const std::string& name);

struct StepperConfig {
  double dt = 0.005;
  StepMethod method = StepMethod::implicit_midpoint;
  double tolerance = 1e-10;  // relative residual of the midpoint linear solve
  int max_iterations = 500;
};

void validate(const StepperConfig& cfg, const HamiltonianSpec& spec);

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class BoxViolation : public std::runtime_error {
 public:
  BoxViolation(const std::string& what, double time, double probability)
      : std::runtime_error(what), time_(time), probability_(probability) {}
  double time() const { return time_; }
  double probability() const { return probability_; }

 private:
  double time_;
  double probability_;
};

/// Advances psi by cfg.dt starting at time t. The field is sampled at t + dt/2.
class Propagator {
 public:
  Propagator(const HamiltonianSpec& spec, StepperConfig cfg);

  void step(WaveFunction& psi, double t);
  const StepperConfig& config() const { return cfg_; }
  /// Jacobi iterations used by the last implicit step.
  int last_iterations() const { return last_iterations_; }

 private:
  void load_field(double t);
  void implicit_step(WaveFunction& psi);
  void split_step(WaveFunction& psi);

  const HamiltonianSpec& spec_;
  StepperConfig cfg_;
  std::optional<double> loaded_time_;
  std::vector<cplx> hop_x_;  // exp(-i thx)
  std::vector<cplx> hop_y_;  // exp(-i thy)
  std::vector<cplx> rhs_, next_;
  int last_iterations_ = 0;
};

WaveFunction step(const WaveFunction& psi, const HamiltonianSpec& spec, double t,
                  const StepperConfig& cfg);

/// A probe maps the current state and field to a complex number.
struct ProbeSpec {
  std::string id;
  std::string params;
  std::function<cplx(const WaveFunction&, const GaugeField&, double)> fn;
};

struct ScheduleEntry {
  double time;
  std::size_t probe;  // index into the probe list
};

struct EvolveResult {
  WaveFunction final_state;
  double final_time;
  std::vector<TimeSeries> series;  // one per probe
  double max_norm_drift;           // over probe times and the final state
  long steps;
};

/// Steps psi0 from t0 to t_end (a multiple of dt past t0), invoking probes
/// at the scheduled times against the field at that time. Throws
/// BoxViolation when more than `box_limit` probability sits within two sites
/// of a wall.
EvolveResult evolve(const WaveFunction& psi0, double t0, double t_end,
                    const HamiltonianSpec& spec, const StepperConfig& cfg,
                    std::span<const ProbeSpec> probes, std::span<const ScheduleEntry> schedule,
                    double box_limit = 1e-6);

/// Exact e^{-iHt} for a static field by dense eigendecomposition; grids up
/// to 40 x 40 sites.
class DenseOracle {
 public:
  DenseOracle(const GaugeField& field, double mass);
  WaveFunction evolve(const WaveFunction& psi0, double t) const;
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }

 private:
  Grid2D grid_;
  std::vector<double> eigenvalues_;
  std::vector<cplx> vectors_;  // column-major N x N
};

WaveFunction dense_oracle_evolve(const WaveFunction& psi0, const GaugeField& field, double t,
                                 double mass);

/// Sets the worker count used by the row-parallel kernels (<= 0: library default).
void set_worker_threads(int n);

}  // namespace abflux
