// Gauge-invariant probes of the lattice state: Wilson-line displacement
// expectations (characteristic function of the velocity distribution), the
// velocity distribution itself, rotation by pi with Wilson arcs, fringe phase,
// and step detection on time series.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "abflux/gauge.hpp"
#include "abflux/lattice.hpp"
#include "abflux/series.hpp"

namespace abflux {

enum class Axis { x, y };

/// sum_r conj(psi(r)) exp(-i W(r -> r + d)) psi(r + d) dx^2 over the straight
/// staircase from r to r + d, d = (di, dj) in sites. Sites whose partner falls
/// outside the grid contribute nothing. Throws if d cannot fit in the grid.
cplx displacement_expectation(const WaveFunction& psi, const GaugeField& field, int di, int dj);

/// Axis-aligned version of the above; n may be negative.
cplx displacement_expectation(const WaveFunction& psi, const GaugeField& field, Axis axis, int n);

/// Probability table over m v on M = 2N points of [-pi/dx, pi/dx), N the
/// number of sites along `axis`. Obtained by Fourier inversion of the
/// characteristic function chi(n) for |n| < N.
struct VelocityDistribution {
  Axis axis;
  double dx;
  std::vector<double> momentum;  // m v values
  std::vector<double> prob;

  double total() const;
  /// Moments with the lattice group velocity v(q) = sin(q dx) / (m dx).
  double mean_velocity(double mass) const;
  double mean_square_velocity(double mass) const;
};

VelocityDistribution velocity_distribution(const WaveFunction& psi, const GaugeField& field,
                                           Axis axis);

/// Expectation of rotation by pi about the origin dressed with a Wilson arc
/// at each site's own radius:
///   sum_r conj(psi(r)) exp(-i W(arc r -> -r, counterclockwise)) psi(-r) dx^2.
/// Arcs depend only on the grid, so they are traced once and reused.
class AngularProbe {
 public:
  explicit AngularProbe(const Grid2D& grid);

  cplx operator()(const WaveFunction& psi, const GaugeField& field) const;
  /// Sites left out because their circle leaves the grid.
  std::size_t skipped_sites() const { return skipped_; }

 private:
  Grid2D grid_;
  std::vector<std::uint32_t> site_;        // sites with a usable arc
  std::vector<std::size_t> offset_;        // arc k: links [offset_[k], offset_[k+1])
  std::vector<std::int32_t> links_;        // +-(2 * site + dir + 1)
  std::size_t skipped_ = 0;
};

cplx angular_displacement_expectation(const WaveFunction& psi, const GaugeField& field);

class FringeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// arg of sum_r |psi(r)|^2 exp(2 i k0 r_axis) dx^2. Throws FringeError when
/// the component's magnitude is below `floor` (no overlap, no fringes).
double fringe_shift(const WaveFunction& psi, double k0, Axis axis, double floor = 1e-3);

struct StepReport {
  double t_cross = 0.0;
  cplx before;
  cplx after;
  double width = 0.0;       // 10%-90% transition time
  bool drift_flag = false;  // a plateau drifts by more than 10x its scatter
  bool degenerate = false;  // no change between plateaus
};

class NoPlateau : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plateaus are means over the first and last `settle` of the series; the
/// crossing time is the midpoint of the largest |finite difference| (earliest
/// on ties).
StepReport detect_step(const TimeSeries& series, double settle);

std::string format_step_report(const StepReport& report, const std::string& probe);

}  // namespace abflux
