// Vector potential of a single flux line, stored as Peierls phases on links.
//
// Link phase theta(a -> b) = (e / hbar c) * integral_a^b A . dl. Conventions:
//   * thx(i, j) lives on (i, j) -> (i+1, j), thy(i, j) on (i, j) -> (i, j+1);
//   * the counterclockwise circulation of plaquette (i, j) is
//       thx(i, j) + thy(i+1, j) - thx(i, j+1) - thy(i, j)
//     and equals alpha on the plaquette holding the flux line;
//   * a gauge transformation chi maps theta(a -> b) to theta + chi(b) - chi(a)
//     and psi to exp(i chi) psi;
//   * wilson_phase is the signed link sum along a path, so a counterclockwise
//     loop returns the enclosed flux. Parallel transport picks up exp(-i W).
#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "abflux/lattice.hpp"

namespace abflux {

struct FluxLineSpec {
  double x = 0.0;
  double y = 0.0;
  double alpha = 0.0;  // e Phi / (hbar c)
  double vx = 0.0;
  double vy = 0.0;

  std::pair<double, double> position_at(double t) const { return {x + vx * t, y + vy * t}; }
  bool operator==(const FluxLineSpec&) const = default;
};

enum class GaugeKind {
  string,    // A_x = -Phi delta(x - xs) theta(y - ys): x-links above the flux carry -alpha
  coulomb,   // azimuthal A = Phi / (2 pi r)
  string_x,  // A_y = Phi theta(x - xs) delta(y - ys): y-links right of the flux carry +alpha
};

const char* to_string(GaugeKind kind);
GaugeKind gauge_kind_from_string(const std::string& name);

struct Site {
  int i;
  int j;
  bool operator==(const Site&) const = default;
};

/// Plaquette (i, j) has corners (i, j), (i+1, j), (i+1, j+1), (i, j+1).
using Plaquette = Site;

/// Plaquette containing (x, y). With `strict`, a point on a link line or
/// outside the interior plaquettes is rejected; otherwise ties go to the
/// lower-left plaquette (used when tracking a moving flux line).
Plaquette locate_plaquette(const Grid2D& grid, double x, double y, bool strict = true);

class GaugeField {
 public:
  GaugeField(Grid2D grid, FluxLineSpec flux, GaugeKind kind);

  const Grid2D& grid() const { return grid_; }
  const FluxLineSpec& flux() const { return flux_; }
  GaugeKind kind() const { return kind_; }

  double thx(int i, int j) const { return thx_[grid_.index(i, j)]; }
  double thy(int i, int j) const { return thy_[grid_.index(i, j)]; }
  double& thx(int i, int j) { return thx_[grid_.index(i, j)]; }
  double& thy(int i, int j) { return thy_[grid_.index(i, j)]; }
  std::span<const double> thx() const { return thx_; }
  std::span<const double> thy() const { return thy_; }

 private:
  Grid2D grid_;
  FluxLineSpec flux_;
  GaugeKind kind_;
  std::vector<double> thx_;  // entries with i = nx-1 unused, kept at 0
  std::vector<double> thy_;  // entries with j = ny-1 unused, kept at 0
};

GaugeField string_gauge(const Grid2D& grid, const FluxLineSpec& flux);
GaugeField coulomb_gauge(const Grid2D& grid, const FluxLineSpec& flux);
GaugeField string_x_gauge(const Grid2D& grid, const FluxLineSpec& flux);

/// Field for the flux at its position at time t. Non-strict placement, so a
/// moving line is tracked to whichever plaquette currently holds it.
GaugeField make_gauge(GaugeKind kind, const Grid2D& grid, const FluxLineSpec& flux,
                      double t = 0.0, bool strict = true);

/// Counterclockwise circulation reduced to (-pi, pi].
double plaquette_flux(const GaugeField& field, int i, int j);

struct PlaquetteAudit {
  Plaquette flux_plaquette;
  double flux_value;    // reduced circulation at the flux plaquette
  double flux_error;    // |flux_value - alpha| mod 2 pi
  double max_off_flux;  // largest |circulation| elsewhere
  bool ok;
};

PlaquetteAudit audit_plaquettes(const GaugeField& field, double tol = 1e-10);

GaugeField gauge_transform(const GaugeField& field, std::span<const double> chi);
WaveFunction gauge_transform(const WaveFunction& psi, std::span<const double> chi);
std::pair<GaugeField, WaveFunction> gauge_transform(const GaugeField& field,
                                                    const WaveFunction& psi,
                                                    std::span<const double> chi);

/// chi with gauge_transform(from, chi) == to, built by integrating the link
/// difference along row 0 and then up each column. Throws if the two fields
/// do not carry identical plaquette circulations.
std::vector<double> connecting_gauge(const GaugeField& from, const GaugeField& to);

/// Ordered nearest-neighbour site sequence.
class LatticePath {
 public:
  LatticePath() = default;
  explicit LatticePath(std::vector<Site> sites);

  const std::vector<Site>& sites() const { return sites_; }
  std::size_t links() const { return sites_.empty() ? 0 : sites_.size() - 1; }
  Site front() const { return sites_.front(); }
  Site back() const { return sites_.back(); }

  /// Concatenation; `tail` must start where this path ends.
  LatticePath then(const LatticePath& tail) const;

 private:
  std::vector<Site> sites_;
};

double wilson_phase(const GaugeField& field, const LatticePath& path);

struct StraightPath {
  Site from;
  int di;
  int dj;
};

struct ArcPath {
  double cx;
  double cy;
  double radius;
  double phi_from;
  double phi_to;  // counterclockwise when phi_to > phi_from
};

using PathSpec = std::variant<StraightPath, ArcPath>;

/// Straight: 4-connected staircase hugging the segment (greedy, x first on
/// ties). Arc: nearest-site trace of the circle, corners filled on the side
/// closer to the circle; endpoints are the sites nearest the true endpoints.
LatticePath build_path(const Grid2D& grid, const PathSpec& spec);

namespace detail {
/// Arc tracer behind build_path without the minimum-radius check.
LatticePath trace_arc(const Grid2D& grid, const ArcPath& spec);
}  // namespace detail

/// One "i j dir phase" line per link followed by a plaquette audit summary.
std::string gauge_dump(const GaugeField& field);

}  // namespace abflux
