#include "abflux/gauge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace abflux {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_phase(double p) {
  double r = std::remainder(p, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

// Flux located at continuous (x, y) inside plaquette `pq`.
GaugeField build(GaugeKind kind, const Grid2D& grid, const FluxLineSpec& flux, double x,
                 double y, Plaquette pq) {
  // The field records the flux where it currently sits.
  GaugeField field(grid, FluxLineSpec{x, y, flux.alpha, flux.vx, flux.vy}, kind);
  const double alpha = flux.alpha;
  switch (kind) {
    case GaugeKind::string:
      for (int j = pq.j + 1; j < grid.ny(); ++j) field.thx(pq.i, j) = -alpha;
      break;
    case GaugeKind::string_x:
      for (int i = pq.i + 1; i < grid.nx(); ++i) field.thy(i, pq.j) = alpha;
      break;
    case GaugeKind::coulomb: {
      const double scale = alpha / (2.0 * kPi);
      // Exact line integral of the azimuthal potential: the azimuth swept by the link.
      auto swept = [&](double ax, double ay, double bx, double by) {
        const double ux = ax - x, uy = ay - y, vx = bx - x, vy = by - y;
        return std::atan2(ux * vy - uy * vx, ux * vx + uy * vy);
      };
      for (int j = 0; j < grid.ny(); ++j) {
        for (int i = 0; i < grid.nx(); ++i) {
          if (i + 1 < grid.nx())
            field.thx(i, j) = scale * swept(grid.x(i), grid.y(j), grid.x(i + 1), grid.y(j));
          if (j + 1 < grid.ny())
            field.thy(i, j) = scale * swept(grid.x(i), grid.y(j), grid.x(i), grid.y(j + 1));
        }
      }
      break;
    }
  }
  return field;
}

}  // namespace

const char* to_string(GaugeKind kind) {
  switch (kind) {
    case GaugeKind::string: return "string";
    case GaugeKind::coulomb: return "coulomb";
    case GaugeKind::string_x: return "string-x";
  }
  return "?";
}

GaugeKind gauge_kind_from_string(const std::string& name) {
  if (name == "string") return GaugeKind::string;
  if (name == "coulomb") return GaugeKind::coulomb;
  if (name == "string-x") return GaugeKind::string_x;
  throw std::invalid_argument("unknown gauge '" + name + "' (string|coulomb|string-x)");
}

Plaquette locate_plaquette(const Grid2D& grid, double x, double y, bool strict) {
  const double fx = grid.fx(x), fy = grid.fy(y);
  const double ffx = std::floor(fx), ffy = std::floor(fy);
  if (strict && (fx == ffx || fy == ffy))
    throw std::invalid_argument("flux line lies on a lattice link or site");
  const int i = static_cast<int>(ffx), j = static_cast<int>(ffy);
  if (i < 0 || j < 0 || i > grid.nx() - 2 || j > grid.ny() - 2)
    throw std::invalid_argument("flux line outside the grid interior");
  return {i, j};
}

GaugeField::GaugeField(Grid2D grid, FluxLineSpec flux, GaugeKind kind)
    : grid_(grid), flux_(flux), kind_(kind), thx_(grid.size(), 0.0), thy_(grid.size(), 0.0) {}

GaugeField string_gauge(const Grid2D& grid, const FluxLineSpec& flux) {
  return make_gauge(GaugeKind::string, grid, flux);
}

GaugeField coulomb_gauge(const Grid2D& grid, const FluxLineSpec& flux) {
  return make_gauge(GaugeKind::coulomb, grid, flux);
}

GaugeField string_x_gauge(const Grid2D& grid, const FluxLineSpec& flux) {
  return make_gauge(GaugeKind::string_x, grid, flux);
}

GaugeField make_gauge(GaugeKind kind, const Grid2D& grid, const FluxLineSpec& flux, double t,
                      bool strict) {
  if (!std::isfinite(flux.alpha)) throw std::invalid_argument("flux alpha must be finite");
  const auto [x, y] = flux.position_at(t);
  return build(kind, grid, flux, x, y, locate_plaquette(grid, x, y, strict));
}

double plaquette_flux(const GaugeField& field, int i, int j) {
  const Grid2D& g = field.grid();
  if (i < 0 || j < 0 || i > g.nx() - 2 || j > g.ny() - 2)
    throw std::out_of_range("plaquette_flux: plaquette index out of range");
  return wrap_phase(field.thx(i, j) + field.thy(i + 1, j) - field.thx(i, j + 1) -
                    field.thy(i, j));
}

PlaquetteAudit audit_plaquettes(const GaugeField& field, double tol) {
  const Grid2D& g = field.grid();
  const auto [x, y] = field.flux().position_at(0.0);
  const Plaquette fp = locate_plaquette(g, x, y, false);
  PlaquetteAudit audit{fp, 0.0, 0.0, 0.0, false};
  for (int j = 0; j + 1 < g.ny(); ++j) {
    for (int i = 0; i + 1 < g.nx(); ++i) {
      const double f = plaquette_flux(field, i, j);
      if (i == fp.i && j == fp.j) {
        audit.flux_value = f;
        audit.flux_error = std::abs(wrap_phase(f - field.flux().alpha));
      } else {
        audit.max_off_flux = std::max(audit.max_off_flux, std::abs(f));
      }
    }
  }
  audit.ok = audit.flux_error <= tol && audit.max_off_flux <= tol;
  return audit;
}

GaugeField gauge_transform(const GaugeField& field, std::span<const double> chi) {
  const Grid2D& g = field.grid();
  if (chi.size() != g.size()) throw std::invalid_argument("gauge_transform: chi size mismatch");
  GaugeField out = field;
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const double c = chi[g.index(i, j)];
      if (i + 1 < g.nx()) out.thx(i, j) += chi[g.index(i + 1, j)] - c;
      if (j + 1 < g.ny()) out.thy(i, j) += chi[g.index(i, j + 1)] - c;
    }
  }
  return out;
}

WaveFunction gauge_transform(const WaveFunction& psi, std::span<const double> chi) {
  if (chi.size() != psi.grid().size())
    throw std::invalid_argument("gauge_transform: chi size mismatch");
  WaveFunction out = psi;
  auto a = out.amps();
  for (std::size_t s = 0; s < a.size(); ++s) a[s] *= std::polar(1.0, chi[s]);
  return out;
}

std::pair<GaugeField, WaveFunction> gauge_transform(const GaugeField& field,
                                                    const WaveFunction& psi,
                                                    std::span<const double> chi) {
  if (!(field.grid() == psi.grid())) throw std::invalid_argument("gauge_transform: grid mismatch");
  return {gauge_transform(field, chi), gauge_transform(psi, chi)};
}

std::vector<double> connecting_gauge(const GaugeField& from, const GaugeField& to) {
  const Grid2D& g = from.grid();
  if (!(g == to.grid())) throw std::invalid_argument("connecting_gauge: grid mismatch");
  std::vector<double> chi(g.size(), 0.0);
  for (int i = 1; i < g.nx(); ++i)
    chi[g.index(i, 0)] = chi[g.index(i - 1, 0)] + to.thx(i - 1, 0) - from.thx(i - 1, 0);
  for (int j = 1; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      chi[g.index(i, j)] = chi[g.index(i, j - 1)] + to.thy(i, j - 1) - from.thy(i, j - 1);

  const GaugeField check = gauge_transform(from, chi);
  double worst = 0.0;
  for (std::size_t s = 0; s < g.size(); ++s) {
    worst = std::max(worst, std::abs(check.thx()[s] - to.thx()[s]));
    worst = std::max(worst, std::abs(check.thy()[s] - to.thy()[s]));
  }
  if (worst > 1e-8)
    throw std::invalid_argument("connecting_gauge: fields carry different plaquette fluxes");
  return chi;
}

LatticePath::LatticePath(std::vector<Site> sites) : sites_(std::move(sites)) {
  for (std::size_t n = 1; n < sites_.size(); ++n) {
    const int d = std::abs(sites_[n].i - sites_[n - 1].i) + std::abs(sites_[n].j - sites_[n - 1].j);
    if (d != 1) throw std::invalid_argument("LatticePath: consecutive sites are not adjacent");
  }
}

LatticePath LatticePath::then(const LatticePath& tail) const {
  if (sites_.empty()) return tail;
  if (tail.sites_.empty()) return *this;
  if (!(tail.front() == back())) throw std::invalid_argument("LatticePath::then: paths do not meet");
  std::vector<Site> s = sites_;
  s.insert(s.end(), tail.sites_.begin() + 1, tail.sites_.end());
  return LatticePath(std::move(s));
}

double wilson_phase(const GaugeField& field, const LatticePath& path) {
  const Grid2D& g = field.grid();
  const auto& s = path.sites();
  double total = 0.0;
  for (std::size_t n = 1; n < s.size(); ++n) {
    const Site a = s[n - 1], b = s[n];
    if (!g.contains(a.i, a.j) || !g.contains(b.i, b.j))
      throw std::out_of_range("wilson_phase: path leaves the grid");
    if (b.i == a.i + 1) total += field.thx(a.i, a.j);
    else if (b.i == a.i - 1) total -= field.thx(b.i, b.j);
    else if (b.j == a.j + 1) total += field.thy(a.i, a.j);
    else total -= field.thy(b.i, b.j);
  }
  return total;
}

namespace {

LatticePath straight(const Grid2D& grid, const StraightPath& p) {
  if (!grid.contains(p.from.i, p.from.j) || !grid.contains(p.from.i + p.di, p.from.j + p.dj))
    throw std::out_of_range("build_path: straight path exits the grid");
  std::vector<Site> sites;
  sites.reserve(std::abs(p.di) + std::abs(p.dj) + 1);
  sites.push_back(p.from);
  const int sx = p.di > 0 ? 1 : -1, sy = p.dj > 0 ? 1 : -1;
  int a = 0, b = 0;
  // Perpendicular distance (times |d|) of offset (u, v) from the segment direction.
  auto off = [&](int u, int v) { return std::abs(static_cast<double>(u) * p.dj - static_cast<double>(v) * p.di); };
  while (a != p.di || b != p.dj) {
    const bool can_x = a != p.di, can_y = b != p.dj;
    if (can_x && (!can_y || off(a + sx, b) <= off(a, b + sy))) a += sx;
    else b += sy;
    sites.push_back({p.from.i + a, p.from.j + b});
  }
  return LatticePath(std::move(sites));
}

}  // namespace

LatticePath detail::trace_arc(const Grid2D& grid, const ArcPath& p) {
  const double span = p.phi_to - p.phi_from;
  const int samples = std::max(1, static_cast<int>(std::ceil(std::abs(span) * p.radius / (0.2 * grid.dx()))));
  auto nearest = [&](double phi) {
    const double x = p.cx + p.radius * std::cos(phi), y = p.cy + p.radius * std::sin(phi);
    return Site{static_cast<int>(std::lround(grid.fx(x))), static_cast<int>(std::lround(grid.fy(y)))};
  };
  auto miss = [&](Site s) {
    return std::abs(std::hypot(grid.x(s.i) - p.cx, grid.y(s.j) - p.cy) - p.radius);
  };
  std::vector<Site> sites{nearest(p.phi_from)};
  for (int n = 1; n <= samples; ++n) {
    const Site s = nearest(p.phi_from + span * n / samples);
    const Site last = sites.back();
    if (s == last) continue;
    if (std::abs(s.i - last.i) > 1 || std::abs(s.j - last.j) > 1)
      throw std::logic_error("build_path: arc sampling skipped a site");
    if (s.i != last.i && s.j != last.j) {
      const Site c1{s.i, last.j}, c2{last.i, s.j};
      sites.push_back(miss(c1) <= miss(c2) ? c1 : c2);
    }
    sites.push_back(s);
  }
  for (const Site& s : sites)
    if (!grid.contains(s.i, s.j)) throw std::out_of_range("build_path: arc exits the grid");
  return LatticePath(std::move(sites));
}

LatticePath build_path(const Grid2D& grid, const PathSpec& spec) {
  if (const auto* s = std::get_if<StraightPath>(&spec)) return straight(grid, *s);
  const auto& a = std::get<ArcPath>(spec);
  if (a.radius < 4.0 * grid.dx()) throw std::invalid_argument("build_path: arc radius below 4 dx");
  return detail::trace_arc(grid, a);
}

std::string gauge_dump(const GaugeField& field) {
  const Grid2D& g = field.grid();
  std::ostringstream out;
  out << "# gauge=" << to_string(field.kind()) << " nx=" << g.nx() << " ny=" << g.ny()
      << " dx=" << g.dx() << " alpha=" << field.flux().alpha << "\n";
  char line[96];
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (i + 1 < g.nx()) {
        std::snprintf(line, sizeof line, "%d %d x %.17g\n", i, j, field.thx(i, j));
        out << line;
      }
      if (j + 1 < g.ny()) {
        std::snprintf(line, sizeof line, "%d %d y %.17g\n", i, j, field.thy(i, j));
        out << line;
      }
    }
  }
  const PlaquetteAudit a = audit_plaquettes(field);
  std::snprintf(line, sizeof line, "# audit flux_plaquette=%d,%d flux=%.17g max_off=%.3e %s\n",
                a.flux_plaquette.i, a.flux_plaquette.j, a.flux_value, a.max_off_flux,
                a.ok ? "ok" : "FAIL");
  out << line;
  return out.str();
}

}  // namespace abflux
