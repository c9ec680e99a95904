#include "abflux/observables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace abflux {

namespace {

constexpr double kPi = std::numbers::pi;

void check_pair(const WaveFunction& psi, const GaugeField& field) {
  if (!(psi.grid() == field.grid())) throw std::invalid_argument("observable: grid mismatch");
}

}  // namespace

cplx displacement_expectation(const WaveFunction& psi, const GaugeField& field, int di, int dj) {
  check_pair(psi, field);
  const Grid2D& g = psi.grid();
  if (std::abs(di) >= g.nx() || std::abs(dj) >= g.ny())
    throw std::out_of_range("displacement_expectation: displacement exits the grid");
  if (di == 0 || dj == 0) {
    if (di == 0 && dj == 0) return inner_product(psi, psi);
    return di != 0 ? displacement_expectation(psi, field, Axis::x, di)
                   : displacement_expectation(psi, field, Axis::y, dj);
  }
  // The staircase has the same shape from every start site.
  const LatticePath shape = build_path(g, StraightPath{{di > 0 ? 0 : g.nx() - 1, dj > 0 ? 0 : g.ny() - 1}, di, dj});
  struct Move { int di, dj; bool x; int sign; };
  std::vector<Move> moves;
  const auto& s = shape.sites();
  for (std::size_t n = 1; n < s.size(); ++n) {
    const int ddi = s[n].i - s[n - 1].i, ddj = s[n].j - s[n - 1].j;
    const int oi = s[n - 1].i - s[0].i, oj = s[n - 1].j - s[0].j;
    // Link owner is the lower/left endpoint of the link.
    if (ddi != 0) moves.push_back({ddi > 0 ? oi : oi - 1, oj, true, ddi});
    else moves.push_back({oi, ddj > 0 ? oj : oj - 1, false, ddj});
  }
  auto a = psi.amps();
  cplx total = 0.0;
  for (int j = 0; j < g.ny(); ++j) {
    const int jj = j + dj;
    if (jj < 0 || jj >= g.ny()) continue;
    cplx row = 0.0;
    for (int i = 0; i < g.nx(); ++i) {
      const int ii = i + di;
      if (ii < 0 || ii >= g.nx()) continue;
      double w = 0.0;
      for (const Move& m : moves)
        w += m.sign * (m.x ? field.thx(i + m.di, j + m.dj) : field.thy(i + m.di, j + m.dj));
      row += std::conj(a[g.index(i, j)]) * std::polar(1.0, -w) * a[g.index(ii, jj)];
    }
    total += row;
  }
  return total * g.dx() * g.dx();
}

cplx displacement_expectation(const WaveFunction& psi, const GaugeField& field, Axis axis, int n) {
  check_pair(psi, field);
  const Grid2D& g = psi.grid();
  const int len = axis == Axis::x ? g.nx() : g.ny();
  const int lines = axis == Axis::x ? g.ny() : g.nx();
  if (std::abs(n) >= len) throw std::out_of_range("displacement_expectation: displacement exits the grid");
  auto a = psi.amps();
  std::vector<double> U(len);
  cplx total = 0.0;
  for (int l = 0; l < lines; ++l) {
    auto site = [&](int k) { return axis == Axis::x ? g.index(k, l) : g.index(l, k); };
    // Cumulative link phase along the line: W(k -> k + n) = U(k + n) - U(k).
    U[0] = 0.0;
    for (int k = 1; k < len; ++k)
      U[k] = U[k - 1] + (axis == Axis::x ? field.thx(k - 1, l) : field.thy(l, k - 1));
    cplx row = 0.0;
    const int lo = std::max(0, -n), hi = std::min(len, len - n);
    for (int k = lo; k < hi; ++k)
      row += std::conj(a[site(k)]) * std::polar(1.0, U[k] - U[k + n]) * a[site(k + n)];
    total += row;
  }
  return total * g.dx() * g.dx();
}

double VelocityDistribution::total() const {
  double s = 0.0;
  for (double p : prob) s += p;
  return s;
}

double VelocityDistribution::mean_velocity(double mass) const {
  double s = 0.0;
  for (std::size_t m = 0; m < prob.size(); ++m) s += prob[m] * std::sin(momentum[m] * dx);
  return s / (mass * dx);
}

double VelocityDistribution::mean_square_velocity(double mass) const {
  double s = 0.0;
  for (std::size_t m = 0; m < prob.size(); ++m) {
    const double v = std::sin(momentum[m] * dx);
    s += prob[m] * v * v;
  }
  return s / (mass * dx * mass * dx);
}

VelocityDistribution velocity_distribution(const WaveFunction& psi, const GaugeField& field,
                                           Axis axis) {
  check_pair(psi, field);
  const Grid2D& g = psi.grid();
  const int N = axis == Axis::x ? g.nx() : g.ny();
  const int M = 2 * N;
  const double dx = g.dx();
  std::vector<cplx> chi(N);
  for (int n = 0; n < N; ++n) chi[n] = displacement_expectation(psi, field, axis, n);

  VelocityDistribution out{axis, dx, std::vector<double>(M), std::vector<double>(M)};
  for (int m = 0; m < M; ++m) {
    const double q = -kPi / dx + 2.0 * kPi * m / (M * dx);
    // chi(-n) = conj(chi(n)) for the reversed straight path.
    double acc = chi[0].real();
    for (int n = 1; n < N; ++n) acc += 2.0 * (chi[n] * std::polar(1.0, -q * n * dx)).real();
    out.momentum[m] = q;
    out.prob[m] = acc / M;
  }
  return out;
}

AngularProbe::AngularProbe(const Grid2D& grid) : grid_(grid) {
  const double rmax = (std::min(grid.nx(), grid.ny()) / 2 - 1) * grid.dx();
  offset_.push_back(0);
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      const double x = grid.x(i), y = grid.y(j);
      const double r = std::hypot(x, y);
      if (r > rmax) {
        ++skipped_;
        continue;
      }
      const double phi = std::atan2(y, x);
      const LatticePath arc = detail::trace_arc(grid, ArcPath{0.0, 0.0, r, phi, phi + kPi});
      const std::size_t s = grid.index(i, j);
      if (!(arc.front() == Site{i, j}) ||
          grid.index(arc.back().i, arc.back().j) != grid.reflect(s))
        throw std::logic_error("AngularProbe: arc endpoints do not match the point reflection");
      const auto& p = arc.sites();
      for (std::size_t n = 1; n < p.size(); ++n) {
        const Site a = p[n - 1], b = p[n];
        std::int32_t code;
        if (b.i == a.i + 1) code = static_cast<std::int32_t>(2 * grid.index(a.i, a.j) + 1);
        else if (b.i == a.i - 1) code = -static_cast<std::int32_t>(2 * grid.index(b.i, b.j) + 1);
        else if (b.j == a.j + 1) code = static_cast<std::int32_t>(2 * grid.index(a.i, a.j) + 2);
        else code = -static_cast<std::int32_t>(2 * grid.index(b.i, b.j) + 2);
        links_.push_back(code);
      }
      site_.push_back(static_cast<std::uint32_t>(s));
      offset_.push_back(links_.size());
    }
  }
}

cplx AngularProbe::operator()(const WaveFunction& psi, const GaugeField& field) const {
  check_pair(psi, field);
  if (!(psi.grid() == grid_)) throw std::invalid_argument("AngularProbe: grid mismatch");
  auto a = psi.amps();
  auto thx = field.thx();
  auto thy = field.thy();
  cplx total = 0.0;
  for (std::size_t k = 0; k < site_.size(); ++k) {
    const std::size_t s = site_[k];
    const cplx left = std::conj(a[s]);
    const cplx right = a[grid_.reflect(s)];
    if (left == 0.0 || right == 0.0) continue;
    double w = 0.0;
    for (std::size_t n = offset_[k]; n < offset_[k + 1]; ++n) {
      const std::int32_t code = links_[n];
      const std::uint32_t u = static_cast<std::uint32_t>(code > 0 ? code : -code) - 1;
      const double th = (u & 1u) ? thy[u >> 1] : thx[u >> 1];
      w += code > 0 ? th : -th;
    }
    total += left * std::polar(1.0, -w) * right;
  }
  return total * grid_.dx() * grid_.dx();
}

cplx angular_displacement_expectation(const WaveFunction& psi, const GaugeField& field) {
  return AngularProbe(psi.grid())(psi, field);
}

double fringe_shift(const WaveFunction& psi, double k0, Axis axis, double floor) {
  const Grid2D& g = psi.grid();
  cplx total = 0.0;
  for (int j = 0; j < g.ny(); ++j) {
    cplx row = 0.0;
    for (int i = 0; i < g.nx(); ++i) {
      const double c = axis == Axis::x ? g.x(i) : g.y(j);
      row += std::norm(psi(i, j)) * std::polar(1.0, 2.0 * k0 * c);
    }
    total += row;
  }
  total *= g.dx() * g.dx();
  if (std::abs(total) < floor)
    throw FringeError("fringe_shift: fringe amplitude below the noise floor (packets not overlapping)");
  return std::arg(total);
}

namespace {

struct WindowStats {
  cplx mean;
  bool drifting;
};

WindowStats window_stats(const std::vector<cplx>& v, std::size_t lo, std::size_t hi) {
  const std::size_t n = hi - lo;
  cplx mean = 0.0;
  for (std::size_t k = lo; k < hi; ++k) mean += v[k];
  mean /= static_cast<double>(n);
  const std::size_t mid = lo + n / 2;
  cplx m1 = 0.0, m2 = 0.0;
  for (std::size_t k = lo; k < mid; ++k) m1 += v[k];
  for (std::size_t k = mid; k < hi; ++k) m2 += v[k];
  m1 /= static_cast<double>(mid - lo);
  m2 /= static_cast<double>(hi - mid);
  // Point-to-point scatter estimates the noise level.
  double scatter = 0.0;
  for (std::size_t k = lo + 1; k < hi; ++k) scatter += std::norm(v[k] - v[k - 1]);
  scatter = std::sqrt(scatter / (2.0 * static_cast<double>(n - 1)));
  const double drift = std::abs(m2 - m1);
  return {mean, drift > 1e-12 && drift > 10.0 * scatter};
}

}  // namespace

StepReport detect_step(const TimeSeries& series, double settle) {
  const auto& t = series.times;
  const auto& v = series.values;
  const std::size_t n = t.size();
  if (n < 4 || !(settle > 0.0)) throw NoPlateau("detect_step: series too short");
  std::size_t lead = 0;
  while (lead < n && t[lead] <= t.front() + settle) ++lead;
  std::size_t trail = n;
  while (trail > 0 && t[trail - 1] >= t.back() - settle) --trail;
  if (lead < 2 || n - trail < 2 || lead > trail)
    throw NoPlateau("detect_step: no separate leading and trailing plateaus of the settle length");

  const WindowStats before = window_stats(v, 0, lead);
  const WindowStats after = window_stats(v, trail, n);
  StepReport rep;
  rep.before = before.mean;
  rep.after = after.mean;
  rep.drift_flag = before.drifting || after.drifting;

  std::size_t kmax = 0;
  double dmax = -1.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double d = std::abs(v[k + 1] - v[k]) / (t[k + 1] - t[k]);
    if (d > dmax) {
      dmax = d;
      kmax = k;
    }
  }
  rep.t_cross = 0.5 * (t[kmax] + t[kmax + 1]);

  const double jump = std::abs(rep.after - rep.before);
  if (!(jump > 1e-14)) {
    rep.degenerate = true;
    rep.width = 0.0;
    return rep;
  }
  std::size_t a = kmax;
  while (a > 0 && std::abs(v[a] - rep.before) > 0.1 * jump) --a;
  std::size_t b = kmax + 1;
  while (b + 1 < n && std::abs(v[b] - rep.after) > 0.1 * jump) ++b;
  rep.width = std::max(0.0, t[b] - t[a]);
  return rep;
}

std::string format_step_report(const StepReport& r, const std::string& probe) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# step report probe=%s\n"
                "t_cross = %.17g\n"
                "before = %.17g %.17g\n"
                "after = %.17g %.17g\n"
                "width = %.17g\n"
                "drift_flag = %d\n"
                "degenerate = %d\n",
                probe.c_str(), r.t_cross, r.before.real(), r.before.imag(), r.after.real(),
                r.after.imag(), r.width, r.drift_flag ? 1 : 0, r.degenerate ? 1 : 0);
  return buf;
}

}  // namespace abflux
