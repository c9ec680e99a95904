#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "abflux/observables.hpp"

using namespace abflux;

namespace {

constexpr double kPi = std::numbers::pi;

WaveFunction pair_state(const Grid2D& g, PacketSpec a, PacketSpec b, cplx rel) {
  const std::pair<WaveFunction, cplx> parts[2] = {{gaussian_packet(g, a), 1.0}, {gaussian_packet(g, b), rel}};
  return superpose(parts);
}

GaugeField zero_field(const Grid2D& g) { return string_gauge(g, {0.0, 0.0, 0.0, 0.0, 0.0}); }

TimeSeries synthetic_step(double t_step, double tau, cplx before, cplx after, double noise, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  TimeSeries s{"chi", "", {}, {}};
  for (int k = 0; k <= 320; ++k) {
    const double t = 0.05 * k;
    const double w = 0.5 * (1.0 + std::tanh((t - t_step) / tau));
    s.push(t, before + (after - before) * w + noise * cplx(n01(rng), n01(rng)));
  }
  return s;
}

}  // namespace

TEST_CASE("displacement expectation in zero field is the plain overlap") {
  const Grid2D g(80, 80, 0.25);
  const GaugeField f = zero_field(g);
  const WaveFunction psi = pair_state(g, {-2.0, 3.0, 1.0, 1.0, 0.5, 1.0}, {-2.0, -3.0, 1.0, 1.0, 0.5, 1.0}, {0.3, 0.8});
  for (auto [di, dj] : {std::pair{0, 24}, {0, -24}, {5, 0}, {-3, 11}, {7, -9}, {0, 0}}) {
    cplx direct = 0.0;
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        if (g.contains(i + di, j + dj)) direct += std::conj(psi(i, j)) * psi(i + di, j + dj);
    direct *= g.dx() * g.dx();
    CAPTURE(di);
    CAPTURE(dj);
    CHECK(std::abs(displacement_expectation(psi, f, di, dj) - direct) < 1e-13);
  }
  CHECK(std::abs(displacement_expectation(psi, f, Axis::y, 24) - displacement_expectation(psi, f, 0, 24)) < 1e-14);
  CHECK_THROWS_AS(displacement_expectation(psi, f, Axis::x, 80), std::out_of_range);
  CHECK_THROWS_AS(displacement_expectation(psi, f, 3, -80), std::out_of_range);
  // two packets displaced by d: half the relative weight
  const cplx rel = std::polar(1.0, 0.7);
  const WaveFunction two = pair_state(g, {0.0, 4.5, 1.0, 0.0, 0.0, 1.0}, {0.0, -4.5, 1.0, 0.0, 0.0, 1.0}, rel);
  CHECK(std::abs(displacement_expectation(two, f, Axis::y, 36) - 0.5 * std::conj(rel)) < 1e-4);
}

TEST_CASE("displacement with flux: staircase Wilson lines site by site") {
  const Grid2D g(64, 64, 0.25);
  const GaugeField f = string_gauge(g, {0.0, 0.0, 1.0, 0.0, 0.0});
  const WaveFunction psi = pair_state(g, {-1.0, 2.0, 1.0, 1.0, 0.0, 1.0}, {1.0, -2.0, 1.0, 0.0, 1.0, 1.0}, {0.0, 1.0});
  for (auto [di, dj] : {std::pair{0, 16}, {0, -16}, {7, -9}, {-8, 16}, {5, 5}}) {
    cplx direct = 0.0;
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        if (!g.contains(i + di, j + dj)) continue;
        const double w = wilson_phase(f, build_path(g, StraightPath{{i, j}, di, dj}));
        direct += std::conj(psi(i, j)) * std::polar(1.0, -w) * psi(i + di, j + dj);
      }
    direct *= g.dx() * g.dx();
    CAPTURE(di);
    CAPTURE(dj);
    CHECK(std::abs(displacement_expectation(psi, f, di, dj) - direct) < 1e-13);
  }
}

TEST_CASE("velocity distribution equals the padded Fourier intensity") {
  const Grid2D g(80, 64, 0.25);
  const GaugeField f = zero_field(g);
  const WaveFunction psi = pair_state(g, {-2.0, 1.0, 1.0, 2.0, -1.0, 1.0}, {2.5, -1.0, 1.2, -1.0, 0.5, 1.0}, {0.0, 1.0});
  for (Axis axis : {Axis::x, Axis::y}) {
    const VelocityDistribution d = velocity_distribution(psi, f, axis);
    const int N = axis == Axis::x ? g.nx() : g.ny();
    const int lines = axis == Axis::x ? g.ny() : g.nx();
    REQUIRE(d.prob.size() == static_cast<std::size_t>(2 * N));
    double worst = 0.0, vmean = 0.0, v2 = 0.0, low = 0.0;
    for (int m = 0; m < 2 * N; ++m) {
      const double q = -kPi / g.dx() + kPi * m / (N * g.dx());
      double p = 0.0;
      for (int l = 0; l < lines; ++l) {
        cplx acc = 0.0;
        for (int k = 0; k < N; ++k)
          acc += (axis == Axis::x ? psi(k, l) : psi(l, k)) * std::polar(1.0, -q * k * g.dx());
        p += std::norm(acc);
      }
      p *= g.dx() * g.dx() / (2 * N);
      worst = std::max(worst, std::abs(p - d.prob[m]));
      low = std::min(low, d.prob[m]);
      CHECK(d.momentum[m] == doctest::Approx(q));
      const double v = std::sin(q * g.dx()) / g.dx();
      vmean += p * v;
      v2 += p * v * v;
    }
    CHECK(worst < 1e-12);
    CHECK(low > -1e-12);
    CHECK(d.total() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.mean_velocity(1.0) == doctest::Approx(vmean).epsilon(1e-10));
    CHECK(d.mean_square_velocity(1.0) == doctest::Approx(v2).epsilon(1e-10));
    CHECK(d.mean_velocity(2.0) == doctest::Approx(vmean / 2.0).epsilon(1e-10));
  }
  // a single packet moves at the lattice group velocity
  const WaveFunction one = gaussian_packet(g, {0.0, 0.0, 1.5, 2.0, 0.0, 1.0});
  CHECK(velocity_distribution(one, f, Axis::x).mean_velocity(1.0) ==
        doctest::Approx(std::sin(2.0 * g.dx()) / g.dx()).epsilon(5e-3));
}

TEST_CASE("velocity distribution is gauge invariant") {
  const Grid2D g(80, 80, 0.25);
  const GaugeField f = string_gauge(g, {0.0, 0.0, 2.2, 0.0, 0.0});
  const WaveFunction psi = pair_state(g, {-3.0, 2.5, 1.0, 2.0, 0.0, 1.0}, {-3.0, -2.5, 1.0, 2.0, 0.0, 1.0}, 1.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  std::vector<double> chi(g.size());
  for (double& c : chi) c = u(rng);
  auto [f2, psi2] = gauge_transform(f, psi, chi);
  for (Axis axis : {Axis::x, Axis::y}) {
    const auto a = velocity_distribution(psi, f, axis), b = velocity_distribution(psi2, f2, axis);
    double worst = 0.0;
    for (std::size_t m = 0; m < a.prob.size(); ++m) worst = std::max(worst, std::abs(a.prob[m] - b.prob[m]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("rotation by pi with Wilson arcs") {
  const Grid2D g(96, 96, 0.25);
  const double alpha = 1.3, beta = 0.4;
  const WaveFunction psi = pair_state(g, {0.0, 6.0, 1.0, 0.0, 0.0, 1.0}, {0.0, -6.0, 1.0, 0.0, 0.0, 1.0}, std::polar(1.0, beta));
  const AngularProbe probe(g);
  CHECK(probe.skipped_sites() > 0);
  CHECK(probe.skipped_sites() < g.size() / 2);
  // no flux: plain overlap with the reflected state
  CHECK(std::abs(probe(psi, coulomb_gauge(g, {0.0, 0.0, 0.0, 0.0, 0.0})) - std::cos(beta)) < 1e-7);
  // any counterclockwise half turn in the symmetric gauge picks up alpha / 2
  const cplx expect = std::polar(1.0, -alpha / 2.0) * std::cos(beta);
  const GaugeField c = coulomb_gauge(g, {0.0, 0.0, alpha, 0.0, 0.0});
  CHECK(std::abs(probe(psi, c) - expect) < 1e-7);
  // the same physical state written in the string gauge
  const GaugeField s = string_gauge(g, {0.0, 0.0, alpha, 0.0, 0.0});
  const WaveFunction in_s = gauge_transform(psi, connecting_gauge(c, s));
  CHECK(std::abs(angular_displacement_expectation(in_s, s) - probe(psi, c)) < 1e-12);
  CHECK_THROWS(probe(gaussian_packet(Grid2D(64, 64, 0.25), {0.0, 0.0, 1.0, 0.0, 0.0, 1.0}),
                     coulomb_gauge(Grid2D(64, 64, 0.25), {0.0, 0.0, 0.0, 0.0, 0.0})));
}

TEST_CASE("fringe phase") {
  const Grid2D g(96, 64, 0.25);
  const double k0 = 2.0;
  for (double phi : {0.0, 1.0, -2.5, 3.0}) {
    // two counter-propagating components on the same envelope
    const WaveFunction psi = pair_state(g, {0.0, 0.0, 1.5, k0, 0.0, 1.0}, {0.0, 0.0, 1.5, -k0, 0.0, 1.0}, std::polar(1.0, phi));
    CAPTURE(phi);
    CHECK(std::abs(std::remainder(fringe_shift(psi, k0, Axis::x) - phi, 2.0 * kPi)) < 1e-6);
  }
  const WaveFunction rot = pair_state(g, {0.0, 0.0, 1.5, 0.0, k0, 1.0}, {0.0, 0.0, 1.5, 0.0, -k0, 1.0}, std::polar(1.0, 0.5));
  CHECK(fringe_shift(rot, k0, Axis::y) == doctest::Approx(0.5).epsilon(1e-6));
  const WaveFunction apart = pair_state(g, {-6.0, 0.0, 1.0, k0, 0.0, 1.0}, {6.0, 0.0, 1.0, -k0, 0.0, 1.0}, 1.0);
  CHECK_THROWS_AS(fringe_shift(apart, k0, Axis::x), FringeError);
}

TEST_CASE("step detection on a synthetic step") {
  const cplx before = 0.5, after = 0.5 * std::polar(1.0, -kPi / 2.0);
  const double tau = 0.4;
  const StepReport r = detect_step(synthetic_step(8.0, tau, before, after, 1e-4, 1), 1.0);
  CHECK(std::abs(r.t_cross - 8.0) <= 0.05);
  CHECK(std::abs(r.before - before) < 1e-4);
  CHECK(std::abs(r.after - after) < 1e-4);
  // 10-90% of tanh is 2 tau atanh(0.8), up to the 0.05 sampling
  CHECK(std::abs(r.width - 2.0 * tau * std::atanh(0.8)) <= 0.1);
  CHECK_FALSE(r.drift_flag);
  CHECK_FALSE(r.degenerate);

  const std::string text = format_step_report(r, "chi");
  CHECK(text.rfind("# step report probe=chi\n", 0) == 0);
  CHECK(text.find("drift_flag = 0") != std::string::npos);
}

TEST_CASE("step detection edge cases") {
  const StepReport flat = detect_step(synthetic_step(8.0, 0.4, 0.5, 0.5, 0.0, 2), 1.0);
  CHECK(flat.degenerate);
  CHECK(flat.width == 0.0);

  // a plateau that keeps moving
  TimeSeries ramp{"chi", "", {}, {}};
  for (int k = 0; k <= 320; ++k) {
    const double t = 0.05 * k;
    ramp.push(t, (t < 8.0 ? 0.0 : 1.0) + 0.01 * t);
  }
  CHECK(detect_step(ramp, 1.0).drift_flag);

  const TimeSeries shortie = synthetic_step(8.0, 0.4, 0.0, 1.0, 0.0, 3).window(7.0, 7.1);
  CHECK_THROWS_AS(detect_step(shortie, 1.0), NoPlateau);
  CHECK_THROWS_AS(detect_step(synthetic_step(8.0, 0.4, 0.0, 1.0, 0.0, 3), 9.0), NoPlateau);
  CHECK_THROWS_AS(detect_step(synthetic_step(8.0, 0.4, 0.0, 1.0, 0.0, 3), 0.0), NoPlateau);
}

TEST_CASE("series text round trip") {
  TimeSeries s = synthetic_step(8.0, 0.4, 0.5, cplx(0.0, -0.5), 1e-3, 4);
  s.params = "d=0,64 alpha=1.5707963267948966";
  const TimeSeries back = parse_series(format_series(s));
  CHECK(back.probe == "chi");
  CHECK(back.params == s.params);
  REQUIRE(back.size() == s.size());
  bool same = true;
  for (std::size_t k = 0; k < s.size(); ++k) same = same && back.times[k] == s.times[k] && back.values[k] == s.values[k];
  CHECK(same);
  CHECK(s.window(2.0, 3.0).size() == 21);
  CHECK_THROWS(s.push(1.0, 0.0));
  CHECK_THROWS(parse_series("t re im\n1 2\n"));

  const auto dir = std::filesystem::temp_directory_path() / "abflux_series_test";
  std::filesystem::create_directories(dir);
  write_series(dir / "chi.series", s);
  CHECK(std::filesystem::exists(dir / "chi.series"));
  std::filesystem::remove_all(dir);
}
