// Acceptance run: one PASS/FAIL line per criterion, detail lines indented.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "abflux/modular.hpp"
#include "abflux/scenario.hpp"

using namespace abflux;

namespace {

constexpr double kPi = std::numbers::pi;
const std::filesystem::path kConfigs = std::filesystem::path(ABFLUX_SOURCE_DIR) / "configs";

int failures = 0;

void verdict(int n, bool ok, const std::string& what) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", n, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class... A>
void info(const char* fmt, A... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

double wrap(double a) { return std::remainder(a, 2.0 * kPi); }

struct Timed {
  RunResult result;
  double seconds;
};

Timed timed_run(const Scenario& s) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r = run(s, {false, 0});
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(r), sec};
}

const StepReport& report(const RunResult& r, const std::string& probe) {
  for (const auto& n : r.reports)
    if (n.probe == probe) return n.report;
  throw std::out_of_range("no report " + probe);
}

double max_change(const TimeSeries& s) {
  double m = 0.0;
  for (const cplx& v : s.values) m = std::max(m, std::abs(v - s.values.front()));
  return m;
}

double max_norm_drift = 0.0;

void note_drift(const RunResult& r) { max_norm_drift = std::max(max_norm_drift, r.max_norm_drift); }

}  // namespace

int main() {
  std::printf("acceptance: desk-scale runs, several minutes\n");

  // Default flyby over the alpha grid, plus alpha = 2 pi for quantization.
  const Scenario flyby = load_config_file(kConfigs / "flyby.cfg");
  const std::vector<double> alphas = {0.0, kPi / 4, kPi / 2, kPi, 1.5 * kPi};
  std::map<int, Timed> runs;
  for (std::size_t n = 0; n < alphas.size(); ++n) {
    Scenario s = flyby;
    s.flux.alpha = alphas[n];
    runs.emplace(static_cast<int>(n), timed_run(s));
    note_drift(runs.at(static_cast<int>(n)).result);
    std::printf("  flyby alpha=%.6f done in %.1f s\n", alphas[n], runs.at(static_cast<int>(n)).seconds);
  }
  Scenario full_turn = flyby;
  full_turn.flux.alpha = 2.0 * kPi;
  const Timed turn = timed_run(full_turn);
  note_drift(turn.result);

  // 1
  {
    bool ok = true;
    double worst = 0.0, slowest = 0.0;
    for (std::size_t n = 0; n < alphas.size(); ++n) {
      const Timed& t = runs.at(static_cast<int>(n));
      const StepReport& rep = report(t.result, "chi");
      const cplx jump = rep.after - rep.before;
      const double err = std::abs(jump - predicted_jump(alphas[n]));
      info("alpha=%.4f  jump=(%+.5f, %+.5f)  predicted=(%+.5f, %+.5f)  |err|=%.2e  %.1f s", alphas[n],
             jump.real(), jump.imag(), predicted_jump(alphas[n]).real(), predicted_jump(alphas[n]).imag(), err,
             t.seconds);
      worst = std::max(worst, err);
      slowest = std::max(slowest, t.seconds);
      ok = ok && err <= 2e-2 && t.seconds <= 300.0;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "flyby jump max |error| = %.2e (<= 2e-2), slowest run %.0f s (<= 300 s)", worst, slowest);
    verdict(1, ok, buf);
  }

  // 2
  {
    const RunResult& r = runs.at(2).result;
    const FlybySummary& f = *r.flyby;
    const StepReport& rep = report(r, "chi");
    double early = 0.0;
    const TimeSeries& chi = r.find("chi");
    for (std::size_t k = 0; k < chi.size() && chi.times[k] <= f.t_edge; ++k)
      early = std::max(early, std::abs(chi.values[k] - 0.5));
    const bool ok = early <= 1e-2 && rep.width <= f.traverse_4sigma &&
                    std::abs(rep.t_cross - f.t_geometric) <= f.traverse_4sigma;
    info("max |chi - 1/2| for t <= %.3f (leading 3 sigma edge at the flux column) = %.2e", f.t_edge, early);
    info("width = %.3f, 4 sigma / v = %.3f", rep.width, f.traverse_4sigma);
    info("t_cross = %.3f, geometric = %.3f", rep.t_cross, f.t_geometric);
    verdict(2, ok, "plateau until the packet edge reaches the flux, sharp step at the crossing");
  }

  // 3
  {
    Scenario s = flyby;
    s.flux.alpha = kPi / 2;
    const WaveFunction psi0 = initial_state(s);
    const GaugeField fs = make_gauge(GaugeKind::string, scenario_grid(s), s.flux);
    const GaugeField fc = make_gauge(GaugeKind::coulomb, scenario_grid(s), s.flux);
    const WaveFunction psi0c = gauge_transform(psi0, connecting_gauge(fs, fc));
    const auto d = packet_displacement(s, 1, 0);
    std::optional<WaveFunction> snap;
    const ProbeSpec probes[2] = {
        {"chi", "", [&](const WaveFunction& psi, const GaugeField& f, double) {
           return displacement_expectation(psi, f, d.first, d.second);
         }},
        {"snap", "", [&](const WaveFunction& psi, const GaugeField&, double) {
           snap = psi;
           return cplx(0.0);
         }}};
    std::vector<ScheduleEntry> sched;
    const long n = std::lround(s.t_end / s.probe_interval);
    for (long k = 0; k <= n; ++k) {
      sched.push_back({k * s.probe_interval, 0});
      if (k == std::lround(8.0 / s.probe_interval)) sched.push_back({k * s.probe_interval, 1});
    }
    const StepperConfig cfg = stepper_config(s);
    const EvolveResult a = evolve(psi0, 0.0, s.t_end, HamiltonianSpec(s.mass, fs), cfg, probes, sched, s.box_limit);
    const WaveFunction mid = *snap;
    const EvolveResult b = evolve(psi0c, 0.0, s.t_end, HamiltonianSpec(s.mass, fc), cfg, probes, sched, s.box_limit);
    max_norm_drift = std::max({max_norm_drift, a.max_norm_drift, b.max_norm_drift});
    double pointwise = 0.0;
    for (std::size_t k = 0; k < a.series[0].size(); ++k)
      pointwise = std::max(pointwise, std::abs(a.series[0].values[k] - b.series[0].values[k]));

    // 100 random gauge transformations of the t = 8 state
    AngularProbe angular(mid.grid());
    auto observables = [&](const WaveFunction& psi, const GaugeField& f) {
      std::vector<double> o;
      for (cplx c : {displacement_expectation(psi, f, d.first, d.second), displacement_expectation(psi, f, 8, 64),
                     displacement_expectation(psi, f, Axis::x, 16), angular(psi, f)}) {
        o.push_back(c.real());
        o.push_back(c.imag());
      }
      for (Axis ax : {Axis::x, Axis::y}) {
        const VelocityDistribution v = velocity_distribution(psi, f, ax);
        o.push_back(v.mean_velocity(s.mass));
        o.push_back(v.mean_square_velocity(s.mass));
        for (std::size_t m = 0; m < v.prob.size(); m += 7) o.push_back(v.prob[m]);
      }
      o.push_back(psi.norm());
      return o;
    };
    const std::vector<double> ref = observables(mid, fs);
    std::mt19937_64 rng(424242);
    std::uniform_real_distribution<double> u(-kPi, kPi);
    double invariance = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> chi(mid.grid().size());
      for (double& c : chi) c = u(rng);
      auto [f2, psi2] = gauge_transform(fs, mid, chi);
      const std::vector<double> o = observables(psi2, f2);
      for (std::size_t k = 0; k < o.size(); ++k) invariance = std::max(invariance, std::abs(o[k] - ref[k]));
    }
    info("string vs Coulomb chi series, max pointwise difference = %.2e (<= 1e-10)", pointwise);
    info("100 random gauge transformations, max observable change = %.2e (<= 1e-12)", invariance);
    verdict(3, pointwise <= 1e-10 && invariance <= 1e-12, "gauge invariance");
  }

  // 4
  {
    bool ok = true;
    for (double alpha : {kPi / 3, kPi}) {
      Scenario s = load_config_file(kConfigs / "circle.cfg");
      s.flux.alpha = alpha;
      const Timed t = timed_run(s);
      note_drift(t.result);
      const CircleSummary& c = *t.result.circle;
      double perr = 0.0;
      for (int k = 0; k < 3; ++k) perr = std::max(perr, std::abs(c.plateau[k] - predicted_circle_plateau(alpha, k)));
      const double terr = std::max(std::abs(c.t_step[0] - c.t_geometric[0]), std::abs(c.t_step[1] - c.t_geometric[1]));
      info("alpha=%.4f plateaus (%.5f,%.5f) (%.5f,%.5f) (%.5f,%.5f), max |err| = %.2e", alpha, c.plateau[0].real(),
             c.plateau[0].imag(), c.plateau[1].real(), c.plateau[1].imag(), c.plateau[2].real(), c.plateau[2].imag(),
             perr);
      info("  steps detected = %d, t = %.4f %.4f vs geometric %.4f %.4f, max offset %.4f (<= 5 dt = %.4f)",
             c.steps_detected, c.t_step[0], c.t_step[1], c.t_geometric[0], c.t_geometric[1], terr, 5 * s.dt);
      ok = ok && perr <= 2e-2 && c.steps_detected == 2 && terr <= 5 * s.dt;
    }
    verdict(4, ok, "circle: plateaus 1, (1 + e^{-i alpha})/2, cos alpha and two steps at the crossings");
  }

  // 5
  {
    const Scenario s = load_config_file(kConfigs / "three_packet.cfg");
    const Timed t = timed_run(s);
    note_drift(t.result);
    double total = 0.0;
    for (const auto& p : s.packets) total += std::norm(p.coeff);
    const double scale = 0.5 / (std::abs(s.packets[0].coeff * s.packets[1].coeff) / total);
    const StepReport& ab = report(t.result, "chi_AB");
    const StepReport& ac = report(t.result, "chi_AC");
    const cplx jab = (ab.after - ab.before) * scale, jac = (ac.after - ac.before) * scale;
    const double eab = std::abs(jab - predicted_jump(s.flux.alpha)), eac = std::abs(jac - predicted_jump(s.flux.alpha));
    const double bc = max_change(t.result.find("chi_BC")) * scale;
    info("pair-normalised (x%.2f) AB jump (%+.5f, %+.5f) |err| = %.2e", scale, jab.real(), jab.imag(), eab);
    info("pair-normalised AC jump (%+.5f, %+.5f) |err| = %.2e", jac.real(), jac.imag(), eac);
    info("max |chi_BC(t) - chi_BC(0)| pair-normalised = %.2e (raw %.2e); %.0f s", bc, bc / scale, t.seconds);
    verdict(5, eab <= 2e-2 && eac <= 2e-2 && bc <= 1e-2, "three packets: AB and AC jump, BC does not");
  }

  // 6
  {
    bool ok = true;
    for (double alpha : {0.0, kPi / 3, kPi / 2, 2.0, kPi}) {
      Scenario s = load_config_file(kConfigs / "capacitor.cfg");
      s.flux.alpha = alpha;
      const RunResult r = run(s, {false, 0});
      const CapacitorSummary& c = *r.capacitor;
      const double o0 = r.find("O").values.front().real();
      const double e0 = std::abs(o0 - 0.5 * std::cos(alpha));
      const double eT = std::abs(c.weyl_at_T - c.local_at_T);
      info("alpha=%.4f <O> = %.12f (|err| %.1e), max drift in t %.1e, Weyl vs local at T=%.1f: %.1e", alpha, o0, e0,
             c.max_deviation, c.T, eT);
      ok = ok && e0 <= 1e-10 && c.max_deviation <= 1e-10 && eT <= 1e-8;
    }
    verdict(6, ok, "capacitor: <O> = cos(alpha)/2 for all t, local form agrees at T");
  }

  // 7
  {
    const Scenario s = load_config_file(kConfigs / "flyby_clear.cfg");
    const Timed t = timed_run(s);
    note_drift(t.result);
    double moments = 0.0;
    for (const char* m : {"vx_mean", "vx_sq", "vy_mean", "vy_sq"}) {
      const double c = max_change(t.result.find(m));
      info("%s: max change %.2e", m, c);
      moments = std::max(moments, c);
    }
    const StepReport& rep = report(t.result, "chi");
    const double jump = std::abs(rep.after - rep.before);
    const double want = std::abs(predicted_jump(s.flux.alpha));
    info("|chi jump| = %.5f, predicted %.5f", jump, want);
    const RunResult& def = runs.at(2).result;
    double dm = 0.0;
    for (const char* m : {"vx_mean", "vx_sq", "vy_mean", "vy_sq"}) dm = std::max(dm, max_change(def.find(m)));
    info("default flyby for comparison: max moment change %.2e (its packet tails reach the flux)", dm);
    verdict(7, moments < 1e-3 && std::abs(jump - want) <= 2e-2,
            "packets clear of the flux: moments unchanged while chi jumps");
  }

  // 8
  {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> p(-5.0, 5.0), mod(0.2, 4.0), frac(0.05, 0.45);
    std::uniform_int_distribution<int> wind(-3, 3);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const double p0 = mod(rng), p1 = p(rng), p2 = p(rng), q = p(rng);
      worst = std::max(worst, ellipse_residual(p1, p2, p1 + q + wind(rng) * p0, p2 - q + wind(rng) * p0, p0));
    }
    std::vector<double> r;
    for (int k = 0; k < 1000; ++k) {
      const double p0 = mod(rng), p1 = p(rng), p2 = p(rng), q = p(rng);
      r.push_back(ellipse_residual(p1, p2, p1 + q, p2 - q + frac(rng) * p0, p0));
    }
    std::nth_element(r.begin(), r.begin() + r.size() / 2, r.end());
    info("conserving: max residual %.2e; non-conserving: median residual %.2e", worst, r[r.size() / 2]);
    verdict(8, worst <= 1e-12 && r[r.size() / 2] > 1e-3, "conservation ellipse");
  }

  // 9
  {
    Scenario o = load_config_file(kConfigs / "oracle.cfg");
    const OracleResult fine = oracle(o);
    o.dt = 0.01;
    const OracleResult coarse = oracle(o);
    o.dt = 0.005;
    const OracleResult half = oracle(o);
    const double ri = coarse.implicit_error / half.implicit_error;
    const double rs = coarse.split_error / half.split_error;
    info("max norm drift over the full runs above = %.2e (< 1e-8)", max_norm_drift);
    info("32x32 dense oracle at dt=%.4g: implicit %.2e, split %.2e (<= 1e-6)", load_config_file(kConfigs / "oracle.cfg").dt,
           fine.implicit_error, fine.split_error);
    info("dt 0.01 -> 0.005 error ratio: implicit %.3f, split %.3f (4 +- 0.5)", ri, rs);
    verdict(9, max_norm_drift < 1e-8 && fine.implicit_error <= 1e-6 && std::abs(ri - 4.0) <= 0.5 &&
                   std::abs(rs - 4.0) <= 0.5,
            "norm, dense oracle, second order");
  }

  // 10
  {
    const RunResult& zero = runs.at(0).result;
    const RunResult& two = turn.result;
    double worst = 0.0;
    bool same_shape = zero.series.size() == two.series.size();
    for (std::size_t k = 0; same_shape && k < zero.series.size(); ++k) {
      const TimeSeries &a = zero.series[k], &b = two.series[k];
      same_shape = a.probe == b.probe && a.size() == b.size();
      for (std::size_t j = 0; same_shape && j < a.size(); ++j) worst = std::max(worst, std::abs(a.values[j] - b.values[j]));
    }
    const StepReport &ra = report(zero, "chi"), &rb = report(two, "chi");
    worst = std::max({worst, std::abs(ra.before - rb.before), std::abs(ra.after - rb.after)});
    if (zero.flyby->fringe && two.flyby->fringe) worst = std::max(worst, std::abs(wrap(*zero.flyby->fringe - *two.flyby->fringe)));
    else same_shape = false;
    double state = 0.0;
    for (std::size_t k = 0; k < zero.final_state->grid().size(); ++k)
      state = std::max(state, std::abs(zero.final_state->amps()[k] - two.final_state->amps()[k]));
    info("alpha = 2 pi vs 0: max difference over all series, plateaus and fringe = %.2e; final state %.2e", worst, state);
    verdict(10, same_shape && worst <= 1e-8, "flux quantum is invisible");
  }

  // 11
  {
    bool ok = runs.at(0).result.flyby->fringe.has_value();
    const double base = ok ? *runs.at(0).result.flyby->fringe : 0.0;
    for (std::size_t n = 1; ok && n < alphas.size(); ++n) {
      const auto& f = runs.at(static_cast<int>(n)).result.flyby->fringe;
      if (!f) {
        ok = false;
        break;
      }
      const double shift = wrap(*f - base);
      const double err = std::abs(wrap(shift + alphas[n]));
      info("alpha=%.4f fringe shift %+.4f vs %+.4f, |err| = %.3f", alphas[n], shift, wrap(-alphas[n]), err);
      ok = ok && err <= 0.05;
    }
    verdict(11, ok, "recombined fringes shift by -alpha");
  }

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
