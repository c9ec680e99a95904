#include "abflux/dynamics.hpp"

#include <Eigen/Dense>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace abflux {

namespace {

const cplx kI(0.0, 1.0);

// out(s) = sum_n exp(-i theta(s -> n)) in(n)
void hop(const Grid2D& g, std::span<const cplx> hx, std::span<const cplx> hy,
         std::span<const cplx> in, std::span<cplx> out) {
  const int nx = g.nx(), ny = g.ny();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t s = g.index(i, j);
      cplx acc = 0.0;
      if (i + 1 < nx) acc += hx[s] * in[s + 1];
      if (i > 0) acc += std::conj(hx[s - 1]) * in[s - 1];
      if (j + 1 < ny) acc += hy[s] * in[s + nx];
      if (j > 0) acc += std::conj(hy[s - nx]) * in[s - nx];
      out[s] = acc;
    }
  }
}

void fill_hopping(const GaugeField& field, std::vector<cplx>& hx, std::vector<cplx>& hy) {
  const std::size_t n = field.grid().size();
  hx.resize(n);
  hy.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    hx[s] = std::polar(1.0, -field.thx()[s]);
    hy[s] = std::polar(1.0, -field.thy()[s]);
  }
}

}  // namespace

void set_worker_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

HamiltonianSpec::HamiltonianSpec(double mass, GaugeField field)
    : mass_(mass), grid_(field.grid()), fixed_(std::move(field)) {
  if (!(mass > 0.0)) throw std::invalid_argument("HamiltonianSpec: mass must be positive");
}

HamiltonianSpec::HamiltonianSpec(double mass, Grid2D grid, FieldProvider provider)
    : mass_(mass), grid_(grid), provider_(std::move(provider)) {
  if (!(mass > 0.0)) throw std::invalid_argument("HamiltonianSpec: mass must be positive");
  if (!provider_) throw std::invalid_argument("HamiltonianSpec: empty field provider");
}

GaugeField HamiltonianSpec::field_at(double t) const {
  if (fixed_) return *fixed_;
  GaugeField f = provider_(t);
  if (!(f.grid() == grid_)) throw std::invalid_argument("HamiltonianSpec: provider grid mismatch");
  return f;
}

WaveFunction apply_hamiltonian(const HamiltonianSpec& spec, const WaveFunction& psi, double t) {
  if (!(psi.grid() == spec.grid())) throw std::invalid_argument("apply_hamiltonian: grid mismatch");
  std::vector<cplx> hx, hy;
  fill_hopping(spec.field_at(t), hx, hy);
  WaveFunction out(psi.grid());
  hop(psi.grid(), hx, hy, psi.amps(), out.amps());
  const double d = spec.onsite(), th = spec.hopping();
  auto o = out.amps();
  auto p = psi.amps();
  for (std::size_t s = 0; s < o.size(); ++s) o[s] = d * p[s] - th * o[s];
  return out;
}

const char* to_string(StepMethod method) {
  return method == StepMethod::implicit_midpoint ? "implicit" : "split";
}

StepMethod step_method_from_string(const std::string& name) {
  if (name == "implicit") return StepMethod::implicit_midpoint;
  if (name == "split") return StepMethod::split_checkerboard;
  throw std::invalid_argument("unknown method '" + name + "' (implicit|split)");
}

void validate(const StepperConfig& cfg, const HamiltonianSpec& spec) {
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("StepperConfig: dt must be positive");
  if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("StepperConfig: tolerance must be positive");
  if (cfg.max_iterations < 1) throw std::invalid_argument("StepperConfig: max_iterations < 1");
  if (cfg.method == StepMethod::split_checkerboard && cfg.dt * spec.spectral_bound() >= 2.0)
    throw std::invalid_argument("StepperConfig: dt * spectral bound >= 2 for the split method");
}

Propagator::Propagator(const HamiltonianSpec& spec, StepperConfig cfg) : spec_(spec), cfg_(cfg) {
  validate(cfg_, spec_);
  rhs_.resize(spec.grid().size());
  next_.resize(spec.grid().size());
}

void Propagator::load_field(double t) {
  if (loaded_time_ && (spec_.is_static() || *loaded_time_ == t)) return;
  fill_hopping(spec_.field_at(t), hop_x_, hop_y_);
  loaded_time_ = t;
}

void Propagator::step(WaveFunction& psi, double t) {
  if (!(psi.grid() == spec_.grid())) throw std::invalid_argument("Propagator: grid mismatch");
  load_field(t + 0.5 * cfg_.dt);
  if (cfg_.method == StepMethod::implicit_midpoint) implicit_step(psi);
  else split_step(psi);
}

void Propagator::implicit_step(WaveFunction& psi) {
  // (1 + i tau H) psi' = (1 - i tau H) psi with H = D - th * Hop, solved by
  // Jacobi sweeps on the constant diagonal (1 + i tau D). The sweep is a
  // contraction: |tau th Hop| <= tau D < |1 + i tau D|.
  const Grid2D& g = psi.grid();
  const double tau = 0.5 * cfg_.dt, d = spec_.onsite(), th = spec_.hopping();
  const cplx diag = 1.0 + kI * tau * d;
  const cplx inv_diag = 1.0 / diag;
  const cplx coupling = kI * tau * th;
  auto x = psi.amps();
  const int ny = g.ny(), nx = g.nx();
  std::vector<double> row(ny);

  hop(g, hop_x_, hop_y_, x, next_);
  double bnorm = 0.0;
#pragma omp parallel for schedule(static)
  for (int j = 0; j < ny; ++j) {
    double acc = 0.0;
    for (int i = 0; i < nx; ++i) {
      const std::size_t s = g.index(i, j);
      rhs_[s] = (1.0 - kI * tau * d) * x[s] + coupling * next_[s];
      acc += std::norm(rhs_[s]);
    }
    row[j] = acc;
  }
  for (double r : row) bnorm += r;
  bnorm = std::sqrt(bnorm);

  // Initial guess: the right-hand side.
  std::copy(rhs_.begin(), rhs_.end(), x.begin());
  double residual = 0.0;
  for (int it = 1; it <= cfg_.max_iterations; ++it) {
    hop(g, hop_x_, hop_y_, x, next_);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < ny; ++j) {
      double acc = 0.0;
      for (int i = 0; i < nx; ++i) {
        const std::size_t s = g.index(i, j);
        const cplx v = (rhs_[s] + coupling * next_[s]) * inv_diag;
        acc += std::norm(v - x[s]);
        x[s] = v;
      }
      row[j] = acc;
    }
    double change = 0.0;
    for (double r : row) change += r;
    // b - A x_old = diag * (x_new - x_old)
    residual = std::abs(diag) * std::sqrt(change) / bnorm;
    if (residual <= cfg_.tolerance) {
      last_iterations_ = it;
      return;
    }
  }
  std::ostringstream msg;
  msg << "implicit midpoint: no convergence in " << cfg_.max_iterations
      << " iterations (relative residual " << residual << ")";
  throw SolverError(msg.str(), residual);
}

void Propagator::split_step(WaveFunction& psi) {
  const Grid2D& g = psi.grid();
  auto a = psi.amps();
  const int nx = g.nx(), ny = g.ny();
  const double th = spec_.hopping();

  // Exact rotation exp(-i h tau) for the two-site term h = -th (u |s><n| + h.c.).
  auto sweep_x = [&](int parity, double tau) {
    const double c = std::cos(th * tau), sn = std::sin(th * tau);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < ny; ++j) {
      for (int i = parity; i + 1 < nx; i += 2) {
        const std::size_t s = g.index(i, j);
        const cplx u = hop_x_[s];
        const cplx ps = a[s], pn = a[s + 1];
        a[s] = c * ps + kI * sn * u * pn;
        a[s + 1] = c * pn + kI * sn * std::conj(u) * ps;
      }
    }
  };
  auto sweep_y = [&](int parity, double tau) {
    const double c = std::cos(th * tau), sn = std::sin(th * tau);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < nx; ++i) {
      for (int j = parity; j + 1 < ny; j += 2) {
        const std::size_t s = g.index(i, j);
        const cplx u = hop_y_[s];
        const cplx ps = a[s], pn = a[s + nx];
        a[s] = c * ps + kI * sn * u * pn;
        a[s + nx] = c * pn + kI * sn * std::conj(u) * ps;
      }
    }
  };
  const double dt = cfg_.dt;
  sweep_x(0, 0.5 * dt);
  sweep_x(1, 0.5 * dt);
  sweep_y(0, 0.5 * dt);
  sweep_y(1, dt);
  sweep_y(0, 0.5 * dt);
  sweep_x(1, 0.5 * dt);
  sweep_x(0, 0.5 * dt);
  const cplx onsite = std::polar(1.0, -spec_.onsite() * dt);
  for (auto& v : a) v *= onsite;
  last_iterations_ = 0;
}

WaveFunction step(const WaveFunction& psi, const HamiltonianSpec& spec, double t,
                  const StepperConfig& cfg) {
  Propagator prop(spec, cfg);
  WaveFunction out = psi;
  prop.step(out, t);
  return out;
}

EvolveResult evolve(const WaveFunction& psi0, double t0, double t_end,
                    const HamiltonianSpec& spec, const StepperConfig& cfg,
                    std::span<const ProbeSpec> probes, std::span<const ScheduleEntry> schedule,
                    double box_limit) {
  Propagator prop(spec, cfg);
  const double dt = cfg.dt;
  auto to_step = [&](double t, const char* what) {
    const double k = (t - t0) / dt;
    const long n = std::lround(k);
    if (n < 0 || std::abs(k - static_cast<double>(n)) > 1e-6)
      throw std::invalid_argument(std::string("evolve: ") + what + " is not a multiple of dt past t0");
    return n;
  };
  const long total = to_step(t_end, "end time");

  std::vector<long> at(schedule.size());
  for (std::size_t e = 0; e < schedule.size(); ++e) {
    if (schedule[e].probe >= probes.size()) throw std::invalid_argument("evolve: bad probe index");
    at[e] = to_step(schedule[e].time, "schedule time");
    if (at[e] > total) throw std::invalid_argument("evolve: schedule beyond end time");
    if (e > 0 && at[e] < at[e - 1]) throw std::invalid_argument("evolve: schedule not increasing");
  }

  EvolveResult result{psi0, t0, {}, 0.0, 0};
  for (const auto& p : probes) result.series.push_back({p.id, p.params, {}, {}});
  WaveFunction& psi = result.final_state;
  const double n0 = psi0.norm();
  std::size_t next = 0;

  auto run_probes = [&](long k) {
    if (next < at.size() && at[next] == k) {
      const double t = t0 + static_cast<double>(k) * dt;
      const GaugeField field = spec.field_at(t);
      result.max_norm_drift = std::max(result.max_norm_drift, std::abs(psi.norm() - n0));
      while (next < at.size() && at[next] == k) {
        const std::size_t p = schedule[next].probe;
        result.series[p].push(t, probes[p].fn(psi, field, t));
        ++next;
      }
    }
  };

  run_probes(0);
  for (long k = 0; k < total; ++k) {
    prop.step(psi, t0 + static_cast<double>(k) * dt);
    const double edge = boundary_probability(psi, 2);
    if (edge > box_limit) {
      const double t = t0 + static_cast<double>(k + 1) * dt;
      std::ostringstream msg;
      msg << "box violation at t=" << t << ": boundary probability " << edge << " > " << box_limit;
      throw BoxViolation(msg.str(), t, edge);
    }
    run_probes(k + 1);
  }
  result.final_time = t0 + static_cast<double>(total) * dt;
  result.steps = total;
  result.max_norm_drift = std::max(result.max_norm_drift, std::abs(psi.norm() - n0));
  return result;
}

DenseOracle::DenseOracle(const GaugeField& field, double mass) : grid_(field.grid()) {
  const Grid2D& g = grid_;
  if (g.nx() > 40 || g.ny() > 40)
    throw std::invalid_argument("DenseOracle: grid larger than 40 x 40");
  const int n = static_cast<int>(g.size());
  const double dx2 = g.dx() * g.dx();
  const double d = 2.0 / (mass * dx2), th = 1.0 / (2.0 * mass * dx2);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(n, n);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const auto s = static_cast<Eigen::Index>(g.index(i, j));
      H(s, s) = d;
      if (i + 1 < g.nx()) {
        const auto r = static_cast<Eigen::Index>(g.index(i + 1, j));
        H(s, r) = -th * std::polar(1.0, -field.thx(i, j));
        H(r, s) = std::conj(H(s, r));
      }
      if (j + 1 < g.ny()) {
        const auto r = static_cast<Eigen::Index>(g.index(i, j + 1));
        H(s, r) = -th * std::polar(1.0, -field.thy(i, j));
        H(r, s) = std::conj(H(s, r));
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(H);
  if (solver.info() != Eigen::Success) throw std::runtime_error("DenseOracle: eigensolver failed");
  eigenvalues_.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  vectors_.assign(solver.eigenvectors().data(), solver.eigenvectors().data() + static_cast<std::size_t>(n) * n);
}

WaveFunction DenseOracle::evolve(const WaveFunction& psi0, double t) const {
  if (!(psi0.grid() == grid_)) throw std::invalid_argument("DenseOracle: grid mismatch");
  const auto n = static_cast<Eigen::Index>(grid_.size());
  Eigen::Map<const Eigen::MatrixXcd> V(vectors_.data(), n, n);
  Eigen::Map<const Eigen::VectorXcd> in(psi0.amps().data(), n);
  Eigen::VectorXcd c = V.adjoint() * in;
  for (Eigen::Index k = 0; k < n; ++k) c(k) *= std::polar(1.0, -eigenvalues_[k] * t);
  Eigen::VectorXcd out = V * c;
  return WaveFunction(grid_, std::vector<cplx>(out.data(), out.data() + n));
}

WaveFunction dense_oracle_evolve(const WaveFunction& psi0, const GaugeField& field, double t,
                                 double mass) {
  if (!(psi0.grid() == field.grid())) throw std::invalid_argument("dense_oracle_evolve: grid mismatch");
  return DenseOracle(field, mass).evolve(psi0, t);
}

}  // namespace abflux
