#include "abflux/lattice.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "abflux/io.hpp"

namespace abflux {

static_assert(std::endian::native == std::endian::little,
              "state dumps assume a little-endian host");

Grid2D::Grid2D(int nx, int ny, double dx) : nx_(nx), ny_(ny), dx_(dx) {
  if (nx < 32 || ny < 32 || nx % 2 != 0 || ny % 2 != 0)
    throw std::invalid_argument("Grid2D: nx and ny must be even and >= 32");
  if (!(dx > 0.0)) throw std::invalid_argument("Grid2D: dx must be positive");
}

WaveFunction::WaveFunction(Grid2D grid) : grid_(grid), amps_(grid.size(), cplx{}) {}

WaveFunction::WaveFunction(Grid2D grid, std::vector<cplx> amps)
    : grid_(grid), amps_(std::move(amps)) {
  if (amps_.size() != grid_.size())
    throw std::invalid_argument("WaveFunction: amplitude count does not match grid");
}

double WaveFunction::norm() const {
  // Per-row partial sums keep the reduction order fixed.
  double total = 0.0;
  for (int j = 0; j < grid_.ny(); ++j) {
    double row = 0.0;
    for (int i = 0; i < grid_.nx(); ++i) row += std::norm(amps_[grid_.index(i, j)]);
    total += row;
  }
  return total * grid_.dx() * grid_.dx();
}

void WaveFunction::normalize() {
  const double n = norm();
  if (!(n > 0.0)) throw std::invalid_argument("WaveFunction: cannot normalize a zero state");
  const double s = 1.0 / std::sqrt(n);
  for (auto& a : amps_) a *= s;
}

void validate_packet(const Grid2D& grid, const PacketSpec& spec) {
  const double dx = grid.dx();
  if (!(spec.sigma >= 2.0 * dx))
    throw std::invalid_argument("packet under-resolved: sigma " + std::to_string(spec.sigma) +
                                " < 2 dx");
  if (std::hypot(spec.kx, spec.ky) > std::numbers::pi / (4.0 * dx) + 1e-12)
    throw std::invalid_argument("packet wavevector exceeds pi/(4 dx)");
  if (std::abs(spec.coeff) == 0.0) throw std::invalid_argument("packet coefficient is zero");
  const double reach = 4.0 * spec.sigma;
  const double lo_x = grid.x(0) + 4.0 * dx, hi_x = grid.x(grid.nx() - 1) - 4.0 * dx;
  const double lo_y = grid.y(0) + 4.0 * dx, hi_y = grid.y(grid.ny() - 1) - 4.0 * dx;
  if (spec.x - reach < lo_x || spec.x + reach > hi_x || spec.y - reach < lo_y ||
      spec.y + reach > hi_y)
    throw std::invalid_argument("packet support (4 sigma) too close to the boundary");
}

WaveFunction gaussian_packet(const Grid2D& grid, const PacketSpec& spec) {
  validate_packet(grid, spec);
  WaveFunction psi(grid);
  const double inv4s2 = 1.0 / (4.0 * spec.sigma * spec.sigma);
  const cplx phase = spec.coeff / std::abs(spec.coeff);
  for (int j = 0; j < grid.ny(); ++j) {
    const double y = grid.y(j);
    for (int i = 0; i < grid.nx(); ++i) {
      const double x = grid.x(i);
      const double r2 = (x - spec.x) * (x - spec.x) + (y - spec.y) * (y - spec.y);
      psi(i, j) = phase * std::exp(-r2 * inv4s2) * std::polar(1.0, spec.kx * x + spec.ky * y);
    }
  }
  psi.normalize();
  return psi;
}

WaveFunction superpose(std::span<const std::pair<WaveFunction, cplx>> parts) {
  if (parts.empty()) throw std::invalid_argument("superpose: no parts");
  const Grid2D& grid = parts.front().first.grid();
  WaveFunction out(grid);
  auto dst = out.amps();
  for (const auto& [psi, coeff] : parts) {
    if (!(psi.grid() == grid)) throw std::invalid_argument("superpose: grid mismatch");
    auto src = psi.amps();
    for (std::size_t s = 0; s < dst.size(); ++s) dst[s] += coeff * src[s];
  }
  out.normalize();
  return out;
}

cplx inner_product(const WaveFunction& psi, const WaveFunction& phi) {
  if (!(psi.grid() == phi.grid())) throw std::invalid_argument("inner_product: grid mismatch");
  const Grid2D& g = psi.grid();
  auto a = psi.amps();
  auto b = phi.amps();
  cplx total = 0.0;
  for (int j = 0; j < g.ny(); ++j) {
    cplx row = 0.0;
    for (int i = 0; i < g.nx(); ++i) {
      const std::size_t s = g.index(i, j);
      row += std::conj(a[s]) * b[s];
    }
    total += row;
  }
  return total * g.dx() * g.dx();
}

double boundary_probability(const WaveFunction& psi, int band) {
  const Grid2D& g = psi.grid();
  double total = 0.0;
  for (int j = 0; j < g.ny(); ++j) {
    const bool edge_row = j < band || j >= g.ny() - band;
    for (int i = 0; i < g.nx(); ++i) {
      if (edge_row || i < band || i >= g.nx() - band) total += std::norm(psi(i, j));
    }
  }
  return total * g.dx() * g.dx();
}

namespace {
constexpr char kMagic[8] = {'A', 'B', 'F', 'L', 'U', 'X', '0', '1'};
}

void write_state(const std::filesystem::path& path, const WaveFunction& psi) {
  std::string blob(32 + psi.amps().size() * 2 * sizeof(double), '\0');
  char* p = blob.data();
  std::memcpy(p, kMagic, 8);
  const std::uint64_t nx = psi.grid().nx(), ny = psi.grid().ny();
  const double dx = psi.grid().dx();
  std::memcpy(p + 8, &nx, 8);
  std::memcpy(p + 16, &ny, 8);
  std::memcpy(p + 24, &dx, 8);
  std::memcpy(p + 32, psi.amps().data(), psi.amps().size() * 2 * sizeof(double));
  write_file_atomic(path, blob);
}

WaveFunction read_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_state: cannot open " + path.string());
  char header[32];
  if (!in.read(header, 32) || std::memcmp(header, kMagic, 8) != 0)
    throw std::runtime_error("read_state: bad header in " + path.string());
  std::uint64_t nx = 0, ny = 0;
  double dx = 0.0;
  std::memcpy(&nx, header + 8, 8);
  std::memcpy(&ny, header + 16, 8);
  std::memcpy(&dx, header + 24, 8);
  Grid2D grid(static_cast<int>(nx), static_cast<int>(ny), dx);
  std::vector<cplx> amps(grid.size());
  if (!in.read(reinterpret_cast<char*>(amps.data()),
               static_cast<std::streamsize>(amps.size() * 2 * sizeof(double))))
    throw std::runtime_error("read_state: truncated payload in " + path.string());
  return WaveFunction(grid, std::move(amps));
}

}  // namespace abflux
