// Square-lattice substrate: grid geometry, wavefunction storage, Gaussian packet
// construction, superposition and inner products.
#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace abflux {

using cplx = std::complex<double>;

/// nx * ny sites with spacing dx. Site (i, j) sits at
/// ((i - nx/2 + 1/2) dx, (j - ny/2 + 1/2) dx): no site at the origin and the
/// point reflection r -> -r maps site (i, j) onto (nx-1-i, ny-1-j).
class Grid2D {
 public:
  Grid2D(int nx, int ny, double dx);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double dx() const { return dx_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * ny_; }

  double x(int i) const { return (i - nx_ / 2 + 0.5) * dx_; }
  double y(int j) const { return (j - ny_ / 2 + 0.5) * dx_; }
  /// Row-major, i fastest.
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
  bool contains(int i, int j) const { return i >= 0 && i < nx_ && j >= 0 && j < ny_; }
  std::size_t reflect(std::size_t site) const { return size() - 1 - site; }

  /// Continuous coordinate -> fractional site index.
  double fx(double x) const { return x / dx_ + nx_ / 2 - 0.5; }
  double fy(double y) const { return y / dx_ + ny_ / 2 - 0.5; }

  bool operator==(const Grid2D&) const = default;

 private:
  int nx_;
  int ny_;
  double dx_;
};

class WaveFunction {
 public:
  explicit WaveFunction(Grid2D grid);
  WaveFunction(Grid2D grid, std::vector<cplx> amps);

  const Grid2D& grid() const { return grid_; }
  std::span<cplx> amps() { return amps_; }
  std::span<const cplx> amps() const { return amps_; }
  cplx& operator()(int i, int j) { return amps_[grid_.index(i, j)]; }
  cplx operator()(int i, int j) const { return amps_[grid_.index(i, j)]; }

  /// sum |psi|^2 dx^2
  double norm() const;
  void normalize();

 private:
  Grid2D grid_;
  std::vector<cplx> amps_;
};

struct PacketSpec {
  double x = 0.0;
  double y = 0.0;
  double sigma = 1.0;
  double kx = 0.0;
  double ky = 0.0;
  cplx coeff{1.0, 0.0};

  bool operator==(const PacketSpec&) const = default;
};

/// Throws std::invalid_argument if the packet is under-resolved, too close to
/// the Brillouin-zone edge, or its 4-sigma support comes within 4 sites of a wall.
void validate_packet(const Grid2D& grid, const PacketSpec& spec);

/// Normalized coeff/|coeff| * exp(-|r - r0|^2 / (4 sigma^2) + i k.r).
WaveFunction gaussian_packet(const Grid2D& grid, const PacketSpec& spec);

/// Normalized sum of coeff * part.
WaveFunction superpose(std::span<const std::pair<WaveFunction, cplx>> parts);

/// sum conj(psi) phi dx^2
cplx inner_product(const WaveFunction& psi, const WaveFunction& phi);

/// Probability on sites within `band` sites of any wall.
double boundary_probability(const WaveFunction& psi, int band = 2);

/// Binary dump: 32-byte header ("ABFLUX01", uint64 nx, uint64 ny, double dx),
/// then little-endian (re, im) doubles, i fastest.
void write_state(const std::filesystem::path& path, const WaveFunction& psi);
WaveFunction read_state(const std::filesystem::path& path);

}  // namespace abflux
