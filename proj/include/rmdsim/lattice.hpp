#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rmdsim {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Cyclic MHz -> angular frequency in rad/ns. All config inputs are cyclic
/// frequencies (the f/2pi convention); everything internal is rad/ns so that
/// one period of evolution is exp(-i H T) with no hidden 2pi.
inline double angular_from_mhz(double f_mhz) { return f_mhz * kTwoPi / 1000.0; }

struct Site {
  int x = 0;  // column, 1..Lx
  int y = 0;  // row, 1..Ly
  friend bool operator==(const Site&, const Site&) = default;
};

enum class BondAxis { Horizontal, Vertical };

struct Bond {
  int a = 0;  // site indices, a < b in row-major order
  int b = 0;
  BondAxis axis = BondAxis::Horizontal;
};

/// Rectangular grid of hard-core bosonic sites. Site order is column-major in
/// (x, y): all of column x=1 (y = 1..Ly) first, then column 2, and so on, so
/// a column occupies a contiguous index range (the grouped-MPS layout).
struct LatticeSpec {
  int lx = 0;
  int ly = 0;
  std::vector<Site> sites;
  std::vector<Bond> bonds;

  int num_sites() const { return lx * ly; }
  int site_index(int x, int y) const {
    if (x < 1 || x > lx || y < 1 || y > ly)
      throw std::invalid_argument("site (" + std::to_string(x) + "," + std::to_string(y) +
                                  ") outside " + std::to_string(lx) + "x" + std::to_string(ly) +
                                  " lattice");
    return (x - 1) * ly + (y - 1);
  }
  bool contains(int x, int y) const { return x >= 1 && x <= lx && y >= 1 && y <= ly; }
};

LatticeSpec build_lattice(int lx, int ly);

/// Physical drive constants. j_mhz and h0_mhz are cyclic (f/2pi) values as
/// quoted in configs; delta_h is dimensionless; period_ns is the elementary
/// period T; order is the multipolar order n.
struct DriveParams {
  double j_mhz = 2.0;
  double h0_mhz = 10.0;
  double delta_h = 1.2;
  double period_ns = 4.0;
  int order = 1;

  double j_angular() const { return angular_from_mhz(j_mhz); }
  double h0_angular() const { return angular_from_mhz(h0_mhz); }
  void validate() const;
};

/// One of the two driven Hamiltonians H+/H- as explicit coefficient tables,
/// in rad/ns. onsite[i] is (1 +/- delta_h) * 2*h0 on even-y sites and 0 on
/// odd-y sites; hops[b] = J on every bond.
struct HamiltonianTerms {
  Eigen::VectorXd onsite;  // indexed by site
  Eigen::VectorXd hops;    // indexed by bond
  int polarity = +1;       // +1 or -1
};

HamiltonianTerms build_hamiltonian(const LatticeSpec& lattice, const DriveParams& params,
                                   int polarity);

/// Occupation product state; occupation[i] in {0,1}.
struct ProductState {
  std::vector<int> occupation;
  int total_particles() const {
    int n = 0;
    for (int o : occupation) n += o;
    return n;
  }
};

/// Density wave: every even-y site occupied. For odd Ly the pattern is still
/// defined but the lattice is no longer half filled.
ProductState density_wave_state(const LatticeSpec& lattice);

/// Imbalance sign pattern s_j: +1 on initially occupied (even-y) sites, -1 on
/// initially empty ones.
Eigen::VectorXi density_wave_pattern(const LatticeSpec& lattice);

}  // namespace rmdsim
