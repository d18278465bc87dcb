#include <cmath>
#include <set>

#include "doctest.h"
#include "rmdsim/lattice.hpp"

using namespace rmdsim;

TEST_CASE("lattice sizes and bond counts") {
  const LatticeSpec full = build_lattice(13, 6);
  CHECK(full.num_sites() == 78);
  CHECK(full.bonds.size() == 137);

  const LatticeSpec single = build_lattice(1, 1);
  CHECK(single.num_sites() == 1);
  CHECK(single.bonds.empty());

  const LatticeSpec eight = build_lattice(2, 4);
  CHECK(eight.num_sites() == 8);
  CHECK(eight.bonds.size() == 10);

  CHECK_THROWS_AS(build_lattice(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(build_lattice(3, -1), std::invalid_argument);
}

TEST_CASE("lattice invariants hold on assorted sizes") {
  for (auto [lx, ly] : {std::pair{1, 5}, {4, 1}, {3, 3}, {13, 6}, {2, 4}}) {
    const LatticeSpec lattice = build_lattice(lx, ly);
    CHECK(static_cast<int>(lattice.bonds.size()) == lx * (ly - 1) + (lx - 1) * ly);
    std::set<int> seen;
    for (const Site& s : lattice.sites) seen.insert(lattice.site_index(s.x, s.y));
    CHECK(static_cast<int>(seen.size()) == lattice.num_sites());
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == lattice.num_sites() - 1);
    for (const Bond& b : lattice.bonds) {
      const Site& sa = lattice.sites[b.a];
      const Site& sb = lattice.sites[b.b];
      CHECK(std::abs(sa.x - sb.x) + std::abs(sa.y - sb.y) == 1);
    }
  }
}

TEST_CASE("staggered onsite potential and uniform hopping") {
  const LatticeSpec lattice = build_lattice(3, 4);
  DriveParams params;
  params.h0_mhz = 10.0;
  params.delta_h = 1.2;
  params.j_mhz = 2.0;

  const HamiltonianTerms plus = build_hamiltonian(lattice, params, +1);
  const double expected = (1.0 + 1.2) * 2.0 * 10.0 * kTwoPi / 1000.0;  // 2*pi*44 rad/us
  for (int i = 0; i < lattice.num_sites(); ++i) {
    if (lattice.sites[i].y % 2 == 0)
      CHECK(plus.onsite[i] == doctest::Approx(expected).epsilon(1e-14));
    else
      CHECK(plus.onsite[i] == 0.0);
  }
  for (Eigen::Index b = 0; b < plus.hops.size(); ++b)
    CHECK(plus.hops[b] == doctest::Approx(kTwoPi * 2.0 / 1000.0).epsilon(1e-14));

  // Potential is uniform along x.
  for (int y = 1; y <= 4; ++y)
    for (int x = 2; x <= 3; ++x)
      CHECK(plus.onsite[lattice.site_index(x, y)] == plus.onsite[lattice.site_index(1, y)]);
}

TEST_CASE("polarities differ only in the onsite part") {
  const LatticeSpec lattice = build_lattice(2, 2);
  DriveParams params;
  params.j_mhz = 2.0;
  const HamiltonianTerms plus = build_hamiltonian(lattice, params, +1);
  const HamiltonianTerms minus = build_hamiltonian(lattice, params, -1);
  CHECK(plus.hops == minus.hops);
  CHECK((plus.onsite - minus.onsite).cwiseAbs().maxCoeff() > 0.0);
  CHECK(plus.hops.size() == 4);

  // Average of the two drives equals the undriven (delta_h = 0) Hamiltonian.
  DriveParams symmetric = params;
  symmetric.delta_h = 0.0;
  const HamiltonianTerms effective = build_hamiltonian(lattice, symmetric, +1);
  CHECK(((plus.onsite + minus.onsite) / 2.0 - effective.onsite).cwiseAbs().maxCoeff() < 1e-15);

  const HamiltonianTerms sym_minus = build_hamiltonian(lattice, symmetric, -1);
  CHECK(effective.onsite == sym_minus.onsite);
  CHECK(effective.hops == sym_minus.hops);
}

TEST_CASE("density wave occupies even rows") {
  const LatticeSpec full = build_lattice(13, 6);
  CHECK(density_wave_state(full).total_particles() == 39);

  const LatticeSpec tall = build_lattice(2, 4);
  const ProductState dw = density_wave_state(tall);
  for (const Site& s : tall.sites)
    CHECK(dw.occupation[tall.site_index(s.x, s.y)] == (s.y % 2 == 0 ? 1 : 0));

  const LatticeSpec wide = build_lattice(4, 2);
  CHECK(density_wave_state(wide).total_particles() == 4);
  const Eigen::VectorXi pattern = density_wave_pattern(wide);
  for (const Site& s : wide.sites)
    CHECK(pattern[wide.site_index(s.x, s.y)] == (s.y % 2 == 0 ? 1 : -1));
}
