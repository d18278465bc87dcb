#include "rmdsim/lattice.hpp"

namespace rmdsim {

LatticeSpec build_lattice(int lx, int ly) {
  if (lx < 1 || ly < 1)
    throw std::invalid_argument("lattice dimensions must be positive, got " + std::to_string(lx) +
                                "x" + std::to_string(ly));
  LatticeSpec spec;
  spec.lx = lx;
  spec.ly = ly;
  spec.sites.reserve(static_cast<size_t>(lx) * ly);
  for (int x = 1; x <= lx; ++x)
    for (int y = 1; y <= ly; ++y) spec.sites.push_back({x, y});

  // Horizontal bonds first, then vertical, both in site order.
  for (int x = 1; x < lx; ++x)
    for (int y = 1; y <= ly; ++y)
      spec.bonds.push_back({spec.site_index(x, y), spec.site_index(x + 1, y), BondAxis::Horizontal});
  for (int x = 1; x <= lx; ++x)
    for (int y = 1; y < ly; ++y)
      spec.bonds.push_back({spec.site_index(x, y), spec.site_index(x, y + 1), BondAxis::Vertical});
  return spec;
}

void DriveParams::validate() const {
  if (!(period_ns > 0.0)) throw std::invalid_argument("drive period T must be positive");
  if (order < 0) throw std::invalid_argument("multipolar order n must be non-negative");
  if (!std::isfinite(j_mhz) || !std::isfinite(h0_mhz) || !std::isfinite(delta_h))
    throw std::invalid_argument("drive parameters must be finite");
}

HamiltonianTerms build_hamiltonian(const LatticeSpec& lattice, const DriveParams& params,
                                   int polarity) {
  params.validate();
  if (polarity != 1 && polarity != -1) throw std::invalid_argument("polarity must be +1 or -1");

  HamiltonianTerms terms;
  terms.polarity = polarity;
  terms.onsite = Eigen::VectorXd::Zero(lattice.num_sites());
  const double staggered = (1.0 + polarity * params.delta_h) * 2.0 * params.h0_angular();
  for (int i = 0; i < lattice.num_sites(); ++i)
    if (lattice.sites[i].y % 2 == 0) terms.onsite[i] = staggered;
  terms.hops = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lattice.bonds.size()),
                                         params.j_angular());
  return terms;
}

ProductState density_wave_state(const LatticeSpec& lattice) {
  ProductState state;
  state.occupation.resize(lattice.num_sites());
  for (int i = 0; i < lattice.num_sites(); ++i)
    state.occupation[i] = (lattice.sites[i].y % 2 == 0) ? 1 : 0;
  return state;
}

Eigen::VectorXi density_wave_pattern(const LatticeSpec& lattice) {
  Eigen::VectorXi pattern(lattice.num_sites());
  for (int i = 0; i < lattice.num_sites(); ++i)
    pattern[i] = (lattice.sites[i].y % 2 == 0) ? 1 : -1;
  return pattern;
}

}  // namespace rmdsim
