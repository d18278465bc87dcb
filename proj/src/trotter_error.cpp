#include <cmath>

#include "rmdsim/exact.hpp"
#include "rmdsim/trotter.hpp"

namespace rmdsim {

double trotter_error(const LatticeSpec& lattice, const DriveParams& params, double dt,
                     const RmdSequence& seq) {
  ExactEngine exact(lattice, params, BasisMode::Sector);
  GateStateEvolver gates(lattice, params, dt, SplitKind::FiveTerm);
  const ObserverSet observers{};
  const EvolutionTrace reference = exact.evolve(seq, 1, observers);
  const EvolutionTrace trotterized = gates.evolve(seq, 1, observers);
  double err = 0.0;
  for (size_t i = 0; i < reference.imbalance.size(); ++i)
    err = std::max(err, std::abs(reference.imbalance[i] - trotterized.imbalance[i]));
  return err;
}

}  // namespace rmdsim
