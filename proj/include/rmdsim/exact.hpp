#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "rmdsim/lattice.hpp"
#include "rmdsim/observables.hpp"
#include "rmdsim/sequence.hpp"
#include "rmdsim/trotter.hpp"

namespace rmdsim {

enum class BasisMode { Full, Sector };

struct DenseCaps {
  int full_sites = 16;
  int sector_sites = 20;
};

/// Occupation-number basis over L two-level sites, either the full 2^L space
/// or the fixed-particle-number sector. Basis states are bitmasks with bit
/// (x-1)*Ly + (y-1) holding the occupation of site (x, y).
class OccupationBasis {
 public:
  static OccupationBasis full(int num_sites);
  static OccupationBasis sector(int num_sites, int n_particles);

  BasisMode mode() const { return mode_; }
  int num_sites() const { return num_sites_; }
  int n_particles() const { return n_particles_; }
  Eigen::Index dim() const { return dim_; }
  uint64_t mask_of(Eigen::Index index) const {
    return mode_ == BasisMode::Full ? static_cast<uint64_t>(index) : states_[index];
  }
  Eigen::Index index_of(uint64_t mask) const;

  /// Amplitude vector of a product state in this basis.
  Eigen::VectorXcd embed(const ProductState& state) const;

 private:
  BasisMode mode_ = BasisMode::Full;
  int num_sites_ = 0;
  int n_particles_ = -1;
  Eigen::Index dim_ = 0;
  std::vector<uint64_t> states_;  // sector mode only, sorted
};

Eigen::MatrixXcd build_dense_hamiltonian(const LatticeSpec& lattice,
                                         const HamiltonianTerms& terms,
                                         const OccupationBasis& basis);

/// U = exp(-i H T) by eigendecomposition. Rejects non-Hermitian input.
Eigen::MatrixXcd period_propagator(const Eigen::MatrixXcd& h, double t_ns);

Eigen::VectorXd z_expectations(const Eigen::VectorXcd& amplitudes, const OccupationBasis& basis);

/// Partial trace onto a subsystem of at most 6 sites, grouping basis states
/// by the occupation pattern of the complement.
Eigen::MatrixXcd reduced_density_matrix(const Eigen::VectorXcd& amplitudes,
                                        const OccupationBasis& basis,
                                        const std::vector<int>& subsystem_sites);

/// What to record along a trajectory. Imbalance and n_total are always on.
struct ObserverSet {
  std::vector<Subsystem> entropy_subsystems;
};

/// Apply one local gate to a full-basis state vector.
void apply_gate(Eigen::VectorXcd& amplitudes, int num_sites, const Gate& gate);
void apply_gate_program(Eigen::VectorXcd& amplitudes, int num_sites, const GateProgram& program);

/// Dense stroboscopic evolution: one cached propagator per polarity, applied
/// per period by matrix-vector products.
class ExactEngine {
 public:
  ExactEngine(const LatticeSpec& lattice, const DriveParams& params, BasisMode mode,
              DenseCaps caps = {});

  const OccupationBasis& basis() const { return basis_; }
  const Eigen::MatrixXcd& propagator(int polarity);
  const Eigen::MatrixXcd& hamiltonian(int polarity);

  /// Evolve |psi0> (the density wave by default) through the sequence and
  /// record every record_every periods, starting at t=0.
  EvolutionTrace evolve(const RmdSequence& seq, int record_every, const ObserverSet& observers);
  EvolutionTrace evolve_state(Eigen::VectorXcd amplitudes, const RmdSequence& seq,
                              int record_every, const ObserverSet& observers);

  /// Final state after the first num_periods entries of the sequence.
  Eigen::VectorXcd propagate(Eigen::VectorXcd amplitudes, const RmdSequence& seq, int num_periods);

 private:
  LatticeSpec lattice_;
  DriveParams params_;
  OccupationBasis basis_;
  std::map<int, Eigen::MatrixXcd> hams_;
  std::map<int, Eigen::MatrixXcd> propagators_;
};

/// Trotterized state-vector evolution in the full basis, for lattices past
/// the dense-propagator cap and for gate-level cross checks. The split is
/// either the five-term scheme or the column-grouped scheme that mirrors the
/// grouped-MPS engine gate for gate.
enum class SplitKind { FiveTerm, ColumnPair };

class GateStateEvolver {
 public:
  GateStateEvolver(const LatticeSpec& lattice, const DriveParams& params, double dt,
                   SplitKind split = SplitKind::FiveTerm);

  /// Record stroboscopically every record_every periods.
  EvolutionTrace evolve(const RmdSequence& seq, int record_every, const ObserverSet& observers);

  /// Record at explicit grid times (must lie on the merged dt/T grid).
  EvolutionTrace evolve_at_times(const RmdSequence& seq, const std::vector<double>& record_times,
                                 const ObserverSet& observers);

  Eigen::VectorXcd propagate(Eigen::VectorXcd amplitudes, const RmdSequence& seq, int num_periods);

 private:
  EvolutionTrace run(const RmdSequence& seq, const std::vector<double>& record_times,
                     const ObserverSet& observers);

  LatticeSpec lattice_;
  DriveParams params_;
  double dt_;
  SplitKind split_;
  std::map<int, std::vector<GateProgram>> chunk_programs_;  // polarity -> one program per chunk
  std::vector<double> chunks_;
};

}  // namespace rmdsim
