#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "rmdsim/lattice.hpp"
#include "rmdsim/sequence.hpp"

namespace rmdsim {

/// One local gate of an evolution program. `sites` lists lattice site indices
/// in the order that defines the local basis: bit j of the local index is the
/// occupation of sites[j]. u is the dense (2^k x 2^k) unitary.
struct Gate {
  std::vector<int> sites;
  Eigen::MatrixXcd u;
};

using GateProgram = std::vector<Gate>;

/// exp(-i * omega * n * dt) on one site, in the {|0>, |1>} basis.
Eigen::Matrix2cd onsite_gate(double omega, double dt);

/// exp(-i * g * dt * (a+_i a_j + a+_j a_i)) on a bond; couples |01> and |10>
/// with cos/sin entries and leaves |00>, |11> untouched.
Eigen::Matrix4cd hop_gate(double g, double dt);

/// The five internally-commuting term groups of the driven Hamiltonian:
/// all onsite terms, horizontal hops starting at odd/even x, vertical hops
/// starting at odd/even y. Groups 2..5 hold bond indices into lattice.bonds.
struct FiveTermSplit {
  std::vector<int> onsite_sites;
  std::array<std::vector<int>, 4> bond_groups;
};

FiveTermSplit five_term_split(const LatticeSpec& lattice);

/// Symmetric second-order factorization of exp(-i H dt): the five groups
/// forward at dt/2, then reversed at dt/2. Error per step is O(dt^3).
GateProgram second_order_step(const LatticeSpec& lattice, const HamiltonianTerms& terms,
                              double dt);

/// Single-column Hamiltonian (onsite pattern plus vertical hops) as a dense
/// 2^Ly matrix; identical for every column since the drive is uniform in x.
Eigen::MatrixXcd intra_column_hamiltonian(const LatticeSpec& lattice,
                                          const HamiltonianTerms& terms);

/// The column-grouped second-order step used by the grouped-MPS engine:
/// half-step intra-column exponentials, inter-column bond gates swept
/// left-to-right then right-to-left at half step each, closing intra-column
/// half-steps. Expressed as a dense gate program so a state-vector evolver
/// can replay exactly the unitaries the MPS engine applies.
GateProgram column_split_step(const LatticeSpec& lattice, const HamiltonianTerms& terms,
                              double dt);

/// Chunk lengths that tile one period of length T with steps of at most dt;
/// the final chunk is shortened when dt does not divide T, so no step ever
/// straddles a polarity flip.
std::vector<double> period_sub_steps(double period_ns, double dt);

/// Merged timestamps (multiples of dt and of T) covering [0, t_end].
std::vector<double> make_time_grid(double period_ns, double dt, double t_end);

/// Max over stroboscopic record times of |I_trotter - I_exact| between the
/// five-term gate program at step dt and the exact period propagator, on a
/// lattice small enough for dense evolution.
double trotter_error(const LatticeSpec& lattice, const DriveParams& params, double dt,
                     const RmdSequence& seq);

}  // namespace rmdsim
