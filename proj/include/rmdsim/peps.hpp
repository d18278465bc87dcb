#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rmdsim/exact.hpp"
#include "rmdsim/lattice.hpp"
#include "rmdsim/observables.hpp"
#include "rmdsim/sequence.hpp"
#include "rmdsim/trotter.hpp"

namespace rmdsim {

/// Pair-entangled state on the lattice grid: one rank-5 tensor per site
/// (left, right, up, down, physical) plus positive simple-update weights on
/// every bond. Boundary virtual legs have dimension 1.
class PepsState {
 public:
  static PepsState init(const LatticeSpec& lattice, const ProductState& state, int chi_peps,
                        double svd_threshold = 1e-12);

  const LatticeSpec& lattice() const { return lattice_; }
  int chi_peps() const { return chi_peps_; }
  double truncation_weight() const { return truncation_weight_; }

  /// Apply one gate program by the simple-update rule: single-site gates act
  /// on physical legs directly, two-site gates contract through the bond with
  /// neighbor weights absorbed, then truncate back to chi_peps.
  void apply_program(const GateProgram& program);

  /// Approximate <op> at one site through row-by-row boundary-MPS
  /// contraction compressed at boundary_chi; returns <op>/<1>.
  double expectation(int x, int y, const Eigen::Matrix2cd& op, int boundary_chi) const;

  /// All <Z_j> in one pass, sharing top/bottom boundary environments.
  Eigen::VectorXd z_expectations(int boundary_chi) const;

  /// Raw norm <1> of the stored tensors (diagnostic; should stay near 1).
  double contracted_norm(int boundary_chi) const;

  /// Largest virtual bond dimension currently present.
  Eigen::Index max_bond_dim() const;

  /// Exact amplitudes by full contraction; test oracle, capped at 12 sites.
  Eigen::VectorXcd dense_amplitudes() const;

 private:
  struct SiteTensor {
    Eigen::Index l = 1, r = 1, u = 1, d = 1;  // virtual dims
    // element (il, ir, iu, id, p) at il + l*(ir + r*(iu + u*(id + d*p)))
    Eigen::VectorXcd a;
  };

  SiteTensor& at(int x, int y) { return tensors_[(x - 1) * lattice_.ly + (y - 1)]; }
  const SiteTensor& at(int x, int y) const { return tensors_[(x - 1) * lattice_.ly + (y - 1)]; }
  void apply_onsite(int x, int y, const Eigen::Matrix2cd& op);
  void apply_bond(int site_a, int site_b, const Eigen::Matrix4cd& gate);
  void absorbed_tensor(int x, int y, Eigen::VectorXcd& a, Eigen::Index dims[4]) const;
  std::complex<double> contract_with_insertion(int x, int y, const Eigen::Matrix2cd& op,
                                               int boundary_chi) const;

  LatticeSpec lattice_;
  int chi_peps_ = 4;
  double svd_threshold_ = 1e-12;
  double truncation_weight_ = 1.0;
  std::vector<SiteTensor> tensors_;
  std::vector<Eigen::VectorXd> weight_h_;  // bond (x,y)-(x+1,y), index (x-1)*ly + (y-1)
  std::vector<Eigen::VectorXd> weight_v_;  // bond (x,y)-(x,y+1), index (x-1)*(ly-1) + (y-1)
};

/// Second-order five-term simple-update evolution, recording imbalance and
/// total particle number (the conservation drift is the accuracy diagnostic
/// for this engine). Subsystem entropies are not available from PEPS.
EvolutionTrace evolve_peps(PepsState& peps, const RmdSequence& seq, const DriveParams& params,
                           double dt, int record_every, const ObserverSet& observers,
                           int boundary_chi);

}  // namespace rmdsim
