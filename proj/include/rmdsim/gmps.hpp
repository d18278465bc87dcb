#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rmdsim/exact.hpp"
#include "rmdsim/lattice.hpp"
#include "rmdsim/observables.hpp"
#include "rmdsim/sequence.hpp"

namespace rmdsim {

/// Matrix product state over whole lattice columns: Lx tensors of shape
/// (left bond, 2^Ly, right bond), physical bit y-1 holding the occupation of
/// row y. A mixed-canonical form is maintained at all times: tensors left of
/// `center` are left isometries, tensors right of it right isometries.
class GroupedMps {
 public:
  /// Product-state embedding; all bond dimensions 1, fidelity 1.
  static GroupedMps init(const LatticeSpec& lattice, const ProductState& state, int chi_max,
                         double svd_threshold = 1e-12);

  int lx() const { return lattice_.lx; }
  int ly() const { return lattice_.ly; }
  int phys_dim() const { return 1 << lattice_.ly; }
  int center() const { return center_; }
  int chi_max() const { return chi_max_; }
  double svd_threshold() const { return svd_threshold_; }
  double cumulative_fidelity() const { return cum_fidelity_; }
  const LatticeSpec& lattice() const { return lattice_; }
  std::vector<Eigen::Index> bond_dims() const;

  /// QR sweeps; gauge moves only, never truncates.
  void move_center(int column);

  /// Contract a 2^Ly x 2^Ly unitary with the physical leg of column x
  /// (1-based). Bonds, center and fidelity are untouched.
  void apply_column_op(int x, const Eigen::MatrixXcd& op);

  /// Four-step bond update on the hop between (x, y) and (x+1, y): QR
  /// isolation of the active row bit on both tensors, gate contraction, SVD
  /// with relative threshold drop then cap at chi_max, reabsorption. The
  /// center must already sit on column x or x+1; it ends on x+1 when
  /// absorb_right, else on x. Multiplies cumulative fidelity by the kept
  /// singular-value weight ratio.
  void apply_bond_gate(int x, int y, const Eigen::Matrix4cd& gate, bool absorb_right);

  /// Per-site <Z_j>, by sweeping the center across all columns.
  Eigen::VectorXd z_expectations();

  /// Von Neumann entropy of a subsystem spanning at most span_cap adjacent
  /// columns (and at most 6 sites). Left/right environments reduce to
  /// identities through the canonical form; spanned tensors are contracted
  /// progressively with complement rows traced out column by column.
  double entropy(const Subsystem& subsystem, int span_cap = 2);

  double norm_squared() const;
  /// Largest deviation from the isometry conditions on both flanks.
  double max_isometry_defect() const;

 private:
  struct Tensor {
    Eigen::Index l = 1, p = 1, r = 1;
    Eigen::VectorXcd a;  // element (i, j, k) at i + l*(j + p*k)
  };

  void move_center_right();
  void move_center_left();

  LatticeSpec lattice_;
  std::vector<Tensor> tensors_;
  int center_ = 0;
  int chi_max_ = 0;
  double svd_threshold_ = 1e-12;
  double cum_fidelity_ = 1.0;
};

/// Second-order column-split evolution through the drive sequence,
/// recording stroboscopically every record_every periods. Intra-column
/// exponentials are built once per (polarity, chunk) by dense
/// eigendecomposition and shared across columns.
EvolutionTrace evolve_gmps(GroupedMps& mps, const RmdSequence& seq, const DriveParams& params,
                           double dt, int record_every, const ObserverSet& observers,
                           int entropy_span_cap = 2);

}  // namespace rmdsim
