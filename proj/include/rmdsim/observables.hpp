#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rmdsim/lattice.hpp"

namespace rmdsim {

struct Subsystem {
  std::string label;
  std::vector<Site> sites;

  std::vector<int> site_indices(const LatticeSpec& lattice) const;
};

/// Time series of everything an engine records along one trajectory. All
/// vectors share the length of `times`; `fidelity` stays empty for engines
/// that do not truncate.
struct EvolutionTrace {
  std::vector<double> times_ns;
  std::vector<double> imbalance;
  std::map<std::string, std::vector<double>> entropies;
  std::vector<double> n_total;
  std::vector<double> fidelity;
  uint64_t seed = 0;
  std::string engine;
};

/// Density-wave imbalance (N_even - N_odd)/N0 from per-site <Z_j> and the
/// t=0 sign pattern. Equals 1 on the initial state and 0 at infinite
/// temperature.
double imbalance(const Eigen::VectorXd& z_expectations, const Eigen::VectorXi& pattern, int n0);

/// -Tr[rho ln rho] in nats. Rejects inputs that are not density matrices:
/// trace off by more than 1e-6 or an eigenvalue below -1e-9.
double von_neumann_entropy(const Eigen::MatrixXcd& rho);

inline double page_value(int num_sites) { return num_sites * 0.69314718055994530942; }

struct SubsystemGeometry {
  int area = 0;    // lattice bonds cut by the subsystem boundary
  int volume = 0;  // site count
};

SubsystemGeometry subsystem_geometry(const Subsystem& sub, const LatticeSpec& lattice);

}  // namespace rmdsim
