#include "rmdsim/observables.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmdsim {

std::vector<int> Subsystem::site_indices(const LatticeSpec& lattice) const {
  std::vector<int> idx;
  idx.reserve(sites.size());
  for (const Site& s : sites) idx.push_back(lattice.site_index(s.x, s.y));
  std::vector<int> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("subsystem '" + label + "' has repeated sites");
  return idx;
}

double imbalance(const Eigen::VectorXd& z_expectations, const Eigen::VectorXi& pattern, int n0) {
  if (n0 <= 0) throw std::invalid_argument("imbalance needs a positive initial particle number");
  if (z_expectations.size() != pattern.size())
    throw std::invalid_argument("z expectation and pattern size mismatch");
  // Population form (N_even - N_odd)/N0: equals the sign-weighted Z sum over
  // 2 N0 at half filling and stays 1 at t=0 on odd-row lattices too.
  double acc = 0.0;
  for (Eigen::Index j = 0; j < pattern.size(); ++j)
    acc += pattern[j] * (z_expectations[j] + 1.0) / 2.0;
  return acc / n0;
}

double von_neumann_entropy(const Eigen::MatrixXcd& rho) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("density matrix must be square");
  const double trace = rho.trace().real();
  if (std::abs(trace - 1.0) > 1e-6)
    throw std::invalid_argument("density matrix trace deviates from 1 by " +
                                std::to_string(std::abs(trace - 1.0)));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho, Eigen::EigenvaluesOnly);
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < rho.rows(); ++i) {
    double lambda = solver.eigenvalues()[i];
    if (lambda < -1e-9)
      throw std::invalid_argument("density matrix has eigenvalue " + std::to_string(lambda));
    lambda = std::clamp(lambda, 0.0, 1.0);
    if (lambda > 0.0) entropy -= lambda * std::log(lambda);
  }
  return entropy;
}

SubsystemGeometry subsystem_geometry(const Subsystem& sub, const LatticeSpec& lattice) {
  const std::vector<int> idx = sub.site_indices(lattice);
  std::vector<char> inside(lattice.num_sites(), 0);
  for (int i : idx) inside[i] = 1;
  SubsystemGeometry geom;
  geom.volume = static_cast<int>(idx.size());
  for (const Bond& bond : lattice.bonds)
    if (inside[bond.a] != inside[bond.b]) ++geom.area;
  return geom;
}

}  // namespace rmdsim
