#include "rmdsim/trotter.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace rmdsim {

using std::complex;

Eigen::Matrix2cd onsite_gate(double omega, double dt) {
  Eigen::Matrix2cd g = Eigen::Matrix2cd::Identity();
  g(1, 1) = std::polar(1.0, -omega * dt);
  return g;
}

Eigen::Matrix4cd hop_gate(double g, double dt) {
  const double theta = g * dt;
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix4cd u = Eigen::Matrix4cd::Identity();
  u(1, 1) = c;
  u(2, 2) = c;
  u(1, 2) = complex<double>(0.0, -s);
  u(2, 1) = complex<double>(0.0, -s);
  return u;
}

FiveTermSplit five_term_split(const LatticeSpec& lattice) {
  FiveTermSplit split;
  split.onsite_sites.resize(lattice.num_sites());
  for (int i = 0; i < lattice.num_sites(); ++i) split.onsite_sites[i] = i;
  for (size_t b = 0; b < lattice.bonds.size(); ++b) {
    const Bond& bond = lattice.bonds[b];
    const Site& origin = lattice.sites[bond.a];
    if (bond.axis == BondAxis::Horizontal)
      split.bond_groups[origin.x % 2 == 1 ? 0 : 1].push_back(static_cast<int>(b));
    else
      split.bond_groups[origin.y % 2 == 1 ? 2 : 3].push_back(static_cast<int>(b));
  }
  return split;
}

namespace {

void append_group(GateProgram& program, const LatticeSpec& lattice, const HamiltonianTerms& terms,
                  const FiveTermSplit& split, int group, double dt) {
  if (group == 0) {
    for (int site : split.onsite_sites) {
      if (terms.onsite[site] == 0.0) continue;  // identity gate, skip
      program.push_back({{site}, onsite_gate(terms.onsite[site], dt)});
    }
    return;
  }
  for (int b : split.bond_groups[group - 1]) {
    const Bond& bond = lattice.bonds[b];
    program.push_back({{bond.a, bond.b}, hop_gate(terms.hops[b], dt)});
  }
}

}  // namespace

GateProgram second_order_step(const LatticeSpec& lattice, const HamiltonianTerms& terms,
                              double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("trotter step dt must be positive");
  const FiveTermSplit split = five_term_split(lattice);
  GateProgram program;
  for (int g = 0; g < 5; ++g) append_group(program, lattice, terms, split, g, dt / 2.0);
  for (int g = 4; g >= 0; --g) append_group(program, lattice, terms, split, g, dt / 2.0);
  return program;
}

Eigen::MatrixXcd intra_column_hamiltonian(const LatticeSpec& lattice,
                                          const HamiltonianTerms& terms) {
  const int ly = lattice.ly;
  const int dim = 1 << ly;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  const double j = terms.hops.size() > 0 ? terms.hops[0] : 0.0;
  for (int p = 0; p < dim; ++p) {
    double diag = 0.0;
    for (int y = 1; y <= ly; ++y)
      if (p >> (y - 1) & 1) diag += terms.onsite[lattice.site_index(1, y)];
    h(p, p) = diag;
    for (int y = 1; y < ly; ++y) {
      const int lo = (p >> (y - 1)) & 1, hi = (p >> y) & 1;
      if (lo + hi == 1) h(p ^ (3 << (y - 1)), p) += j;
    }
  }
  return h;
}

namespace {

Eigen::MatrixXcd hermitian_exponential(const Eigen::MatrixXcd& h, double dt) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
  Eigen::VectorXcd phases(h.rows());
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    phases[i] = std::polar(1.0, -solver.eigenvalues()[i] * dt);
  return solver.eigenvectors() * phases.asDiagonal() * solver.eigenvectors().adjoint();
}

}  // namespace

GateProgram column_split_step(const LatticeSpec& lattice, const HamiltonianTerms& terms,
                              double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("trotter step dt must be positive");
  const Eigen::MatrixXcd column_half =
      hermitian_exponential(intra_column_hamiltonian(lattice, terms), dt / 2.0);
  const Eigen::Matrix4cd bond_half =
      hop_gate(terms.hops.size() > 0 ? terms.hops[0] : 0.0, dt / 2.0);

  auto column_sites = [&](int x) {
    std::vector<int> sites(lattice.ly);
    for (int y = 1; y <= lattice.ly; ++y) sites[y - 1] = lattice.site_index(x, y);
    return sites;
  };

  GateProgram program;
  for (int x = 1; x <= lattice.lx; ++x) program.push_back({column_sites(x), column_half});
  for (int x = 1; x < lattice.lx; ++x)
    for (int y = 1; y <= lattice.ly; ++y)
      program.push_back(
          {{lattice.site_index(x, y), lattice.site_index(x + 1, y)}, bond_half});
  for (int x = lattice.lx - 1; x >= 1; --x)
    for (int y = lattice.ly; y >= 1; --y)
      program.push_back(
          {{lattice.site_index(x, y), lattice.site_index(x + 1, y)}, bond_half});
  for (int x = lattice.lx; x >= 1; --x) program.push_back({column_sites(x), column_half});
  return program;
}

std::vector<double> period_sub_steps(double period_ns, double dt) {
  if (!(period_ns > 0.0) || !(dt > 0.0))
    throw std::invalid_argument("period and dt must be positive");
  if (dt >= period_ns) return {period_ns};
  const int full = static_cast<int>(std::floor(period_ns / dt + 1e-12));
  std::vector<double> chunks(full, dt);
  const double rem = period_ns - full * dt;
  if (rem > 1e-9) chunks.push_back(rem);
  return chunks;
}

std::vector<double> make_time_grid(double period_ns, double dt, double t_end) {
  const std::vector<double> chunks = period_sub_steps(period_ns, dt);
  std::vector<double> grid;
  int period = 0;
  while (period * period_ns < t_end - 1e-9) {
    double within = 0.0;
    for (double c : chunks) {
      within += c;
      const double stamp = period * period_ns + within;
      if (stamp > t_end + 1e-9) return grid;
      grid.push_back(stamp);
    }
    ++period;
  }
  return grid;
}

}  // namespace rmdsim
