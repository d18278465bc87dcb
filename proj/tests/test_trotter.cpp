#include <cmath>

#include "doctest.h"
#include "rmdsim/exact.hpp"
#include "rmdsim/trotter.hpp"

using namespace rmdsim;

namespace {

DriveParams paper_params(double period_ns, int order) {
  DriveParams p;
  p.j_mhz = 2.0;
  p.h0_mhz = 10.0;
  p.delta_h = 1.2;
  p.period_ns = period_ns;
  p.order = order;
  return p;
}

// Dense operator of a gate program, column by column.
Eigen::MatrixXcd program_operator(const GateProgram& program, int num_sites) {
  const Eigen::Index dim = Eigen::Index(1) << num_sites;
  Eigen::MatrixXcd u(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    Eigen::VectorXcd col = Eigen::VectorXcd::Zero(dim);
    col[c] = 1.0;
    apply_gate_program(col, num_sites, program);
    u.col(c) = col;
  }
  return u;
}

}  // namespace

TEST_CASE("elementary gates are unitary and particle conserving") {
  const Eigen::Matrix2cd g1 = onsite_gate(0.31, 2.7);
  CHECK((g1.adjoint() * g1 - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::Matrix4cd g2 = hop_gate(0.0126, 3.0);
  CHECK((g2.adjoint() * g2 - Eigen::Matrix4cd::Identity()).cwiseAbs().maxCoeff() < 1e-14);
  // Block diagonal in total occupation: no matrix element between |00>/|11>
  // and the single-particle pair.
  CHECK(std::abs(g2(0, 1)) + std::abs(g2(0, 2)) + std::abs(g2(3, 1)) + std::abs(g2(3, 2)) == 0.0);
}

TEST_CASE("five-term split groups bonds by sublattice") {
  const LatticeSpec small = build_lattice(2, 2);
  const FiveTermSplit split = five_term_split(small);
  CHECK(split.bond_groups[0].size() == 2);  // horizontal, odd x
  CHECK(split.bond_groups[1].empty());      // horizontal, even x
  CHECK(split.bond_groups[2].size() == 2);  // vertical, odd y
  CHECK(split.bond_groups[3].empty());      // vertical, even y

  const LatticeSpec full = build_lattice(13, 6);
  const FiveTermSplit fs = five_term_split(full);
  size_t total = 0;
  for (const auto& group : fs.bond_groups) {
    total += group.size();
    // Terms within one group touch disjoint sites.
    std::vector<char> used(full.num_sites(), 0);
    for (int b : group) {
      CHECK(!used[full.bonds[b].a]);
      CHECK(!used[full.bonds[b].b]);
      used[full.bonds[b].a] = used[full.bonds[b].b] = 1;
    }
  }
  CHECK(total == 137);
}

TEST_CASE("five groups reassemble the full Hamiltonian") {
  const LatticeSpec lattice = build_lattice(2, 3);
  const HamiltonianTerms terms = build_hamiltonian(lattice, paper_params(4, 1), -1);
  const OccupationBasis basis = OccupationBasis::full(lattice.num_sites());
  const FiveTermSplit split = five_term_split(lattice);

  // Assemble the dense matrix group by group, independently of
  // build_dense_hamiltonian's bond loop.
  const Eigen::Index dim = basis.dim();
  Eigen::MatrixXcd assembled = Eigen::MatrixXcd::Zero(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    double diag = 0.0;
    for (int site : split.onsite_sites)
      if (a >> site & 1) diag += terms.onsite[site];
    assembled(a, a) = diag;
  }
  for (const auto& group : split.bond_groups)
    for (int b : group) {
      const Bond& bond = lattice.bonds[b];
      for (Eigen::Index a = 0; a < dim; ++a) {
        const int na = a >> bond.a & 1, nb = a >> bond.b & 1;
        if (na + nb == 1)
          assembled(a ^ ((1 << bond.a) | (1 << bond.b)), a) += terms.hops[b];
      }
    }
  const Eigen::MatrixXcd direct = build_dense_hamiltonian(lattice, terms, basis);
  CHECK((assembled - direct).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("a single commuting group is factorized without error") {
  const LatticeSpec lattice = build_lattice(2, 1);
  DriveParams params = paper_params(4, 0);
  params.h0_mhz = 0.0;  // leaves only one hopping group
  const HamiltonianTerms terms = build_hamiltonian(lattice, params, +1);
  const double dt = 2.5;
  const Eigen::MatrixXcd u = program_operator(second_order_step(lattice, terms, dt), 2);
  const Eigen::MatrixXcd exact = period_propagator(
      build_dense_hamiltonian(lattice, terms, OccupationBasis::full(2)), dt);
  CHECK((u - exact).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("second-order step error shrinks as dt^3") {
  const LatticeSpec lattice = build_lattice(2, 2);
  const HamiltonianTerms terms = build_hamiltonian(lattice, paper_params(4, 1), +1);
  const Eigen::MatrixXcd h = build_dense_hamiltonian(lattice, terms, OccupationBasis::full(4));

  auto step_error = [&](double dt) {
    const Eigen::MatrixXcd u = program_operator(second_order_step(lattice, terms, dt), 4);
    return (u - period_propagator(h, dt)).cwiseAbs().maxCoeff();
  };
  const double e3 = step_error(3.0);
  const double e15 = step_error(1.5);
  CHECK(e3 > 1e-12);
  CHECK(e3 / e15 > 6.0);
  CHECK(e3 / e15 < 10.0);
}

TEST_CASE("the step program is palindromic") {
  const LatticeSpec lattice = build_lattice(3, 2);
  const HamiltonianTerms terms = build_hamiltonian(lattice, paper_params(4, 1), +1);
  GateProgram program = second_order_step(lattice, terms, 2.0);
  GateProgram reversed(program.rbegin(), program.rend());
  const Eigen::MatrixXcd a = program_operator(program, 6);
  const Eigen::MatrixXcd b = program_operator(reversed, 6);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("gate evolution conserves particle number exactly") {
  const LatticeSpec lattice = build_lattice(3, 2);
  GateStateEvolver evolver(lattice, paper_params(5.0, 1), 3.0);
  const EvolutionTrace trace = evolver.evolve(generate_sequence(1, 8, 9), 1, {});
  for (double n : trace.n_total) CHECK(std::abs(n - 3.0) < 1e-12);
}

TEST_CASE("time grid merges dt and period boundaries") {
  const std::vector<double> grid = make_time_grid(4.0, 3.0, 20.0);
  const std::vector<double> expected{3, 4, 7, 8, 11, 12, 15, 16, 19, 20};
  REQUIRE(grid.size() == expected.size());
  for (size_t i = 0; i < grid.size(); ++i) CHECK(grid[i] == doctest::Approx(expected[i]));

  double prev = 0.0;
  for (double t : grid) {
    CHECK(t - prev <= 3.0 + 1e-12);  // no interval exceeds dt
    prev = t;
  }

  CHECK(period_sub_steps(7.0, 3.0) == std::vector<double>{3.0, 3.0, 1.0});
  CHECK(period_sub_steps(4.0, 8.0) == std::vector<double>{4.0});
  CHECK(period_sub_steps(4.0, 2.0) == std::vector<double>{2.0, 2.0});
}

TEST_CASE("trotter error falls monotonically on a dt ladder") {
  const LatticeSpec lattice = build_lattice(2, 2);
  const DriveParams params = paper_params(20.0, 2);
  const RmdSequence seq = generate_sequence(2, 2, 21);  // 8 periods

  double previous = 1e9;
  for (double dt : {4.0, 2.0, 1.0}) {
    const double err = trotter_error(lattice, params, dt, seq);
    CHECK(err < previous);
    CHECK(err > 0.0);
    previous = err;
  }
}

TEST_CASE("sub-period recording must sit on the grid") {
  const LatticeSpec lattice = build_lattice(2, 2);
  GateStateEvolver evolver(lattice, paper_params(4.0, 1), 2.0);
  const RmdSequence seq = generate_sequence(1, 4, 2);
  const EvolutionTrace ok = evolver.evolve_at_times(seq, {2.0, 4.0, 10.0}, {});
  CHECK(ok.times_ns == std::vector<double>{0.0, 2.0, 4.0, 10.0});
  CHECK_THROWS_AS(evolver.evolve_at_times(seq, {3.0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(evolver.evolve_at_times(seq, {64.0}, {}), std::invalid_argument);
}
