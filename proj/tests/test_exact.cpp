#include <complex>
#include <random>

#include "doctest.h"
#include "rmdsim/exact.hpp"

using namespace rmdsim;
using std::complex;

namespace {

// Independent term-by-term construction of the dense Hamiltonian from
// single-site operators embedded by Kronecker products. Deliberately a
// different code path from build_dense_hamiltonian.
Eigen::MatrixXcd kron_oracle_hamiltonian(const LatticeSpec& lattice,
                                         const HamiltonianTerms& terms) {
  const int n = lattice.num_sites();
  const Eigen::Index dim = Eigen::Index(1) << n;
  auto embed = [&](const Eigen::Matrix2cd& op, int site) {
    Eigen::MatrixXcd full = Eigen::MatrixXcd::Identity(1, 1);
    for (int i = 0; i < n; ++i) {
      const Eigen::MatrixXcd& factor =
          (i == site) ? static_cast<Eigen::MatrixXcd>(op)
                      : static_cast<Eigen::MatrixXcd>(Eigen::Matrix2cd::Identity());
      // bit i is the fastest index, so later sites go on the left.
      Eigen::MatrixXcd grown(full.rows() * 2, full.cols() * 2);
      grown.setZero();
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          grown.block(r * full.rows(), c * full.cols(), full.rows(), full.cols()) =
              factor(r, c) * full;
      full = grown;
    }
    return full;
  };
  Eigen::Matrix2cd number, raise, lower;
  number << 0, 0, 0, 1;
  raise << 0, 0, 1, 0;
  lower << 0, 1, 0, 0;

  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) h += terms.onsite[i] * embed(number, i);
  for (size_t b = 0; b < lattice.bonds.size(); ++b) {
    const Bond& bond = lattice.bonds[b];
    h += terms.hops[b] * (embed(raise, bond.a) * embed(lower, bond.b) +
                          embed(raise, bond.b) * embed(lower, bond.a));
  }
  return h;
}

// Brute-force partial trace by explicit double loop over kept/traced indices.
Eigen::MatrixXcd partial_trace_oracle(const Eigen::VectorXcd& psi, int n,
                                      const std::vector<int>& keep) {
  const int k = static_cast<int>(keep.size());
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(1 << k, 1 << k);
  for (Eigen::Index a = 0; a < psi.size(); ++a)
    for (Eigen::Index b = 0; b < psi.size(); ++b) {
      bool same_env = true;
      for (int i = 0; i < n && same_env; ++i) {
        if (std::find(keep.begin(), keep.end(), i) != keep.end()) continue;
        same_env = ((a >> i & 1) == (b >> i & 1));
      }
      if (!same_env) continue;
      int pa = 0, pb = 0;
      for (int j = 0; j < k; ++j) {
        pa |= (a >> keep[j] & 1) << j;
        pb |= (b >> keep[j] & 1) << j;
      }
      rho(pa, pb) += psi[a] * std::conj(psi[b]);
    }
  return rho;
}

DriveParams paper_params(double period_ns, int order) {
  DriveParams p;
  p.j_mhz = 2.0;
  p.h0_mhz = 10.0;
  p.delta_h = 1.2;
  p.period_ns = period_ns;
  p.order = order;
  return p;
}

}  // namespace

TEST_CASE("dense Hamiltonian closed forms on tiny lattices") {
  // Single odd-y site has zero potential.
  const LatticeSpec one = build_lattice(1, 1);
  const auto h1 = build_dense_hamiltonian(one, build_hamiltonian(one, paper_params(4, 0), +1),
                                          OccupationBasis::full(1));
  CHECK(h1.cwiseAbs().maxCoeff() == 0.0);

  // Two sites in a row couple |10> and |01> with 2*pi*J.
  const LatticeSpec two = build_lattice(2, 1);
  const auto h2 = build_dense_hamiltonian(two, build_hamiltonian(two, paper_params(4, 0), +1),
                                          OccupationBasis::full(2));
  const double j = kTwoPi * 2.0 / 1000.0;
  CHECK(std::abs(h2(1, 2) - j) < 1e-15);
  CHECK(std::abs(h2(2, 1) - j) < 1e-15);
  CHECK(std::abs(h2(0, 0)) + std::abs(h2(3, 3)) < 1e-15);
  CHECK(std::abs(h2(1, 1)) < 1e-15);
}

TEST_CASE("dense Hamiltonian matches the kron-product oracle") {
  const LatticeSpec lattice = build_lattice(2, 2);
  for (int polarity : {+1, -1}) {
    const HamiltonianTerms terms = build_hamiltonian(lattice, paper_params(4, 1), polarity);
    const Eigen::MatrixXcd direct =
        build_dense_hamiltonian(lattice, terms, OccupationBasis::full(4));
    const Eigen::MatrixXcd oracle = kron_oracle_hamiltonian(lattice, terms);
    CHECK((direct - oracle).cwiseAbs().maxCoeff() < 1e-14);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> sd(direct), so(oracle);
    CHECK((sd.eigenvalues() - so.eigenvalues()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Hamiltonian is block diagonal in particle number") {
  const LatticeSpec lattice = build_lattice(3, 2);
  const HamiltonianTerms terms = build_hamiltonian(lattice, paper_params(4, 1), +1);
  const OccupationBasis basis = OccupationBasis::full(6);
  const Eigen::MatrixXcd h = build_dense_hamiltonian(lattice, terms, basis);
  for (Eigen::Index a = 0; a < basis.dim(); ++a)
    for (Eigen::Index b = 0; b < basis.dim(); ++b)
      if (std::popcount(basis.mask_of(a)) != std::popcount(basis.mask_of(b)))
        CHECK(std::abs(h(a, b)) == 0.0);
}

TEST_CASE("period propagator closed forms") {
  // T = 0 is the identity.
  Eigen::MatrixXcd h(2, 2);
  h << 0.0, 0.0, 0.0, 0.7;
  CHECK((period_propagator(h, 0.0) - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-14);

  // Diagonal generator picks up pure phases.
  const Eigen::MatrixXcd u = period_propagator(h, 3.0);
  CHECK(std::abs(u(0, 0) - 1.0) < 1e-14);
  CHECK(std::abs(u(1, 1) - std::polar(1.0, -0.7 * 3.0)) < 1e-14);

  Eigen::MatrixXcd skew(2, 2);
  skew << 0.0, 1.0, -1.0, 0.0;
  CHECK_THROWS_AS(period_propagator(skew, 1.0), std::invalid_argument);
}

TEST_CASE("two-site hop transfer probability") {
  const LatticeSpec lattice = build_lattice(2, 1);
  const double t = 37.0;
  ExactEngine engine(lattice, paper_params(t, 0), BasisMode::Full);
  const Eigen::MatrixXcd u = engine.propagator(+1);
  const double j = kTwoPi * 2.0 / 1000.0;
  // |<01|U|10>|^2 = sin^2(2 pi J T), checked against the dense exponential.
  CHECK(std::norm(u(2, 1)) == doctest::Approx(std::sin(j * t) * std::sin(j * t)).epsilon(1e-10));
}

TEST_CASE("propagators are unitary on sampled vectors") {
  const LatticeSpec lattice = build_lattice(2, 3);
  ExactEngine engine(lattice, paper_params(5.0, 1), BasisMode::Sector);
  const Eigen::MatrixXcd& u = engine.propagator(-1);
  std::mt19937 rng(7);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 4; ++trial) {
    Eigen::VectorXcd v(u.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = complex<double>(gauss(rng), gauss(rng));
    v.normalize();
    CHECK((u.adjoint() * (u * v) - v).norm() < 1e-10);
  }
}

TEST_CASE("symmetric drive evolves identically for every seed") {
  const LatticeSpec lattice = build_lattice(2, 2);
  DriveParams params = paper_params(4.0, 0);
  params.delta_h = 0.0;
  ExactEngine engine(lattice, params, BasisMode::Full);
  const EvolutionTrace a = engine.evolve(generate_sequence(0, 32, 1), 1, {});
  const EvolutionTrace b = engine.evolve(generate_sequence(0, 32, 2), 1, {});
  for (size_t i = 0; i < a.imbalance.size(); ++i)
    CHECK(a.imbalance[i] == doctest::Approx(b.imbalance[i]).epsilon(1e-12));
}

TEST_CASE("one dipole of evolution matches an independent dense oracle") {
  const LatticeSpec lattice = build_lattice(2, 2);
  const DriveParams params = paper_params(4.0, 1);
  ExactEngine engine(lattice, params, BasisMode::Full);

  RmdSequence dipole;
  dipole.order = 1;
  dipole.num_blocks = 1;
  dipole.polarities = {+1, -1};
  const EvolutionTrace trace = engine.evolve(dipole, 1, {});

  // Oracle: exponentials of the kron-built Hamiltonians applied by hand.
  const auto hp = kron_oracle_hamiltonian(lattice, build_hamiltonian(lattice, params, +1));
  const auto hm = kron_oracle_hamiltonian(lattice, build_hamiltonian(lattice, params, -1));
  const OccupationBasis basis = OccupationBasis::full(4);
  Eigen::VectorXcd psi = basis.embed(density_wave_state(lattice));
  psi = period_propagator(hp, 4.0) * psi;
  psi = period_propagator(hm, 4.0) * psi;
  const double oracle_imbalance =
      imbalance(z_expectations(psi, basis), density_wave_pattern(lattice), 2);
  CHECK(trace.imbalance.back() == doctest::Approx(oracle_imbalance).epsilon(1e-12));
  CHECK(trace.times_ns.back() == doctest::Approx(8.0));
}

TEST_CASE("reduced density matrices") {
  const LatticeSpec lattice = build_lattice(2, 2);
  const OccupationBasis basis = OccupationBasis::full(4);

  // Product state: rank-1 projector on any subsystem.
  const Eigen::VectorXcd dw = basis.embed(density_wave_state(lattice));
  const Eigen::MatrixXcd rho = reduced_density_matrix(dw, basis, {0, 2});
  CHECK(von_neumann_entropy(rho) == doctest::Approx(0.0));
  CHECK((rho * rho - rho).cwiseAbs().maxCoeff() < 1e-12);

  // Bell pair between sites 0 and 1: one site is maximally mixed.
  Eigen::VectorXcd bell = Eigen::VectorXcd::Zero(16);
  bell[1] = 1.0 / std::sqrt(2.0);
  bell[2] = 1.0 / std::sqrt(2.0);
  const Eigen::MatrixXcd single = reduced_density_matrix(bell, basis, {0});
  CHECK((single - Eigen::MatrixXcd::Identity(2, 2) / 2.0).cwiseAbs().maxCoeff() < 1e-12);

  // Random state vs the double-loop oracle.
  std::mt19937 rng(11);
  std::normal_distribution<double> gauss;
  Eigen::VectorXcd random(16);
  for (Eigen::Index i = 0; i < 16; ++i) random[i] = complex<double>(gauss(rng), gauss(rng));
  random.normalize();
  const std::vector<int> keep{1, 3};
  const Eigen::MatrixXcd fast = reduced_density_matrix(random, basis, keep);
  const Eigen::MatrixXcd slow = partial_trace_oracle(random, 4, keep);
  CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(reduced_density_matrix(random, basis, {0, 9}), std::invalid_argument);
}

TEST_CASE("entropy of complement equals entropy of subsystem on pure states") {
  const LatticeSpec lattice = build_lattice(3, 2);
  ExactEngine engine(lattice, paper_params(6.0, 1), BasisMode::Full);
  const RmdSequence seq = generate_sequence(1, 8, 3);
  Eigen::VectorXcd psi = engine.basis().embed(density_wave_state(lattice));
  psi = engine.propagate(psi, seq, 16);
  const Eigen::MatrixXcd rho_a = reduced_density_matrix(psi, engine.basis(), {0, 4});
  const Eigen::MatrixXcd rho_b = reduced_density_matrix(psi, engine.basis(), {1, 2, 3, 5});
  CHECK(von_neumann_entropy(rho_a) ==
        doctest::Approx(von_neumann_entropy(rho_b)).epsilon(1e-8));
}

TEST_CASE("sector and full bases give the same physics") {
  const LatticeSpec lattice = build_lattice(2, 4);
  const DriveParams params = paper_params(5.0, 1);
  ExactEngine full(lattice, params, BasisMode::Full);
  ExactEngine sector(lattice, params, BasisMode::Sector);
  CHECK(sector.basis().dim() == 70);

  const RmdSequence seq = generate_sequence(1, 25, 17);
  ObserverSet observers;
  observers.entropy_subsystems.push_back({"corner", {{1, 4}}});
  const EvolutionTrace a = full.evolve(seq, 5, observers);
  const EvolutionTrace b = sector.evolve(seq, 5, observers);
  REQUIRE(a.times_ns == b.times_ns);
  for (size_t i = 0; i < a.imbalance.size(); ++i) {
    CHECK(std::abs(a.imbalance[i] - b.imbalance[i]) < 1e-10);
    CHECK(std::abs(a.n_total[i] - b.n_total[i]) < 1e-10);
    CHECK(std::abs(a.entropies.at("corner")[i] - b.entropies.at("corner")[i]) < 1e-10);
    CHECK(std::abs(a.n_total[i] - 4.0) < 1e-10);  // conservation along the way
  }
}

TEST_CASE("stroboscopic composition") {
  const LatticeSpec lattice = build_lattice(2, 3);
  ExactEngine engine(lattice, paper_params(7.0, 2), BasisMode::Sector);
  const RmdSequence seq = generate_sequence(2, 8, 5);
  Eigen::VectorXcd psi0 = engine.basis().embed(density_wave_state(lattice));

  const Eigen::VectorXcd all = engine.propagate(psi0, seq, 24);
  Eigen::VectorXcd part = engine.propagate(psi0, seq, 10);
  RmdSequence rest = seq;
  rest.polarities.erase(rest.polarities.begin(), rest.polarities.begin() + 10);
  part = engine.propagate(part, rest, 14);
  CHECK((all - part).norm() < 1e-10);

  CHECK_THROWS_AS(engine.propagate(psi0, seq, 1000), std::invalid_argument);
}

TEST_CASE("capacity limits produce explicit errors") {
  const LatticeSpec lattice = build_lattice(3, 2);
  DenseCaps caps;
  caps.full_sites = 4;
  caps.sector_sites = 5;
  CHECK_THROWS_WITH_AS(ExactEngine(lattice, paper_params(4, 0), BasisMode::Full, caps),
                       doctest::Contains("capped"), std::runtime_error);
  CHECK_THROWS_AS(ExactEngine(lattice, paper_params(4, 0), BasisMode::Sector, caps),
                  std::runtime_error);
}
