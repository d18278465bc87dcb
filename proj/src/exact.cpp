#include "rmdsim/exact.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace rmdsim {

OccupationBasis OccupationBasis::full(int num_sites) {
  if (num_sites < 1 || num_sites > 24)
    throw std::invalid_argument("full basis supports 1..24 sites, got " +
                                std::to_string(num_sites));
  OccupationBasis basis;
  basis.mode_ = BasisMode::Full;
  basis.num_sites_ = num_sites;
  basis.dim_ = Eigen::Index(1) << num_sites;
  return basis;
}

OccupationBasis OccupationBasis::sector(int num_sites, int n_particles) {
  if (num_sites < 1 || num_sites > 24)
    throw std::invalid_argument("sector basis supports 1..24 sites, got " +
                                std::to_string(num_sites));
  if (n_particles < 0 || n_particles > num_sites)
    throw std::invalid_argument("particle number outside [0, num_sites]");
  OccupationBasis basis;
  basis.mode_ = BasisMode::Sector;
  basis.num_sites_ = num_sites;
  basis.n_particles_ = n_particles;
  const uint64_t limit = uint64_t(1) << num_sites;
  for (uint64_t m = 0; m < limit; ++m)
    if (std::popcount(m) == n_particles) basis.states_.push_back(m);
  basis.dim_ = static_cast<Eigen::Index>(basis.states_.size());
  return basis;
}

Eigen::Index OccupationBasis::index_of(uint64_t mask) const {
  if (mode_ == BasisMode::Full) {
    if (mask >= static_cast<uint64_t>(dim_)) throw std::invalid_argument("mask outside basis");
    return static_cast<Eigen::Index>(mask);
  }
  const auto it = std::lower_bound(states_.begin(), states_.end(), mask);
  if (it == states_.end() || *it != mask)
    throw std::invalid_argument("mask not in fixed-particle sector");
  return static_cast<Eigen::Index>(it - states_.begin());
}

Eigen::VectorXcd OccupationBasis::embed(const ProductState& state) const {
  if (static_cast<int>(state.occupation.size()) != num_sites_)
    throw std::invalid_argument("product state size does not match basis");
  uint64_t mask = 0;
  for (int i = 0; i < num_sites_; ++i)
    if (state.occupation[i]) mask |= uint64_t(1) << i;
  Eigen::VectorXcd amps = Eigen::VectorXcd::Zero(dim_);
  amps[index_of(mask)] = 1.0;
  return amps;
}

Eigen::MatrixXcd build_dense_hamiltonian(const LatticeSpec& lattice,
                                         const HamiltonianTerms& terms,
                                         const OccupationBasis& basis) {
  if (lattice.num_sites() != basis.num_sites())
    throw std::invalid_argument("lattice and basis size mismatch");
  const Eigen::Index dim = basis.dim();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const uint64_t mask = basis.mask_of(a);
    double diag = 0.0;
    for (int i = 0; i < lattice.num_sites(); ++i)
      if (mask >> i & 1) diag += terms.onsite[i];
    h(a, a) = diag;
    for (size_t b = 0; b < lattice.bonds.size(); ++b) {
      const Bond& bond = lattice.bonds[b];
      const int na = mask >> bond.a & 1, nb = mask >> bond.b & 1;
      if (na + nb != 1) continue;
      const uint64_t flipped = mask ^ ((uint64_t(1) << bond.a) | (uint64_t(1) << bond.b));
      h(basis.index_of(flipped), a) += terms.hops[b];
    }
  }
  return h;
}

Eigen::MatrixXcd period_propagator(const Eigen::MatrixXcd& h, double t_ns) {
  if (h.rows() != h.cols()) throw std::invalid_argument("propagator needs a square matrix");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("propagator needs a Hermitian matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
  Eigen::VectorXcd phases(h.rows());
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    phases[i] = std::polar(1.0, -solver.eigenvalues()[i] * t_ns);
  return solver.eigenvectors() * phases.asDiagonal() * solver.eigenvectors().adjoint();
}

Eigen::VectorXd z_expectations(const Eigen::VectorXcd& amplitudes, const OccupationBasis& basis) {
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(basis.num_sites());
  for (Eigen::Index a = 0; a < basis.dim(); ++a) {
    const double p = std::norm(amplitudes[a]);
    if (p == 0.0) continue;
    const uint64_t mask = basis.mask_of(a);
    for (int i = 0; i < basis.num_sites(); ++i)
      if (mask >> i & 1) occ[i] += p;
  }
  return 2.0 * occ - Eigen::VectorXd::Ones(basis.num_sites());
}

namespace {

/// Grouping of basis states by complement occupation, reusable across records.
struct RdmPlan {
  int sub_dim = 0;
  std::vector<std::vector<std::pair<int, Eigen::Index>>> groups;
};

RdmPlan build_rdm_plan(const OccupationBasis& basis, const std::vector<int>& subsystem_sites) {
  if (subsystem_sites.empty() || subsystem_sites.size() > 6)
    throw std::invalid_argument("reduced density matrix supports 1..6 subsystem sites");
  uint64_t sub_mask = 0;
  for (int s : subsystem_sites) {
    if (s < 0 || s >= basis.num_sites())
      throw std::invalid_argument("subsystem site outside lattice");
    if (sub_mask >> s & 1) throw std::invalid_argument("repeated subsystem site");
    sub_mask |= uint64_t(1) << s;
  }
  RdmPlan plan;
  plan.sub_dim = 1 << subsystem_sites.size();
  std::unordered_map<uint64_t, int> group_of;
  for (Eigen::Index a = 0; a < basis.dim(); ++a) {
    const uint64_t mask = basis.mask_of(a);
    int p = 0;
    for (size_t j = 0; j < subsystem_sites.size(); ++j)
      if (mask >> subsystem_sites[j] & 1) p |= 1 << j;
    const uint64_t env = mask & ~sub_mask;
    auto [it, inserted] = group_of.try_emplace(env, static_cast<int>(plan.groups.size()));
    if (inserted) plan.groups.emplace_back();
    plan.groups[it->second].push_back({p, a});
  }
  return plan;
}

Eigen::MatrixXcd rdm_from_plan(const RdmPlan& plan, const Eigen::VectorXcd& amplitudes) {
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(plan.sub_dim, plan.sub_dim);
  for (const auto& group : plan.groups)
    for (const auto& [p, a] : group)
      for (const auto& [q, b] : group) rho(p, q) += amplitudes[a] * std::conj(amplitudes[b]);
  return rho;
}

}  // namespace

Eigen::MatrixXcd reduced_density_matrix(const Eigen::VectorXcd& amplitudes,
                                        const OccupationBasis& basis,
                                        const std::vector<int>& subsystem_sites) {
  return rdm_from_plan(build_rdm_plan(basis, subsystem_sites), amplitudes);
}

void apply_gate(Eigen::VectorXcd& amplitudes, int num_sites, const Gate& gate) {
  const int k = static_cast<int>(gate.sites.size());
  const int d = 1 << k;
  if (gate.u.rows() != d || gate.u.cols() != d)
    throw std::invalid_argument("gate dimension does not match its site count");
  std::vector<uint64_t> offset(d, 0);
  for (int p = 1; p < d; ++p) {
    const int j = std::countr_zero(static_cast<unsigned>(p));
    offset[p] = offset[p & (p - 1)] | (uint64_t(1) << gate.sites[j]);
  }
  std::vector<int> sorted_bits(gate.sites.begin(), gate.sites.end());
  std::sort(sorted_bits.begin(), sorted_bits.end());

  const uint64_t env_count = uint64_t(1) << (num_sites - k);
  Eigen::VectorXcd in(d), out(d);
  for (uint64_t e = 0; e < env_count; ++e) {
    uint64_t m = e;
    for (int s : sorted_bits) m = ((m >> s) << (s + 1)) | (m & ((uint64_t(1) << s) - 1));
    for (int p = 0; p < d; ++p) in[p] = amplitudes[m | offset[p]];
    out.noalias() = gate.u * in;
    for (int p = 0; p < d; ++p) amplitudes[m | offset[p]] = out[p];
  }
}

void apply_gate_program(Eigen::VectorXcd& amplitudes, int num_sites, const GateProgram& program) {
  for (const Gate& gate : program) apply_gate(amplitudes, num_sites, gate);
}

namespace {

/// Shared per-record bookkeeping for the dense engines.
class TraceRecorder {
 public:
  TraceRecorder(const LatticeSpec& lattice, const OccupationBasis& basis,
                const ObserverSet& observers)
      : basis_(basis), pattern_(density_wave_pattern(lattice)) {
    n0_ = density_wave_state(lattice).total_particles();
    for (const Subsystem& sub : observers.entropy_subsystems)
      plans_.push_back({sub.label, build_rdm_plan(basis, sub.site_indices(lattice))});
  }

  void record(EvolutionTrace& trace, double t_ns, const Eigen::VectorXcd& psi) const {
    const Eigen::VectorXd z = z_expectations(psi, basis_);
    trace.times_ns.push_back(t_ns);
    trace.imbalance.push_back(imbalance(z, pattern_, n0_));
    trace.n_total.push_back((z.sum() + basis_.num_sites()) / 2.0);
    for (const auto& [label, plan] : plans_)
      trace.entropies[label].push_back(von_neumann_entropy(rdm_from_plan(plan, psi)));
  }

 private:
  const OccupationBasis& basis_;
  Eigen::VectorXi pattern_;
  int n0_ = 0;
  std::vector<std::pair<std::string, RdmPlan>> plans_;
};

OccupationBasis make_basis(const LatticeSpec& lattice, BasisMode mode, const DenseCaps& caps) {
  const int sites = lattice.num_sites();
  if (mode == BasisMode::Full) {
    if (sites > caps.full_sites)
      throw std::runtime_error("full dense basis capped at " + std::to_string(caps.full_sites) +
                               " sites; lattice has " + std::to_string(sites));
    return OccupationBasis::full(sites);
  }
  if (sites > caps.sector_sites)
    throw std::runtime_error("sector dense basis capped at " + std::to_string(caps.sector_sites) +
                             " sites; lattice has " + std::to_string(sites));
  return OccupationBasis::sector(sites, density_wave_state(lattice).total_particles());
}

}  // namespace

ExactEngine::ExactEngine(const LatticeSpec& lattice, const DriveParams& params, BasisMode mode,
                         DenseCaps caps)
    : lattice_(lattice), params_(params), basis_(make_basis(lattice, mode, caps)) {}

const Eigen::MatrixXcd& ExactEngine::hamiltonian(int polarity) {
  auto it = hams_.find(polarity);
  if (it == hams_.end()) {
    const HamiltonianTerms terms = build_hamiltonian(lattice_, params_, polarity);
    it = hams_.emplace(polarity, build_dense_hamiltonian(lattice_, terms, basis_)).first;
  }
  return it->second;
}

const Eigen::MatrixXcd& ExactEngine::propagator(int polarity) {
  auto it = propagators_.find(polarity);
  if (it == propagators_.end())
    it = propagators_.emplace(polarity, period_propagator(hamiltonian(polarity), params_.period_ns))
             .first;
  return it->second;
}

Eigen::VectorXcd ExactEngine::propagate(Eigen::VectorXcd amplitudes, const RmdSequence& seq,
                                        int num_periods) {
  if (num_periods > seq.num_periods())
    throw std::invalid_argument("cannot evolve past the end of the drive sequence");
  Eigen::VectorXcd next(amplitudes.size());
  for (int k = 0; k < num_periods; ++k) {
    next.noalias() = propagator(seq.polarities[k]) * amplitudes;
    amplitudes.swap(next);
  }
  return amplitudes;
}

EvolutionTrace ExactEngine::evolve(const RmdSequence& seq, int record_every,
                                   const ObserverSet& observers) {
  return evolve_state(basis_.embed(density_wave_state(lattice_)), seq, record_every, observers);
}

EvolutionTrace ExactEngine::evolve_state(Eigen::VectorXcd amplitudes, const RmdSequence& seq,
                                         int record_every, const ObserverSet& observers) {
  if (record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  TraceRecorder recorder(lattice_, basis_, observers);
  EvolutionTrace trace;
  trace.seed = seq.seed;
  trace.engine = "exact";
  recorder.record(trace, 0.0, amplitudes);
  Eigen::VectorXcd next(amplitudes.size());
  for (int k = 0; k < seq.num_periods(); ++k) {
    next.noalias() = propagator(seq.polarities[k]) * amplitudes;
    amplitudes.swap(next);
    if ((k + 1) % record_every == 0)
      recorder.record(trace, (k + 1) * params_.period_ns, amplitudes);
  }
  return trace;
}

GateStateEvolver::GateStateEvolver(const LatticeSpec& lattice, const DriveParams& params,
                                   double dt, SplitKind split)
    : lattice_(lattice), params_(params), dt_(dt), split_(split) {
  if (lattice.num_sites() > 24)
    throw std::runtime_error("gate state evolution capped at 24 sites");
  chunks_ = period_sub_steps(params.period_ns, dt);
  for (int polarity : {+1, -1}) {
    const HamiltonianTerms terms = build_hamiltonian(lattice_, params_, polarity);
    std::vector<GateProgram> programs;
    for (double chunk : chunks_)
      programs.push_back(split_ == SplitKind::FiveTerm
                             ? second_order_step(lattice_, terms, chunk)
                             : column_split_step(lattice_, terms, chunk));
    chunk_programs_[polarity] = std::move(programs);
  }
}

Eigen::VectorXcd GateStateEvolver::propagate(Eigen::VectorXcd amplitudes, const RmdSequence& seq,
                                             int num_periods) {
  if (num_periods > seq.num_periods())
    throw std::invalid_argument("cannot evolve past the end of the drive sequence");
  for (int k = 0; k < num_periods; ++k)
    for (const GateProgram& program : chunk_programs_[seq.polarities[k]])
      apply_gate_program(amplitudes, lattice_.num_sites(), program);
  return amplitudes;
}

EvolutionTrace GateStateEvolver::evolve(const RmdSequence& seq, int record_every,
                                        const ObserverSet& observers) {
  if (record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  std::vector<double> record_times;
  for (int k = record_every; k <= seq.num_periods(); k += record_every)
    record_times.push_back(k * params_.period_ns);
  return run(seq, record_times, observers);
}

EvolutionTrace GateStateEvolver::evolve_at_times(const RmdSequence& seq,
                                                 const std::vector<double>& record_times,
                                                 const ObserverSet& observers) {
  return run(seq, record_times, observers);
}

EvolutionTrace GateStateEvolver::run(const RmdSequence& seq,
                                     const std::vector<double>& record_times,
                                     const ObserverSet& observers) {
  const OccupationBasis basis = OccupationBasis::full(lattice_.num_sites());
  TraceRecorder recorder(lattice_, basis, observers);
  Eigen::VectorXcd psi = basis.embed(density_wave_state(lattice_));

  std::vector<double> pending = record_times;
  std::sort(pending.begin(), pending.end());
  const double horizon = seq.num_periods() * params_.period_ns;
  if (!pending.empty() && pending.back() > horizon + 1e-9)
    throw std::invalid_argument("record time beyond the end of the drive sequence");

  EvolutionTrace trace;
  trace.seed = seq.seed;
  trace.engine = split_ == SplitKind::FiveTerm ? "trotter" : "trotter-column";
  size_t next_record = 0;
  recorder.record(trace, 0.0, psi);

  for (int k = 0; k < seq.num_periods() && next_record < pending.size(); ++k) {
    const auto& programs = chunk_programs_[seq.polarities[k]];
    double t = k * params_.period_ns;
    for (size_t c = 0; c < chunks_.size(); ++c) {
      apply_gate_program(psi, lattice_.num_sites(), programs[c]);
      t += chunks_[c];
      while (next_record < pending.size() && std::abs(pending[next_record] - t) < 1e-9) {
        recorder.record(trace, t, psi);
        ++next_record;
      }
      if (next_record < pending.size() && pending[next_record] < t - 1e-9)
        throw std::invalid_argument("record time " + std::to_string(pending[next_record]) +
                                    " ns does not lie on the dt/T time grid");
    }
  }
  if (next_record < pending.size())
    throw std::invalid_argument("record time " + std::to_string(pending[next_record]) +
                                " ns does not lie on the dt/T time grid");
  return trace;
}

}  // namespace rmdsim
