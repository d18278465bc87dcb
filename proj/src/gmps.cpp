#include "rmdsim/gmps.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "rmdsim/trotter.hpp"
#include "verified_svd.hpp"

namespace rmdsim {

namespace {

using Eigen::Index;
using MatX = Eigen::MatrixXcd;
using StridedMap = Eigen::Map<const MatX, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

/// Insert bit value `bit` at position q of `rest`, shifting higher bits up.
inline int insert_bit(int rest, int q, int bit) {
  const int low = rest & ((1 << q) - 1);
  const int high = rest >> q;
  return low | (bit << q) | (high << (q + 1));
}

/// Distribute the bits of `sub` over positions `bits` (ascending) and the
/// bits of `env` over the remaining positions below `total_bits`.
inline int compose_pattern(int sub, int env, const std::vector<int>& bits, int total_bits) {
  int pattern = 0;
  size_t bi = 0;
  int ei = 0;
  for (int pos = 0; pos < total_bits; ++pos) {
    if (bi < bits.size() && bits[bi] == pos) {
      if (sub >> bi & 1) pattern |= 1 << pos;
      ++bi;
    } else {
      if (env >> ei & 1) pattern |= 1 << pos;
      ++ei;
    }
  }
  return pattern;
}

struct ThinQr {
  MatX q;
  MatX r;
};

ThinQr thin_qr(const MatX& m) {
  const Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<MatX> qr(m);
  ThinQr out;
  out.q = qr.householderQ() * MatX::Identity(m.rows(), k);
  out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return out;
}

}  // namespace

GroupedMps GroupedMps::init(const LatticeSpec& lattice, const ProductState& state, int chi_max,
                            double svd_threshold) {
  if (lattice.ly > 6)
    throw std::runtime_error("grouped MPS supports Ly <= 6 (physical dimension 64), got Ly = " +
                             std::to_string(lattice.ly));
  if (chi_max < 1) throw std::invalid_argument("chi_max must be at least 1");
  if (static_cast<int>(state.occupation.size()) != lattice.num_sites())
    throw std::invalid_argument("product state does not match lattice");

  GroupedMps mps;
  mps.lattice_ = lattice;
  mps.chi_max_ = chi_max;
  mps.svd_threshold_ = svd_threshold;
  const int phys = 1 << lattice.ly;
  mps.tensors_.resize(lattice.lx);
  for (int x = 1; x <= lattice.lx; ++x) {
    int pattern = 0;
    for (int y = 1; y <= lattice.ly; ++y)
      if (state.occupation[lattice.site_index(x, y)]) pattern |= 1 << (y - 1);
    Tensor& t = mps.tensors_[x - 1];
    t.l = t.r = 1;
    t.p = phys;
    t.a = Eigen::VectorXcd::Zero(phys);
    t.a[pattern] = 1.0;
  }
  mps.center_ = 0;
  return mps;
}

std::vector<Index> GroupedMps::bond_dims() const {
  std::vector<Index> dims;
  for (size_t i = 0; i + 1 < tensors_.size(); ++i) dims.push_back(tensors_[i].r);
  return dims;
}

void GroupedMps::move_center_right() {
  Tensor& t = tensors_[center_];
  const Eigen::Map<const MatX> m(t.a.data(), t.l * t.p, t.r);
  ThinQr qr = thin_qr(m);
  const Index k = qr.q.cols();
  t.a = Eigen::Map<Eigen::VectorXcd>(qr.q.data(), qr.q.size());
  t.r = k;

  Tensor& next = tensors_[center_ + 1];
  const Eigen::Map<const MatX> nm(next.a.data(), next.l, next.p * next.r);
  MatX merged = qr.r * nm;
  next.a = Eigen::Map<Eigen::VectorXcd>(merged.data(), merged.size());
  next.l = k;
  ++center_;
}

void GroupedMps::move_center_left() {
  Tensor& t = tensors_[center_];
  const Eigen::Map<const MatX> m(t.a.data(), t.l, t.p * t.r);
  ThinQr qr = thin_qr(m.adjoint());  // m = r^H q^H with q^H row-orthonormal
  const Index k = qr.q.cols();
  MatX qh = qr.q.adjoint();  // k x (p*r), exactly the target layout
  t.a = Eigen::Map<Eigen::VectorXcd>(qh.data(), qh.size());
  t.l = k;

  Tensor& prev = tensors_[center_ - 1];
  const Eigen::Map<const MatX> pm(prev.a.data(), prev.l * prev.p, prev.r);
  MatX merged = pm * qr.r.adjoint();
  prev.a = Eigen::Map<Eigen::VectorXcd>(merged.data(), merged.size());
  prev.r = k;
  --center_;
}

void GroupedMps::move_center(int column) {
  if (column < 0 || column >= lattice_.lx) throw std::invalid_argument("center column out of range");
  while (center_ < column) move_center_right();
  while (center_ > column) move_center_left();
}

void GroupedMps::apply_column_op(int x, const Eigen::MatrixXcd& op) {
  if (x < 1 || x > lattice_.lx) throw std::invalid_argument("column out of range");
  Tensor& t = tensors_[x - 1];
  if (op.rows() != t.p || op.cols() != t.p)
    throw std::invalid_argument("column operator dimension mismatch");
  const MatX op_t = op.transpose();
  for (Index k = 0; k < t.r; ++k) {
    Eigen::Map<MatX> slice(t.a.data() + t.l * t.p * k, t.l, t.p);
    slice = slice * op_t;
  }
}

void GroupedMps::apply_bond_gate(int x, int y, const Eigen::Matrix4cd& gate, bool absorb_right) {
  const int c = x - 1;
  if (c < 0 || c + 1 >= lattice_.lx) throw std::invalid_argument("bond column out of range");
  if (y < 1 || y > lattice_.ly) throw std::invalid_argument("bond row out of range");
  if (center_ != c && center_ != c + 1)
    throw std::logic_error("apply_bond_gate: canonical center must sit on one of the two columns");

  Tensor& ta = tensors_[c];
  Tensor& tb = tensors_[c + 1];
  const int q = y - 1;
  const Index phys = ta.p;
  const Index half = phys / 2;
  const Index l = ta.l, m = ta.r, r = tb.r;

  // Isolate the active row bit of both tensors behind QR factors.
  MatX amat(l * half, 2 * m);
  for (int abit = 0; abit < 2; ++abit)
    for (Index mm = 0; mm < m; ++mm)
      for (Index rr = 0; rr < half; ++rr) {
        const int j = insert_bit(static_cast<int>(rr), q, abit);
        amat.col(mm + m * abit).segment(l * rr, l) =
            ta.a.segment(l * (j + phys * mm), l);
      }
  ThinQr qa = thin_qr(amat);
  const Index ka = qa.q.cols();

  MatX bmat(2 * m, half * r);
  for (int bbit = 0; bbit < 2; ++bbit)
    for (Index kr = 0; kr < r; ++kr)
      for (Index rr = 0; rr < half; ++rr) {
        const int j = insert_bit(static_cast<int>(rr), q, bbit);
        bmat.col(rr + half * kr).segment(m * bbit, m) = tb.a.segment(m * (j + phys * kr), m);
      }
  ThinQr qb = thin_qr(bmat.adjoint());
  const Index kb = qb.q.cols();
  const MatX rb = qb.r.adjoint();        // (2m) x kb
  const MatX qbh = qb.q.adjoint();       // kb x (half*r)

  // Contract gate with the two R factors: theta[(ka,a'),(b',kb)].
  MatX theta = MatX::Zero(ka * 2, 2 * kb);
  for (int ap = 0; ap < 2; ++ap)
    for (int bp = 0; bp < 2; ++bp)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const auto g = gate(ap + 2 * bp, a + 2 * b);
          if (g == std::complex<double>(0.0, 0.0)) continue;
          theta.block(ka * ap, kb * bp, ka, kb).noalias() +=
              g * qa.r.middleCols(m * a, m) * rb.middleRows(m * b, m);
        }

  const detail::SvdResult svd = detail::verified_svd(theta);
  const Eigen::VectorXd& s = svd.s;
  const double total_weight = s.squaredNorm();
  Index keep = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] >= svd_threshold_ * s[0]) ++keep;
  keep = std::max<Index>(1, std::min<Index>(keep, chi_max_));
  const double kept_weight = s.head(keep).squaredNorm();
  cum_fidelity_ *= kept_weight / total_weight;

  // Renormalize so the state stays a unit vector after a discard.
  const Eigen::VectorXd s_kept = s.head(keep) / std::sqrt(kept_weight);
  MatX u = svd.u.leftCols(keep);
  MatX vh = svd.v.leftCols(keep).adjoint();
  if (absorb_right)
    vh = s_kept.asDiagonal() * vh;
  else
    u = u * s_kept.asDiagonal();

  // Reassemble both tensors around the new bond.
  ta.a = Eigen::VectorXcd(l * phys * keep);
  for (int ap = 0; ap < 2; ++ap) {
    const MatX part = qa.q * u.middleRows(ka * ap, ka);  // (l*half) x keep
    for (Index cc = 0; cc < keep; ++cc)
      for (Index rr = 0; rr < half; ++rr) {
        const int j = insert_bit(static_cast<int>(rr), q, ap);
        ta.a.segment(l * (j + phys * cc), l) = part.col(cc).segment(l * rr, l);
      }
  }
  ta.r = keep;

  tb.a = Eigen::VectorXcd(keep * phys * r);
  for (int bp = 0; bp < 2; ++bp) {
    const MatX part = vh.middleCols(kb * bp, kb) * qbh;  // keep x (half*r)
    for (Index kr = 0; kr < r; ++kr)
      for (Index rr = 0; rr < half; ++rr) {
        const int j = insert_bit(static_cast<int>(rr), q, bp);
        tb.a.segment(keep * (j + phys * kr), keep) = part.col(rr + half * kr);
      }
  }
  tb.l = keep;

  center_ = absorb_right ? c + 1 : c;
}

Eigen::VectorXd GroupedMps::z_expectations() {
  Eigen::VectorXd z(lattice_.num_sites());
  move_center(0);
  for (int x = 1; x <= lattice_.lx; ++x) {
    move_center(x - 1);
    const Tensor& t = tensors_[x - 1];
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(t.p);
    for (Index k = 0; k < t.r; ++k)
      for (Index j = 0; j < t.p; ++j)
        probs[j] += t.a.segment(t.l * (j + t.p * k), t.l).squaredNorm();
    const double norm = probs.sum();
    for (int y = 1; y <= lattice_.ly; ++y) {
      double occ = 0.0;
      for (Index j = 0; j < t.p; ++j)
        if (j >> (y - 1) & 1) occ += probs[j];
      z[lattice_.site_index(x, y)] = 2.0 * occ / norm - 1.0;
    }
  }
  return z;
}

double GroupedMps::entropy(const Subsystem& subsystem, int span_cap) {
  (void)subsystem.site_indices(lattice_);  // validates sites and duplicates
  if (subsystem.sites.size() > 6)
    throw std::invalid_argument("grouped MPS entropy supports at most 6 subsystem sites");
  int c_min = lattice_.lx, c_max = -1;
  std::vector<std::vector<int>> bits(lattice_.lx);
  for (const Site& s : subsystem.sites) {
    const int c = s.x - 1;
    c_min = std::min(c_min, c);
    c_max = std::max(c_max, c);
    bits[c].push_back(s.y - 1);
  }
  if (c_max - c_min + 1 > span_cap)
    throw std::invalid_argument(
        "subsystem '" + subsystem.label + "' spans " + std::to_string(c_max - c_min + 1) +
        " columns, above the configured cap of " + std::to_string(span_cap) +
        "; raise the span cap or choose a subsystem on fewer adjacent columns");
  for (int c = c_min; c <= c_max; ++c) std::sort(bits[c].begin(), bits[c].end());

  move_center(c_min);

  // Progressive environment over (bond, subsystem-bits) pairs; complement
  // rows are traced out column by column.
  MatX env = MatX::Identity(tensors_[c_min].l, tensors_[c_min].l);
  Index s_dim = 1;
  for (int c = c_min; c <= c_max; ++c) {
    const Tensor& t = tensors_[c];
    const int k = static_cast<int>(bits[c].size());
    const Index sub_dim = Index(1) << k;
    const Index env_dim = t.p >> k;
    const Index l = t.l, r = t.r;

    // Step 1: g[(i', s'), (j + p*(kr + r*s))] = sum_i env[(i,s),(i',s')] t[i,j,kr]
    const Eigen::Map<const MatX> tm(t.a.data(), l, t.p * r);
    MatX g(l * s_dim, t.p * r * s_dim);
    for (Index s = 0; s < s_dim; ++s)
      g.middleCols(t.p * r * s, t.p * r).noalias() =
          env.middleRows(s * l, l).transpose() * tm;

    // Step 2: contract with the conjugate tensor over (i', complement rows).
    const Index s_new = s_dim * sub_dim;
    MatX next = MatX::Zero(r * s_new, r * s_new);
    for (Index sp = 0; sp < s_dim; ++sp)
      for (Index scp = 0; scp < sub_dim; ++scp)
        for (Index sc = 0; sc < sub_dim; ++sc)
          for (Index s = 0; s < s_dim; ++s)
            for (Index e = 0; e < env_dim; ++e) {
              const int j1 = compose_pattern(static_cast<int>(sc), static_cast<int>(e), bits[c],
                                             lattice_.ly);
              const int j2 = compose_pattern(static_cast<int>(scp), static_cast<int>(e), bits[c],
                                             lattice_.ly);
              StridedMap g_slice(g.data() + l * sp + Index(l) * s_dim * (j1 + t.p * r * s), l, r,
                                 Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(
                                     Index(l) * s_dim * t.p, 1));
              StridedMap t_slice(t.a.data() + l * j2, l, r,
                                 Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(l * t.p, 1));
              next.block(r * (s + s_dim * sc), r * (sp + s_dim * scp), r, r).noalias() +=
                  g_slice.transpose() * t_slice.conjugate();
            }
    env = std::move(next);
    s_dim = s_new;
  }

  // Trace the right bond; right isometries collapse the rest to identity.
  const Index r_last = tensors_[c_max].r;
  MatX rho = MatX::Zero(s_dim, s_dim);
  for (Index s = 0; s < s_dim; ++s)
    for (Index sp = 0; sp < s_dim; ++sp)
      for (Index kr = 0; kr < r_last; ++kr) rho(s, sp) += env(kr + r_last * s, kr + r_last * sp);
  return von_neumann_entropy(rho);
}

double GroupedMps::norm_squared() const {
  const Tensor& t = tensors_[center_];
  return t.a.squaredNorm();
}

double GroupedMps::max_isometry_defect() const {
  double defect = 0.0;
  for (int i = 0; i < static_cast<int>(tensors_.size()); ++i) {
    const Tensor& t = tensors_[i];
    if (i < center_) {
      const Eigen::Map<const MatX> m(t.a.data(), t.l * t.p, t.r);
      defect = std::max(defect,
                        (m.adjoint() * m - MatX::Identity(t.r, t.r)).cwiseAbs().maxCoeff());
    } else if (i > center_) {
      const Eigen::Map<const MatX> m(t.a.data(), t.l, t.p * t.r);
      defect = std::max(defect,
                        (m * m.adjoint() - MatX::Identity(t.l, t.l)).cwiseAbs().maxCoeff());
    }
  }
  return defect;
}

EvolutionTrace evolve_gmps(GroupedMps& mps, const RmdSequence& seq, const DriveParams& params,
                           double dt, int record_every, const ObserverSet& observers,
                           int entropy_span_cap) {
  if (record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  const LatticeSpec& lattice = mps.lattice();
  const Eigen::VectorXi pattern = density_wave_pattern(lattice);
  const int n0 = density_wave_state(lattice).total_particles();

  const std::vector<double> chunks = period_sub_steps(params.period_ns, dt);
  struct StepOps {
    Eigen::MatrixXcd column_half;
    Eigen::Matrix4cd bond_half;
  };
  std::map<int, std::vector<StepOps>> ops;
  for (int polarity : {+1, -1}) {
    const HamiltonianTerms terms = build_hamiltonian(lattice, params, polarity);
    const Eigen::MatrixXcd h_col = intra_column_hamiltonian(lattice, terms);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h_col);
    std::vector<StepOps> per_chunk;
    for (double chunk : chunks) {
      Eigen::VectorXcd phases(h_col.rows());
      for (Eigen::Index i = 0; i < h_col.rows(); ++i)
        phases[i] = std::polar(1.0, -solver.eigenvalues()[i] * chunk / 2.0);
      per_chunk.push_back(
          {solver.eigenvectors() * phases.asDiagonal() * solver.eigenvectors().adjoint(),
           hop_gate(terms.hops.size() > 0 ? terms.hops[0] : 0.0, chunk / 2.0)});
    }
    ops[polarity] = std::move(per_chunk);
  }

  EvolutionTrace trace;
  trace.seed = seq.seed;
  trace.engine = "gmps";

  auto record = [&](double t_ns) {
    const Eigen::VectorXd z = mps.z_expectations();
    trace.times_ns.push_back(t_ns);
    trace.imbalance.push_back(imbalance(z, pattern, n0));
    trace.n_total.push_back((z.sum() + lattice.num_sites()) / 2.0);
    for (const Subsystem& sub : observers.entropy_subsystems)
      trace.entropies[sub.label].push_back(mps.entropy(sub, entropy_span_cap));
    trace.fidelity.push_back(mps.cumulative_fidelity());
    mps.move_center(0);
  };

  mps.move_center(0);
  record(0.0);
  for (int k = 0; k < seq.num_periods(); ++k) {
    const auto& per_chunk = ops[seq.polarities[k]];
    for (const StepOps& step : per_chunk) {
      for (int x = 1; x <= lattice.lx; ++x) mps.apply_column_op(x, step.column_half);
      for (int x = 1; x < lattice.lx; ++x)
        for (int y = 1; y <= lattice.ly; ++y) mps.apply_bond_gate(x, y, step.bond_half, true);
      for (int x = lattice.lx - 1; x >= 1; --x)
        for (int y = lattice.ly; y >= 1; --y) mps.apply_bond_gate(x, y, step.bond_half, false);
      for (int x = lattice.lx; x >= 1; --x) mps.apply_column_op(x, step.column_half);
    }
    if ((k + 1) % record_every == 0) record((k + 1) * params.period_ns);
  }
  return trace;
}

}  // namespace rmdsim
