#include "rmdsim/peps.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "verified_svd.hpp"

namespace rmdsim {

namespace {

using Eigen::Index;
using MatX = Eigen::MatrixXcd;
using VecX = Eigen::VectorXcd;
using std::complex;

constexpr double kWeightFloor = 1e-12;

}  // namespace

PepsState PepsState::init(const LatticeSpec& lattice, const ProductState& state, int chi_peps,
                          double svd_threshold) {
  if (chi_peps < 1) throw std::invalid_argument("chi_peps must be at least 1");
  if (static_cast<int>(state.occupation.size()) != lattice.num_sites())
    throw std::invalid_argument("product state does not match lattice");
  PepsState peps;
  peps.lattice_ = lattice;
  peps.chi_peps_ = chi_peps;
  peps.svd_threshold_ = svd_threshold;
  peps.tensors_.resize(lattice.num_sites());
  for (int x = 1; x <= lattice.lx; ++x)
    for (int y = 1; y <= lattice.ly; ++y) {
      SiteTensor& t = peps.at(x, y);
      t.a = VecX::Zero(2);
      t.a[state.occupation[lattice.site_index(x, y)]] = 1.0;
    }
  peps.weight_h_.assign(static_cast<size_t>(std::max(0, lattice.lx - 1)) * lattice.ly,
                        Eigen::VectorXd::Ones(1));
  peps.weight_v_.assign(static_cast<size_t>(lattice.lx) * std::max(0, lattice.ly - 1),
                        Eigen::VectorXd::Ones(1));
  return peps;
}

Eigen::Index PepsState::max_bond_dim() const {
  Index dim = 1;
  for (const auto& t : tensors_) dim = std::max({dim, t.l, t.r, t.u, t.d});
  return dim;
}

void PepsState::apply_onsite(int x, int y, const Eigen::Matrix2cd& op) {
  SiteTensor& t = at(x, y);
  const Index block = t.l * t.r * t.u * t.d;
  for (Index v = 0; v < block; ++v) {
    const complex<double> a0 = t.a[v];
    const complex<double> a1 = t.a[v + block];
    t.a[v] = op(0, 0) * a0 + op(0, 1) * a1;
    t.a[v + block] = op(1, 0) * a0 + op(1, 1) * a1;
  }
}

namespace {

Index leg_dim(const Index dims[4], int leg) { return dims[leg]; }

/// Multiply (invert=false) or divide (invert=true) one virtual leg by a
/// positive weight vector. Legs: 0=l, 1=r, 2=u, 3=d.
void scale_leg(VecX& a, const Index dims[4], int leg, const Eigen::VectorXd& w, bool invert) {
  const Index strides[4] = {1, dims[0], dims[0] * dims[1], dims[0] * dims[1] * dims[2]};
  for (Index i = 0; i < a.size(); ++i) {
    const Index leg_index = (i / strides[leg]) % dims[leg];
    a[i] *= invert ? 1.0 / std::max(w[leg_index], kWeightFloor) : w[leg_index];
  }
}

/// Matrix view (rest*2) x dim_leg of a site tensor, where `rest` linearizes
/// the three untouched virtual legs in l,r,u,d order.
MatX gather_leg_last(const VecX& a, const Index dims[4], int leg) {
  const Index block = dims[0] * dims[1] * dims[2] * dims[3];
  const Index rest = block / dims[leg];
  MatX out(rest * 2, dims[leg]);
  for (Index p = 0; p < 2; ++p)
    for (Index i = 0; i < block; ++i) {
      Index coords[4], remaining = i;
      for (int lg = 0; lg < 4; ++lg) {
        coords[lg] = remaining % dims[lg];
        remaining /= dims[lg];
      }
      Index rest_idx = 0, stride = 1;
      for (int lg = 0; lg < 4; ++lg) {
        if (lg == leg) continue;
        rest_idx += coords[lg] * stride;
        stride *= dims[lg];
      }
      out(rest_idx + rest * p, coords[leg]) = a[i + block * p];
    }
  return out;
}

/// Inverse of gather_leg_last with a new dimension for the isolated leg.
VecX scatter_leg_last(const MatX& m, Index dims[4], int leg, Index new_dim) {
  dims[leg] = new_dim;
  const Index block = dims[0] * dims[1] * dims[2] * dims[3];
  const Index rest = block / dims[leg];
  VecX a(block * 2);
  for (Index p = 0; p < 2; ++p)
    for (Index i = 0; i < block; ++i) {
      Index coords[4], remaining = i;
      for (int lg = 0; lg < 4; ++lg) {
        coords[lg] = remaining % dims[lg];
        remaining /= dims[lg];
      }
      Index rest_idx = 0, stride = 1;
      for (int lg = 0; lg < 4; ++lg) {
        if (lg == leg) continue;
        rest_idx += coords[lg] * stride;
        stride *= dims[lg];
      }
      a[i + block * p] = m(rest_idx + rest * p, coords[leg]);
    }
  return a;
}

}  // namespace

void PepsState::apply_bond(int site_a, int site_b, const Eigen::Matrix4cd& gate) {
  const Site sa = lattice_.sites[site_a];
  const Site sb = lattice_.sites[site_b];
  const bool horizontal = (sa.y == sb.y);
  const int ly = lattice_.ly;

  SiteTensor& ta = at(sa.x, sa.y);
  SiteTensor& tb = at(sb.x, sb.y);
  Index dims_a[4] = {ta.l, ta.r, ta.u, ta.d};
  Index dims_b[4] = {tb.l, tb.r, tb.u, tb.d};

  auto wh = [&](int x, int y) -> Eigen::VectorXd& { return weight_h_[(x - 1) * ly + (y - 1)]; };
  auto wv = [&](int x, int y) -> Eigen::VectorXd& {
    return weight_v_[(x - 1) * (ly - 1) + (y - 1)];
  };

  // Environment legs (leg id, weight) of each tensor; the shared bond weight
  // is absorbed into tensor a only.
  std::vector<std::pair<int, Eigen::VectorXd*>> env_a, env_b;
  Eigen::VectorXd* shared = nullptr;
  const int leg_a = horizontal ? 1 : 3;  // r or d
  const int leg_b = horizontal ? 0 : 2;  // l or u
  if (horizontal) {
    shared = &wh(sa.x, sa.y);
    if (sa.x > 1) env_a.push_back({0, &wh(sa.x - 1, sa.y)});
    if (sa.y > 1) env_a.push_back({2, &wv(sa.x, sa.y - 1)});
    if (sa.y < ly) env_a.push_back({3, &wv(sa.x, sa.y)});
    if (sb.x < lattice_.lx) env_b.push_back({1, &wh(sb.x, sb.y)});
    if (sb.y > 1) env_b.push_back({2, &wv(sb.x, sb.y - 1)});
    if (sb.y < ly) env_b.push_back({3, &wv(sb.x, sb.y)});
  } else {
    shared = &wv(sa.x, sa.y);
    if (sa.x > 1) env_a.push_back({0, &wh(sa.x - 1, sa.y)});
    if (sa.x < lattice_.lx) env_a.push_back({1, &wh(sa.x, sa.y)});
    if (sa.y > 1) env_a.push_back({2, &wv(sa.x, sa.y - 1)});
    if (sb.x > 1) env_b.push_back({0, &wh(sb.x - 1, sb.y)});
    if (sb.x < lattice_.lx) env_b.push_back({1, &wh(sb.x, sb.y)});
    if (sb.y < ly) env_b.push_back({3, &wv(sb.x, sb.y)});
  }

  for (auto [leg, w] : env_a) scale_leg(ta.a, dims_a, leg, *w, false);
  for (auto [leg, w] : env_b) scale_leg(tb.a, dims_b, leg, *w, false);
  scale_leg(ta.a, dims_a, leg_a, *shared, false);

  const Index rest_a = dims_a[0] * dims_a[1] * dims_a[2] * dims_a[3] / dims_a[leg_a];
  const Index rest_b = dims_b[0] * dims_b[1] * dims_b[2] * dims_b[3] / dims_b[leg_b];
  const MatX a_mat = gather_leg_last(ta.a, dims_a, leg_a);  // (rest_a*2) x shared
  const MatX b_mat = gather_leg_last(tb.a, dims_b, leg_b);  // (rest_b*2) x shared
  MatX theta = a_mat * b_mat.transpose();                   // (rest_a*2) x (rest_b*2)

  MatX rotated = MatX::Zero(theta.rows(), theta.cols());
  for (int pa = 0; pa < 2; ++pa)
    for (int pb = 0; pb < 2; ++pb)
      for (int qa = 0; qa < 2; ++qa)
        for (int qb = 0; qb < 2; ++qb) {
          const complex<double> g = gate(pa + 2 * pb, qa + 2 * qb);
          if (g == complex<double>(0.0, 0.0)) continue;
          rotated.block(rest_a * pa, rest_b * pb, rest_a, rest_b) +=
              g * theta.block(rest_a * qa, rest_b * qb, rest_a, rest_b);
        }

  const detail::SvdResult svd = detail::verified_svd(rotated);
  const double s0 = svd.s.size() > 0 ? svd.s[0] : 0.0;
  Index keep = 0;
  for (Index j = 0; j < svd.s.size(); ++j)
    if (svd.s[j] >= svd_threshold_ * s0) ++keep;
  keep = std::max<Index>(1, std::min<Index>(keep, chi_peps_));
  const double total = svd.s.squaredNorm();
  const double kept = svd.s.head(keep).squaredNorm();
  truncation_weight_ *= kept / total;
  *shared = svd.s.head(keep) / std::sqrt(kept);

  ta.a = scatter_leg_last(svd.u.leftCols(keep), dims_a, leg_a, keep);
  ta.l = dims_a[0], ta.r = dims_a[1], ta.u = dims_a[2], ta.d = dims_a[3];
  tb.a = scatter_leg_last(svd.v.leftCols(keep).conjugate(), dims_b, leg_b, keep);
  tb.l = dims_b[0], tb.r = dims_b[1], tb.u = dims_b[2], tb.d = dims_b[3];

  Index new_dims_a[4] = {ta.l, ta.r, ta.u, ta.d};
  Index new_dims_b[4] = {tb.l, tb.r, tb.u, tb.d};
  for (auto [leg, w] : env_a) scale_leg(ta.a, new_dims_a, leg, *w, true);
  for (auto [leg, w] : env_b) scale_leg(tb.a, new_dims_b, leg, *w, true);
}

void PepsState::apply_program(const GateProgram& program) {
  for (const Gate& gate : program) {
    if (gate.sites.size() == 1) {
      const Site s = lattice_.sites[gate.sites[0]];
      apply_onsite(s.x, s.y, gate.u);
    } else if (gate.sites.size() == 2) {
      apply_bond(gate.sites[0], gate.sites[1], gate.u);
    } else {
      throw std::invalid_argument("PEPS simple update supports 1- and 2-site gates only");
    }
  }
}

// ---------------------------------------------------------------------------
// Boundary-MPS contraction.

namespace {

/// Minimal MPS for boundary contraction: tensors (l, d, r), element (i, j, k)
/// at i + l*(j + d*k), with a running log-scale guard.
struct BoundaryMps {
  struct T3 {
    Index l = 1, d = 1, r = 1;
    VecX a;
  };
  std::vector<T3> t;
  double log_scale = 0.0;
};

BoundaryMps vacuum_boundary(int n) {
  BoundaryMps b;
  b.t.resize(n);
  for (auto& tensor : b.t) tensor.a = VecX::Ones(1);
  return b;
}

void compress_boundary(BoundaryMps& b, int chi, double threshold = 1e-14) {
  const int n = static_cast<int>(b.t.size());
  if (n == 1) return;
  for (int i = 0; i + 1 < n; ++i) {
    auto& t = b.t[i];
    const Eigen::Map<const MatX> m(t.a.data(), t.l * t.d, t.r);
    Eigen::HouseholderQR<MatX> qr(m);
    const Index k = std::min<Index>(t.l * t.d, t.r);
    MatX q = qr.householderQ() * MatX::Identity(t.l * t.d, k);
    MatX r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    t.a = Eigen::Map<VecX>(q.data(), q.size());
    t.r = k;
    auto& next = b.t[i + 1];
    const Eigen::Map<const MatX> nm(next.a.data(), next.l, next.d * next.r);
    MatX merged = r * nm;
    next.a = Eigen::Map<VecX>(merged.data(), merged.size());
    next.l = k;
  }
  const double norm = b.t.back().a.norm();
  if (norm > 0.0 && (norm < 1e-8 || norm > 1e8)) {
    b.t.back().a /= norm;
    b.log_scale += std::log(norm);
  }
  for (int i = n - 1; i > 0; --i) {
    auto& t = b.t[i];
    const Eigen::Map<const MatX> m(t.a.data(), t.l, t.d * t.r);
    const detail::SvdResult svd = detail::verified_svd(m);
    const double s0 = svd.s.size() > 0 ? svd.s[0] : 0.0;
    Index keep = 0;
    for (Index j = 0; j < svd.s.size(); ++j)
      if (svd.s[j] > threshold * s0) ++keep;
    keep = std::max<Index>(1, std::min<Index>(keep, chi));
    MatX vh = svd.v.leftCols(keep).adjoint();
    t.a = Eigen::Map<VecX>(vh.data(), vh.size());
    t.l = keep;
    const MatX carry = svd.u.leftCols(keep) * svd.s.head(keep).asDiagonal();
    auto& prev = b.t[i - 1];
    const Eigen::Map<const MatX> pm(prev.a.data(), prev.l * prev.d, prev.r);
    MatX merged = pm * carry;
    prev.a = Eigen::Map<VecX>(merged.data(), merged.size());
    prev.r = keep;
  }
}

complex<double> boundary_scalar(const BoundaryMps& b) {
  Eigen::RowVectorXcd v = Eigen::RowVectorXcd::Ones(1);
  for (const auto& t : b.t) {
    const Eigen::Map<const MatX> m(t.a.data(), t.l, t.r);  // d == 1 here
    v = v * m;
  }
  return v[0] * std::exp(b.log_scale);
}

/// Double-layer row tensor with bra/ket virtual legs fused:
/// element (ml, mr, mu, md) at ml + ML*(mr + MR*(mu + MU*md)).
struct RowTensor {
  Index ml = 1, mr = 1, mu = 1, md = 1;
  VecX a;
};

}  // namespace

namespace {

RowTensor double_layer(const VecX& ket, const Index dims[4], const Eigen::Matrix2cd& op) {
  RowTensor row;
  row.ml = dims[0] * dims[0];
  row.mr = dims[1] * dims[1];
  row.mu = dims[2] * dims[2];
  row.md = dims[3] * dims[3];
  row.a = VecX::Zero(row.ml * row.mr * row.mu * row.md);
  const Index block = dims[0] * dims[1] * dims[2] * dims[3];
  for (Index p = 0; p < 2; ++p)
    for (Index q = 0; q < 2; ++q) {
      const complex<double> o = op(q, p);  // bra index q, ket index p
      if (o == complex<double>(0.0, 0.0)) continue;
      for (Index i = 0; i < block; ++i) {
        const complex<double> ket_val = ket[i + block * p];
        if (ket_val == complex<double>(0.0, 0.0)) continue;
        Index ci[4], rem = i;
        for (int lg = 0; lg < 4; ++lg) {
          ci[lg] = rem % dims[lg];
          rem /= dims[lg];
        }
        for (Index j = 0; j < block; ++j) {
          const complex<double> bra_val = std::conj(ket[j + block * q]);
          if (bra_val == complex<double>(0.0, 0.0)) continue;
          Index cj[4], rem2 = j;
          for (int lg = 0; lg < 4; ++lg) {
            cj[lg] = rem2 % dims[lg];
            rem2 /= dims[lg];
          }
          const Index ml = ci[0] + dims[0] * cj[0];
          const Index mr = ci[1] + dims[1] * cj[1];
          const Index mu = ci[2] + dims[2] * cj[2];
          const Index md = ci[3] + dims[3] * cj[3];
          row.a[ml + row.ml * (mr + row.mr * (mu + row.mu * md))] += o * ket_val * bra_val;
        }
      }
    }
  return row;
}

/// Absorb one double-layer row from above into the boundary MPS.
void absorb_row(BoundaryMps& b, const std::vector<RowTensor>& row, int chi, bool from_above) {
  for (size_t x = 0; x < b.t.size(); ++x) {
    const auto& t = b.t[x];
    const RowTensor& m = row[x];
    const Index contracted = from_above ? m.mu : m.md;
    const Index open = from_above ? m.md : m.mu;
    if (t.d != contracted)
      throw std::logic_error("boundary contraction dimension mismatch");
    BoundaryMps::T3 fresh;
    fresh.l = t.l * m.ml;
    fresh.d = open;
    fresh.r = t.r * m.mr;
    fresh.a = VecX::Zero(fresh.l * fresh.d * fresh.r);
    for (Index bl = 0; bl < t.l; ++bl)
      for (Index br = 0; br < t.r; ++br)
        for (Index ml = 0; ml < m.ml; ++ml)
          for (Index mr = 0; mr < m.mr; ++mr)
            for (Index o = 0; o < open; ++o) {
              complex<double> acc = 0.0;
              for (Index c = 0; c < contracted; ++c) {
                const Index mu = from_above ? c : o;
                const Index md = from_above ? o : c;
                acc += t.a[bl + t.l * (c + t.d * br)] *
                       m.a[ml + m.ml * (mr + m.mr * (mu + m.mu * md))];
              }
              fresh.a[(bl + t.l * ml) + fresh.l * (o + open * (br + t.r * mr))] = acc;
            }
    b.t[x] = std::move(fresh);
  }
  compress_boundary(b, chi);
}

/// One column transfer of the three-layer sandwich <top| row |bottom>.
VecX sandwich_step(const VecX& left, const BoundaryMps::T3& top, const RowTensor& m,
                   const BoundaryMps::T3& bot) {
  // left[(tl, ml, bl)] with tl fastest.
  VecX out = VecX::Zero(top.r * m.mr * bot.r);
  for (Index tl = 0; tl < top.l; ++tl)
    for (Index ml = 0; ml < m.ml; ++ml)
      for (Index bl = 0; bl < bot.l; ++bl) {
        const complex<double> lv = left[tl + top.l * (ml + m.ml * bl)];
        if (lv == complex<double>(0.0, 0.0)) continue;
        for (Index mu = 0; mu < m.mu; ++mu)
          for (Index tr = 0; tr < top.r; ++tr) {
            const complex<double> tv = top.a[tl + top.l * (mu + top.d * tr)];
            if (tv == complex<double>(0.0, 0.0)) continue;
            for (Index md = 0; md < m.md; ++md)
              for (Index mr = 0; mr < m.mr; ++mr) {
                const complex<double> mv = m.a[ml + m.ml * (mr + m.mr * (mu + m.mu * md))];
                if (mv == complex<double>(0.0, 0.0)) continue;
                for (Index br = 0; br < bot.r; ++br)
                  out[tr + top.r * (mr + m.mr * br)] +=
                      lv * tv * mv * bot.a[bl + bot.l * (md + bot.d * br)];
              }
          }
      }
  return out;
}

}  // namespace

void PepsState::absorbed_tensor(int x, int y, Eigen::VectorXcd& a, Eigen::Index dims[4]) const {
  const SiteTensor& t = at(x, y);
  a = t.a;
  dims[0] = t.l;
  dims[1] = t.r;
  dims[2] = t.u;
  dims[3] = t.d;
  auto sqrt_w = [](const Eigen::VectorXd& w) {
    return Eigen::VectorXd(w.array().sqrt().matrix());
  };
  const int ly = lattice_.ly;
  if (x > 1) scale_leg(a, dims, 0, sqrt_w(weight_h_[(x - 2) * ly + (y - 1)]), false);
  if (x < lattice_.lx) scale_leg(a, dims, 1, sqrt_w(weight_h_[(x - 1) * ly + (y - 1)]), false);
  if (y > 1) scale_leg(a, dims, 2, sqrt_w(weight_v_[(x - 1) * (ly - 1) + (y - 2)]), false);
  if (y < ly) scale_leg(a, dims, 3, sqrt_w(weight_v_[(x - 1) * (ly - 1) + (y - 1)]), false);
}

Eigen::VectorXd PepsState::z_expectations(int boundary_chi) const {
  const int lx = lattice_.lx, ly = lattice_.ly;
  Eigen::Matrix2cd identity = Eigen::Matrix2cd::Identity();
  Eigen::Matrix2cd pauli_z;
  pauli_z << -1.0, 0.0, 0.0, 1.0;  // Z = 2n - 1 in the |0>,|1> basis

  std::vector<VecX> absorbed(lattice_.num_sites());
  std::vector<std::array<Index, 4>> adims(lattice_.num_sites());
  for (int x = 1; x <= lx; ++x)
    for (int y = 1; y <= ly; ++y) {
      const int i = lattice_.site_index(x, y);
      Index dims[4];
      absorbed_tensor(x, y, absorbed[i], dims);
      adims[i] = {dims[0], dims[1], dims[2], dims[3]};
    }

  auto identity_row = [&](int y) {
    std::vector<RowTensor> row;
    for (int x = 1; x <= lx; ++x) {
      const int i = lattice_.site_index(x, y);
      row.push_back(double_layer(absorbed[i], adims[i].data(), identity));
    }
    return row;
  };

  // Top environments above each row and bottom environments below.
  std::vector<BoundaryMps> tops(ly + 1), bottoms(ly + 2);
  tops[0] = vacuum_boundary(lx);
  for (int y = 1; y < ly; ++y) {
    tops[y] = tops[y - 1];
    absorb_row(tops[y], identity_row(y), boundary_chi, true);
  }
  bottoms[ly + 1] = vacuum_boundary(lx);
  for (int y = ly; y >= 2; --y) {
    bottoms[y] = bottoms[y + 1];
    absorb_row(bottoms[y], identity_row(y), boundary_chi, false);
  }

  Eigen::VectorXd z(lattice_.num_sites());
  for (int y = 1; y <= ly; ++y) {
    const BoundaryMps& top = tops[y - 1];
    const BoundaryMps& bot = bottoms[y + 1];
    const std::vector<RowTensor> row = identity_row(y);

    // Left and right partial contractions of the identity sandwich.
    std::vector<VecX> lefts(lx + 1), rights(lx + 1);
    lefts[0] = VecX::Ones(1);
    for (int x = 1; x <= lx; ++x)
      lefts[x] = sandwich_step(lefts[x - 1], top.t[x - 1], row[x - 1], bot.t[x - 1]);
    // Right partials via the mirrored contraction.
    rights[lx] = VecX::Ones(1);
    for (int x = lx; x >= 1; --x) {
      const auto& tt = top.t[x - 1];
      const RowTensor& mm = row[x - 1];
      const auto& bb = bot.t[x - 1];
      VecX out = VecX::Zero(tt.l * mm.ml * bb.l);
      for (Index tr = 0; tr < tt.r; ++tr)
        for (Index mr = 0; mr < mm.mr; ++mr)
          for (Index br = 0; br < bb.r; ++br) {
            const complex<double> rv = rights[x][tr + tt.r * (mr + mm.mr * br)];
            if (rv == complex<double>(0.0, 0.0)) continue;
            for (Index mu = 0; mu < mm.mu; ++mu)
              for (Index tl = 0; tl < tt.l; ++tl) {
                const complex<double> tv = tt.a[tl + tt.l * (mu + tt.d * tr)];
                if (tv == complex<double>(0.0, 0.0)) continue;
                for (Index md = 0; md < mm.md; ++md)
                  for (Index ml = 0; ml < mm.ml; ++ml) {
                    const complex<double> mv =
                        mm.a[ml + mm.ml * (mr + mm.mr * (mu + mm.mu * md))];
                    if (mv == complex<double>(0.0, 0.0)) continue;
                    for (Index bl = 0; bl < bb.l; ++bl)
                      out[tl + tt.l * (ml + mm.ml * bl)] +=
                          rv * tv * mv * bb.a[bl + bb.l * (md + bb.d * br)];
                  }
              }
          }
      rights[x - 1] = std::move(out);
    }
    const complex<double> norm = lefts[lx][0];

    for (int x = 1; x <= lx; ++x) {
      const int i = lattice_.site_index(x, y);
      const RowTensor op_tensor = double_layer(absorbed[i], adims[i].data(), pauli_z);
      const VecX bridged =
          sandwich_step(lefts[x - 1], top.t[x - 1], op_tensor, bot.t[x - 1]);
      complex<double> val = 0.0;
      for (Index k = 0; k < bridged.size(); ++k) val += bridged[k] * rights[x][k];
      z[i] = (val / norm).real();
    }
  }
  return z;
}

std::complex<double> PepsState::contract_with_insertion(int x, int y,
                                                        const Eigen::Matrix2cd& op,
                                                        int boundary_chi) const {
  BoundaryMps b = vacuum_boundary(lattice_.lx);
  for (int yy = 1; yy <= lattice_.ly; ++yy) {
    std::vector<RowTensor> row;
    for (int xx = 1; xx <= lattice_.lx; ++xx) {
      VecX a;
      Index dims[4];
      absorbed_tensor(xx, yy, a, dims);
      row.push_back(double_layer(
          a, dims, (xx == x && yy == y) ? op : Eigen::Matrix2cd::Identity()));
    }
    absorb_row(b, row, boundary_chi, true);
  }
  return boundary_scalar(b);
}

double PepsState::expectation(int x, int y, const Eigen::Matrix2cd& op, int boundary_chi) const {
  if (!lattice_.contains(x, y)) throw std::invalid_argument("site outside lattice");
  if (boundary_chi < 1) throw std::invalid_argument("boundary_chi must be at least 1");
  const complex<double> numerator = contract_with_insertion(x, y, op, boundary_chi);
  const complex<double> denominator =
      contract_with_insertion(0, 0, Eigen::Matrix2cd::Identity(), boundary_chi);
  return (numerator / denominator).real();
}

double PepsState::contracted_norm(int boundary_chi) const {
  return contract_with_insertion(0, 0, Eigen::Matrix2cd::Identity(), boundary_chi).real();
}

Eigen::VectorXcd PepsState::dense_amplitudes() const {
  if (lattice_.num_sites() > 12)
    throw std::runtime_error("dense PEPS contraction supports at most 12 sites");
  const int lx = lattice_.lx, ly = lattice_.ly;

  // Contract column by column, keeping (right-leg tuple, physical bits) open.
  // State S[(r_1..r_ly), phys] with the r-tuple fastest.
  Eigen::VectorXcd state = Eigen::VectorXcd::Ones(1);
  Index r_combo = 1;
  for (int x = 1; x <= lx; ++x) {
    // Column tensor K[(l tuple), (r tuple), (column phys)] built by walking
    // down the column and contracting vertical bonds.
    Eigen::VectorXcd column = Eigen::VectorXcd::Ones(1);
    Index kl = 1, kr = 1, kp = 1, down_dim = 1;
    for (int y = 1; y <= ly; ++y) {
      VecX a;
      Index dims[4];
      absorbed_tensor(x, y, a, dims);
      const Index l = dims[0], r = dims[1], u = dims[2], d = dims[3];
      if (u != down_dim) throw std::logic_error("vertical bond mismatch in dense contraction");
      Eigen::VectorXcd grown =
          Eigen::VectorXcd::Zero(kl * l * kr * r * kp * 2 * d);
      for (Index cl = 0; cl < kl; ++cl)
        for (Index cr = 0; cr < kr; ++cr)
          for (Index cp = 0; cp < kp; ++cp)
            for (Index il = 0; il < l; ++il)
              for (Index ir = 0; ir < r; ++ir)
                for (Index p = 0; p < 2; ++p)
                  for (Index id = 0; id < d; ++id) {
                    complex<double> acc = 0.0;
                    for (Index iu = 0; iu < u; ++iu)
                      acc += column[cl + kl * (cr + kr * (cp + kp * iu))] *
                             a[il + l * (ir + r * (iu + u * (id + d * p)))];
                    grown[(cl + kl * il) +
                          kl * l * ((cr + kr * ir) +
                                    kr * r * ((cp + kp * p) + kp * 2 * id))] = acc;
                  }
      column = std::move(grown);
      kl *= l;
      kr *= r;
      kp *= 2;
      down_dim = d;
    }
    if (down_dim != 1) throw std::logic_error("open boundary at the bottom row");

    // Contract the accumulated state's r-tuple with this column's l-tuple.
    if (kl != r_combo) throw std::logic_error("horizontal bond mismatch in dense contraction");
    const Index phys_prev = state.size() / r_combo;
    Eigen::VectorXcd grown = Eigen::VectorXcd::Zero(kr * phys_prev * kp);
    for (Index rc = 0; rc < kr; ++rc)
      for (Index pp = 0; pp < phys_prev; ++pp)
        for (Index cp = 0; cp < kp; ++cp) {
          complex<double> acc = 0.0;
          for (Index lc = 0; lc < r_combo; ++lc)
            acc += state[lc + r_combo * pp] * column[lc + kl * (rc + kr * (cp + kp * 0))];
          grown[rc + kr * (pp + phys_prev * cp)] = acc;
        }
    state = std::move(grown);
    r_combo = kr;
  }
  if (r_combo != 1) throw std::logic_error("open boundary at the rightmost column");
  return state;  // phys bits ordered site-index fashion: bit (x-1)*ly + (y-1)
}

EvolutionTrace evolve_peps(PepsState& peps, const RmdSequence& seq, const DriveParams& params,
                           double dt, int record_every, const ObserverSet& observers,
                           int boundary_chi) {
  if (record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  if (!observers.entropy_subsystems.empty())
    throw std::invalid_argument(
        "subsystem entropies are not extracted from PEPS; use the gmps or exact engine");
  const LatticeSpec& lattice = peps.lattice();
  const Eigen::VectorXi pattern = density_wave_pattern(lattice);
  const int n0 = density_wave_state(lattice).total_particles();

  const std::vector<double> chunks = period_sub_steps(params.period_ns, dt);
  std::map<int, std::vector<GateProgram>> programs;
  for (int polarity : {+1, -1}) {
    const HamiltonianTerms terms = build_hamiltonian(lattice, params, polarity);
    std::vector<GateProgram> per_chunk;
    for (double chunk : chunks) per_chunk.push_back(second_order_step(lattice, terms, chunk));
    programs[polarity] = std::move(per_chunk);
  }

  EvolutionTrace trace;
  trace.seed = seq.seed;
  trace.engine = "peps";
  auto record = [&](double t_ns) {
    const Eigen::VectorXd z = peps.z_expectations(boundary_chi);
    trace.times_ns.push_back(t_ns);
    trace.imbalance.push_back(imbalance(z, pattern, n0));
    trace.n_total.push_back((z.sum() + lattice.num_sites()) / 2.0);
    trace.fidelity.push_back(peps.truncation_weight());
  };

  record(0.0);
  for (int k = 0; k < seq.num_periods(); ++k) {
    for (const GateProgram& program : programs[seq.polarities[k]]) peps.apply_program(program);
    if ((k + 1) % record_every == 0) record((k + 1) * params.period_ns);
  }
  return trace;
}

}  // namespace rmdsim
