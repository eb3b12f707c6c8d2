#pragma once

// Brute-force least-squares projections over explicit block-time vectors.
// O(n^3) dense algebra; used to validate the recursive lattice, never inside it.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "signal.hpp"

namespace smwfb::oracle {

using Row = Eigen::RowVectorXd;
using Rows = Eigen::MatrixXd;  // one vector per row

inline constexpr double kRankTol = 1e-12;

/// Orthogonal projector onto the row space of V, built from a rank-revealing
/// QR of V^T so the Gram matrix is never formed.
class Projector {
public:
  Projector() = default;
  explicit Projector(const Rows& V) : dim_(V.cols()) {
    if (V.rows() == 0) return;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V.transpose());
    double rmax = qr.maxPivot();
    rank_ = 0;
    if (rmax > 0) {
      qr.setThreshold(kRankTol);
      rank_ = static_cast<int>(qr.rank());
    }
    if (rank_ > 0) {
      Eigen::MatrixXd Q = qr.householderQ();
      basis_ = Q.leftCols(rank_);
    }
    V_ = V;
  }

  int rank() const { return rank_; }
  Eigen::Index dim() const { return dim_; }

  Row project(const Row& v) const {
    if (rank_ == 0) return Row::Zero(v.size());
    return (v * basis_) * basis_.transpose();
  }
  Row complement(const Row& v) const { return v - project(v); }

  /// v P^perp[V] applied to every row of U.
  Rows complement_rows(const Rows& U) const {
    Rows out(U.rows(), U.cols());
    for (Eigen::Index r = 0; r < U.rows(); ++r) out.row(r) = complement(U.row(r));
    return out;
  }

  /// Minimum-norm a with v + a V = v P^perp[V].
  Row params(const Row& v) const {
    if (V_.rows() == 0) return Row(0);
    if (rank_ == 0) return Row::Zero(V_.rows());
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(V_.transpose());
    cod.setThreshold(kRankTol);
    Eigen::VectorXd p = cod.solve(v.transpose());
    return -p.transpose();
  }

  Eigen::MatrixXd matrix() const {
    if (rank_ == 0) return Eigen::MatrixXd::Zero(dim_, dim_);
    return basis_ * basis_.transpose();
  }

private:
  Eigen::Index dim_ = 0;
  int rank_ = 0;
  Eigen::MatrixXd basis_;
  Rows V_;
};

struct ProjectionResult {
  Row residual;
  Row params;
  int rank = 0;
};

inline ProjectionResult residual_projection(const Row& v, const Rows& V) {
  if (V.rows() > 0 && V.cols() != v.size())
    throw std::invalid_argument("residual_projection: dimension mismatch");
  Projector P(V);
  return {P.complement(v), P.params(v), P.rank()};
}

inline Row to_row(const DataVector& d) {
  auto v = d.dense();
  return Eigen::Map<const Row>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Rows to_rows(const DataMatrix& X) {
  Rows V(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(X.cols()));
  for (std::size_t r = 0; r < X.size(); ++r) V.row(static_cast<Eigen::Index>(r)) = to_row(X.rows[r]);
  return V;
}

inline ProjectionResult residual_projection(const DataVector& v, const DataMatrix& X) {
  return residual_projection(to_row(v), to_rows(X));
}

// ---- Auxiliary quantities -------------------------------------------------
//
// Vectors live on the block axis k = 0..n (the origin block is kept so that
// delaying a decimated vector by M samples is an exact shift by one block).
// y_j(k) = x(M k - j).  The pinning vector selects k = n.

enum class Kind { eps, gamma, delta_hat, e_i, r_i, delta_i, e, r, delta };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::eps: return "eps";
    case Kind::gamma: return "gamma";
    case Kind::delta_hat: return "delta_hat";
    case Kind::e_i: return "e_i";
    case Kind::r_i: return "r_i";
    case Kind::delta_i: return "delta_i";
    case Kind::e: return "e";
    case Kind::r: return "r";
    case Kind::delta: return "delta";
  }
  return "?";
}

inline Kind kind_from_name(const std::string& s) {
  for (Kind k : {Kind::eps, Kind::gamma, Kind::delta_hat, Kind::e_i, Kind::r_i, Kind::delta_i, Kind::e,
                 Kind::r, Kind::delta})
    if (s == kind_name(k)) return k;
  throw std::invalid_argument("unknown quantity kind: " + s);
}

class BlockData {
public:
  BlockData(const Signal& s, int M, long n) : s_(s), M_(M), n_(n) {
    if (M < 1 || n < 0) throw std::invalid_argument("BlockData: need M >= 1 and n >= 0");
  }

  Row y(int j) const { return to_row(DataVector(s_, M_, j, n_, 0)); }

  /// Rows y_first .. y_{first+count-1}.
  Rows stack(int first, int count) const {
    Rows V(count, n_ + 1);
    for (int r = 0; r < count; ++r) V.row(r) = y(first + r);
    return V;
  }

  Row pin() const {
    Row p = Row::Zero(n_ + 1);
    p(n_) = 1.0;
    return p;
  }

  long n() const { return n_; }
  int M() const { return M_; }

private:
  const Signal& s_;
  int M_;
  long n_;
};

/// The (nu, U, w) triple of one table row, with nested constraint projections already applied.
struct Triple {
  Row nu;
  Rows U;
  Row w;
};

/// `index` is the block n for the decimated kinds and the sample time t for e, r, delta.
inline Triple exact_triple(Kind kind, const Signal& s, int M, int i, int order, long index) {
  if (order < 0) throw std::invalid_argument("exact: negative order");
  switch (kind) {
    case Kind::e:
    case Kind::r:
    case Kind::delta: {
      BlockData d(s, 1, index);
      Rows U = d.stack(1, order);
      Row nu = kind == Kind::e ? d.y(0) : kind == Kind::r ? d.y(order + 1) : d.pin();
      return {nu, U, d.pin()};
    }
    default: break;
  }
  if (i < 0 || i >= M) throw std::invalid_argument("exact: channel out of range");
  BlockData d(s, M, index);
  if (kind == Kind::eps || kind == Kind::gamma || kind == Kind::delta_hat) {
    if (order > M - 1 - i) throw std::invalid_argument("exact: cross-band order exceeds M-1-i");
    Rows U = d.stack(i + 1, order);
    Row nu = kind == Kind::eps ? d.y(i) : kind == Kind::gamma ? d.y(i + order + 1) : d.pin();
    return {nu, U, d.pin()};
  }
  Projector C(d.stack(i + 1, M - 1 - i));
  Rows U = C.complement_rows(d.stack(M, order));
  Row nu = kind == Kind::e_i ? d.y(i) : kind == Kind::r_i ? d.y(M + order) : d.pin();
  return {C.complement(nu), U, C.complement(d.pin())};
}

struct ExactValue {
  Row residual;  // nu P^perp[U]
  double value;  // residual . w
};

inline ExactValue exact_evaluate(Kind kind, const Signal& s, int M, int i, int order, long index) {
  auto t = exact_triple(kind, s, M, i, order, index);
  Row r = Projector(t.U).complement(t.nu);
  double v = r.dot(t.w);
  return {std::move(r), v};
}

/// The residual vector nu P^perp[U].
inline Row exact_vector(Kind kind, const Signal& s, int M, int i, int order, long index) {
  auto t = exact_triple(kind, s, M, i, order, index);
  return Projector(t.U).complement(t.nu);
}

/// nu P^perp[U] w^T.
inline double exact_quantity(Kind kind, const Signal& s, int M, int i, int order, long index) {
  auto t = exact_triple(kind, s, M, i, order, index);
  return Projector(t.U).complement(t.nu).dot(t.w);
}

// ---- identity checks ------------------------------------------------------

struct IdentitySides {
  double lhs = 0.0, rhs = 0.0;
  bool degenerate = false;
};

/// nu P^perp[V;next] w^T against its rank-one update from nu P^perp[V] w^T.
inline IdentitySides check_inner_product_update(const Row& nu, const Rows& V, const Row& w, const Row& next) {
  Projector P(V);
  Rows Vn(V.rows() + 1, nu.size());
  if (V.rows() > 0) Vn.topRows(V.rows()) = V;
  Vn.row(V.rows()) = next;
  IdentitySides out;
  out.lhs = Projector(Vn).complement(nu).dot(w);
  Row nr = P.complement(next);
  double den = nr.squaredNorm();
  double nrm = next.squaredNorm();
  if (den <= 1e-12 * std::max(nrm, 1e-300)) {
    out.degenerate = true;
    out.rhs = P.complement(nu).dot(w);
    return out;
  }
  Row nu_r = P.complement(nu);
  out.rhs = nu_r.dot(w) - nu_r.dot(next) * nr.dot(w) / den;
  return out;
}

struct SpaceIdentityReport {
  double projector_invariance = 0.0;      // max |P[V P^perp[x P^perp[V]]] - P[V]|
  double reordered_projection = 0.0;  // nu P^perp[xP^perp V] P^perp[V P^perp[..]] w vs nu P^perp[x] P^perp[V P^perp[x]] w
  double split_difference = 0.0; // nu P^perp[x] P^perp[V P^perp[x]] w vs nu P^perp[V] w - nu P[x P^perp V] w
  double split_second_term = 0.0;

  double max() const { return std::max({projector_invariance, reordered_projection, split_difference}); }
};

inline Rows one_row(const Row& x) {
  Rows r(1, x.size());
  r.row(0) = x;
  return r;
}

inline SpaceIdentityReport check_space_identities(const Row& nu, const Row& x, const Rows& V, const Row& w) {
  SpaceIdentityReport rep;
  Projector PV(V);
  Row xt = PV.complement(x);
  // x inside span(V) leaves only roundoff, which must not count as a direction
  if (xt.norm() <= 1e-10 * x.norm()) xt.setZero();
  Projector Pxt(one_row(xt));
  Rows Vx = Pxt.complement_rows(V);
  Projector PVx(Vx);
  rep.projector_invariance = (PVx.matrix() - PV.matrix()).cwiseAbs().maxCoeff();

  double lhs1 = PVx.complement(Pxt.complement(nu)).dot(w);
  Projector Px(one_row(x));
  Projector PVpx(Px.complement_rows(V));
  double rhs1 = PVpx.complement(Px.complement(nu)).dot(w);
  rep.reordered_projection = std::abs(lhs1 - rhs1);

  double second = Pxt.project(nu).dot(w);
  rep.split_second_term = second;
  rep.split_difference = std::abs(rhs1 - (PV.complement(nu).dot(w) - second));
  return rep;
}

/// z K[x] for rows V: coefficients of z on the rows of V P^perp[x]
/// (right pseudo-inverse; x may be an empty row for "no projection").
inline Row pinv_coeffs(const Row& z, const Rows& V, const Row& x) {
  Rows Vx = x.size() ? Projector(one_row(x)).complement_rows(V) : V;
  Eigen::MatrixXd G = Vx * Vx.transpose();
  return (z * Vx.transpose()) * G.completeOrthogonalDecomposition().pseudoInverse();
}

/// Both sides of the rank-one pseudo-inverse update, row n = V.row(last).
inline std::pair<Row, Row> check_pseudo_inverse_update(const Row& z, const Rows& V, const Row& x) {
  const Eigen::Index n = V.rows();
  Row lhs = pinv_coeffs(z, V, x);
  Rows Vm = V.topRows(n - 1);
  Row vn = V.row(n - 1);
  Row none(0);
  Projector Pm(Vm), Pn(V);
  Row t1 = Row::Zero(n);
  if (n > 1) t1.head(n - 1) = pinv_coeffs(z, Vm, none);
  Row vr = Pm.complement(vn);
  Row dir = Row::Zero(n);
  if (n > 1) dir.head(n - 1) = -pinv_coeffs(vn, Vm, none);
  dir(n - 1) = 1.0;
  Row t2 = (Pm.complement(z).dot(vn) / vr.dot(vn)) * dir;
  Row xr = Pn.complement(x);
  Row t3 = (xr.dot(z) / xr.dot(x)) * (-pinv_coeffs(x, V, none));
  return {lhs, t1 + t2 + t3};
}

// ---- least-squares filter coefficients ------------------------------------

struct LsCoefficients {
  Row h;  // regressors x(Mn-M) .. x(Mn-M-N+1)
  Row a;  // constraint rows x(Mn-i-1) .. x(Mn-M+1)
  int rank_h = 0, rank_a = 0;
};

/// Constrained solve: h by projecting onto the constraint complement, then a
/// from the normal equations of the constraint rows given h.
inline LsCoefficients ls_filter_coeffs(const Signal& s, int M, int i, int N, long n) {
  BlockData d(s, M, n);
  Rows C = d.stack(i + 1, M - 1 - i);
  Rows X = d.stack(M, N);
  Projector PC(C);
  Rows Xc = PC.complement_rows(X);
  Projector PX(Xc);
  LsCoefficients out;
  out.h = PX.params(PC.complement(d.y(i)));
  out.rank_h = PX.rank();
  if (C.rows() == 0) return out;
  Row target = d.y(i) + out.h * X;
  out.a = PC.params(target);
  out.rank_a = PC.rank();
  return out;
}

/// Ordinary prediction coefficients over consecutive lags: v + coeffs * [y_first ; ...] minimal.
inline Row ls_prediction(const Signal& s, int M, int target, int first, int count, long n) {
  BlockData d(s, M, n);
  return Projector(d.stack(first, count)).params(d.y(target));
}

}  // namespace smwfb::oracle
