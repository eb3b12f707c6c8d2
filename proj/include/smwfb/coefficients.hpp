#pragma once

// Filter coefficients carried alongside the lattice.  Every residual in a
// ladder is y_target + (coefficients) . (regressor stack), so each order step
// of the lattice has a matching vector recursion:
//   B^{Q+1} = [0 | B_src^Q] - kb [1 | A_src^Q]
//   A^{Q+1} = [A^Q | 0]     - kf [B^{Q+1}... at order Q | 1]
// For phase i at channel order p the forward vector splits as [a_i | h_i^p]
// and the backward one as [constraint part | g_i^p].

#include <algorithm>
#include <deque>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lattice.hpp"
#include "random.hpp"
#include "signal.hpp"

namespace smwfb {

using Coeffs = std::vector<double>;

struct LadderCoefficients {
  std::vector<Coeffs> A, B;  // indexed by total order, A[Q].size() == Q

  explicit LadderCoefficients(int top = 0) {
    for (int q = 0; q <= top; ++q) {
      A.emplace_back(static_cast<std::size_t>(q), 0.0);
      B.emplace_back(static_cast<std::size_t>(q), 0.0);
    }
  }
};

class CoefficientSet {
public:
  CoefficientSet() = default;
  explicit CoefficientSet(const WhitenerConfig& cfg) : M_(cfg.M), N_(cfg.N), scalar_(cfg.N) {
    for (int i = 0; i < M_; ++i) phase_.emplace_back(M_ - 1 - i + N_);
    a_.assign(static_cast<std::size_t>(M_), {});
    for (int i = 0; i < M_; ++i) a_[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(M_ - 1 - i), 0.0);
  }

  int M() const { return M_; }
  int N() const { return N_; }

  // scalar predictor
  const Coeffs& c(int p) const { return scalar_.A.at(static_cast<std::size_t>(p)); }
  const Coeffs& d(int p) const { return scalar_.B.at(static_cast<std::size_t>(p)); }

  // cross-band section, q = 0..M-1-i
  const Coeffs& a_hat(int i, int q) const { return ladder(i).A.at(static_cast<std::size_t>(q)); }
  const Coeffs& b_hat(int i, int q) const { return ladder(i).B.at(static_cast<std::size_t>(q)); }

  /// h_i^p: the regressor part of the order-p forward vector.
  Coeffs h(int i, int p) const { return tail(ladder(i).A.at(static_cast<std::size_t>(M_ - 1 - i + p)), p); }
  /// g_i^p: the regressor part of the order-p backward vector.
  Coeffs g(int i, int p) const { return tail(ladder(i).B.at(static_cast<std::size_t>(M_ - 1 - i + p)), p); }
  /// Prefilter row carried by the recursion at full order.
  Coeffs a_recursive(int i) const {
    const auto& v = ladder(i).A.back();
    return Coeffs(v.begin(), v.begin() + (M_ - 1 - i));
  }

  /// Prefilter row from the most recent direct solve.
  const Coeffs& a(int i) const { return a_.at(static_cast<std::size_t>(i)); }
  void set_a(int i, Coeffs v) {
    if (static_cast<int>(v.size()) != M_ - 1 - i) throw std::invalid_argument("set_a: wrong length");
    a_.at(static_cast<std::size_t>(i)) = std::move(v);
  }

  LadderCoefficients& ladder(int i) { return phase_.at(static_cast<std::size_t>(i)); }
  const LadderCoefficients& ladder(int i) const { return phase_.at(static_cast<std::size_t>(i)); }
  LadderCoefficients& scalar() { return scalar_; }
  const LadderCoefficients& scalar() const { return scalar_; }

private:
  static Coeffs tail(const Coeffs& v, int p) { return Coeffs(v.end() - p, v.end()); }

  int M_ = 0, N_ = 0;
  LadderCoefficients scalar_;
  std::vector<LadderCoefficients> phase_;
  std::vector<Coeffs> a_;
};

namespace detail {

inline void backward_coefficients(LadderCoefficients& C, const LadderCoefficients& S, const std::vector<double>& kb) {
  for (std::size_t q = kb.size(); q-- > 0;) {
    const Coeffs& sb = S.B[q];
    const Coeffs& sa = S.A[q];
    Coeffs nb(q + 1);
    nb[0] = -kb[q];
    for (std::size_t k = 0; k < q; ++k) nb[k + 1] = sb[k] - kb[q] * sa[k];
    C.B[q + 1] = std::move(nb);
  }
  C.B[0].clear();
}

inline void forward_coefficients(LadderCoefficients& C, const std::vector<double>& kf) {
  C.A[0].clear();
  for (std::size_t q = 0; q < kf.size(); ++q) {
    Coeffs na(q + 1);
    for (std::size_t k = 0; k < q; ++k) na[k] = C.A[q][k] - kf[q] * C.B[q][k];
    na[q] = -kf[q];
    C.A[q + 1] = std::move(na);
  }
}

}  // namespace detail

/// Advances the coefficient vectors by the block just processed by `w`.
inline void update_coefficients(const WhitenerState& w, CoefficientSet& cs) {
  for (const auto& [kf, kb] : w.scalar_quotients()) {
    detail::backward_coefficients(cs.scalar(), cs.scalar(), kb);
    detail::forward_coefficients(cs.scalar(), kf);
  }
  const int M = w.config().M;
  for (int i = M - 1; i >= 0; --i) {
    const auto& L = w.phase(i);
    // phase 0 still holds the previous block when phase M-1 reads it
    detail::backward_coefficients(cs.ladder(i), cs.ladder(i + 1 < M ? i + 1 : 0), L.kb);
    detail::forward_coefficients(cs.ladder(i), L.kf);
  }
}

// ---- direct prefilter solve -------------------------------------------------

/// Running correlations of z(n) = [x(Mn), x(Mn-1), .., x(Mn-M-N+1)] over blocks.
class GramAccumulator {
public:
  GramAccumulator(int M, int N, double lambda = 1.0)
      : M_(M), N_(N), lambda_(lambda), G_(Eigen::MatrixXd::Zero(M + N, M + N)), hist_(static_cast<std::size_t>(M + N), 0.0) {}

  /// Same block layout as the lattice: x(Mn-M+1) .. x(Mn).
  void add_block(std::span<const double> x) {
    for (double v : x) {
      hist_.pop_back();
      hist_.push_front(v);
    }
    Eigen::VectorXd z(M_ + N_);
    for (int j = 0; j < M_ + N_; ++j) z(j) = hist_[static_cast<std::size_t>(j)];
    G_ = lambda_ * G_ + z * z.transpose();
  }

  const Eigen::MatrixXd& gram() const { return G_; }
  int M() const { return M_; }
  int N() const { return N_; }

private:
  int M_, N_;
  double lambda_;
  Eigen::MatrixXd G_;
  std::deque<double> hist_;
};

struct PrefilterSolve {
  Coeffs a;
  int rank = 0;
};

/// a_i = -(y_i + h_i X) C' (C C')^+ with C the constraint rows y_{i+1} .. y_{M-1}.
inline PrefilterSolve solve_prefilter_a(const GramAccumulator& g, const Coeffs& h, int M, int i) {
  const int m = M - 1 - i;
  if (m == 0) return {};
  if (static_cast<int>(h.size()) > g.N()) throw std::invalid_argument("solve_prefilter_a: h longer than N");
  const auto& G = g.gram();
  Eigen::MatrixXd Gc = G.block(i + 1, i + 1, m, m);
  Eigen::RowVectorXd rhs = G.block(i, i + 1, 1, m);
  for (std::size_t r = 0; r < h.size(); ++r) rhs += h[r] * G.block(M + static_cast<Eigen::Index>(r), i + 1, 1, m);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Gc);
  cod.setThreshold(1e-12);
  Eigen::VectorXd a = -cod.solve(rhs.transpose());
  return {Coeffs(a.data(), a.data() + m), static_cast<int>(cod.rank())};
}

// ---- direct form ------------------------------------------------------------

struct FilterBankCoefficients {
  int M = 0, N = 0;
  Eigen::MatrixXd A;               // unit upper-triangular prefilter
  std::vector<Eigen::MatrixXd> H;  // H[p-1] multiplies x(M(n-p)), p = 1..N/M
  static constexpr int layout_version = 1;
};

/// Packs h_i (order N) and a_i into e(Mn) = A x(Mn) + sum_p H(p) x(M(n-p)).
inline FilterBankCoefficients assemble_direct_form(const std::vector<Coeffs>& h, const std::vector<Coeffs>& a, int M, int N) {
  if (N % M != 0) throw std::invalid_argument("assemble_direct_form: N must be divisible by M");
  if (static_cast<int>(h.size()) != M || static_cast<int>(a.size()) != M)
    throw std::invalid_argument("assemble_direct_form: need one row per channel");
  FilterBankCoefficients fb{M, N, Eigen::MatrixXd::Identity(M, M), {}};
  fb.H.assign(static_cast<std::size_t>(N / M), Eigen::MatrixXd::Zero(M, M));
  for (int i = 0; i < M; ++i) {
    const auto& ai = a[static_cast<std::size_t>(i)];
    const auto& hi = h[static_cast<std::size_t>(i)];
    if (static_cast<int>(ai.size()) != M - 1 - i || static_cast<int>(hi.size()) != N)
      throw std::invalid_argument("assemble_direct_form: coefficient length mismatch");
    for (int k = i + 1; k < M; ++k) fb.A(i, k) = ai[static_cast<std::size_t>(k - i - 1)];
    // h_i[r] multiplies x(Mn - M - r) = x(M(n-p) - k) with p = 1 + r / M, k = r % M
    for (int r = 0; r < N; ++r) fb.H[static_cast<std::size_t>(r / M)](i, r % M) = hi[static_cast<std::size_t>(r)];
  }
  return fb;
}

inline FilterBankCoefficients assemble_direct_form(const CoefficientSet& cs, bool use_direct_a = true) {
  std::vector<Coeffs> h, a;
  for (int i = 0; i < cs.M(); ++i) {
    h.push_back(cs.h(i, cs.N()));
    a.push_back(use_direct_a ? cs.a(i) : cs.a_recursive(i));
  }
  return assemble_direct_form(h, a, cs.M(), cs.N());
}

/// Reads h_i and a_i back out of the matrices.
inline std::pair<std::vector<Coeffs>, std::vector<Coeffs>> disassemble_direct_form(const FilterBankCoefficients& fb) {
  std::vector<Coeffs> h(static_cast<std::size_t>(fb.M)), a(static_cast<std::size_t>(fb.M));
  for (int i = 0; i < fb.M; ++i) {
    for (int k = i + 1; k < fb.M; ++k) a[static_cast<std::size_t>(i)].push_back(fb.A(i, k));
    for (int r = 0; r < fb.N; ++r) h[static_cast<std::size_t>(i)].push_back(fb.H[static_cast<std::size_t>(r / fb.M)](i, r % fb.M));
  }
  return {h, a};
}

/// Block outputs with the same block numbering as the lattice.
inline std::vector<ChannelOutputs> apply_direct_form(const FilterBankCoefficients& fb, const Signal& s) {
  std::vector<ChannelOutputs> out;
  if (s.empty()) return out;
  const int M = fb.M;
  const long nblocks = (static_cast<long>(s.size()) - 1) / M + 1;
  auto xvec = [&](long n) {
    Eigen::VectorXd v(M);
    for (int k = 0; k < M; ++k) v(k) = s(static_cast<long>(M) * n - k);
    return v;
  };
  for (long n = 0; n < nblocks; ++n) {
    Eigen::VectorXd e = fb.A * xvec(n);
    for (std::size_t p = 1; p <= fb.H.size(); ++p) e += fb.H[p - 1] * xvec(n - static_cast<long>(p));
    out.push_back({n, std::vector<double>(e.data(), e.data() + M)});
  }
  return out;
}

// ---- serialization ----------------------------------------------------------

inline nlohmann::json to_json(const FilterBankCoefficients& fb) {
  auto mat = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j{{"M", fb.M}, {"N", fb.N}, {"layout_version", FilterBankCoefficients::layout_version}};
  j["A"] = mat(fb.A);
  j["H"] = nlohmann::json::array();
  for (const auto& h : fb.H) j["H"].push_back(mat(h));
  return j;
}

inline FilterBankCoefficients filter_bank_from_json(const nlohmann::json& j) {
  if (j.at("layout_version").get<int>() != FilterBankCoefficients::layout_version)
    throw std::invalid_argument("filter bank JSON: unsupported layout version");
  FilterBankCoefficients fb;
  fb.M = j.at("M").get<int>();
  fb.N = j.at("N").get<int>();
  auto mat = [&](const nlohmann::json& rows) {
    Eigen::MatrixXd m(fb.M, fb.M);
    for (int r = 0; r < fb.M; ++r)
      for (int c = 0; c < fb.M; ++c) m(r, c) = rows.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    return m;
  };
  fb.A = mat(j.at("A"));
  for (const auto& h : j.at("H")) fb.H.push_back(mat(h));
  return fb;
}

/// One row per coefficient: block, channel, order, value.
inline void write_trajectory_header(std::ostream& os) { os << "block,channel,order,value\n"; }

inline void write_trajectory_rows(std::ostream& os, long block, const CoefficientSet& cs) {
  for (int i = 0; i < cs.M(); ++i) {
    auto h = cs.h(i, cs.N());
    for (std::size_t r = 0; r < h.size(); ++r)
      os << block << ',' << i << ',' << r + 1 << ',' << detail::format_double(h[r]) << '\n';
  }
}

/// Lattice plus coefficient tracking plus periodic prefilter solve.
class FilterBankEstimator {
public:
  explicit FilterBankEstimator(const WhitenerConfig& cfg, int a_interval = 16)
      : w_(cfg), cs_(cfg), gram_(cfg.M, cfg.N, cfg.lambda), a_interval_(a_interval) {}

  ChannelOutputs push_block(std::span<const double> x) {
    auto out = w_.process_block(x);
    update_coefficients(w_, cs_);
    gram_.add_block(x);
    if (a_interval_ > 0 && w_.blocks() % a_interval_ == 0) refresh_prefilter();
    return out;
  }

  void refresh_prefilter() {
    for (int i = 0; i < w_.config().M; ++i) cs_.set_a(i, solve_prefilter_a(gram_, cs_.h(i, w_.config().N), w_.config().M, i).a);
  }

  const WhitenerState& state() const { return w_; }
  const CoefficientSet& coefficients() const { return cs_; }
  const GramAccumulator& gram() const { return gram_; }

private:
  WhitenerState w_;
  CoefficientSet cs_;
  GramAccumulator gram_;
  int a_interval_;
};

}  // namespace smwfb
