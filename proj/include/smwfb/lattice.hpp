#pragma once

// Exact growing-memory least-squares lattice for the M-channel whitening bank.
//
// Block n carries samples x(Mn-M+1) .. x(Mn).  With y_j(k) = x(Mk - j), phase i
// runs one ladder over total order Q = 0 .. M-1-i+N:
//   f_i^Q = y_i      P^perp[y_{i+1} .. y_{i+Q}]  (latest entry)
//   b_i^Q = y_{i+Q+1} P^perp[y_{i+1} .. y_{i+Q}]
//   d_i^Q = pi       P^perp[y_{i+1} .. y_{i+Q}] pi'
// Orders Q <= M-1-i are the cross-band residuals (eps, gamma, delta-hat); from
// Q = M-1-i on they are the constrained channel residuals e_i^p, r_i^p, delta_i^p
// with p = Q-(M-1-i).  Channel i's output is f_i at the top order.
//
// Backward residuals of phase i are order-updated from phase i+1 at the same
// block.  Phase M-1 uses phase 0 of the previous block: y_M(k) = y_0(k-1), so
// those registers are read before phase 0 is refreshed.  The full-rate scalar
// predictor is the same ladder with M = 1 sourcing from itself one sample back.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "counted.hpp"

namespace smwfb {

struct WhitenerConfig {
  int M = 2;
  int N = 4;
  double lambda = 1.0;
  double eps_reg = 1e-12;

  void validate() const {
    if (M < 2) throw std::invalid_argument("WhitenerConfig: M must be >= 2");
    if (N < 1) throw std::invalid_argument("WhitenerConfig: N must be >= 1");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("WhitenerConfig: lambda must be in (0,1]");
    if (!(eps_reg > 0.0)) throw std::invalid_argument("WhitenerConfig: eps_reg must be positive");
  }
};

/// Registers of one order-recursive ladder.  `cross` is the forward/backward
/// inner product; it is the single storage for both Delta_{f,b} and Delta_{b,f}.
template <class Real>
struct Ladder {

  // Generic-rank bookkeeping: with regressors y_{i+1}.. and stride `stride`, the
  // pinning vector lies in the order-Q space at block n exactly when
  // stride*n > i and Q > n - ceil((i+1)/stride).
  int stride = 1;
  int first_live = 1;  // ceil((i+1)/stride)
  int phase = 0;
  int phase_index = 0;

  bool live(int Q, long n) const { return static_cast<long>(stride) * n <= phase || Q <= n - first_live; }
  /// Every order is live and has seen at least one further update.
  bool settled(long n) const { return n > top + first_live; }

  int top = 0;
  std::vector<Real> f, b, delta, cross, rf, rb;
  std::vector<Real> kf, kb;  // quotients used at the most recent update, size top

  /// Re-bases the counting on the first nonzero input sample at time t0.
  void anchor(long t0) {
    const int i = phase_index;
    phase = static_cast<int>(i + t0);
    first_live = static_cast<int>((i + t0 + stride) / stride);
  }

  explicit Ladder(int top_order = 0, int M = 1, int i = 0)
      : stride(M), first_live((i + M) / M), phase(i), phase_index(i), top(top_order), f(top + 1), b(top + 1), delta(top + 1, Real(1.0)), cross(top + 1), rf(top + 1),
        rb(top + 1), kf(top), kb(top) {}
};

struct ChannelOutputs {
  long block = 0;
  std::vector<double> e;  // e[i] = e_i^N(Mn - i)
};

template <class Real>
class Whitener {
public:
  explicit Whitener(WhitenerConfig cfg) : cfg_(cfg), scalar_(0) {
    cfg_.validate();
    scalar_ = Ladder<Real>(cfg_.N);
    phase_.reserve(static_cast<std::size_t>(cfg_.M));
    for (int i = 0; i < cfg_.M; ++i) phase_.emplace_back(cfg_.M - 1 - i + cfg_.N, cfg_.M, i);
    scalar_k_.assign(static_cast<std::size_t>(cfg_.M), {std::vector<Real>(cfg_.N), std::vector<Real>(cfg_.N)});
  }

  const WhitenerConfig& config() const { return cfg_; }
  long blocks() const { return blocks_; }
  long samples() const { return samples_; }

  const Ladder<Real>& phase(int i) const { return phase_.at(static_cast<std::size_t>(i)); }
  Ladder<Real>& phase(int i) { return phase_.at(static_cast<std::size_t>(i)); }
  const Ladder<Real>& scalar() const { return scalar_; }
  Ladder<Real>& scalar() { return scalar_; }

  /// Offset of channel order 0 inside phase i's ladder.
  int cross_band_orders(int i) const { return cfg_.M - 1 - i; }

  /// Scalar-section quotients (kf, kb) for each sample of the last block, oldest first.
  std::span<const std::pair<std::vector<Real>, std::vector<Real>>> scalar_quotients() const {
    return {scalar_k_.data(), static_cast<std::size_t>(scalar_steps_)};
  }

  /// Feed block n: `x` holds x(Mn-M+1) .. x(Mn) in time order.  For the first
  /// block only the last entry (x(0)) is a real sample; the rest must be zero.
  ChannelOutputs process_block(std::span<const double> x) {
    const int M = cfg_.M;
    if (static_cast<int>(x.size()) != M) throw std::invalid_argument("process_block: need exactly M samples");
    for (double v : x)
      if (!std::isfinite(v)) throw std::invalid_argument("process_block: non-finite sample");
    if (blocks_ == 0)
      for (int j = 0; j + 1 < M; ++j)
        if (x[static_cast<std::size_t>(j)] != 0.0)
          throw std::invalid_argument("process_block: first block precedes x(0); leading entries must be zero");

    const std::size_t first = blocks_ == 0 ? static_cast<std::size_t>(M - 1) : 0;
    // Leading zeros leave every register untouched; the rank counting starts
    // at the first nonzero sample.
    for (std::size_t j = first; j < x.size() && !started_; ++j)
      if (x[j] != 0.0) {
        const long t0 = static_cast<long>(M) * blocks_ - (M - 1 - static_cast<long>(j));
        scalar_.anchor(t0);
        for (auto& L : phase_) L.anchor(t0);
        started_ = true;
      }
    scalar_steps_ = 0;
    for (std::size_t j = first; j < x.size(); ++j) {
      backward_step(scalar_, scalar_, samples_);
      forward_step(scalar_, Real(x[j]), samples_);
      scalar_k_[static_cast<std::size_t>(scalar_steps_)].first = scalar_.kf;
      scalar_k_[static_cast<std::size_t>(scalar_steps_)].second = scalar_.kb;
      ++scalar_steps_;
      ++samples_;
    }

    ChannelOutputs out{blocks_, std::vector<double>(static_cast<std::size_t>(M))};
    for (int i = M - 1; i >= 0; --i) {
      Ladder<Real>& L = phase_[static_cast<std::size_t>(i)];
      const Ladder<Real>& src = phase_[static_cast<std::size_t>(i + 1 < M ? i + 1 : 0)];
      backward_step(L, src, blocks_);
      // x(Mn - i) sits at position M-1-i of the block
      forward_step(L, Real(x[static_cast<std::size_t>(M - 1 - i)]), blocks_);
      out.e[static_cast<std::size_t>(i)] = value_of(L.f[static_cast<std::size_t>(L.top)]);
    }
    ++blocks_;
    return out;
  }

  /// Corrupts one register; used to exercise failure paths of the verifier.
  void inject_fault(double amount) { phase_[0].rf[0] += Real(amount); }

private:
  Real decay(Real v) const { return cfg_.lambda == 1.0 ? v : Real(cfg_.lambda) * v; }

  static Real select(bool c, Real a, Real b) { return c ? a : b; }

  // Quotient guard.  During startup the zero pattern is structural and tiny
  // denominators are genuine, so only exact zeros are skipped; afterwards a
  // denominator below eps_reg times the order-0 energy means the data itself
  // is rank deficient.
  Real threshold(const Ladder<Real>& L, long now) const {
    return L.settled(now) ? Real(cfg_.eps_reg) * L.rf[0] : Real(0.0);
  }

  // Backward residuals and likelihoods of L from the source ladder at order
  // one lower.  Descending order lets the scalar ladder be its own source.
  void backward_step(Ladder<Real>& L, const Ladder<Real>& S, long now) {
    const Real thr = threshold(S, now);
    for (int q = L.top - 1; q >= 0; --q) {
      const auto Q = static_cast<std::size_t>(q);
      const bool ok = S.rf[Q] > thr;
      const Real inv = Real(1.0) / S.rf[Q];
      const Real kb = select(ok, S.cross[Q] * inv, Real(0.0));
      const Real t = select(ok, S.f[Q] * inv, Real(0.0));
      L.kb[Q] = kb;
      L.b[Q + 1] = S.b[Q] - kb * S.f[Q];
      L.delta[Q + 1] = S.delta[Q] - t * S.f[Q];
    }
    L.b[0] = S.f[0];
    L.delta[0] = Real(1.0);
  }

  // Time update of the correlations, then forward order update.
  void forward_step(Ladder<Real>& L, Real sample, long now) {
    L.f[0] = sample;
    Real thr(0.0);
    for (int q = 0; q <= L.top; ++q) {
      const auto Q = static_cast<std::size_t>(q);
      const bool live = L.live(q, now) && L.delta[Q] != Real(0.0);
      const Real inv = Real(1.0) / L.delta[Q];
      const Real fw = L.f[Q] * inv;
      const Real bw = L.b[Q] * inv;
      L.cross[Q] = decay(L.cross[Q]) + select(live, fw * L.b[Q], Real(0.0));
      L.rf[Q] = decay(L.rf[Q]) + select(live, fw * L.f[Q], Real(0.0));
      L.rb[Q] = decay(L.rb[Q]) + select(live, bw * L.b[Q], Real(0.0));
      if (q == L.top) break;
      if (q == 0) thr = threshold(L, now);
      const bool ok = L.rb[Q] > thr;
      const Real kf = select(ok, L.cross[Q] / L.rb[Q], Real(0.0));
      L.kf[Q] = kf;
      L.f[Q + 1] = L.f[Q] - kf * L.b[Q];
    }
  }

  WhitenerConfig cfg_;
  Ladder<Real> scalar_;
  std::vector<Ladder<Real>> phase_;
  std::vector<std::pair<std::vector<Real>, std::vector<Real>>> scalar_k_;
  int scalar_steps_ = 0;
  bool started_ = false;
  long blocks_ = 0;
  long samples_ = 0;
};

using WhitenerState = Whitener<double>;

inline WhitenerState init_state(const WhitenerConfig& cfg) { return WhitenerState(cfg); }

inline ChannelOutputs process_block(WhitenerState& s, std::span<const double> x) { return s.process_block(x); }

/// Splits a stream into blocks: {0,..,0,x(0)}, {x(1)..x(M)}, ...  Trailing
/// samples that do not fill a block are ignored.
template <class Real, class F>
void for_each_block(Whitener<Real>& w, std::span<const double> x, F&& on_output) {
  const int M = w.config().M;
  if (x.empty()) return;
  std::vector<double> blk(static_cast<std::size_t>(M), 0.0);
  blk.back() = x[0];
  on_output(w.process_block(blk));
  for (std::size_t t = 1; t + static_cast<std::size_t>(M) <= x.size(); t += static_cast<std::size_t>(M)) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(t), M, blk.begin());
    on_output(w.process_block(blk));
  }
}

inline std::vector<ChannelOutputs> whiten(const WhitenerConfig& cfg, std::span<const double> x) {
  WhitenerState w(cfg);
  std::vector<ChannelOutputs> out;
  for_each_block(w, x, [&](ChannelOutputs o) { out.push_back(std::move(o)); });
  return out;
}

/// Arithmetic executed by one call to process_block, measured through the
/// instrumented scalar type.  Counts depend on (M, N, lambda) only, plus the
/// shorter first block.
inline OpCounts op_counters(const WhitenerConfig& cfg, int block_index = 8) {
  Whitener<Counted> w(cfg);
  std::vector<double> blk(static_cast<std::size_t>(cfg.M), 0.0);
  OpCounts before{};
  for (int n = 0; n <= block_index; ++n) {
    for (int j = 0; j < cfg.M; ++j)
      blk[static_cast<std::size_t>(j)] = n == 0 && j + 1 < cfg.M ? 0.0 : std::sin(0.7 * (n * cfg.M + j) + 0.3);
    before = Counted::tally();
    w.process_block(blk);
  }
  return Counted::tally() - before;
}

/// Reference per-block operation estimate, for comparison.
inline OpCounts reference_op_counts(int M, int N) {
  return {static_cast<std::uint64_t>((7 + 6 * M) * N + 7 * M), static_cast<std::uint64_t>((14 + 12 * M) * N + 14 * M)};
}

// ---- register snapshots ---------------------------------------------------

template <class Real>
nlohmann::json snapshot_registers(const Whitener<Real>& w) {
  using nlohmann::json;
  auto vec = [](const std::vector<Real>& v, std::size_t from, std::size_t to) {
    json a = json::array();
    for (std::size_t k = from; k < to; ++k) a.push_back(value_of(v[k]));
    return a;
  };
  auto section = [&](const Ladder<Real>& L, std::size_t from, std::size_t to, const char* f, const char* b,
                     const char* d, const char* rf, const char* rb) {
    json s;
    s[f] = vec(L.f, from, to);
    s[b] = vec(L.b, from, to);
    s[d] = vec(L.delta, from, to);
    s["delta_fb"] = vec(L.cross, from, to);
    s["delta_bf"] = vec(L.cross, from, to);
    s[rf] = vec(L.rf, from, to);
    s[rb] = vec(L.rb, from, to);
    return s;
  };
  const auto& c = w.config();
  json j;
  j["M"] = c.M;
  j["N"] = c.N;
  j["lambda"] = c.lambda;
  j["blocks"] = w.blocks();
  j["samples"] = w.samples();
  const std::size_t Ns = static_cast<std::size_t>(c.N) + 1;
  j["scalar"] = section(w.scalar(), 0, Ns, "e", "r", "delta", "R_e", "R_r");
  j["prefilter"] = json::array();
  j["channel"] = json::array();
  for (int i = 0; i < c.M; ++i) {
    const auto& L = w.phase(i);
    const auto q = static_cast<std::size_t>(w.cross_band_orders(i));
    j["prefilter"].push_back(section(L, 0, q + 1, "eps", "gamma", "delta_hat", "R_eps", "R_gamma"));
    j["channel"].push_back(section(L, q, q + Ns, "e", "r", "delta", "R_e", "R_r"));
  }
  return j;
}

}  // namespace smwfb
