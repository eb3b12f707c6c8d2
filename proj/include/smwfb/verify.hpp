#pragma once

// Oracle equivalence sweep: runs the lattice on random data and compares every
// register with its brute-force projection counterpart after each block.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lattice.hpp"
#include "projection_oracle.hpp"
#include "random.hpp"

namespace smwfb {

struct Discrepancy {
  double max_rel = 0.0;  // |a - o| / max(|o|, floor)
  double max_abs = 0.0;
  bool failed = false;
  long count = 0;
  nlohmann::json worst;
};

struct VerifyOptions {
  int M = 2;
  int N = 4;
  int blocks = 32;
  int trials = 20;
  std::uint64_t seed = 1;
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  std::string inject_fault;  // register family to corrupt, empty for none
  int leading_zeros = 0;     // samples forced to zero at the start of each trial
};

struct VerifyReport {
  std::map<std::string, Discrepancy> kinds;
  bool passed() const {
    return std::none_of(kinds.begin(), kinds.end(), [](const auto& kv) { return kv.second.failed; });
  }
  double max_rel() const {
    double m = 0.0;
    for (const auto& [k, d] : kinds) m = std::max(m, d.max_rel);
    return m;
  }
  nlohmann::json to_json(const VerifyOptions& o) const {
    nlohmann::json j;
    j["M"] = o.M;
    j["N"] = o.N;
    j["blocks"] = o.blocks;
    j["trials"] = o.trials;
    j["seed"] = o.seed;
    j["rel_tol"] = o.rel_tol;
    j["abs_tol"] = o.abs_tol;
    j["passed"] = passed();
    j["max_rel_err"] = max_rel();
    for (const auto& [k, d] : kinds) {
      j["quantities"][k] = {{"max_rel_err", d.max_rel}, {"max_abs_err", d.max_abs}, {"compared", d.count},
                            {"failed", d.failed}, {"worst", d.worst}};
    }
    return j;
  }
};

namespace detail {

/// Mixed criterion: a value passes when |a-o| <= abs_tol + rel_tol*|o|.
/// `scale` sizes the absolute floor for quantities with physical units.
inline void compare(Discrepancy& d, double got, double want, double scale, const VerifyOptions& o,
                    const nlohmann::json& where) {
  const double err = std::abs(got - want);
  const double floor = o.abs_tol * scale;
  const double rel = err / std::max(std::abs(want), floor / o.rel_tol);
  ++d.count;
  d.max_abs = std::max(d.max_abs, err);
  if (rel > d.max_rel) {
    d.max_rel = rel;
    d.worst = where;
    d.worst["lattice"] = got;
    d.worst["oracle"] = want;
  }
  if (!(err <= floor + o.rel_tol * std::abs(want))) d.failed = true;
}

}  // namespace detail

/// Compares one phase ladder (or the scalar ladder) register-by-register at the
/// current time against the oracle.
inline void verify_ladder(VerifyReport& rep, const Ladder<double>& L, const Signal& s, int M, int i, long n,
                          bool scalar, double energy, const VerifyOptions& o, long trial) {
  using oracle::Kind;
  const int qc = scalar ? L.top + 1 : M - 1 - i;  // orders below qc belong to the cross-band section
  const double vs = std::sqrt(energy);
  for (int Q = 0; Q <= L.top; ++Q) {
    // exact-initialization period: need at least Q+1 block times
    if (n < Q) continue;
    Kind fk, bk, dk;
    int order;
    std::string sec;
    if (scalar) {
      fk = Kind::e, bk = Kind::r, dk = Kind::delta, order = Q, sec = "scalar";
    } else if (Q <= qc) {
      fk = Kind::eps, bk = Kind::gamma, dk = Kind::delta_hat, order = Q, sec = "prefilter";
    } else {
      fk = Kind::e_i, bk = Kind::r_i, dk = Kind::delta_i, order = Q - qc, sec = "channel";
    }
    // the top cross-band order and channel order 0 are the same registers; also check the channel names
    std::vector<std::tuple<Kind, Kind, Kind, int, std::string>> views{{fk, bk, dk, order, sec}};
    if (!scalar && Q == qc) views.emplace_back(Kind::e_i, Kind::r_i, Kind::delta_i, 0, "channel");
    const auto q = static_cast<std::size_t>(Q);
    for (auto& [fk2, bk2, dk2, ord, name] : views) {
      nlohmann::json where{{"trial", trial}, {"section", name}, {"channel", i}, {"order", ord}, {"time", n}};
      auto [fv, fo] = oracle::exact_evaluate(fk2, s, M, i, ord, n);
      auto [bv, bo] = oracle::exact_evaluate(bk2, s, M, i, ord, n);
      const double dlt = oracle::exact_evaluate(dk2, s, M, i, ord, n).value;
      detail::compare(rep.kinds[std::string(oracle::kind_name(fk2))], L.f[q], fo, vs, o, where);
      detail::compare(rep.kinds[std::string(oracle::kind_name(bk2))], L.b[q], bo, vs, o, where);
      detail::compare(rep.kinds[std::string(oracle::kind_name(dk2))], L.delta[q], dlt, 1.0, o, where);
      detail::compare(rep.kinds["R_" + name + "_f"], L.rf[q], fv.squaredNorm(), energy, o, where);
      detail::compare(rep.kinds["R_" + name + "_b"], L.rb[q], bv.squaredNorm(), energy, o, where);
      detail::compare(rep.kinds["Delta_" + name], L.cross[q], fv.dot(bv), energy, o, where);
    }
  }
}

inline VerifyReport verify_lattice(const VerifyOptions& o) {
  VerifyReport rep;
  for (int t = 0; t < o.trials; ++t) {
    ExcitationSpec spec{Gaussian{0.0, 1.0}, o.seed * 1000003ULL + static_cast<std::uint64_t>(t)};
    const std::size_t len = static_cast<std::size_t>(o.M) * static_cast<std::size_t>(o.blocks - 1) + 1;
    Signal s = draw_excitation(spec, len);
    if (o.leading_zeros > 0) {
      std::vector<double> v = s.samples();
      std::fill_n(v.begin(), std::min<std::size_t>(v.size(), static_cast<std::size_t>(o.leading_zeros)), 0.0);
      s = Signal(std::move(v));
    }
    WhitenerState w(WhitenerConfig{o.M, o.N, 1.0, 1e-12});
    long n = 0;
    double energy = 0.0;
    for_each_block(w, s.samples(), [&](const ChannelOutputs& out) {
      if (!o.inject_fault.empty() && n == o.blocks / 2) {
        auto& L = w.phase(0);
        if (o.inject_fault == "R") L.rf[0] += 1.0;
        else if (o.inject_fault == "delta") L.delta[1] *= 0.5;
        else if (o.inject_fault == "Delta") L.cross[0] += 1.0;
        else L.f[static_cast<std::size_t>(L.top)] += 1.0;
      }
      for (long k = std::max(0L, static_cast<long>(o.M) * (n - 1) + 1); k <= o.M * n; ++k) energy += s(k) * s(k);
      const long t_now = static_cast<long>(o.M) * n;
      verify_ladder(rep, w.scalar(), s, 1, 0, t_now, true, energy, o, t);
      for (int i = 0; i < o.M; ++i) verify_ladder(rep, w.phase(i), s, o.M, i, n, false, energy, o, t);
      // channel outputs are the top-order forward residuals
      for (int i = 0; i < o.M; ++i) {
        if (n < w.phase(i).top) continue;
        detail::compare(rep.kinds["output"], out.e[static_cast<std::size_t>(i)],
                        oracle::exact_quantity(oracle::Kind::e_i, s, o.M, i, o.N, n), std::sqrt(energy), o,
                        {{"trial", t}, {"channel", i}, {"time", n}});
      }
      ++n;
    });
  }
  return rep;
}

}  // namespace smwfb
