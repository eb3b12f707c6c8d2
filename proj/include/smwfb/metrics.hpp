#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "lattice.hpp"
#include "signal.hpp"

namespace smwfb {

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Centered (population) variance.
inline double variance(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

/// Normalized autocorrelation at lags 0..max_lag.
inline std::vector<double> autocorrelation(const std::vector<double>& v, int max_lag) {
  const double m = mean(v);
  std::vector<double> r(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t t = static_cast<std::size_t>(k); t < v.size(); ++t) s += (v[t] - m) * (v[t - static_cast<std::size_t>(k)] - m);
    r[static_cast<std::size_t>(k)] = s;
  }
  const double r0 = r[0];
  for (double& x : r) x = r0 > 0 ? x / r0 : 0.0;
  return r;
}

inline std::vector<double> channel_series(const std::vector<ChannelOutputs>& out, int channel, std::size_t from = 0) {
  std::vector<double> v;
  for (std::size_t n = from; n < out.size(); ++n) v.push_back(out[n].e.at(static_cast<std::size_t>(channel)));
  return v;
}

// ---- coding gain --------------------------------------------------------------

struct CodingGainReport {
  double input_variance = 0.0;
  std::vector<double> channel_variances;
  double gain_db = 0.0;
  bool infinite = false;  // some channel variance is exactly zero
  std::size_t blocks_used = 0;
  std::size_t blocks_discarded = 0;

  nlohmann::json to_json() const {
    return {{"input_variance", input_variance}, {"channel_variances", channel_variances},
            {"gain_db", infinite ? std::numeric_limits<double>::infinity() : gain_db}, {"infinite", infinite},
            {"blocks_used", blocks_used}, {"blocks_discarded", blocks_discarded}};
  }
};

/// Ratio of input variance to the geometric mean of channel variances, over
/// blocks after the discarded transient.
inline CodingGainReport coding_gain(const Signal& input, const std::vector<ChannelOutputs>& out, double discard_fraction = 0.2) {
  if (out.empty()) throw std::invalid_argument("coding_gain: no outputs");
  const std::size_t M = out.front().e.size();
  const std::size_t skip = static_cast<std::size_t>(discard_fraction * static_cast<double>(out.size()));
  if (out.size() - skip < 100) throw std::invalid_argument("coding_gain: need at least 100 retained blocks");
  CodingGainReport rep;
  rep.blocks_discarded = skip;
  rep.blocks_used = out.size() - skip;
  std::vector<double> xs;
  for (std::size_t n = skip; n < out.size(); ++n) {
    const long top = static_cast<long>(M) * out[n].block;
    for (long k = top - static_cast<long>(M) + 1; k <= top; ++k) xs.push_back(input(k));
  }
  rep.input_variance = variance(xs);
  double log_sum = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    double v = variance(channel_series(out, static_cast<int>(i), skip));
    rep.channel_variances.push_back(v);
    if (v == 0.0) rep.infinite = true;
    else log_sum += std::log(v);
  }
  if (!rep.infinite) rep.gain_db = 10.0 * (std::log10(rep.input_variance) - log_sum / static_cast<double>(M) / std::log(10.0));
  return rep;
}

struct AmGmReport {
  double arith_mean = 0.0, geo_mean = 0.0, ratio = 1.0;
};

inline AmGmReport am_gm_report(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("am_gm_report: need at least two variances");
  AmGmReport r;
  r.arith_mean = mean(v);
  double ls = 0.0;
  for (double x : v) ls += std::log(x);
  r.geo_mean = std::exp(ls / static_cast<double>(v.size()));
  r.ratio = r.arith_mean / r.geo_mean;
  return r;
}

// ---- spectra ------------------------------------------------------------------

struct SpectrumEstimate {
  std::vector<double> frequency;  // radians per sample, 0..pi
  std::vector<double> power;
  std::size_t segment_length = 0;
  double overlap = 0.0;
  std::size_t segments = 0;
  const char* window = "hann";

  nlohmann::json metadata() const {
    return {{"segment_length", segment_length}, {"overlap", overlap}, {"segments", segments}, {"window", window},
            {"detrend", "mean"}};
  }
};

/// Averaged Hann-windowed periodograms, scaled so the mean over bins equals
/// the variance for white input.
inline SpectrumEstimate welch_psd(const std::vector<double>& x, std::size_t segment_len = 1024, double overlap = 0.5) {
  if (segment_len < 2 || (segment_len & (segment_len - 1)) != 0)
    throw std::invalid_argument("welch_psd: segment length must be a power of two");
  if (x.size() < segment_len) throw std::invalid_argument("welch_psd: signal shorter than one segment");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("welch_psd: overlap must be in [0,1)");
  const std::size_t L = segment_len;
  const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(L) * (1.0 - overlap))));
  std::vector<double> w(L);
  double wss = 0.0;
  for (std::size_t k = 0; k < L; ++k) {
    // symmetric Hann, so a reversed segment has the same magnitude spectrum
    w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(L - 1));
    wss += w[k] * w[k];
  }
  Eigen::FFT<double> fft;
  std::vector<double> seg(L);
  std::vector<std::complex<double>> X;
  SpectrumEstimate est;
  est.segment_length = L;
  est.overlap = overlap;
  est.power.assign(L / 2 + 1, 0.0);
  for (std::size_t start = 0; start + L <= x.size(); start += step) {
    double m = 0.0;
    for (std::size_t k = 0; k < L; ++k) m += x[start + k];
    m /= static_cast<double>(L);
    for (std::size_t k = 0; k < L; ++k) seg[k] = (x[start + k] - m) * w[k];
    fft.fwd(X, seg);
    for (std::size_t k = 0; k <= L / 2; ++k) est.power[k] += std::norm(X[k]) / wss;
    ++est.segments;
  }
  for (double& p : est.power) p /= static_cast<double>(est.segments);
  for (std::size_t k = 0; k <= L / 2; ++k) est.frequency.push_back(std::numbers::pi * static_cast<double>(k) / static_cast<double>(L / 2));
  return est;
}

inline SpectrumEstimate welch_psd(const Signal& s, std::size_t segment_len = 1024, double overlap = 0.5) {
  return welch_psd(s.samples(), segment_len, overlap);
}

/// Geometric over arithmetic mean of the bins.  `skip_dc` drops bin 0, which
/// the per-segment mean removal empties.
inline double spectral_flatness(const std::vector<double>& power, bool skip_dc = false) {
  const std::size_t from = skip_dc ? 1 : 0;
  if (power.size() <= from) throw std::invalid_argument("spectral_flatness: no bins");
  double ls = 0.0, s = 0.0;
  for (std::size_t k = from; k < power.size(); ++k) {
    double p = std::max(power[k], 1e-300);
    ls += std::log(p);
    s += p;
  }
  const double n = static_cast<double>(power.size() - from);
  return std::exp(ls / n) / (s / n);
}

inline double spectral_flatness(const SpectrumEstimate& e) { return spectral_flatness(e.power, true); }

inline void write_spectrum_csv(std::ostream& os, const SpectrumEstimate& e) {
  os << "frequency,power\n";
  for (std::size_t k = 0; k < e.power.size(); ++k)
    os << detail::format_double(e.frequency[k]) << ',' << detail::format_double(e.power[k]) << '\n';
}

// ---- convergence --------------------------------------------------------------

inline constexpr long kNeverConverged = -1;

/// First block after which every tracked value stays within tol_fraction of
/// its final value.  `trajectory[n]` holds all tracked values at block n.
/// Returns kNeverConverged when only the final block qualifies.
inline long convergence_report(const std::vector<std::vector<double>>& trajectory, double tol_fraction) {
  if (trajectory.size() < 100) throw std::invalid_argument("convergence_report: need at least 100 blocks");
  const auto& fin = trajectory.back();
  long first = static_cast<long>(trajectory.size()) - 1;
  for (long n = first; n >= 0; --n) {
    const auto& row = trajectory[static_cast<std::size_t>(n)];
    if (row.size() != fin.size()) return kNeverConverged;
    bool inside = true;
    for (std::size_t k = 0; k < fin.size(); ++k)
      if (!(std::abs(row[k] - fin[k]) <= tol_fraction * std::abs(fin[k]))) inside = false;
    if (!inside) break;
    first = n;
  }
  // agreeing only with itself is not convergence
  return first == static_cast<long>(trajectory.size()) - 1 ? kNeverConverged : first;
}

}  // namespace smwfb
