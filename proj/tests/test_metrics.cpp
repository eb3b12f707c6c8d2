#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <smwfb/filter.hpp>
#include <smwfb/lattice.hpp>
#include <smwfb/metrics.hpp>

using namespace smwfb;

namespace {

// Identity bank: channel i carries x(Mn - i).
std::vector<ChannelOutputs> polyphase(const Signal& x, int M) {
  std::vector<ChannelOutputs> out;
  for (long n = 0; M * n < static_cast<long>(x.size()); ++n) {
    ChannelOutputs o{n, std::vector<double>(static_cast<std::size_t>(M))};
    for (int i = 0; i < M; ++i) o.e[static_cast<std::size_t>(i)] = x(M * n - i);
    out.push_back(o);
  }
  return out;
}

}  // namespace

TEST(CodingGain, EqualVariancesGiveZeroDb) {
  // period-4 pattern: each polyphase branch alternates +-1, as does the input
  std::vector<double> v;
  for (int k = 0; k < 2 * 1000 + 1; ++k) v.push_back((k / 2) % 2 ? -1.0 : 1.0);
  Signal x(v);
  auto out = polyphase(x, 2);
  out.pop_back();  // keep an even number of retained blocks
  auto rep = coding_gain(x, out, 0.2);
  EXPECT_NEAR(rep.channel_variances[0], rep.input_variance, 1e-12);
  EXPECT_NEAR(rep.channel_variances[1], rep.input_variance, 1e-12);
  EXPECT_NEAR(rep.gain_db, 0.0, 1e-10);
  EXPECT_FALSE(rep.infinite);
  EXPECT_EQ(rep.blocks_discarded, 200u);
}

TEST(CodingGain, ZeroChannelVarianceIsFlagged) {
  Signal x = draw_excitation({Gaussian{}, 1}, 2 * 300 + 1);
  auto out = polyphase(x, 2);
  for (auto& o : out) o.e[1] = 0.0;
  auto rep = coding_gain(x, out);
  EXPECT_TRUE(rep.infinite);
  EXPECT_TRUE(std::isinf(rep.to_json()["gain_db"].get<double>()));
}

TEST(CodingGain, NeedsRetainedBlocks) {
  Signal x = draw_excitation({Gaussian{}, 2}, 2 * 100 + 1);
  EXPECT_THROW(coding_gain(x, polyphase(x, 2), 0.2), std::invalid_argument);
  EXPECT_NO_THROW(coding_gain(x, polyphase(x, 2), 0.0));
}

TEST(CodingGain, ScaleInvariant) {
  Signal x = generate_ar(ArModel::from_poles(0.9, 1.0), {Gaussian{}, 3}, 4 * 3000 + 1);
  const double g = coding_gain(x, whiten(WhitenerConfig{4, 4}, x.samples())).gain_db;
  for (double alpha : {1e-3, 0.5, -3.0, 1e4}) {
    std::vector<double> y = x.samples();
    for (double& v : y) v *= alpha;
    Signal sy(y);
    EXPECT_NEAR(coding_gain(sy, whiten(WhitenerConfig{4, 4}, y)).gain_db, g, 1e-10) << alpha;
  }
}

TEST(CodingGain, WhiteInputHasNoGain) {
  for (int M : {2, 3, 4})
    for (int N : {1, 4, 8}) {
      Signal x = draw_excitation({Gaussian{}, static_cast<std::uint64_t>(10 * M + N)}, static_cast<std::size_t>(M * 5000 + 1));
      auto rep = coding_gain(x, whiten(WhitenerConfig{M, N}, x.samples()));
      EXPECT_LE(rep.gain_db, 0.5) << M << ' ' << N;
    }
}

TEST(AmGm, Examples) {
  EXPECT_NEAR(am_gm_report({2.0, 2.0, 2.0}).ratio, 1.0, 1e-15);
  auto r = am_gm_report({1.0, 4.0});
  EXPECT_NEAR(r.arith_mean, 2.5, 1e-15);
  EXPECT_NEAR(r.geo_mean, 2.0, 1e-15);
  EXPECT_NEAR(r.ratio, 1.25, 1e-15);
  EXPECT_THROW(am_gm_report({1.0}), std::invalid_argument);
}

TEST(AmGm, RatioAtLeastOne) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(2 + t % 6);
    for (double& x : v) x = 0.01 + rng.exponential(1.0);
    EXPECT_GT(am_gm_report(v).ratio, 1.0);
  }
}

TEST(Welch, WhiteNoiseIsFlat) {
  Signal x = draw_excitation({Gaussian{}, 5}, 1 << 17);
  auto p = welch_psd(x);
  EXPECT_NEAR(mean(p.power), 1.0, 0.05);
  auto [lo, hi] = std::minmax_element(p.power.begin() + 1, p.power.end() - 1);
  EXPECT_LE(*hi / *lo, 2.0);
  EXPECT_EQ(p.power.size(), 513u);
  EXPECT_NEAR(p.frequency.back(), std::numbers::pi, 1e-15);
  EXPECT_GT(spectral_flatness(p), 0.99);
}

TEST(Welch, CosineHasOneDominantBin) {
  std::vector<double> v(8192);
  for (std::size_t t = 0; t < v.size(); ++t) v[t] = std::cos(std::numbers::pi / 4 * static_cast<double>(t));
  auto p = welch_psd(v, 1024);
  const auto peak = static_cast<std::size_t>(std::max_element(p.power.begin(), p.power.end()) - p.power.begin());
  EXPECT_EQ(peak, 128u);
  double rest = 0.0;
  for (std::size_t k = 0; k < p.power.size(); ++k)
    if (k + 1 < peak || k > peak + 1) rest = std::max(rest, p.power[k]);
  EXPECT_LT(rest, 1e-6 * p.power[peak]);
}

TEST(Welch, ArPeakAtPoleAngle) {
  const double th = std::numbers::pi / 3;
  Signal x = generate_ar(ArModel::from_poles(0.975, th), {Gaussian{}, 6}, 1 << 16);
  auto p = welch_psd(x);
  const auto peak = static_cast<std::size_t>(std::max_element(p.power.begin(), p.power.end()) - p.power.begin());
  const double bin = std::numbers::pi / 512;
  EXPECT_LE(std::abs(p.frequency[peak] - th), bin);
}

TEST(Welch, TimeReversalAtFullLength) {
  Signal x = draw_excitation({Gaussian{}, 7}, 256);
  std::vector<double> r(x.samples().rbegin(), x.samples().rend());
  auto a = welch_psd(x.samples(), 256), b = welch_psd(r, 256);
  for (std::size_t k = 0; k < a.power.size(); ++k) EXPECT_NEAR(a.power[k], b.power[k], 1e-12 * (1.0 + a.power[k]));
}

TEST(Welch, Errors) {
  std::vector<double> short_signal(100, 1.0);
  EXPECT_THROW(welch_psd(short_signal, 128), std::invalid_argument);
  EXPECT_THROW(welch_psd(std::vector<double>(4096, 1.0), 1000), std::invalid_argument);
  EXPECT_THROW(welch_psd(std::vector<double>(4096, 1.0), 1024, 1.0), std::invalid_argument);
}

TEST(Flatness, Examples) {
  EXPECT_NEAR(spectral_flatness(std::vector<double>(64, 3.0)), 1.0, 1e-12);
  EXPECT_LT(spectral_flatness(std::vector<double>{1.0, 0.0}), 1e-100);
}

TEST(Flatness, TestSignalOneIsWhitened) {
  Signal x = test_signal(1, 1, 1 << 16);
  auto out = whiten(WhitenerConfig{2, 32}, x.samples());
  const double fin = spectral_flatness(welch_psd(x));
  const double fout = spectral_flatness(welch_psd(channel_series(out, 0, out.size() / 5)));
  EXPECT_GT(fout, fin);
  EXPECT_GE(fout, 0.9);
}

TEST(Autocorrelation, WhiteAndPeriodic) {
  Signal x = draw_excitation({Gaussian{}, 8}, 50000);
  auto r = autocorrelation(x.samples(), 5);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  for (int l = 1; l <= 5; ++l) EXPECT_LE(std::abs(r[static_cast<std::size_t>(l)]), 0.02);
  std::vector<double> alt;
  for (int k = 0; k < 1000; ++k) alt.push_back(k % 2 ? -1.0 : 1.0);
  EXPECT_NEAR(autocorrelation(alt, 1)[1], -1.0, 0.01);
}

TEST(Convergence, Examples) {
  std::vector<std::vector<double>> constant(120, {2.0, -1.0});
  EXPECT_EQ(convergence_report(constant, 0.01), 0);
  std::vector<std::vector<double>> step(120, {0.5});
  step[0] = {1.0};
  EXPECT_EQ(convergence_report(step, 0.01), 1);
  std::vector<std::vector<double>> drift;
  for (int n = 0; n < 150; ++n) drift.push_back({1.0 + 0.5 * n});
  EXPECT_EQ(convergence_report(drift, 0.001), kNeverConverged);
  EXPECT_THROW(convergence_report(std::vector<std::vector<double>>(99, {1.0}), 0.05), std::invalid_argument);
}
