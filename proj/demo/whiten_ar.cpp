// Whitens an AR(2) process with a four-channel bank and prints what changed.

#include <cmath>
#include <cstdio>
#include <numbers>

#include <smwfb/coefficients.hpp>
#include <smwfb/filter.hpp>
#include <smwfb/lattice.hpp>
#include <smwfb/metrics.hpp>

int main() {
  using namespace smwfb;
  const double theta = std::numbers::pi / 3;
  ExcitationSpec noise{Gaussian{0.0, 1.0}, 7};
  const Signal x = generate_ar(ArModel::from_poles(0.975, theta), noise, 1 << 15);

  const WhitenerConfig cfg{4, 8};
  FilterBankEstimator est(cfg);
  std::vector<ChannelOutputs> out;
  std::vector<double> blk(4, 0.0);
  blk.back() = x(0);
  out.push_back(est.push_block(blk));
  for (long t = 1; t + 4 <= static_cast<long>(x.size()); t += 4) {
    for (int j = 0; j < 4; ++j) blk[static_cast<std::size_t>(j)] = x(t + j);
    out.push_back(est.push_block(blk));
  }
  est.refresh_prefilter();

  const auto gain = coding_gain(x, out);
  std::printf("coding gain        %.3f dB (AR(2) bound %.3f dB)\n", gain.gain_db, 10 * std::log10(ar2_variance(0.975, theta)));
  std::printf("input flatness     %.3f\n", spectral_flatness(welch_psd(x)));
  for (int i = 0; i < 4; ++i) {
    const auto e = channel_series(out, i, out.size() / 5);
    std::printf("channel %d flatness %.3f  variance %.4f\n", i, spectral_flatness(welch_psd(e, 512)), variance(e));
  }

  const auto fb = assemble_direct_form(est.coefficients());
  std::printf("\nprefilter A and first block of H:\n");
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) std::printf(" %8.4f", fb.A(r, c));
    std::printf("   |");
    for (int c = 0; c < 4; ++c) std::printf(" %8.4f", fb.H[0](r, c));
    std::printf("\n");
  }
}
