#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "random.hpp"
#include "signal.hpp"

namespace smwfb {

/// Roots of c[0] + c[1] z^-1 + ... + c[n] z^-n in the z-plane.
inline std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& c) {
  std::size_t n = c.size();
  while (n > 1 && c[n - 1] == 0.0) --n;
  if (n <= 1) return {};
  if (c[0] == 0.0) throw std::invalid_argument("polynomial_roots: leading coefficient is zero");
  const int d = static_cast<int>(n - 1);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < d; ++k) C(0, k) = -c[static_cast<std::size_t>(k) + 1] / c[0];
  for (int k = 1; k < d; ++k) C(k, k - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  std::vector<std::complex<double>> r(es.eigenvalues().begin(), es.eigenvalues().end());
  return r;
}

inline double max_root_magnitude(const std::vector<double>& c) {
  double m = 0.0;
  for (auto z : polynomial_roots(c)) m = std::max(m, std::abs(z));
  return m;
}

/// y(t) = (sum_k b[k] x(t-k) - sum_{k>=1} a[k] y(t-k)) / a[0], zero initial state.
inline Signal apply_rational_filter(const Signal& input, const std::vector<double>& numerator,
                                    const std::vector<double>& denominator) {
  if (denominator.empty() || denominator[0] == 0.0)
    throw std::invalid_argument("apply_rational_filter: denominator[0] must be nonzero");
  if (max_root_magnitude(denominator) >= 1.0)
    throw std::invalid_argument("apply_rational_filter: unstable denominator");
  const auto& x = input.samples();
  std::vector<double> y(x.size(), 0.0);
  const double a0 = denominator[0];
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < numerator.size() && k <= t; ++k) acc += numerator[k] * x[t - k];
    for (std::size_t k = 1; k < denominator.size() && k <= t; ++k) acc -= denominator[k] * y[t - k];
    y[t] = acc / a0;
  }
  return Signal(std::move(y));
}

struct ArModel {
  std::vector<double> denominator{1.0};
  std::vector<double> numerator{1.0};

  /// Conjugate pole pair rho*exp(+-j*theta).
  static ArModel from_poles(double rho, double theta) {
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("ArModel: pole radius must be in [0,1)");
    return ArModel{{1.0, -2.0 * rho * std::cos(theta), rho * rho}, {1.0}};
  }

  void validate() const {
    if (max_root_magnitude(denominator) >= 1.0) throw std::invalid_argument("ArModel: unstable");
  }
};

/// Stationary variance of 1 / (1 - 2 rho cos(theta) z^-1 + rho^2 z^-2) driven by unit white noise.
inline double ar2_variance(double rho, double theta) {
  double a1 = -2.0 * rho * std::cos(theta), a2 = rho * rho;
  return (1.0 + a2) / ((1.0 - a2) * ((1.0 + a2) * (1.0 + a2) - a1 * a1));
}

inline Signal generate_ar(const ArModel& model, const ExcitationSpec& excitation, std::size_t length) {
  model.validate();
  return apply_rational_filter(draw_excitation(excitation, length), model.numerator, model.denominator);
}

/// The three colouring filters used for the whitening experiment, as z^-1 polynomials.
struct TestFilter {
  const char* name;
  std::vector<double> numerator;
  std::vector<double> denominator;
};

inline const std::vector<TestFilter>& test_filters() {
  static const std::vector<TestFilter> f{
      {"minimum_phase", {1.0, -0.8461, 0.9506}, {1.0}},
      {"maximum_phase", {0.0, 1.0, -1.2}, {1.0, -0.975, 0.9506}},
      {"mixed_phase", {0.0, 1.0, -2.95, 1.90}, {1.0, -1.7750, 1.7306, -0.7605}},
  };
  return f;
}

/// Excitation for whitening signal k = 1..9 (filter = (k-1)/3, distribution = (k-1)%3).
inline ExcitationSpec test_signal_excitation(int k, std::uint64_t seed) {
  if (k < 1 || k > 9) throw std::invalid_argument("test signal index must be 1..9");
  ExcitationSpec e;
  e.seed = seed;
  switch ((k - 1) % 3) {
    case 0: e.distribution = Gaussian{0.0, 1.0}; break;
    case 1: e.distribution = Uniform{-1.0, 1.0}; break;
    default: e.distribution = Exponential{1.5}; break;
  }
  return e;
}

inline Signal test_signal(int k, std::uint64_t seed, std::size_t length) {
  const auto& f = test_filters()[static_cast<std::size_t>((k - 1) / 3)];
  return apply_rational_filter(draw_excitation(test_signal_excitation(k, seed), length), f.numerator,
                               f.denominator);
}

}  // namespace smwfb
