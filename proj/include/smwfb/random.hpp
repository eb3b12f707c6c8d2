#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>

#include "signal.hpp"

namespace smwfb {

// std::mt19937_64 output is fixed by the standard; the distribution objects
// are not, so the transforms below are written out to keep runs bit-exact.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Standard normal by the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  /// Marsaglia-Tsang; shape < 1 handled by the usual U^(1/shape) boost.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u > 0 ? u : 0x1.0p-53, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double z, v;
      do {
        z = normal();
        v = 1.0 + c * z;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * z * z * z * z) return d * v * scale;
      if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Gaussian { double mean = 0.0, variance = 1.0; };
struct Uniform { double lo = -1.0, hi = 1.0; };
struct Exponential { double mean = 1.0; };
struct Gamma { double shape = 1.0, scale = 1.0; };

struct ExcitationSpec {
  using Distribution = std::variant<Gaussian, Uniform, Exponential, Gamma>;
  Distribution distribution = Gaussian{};
  std::uint64_t seed = 0;

  void validate() const {
    std::visit(
        [](const auto& d) {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, Gaussian>) {
            if (!(d.variance > 0)) throw std::invalid_argument("gaussian: variance must be positive");
          } else if constexpr (std::is_same_v<D, Uniform>) {
            if (!(d.hi > d.lo)) throw std::invalid_argument("uniform: need hi > lo");
          } else if constexpr (std::is_same_v<D, Exponential>) {
            if (!(d.mean > 0)) throw std::invalid_argument("exponential: mean must be positive");
          } else {
            if (!(d.shape > 0 && d.scale > 0)) throw std::invalid_argument("gamma: shape and scale must be positive");
          }
        },
        distribution);
  }

  std::string name() const {
    static const char* names[] = {"gaussian", "uniform", "exponential", "gamma"};
    return names[distribution.index()];
  }
};

inline Signal draw_excitation(const ExcitationSpec& spec, std::size_t length) {
  if (length < 1) throw std::invalid_argument("draw_excitation: length must be >= 1");
  spec.validate();
  Rng rng(spec.seed);
  std::vector<double> x(length);
  std::visit(
      [&](const auto& d) {
        using D = std::decay_t<decltype(d)>;
        for (auto& v : x) {
          if constexpr (std::is_same_v<D, Gaussian>) v = d.mean + std::sqrt(d.variance) * rng.normal();
          else if constexpr (std::is_same_v<D, Uniform>) v = d.lo + (d.hi - d.lo) * rng.uniform();
          else if constexpr (std::is_same_v<D, Exponential>) v = rng.exponential(d.mean);
          else v = rng.gamma(d.shape, d.scale);
        }
      },
      spec.distribution);
  return Signal(std::move(x));
}

}  // namespace smwfb
