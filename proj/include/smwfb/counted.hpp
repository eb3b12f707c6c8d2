#pragma once

#include <cstdint>

namespace smwfb {

struct OpCounts {
  std::uint64_t adds = 0;
  std::uint64_t mults = 0;

  friend OpCounts operator-(OpCounts a, OpCounts b) { return {a.adds - b.adds, a.mults - b.mults}; }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// A double that tallies its arithmetic. Subtraction counts as an addition
/// and division as a multiplication; comparisons are free.
class Counted {
public:
  Counted() = default;
  Counted(double v) : v_(v) {}  // NOLINT: implicit on purpose, literals mix freely

  double value() const { return v_; }

  static OpCounts& tally() {
    thread_local OpCounts c;
    return c;
  }

  friend Counted operator+(Counted a, Counted b) { ++tally().adds; return a.v_ + b.v_; }
  friend Counted operator-(Counted a, Counted b) { ++tally().adds; return a.v_ - b.v_; }
  friend Counted operator*(Counted a, Counted b) { ++tally().mults; return a.v_ * b.v_; }
  friend Counted operator/(Counted a, Counted b) { ++tally().mults; return a.v_ / b.v_; }
  Counted operator-() const { return -v_; }
  Counted& operator+=(Counted o) { return *this = *this + o; }
  Counted& operator-=(Counted o) { return *this = *this - o; }
  Counted& operator*=(Counted o) { return *this = *this * o; }

  friend bool operator<(Counted a, Counted b) { return a.v_ < b.v_; }
  friend bool operator>(Counted a, Counted b) { return a.v_ > b.v_; }
  friend bool operator<=(Counted a, Counted b) { return a.v_ <= b.v_; }
  friend bool operator>=(Counted a, Counted b) { return a.v_ >= b.v_; }
  friend bool operator==(Counted a, Counted b) { return a.v_ == b.v_; }

private:
  double v_ = 0.0;
};

inline double value_of(double v) { return v; }
inline double value_of(Counted v) { return v.value(); }

}  // namespace smwfb
