#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smwfb {

/// Pre-windowed scalar sequence x(0), x(1), ... with x(k) = 0 for k < 0.
class Signal {
public:
  Signal() = default;
  explicit Signal(std::vector<double> samples) : x_(std::move(samples)) {}

  double operator()(long k) const {
    if (k < 0) return 0.0;
    if (static_cast<std::size_t>(k) >= x_.size())
      throw std::out_of_range("Signal: index past end");
    return x_[static_cast<std::size_t>(k)];
  }

  void push_back(double v) { x_.push_back(v); }
  std::size_t size() const { return x_.size(); }
  bool empty() const { return x_.empty(); }
  const std::vector<double>& samples() const { return x_; }

  friend bool operator==(const Signal&, const Signal&) = default;

private:
  std::vector<double> x_;
};

/// The block sequence (v(M*k - j)) for k = first_block..n.
///
/// Entries whose sample index is negative are implicit leading zeros and are
/// not stored; `offset()` counts them so vectors of the same ambient length
/// stay aligned.
class DataVector {
public:
  DataVector(const Signal& s, int M, int delay, long n, long first_block = 1)
      : M_(M), delay_(delay), n_(n), first_(first_block) {
    if (M < 1 || delay < 0) throw std::invalid_argument("DataVector: bad M or delay");
    for (long k = first_block; k <= n; ++k) {
      long t = static_cast<long>(M) * k - delay;
      if (t < 0) ++offset_;
      else entries_.push_back(s(t));
    }
  }

  int M() const { return M_; }
  int delay() const { return delay_; }
  long block() const { return n_; }
  long first_block() const { return first_; }
  /// Ambient length, counting the implicit zeros.
  std::size_t size() const { return offset_ + entries_.size(); }
  std::size_t offset() const { return offset_; }
  const std::vector<double>& stored() const { return entries_; }

  double operator[](std::size_t j) const { return j < offset_ ? 0.0 : entries_[j - offset_]; }

  std::vector<double> dense() const {
    std::vector<double> v(offset_, 0.0);
    v.insert(v.end(), entries_.begin(), entries_.end());
    return v;
  }

private:
  int M_, delay_;
  long n_, first_;
  std::size_t offset_ = 0;
  std::vector<double> entries_;
};

/// Down-sampled, `i`-delayed view of `s` ending at block `n`.
inline DataVector make_data_vector(const Signal& s, int M, int i, long n, long first_block = 1) {
  if (i < 0) throw std::invalid_argument("make_data_vector: negative offset");
  return DataVector(s, M, i, n, first_block);
}

/// p stacked data vectors; row r ends at sample top_index - r.
struct DataMatrix {
  long top_index = 0;
  std::vector<DataVector> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t cols() const { return rows.empty() ? 0 : rows.front().size(); }
};

inline DataMatrix make_data_matrix(const Signal& s, int M, long top_index, int p, long first_block = 1) {
  if (p < 0) throw std::invalid_argument("make_data_matrix: negative row count");
  // top_index = M*n - i with 0 <= i < M
  long n = top_index >= 0 ? (top_index + M - 1) / M : -((-top_index) / M);
  int i = static_cast<int>(static_cast<long>(M) * n - top_index);
  DataMatrix X{top_index, {}};
  X.rows.reserve(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) X.rows.emplace_back(s, M, i + r, n, first_block);
  return X;
}

// ---- serialization --------------------------------------------------------

namespace detail {
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_csv(std::ostream& os, const Signal& s) {
  os << "x\n";
  for (double v : s.samples()) os << detail::format_double(v) << '\n';
}

inline Signal read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Signal s;
  if (line != "x") s.push_back(std::stod(line));  // tolerate headerless input
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    s.push_back(std::stod(line));
  }
  return s;
}

inline void write_binary(std::ostream& os, const Signal& s) {
  for (double v : s.samples()) {
    auto u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(u >> (8 * k));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

inline Signal read_binary(std::istream& is) {
  Signal s;
  unsigned char b[8];
  while (is.read(reinterpret_cast<char*>(b), 8)) {
    std::uint64_t u = 0;
    for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    s.push_back(std::bit_cast<double>(u));
  }
  if (is.gcount() != 0) throw std::runtime_error("read_binary: trailing partial sample");
  return s;
}

}  // namespace smwfb
