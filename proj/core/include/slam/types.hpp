#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace slam {

// All fitted probabilities are clamped into [kProbClamp, 1 - kProbClamp]
// before any log is taken.  Data generation is exempt so that noiseless
// (0/1) sanity datasets can be produced.
inline constexpr double kProbClamp = 1e-4;

// Sentinel for an unobserved response cell.
inline constexpr std::uint8_t kMissingCell = 0xFF;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

// Dense 0/1 matrix, one byte per entry, row major.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(int rows, int cols, std::uint8_t value = 0)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * cols, value) {
    if (rows < 0 || cols < 0) throw DimensionError("BitMatrix: negative shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& operator()(int i, int j) {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  std::uint8_t operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  std::uint8_t* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  const std::uint8_t* row(int i) const {
    return data_.data() + static_cast<std::size_t>(i) * cols_;
  }

  friend bool operator==(const BitMatrix& a, const BitMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  long long count_diff(const BitMatrix& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_)
      throw DimensionError("BitMatrix::count_diff: shape mismatch");
    long long n = 0;
    for (std::size_t s = 0; s < data_.size(); ++s) n += data_[s] != other.data_[s];
    return n;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> data_;
};

// Dense double matrix, row major.
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(int rows, int cols, double value = 0.0)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * cols, value) {
    if (rows < 0 || cols < 0) throw DimensionError("RealMatrix: negative shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  double operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  const double* row(int i) const {
    return data_.data() + static_cast<std::size_t>(i) * cols_;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// N x J response matrix over {0, 1, missing}.
class ResponseMatrix {
 public:
  ResponseMatrix() = default;
  ResponseMatrix(int rows, int cols, std::uint8_t value = 0)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * cols, value) {
    if (rows < 0 || cols < 0) throw DimensionError("ResponseMatrix: negative shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  std::uint8_t& operator()(int i, int j) {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  std::uint8_t operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  const std::uint8_t* row(int i) const {
    return data_.data() + static_cast<std::size_t>(i) * cols_;
  }
  std::uint8_t* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }

  bool observed(int i, int j) const { return (*this)(i, j) != kMissingCell; }

  bool has_missing() const {
    for (auto v : data_)
      if (v == kMissingCell) return true;
    return false;
  }

  long long n_observed() const {
    long long n = 0;
    for (auto v : data_) n += v != kMissingCell;
    return n;
  }

  friend bool operator==(const ResponseMatrix& a, const ResponseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> data_;
};

inline BitMatrix threshold_half(const RealMatrix& m) {
  BitMatrix out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) > 0.5 ? 1 : 0;
  return out;
}

}  // namespace slam
