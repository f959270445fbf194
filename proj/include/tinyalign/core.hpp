#pragma once

// Shared primitives: error types, a small dense matrix, deterministic RNG
// and hashing. Kept dependency-free on purpose.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tinyalign {

inline constexpr std::string_view kVersion = "0.1.0";

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

// Input/output failure (missing file, unreadable stream).
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed data in an input file. `line` is 1-based, 0 when unknown.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what_arg, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what_arg
                   : what_arg),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Dimension or pairing mismatch between in-memory structures.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Numerical failure (non-finite loss, degenerate operand).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Row-major dense matrix of doubles. Sentence-sized, so no fancy storage.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return std::span<double>(data_.data() + r * cols_, cols_);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_.data() + r * cols_, cols_);
  }

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline double norm(std::span<const double> a) {
  return std::sqrt(dot(a, a));
}

// FNV-1a 64-bit. Used for OOV seeding and manifest file digests; not
// cryptographic.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// SplitMix64. The standard library engines are portable but the
// distributions are not; this keeps every random draw bit-reproducible
// across compilers.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

 private:
  std::uint64_t state_;
};

}  // namespace tinyalign
