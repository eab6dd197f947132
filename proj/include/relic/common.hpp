#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace relic {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Input files or in-memory data violate a documented schema or invariant.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value or a degenerate geometric case.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// -log(sigmoid(x))
inline double neg_log_sigmoid(double x) { return softplus(-x); }

/// -log(1 - sigmoid(x))
inline double neg_log_one_minus_sigmoid(double x) { return softplus(x); }

double cosine(const Vector& a, const Vector& b);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path` on success.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results into per-index slots so
/// the outcome never depends on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// 64-bit FNV-1a, used for deriving stable per-string seeds.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace relic
