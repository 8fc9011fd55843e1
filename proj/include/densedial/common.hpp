#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace densedial {

// All dense storage is row-major: index vectors, embedding tables and
// serialized blobs are laid out row by row, so a matrix row is a contiguous
// span that can be handed to the scoring kernel or written to disk directly.
template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using VectorF = Vector<float>;
using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (bad file contents, duplicate ids,
// unresolvable references). CLI maps this family to exit code 2.
struct DataError : Error {
  using Error::Error;
};

// Invalid configuration or parameter misuse (d=0, nprobe out of range).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem-level failures: missing file, unwritable path.
struct IoError : Error {
  using Error::Error;
};

// Distinct binary-format failures, required to be told apart by callers.
struct VersionError : DataError {
  using DataError::DataError;
};
struct TruncatedError : DataError {
  using DataError::DataError;
};
struct ShapeError : DataError {
  using DataError::DataError;
};

// Fixed-order dot product shared by every scoring path (flat scan, IVF
// buckets, LSH rescoring, pipeline rerank). The four-accumulator shape is
// fast enough to stay memory-bound on large scans while keeping one
// deterministic summation order, so identical float inputs produce
// bit-identical scores no matter which index kind computed them.
template <typename S>
inline S dot(const S* a, const S* b, Eigen::Index n) {
  S s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  Eigen::Index k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  S tail = 0;
  for (; k < n; ++k) tail += a[k] * b[k];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

template <typename S>
inline S dot(const Vector<S>& a, const Vector<S>& b) {
  if (a.size() != b.size())
    throw ShapeError("dot: dimension mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  return dot(a.data(), b.data(), a.size());
}

// Splitmix64 step; used to derive independent sub-seeds from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace densedial
