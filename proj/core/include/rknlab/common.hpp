// Shared numeric types, error categories and seeded RNG utilities.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rknlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Raised when a computation loses numerical validity (non-SPD covariance,
// singular innovation, diverging iteration).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a file cannot be decoded into the expected schema.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Gaussian generator with a pinned algorithm (mt19937_64 + Box-Muller) so
// that streams are reproducible independent of the standard library.
class GaussianRng {
 public:
  explicit GaussianRng(uint64_t seed) : eng_(seed) {}

  // Uniform draw in (0, 1].
  double uniform01() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Identifier of the pinned noise-generation algorithm, recorded in dataset
// headers so files are self-describing.
inline constexpr const char* kRngAlgorithmId = "mt19937_64-boxmuller-v1";

// Symmetric part of a square matrix; used after every covariance update.
inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Square root of a symmetric PSD matrix via eigendecomposition, with small
// negative eigenvalues (>= -1e-12 * scale) clamped to zero.
Matrix psd_sqrt(const Matrix& a);

// Throws NumericalError unless `a` is symmetric positive definite.
Eigen::LLT<Matrix> cholesky_or_throw(const Matrix& a, const std::string& what);

// Worker count: RKN_THREADS if set (>=1), otherwise hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, count) on up to `threads` workers. Callers write
// results into index-addressed slots and reduce afterwards in index order,
// so results do not depend on the thread count.
void parallel_for_indexed(int count, int threads, const std::function<void(int)>& fn);

// Strided variant exposing the worker index, for per-worker mutable scratch.
void parallel_for_workers(int count, int threads,
                          const std::function<void(int worker, int i)>& fn);

}  // namespace rknlab
