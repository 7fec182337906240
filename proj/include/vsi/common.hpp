#pragma once

// Shared basics: matrix aliases, error taxonomy, a small deterministic RNG
// with named sub-stream derivation, and a few numeric helpers used across
// the library.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vsi {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IVec = Eigen::VectorXi;

// Error taxonomy, mapped onto CLI exit codes 1/2/3.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//============================ deterministic RNG ============================

namespace detail {

// splitmix64 finalizer; full-period mixer used both as the generator step
// and to derive sub-stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

/**
 * Deterministic pseudo-random stream (splitmix64). Every random decision in
 * the library flows from one root seed through named derivation, so that
 * adding or reordering consumers of one stream never perturbs another.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : root_(seed), state_(seed) {}

  // Independent stream identified by (root seed, component name).
  Rng derive(std::string_view name) const {
    return Rng(detail::mix64(root_ ^ detail::fnv1a64(name)));
  }
  // Indexed family of streams, e.g. one per subject or per epoch.
  Rng derive(std::string_view name, std::uint64_t index) const {
    return Rng(detail::mix64(detail::mix64(root_ ^ detail::fnv1a64(name)) + index));
  }

  std::uint64_t next_u64() { return detail::mix64(state_++); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]; safe as a log() argument.
  double uniform_pos() { return 1.0 - uniform01(); }

  // Unbiased integer in [0, n) (Lemire's method with rejection).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw numeric_error("uniform_int: n must be positive");
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t floor = (0 - n) % n;
      while (lo < floor) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; stateless across calls (no cached spare),
  // keeping draw sequences independent of call parity.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  Mat normal_mat(Eigen::Index rows, Eigen::Index cols) {
    Mat out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal();
    return out;
  }

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(uniform_int(static_cast<std::uint64_t>(i) + 1));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
  }

  std::uint64_t root_seed() const { return root_; }

 private:
  std::uint64_t root_;
  std::uint64_t state_;
};

//============================ numeric helpers ==============================

inline double logsumexp(const Vec& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/**
 * Nearest-rank quantile: the ceil(p*n)-th order statistic (1-based) of a
 * sorted sample. p in (0,1]; p values at or below 1/n give the minimum.
 */
inline double quantile_nearest_rank(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw data_error("quantile of empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::ptrdiff_t>(std::ceil(p * n));
  if (rank < 1) rank = 1;
  if (rank > static_cast<std::ptrdiff_t>(sorted.size()))
    rank = static_cast<std::ptrdiff_t>(sorted.size());
  return sorted[static_cast<std::size_t>(rank - 1)];
}

inline void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw numeric_error(std::string("non-finite value in ") + what);
}

}  // namespace vsi
