#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace ahkf {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream keyed by (seed, replicate, label, member, step).
/// Streams with distinct keys are independent; the same key always yields the
/// same sequence regardless of thread schedule.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t replicate, std::string_view label,
            std::uint64_t member = 0, std::uint64_t step = 0) {
    std::uint64_t k = seed;
    k = detail::splitmix64(k ^ detail::splitmix64(replicate));
    k = detail::splitmix64(k ^ detail::fnv1a(label));
    k = detail::splitmix64(k ^ detail::splitmix64(member));
    k = detail::splitmix64(k ^ detail::splitmix64(step));
    state_ = k;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  /// Uniform in (0, 1); never returns 0 so logs are safe.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller, with the spare value cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Factory carrying the (seed, replicate) context so that modules can split
/// named per-member, per-step streams without sharing state.
struct StreamFactory {
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;

  RngStream make(std::string_view label, std::uint64_t member = 0,
                 std::uint64_t step = 0) const {
    return RngStream(seed, replicate, label, member, step);
  }
};

}  // namespace ahkf
