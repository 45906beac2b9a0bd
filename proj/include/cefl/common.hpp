#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cefl {

// Error taxonomy. The CLI maps ConfigError -> exit 2 and SolverError -> exit 3;
// everything else is a plain bug.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConstraintError : std::runtime_error {
  explicit ConstraintError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InfeasibleLinkError : std::runtime_error {
  explicit InfeasibleLinkError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SetupError : std::runtime_error {
  explicit SetupError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EstimationError : std::runtime_error {
  explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

using Rng = std::mt19937_64;

// SplitMix64 step, used to derive statistically independent child seeds from a
// master seed plus stream tags (dpu id, round, purpose).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= a * 0x9e3779b97f4a7c15ULL + h;
  h = splitmix64(s);
  s ^= b * 0xc2b2ae3d27d4eb4fULL + h;
  h = splitmix64(s);
  s ^= c * 0x165667b19e3779f9ULL + h;
  return splitmix64(s);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
  return Rng(derive_seed(master, a, b, c));
}

// round-half-up, minimum 1; used for mini-batch sizes.
inline std::size_t round_half_up_min1(double x) {
  auto r = static_cast<long long>(x + 0.5);
  return static_cast<std::size_t>(r < 1 ? 1 : r);
}

inline bool is_finite(double x) { return std::isfinite(x); }

}  // namespace cefl
