#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

namespace lsfd {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/layout violations (channel mismatch, non-divisible dims, ...).
struct ShapeError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Numerically degenerate input, e.g. normalizing a (near-)zero tensor.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Malformed external data: PNG, checkpoint, manifest, CLI config.
struct FormatError : Error {
  using Error::Error;
};

// API contract violations, e.g. backward on a non-scalar.
struct ContractError : Error {
  using Error::Error;
};

// Bad runtime argument (region out of bounds, shave too large, ...).
struct ArgumentError : Error {
  using Error::Error;
};

// Deterministic RNG. The mt19937_64 bit stream is fully specified by the
// standard, and the manual double mapping below sidesteps the
// implementation-defined std::uniform_* distributions, so every stream is
// reproducible across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Independent stream keyed by (seed, a, b, c), e.g. (seed, epoch, batch).
  static Rng substream(uint64_t seed, uint64_t a, uint64_t b = 0,
                       uint64_t c = 0) {
    uint64_t h = mix(seed ^ 0x6c62272e07bb0142ULL);
    h = mix(h ^ mix(a));
    h = mix(h ^ mix(b));
    h = mix(h ^ mix(c));
    return Rng(h);
  }

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Uniform in [0, n). Fixed-point multiply keeps the mapping portable.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(
        (static_cast<unsigned __int128>(next_u64()) *
         static_cast<uint64_t>(n)) >>
        64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace lsfd
