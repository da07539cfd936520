#pragma once
// Deterministic random number utilities. A master seed is expanded into
// independent substreams by counter mixing, so that any consumer (a
// replication, a critical-value draw) can be generated in any order or on any
// thread and still reproduce the sequential results bit for bit.

#include <cmath>
#include <cstdint>
#include <random>

namespace condinf {

// SplitMix64 finalizer; strong avalanche, used to derive substream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (0x9e3779b97f4a7c15ULL + b));
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b) ^ (0xda942042e4dd58b5ULL + c));
}

// A seeded stream identified by (seed, stream). engine_at(counter) yields an
// independently seeded engine per counter value; child(id) derives a
// disjoint stream for a sub-task.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::mt19937_64 engine_at(std::uint64_t counter) const {
    return std::mt19937_64(mix64(seed, stream, counter));
  }
  RngStream child(std::uint64_t id) const { return RngStream{mix64(seed, stream), id}; }
};

// Gaussian sampler with an explicit Box-Muller transform so draws do not
// depend on the standard library's unspecified normal_distribution algorithm.
class NormalSampler {
 public:
  explicit NormalSampler(std::mt19937_64 engine) : eng_(std::move(engine)) {}
  NormalSampler(const RngStream& s, std::uint64_t counter) : eng_(s.engine_at(counter)) {}

  // Uniform on (0,1]; never returns 0 so log() below is safe.
  double uniform() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace condinf
