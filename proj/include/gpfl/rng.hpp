#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace gpfl {

// splitmix64 step; also used to derive independent seed streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic PRNG with hand-rolled distributions. All randomness in the
// simulator goes through this class so results are bit-identical across
// standard libraries (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // warm up so nearby seeds decorrelate
    splitmix64(state_);
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, one value per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Marsaglia-Tsang gamma with unit scale; alpha < 1 handled by boosting.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      double u = 1.0 - uniform();  // (0, 1]
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = 1.0 - uniform();
      double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::vector<double> dirichlet(double beta, std::size_t n) {
    std::vector<double> q(n);
    double total = 0.0;
    for (auto& v : q) {
      v = gamma(beta);
      total += v;
    }
    for (auto& v : q) v /= total;
    return q;
  }

  // [0, n), multiply-shift to avoid modulo bias
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Stable sub-seed so components (extractor/cov/gce/head/...) draw from
// independent streams regardless of construction order.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  std::uint64_t s = base ^ h;
  splitmix64(s);
  s ^= index * 0x9e3779b97f4a7c15ull;
  splitmix64(s);
  return s;
}

}  // namespace gpfl
