#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

namespace logfield {

struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t replica_index = 0;
  std::string stream_label = "main";
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t stream_key(const SeedSpec& s) {
  std::uint64_t h = splitmix64(s.master_seed);
  h = splitmix64(h ^ s.replica_index);
  return splitmix64(h ^ fnv1a64(s.stream_label));
}

// mt19937_64 output is fixed by the standard; normals are produced here
// (Box-Muller) rather than by std::normal_distribution, whose algorithm
// is implementation-defined.
class Stream {
 public:
  explicit Stream(const SeedSpec& s) : eng_(stream_key(s)) {}
  explicit Stream(std::uint64_t key) : eng_(key) {}

  // uniform on [0,1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  // uniform on (0,1]
  double uniform_pos() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    double th = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  void fill_normal(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
  }

  std::uint64_t bits() { return eng_(); }

  std::uint64_t below(std::uint64_t n) {
    // rejection to avoid modulo bias
    std::uint64_t lim = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    for (;;) {
      std::uint64_t x = eng_();
      if (x < lim) return x % n;
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace logfield
