#pragma once

#include <cstdint>
#include <Eigen/Core>

namespace papercut {

// splitmix64 stream with explicit float mappings, so identical seeds give
// identical bytes on every platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1), 53-bit mantissa.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Uniform on the unit sphere.
  Eigen::Vector3d unit_vector();

  // In [0, n).
  uint64_t index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  uint64_t state_;
};

// Stable child-seed derivation; used to key per-episode streams off one
// master seed so parallel and serial generation produce identical bytes.
uint64_t derive_seed(uint64_t master, uint64_t stream);

}  // namespace papercut
