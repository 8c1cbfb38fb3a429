#include "core/rng.hpp"

#include <cmath>

namespace papercut {

Eigen::Vector3d Rng::unit_vector() {
  double z = uniform(-1.0, 1.0);
  double phi = uniform(0.0, 2.0 * M_PI);
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

uint64_t derive_seed(uint64_t master, uint64_t stream) {
  Rng mix(master ^ (0xd1342543de82ef95ull * (stream + 1)));
  mix.next_u64();
  return mix.next_u64();
}

}  // namespace papercut
