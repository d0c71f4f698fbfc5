#pragma once

#include "fsinc/control.hpp"

namespace fsinc::benchmark {

inline Domain benchmark_domain() { return make_domain(Shape::disk(1.0), Shape::disk(0.2), AnnularSector{}, 0.5); }

inline Mesh benchmark_mesh(int refine = 1) { return annulus_mesh(0.2, 1.0, 48 * refine, 12 * refine); }

inline Mesh coarse_mesh() { return annulus_mesh(0.2, 1.0, 24, 6); }

inline Vec scaled_smooth_state(const DiscreteOperator& op, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Vec z = smooth_random_state(op, rng);
  return z * (scale / h_norm(op, z));
}

}  // namespace fsinc::benchmark
