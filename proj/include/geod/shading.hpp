#pragma once

#include "geod/tensor.hpp"

namespace geod {

// Point light at infinity plus ambient term. `dir` points from the surface
// toward the light and is expected to be unit length.
struct LightT {
  Tensor k_ambient;  // [1,1]
  Tensor k_diffuse;  // [1,1]
  Tensor dir;        // [1,3]
};

// albedo [H,W,3], normals [H,W,3] (unit) -> shaded image [H,W,3]:
//   I = albedo * (k_a + k_d * max(0, <n, l>))
// No clamp: callers keep k_a + k_d <= 1 when a [0,1] image is required.
Tensor lambertian_shade(const Tensor& albedo, const Tensor& normals, const LightT& light);

}  // namespace geod
