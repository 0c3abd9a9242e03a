#include "geod/shading.hpp"

namespace geod {

Tensor lambertian_shade(const Tensor& albedo, const Tensor& normals, const LightT& light) {
  GEOD_CHECK(albedo.ndim() == 3 && albedo.dim(2) == 3, "lambertian_shade: albedo must be [H,W,3]");
  GEOD_CHECK(same_shape(albedo.shape(), normals.shape()),
             "lambertian_shade: albedo " << shape_str(albedo.shape()) << " vs normals "
                                         << shape_str(normals.shape()));
  int h = albedo.dim(0), w = albedo.dim(1);
  Shape full = {h, w, 3};
  Tensor l = broadcast_to(reshape(light.dir, {1, 1, 3}), full);
  Tensor ndotl = sum(mul(normals, l), {2}, true);                      // [H,W,1]
  Tensor diffuse = mul(max_const(ndotl, 0.0), broadcast_to(reshape(light.k_diffuse, {1, 1, 1}), {h, w, 1}));
  Tensor shade = add(diffuse, broadcast_to(reshape(light.k_ambient, {1, 1, 1}), {h, w, 1}));
  return mul(albedo, broadcast_to(shade, full));
}

}  // namespace geod
