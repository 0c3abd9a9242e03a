#pragma once

#include "geod/camera.hpp"
#include "geod/tensor.hpp"

namespace geod {

struct WarpOptions {
  int fixed_point_iters = 4;
  double tolerance_px = 0.75;  // max reprojection residual for a valid pixel
  double min_z = 1e-4;         // destination-space z below this is invalid
};

struct WarpResult {
  Tensor image;  // [H,W,C] source values gathered at the matched pixels
  Tensor depth;  // [H,W] matched surface depth in the destination camera
  Tensor valid;  // [H,W,1] constant 0/1 mask (not differentiated)
};

// Forward-warps `src_image` from the source view into the destination view
// using the source depth map. Works in two passes: a non-differentiated
// z-buffered splat picks, per destination pixel, the source pixel whose
// reprojection wins (nearest surface), then a recorded fixed-point
// refinement s <- s + (q - reproject(s)) polishes the correspondence so the
// gather is differentiable wrt src_image values and src_depth (through the
// sampling coordinates). Destination pixels whose refined correspondence
// still misses by more than tolerance_px (disocclusions, out-of-frame) are
// masked out.
WarpResult reproject_warp(const Tensor& src_image, const Tensor& src_depth, const Pose& src_pose,
                          const Pose& dst_pose, const Intrinsics& K, const WarpOptions& opt = {});

}  // namespace geod
