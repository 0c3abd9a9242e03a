#pragma once

#include <cstdint>

#include "geod/camera.hpp"
#include "geod/discriminator.hpp"
#include "geod/generator.hpp"

namespace geod {

struct InversionConfig {
  int64_t steps = 300;
  double lr = 0.05;
  bool optimize_pose = false;  // also fit yaw/pitch (radius stays fixed)
  double pose_lr = 0.01;       // radians are touchier than latent units
  double feature_weight = 0.5;
  Pose init_pose{};  // the fixed camera when optimize_pose is false
};

struct InversionResult {
  Tensor z;     // [1, latent_dim], best objective seen
  Pose pose;    // best (== init_pose when the pose is fixed)
  double loss = 0;      // best total objective
  double pixel_l1 = 0;  // pixel term at that step
  int64_t best_step = 0;
};

// Fits a latent (and optionally the viewpoint) so the generator reproduces
// `target`: pixel L1 plus feature_weight * frozen-feature L1, Adam from
// z = 0, keeping the best iterate rather than the last. steps == 0 just
// scores the initialization. `pyramid` may be null to drop the feature term.
InversionResult invert(const Generator& gen, const Tensor& target, const Intrinsics& K,
                       const PerceptualPyramid* pyramid, const InversionConfig& cfg);

}  // namespace geod
