#pragma once

#include <string>

#include "geod/camera.hpp"
#include "geod/params.hpp"
#include "geod/tensor.hpp"

namespace geod {

struct GeneratorConfig {
  int latent_dim = 64;
  int hidden = 48;
  int layers = 4;            // sine trunk depth
  double first_omega = 15.0; // frequency multiplier on the first sine layer
  double coord_scale = 3.0;  // world coords are ~[-0.35, 0.35]; scale toward [-1,1]
  int n_ray_samples = 12;
  double near = 0.8, far = 1.2;
  bool renormalize_depth = false;  // depth / max(alpha, 1e-4) when set
};

// Latent-conditioned radiance field: a sine MLP whose per-layer gain/shift
// come from a mapping network on z, a softplus density head on position
// features, and a view-dependent sigmoid color head.
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, ParameterStore& store, Rng& init_rng,
            std::string prefix = "gen.");
  // Attach to parameters that already exist in the store (checkpoint load).
  Generator(const GeneratorConfig& cfg, ParameterStore& store, std::string prefix = "gen.");

  struct Field {
    Tensor sigma;  // [N,1] >= 0
    Tensor color;  // [N,3] in (0,1)
  };
  // positions [N,3] world, view_dirs [N,3] unit, z [1,latent_dim]
  Field field(const Tensor& positions, const Tensor& view_dirs, const Tensor& z) const;

  const GeneratorConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

 private:
  Tensor p(const std::string& name) const { return store_->get(prefix_ + name); }
  GeneratorConfig cfg_;
  ParameterStore* store_;
  std::string prefix_;
};

// Alpha compositing of per-ray samples:
//   T_i = exp(-sum_{j<i} sigma_j delta_j),  w_i = T_i (1 - exp(-sigma_i delta_i)),
//   color = sum_i w_i c_i,  depth = sum_i w_i z_i,  alpha = sum_i w_i.
// No renormalization unless asked: empty space (sigma == 0) gives exactly
// zero color/depth/alpha.
struct Composited {
  Tensor color;  // [R,3]
  Tensor depth;  // [R]
  Tensor alpha;  // [R]
};
Composited composite_rays(const Tensor& sigma /*[R,S]*/, const Tensor& color /*[R,S,3]*/,
                          const Tensor& delta /*[R,S]*/, const Tensor& zvals /*[R,S]*/,
                          bool renormalize_depth = false);

struct RenderOutput {
  Tensor color;  // [H,W,3]
  Tensor depth;  // [H,W]
  Tensor alpha;  // [H,W]
};

// Marches every ray of `rays` with S z-depth samples on [near, far].
// Stratified jitter draws one uniform per (ray, sample) from `rng`;
// deterministic mode (rng == nullptr) uses midpoints. Color and depth share
// the same samples and weights. Differentiable wrt generator parameters, z,
// and the pose scalars captured inside `rays`.
RenderOutput render_image(const Generator& gen, const Tensor& z, const RayGrid& rays,
                          Rng* stratified_rng);

// Central differences of camera-space points lifted from a depth map; border
// pixels use one-sided differences. Constant depth maps to exactly (0,0,-1).
Tensor normal_from_depth(const Tensor& depth /*[H,W]*/, const Intrinsics& K);

}  // namespace geod
