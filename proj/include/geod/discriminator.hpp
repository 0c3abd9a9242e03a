#pragma once

#include <string>
#include <vector>

#include "geod/camera.hpp"
#include "geod/params.hpp"
#include "geod/shading.hpp"
#include "geod/tensor.hpp"

namespace geod {

struct DiscriminatorConfig {
  int resolution = 32;     // must be a multiple of 8 (three stride-2 stages)
  int base_channels = 16;  // trunk widths F, 2F, 4F, 4F
  double d_min = 0.88, d_max = 1.12;  // depth decoder range
  double conf_floor = 0.01;           // confidences are softplus(x) + floor
  double light_xy_bound = 0.8;        // lateral light component bound (pre-normalization)
  double yaw_bound = 0.6;             // predicted viewpoint ranges
  double pitch_bound = 0.31;
  // When set, the geometry branch runs its own encoder instead of sharing
  // the domain trunk (used when the branch is pretrained or frozen).
  bool separate_geometry_encoder = false;
};

// Everything the geometry branch reads out of one image. Normals are derived
// from the predicted depth, so depth and normals can never disagree. The two
// reconstructions re-shade the prediction: `recon` in the predicted view,
// `recon_flip` through a mirrored world (flipped depth/albedo, x-negated
// light, negated yaw) flipped back so it is directly comparable to the
// input image.
struct GeometryPrediction {
  Tensor depth;   // [H,W] in (d_min, d_max)
  Tensor normal;  // [H,W,3] unit, camera space
  Tensor albedo;  // [H,W,3] in (0,1)
  LightT light;   // world space; dir z > 0
  Tensor yaw, pitch;  // [1,1] orbit viewpoint
  Tensor conf_pixel, conf_flip, conf_percep, conf_percep_flip;  // [H,W,1] > 0
  Tensor recon;       // [H,W,3]
  Tensor recon_flip;  // [H,W,3]
};

class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, ParameterStore& store, Rng& init_rng,
                std::string prefix = "disc.");
  // Attach to parameters that already exist in the store (checkpoint load).
  Discriminator(const DiscriminatorConfig& cfg, ParameterStore& store,
                std::string prefix = "disc.");

  // Real/fake head; differentiable wrt the image, closed under the
  // double-backward subset so the gradient penalty can reach it.
  Tensor domain_logit(const Tensor& image_hwc) const;

  // Geometry branch: depth/albedo/light/viewpoint/confidences plus the two
  // shaded reconstructions. K supplies the pinhole used to lift depth into
  // normals.
  GeometryPrediction geometry(const Tensor& image_hwc, const Intrinsics& K) const;

  const DiscriminatorConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

 private:
  Tensor p(const std::string& name) const { return store_->get(prefix_ + name); }
  Tensor encode(const Tensor& chw, const std::string& enc) const;
  void create_encoder(Rng& rng, const std::string& enc);

  DiscriminatorConfig cfg_;
  ParameterStore* store_;
  std::string prefix_;
};

// Three stride-2 stages of frozen random convolutions. The parameters live
// in the store (so checkpoints reproduce the feature space) but belong to
// no optimizer prefix, so they never train.
class PerceptualPyramid {
 public:
  PerceptualPyramid(ParameterStore& store, Rng& init_rng, std::string prefix = "percep.");
  PerceptualPyramid(ParameterStore& store, std::string prefix = "percep.");

  // image [H,W,3] -> features at strides 2, 4, 8 (each [C_l, H/2^l, W/2^l])
  std::vector<Tensor> features(const Tensor& image_hwc) const;
  static constexpr int kLevels = 3;

 private:
  Tensor p(const std::string& name) const { return store_->get(prefix_ + name); }
  ParameterStore* store_;
  std::string prefix_;
};

}  // namespace geod
