#include "geod/inversion.hpp"

#include <cmath>
#include <vector>

#include "geod/params.hpp"

namespace geod {

namespace {

Tensor feature_l1(const PerceptualPyramid& pyr, const Tensor& a,
                  const std::vector<Tensor>& target_feats) {
  std::vector<Tensor> fa = pyr.features(a);
  Tensor acc = Tensor::scalar(0.0);
  for (size_t l = 0; l < fa.size(); ++l) {
    acc = add(acc, mean(abs_t(sub(fa[l], target_feats[l]))));
  }
  return mul(acc, 1.0 / static_cast<double>(fa.size()));
}

}  // namespace

InversionResult invert(const Generator& gen, const Tensor& target, const Intrinsics& K,
                       const PerceptualPyramid* pyramid, const InversionConfig& cfg) {
  GEOD_CHECK(target.shape().size() == 3 && target.shape()[2] == 3,
             "inversion target must be [H,W,3]");
  GEOD_CHECK(cfg.steps >= 0 && cfg.lr > 0, "inversion needs steps >= 0 and lr > 0");

  ParameterStore inv;
  Tensor z = inv.create("inv.z", Tensor::zeros({1, gen.config().latent_dim}));
  Tensor yaw_t, pitch_t;
  if (cfg.optimize_pose) {
    yaw_t = inv.create("inv.yaw", Tensor::full({1, 1}, cfg.init_pose.yaw));
    pitch_t = inv.create("inv.pitch", Tensor::full({1, 1}, cfg.init_pose.pitch));
  }

  std::vector<Tensor> target_feats;
  Tensor target_const = target.detach();
  if (pyramid) {
    NoGradGuard ng;
    for (const Tensor& f : pyramid->features(target_const)) target_feats.push_back(f.detach());
  }

  Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Adam opt_pose(AdamConfig{cfg.pose_lr, 0.9, 0.999, 1e-8});
  InversionResult best;
  best.z = z.detach();
  best.pose = cfg.init_pose;
  best.loss = std::numeric_limits<double>::infinity();

  const int64_t evals = cfg.steps == 0 ? 1 : cfg.steps;
  for (int64_t it = 0; it < evals; ++it) {
    Tape::active().clear();
    RayGrid rays = cfg.optimize_pose ? make_rays(yaw_t, pitch_t, cfg.init_pose.radius, K)
                                     : make_rays(cfg.init_pose, K);
    RenderOutput ro = render_image(gen, z, rays, /*stratified_rng=*/nullptr);
    Tensor pixel = mean(abs_t(sub(ro.color, target_const)));
    Tensor loss = pixel;
    if (pyramid) loss = add(loss, mul(feature_l1(*pyramid, ro.color, target_feats),
                                      cfg.feature_weight));
    const double lv = loss.item();
    GEOD_CHECK(std::isfinite(lv), "non-finite inversion objective at step " << it);
    if (lv < best.loss) {
      best.loss = lv;
      best.pixel_l1 = pixel.item();
      best.best_step = it;
      best.z = z.detach();
      if (cfg.optimize_pose) {
        best.pose = Pose{yaw_t.item(), pitch_t.item(), cfg.init_pose.radius};
      }
    }
    if (cfg.steps == 0) break;
    GradMap grads = backward(loss);
    opt.step(inv, grads, {"inv.z"});
    if (cfg.optimize_pose) opt_pose.step(inv, grads, {"inv.yaw", "inv.pitch"});
  }
  Tape::active().clear();
  return best;
}

}  // namespace geod
