#include "geod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geod/config.hpp"
#include "geod/dataset.hpp"
#include "geod/discriminator.hpp"
#include "geod/generator.hpp"
#include "geod/inversion.hpp"
#include "geod/params.hpp"
#include "geod/warp.hpp"
#include "json.hpp"

namespace geod {

using nlohmann::json;

double median(std::vector<double> v) {
  GEOD_CHECK(!v.empty(), "median of nothing");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double side(const Tensor& pred_depth, const Tensor& gt_depth, const Tensor& mask) {
  GEOD_CHECK(pred_depth.shape() == gt_depth.shape() && pred_depth.shape() == mask.shape(),
             "side: depth/mask shapes disagree");
  const std::vector<double>& p = pred_depth.values();
  const std::vector<double>& g = gt_depth.values();
  const std::vector<double>& m = mask.values();
  std::vector<double> delta;
  delta.reserve(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    if (m[i] == 0.0) continue;
    GEOD_CHECK(p[i] > 0 && g[i] > 0, "side: non-positive depth inside the mask");
    delta.push_back(std::log(p[i]) - std::log(g[i]));
  }
  GEOD_CHECK(!delta.empty(), "side: empty mask");
  // Two passes: mean(delta^2) - mean(delta)^2 cancels catastrophically when
  // the shape is right but the scale is off, exactly the case that must read
  // as zero.
  double m1 = 0;
  for (double d : delta) m1 += d;
  m1 /= delta.size();
  double var = 0;
  for (double d : delta) var += (d - m1) * (d - m1);
  return std::sqrt(var / delta.size());
}

double reprojection_error(const Tensor& img_a, const Tensor& depth_a, const Pose& pose_a,
                          const Tensor& img_b, const Pose& pose_b, const Intrinsics& K,
                          double* valid_fraction) {
  NoGradGuard ng;
  WarpResult wr = reproject_warp(img_a, depth_a, pose_a, pose_b, K);
  const std::vector<double>& w = wr.image.values();
  const std::vector<double>& b = img_b.values();
  const std::vector<double>& v = wr.valid.values();
  GEOD_CHECK(w.size() == b.size(), "reprojection_error: image shapes disagree");
  const int C = img_b.shape()[2];
  double err = 0;
  int64_t n = 0;
  for (size_t px = 0; px < v.size(); ++px) {
    if (v[px] == 0.0) continue;
    double e = 0;
    for (int c = 0; c < C; ++c) e += std::fabs(w[px * C + c] - b[px * C + c]);
    err += e / C;
    ++n;
  }
  if (valid_fraction) *valid_fraction = static_cast<double>(n) / v.size();
  GEOD_CHECK(n > 0, "reprojection_error: warp produced no valid pixels");
  return err / n;
}

namespace {

// Independent eval RNG streams (images, latents, poses) off one seed.
uint64_t substream(uint64_t seed, int k) {
  Rng r(seed);
  uint64_t s = 0;
  for (int i = 0; i <= k; ++i) s = r.next_seed();
  return s;
}

// Composited depth is opacity-weighted; divide the opacity back out so a
// slightly translucent surface reads at its true distance.
Tensor settled_depth(const RenderOutput& ro) {
  return div(ro.depth, max_const(ro.alpha, 1e-4));
}

}  // namespace

EvalReport evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_dir,
                               const EvalOptions& opt) {
  GEOD_CHECK(opt.n_images > 0 && opt.re_pairs >= 0, "evaluate: nothing to do");
  ParameterStore store;
  const std::string meta_json = load_checkpoint(ckpt_path, store);
  GEOD_CHECK(!meta_json.empty(), "checkpoint '" << ckpt_path << "' carries no config");
  const TrainingConfig cfg = parse_training_config(meta_json);
  const Generator gen(cfg.generator, store);
  const PerceptualPyramid pyramid(store);
  const Intrinsics K = intrinsics_from_fov(cfg.fov_degrees, cfg.resolution, cfg.resolution);

  DatasetMeta meta = read_manifest(data_dir);
  GEOD_CHECK(meta.resolution == cfg.resolution,
             "dataset resolution " << meta.resolution << " != checkpoint " << cfg.resolution);

  EvalReport rep;
  rep.seed = opt.seed;
  rep.n_images = std::min(opt.n_images, meta.count);
  rep.re_pairs = opt.re_pairs;

  // --- SIDE by inversion ------------------------------------------------
  SampleShuffler pick(meta.count, substream(opt.seed, 0));
  for (int i = 0; i < rep.n_images; ++i) {
    DatasetSample s = load_sample(data_dir, meta, pick.next());
    InversionConfig ic;
    ic.steps = opt.invert_steps;
    ic.lr = opt.invert_lr;
    ic.feature_weight = opt.feature_weight;
    ic.init_pose = s.pose;  // the camera is known; only the shape is fit
    InversionResult inv = invert(gen, s.image, K, &pyramid, ic);

    NoGradGuard ng;
    RenderOutput ro = render_image(gen, inv.z, make_rays(s.pose, K), nullptr);
    const std::vector<double>& alpha = ro.alpha.values();
    std::vector<double> mask(alpha.size(), 0.0);
    int64_t solid = 0;
    for (size_t px = 0; px < alpha.size(); ++px) {
      if (alpha[px] > opt.alpha_threshold) {
        mask[px] = 1.0;
        ++solid;
      }
    }
    if (solid < static_cast<int64_t>(alpha.size() / 100)) {
      rep.warnings.push_back("image " + std::to_string(s.index) +
                             ": under 1% solid pixels, scoring the full frame");
      std::fill(mask.begin(), mask.end(), 1.0);
    }
    Tensor mask_t = Tensor::from_data(ro.depth.shape(), std::move(mask));
    rep.side_per_image.push_back(side(settled_depth(ro), s.depth, mask_t));
  }
  rep.side_median = median(rep.side_per_image);
  rep.side_mean = std::accumulate(rep.side_per_image.begin(), rep.side_per_image.end(), 0.0) /
                  rep.side_per_image.size();

  // --- reprojection error on generated pairs -----------------------------
  Rng zr(substream(opt.seed, 1));
  Rng pr(substream(opt.seed, 2));
  const PoseRange range{meta.yaw_range, meta.pitch_range, meta.radius};
  for (int k = 0; k < opt.re_pairs; ++k) {
    NoGradGuard ng;
    Tensor z = Tensor::randn({1, cfg.generator.latent_dim}, zr);
    const Pose pa = sample_pose(pr, range), pb = sample_pose(pr, range);
    RenderOutput ra = render_image(gen, z, make_rays(pa, K), nullptr);
    RenderOutput rb = render_image(gen, z, make_rays(pb, K), nullptr);
    try {
      rep.re_per_pair.push_back(
          reprojection_error(ra.color, settled_depth(ra), pa, rb.color, pb, K));
    } catch (const Error& e) {
      rep.warnings.push_back("re pair " + std::to_string(k) + ": " + e.what());
    }
  }
  if (!rep.re_per_pair.empty()) {
    rep.re_median = median(rep.re_per_pair);
    rep.re_mean = std::accumulate(rep.re_per_pair.begin(), rep.re_per_pair.end(), 0.0) /
                  rep.re_per_pair.size();
  }
  return rep;
}

std::string eval_report_json(const EvalReport& r) {
  json j;
  j["side"] = {{"per_image", r.side_per_image},
               {"median", r.side_median},
               {"mean", r.side_mean}};
  j["re"] = {{"per_pair", r.re_per_pair}, {"median", r.re_median}, {"mean", r.re_mean}};
  j["n_images"] = r.n_images;
  j["re_pairs"] = r.re_pairs;
  j["seed"] = r.seed;
  j["warnings"] = r.warnings;
  return j.dump(2);
}

}  // namespace geod
