#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geod/camera.hpp"
#include "geod/tensor.hpp"

namespace geod {

// Scale-invariant depth error over masked pixels:
//   delta = log pred - log gt,  SIDE = sqrt( mean(delta^2) - mean(delta)^2 ).
// A global depth rescale shifts every delta equally, so SIDE measures shape,
// not calibration. pred/gt are [H,W] (> 0 where mask is set), mask [H,W] 0/1.
double side(const Tensor& pred_depth, const Tensor& gt_depth, const Tensor& mask);

// Photometric cross-view check: warp view a into view b using a's depth and
// L1-compare against b where the warp is valid. Throws if nothing is valid;
// the valid fraction is reported through `valid_fraction` when non-null.
double reprojection_error(const Tensor& img_a, const Tensor& depth_a, const Pose& pose_a,
                          const Tensor& img_b, const Pose& pose_b, const Intrinsics& K,
                          double* valid_fraction = nullptr);

struct EvalOptions {
  int n_images = 12;         // dataset images scored by inversion + SIDE
  int64_t invert_steps = 150;
  double invert_lr = 0.05;
  double feature_weight = 0.5;
  int re_pairs = 8;          // sampled latent/pose pairs for reprojection error
  uint64_t seed = 1;
  double alpha_threshold = 0.5;  // rendered-opacity cut for the SIDE mask
};

struct EvalReport {
  std::vector<double> side_per_image;
  double side_median = 0, side_mean = 0;
  std::vector<double> re_per_pair;
  double re_median = 0, re_mean = 0;
  std::vector<std::string> warnings;
  int n_images = 0;
  int re_pairs = 0;
  uint64_t seed = 0;
};

// Scores a trained generator checkpoint against a dataset:
//  SIDE  — per image, fit a latent at the image's own camera (pose is known,
//          shape is not), render depth, compare to ground truth on the
//          solidly-rendered mask (alpha > threshold; falls back to the full
//          frame with a warning if under 1% survives);
//  RE    — per seeded latent, render two sampled views and measure how well
//          view a's rendered depth explains view b's rendered image.
// Deterministic for a fixed (checkpoint, dataset, options).
EvalReport evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_dir,
                               const EvalOptions& opt);

std::string eval_report_json(const EvalReport& r);

double median(std::vector<double> v);  // by copy; empty input throws

}  // namespace geod
