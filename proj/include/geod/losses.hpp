#pragma once

#include <cstdint>
#include <functional>

#include "geod/discriminator.hpp"
#include "geod/generator.hpp"

namespace geod {

// Non-saturating logistic GAN objective f(t) = -softplus(-t); f(0) = -ln 2.
// Generator loss is -E[f(D(fake))]; discriminator loss
// -E[f(D(real))] - E[f(-D(fake))] (both terms softplus, bounded below by 0).
Tensor f_logistic(const Tensor& t);

// Linear ramp: value_start before it_start, value_end after it_end,
// interpolated in between (a step when it_start == it_end).
double lambda_ramp(int64_t it, double value_start, double value_end, int64_t it_start,
                   int64_t it_end);

// Confidence-calibrated L1: per-pixel channel-mean |a-b|, then
//   mean( sqrt(2) * diff / conf + log conf )
// so the branch can buy off hard pixels by paying log conf.
// a, b are [H,W,C]; conf is [H,W,1].
Tensor confidence_l1(const Tensor& a, const Tensor& b, const Tensor& conf);

struct ReconWeights {
  double flip = 1.0;    // mirrored-world term
  double percep = 0.5;  // feature-space terms
};

struct ReconLossTerms {
  Tensor total;
  Tensor pixel, flip, percep, percep_flip;
};

// Self-supervised inverse rendering on one image: the branch must re-shade
// its own prediction back into the image, directly and through the mirrored
// world, in pixels and in frozen feature space, each under its own
// confidence map (pooled to the feature resolutions for the latter).
ReconLossTerms reconstruction_loss(const GeometryPrediction& g, const Tensor& image,
                                   const PerceptualPyramid& pyramid, const ReconWeights& w = {});

struct FakeGeometryWeights {
  double depth = 4.0;   // ~1/(d_max - d_min): depth error in range units
  double normal = 0.5;
};

// Agreement between the geometry the generator actually rendered and the
// geometry branch's reading of the rendered image, weighted by the (detached)
// rendered opacity so empty regions don't pull.
Tensor fake_geometry_loss(const RenderOutput& render, const GeometryPrediction& g,
                          const Intrinsics& K, const FakeGeometryWeights& w = {});

// || d logit / d image ||^2 at `image` (detached), with the gradient graph
// kept alive so the penalty trains whatever produced the logit.
Tensor gradient_penalty(const std::function<Tensor(const Tensor&)>& logit_fn,
                        const Tensor& image);
Tensor gradient_penalty(const Discriminator& d, const Tensor& image);

}  // namespace geod
