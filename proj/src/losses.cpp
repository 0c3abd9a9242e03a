#include "geod/losses.hpp"

#include <algorithm>
#include <cmath>

namespace geod {

Tensor f_logistic(const Tensor& t) { return neg(softplus(neg(t))); }

double lambda_ramp(int64_t it, double value_start, double value_end, int64_t it_start,
                   int64_t it_end) {
  GEOD_CHECK(it_end >= it_start, "lambda_ramp: it_end must not precede it_start");
  if (it >= it_end) return value_end;
  if (it <= it_start) return value_start;
  const double f = static_cast<double>(it - it_start) / static_cast<double>(it_end - it_start);
  return value_start + (value_end - value_start) * f;
}

Tensor confidence_l1(const Tensor& a, const Tensor& b, const Tensor& conf) {
  GEOD_CHECK(same_shape(a.shape(), b.shape()), "confidence_l1: shape mismatch "
                                                   << shape_str(a.shape()) << " vs "
                                                   << shape_str(b.shape()));
  GEOD_CHECK(a.ndim() == 3 && conf.ndim() == 3 && conf.dim(2) == 1 && conf.dim(0) == a.dim(0) &&
                 conf.dim(1) == a.dim(1),
             "confidence_l1: conf must be [H,W,1] matching a/b");
  Tensor diff = mean(abs_t(sub(a, b)), {2}, true);  // [H,W,1]
  return mean(add(div(mul(diff, std::sqrt(2.0)), conf), log_t(conf)));
}

namespace {

// channel-mean |a-b| of CHW features against a CHW single-channel confidence
Tensor confidence_l1_chw(const Tensor& fa, const Tensor& fb, const Tensor& conf_c1) {
  Tensor diff = mean(abs_t(sub(fa, fb)), {0}, true);  // [1,h,w]
  return mean(add(div(mul(diff, std::sqrt(2.0)), conf_c1), log_t(conf_c1)));
}

Tensor pool_conf(const Tensor& conf_hw1, int times) {
  Tensor c = hwc_to_chw(conf_hw1);  // [1,H,W]
  for (int i = 0; i < times; ++i) c = avgpool2x(c);
  return c;
}

}  // namespace

ReconLossTerms reconstruction_loss(const GeometryPrediction& g, const Tensor& image,
                                   const PerceptualPyramid& pyramid, const ReconWeights& w) {
  ReconLossTerms out;
  out.pixel = confidence_l1(image, g.recon, g.conf_pixel);
  out.flip = confidence_l1(image, g.recon_flip, g.conf_flip);

  std::vector<Tensor> f_img = pyramid.features(image);
  std::vector<Tensor> f_rec = pyramid.features(g.recon);
  std::vector<Tensor> f_flip = pyramid.features(g.recon_flip);
  Tensor percep, percep_flip;
  for (int l = 0; l < PerceptualPyramid::kLevels; ++l) {
    Tensor cp = pool_conf(g.conf_percep, l + 1);
    Tensor cf = pool_conf(g.conf_percep_flip, l + 1);
    Tensor tp = confidence_l1_chw(f_img[l], f_rec[l], cp);
    Tensor tf = confidence_l1_chw(f_img[l], f_flip[l], cf);
    percep = percep.defined() ? add(percep, tp) : tp;
    percep_flip = percep_flip.defined() ? add(percep_flip, tf) : tf;
  }
  out.percep = div(percep, static_cast<double>(PerceptualPyramid::kLevels));
  out.percep_flip = div(percep_flip, static_cast<double>(PerceptualPyramid::kLevels));

  out.total = add(add(out.pixel, mul(out.flip, w.flip)),
                  mul(add(out.percep, mul(out.percep_flip, w.flip)), w.percep));
  return out;
}

Tensor fake_geometry_loss(const RenderOutput& render, const GeometryPrediction& g,
                          const Intrinsics& K, const FakeGeometryWeights& w) {
  GEOD_CHECK(same_shape(render.depth.shape(), g.depth.shape()),
             "fake_geometry_loss: depth shape mismatch");
  Tensor mask = render.alpha.detach();  // opacity decides how much a pixel counts
  Tensor denom = add(sum(mask), 1e-6);
  // The branch's reading of the fake is a frozen pseudo label: gradients reach
  // the generator only through its own rendered depth and normals.
  Tensor d_err = div(sum(mul(mask, abs_t(sub(render.depth, g.depth.detach())))), denom);
  Tensor n_render = normal_from_depth(render.depth, K);
  Tensor cosine = sum(mul(n_render, g.normal.detach()), {2});  // [H,W]
  Tensor n_err = div(sum(mul(mask, add(neg(cosine), 1.0))), denom);
  return add(mul(d_err, w.depth), mul(n_err, w.normal));
}

Tensor gradient_penalty(const std::function<Tensor(const Tensor&)>& logit_fn,
                        const Tensor& image) {
  Tensor x = image.detach();
  x.set_requires_grad(true);
  Tensor logit = logit_fn(x);
  GradMap gm = backward(logit, /*create_graph=*/true);
  Tensor gx = gm.get(x);
  return sum(mul(gx, gx));
}

Tensor gradient_penalty(const Discriminator& d, const Tensor& image) {
  return gradient_penalty([&d](const Tensor& x) { return d.domain_logit(x); }, image);
}

}  // namespace geod
