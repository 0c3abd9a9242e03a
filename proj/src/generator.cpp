#include "geod/generator.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace geod {

Generator::Generator(const GeneratorConfig& cfg, ParameterStore& store, Rng& init_rng,
                     std::string prefix)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  GEOD_CHECK(cfg.latent_dim >= 1 && cfg.hidden >= 1 && cfg.layers >= 1,
             "generator sizes must be positive");
  GEOD_CHECK(cfg.n_ray_samples >= 2, "generator needs at least two samples per ray");
  GEOD_CHECK(cfg.far > cfg.near && cfg.near > 0, "generator needs 0 < near < far");
  const int h = cfg.hidden;
  const int dz = cfg.latent_dim;
  const int film = cfg.layers * 2 * h;
  auto u = [&](const Shape& s, double bound) {
    return Tensor::uniform(s, init_rng, -bound, bound);
  };
  store.create(prefix_ + "map.w0", u({dz, dz}, std::sqrt(6.0 / dz)));
  // A zero bias would park z = 0 exactly in the relu dead zone (no gradient
  // to climb out of the canonical inversion start); spread it instead.
  store.create(prefix_ + "map.b0", u({1, dz}, 1.0 / std::sqrt(static_cast<double>(dz))));
  // Small last-layer weights keep the film output near zero, i.e. gain ~ 1
  // and shift ~ 0, so the trunk starts out as a plain sine net.
  store.create(prefix_ + "map.w1", u({dz, film}, 0.01 * std::sqrt(6.0 / dz)));
  store.create(prefix_ + "map.b1", Tensor::zeros({1, film}));
  for (int l = 0; l < cfg.layers; ++l) {
    const int in = (l == 0) ? 3 : h;
    // sine-net init: U(+-1/in) on the first layer (the omega multiplier
    // supplies the bandwidth), U(+-sqrt(6/in)) on the rest.
    const double bound = (l == 0) ? 1.0 / in : std::sqrt(6.0 / in);
    store.create(prefix_ + "trunk.w" + std::to_string(l), u({in, h}, bound));
    store.create(prefix_ + "trunk.b" + std::to_string(l), Tensor::zeros({1, h}));
  }
  store.create(prefix_ + "sigma.w", u({h, 1}, std::sqrt(6.0 / h)));
  // Positive density bias so freshly initialized fields are already
  // semi-opaque; adversarial training only has to shape, not create, mass.
  store.create(prefix_ + "sigma.b", Tensor::full({1, 1}, 1.0));
  store.create(prefix_ + "color.w0", u({h + 3, h}, std::sqrt(6.0 / (h + 3))));
  store.create(prefix_ + "color.b0", Tensor::zeros({1, h}));
  store.create(prefix_ + "color.w1", u({h, 3}, std::sqrt(6.0 / h)));
  store.create(prefix_ + "color.b1", Tensor::zeros({1, 3}));
}

Generator::Generator(const GeneratorConfig& cfg, ParameterStore& store, std::string prefix)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  GEOD_CHECK(store.has(prefix_ + "trunk.w0"),
             "no generator parameters under prefix '" << prefix_ << "'");
  Tensor w0 = store.get(prefix_ + "trunk.w0");
  GEOD_CHECK(w0.dim(0) == 3 && w0.dim(1) == cfg.hidden,
             "generator config (hidden=" << cfg.hidden << ") does not match stored trunk.w0 "
                                         << shape_str(w0.shape()));
  Tensor w1 = store.get(prefix_ + "map.w1");
  GEOD_CHECK(w1.dim(0) == cfg.latent_dim && w1.dim(1) == cfg.layers * 2 * cfg.hidden,
             "generator config does not match stored map.w1 " << shape_str(w1.shape()));
}

Generator::Field Generator::field(const Tensor& positions, const Tensor& view_dirs,
                                  const Tensor& z) const {
  GEOD_CHECK(positions.ndim() == 2 && positions.dim(1) == 3,
             "field: positions must be [N,3], got " << shape_str(positions.shape()));
  GEOD_CHECK(same_shape(view_dirs.shape(), positions.shape()),
             "field: view_dirs " << shape_str(view_dirs.shape()) << " must match positions "
                                 << shape_str(positions.shape()));
  GEOD_CHECK(z.ndim() == 2 && z.dim(0) == 1 && z.dim(1) == cfg_.latent_dim,
             "field: z must be [1," << cfg_.latent_dim << "], got " << shape_str(z.shape()));
  const int n = positions.dim(0);
  const int h = cfg_.hidden;

  Tensor film = add(matmul(relu(add(matmul(z, p("map.w0")), p("map.b0"))), p("map.w1")),
                    p("map.b1"));  // [1, layers*2h]

  Tensor x = mul(positions, cfg_.coord_scale);
  for (int l = 0; l < cfg_.layers; ++l) {
    Tensor pre = matmul(x, p("trunk.w" + std::to_string(l)));
    pre = add(pre, broadcast_to(p("trunk.b" + std::to_string(l)), pre.shape()));
    Tensor gain = add(slice(film, 1, l * 2 * h, l * 2 * h + h), 1.0);
    Tensor shift = slice(film, 1, l * 2 * h + h, (l + 1) * 2 * h);
    const double omega = (l == 0) ? cfg_.first_omega : 1.0;
    Tensor mod = mul(mul(broadcast_to(gain, pre.shape()), pre), omega);
    x = sin_t(add(mod, broadcast_to(shift, pre.shape())));
  }

  Tensor sigma = softplus(add(matmul(x, p("sigma.w")), broadcast_to(p("sigma.b"), {n, 1})));
  Tensor cin = concat({x, view_dirs}, 1);  // [N, h+3]
  Tensor cfeat = sin_t(add(matmul(cin, p("color.w0")), broadcast_to(p("color.b0"), {n, h})));
  Tensor color = sigmoid(add(matmul(cfeat, p("color.w1")), broadcast_to(p("color.b1"), {n, 3})));
  return {sigma, color};
}

Composited composite_rays(const Tensor& sigma, const Tensor& color, const Tensor& delta,
                          const Tensor& zvals, bool renormalize_depth) {
  GEOD_CHECK(sigma.ndim() == 2, "composite_rays: sigma must be [R,S], got "
                                    << shape_str(sigma.shape()));
  const int r = sigma.dim(0);
  const int s = sigma.dim(1);
  GEOD_CHECK(s >= 1, "composite_rays: need at least one sample");
  GEOD_CHECK(color.ndim() == 3 && color.dim(0) == r && color.dim(1) == s && color.dim(2) == 3,
             "composite_rays: color must be [R,S,3], got " << shape_str(color.shape()));
  GEOD_CHECK(same_shape(delta.shape(), sigma.shape()), "composite_rays: delta/sigma mismatch");
  GEOD_CHECK(same_shape(zvals.shape(), sigma.shape()), "composite_rays: zvals/sigma mismatch");

  // Exclusive prefix sum along the sample axis as a matmul with a constant
  // strictly upper triangular matrix: (a @ U)_i = sum_{j<i} a_j.
  std::vector<double> ut(static_cast<size_t>(s) * s, 0.0);
  for (int j = 0; j < s; ++j)
    for (int i = j + 1; i < s; ++i) ut[static_cast<size_t>(j) * s + i] = 1.0;
  Tensor upper = make_tensor({s, s}, std::move(ut));

  Tensor a = mul(sigma, delta);                        // [R,S]
  Tensor trans = exp_t(neg(matmul(a, upper)));         // T_i
  Tensor absorb = add(neg(exp_t(neg(a))), 1.0);        // 1 - exp(-sigma_i delta_i)
  Tensor w = mul(trans, absorb);                       // [R,S]

  Tensor w3 = broadcast_to(reshape(w, {r, s, 1}), {r, s, 3});
  Composited out;
  out.color = sum(mul(w3, color), {1});  // [R,3]
  out.depth = sum(mul(w, zvals), {1});   // [R]
  out.alpha = sum(w, {1});               // [R]
  if (renormalize_depth) out.depth = div(out.depth, max_const(out.alpha, 1e-4));
  return out;
}

RenderOutput render_image(const Generator& gen, const Tensor& z, const RayGrid& rays,
                          Rng* stratified_rng) {
  const GeneratorConfig& cfg = gen.config();
  const int r = rays.width * rays.height;
  const int s = cfg.n_ray_samples;
  GEOD_CHECK(r > 0, "render_image: empty ray grid");
  GEOD_CHECK(rays.origins.ndim() == 2 && rays.origins.dim(0) == r,
             "render_image: ray grid tensors do not match width*height");

  const double step = (cfg.far - cfg.near) / s;
  std::vector<double> zd(static_cast<size_t>(r) * s);
  for (int ri = 0; ri < r; ++ri)
    for (int i = 0; i < s; ++i) {
      const double off = stratified_rng ? stratified_rng->uniform(0.0, 1.0) : 0.5;
      zd[static_cast<size_t>(ri) * s + i] = cfg.near + (i + off) * step;
    }
  Tensor zvals = make_tensor({r, s}, std::move(zd));  // constant: no grad into sample depths

  // One shared sample set: positions feed the field, the same z values feed
  // the depth expectation, so color and depth describe the same geometry.
  Tensor o3 = broadcast_to(reshape(rays.origins, {r, 1, 3}), {r, s, 3});
  Tensor d3 = broadcast_to(reshape(rays.dirs, {r, 1, 3}), {r, s, 3});
  Tensor t3 = broadcast_to(reshape(zvals, {r, s, 1}), {r, s, 3});
  Tensor pts = reshape(add(o3, mul(d3, t3)), {r * s, 3});
  Tensor unit = l2_normalize_last(rays.dirs);
  Tensor dirs = reshape(broadcast_to(reshape(unit, {r, 1, 3}), {r, s, 3}), {r * s, 3});

  Generator::Field f = gen.field(pts, dirs, z);
  Tensor sigma = reshape(f.sigma, {r, s});
  Tensor color = reshape(f.color, {r, s, 3});

  // delta_i = (z_{i+1} - z_i) * ||dir||; the last sample reuses the previous
  // gap since there is no sample beyond it.
  Tensor gaps = sub(slice(zvals, 1, 1, s), slice(zvals, 1, 0, s - 1));  // [R,S-1]
  Tensor delta_z = concat({gaps, slice(gaps, 1, s - 2, s - 1)}, 1);     // [R,S]
  Tensor delta = mul(delta_z, broadcast_to(rays.norms, {r, s}));

  Composited comp = composite_rays(sigma, color, delta, zvals, cfg.renormalize_depth);
  RenderOutput out;
  out.color = reshape(comp.color, {rays.height, rays.width, 3});
  out.depth = reshape(comp.depth, {rays.height, rays.width});
  out.alpha = reshape(comp.alpha, {rays.height, rays.width});
  return out;
}

Tensor normal_from_depth(const Tensor& depth, const Intrinsics& K) {
  GEOD_CHECK(depth.ndim() == 2, "normal_from_depth: depth must be [H,W], got "
                                    << shape_str(depth.shape()));
  const int hgt = depth.dim(0);
  const int wid = depth.dim(1);
  GEOD_CHECK(hgt >= 2 && wid >= 2, "normal_from_depth: needs at least a 2x2 depth map");
  GEOD_CHECK(K.width == wid && K.height == hgt,
             "normal_from_depth: intrinsics are " << K.width << "x" << K.height
                                                  << " but depth is " << wid << "x" << hgt);

  // Constant per-pixel K^{-1}(u,v,1); scaling by depth gives camera points.
  std::vector<double> kv(static_cast<size_t>(hgt) * wid * 3);
  for (int v = 0; v < hgt; ++v)
    for (int u = 0; u < wid; ++u) {
      const size_t i = (static_cast<size_t>(v) * wid + u) * 3;
      kv[i + 0] = (u - K.cx) / K.fx;
      kv[i + 1] = (v - K.cy) / K.fy;
      kv[i + 2] = 1.0;
    }
  Tensor kinv = make_tensor({hgt, wid, 3}, std::move(kv));
  Tensor pts = mul(broadcast_to(reshape(depth, {hgt, wid, 1}), {hgt, wid, 3}), kinv);

  // next - prev along an axis with edge replication: central differences in
  // the interior, one-sided at the borders.
  auto diff = [](const Tensor& x, int axis, int extent) {
    Tensor prev = concat({slice(x, axis, 0, 1), slice(x, axis, 0, extent - 1)}, axis);
    Tensor next = concat({slice(x, axis, 1, extent), slice(x, axis, extent - 1, extent)}, axis);
    return sub(next, prev);
  };
  Tensor tu = diff(pts, 1, wid);  // tangent along +u
  Tensor tv = diff(pts, 0, hgt);  // tangent along +v

  auto comp = [](const Tensor& x, int c) { return slice(x, 2, c, c + 1); };
  // cross(tv, tu), ordered so a constant depth map yields exactly (0,0,-1):
  // normals of a depth map always face the camera.
  Tensor nx = sub(mul(comp(tv, 1), comp(tu, 2)), mul(comp(tv, 2), comp(tu, 1)));
  Tensor ny = sub(mul(comp(tv, 2), comp(tu, 0)), mul(comp(tv, 0), comp(tu, 2)));
  Tensor nz = sub(mul(comp(tv, 0), comp(tu, 1)), mul(comp(tv, 1), comp(tu, 0)));
  // Cross products of one-pixel tangents are ~(depth/f)^2, so the normalizer
  // eps must sit far below that to not bend near-border normals.
  return l2_normalize_last(concat({nx, ny, nz}, 2), 1e-20);
}

}  // namespace geod
