#include "geod/discriminator.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "geod/generator.hpp"

namespace geod {

namespace {

Tensor conv_block(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  Tensor y = conv2d(x, w, stride, 1);
  return add(y, broadcast_to(b, y.shape()));
}

Tensor uniform_fan(Rng& rng, const Shape& shape, int fan_in, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / fan_in);
  return Tensor::uniform(shape, rng, -bound, bound);
}

}  // namespace

void Discriminator::create_encoder(Rng& rng, const std::string& enc) {
  const int f = cfg_.base_channels;
  const int chans[5] = {3, f, 2 * f, 4 * f, 4 * f};
  for (int i = 0; i < 4; ++i) {
    store_->create(prefix_ + enc + "conv" + std::to_string(i) + ".w",
                   uniform_fan(rng, {chans[i + 1], chans[i], 3, 3}, chans[i] * 9));
    store_->create(prefix_ + enc + "conv" + std::to_string(i) + ".b",
                   Tensor::zeros({chans[i + 1], 1, 1}));
  }
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, ParameterStore& store, Rng& init_rng,
                             std::string prefix)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  GEOD_CHECK(cfg.resolution >= 8 && cfg.resolution % 8 == 0,
             "discriminator resolution must be a multiple of 8, got " << cfg.resolution);
  GEOD_CHECK(cfg.base_channels >= 4, "discriminator base_channels too small");
  GEOD_CHECK(cfg.d_max > cfg.d_min && cfg.d_min > 0, "discriminator needs 0 < d_min < d_max");
  const int f = cfg.base_channels;
  const int bres = cfg.resolution / 8;
  const int flat = 4 * f * bres * bres;

  create_encoder(init_rng, "trunk.");
  if (cfg.separate_geometry_encoder) create_encoder(init_rng, "geo.enc.");

  store.create(prefix_ + "domain.fc0.w", uniform_fan(init_rng, {flat, 64}, flat));
  store.create(prefix_ + "domain.fc0.b", Tensor::zeros({1, 64}));
  store.create(prefix_ + "domain.fc1.w", uniform_fan(init_rng, {64, 1}, 64));
  store.create(prefix_ + "domain.fc1.b", Tensor::zeros({1, 1}));

  store.create(prefix_ + "geo.global.fc0.w", uniform_fan(init_rng, {flat, 32}, flat));
  store.create(prefix_ + "geo.global.fc0.b", Tensor::zeros({1, 32}));
  // small head: the initial light is (0,0,1) ambient 0.5 and the initial
  // viewpoint is the canonical orbit pose
  store.create(prefix_ + "geo.global.fc1.w", uniform_fan(init_rng, {32, 7}, 32, 0.1));
  store.create(prefix_ + "geo.global.fc1.b", Tensor::zeros({1, 7}));

  const int dec_chans[4] = {4 * f, 4 * f, 2 * f, f};
  for (int i = 0; i < 3; ++i) {
    store.create(prefix_ + "geo.dec.conv" + std::to_string(i) + ".w",
                 uniform_fan(init_rng, {dec_chans[i + 1], dec_chans[i], 3, 3}, dec_chans[i] * 9));
    store.create(prefix_ + "geo.dec.conv" + std::to_string(i) + ".b",
                 Tensor::zeros({dec_chans[i + 1], 1, 1}));
  }
  // 8 output planes: depth, albedo rgb, four confidence maps
  store.create(prefix_ + "geo.dec.out.w", uniform_fan(init_rng, {8, f, 3, 3}, f * 9, 0.1));
  store.create(prefix_ + "geo.dec.out.b", Tensor::zeros({8, 1, 1}));
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, ParameterStore& store,
                             std::string prefix)
    : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
  GEOD_CHECK(store.has(prefix_ + "trunk.conv0.w"),
             "no discriminator parameters under prefix '" << prefix_ << "'");
  Tensor w = store.get(prefix_ + "trunk.conv0.w");
  GEOD_CHECK(w.dim(0) == cfg.base_channels,
             "discriminator config (base_channels=" << cfg.base_channels
                                                    << ") does not match stored trunk.conv0.w "
                                                    << shape_str(w.shape()));
  GEOD_CHECK(!cfg.separate_geometry_encoder || store.has(prefix_ + "geo.enc.conv0.w"),
             "checkpoint has no separate geometry encoder");
}

Tensor Discriminator::encode(const Tensor& chw, const std::string& enc) const {
  Tensor x = chw;
  const int strides[4] = {1, 2, 2, 2};
  for (int i = 0; i < 4; ++i) {
    Tensor w = p(enc + "conv" + std::to_string(i) + ".w");
    Tensor b = p(enc + "conv" + std::to_string(i) + ".b");
    x = leaky_relu(conv_block(x, w, b, strides[i]), 0.2);
  }
  return x;  // [4F, res/8, res/8]
}

Tensor Discriminator::domain_logit(const Tensor& image_hwc) const {
  GEOD_CHECK(image_hwc.ndim() == 3 && image_hwc.dim(0) == cfg_.resolution &&
                 image_hwc.dim(1) == cfg_.resolution && image_hwc.dim(2) == 3,
             "domain_logit: expect [" << cfg_.resolution << "," << cfg_.resolution
                                      << ",3], got " << shape_str(image_hwc.shape()));
  Tensor feat = encode(hwc_to_chw(image_hwc), "trunk.");
  Tensor flat = reshape(feat, {1, static_cast<int>(feat.numel())});
  Tensor h = leaky_relu(add(matmul(flat, p("domain.fc0.w")), p("domain.fc0.b")), 0.2);
  return add(matmul(h, p("domain.fc1.w")), p("domain.fc1.b"));
}

GeometryPrediction Discriminator::geometry(const Tensor& image_hwc, const Intrinsics& K) const {
  GEOD_CHECK(image_hwc.ndim() == 3 && image_hwc.dim(0) == cfg_.resolution &&
                 image_hwc.dim(1) == cfg_.resolution && image_hwc.dim(2) == 3,
             "geometry: expect [" << cfg_.resolution << "," << cfg_.resolution << ",3], got "
                                  << shape_str(image_hwc.shape()));
  GEOD_CHECK(K.width == cfg_.resolution && K.height == cfg_.resolution,
             "geometry: intrinsics resolution mismatch");
  const std::string enc = cfg_.separate_geometry_encoder ? "geo.enc." : "trunk.";
  Tensor feat = encode(hwc_to_chw(image_hwc), enc);

  // global readout: lighting and viewpoint
  Tensor flat = reshape(feat, {1, static_cast<int>(feat.numel())});
  Tensor gh = leaky_relu(add(matmul(flat, p("geo.global.fc0.w")), p("geo.global.fc0.b")), 0.2);
  Tensor gg = add(matmul(gh, p("geo.global.fc1.w")), p("geo.global.fc1.b"));  // [1,7]
  auto g1 = [&](int i) { return slice(gg, 1, i, i + 1); };

  GeometryPrediction out;
  out.light.k_ambient = sigmoid(g1(0));
  out.light.k_diffuse = sigmoid(g1(1));
  // lateral components bounded, vertical kept positive: the light always
  // sits above the surface, matching how the scenes are lit
  out.light.dir = l2_normalize_last(concat({mul(tanh_t(g1(2)), cfg_.light_xy_bound),
                                            mul(tanh_t(g1(3)), cfg_.light_xy_bound),
                                            add(softplus(g1(4)), 0.3)},
                                           1));
  out.yaw = mul(tanh_t(g1(5)), cfg_.yaw_bound);
  out.pitch = add(mul(tanh_t(g1(6)), cfg_.pitch_bound), M_PI / 2);

  // spatial decoder: three upsampling stages back to full resolution
  Tensor y = feat;
  for (int i = 0; i < 3; ++i) {
    Tensor w = p("geo.dec.conv" + std::to_string(i) + ".w");
    Tensor b = p("geo.dec.conv" + std::to_string(i) + ".b");
    y = upsample2x_nearest(leaky_relu(conv_block(y, w, b, 1), 0.2));
  }
  Tensor maps = chw_to_hwc(conv_block(y, p("geo.dec.out.w"), p("geo.dec.out.b"), 1));
  const int res = cfg_.resolution;

  out.depth = reshape(
      add(mul(sigmoid(slice(maps, 2, 0, 1)), cfg_.d_max - cfg_.d_min), cfg_.d_min), {res, res});
  out.albedo = sigmoid(slice(maps, 2, 1, 4));
  out.conf_pixel = add(softplus(slice(maps, 2, 4, 5)), cfg_.conf_floor);
  out.conf_flip = add(softplus(slice(maps, 2, 5, 6)), cfg_.conf_floor);
  out.conf_percep = add(softplus(slice(maps, 2, 6, 7)), cfg_.conf_floor);
  out.conf_percep_flip = add(softplus(slice(maps, 2, 7, 8)), cfg_.conf_floor);
  out.normal = normal_from_depth(out.depth, K);

  // reconstruction in the predicted view: rotate the world light into the
  // predicted camera and shade the predicted geometry
  Tensor basis = camera_basis(out.yaw, out.pitch);
  LightT cam_light{out.light.k_ambient, out.light.k_diffuse,
                   matmul(out.light.dir, basis, false, true)};
  out.recon = lambertian_shade(out.albedo, out.normal, cam_light);

  // mirrored world: flipped depth/albedo, x-negated light, negated yaw;
  // flipping the shaded result back aligns it with the input image
  Tensor lx = slice(out.light.dir, 1, 0, 1);
  Tensor lyz = slice(out.light.dir, 1, 1, 3);
  Tensor dir_m = concat({neg(lx), lyz}, 1);
  Tensor basis_m = camera_basis(neg(out.yaw), out.pitch);
  LightT cam_light_m{out.light.k_ambient, out.light.k_diffuse,
                     matmul(dir_m, basis_m, false, true)};
  Tensor depth_m = flip(out.depth, 1);
  Tensor albedo_m = flip(out.albedo, 1);
  Tensor normal_m = normal_from_depth(depth_m, K);
  out.recon_flip = flip(lambertian_shade(albedo_m, normal_m, cam_light_m), 1);
  return out;
}

PerceptualPyramid::PerceptualPyramid(ParameterStore& store, Rng& init_rng, std::string prefix)
    : store_(&store), prefix_(std::move(prefix)) {
  const int chans[4] = {3, 8, 16, 32};
  for (int i = 0; i < kLevels; ++i)
    store.create(prefix_ + "conv" + std::to_string(i) + ".w",
                 uniform_fan(init_rng, {chans[i + 1], chans[i], 3, 3}, chans[i] * 9));
}

PerceptualPyramid::PerceptualPyramid(ParameterStore& store, std::string prefix)
    : store_(&store), prefix_(std::move(prefix)) {
  GEOD_CHECK(store.has(prefix_ + "conv0.w"),
             "no perceptual pyramid parameters under prefix '" << prefix_ << "'");
}

std::vector<Tensor> PerceptualPyramid::features(const Tensor& image_hwc) const {
  GEOD_CHECK(image_hwc.ndim() == 3 && image_hwc.dim(2) == 3,
             "perceptual features: expect [H,W,3], got " << shape_str(image_hwc.shape()));
  std::vector<Tensor> out;
  Tensor x = hwc_to_chw(image_hwc);
  for (int i = 0; i < kLevels; ++i) {
    x = leaky_relu(conv2d(x, p("conv" + std::to_string(i) + ".w"), 2, 1), 0.2);
    out.push_back(x);
  }
  return out;
}

}  // namespace geod
