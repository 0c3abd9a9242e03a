// Acceptance gate: ten checks, one verdict line each, tolerances pinned in
// code. Everything up to criterion 6 is analytic or finite-difference based
// and runs in seconds; criteria 7-9 train real desk-scale runs (fifteen of
// them, executed by a small worker pool sized for a ~6 GB box) and compare
// geometry metrics across modes; criterion 10 inverts a trained generator.
// Exit code is the number of failed criteria.
//
// Desk artifacts land under ./acceptance_scratch. Finished runs are reused
// on re-invocation (training is byte-deterministic, so a kept checkpoint is
// exactly what a fresh run would produce).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "geod/camera.hpp"
#include "geod/config.hpp"
#include "geod/dataset.hpp"
#include "geod/discriminator.hpp"
#include "geod/generator.hpp"
#include "geod/inversion.hpp"
#include "geod/losses.hpp"
#include "geod/metrics.hpp"
#include "geod/params.hpp"
#include "geod/tensor.hpp"
#include "geod/training.hpp"

namespace fs = std::filesystem;
using namespace geod;

namespace {

// ---------------------------------------------------------------------------
// Desk-scale comparison parameters (criteria 7-9). The budget allows up to
// 20000 steps and 60 CPU-minutes per run; these runs stay far below both.
// Concurrency is capped by memory, not cores: one trainer peaks near 1 GB.
constexpr int kDeskSteps = 2000;
constexpr int kDeskBatch = 3;
constexpr int kDeskResolution = 32;
constexpr int kDeskDatasetCount = 2000;
constexpr uint64_t kDeskDatasetSeed = 11;
constexpr int kTrainerConcurrency = 4;

int g_failures = 0;

void verdict(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %2d. %-36s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void info(const std::string& line) {
  std::printf("       %s\n", line.c_str());
  std::fflush(stdout);
}

void run_criterion(int id, const std::string& name,
                   const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [ok, detail] = body();
    verdict(id, name, ok, detail);
  } catch (const std::exception& e) {
    verdict(id, name, false, std::string("threw: ") + e.what());
  }
}

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

Tensor arange(const Shape& shape, double start = 0.0, double step = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (size_t i = 0; i < v.size(); ++i) v[i] = start + step * static_cast<double>(i);
  return Tensor::from_data(shape, std::move(v));
}

// ---------------------------------------------------------------------------
// Criterion 1 — reverse-mode gradients against central finite differences.

struct FdProbe {
  double worst = 0;
  int coords = 0;
  std::string worst_name;  // parameter owning the worst coordinate, for triage
  size_t worst_idx = 0;
  double worst_fd = 0;
  double worst_an = 0;
};

// Backward() through `analytic` vs central differences of `numeric` (the
// same objective unless part of it is frozen by contract), perturbing up to
// three coordinates of every named parameter in place.
void probe_store_grads(const std::function<Tensor()>& analytic,
                       const std::function<double()>& numeric, ParameterStore& store,
                       const std::vector<std::string>& names, double eps, FdProbe& probe) {
  Tape::active().clear();
  GradMap gm = backward(analytic());
  std::map<std::string, std::vector<double>> grads;
  for (const std::string& n : names) grads[n] = gm.get(store.get(n)).values();
  Tape::active().clear();

  NoGradGuard ng;
  for (const std::string& n : names) {
    const std::vector<double> base = store.get(n).values();
    std::vector<size_t> picks = {0, base.size() / 2, base.size() - 1};
    picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
    for (size_t i : picks) {
      std::vector<double> v = base;
      v[i] = base[i] + eps;
      store.set_values(n, v);
      double fp = numeric();
      v[i] = base[i] - eps;
      store.set_values(n, v);
      double fm = numeric();
      store.set_values(n, base);
      double fd = (fp - fm) / (2 * eps);
      double an = grads[n][i];
      double rel = std::fabs(fd - an) / std::max(std::fabs(fd) + std::fabs(an), 1e-6);
      if (rel > probe.worst) {
        probe.worst = rel;
        probe.worst_name = n;
        probe.worst_idx = i;
        probe.worst_fd = fd;
        probe.worst_an = an;
      }
      ++probe.coords;
    }
  }
}

std::pair<bool, std::string> criterion_autodiff() {
  // Every primitive op, probed on every coordinate of a small random input.
  Rng rng(1234);
  double worst_prim = 0;
  int n_prim = 0;
  auto run = [&](const std::function<Tensor(const Tensor&)>& fn, const Tensor& point) {
    worst_prim = std::max(worst_prim, grad_check(fn, point, 1e-5));
    ++n_prim;
  };
  Tensor p23 = Tensor::randn({2, 3}, rng);
  Tensor other = Tensor::randn({2, 3}, rng);
  Tensor pos = add(abs_t(Tensor::randn({2, 3}, rng)).detach(), 0.5).detach();
  run([&](const Tensor& x) { return sum(add(x, other)); }, p23);
  run([&](const Tensor& x) { return sum(add(x, 1.7)); }, p23);
  run([&](const Tensor& x) { return sum(sub(other, x)); }, p23);
  run([&](const Tensor& x) { return sum(sub(x, 0.4)); }, p23);
  run([&](const Tensor& x) { return sum(mul(x, other)); }, p23);
  run([&](const Tensor& x) { return sum(mul(x, 3.5)); }, p23);
  run([&](const Tensor& x) { return sum(div(x, pos)); }, p23);
  run([&](const Tensor& x) { return sum(div(other, add(abs_t(x), 0.5))); }, p23);
  run([&](const Tensor& x) { return sum(div(x, 2.5)); }, p23);
  run([&](const Tensor& x) { return sum(neg(x)); }, p23);
  run([&](const Tensor& x) { return sum(sin_t(x)); }, p23);
  run([&](const Tensor& x) { return sum(cos_t(x)); }, p23);
  run([&](const Tensor& x) { return sum(exp_t(x)); }, p23);
  run([&](const Tensor& x) { return sum(log_t(add(abs_t(x), 0.5))); }, p23);
  run([&](const Tensor& x) { return sum(softplus(x)); }, p23);
  run([&](const Tensor& x) { return sum(sigmoid(x)); }, p23);
  run([&](const Tensor& x) { return sum(tanh_t(x)); }, p23);
  run([&](const Tensor& x) { return sum(mul(relu(x), other)); }, p23);
  run([&](const Tensor& x) { return sum(mul(leaky_relu(x, 0.2), other)); }, p23);
  run([&](const Tensor& x) { return sum(max_const(x, 0.1)); }, p23);
  run([&](const Tensor& x) { return sum(mul(clip(x, -0.5, 0.5), other)); }, p23);
  run([&](const Tensor& x) { return sum(mul(abs_t(x), other)); }, p23);
  run([&](const Tensor& x) { return sum(mul(x, x)); }, p23);
  run([&](const Tensor& x) { return add(sum(mean(mul(x, x), {1})), sum(mean(x, {0}))); }, p23);
  run([&](const Tensor& x) { return sum(mean(x, {0, 1}, true)); }, p23);
  run([&](const Tensor& x) { return sum(mul(reshape(x, {3, 2}), arange({3, 2}, 0.2, 0.3))); }, p23);
  run([&](const Tensor& x) {
    return sum(mul(broadcast_to(reshape(x, {2, 3, 1}), {2, 3, 4}), arange({2, 3, 4}, -1.0, 0.1)));
  }, p23);
  Tensor m = Tensor::randn({3, 4}, rng);
  run([&](const Tensor& x) { return sum(mul(matmul(x, m), arange({2, 4}, 0.5, 0.25))); }, p23);
  run([&](const Tensor& x) { return sum(matmul(m, x, true, true)); }, p23);
  run([&](const Tensor& x) { return sum(matmul(x, m, false, false)); }, p23);
  run([&](const Tensor& x) { return sum(mul(concat({x, other}, 0), arange({4, 3}))); }, p23);
  run([&](const Tensor& x) { return sum(mul(slice(x, 1, 1, 3), arange({2, 2}))); }, p23);
  run([&](const Tensor& x) { return sum(mul(flip(x, 1), other)); }, p23);
  run([&](const Tensor& x) { return sum(mul(l2_normalize_last(x, 1e-9), other)); }, p23);
  Tensor img = Tensor::randn({4, 4, 2}, rng);
  Tensor coords = Tensor::from_data({3, 2}, {0.7, 1.2, 2.1, 0.4, 1.6, 2.3});
  run([&](const Tensor& x) {
    return sum(mul(grid_sample_bilinear(x, coords), arange({3, 2}, 0.3, 0.21)));
  }, img);
  run([&](const Tensor& x) {
    return sum(mul(grid_sample_bilinear(img, x), arange({3, 2}, 0.3, 0.21)));
  }, coords);
  Tensor cx = Tensor::randn({2, 5, 5}, rng);
  Tensor cw = Tensor::randn({3, 2, 3, 3}, rng);
  run([&](const Tensor& x) {
    return sum(mul(conv2d(x, cw, 2, 1), arange({3, 3, 3}, 0.1, 0.05)));
  }, cx);
  run([&](const Tensor& x) {
    return sum(mul(conv2d(cx, x, 1, 1), arange({3, 5, 5}, -0.2, 0.03)));
  }, cw);
  Tensor hwc = Tensor::randn({3, 4, 2}, rng);
  run([&](const Tensor& x) { return sum(mul(hwc_to_chw(x), arange({2, 3, 4}, 0.1, 0.13))); }, hwc);
  Tensor chw = Tensor::randn({2, 3, 4}, rng);
  run([&](const Tensor& x) { return sum(mul(chw_to_hwc(x), arange({3, 4, 2}, -0.4, 0.11))); }, chw);
  Tensor pool_in = Tensor::randn({2, 4, 4}, rng);
  run([&](const Tensor& x) { return sum(mul(avgpool2x(x), arange({2, 2, 2}, 0.2, 0.17))); },
      pool_in);
  Tensor up_in = Tensor::randn({2, 3, 3}, rng);
  run([&](const Tensor& x) {
    return sum(mul(upsample2x_nearest(x), arange({2, 6, 6}, -0.3, 0.02)));
  }, up_in);
  bool prim_ok = worst_prim <= 1e-3;

  // Composite graphs, sampled coordinates, tolerance 5e-2.
  Intrinsics k8 = intrinsics_from_fov(30.0, 8, 8);
  GeneratorConfig gcfg;
  gcfg.latent_dim = 8;
  gcfg.hidden = 12;
  gcfg.layers = 2;
  gcfg.n_ray_samples = 5;
  DiscriminatorConfig dcfg;
  dcfg.resolution = 8;
  dcfg.base_channels = 6;

  FdProbe comp;

  {  // generator forward: weighted pixel sums of color and depth
    ParameterStore gs;
    Rng gr(21);
    Generator gen(gcfg, gs, gr);
    Rng zr(22);
    Tensor z = Tensor::randn({1, gcfg.latent_dim}, zr).detach();
    RayGrid rays = make_rays(Pose{0.07, M_PI / 2 - 0.04, 1.0}, k8);
    Tensor wc = arange({8, 8, 3}, 0.31, 0.013);
    Tensor wd = arange({8, 8}, -0.2, 0.011);
    auto loss = [&] {
      RenderOutput ro = render_image(gen, z, rays, nullptr);
      return add(sum(mul(ro.color, wc)), sum(mul(ro.depth, wd)));
    };
    probe_store_grads(loss, [&] { return loss().item(); }, gs, gs.names(), 1e-4, comp);
  }

  {  // geometry branch + its re-shading, through the reconstruction loss
    ParameterStore ds;
    Rng dr(31);
    Discriminator disc(dcfg, ds, dr);
    PerceptualPyramid per(ds, dr);
    Rng ir(32);
    Tensor img8 = add(mul(sigmoid(Tensor::randn({8, 8, 3}, ir)), 0.9), 0.05).detach();
    auto loss = [&] { return reconstruction_loss(disc.geometry(img8, k8), img8, per).total; };
    probe_store_grads(loss, [&] { return loss().item(); }, ds,
                      ds.names_with_prefix("disc."), 1e-4, comp);
  }

  {  // full generator objective: adversarial + geometry agreement on the fake
    ParameterStore gs;
    Rng gr(41);
    Generator gen(gcfg, gs, gr);
    ParameterStore ds;
    Rng dr(42);
    Discriminator disc(dcfg, ds, dr);
    Rng zr(43);
    Tensor z = Tensor::randn({1, gcfg.latent_dim}, zr).detach();
    RayGrid rays = make_rays(Pose{-0.05, M_PI / 2 + 0.03, 1.0}, k8);
    auto live = [&] {
      RenderOutput ro = render_image(gen, z, rays, nullptr);
      Tensor adv = neg(f_logistic(disc.domain_logit(ro.color)));
      Tensor geo = fake_geometry_loss(ro, disc.geometry(ro.color, k8), k8);
      return add(reshape(adv, {}), mul(geo, 0.7));
    };
    // The branch's reading of the fake is a frozen pseudo label, so the
    // numeric side differentiates the objective at fixed labels — which is
    // exactly the function whose gradient backward() reports.
    GeometryPrediction at_base;
    {
      NoGradGuard ng;
      RenderOutput ro = render_image(gen, z, rays, nullptr);
      at_base = disc.geometry(ro.color, k8);
    }
    Tensor k_depth = at_base.depth.detach();
    Tensor k_normal = at_base.normal.detach();
    auto fixed = [&] {
      RenderOutput ro = render_image(gen, z, rays, nullptr);
      Tensor adv = neg(f_logistic(disc.domain_logit(ro.color)));
      GeometryPrediction gf = at_base;
      gf.depth = k_depth;
      gf.normal = k_normal;
      Tensor geo = fake_geometry_loss(ro, gf, k8);
      return add(reshape(adv, {}), mul(geo, 0.7)).item();
    };
    probe_store_grads(live, fixed, gs, gs.names(), 1e-4, comp);
  }

  bool comp_ok = comp.worst <= 5e-2;
  std::ostringstream d;
  d << n_prim << " primitive instances worst rel " << num(worst_prim) << " (tol 1e-3); "
    << comp.coords << " composite coords worst rel " << num(comp.worst) << " (tol 5e-2)";
  return {prim_ok && comp_ok, d.str()};
}

// ---------------------------------------------------------------------------
// Criterion 2 — volume compositing against brute-force transmittance sums.

std::pair<bool, std::string> criterion_volume() {
  NoGradGuard ng;
  Rng rng(77);
  const int R = 1000, S = 16;
  std::vector<double> sigma(R * S), delta(R * S), zvals(R * S), color(R * S * 3);
  for (int r = 0; r < R; ++r) {
    double z = 0.8 + rng.uniform(0.0, 1.0) * 0.02;
    for (int s = 0; s < S; ++s) {
      int i = r * S + s;
      sigma[i] = rng.uniform(0.0, 1.0) < 0.2 ? 0.0 : std::fabs(rng.normal()) * 3.0;
      delta[i] = 0.01 + rng.uniform(0.0, 1.0) * 0.04;
      zvals[i] = z;
      z += delta[i];
      for (int c = 0; c < 3; ++c) color[i * 3 + c] = rng.uniform(0.0, 1.0);
    }
  }
  Composited got = composite_rays(Tensor::from_data({R, S}, sigma),
                                  Tensor::from_data({R, S, 3}, color),
                                  Tensor::from_data({R, S}, delta),
                                  Tensor::from_data({R, S}, zvals), false);
  double worst = 0;
  for (int r = 0; r < R; ++r) {
    double t = 1.0, dep = 0, alp = 0, col[3] = {0, 0, 0};
    for (int s = 0; s < S; ++s) {
      int i = r * S + s;
      double a = 1.0 - std::exp(-sigma[i] * delta[i]);
      double w = t * a;
      dep += w * zvals[i];
      alp += w;
      for (int c = 0; c < 3; ++c) col[c] += w * color[i * 3 + c];
      t *= 1.0 - a;
    }
    worst = std::max(worst, std::fabs(got.depth.values()[r] - dep));
    worst = std::max(worst, std::fabs(got.alpha.values()[r] - alp));
    for (int c = 0; c < 3; ++c)
      worst = std::max(worst, std::fabs(got.color.values()[r * 3 + c] - col[c]));
  }
  bool sums_ok = worst <= 1e-6;

  // A near-delta density spike must place the rendered depth on the spike.
  double worst_delta = 0;
  {
    const int R2 = 100;
    std::vector<double> s2(R2 * S, 0.0), d2(R2 * S, 0.02), z2(R2 * S), c2(R2 * S * 3, 0.5);
    std::vector<double> spike_z(R2);
    for (int r = 0; r < R2; ++r) {
      int k = rng.uniform_int(0, S - 1);
      s2[r * S + k] = 5e3;
      double z = 0.85;
      for (int s = 0; s < S; ++s) {
        z2[r * S + s] = z;
        z += 0.02;
      }
      spike_z[r] = z2[r * S + k];
    }
    Composited spike = composite_rays(Tensor::from_data({R2, S}, s2),
                                      Tensor::from_data({R2, S, 3}, c2),
                                      Tensor::from_data({R2, S}, d2),
                                      Tensor::from_data({R2, S}, z2), false);
    for (int r = 0; r < R2; ++r)
      worst_delta = std::max(worst_delta, std::fabs(spike.depth.values()[r] - spike_z[r]));
  }
  bool delta_ok = worst_delta <= 1e-3;
  std::ostringstream d;
  d << R << " random profiles worst abs " << num(worst) << " (tol 1e-6); delta-density depth err "
    << num(worst_delta) << " (tol 1e-3)";
  return {sums_ok && delta_ok, d.str()};
}

// ---------------------------------------------------------------------------
// Criterion 3 — normals from depth: planes exactly, dataset depth within 3°.

std::pair<bool, std::string> criterion_normals(const fs::path& work) {
  NoGradGuard ng;
  const int res = 32;
  Intrinsics k = intrinsics_from_fov(30.0, res, res);

  Tensor flat = Tensor::full({res, res}, 1.0);
  Tensor n_flat = normal_from_depth(flat, k);
  double worst_flat = 0;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      worst_flat = std::max(worst_flat, std::fabs(n_flat.at({y, x, 0})));
      worst_flat = std::max(worst_flat, std::fabs(n_flat.at({y, x, 1})));
      worst_flat = std::max(worst_flat, std::fabs(n_flat.at({y, x, 2}) + 1.0));
    }
  bool flat_ok = worst_flat <= 1e-6;

  // Analytic plane n·x = n·p0: every lifted sample lies on the plane, so
  // even the one-sided border tangents are exact.
  Vec3 n_true = normalized({0.3, -0.2, -1.0});
  double c = dot(n_true, {0, 0, 1.0});
  std::vector<double> dplane(res * res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      Vec3 dir = lift(x, y, 1.0, k);
      dplane[y * res + x] = c / dot(n_true, dir);
    }
  Tensor n_tilt = normal_from_depth(Tensor::from_data({res, res}, dplane), k);
  double worst_tilt = 0;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      double dp = n_tilt.at({y, x, 0}) * n_true.x + n_tilt.at({y, x, 1}) * n_true.y +
                  n_tilt.at({y, x, 2}) * n_true.z;
      worst_tilt = std::max(worst_tilt, std::acos(std::clamp(dp, -1.0, 1.0)));
    }
  bool tilt_ok = worst_tilt <= 1e-3;

  // Ground-truth depth from generated scenes vs the stored analytic normals.
  fs::path ds = work / "normals_ds";
  if (!fs::exists(ds / "manifest.json")) generate_dataset(ds.string(), 24, res, 99, true, 2);
  DatasetMeta meta = read_manifest(ds.string());
  double angle_sum = 0;
  int64_t n_px = 0;
  for (int i = 0; i < meta.count; ++i) {
    DatasetSample s = load_sample(ds.string(), meta, i);
    Tensor n_pred = normal_from_depth(s.depth, k);
    const std::vector<double>& p = n_pred.values();
    const std::vector<double>& g = s.normal.values();
    for (size_t j = 0; j < p.size(); j += 3) {
      double gn = std::sqrt(g[j] * g[j] + g[j + 1] * g[j + 1] + g[j + 2] * g[j + 2]);
      double dp = (p[j] * g[j] + p[j + 1] * g[j + 1] + p[j + 2] * g[j + 2]) / std::max(gn, 1e-12);
      angle_sum += std::acos(std::clamp(dp, -1.0, 1.0)) * 180.0 / M_PI;
      ++n_px;
    }
  }
  double mean_deg = angle_sum / static_cast<double>(n_px);
  bool ds_ok = mean_deg <= 3.0;

  std::ostringstream d;
  d << "fronto-parallel worst " << num(worst_flat) << " (tol 1e-6); tilted plane worst "
    << num(worst_tilt) << " rad (tol 1e-3); dataset mean " << num(mean_deg) << " deg (tol 3)";
  return {flat_ok && tilt_ok && ds_ok, d.str()};
}

// ---------------------------------------------------------------------------
// Criterion 4 — depth metrics: scale invariance, closed form, warp sanity.

std::pair<bool, std::string> criterion_metrics() {
  NoGradGuard ng;
  Rng rng(55);
  const int res = 16;
  std::vector<double> dv(res * res);
  for (double& v : dv) v = 0.8 + std::fabs(rng.normal()) * 0.3;
  Tensor d = Tensor::from_data({res, res}, dv);
  Tensor ones = Tensor::full({res, res}, 1.0);
  double worst_scale = 0;
  for (double s : {0.5, 2.0, 10.0})
    worst_scale = std::max(worst_scale, side(d, mul(d, s), ones));
  bool scale_ok = worst_scale <= 1e-9;

  // log-residuals {0, 1} → stddev is exactly 1/2.
  Tensor two_pred = Tensor::from_data({1, 2}, {1.0, std::exp(1.0)});
  Tensor two_gt = Tensor::from_data({1, 2}, {1.0, 1.0});
  double two = side(two_pred, two_gt, Tensor::full({1, 2}, 1.0));
  bool two_ok = std::fabs(two - 0.5) <= 1e-12;

  Rng srng(56);
  Scene scene = sample_scene(srng, true);
  Intrinsics k = intrinsics_from_fov(30.0, 32, 32);
  Pose pa{-0.12, M_PI / 2 - 0.03, 1.0};
  Pose pb{0.12, M_PI / 2 + 0.03, 1.0};
  SceneRender ra = render_scene(scene, pa, k, 0.8, 1.2);
  SceneRender rb = render_scene(scene, pb, k, 0.8, 1.2);

  double re_same = reprojection_error(ra.image, ra.depth, pa, ra.image, pa, k);
  bool same_ok = re_same <= 1e-6;

  double re_true = reprojection_error(ra.image, ra.depth, pa, rb.image, pb, k);
  std::vector<double> shuf = ra.depth.values();
  for (size_t i = shuf.size() - 1; i > 0; --i)
    std::swap(shuf[i], shuf[rng.uniform_int(0, static_cast<int>(i))]);
  double re_shuf =
      reprojection_error(ra.image, Tensor::from_data(ra.depth.shape(), shuf), pa, rb.image, pb, k);
  bool warp_ok = re_true <= 0.02 && re_shuf >= 5.0 * re_true;

  std::ostringstream out;
  out << "scale worst " << num(worst_scale) << " (tol 1e-9); two-pixel |err| "
      << num(std::fabs(two - 0.5)) << " (tol 1e-12); RE same " << num(re_same)
      << " (tol 1e-6); RE gt " << num(re_true) << " vs shuffled " << num(re_shuf) << " ("
      << num(re_shuf / std::max(re_true, 1e-12), 3) << "x, need 5x)";
  return {scale_ok && two_ok && same_ok && warp_ok, out.str()};
}

// ---------------------------------------------------------------------------
// Criterion 5 — loss closed forms and schedule anchors.

std::pair<bool, std::string> criterion_losses() {
  double f0 = f_logistic(Tensor::scalar(0.0)).item();
  bool f_ok = std::fabs(f0 + std::log(2.0)) <= 1e-12;

  // For a critic that sums its input, d logit/d image is all-ones, so the
  // squared gradient norm is exactly the pixel count.
  Rng rng(66);
  Tensor img = Tensor::randn({5, 6, 3}, rng);
  double gp = gradient_penalty([](const Tensor& x) { return sum(x); }, img).item();
  bool gp_ok = gp == 5.0 * 6.0 * 3.0;

  double l20k = lambda_ramp(20000, 0.1, 1.0, 20000, 60000);
  double l40k = lambda_ramp(40000, 0.1, 1.0, 20000, 60000);
  double l60k = lambda_ramp(60000, 0.1, 1.0, 20000, 60000);
  double l90k = lambda_ramp(90000, 0.1, 1.0, 20000, 60000);
  bool ramp_ok = l20k == 0.1 && std::fabs(l40k - 0.55) <= 1e-12 && l60k == 1.0 && l90k == 1.0;

  // Perfect reconstruction at unit confidence: both the weighted residual
  // and the log-confidence price vanish.
  ParameterStore ps;
  Rng pr(67);
  PerceptualPyramid per(ps, pr);
  Rng ir(68);
  Tensor image = add(mul(sigmoid(Tensor::randn({16, 16, 3}, ir)), 0.9), 0.05).detach();
  GeometryPrediction g;
  g.recon = image;
  g.recon_flip = image;
  g.conf_pixel = Tensor::full({16, 16, 1}, 1.0);
  g.conf_flip = Tensor::full({16, 16, 1}, 1.0);
  g.conf_percep = Tensor::full({16, 16, 1}, 1.0);
  g.conf_percep_flip = Tensor::full({16, 16, 1}, 1.0);
  double recon = reconstruction_loss(g, image, per).total.item();
  bool recon_ok = std::fabs(recon) <= 1e-12;
  Tape::active().clear();

  std::ostringstream d;
  d << "f(0)+ln2 = " << num(std::fabs(f0 + std::log(2.0))) << " (tol 1e-12); linear-critic gp "
    << num(gp) << " (want 90 exactly); ramp anchors " << num(l20k) << "/" << num(l40k) << "/"
    << num(l60k) << "; perfect-recon loss " << num(recon) << " (tol 1e-12)";
  return {f_ok && gp_ok && ramp_ok && recon_ok, d.str()};
}

// ---------------------------------------------------------------------------
// Criterion 6 — update routing and pseudo-label detachment.

std::map<std::string, std::vector<double>> snapshot(const ParameterStore& store) {
  std::map<std::string, std::vector<double>> s;
  for (const std::string& n : store.names()) s[n] = store.get(n).values();
  return s;
}

std::pair<bool, std::string> criterion_routing(const fs::path& work) {
  fs::path ds = work / "routing_ds";
  if (!fs::exists(ds / "manifest.json")) generate_dataset(ds.string(), 12, 32, 101, true, 2);

  TrainingConfig cfg;
  cfg.mode = "geod";
  cfg.steps = 4;
  cfg.batch = 1;
  cfg.resolution = 32;
  cfg.seed = 3;
  cfg.generator.latent_dim = 8;
  cfg.generator.hidden = 12;
  cfg.generator.layers = 2;
  cfg.generator.n_ray_samples = 6;
  cfg.discriminator.base_channels = 8;
  cfg.schedule.it_start = 0;
  cfg.schedule.it_end = 1;
  Trainer t(cfg, ds.string(), (work / "routing_run").string());

  auto snap = snapshot(t.params());
  StepStats st;
  t.generator_step(0, st);
  int moved_gen = 0;
  bool frozen_d = true;
  for (const auto& [name, vals] : snapshot(t.params())) {
    bool same = vals == snap.at(name);
    if (name.rfind("gen.", 0) == 0 && !same) ++moved_gen;
    if (name.rfind("gen.", 0) != 0 && !same) frozen_d = false;
  }
  bool g_ok = moved_gen > 0 && frozen_d;

  snap = snapshot(t.params());
  t.discriminator_step(1, st);
  int moved_d = 0;
  bool frozen_g = true;
  for (const auto& [name, vals] : snapshot(t.params())) {
    bool same = vals == snap.at(name);
    if (name.rfind("disc.", 0) == 0 && !same) ++moved_d;
    if (name.rfind("gen.", 0) == 0 && !same) frozen_g = false;
  }
  bool d_ok = moved_d > 0 && frozen_g;

  // Pseudo-label detachment: the geometry-agreement term must not build a
  // path into the branch. Backward reaches generator leaves only, while the
  // label values themselves do track branch parameters (recomputed, then
  // frozen).
  Tape::active().clear();
  Rng zr(7);
  Tensor z = Tensor::randn({1, cfg.generator.latent_dim}, zr).detach();
  RayGrid rays = make_rays(Pose{0.08, M_PI / 2 - 0.02, 1.0}, t.intrinsics());
  RenderOutput ro = render_image(t.generator(), z, rays, nullptr);
  GeometryPrediction label = t.discriminator().geometry(ro.color, t.intrinsics());
  GradMap gm = backward(fake_geometry_loss(ro, label, t.intrinsics()));
  bool no_branch_grads = true;
  for (const std::string& n : t.params().names_with_prefix("disc."))
    if (gm.has(t.params().get(n))) no_branch_grads = false;
  int gen_grads = 0;
  for (const std::string& n : t.params().names_with_prefix("gen."))
    if (gm.has(t.params().get(n))) ++gen_grads;
  Tape::active().clear();

  std::vector<double> before = label.depth.values();
  std::string poked = t.params().names_with_prefix("disc.geo.dec.").front();
  std::vector<double> pv = t.params().get(poked).values();
  const std::vector<double> pv_orig = pv;
  for (double& v : pv) v += 0.05;
  t.params().set_values(poked, pv);
  std::vector<double> after;
  {
    NoGradGuard ng;
    after = t.discriminator().geometry(ro.color.detach(), t.intrinsics()).depth.values();
  }
  t.params().set_values(poked, pv_orig);
  bool labels_live = after != before;

  bool ok = g_ok && d_ok && no_branch_grads && gen_grads > 0 && labels_live;
  std::ostringstream d;
  d << "G-step froze non-gen params: " << (frozen_d ? "yes" : "NO") << " (moved " << moved_gen
    << " gen); D-step froze gen: " << (frozen_g ? "yes" : "NO") << " (moved " << moved_d
    << " disc); label grads into branch: " << (no_branch_grads ? "none" : "LEAKED")
    << "; labels track branch params: " << (labels_live ? "yes" : "NO");
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// Criteria 7-9 — desk-scale training comparisons.

struct DeskRun {
  std::string label;
  std::string mode;
  std::string branch;
  uint64_t seed = 1;
  fs::path out;
  EvalReport rep;
  bool ok = false;
  std::string err;
  double minutes = 0;
};

TrainingConfig desk_config(const std::string& mode, const std::string& branch, uint64_t seed) {
  TrainingConfig c;
  c.mode = mode;
  c.steps = kDeskSteps;
  c.batch = kDeskBatch;
  c.resolution = kDeskResolution;
  c.seed = seed;
  c.checkpoint_every = kDeskSteps;  // final checkpoint only
  c.geometry_branch.mode = branch;
  return c;
}

void execute_run(DeskRun& r, const fs::path& data) {
  auto t0 = std::chrono::steady_clock::now();
  try {
    fs::path final_ckpt = r.out / "ckpt_final.bin";
    if (!fs::exists(final_ckpt)) {
      TrainingConfig cfg = desk_config(r.mode, r.branch, r.seed);
      Trainer t(cfg, data.string(), r.out.string());
      TrainResult res = t.run();
      if (res.aborted) {
        r.err = "aborted: " + res.abort_reason;
        return;
      }
    }
    EvalOptions opt;
    opt.seed = 5;
    r.rep = evaluate_checkpoint(final_ckpt.string(), data.string(), opt);
    r.ok = true;
  } catch (const std::exception& e) {
    r.err = e.what();
  }
  r.minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
}

std::vector<DeskRun> run_desk_experiments(const fs::path& work) {
  fs::path data = work / "desk_ds";
  if (!fs::exists(data / "manifest.json"))
    generate_dataset(data.string(), kDeskDatasetCount, kDeskResolution, kDeskDatasetSeed, true, 4);

  std::vector<DeskRun> runs;
  for (uint64_t s : {1, 2, 3}) {
    runs.push_back({"baseline-s" + std::to_string(s), "baseline", "scratch", s});
    runs.push_back({"geod-s" + std::to_string(s), "geod", "scratch", s});
    runs.push_back({"consistency-s" + std::to_string(s), "geod-consistency", "scratch", s});
    runs.push_back({"pretrained-s" + std::to_string(s), "geod", "pretrained", s});
    runs.push_back({"finetuned-s" + std::to_string(s), "geod", "fine_tuned", s});
  }
  for (DeskRun& r : runs) r.out = work / ("run_" + r.label);

  // Memory is the binding constraint (one trainer peaks near 1 GB), so the
  // pool is a fixed small number rather than the core count.
  unsigned pool = kTrainerConcurrency;
  info("training " + std::to_string(runs.size()) + " desk runs: steps=" +
       std::to_string(kDeskSteps) + " batch=" + std::to_string(kDeskBatch) + " res=" +
       std::to_string(kDeskResolution) + " concurrency=" + std::to_string(pool));

  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < pool; ++w)
    workers.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < runs.size();) {
        execute_run(runs[i], data);
        const DeskRun& r = runs[i];
        if (r.ok)
          info("run " + r.label + " done in " + num(r.minutes, 3) + " min: SIDE " +
               num(r.rep.side_median) + " RE " + num(r.rep.re_median));
        else
          info("run " + r.label + " FAILED: " + r.err);
      }
    });
  for (std::thread& w : workers) w.join();
  return runs;
}

std::vector<const DeskRun*> group(const std::vector<DeskRun>& runs, const std::string& mode,
                                  const std::string& branch) {
  std::vector<const DeskRun*> g;
  for (const DeskRun& r : runs)
    if (r.mode == mode && r.branch == branch) g.push_back(&r);
  return g;
}

bool med_of(const std::vector<const DeskRun*>& g, double& side_med, double& re_med) {
  std::vector<double> s, re;
  for (const DeskRun* r : g) {
    if (!r->ok) return false;
    s.push_back(r->rep.side_median);
    re.push_back(r->rep.re_median);
  }
  if (s.empty()) return false;
  side_med = median(s);
  re_med = median(re);
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 10 — inversion against a trained generator.

std::pair<bool, std::string> criterion_inversion(const std::vector<DeskRun>& runs) {
  const DeskRun* src = nullptr;
  for (const DeskRun& r : runs)
    if (r.ok && r.mode == "geod" && r.branch == "scratch") {
      src = &r;
      break;
    }
  if (src == nullptr) return {false, "no finished geometry-supervised run to invert"};

  ParameterStore ps;
  std::string meta = load_checkpoint((src->out / "ckpt_final.bin").string(), ps);
  TrainingConfig cfg = parse_training_config(meta);
  Generator gen(cfg.generator, ps);
  PerceptualPyramid per(ps);
  Intrinsics k = intrinsics_from_fov(cfg.fov_degrees, cfg.resolution, cfg.resolution);

  Rng zr(424);
  Tensor z_star = Tensor::randn({1, cfg.generator.latent_dim}, zr).detach();
  Pose p_star{0.12, M_PI / 2 - 0.02, cfg.pose.radius};
  Tensor target;
  {
    NoGradGuard ng;
    target = render_image(gen, z_star, make_rays(p_star, k), nullptr).color.detach();
  }

  InversionConfig ic;
  ic.steps = 500;
  ic.init_pose = p_star;
  InversionResult latent_fit = invert(gen, target, k, &per, ic);
  bool pixel_ok = latent_fit.pixel_l1 <= 0.02;

  InversionConfig pc;
  pc.steps = 500;
  pc.optimize_pose = true;
  pc.init_pose = Pose{p_star.yaw - 0.2, p_star.pitch, p_star.radius};
  InversionResult pose_fit = invert(gen, target, k, &per, pc);
  double yaw_err = std::fabs(pose_fit.pose.yaw - p_star.yaw);
  bool yaw_ok = yaw_err <= 0.05;

  std::ostringstream d;
  d << "self-inversion pixel L1 " << num(latent_fit.pixel_l1) << " at step "
    << latent_fit.best_step << " (tol 0.02); yaw recovered to " << num(yaw_err)
    << " rad from a 0.2 offset (tol 0.05)";
  return {pixel_ok && yaw_ok, d.str()};
}

}  // namespace

int main() {
  fs::path work = fs::current_path() / "acceptance_scratch";
  fs::create_directories(work);

  run_criterion(1, "autodiff vs finite differences", criterion_autodiff);
  run_criterion(2, "volume rendering oracle", criterion_volume);
  run_criterion(3, "normal extraction", [&] { return criterion_normals(work); });
  run_criterion(4, "depth metrics", criterion_metrics);
  run_criterion(5, "loss closed forms", criterion_losses);
  run_criterion(6, "gradient routing", [&] { return criterion_routing(work); });

  std::vector<DeskRun> runs = run_desk_experiments(work);

  run_criterion(7, "geometry supervision headline", [&]() -> std::pair<bool, std::string> {
    double sb, rb, sg, rg;
    if (!med_of(group(runs, "baseline", "scratch"), sb, rb) ||
        !med_of(group(runs, "geod", "scratch"), sg, rg))
      return {false, "a run in the baseline/geod groups failed"};
    bool ok = sg <= 0.8 * sb && rg <= rb;
    std::ostringstream d;
    d << "median SIDE " << num(sg) << " vs baseline " << num(sb) << " ("
      << num(sg / sb, 3) << "x, need <=0.8); median RE " << num(rg) << " vs " << num(rb);
    return {ok, d.str()};
  });

  run_criterion(8, "consistency extension", [&]() -> std::pair<bool, std::string> {
    double sg, rg, sc, rc;
    if (!med_of(group(runs, "geod", "scratch"), sg, rg) ||
        !med_of(group(runs, "geod-consistency", "scratch"), sc, rc))
      return {false, "a run in the geod/consistency groups failed"};
    bool ok = rc < rg && sc <= 1.10 * sg;
    std::ostringstream d;
    d << "median RE " << num(rc) << " vs " << num(rg) << " (must drop); median SIDE " << num(sc)
      << " vs " << num(sg) << " (" << num(sc / sg, 3) << "x, cap 1.10)";
    return {ok, d.str()};
  });

  run_criterion(9, "branch pretraining ablation", [&]() -> std::pair<bool, std::string> {
    double ss, rs, sp, rp, sf, rf;
    if (!med_of(group(runs, "geod", "scratch"), ss, rs) ||
        !med_of(group(runs, "geod", "pretrained"), sp, rp) ||
        !med_of(group(runs, "geod", "fine_tuned"), sf, rf))
      return {false, "a run in the branch-mode groups failed"};
    bool ok = sp <= 1.10 * ss;
    std::ostringstream d;
    d << "SIDE/RE by branch mode: scratch " << num(ss) << "/" << num(rs) << ", pretrained "
      << num(sp) << "/" << num(rp) << " (" << num(sp / ss, 3) << "x scratch, cap 1.10)"
      << ", fine_tuned " << num(sf) << "/" << num(rf);
    return {ok, d.str()};
  });

  run_criterion(10, "inversion on a trained generator",
                [&] { return criterion_inversion(runs); });

  std::printf("%d/10 criteria passed\n", 10 - g_failures);
  return g_failures;
}
