#include "geod/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "geod/image_io.hpp"
#include "geod/shading.hpp"
#include "json.hpp"

namespace geod {

namespace fs = std::filesystem;
using nlohmann::json;

Scene sample_scene(Rng& rng, bool symmetric) {
  Scene scene;
  scene.symmetric = symmetric;
  // Bump centers/widths are kept conservative so every surface point seen
  // from every pose stays strictly inside the [near, far] sampling segment.
  // Budget: sum of |amp| over all bumps stays <= 0.10, which bounds |h|
  // everywhere and keeps ray hits strictly inside the sampling bracket.
  int pairs = rng.uniform_int(1, 2);
  double budget = 0.10;
  double used = 0.0;
  for (int i = 0; i < pairs; ++i) {
    double avail = (budget - used) / 2;
    if (avail < 0.03) break;
    GaussianBump b;
    b.cx = rng.uniform(0.05, 0.18);
    b.cy = rng.uniform(-0.16, 0.16);
    b.sigma = rng.uniform(0.06, 0.13);
    b.amp = rng.uniform(0.03, std::min(0.055, avail)) * (rng.uniform(0, 1) < 0.35 ? -1.0 : 1.0);
    used += 2 * std::fabs(b.amp);
    if (symmetric) {
      GaussianBump mirror = b;
      mirror.cx = -b.cx;
      scene.bumps.push_back(b);
      scene.bumps.push_back(mirror);
    } else {
      b.cx = rng.uniform(-0.18, 0.18);
      scene.bumps.push_back(b);
      GaussianBump extra;
      extra.cx = rng.uniform(-0.18, 0.18);
      extra.cy = rng.uniform(-0.16, 0.16);
      extra.sigma = rng.uniform(0.06, 0.13);
      extra.amp = rng.uniform(-0.055, 0.055);
      while (std::fabs(extra.amp) < 0.02) extra.amp = rng.uniform(-0.055, 0.055);
      scene.bumps.push_back(extra);
    }
  }
  scene.albedo_base = {rng.uniform(0.35, 0.9), rng.uniform(0.35, 0.9), rng.uniform(0.35, 0.9)};
  scene.albedo_amp = rng.uniform(0.1, 0.28);
  scene.albedo_freq_x = rng.uniform(4.0, 9.0);
  scene.albedo_freq_y = rng.uniform(4.0, 9.0);
  scene.albedo_phase_x = symmetric ? 0.0 : rng.uniform(0, 2 * M_PI);
  scene.albedo_phase_y = rng.uniform(0, 2 * M_PI);
  scene.light.k_ambient = rng.uniform(0.30, 0.42);
  scene.light.k_diffuse = rng.uniform(0.50, 0.98 - scene.light.k_ambient);
  double lx = symmetric ? 0.0 : rng.uniform(-0.35, 0.35);
  double ly = rng.uniform(-0.35, 0.35);
  scene.light.dir = normalized(Vec3{lx, ly, 1.0});
  return scene;
}

double height_at(const Scene& scene, double x, double y) {
  double h = 0;
  for (const auto& b : scene.bumps) {
    double dx = x - b.cx, dy = y - b.cy;
    h += b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
  }
  return h;
}

void height_gradient(const Scene& scene, double x, double y, double& hx, double& hy) {
  hx = 0;
  hy = 0;
  for (const auto& b : scene.bumps) {
    double dx = x - b.cx, dy = y - b.cy;
    double g = b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
    hx += g * (-dx / (b.sigma * b.sigma));
    hy += g * (-dy / (b.sigma * b.sigma));
  }
}

Vec3 albedo_at(const Scene& scene, double x, double y) {
  double m = 1.0 + scene.albedo_amp * std::cos(scene.albedo_freq_x * x + scene.albedo_phase_x) *
                       std::cos(scene.albedo_freq_y * y + scene.albedo_phase_y);
  Vec3 a = scene.albedo_base * m;
  return {std::clamp(a.x, 0.05, 1.0), std::clamp(a.y, 0.05, 1.0), std::clamp(a.z, 0.05, 1.0)};
}

SceneRender render_scene(const Scene& scene, const Pose& pose, const Intrinsics& K, double near,
                         double far) {
  Frame f = pose_frame(pose);
  int h = K.height, w = K.width;
  std::vector<double> depth_v(static_cast<size_t>(h) * w);
  std::vector<double> normal_v(static_cast<size_t>(h) * w * 3);
  std::vector<double> albedo_v(static_cast<size_t>(h) * w * 3);
  std::vector<double> nworld_v(static_cast<size_t>(h) * w * 3);

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double a = (u - K.cx) / K.fx, b = (v - K.cy) / K.fy;
      // Unnormalized direction with unit forward component: depth == t.
      Vec3 dir = f.right * a + f.down * b + f.forward;
      auto surf = [&](double t) {
        Vec3 p = f.center + dir * t;
        return p.z - height_at(scene, p.x, p.y);
      };
      double lo = near, hi = far;
      double flo = surf(lo), fhi = surf(hi);
      GEOD_CHECK(flo > 0 && fhi < 0, "scene surface escapes the [near,far] bracket at pixel ("
                                         << u << "," << v << "): F(near)=" << flo
                                         << " F(far)=" << fhi);
      double t = (lo * fhi - hi * flo) / (fhi - flo);  // secant init
      for (int it = 0; it < 40; ++it) {
        Vec3 p = f.center + dir * t;
        double hx, hy;
        height_gradient(scene, p.x, p.y, hx, hy);
        double ft = p.z - height_at(scene, p.x, p.y);
        double dft = dir.z - hx * dir.x - hy * dir.y;
        if (ft > 0) {
          lo = t;
        } else {
          hi = t;
        }
        double step = ft / dft;
        double tn = t - step;
        if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);  // bisection fallback
        if (std::fabs(tn - t) < 1e-13) {
          t = tn;
          break;
        }
        t = tn;
      }
      Vec3 p = f.center + dir * t;
      double hx, hy;
      height_gradient(scene, p.x, p.y, hx, hy);
      Vec3 n_world = normalized(Vec3{-hx, -hy, 1.0});
      Vec3 n_cam{dot(n_world, f.right), dot(n_world, f.down), dot(n_world, f.forward)};
      int64_t i = static_cast<int64_t>(v) * w + u;
      depth_v[i] = t;
      normal_v[i * 3 + 0] = n_cam.x;
      normal_v[i * 3 + 1] = n_cam.y;
      normal_v[i * 3 + 2] = n_cam.z;
      nworld_v[i * 3 + 0] = n_world.x;
      nworld_v[i * 3 + 1] = n_world.y;
      nworld_v[i * 3 + 2] = n_world.z;
      Vec3 alb = albedo_at(scene, p.x, p.y);
      albedo_v[i * 3 + 0] = alb.x;
      albedo_v[i * 3 + 1] = alb.y;
      albedo_v[i * 3 + 2] = alb.z;
    }
  }
  SceneRender out;
  out.depth = Tensor::from_data({h, w}, std::move(depth_v));
  out.normal_cam = Tensor::from_data({h, w, 3}, std::move(normal_v));
  LightT light{Tensor::from_data({1, 1}, {scene.light.k_ambient}),
               Tensor::from_data({1, 1}, {scene.light.k_diffuse}),
               Tensor::from_data({1, 3}, {scene.light.dir.x, scene.light.dir.y, scene.light.dir.z})};
  NoGradGuard ng;
  out.image = lambertian_shade(Tensor::from_data({h, w, 3}, std::move(albedo_v)),
                               Tensor::from_data({h, w, 3}, std::move(nworld_v)), light);
  return out;
}

// ---------------------------------------------------------------------------
// On-disk dataset
// ---------------------------------------------------------------------------

namespace {

std::string sample_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

uint64_t sample_seed(uint64_t dataset_seed, int index) {
  // splitmix64 of (seed, index) so per-sample streams are independent of
  // generation order (workers may interleave).
  uint64_t z = dataset_seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void generate_dataset(const std::string& dir, int count, int resolution, uint64_t seed,
                      bool symmetric, int workers) {
  GEOD_CHECK(count > 0, "dataset count must be positive");
  GEOD_CHECK(resolution >= 8 && resolution <= 256, "resolution must be in [8,256]");
  GEOD_CHECK(workers >= 1, "workers must be >= 1");
  fs::create_directories(fs::path(dir) / "img");
  fs::create_directories(fs::path(dir) / "depth");
  fs::create_directories(fs::path(dir) / "normal");

  DatasetMeta meta;
  meta.resolution = resolution;
  meta.count = count;
  meta.symmetric = symmetric;
  meta.seed = seed;
  meta.poses.resize(count);
  Intrinsics K = intrinsics_from_fov(meta.fov_degrees, resolution, resolution);
  PoseRange range{meta.yaw_range, meta.pitch_range, meta.radius};

  auto make_one = [&](int index) {
    Rng rng(sample_seed(seed, index));
    Scene scene = sample_scene(rng, symmetric);
    Pose pose = sample_pose(rng, range);
    SceneRender render = render_scene(scene, pose, K, meta.near, meta.far);
    std::string name = sample_name(index);
    write_png((fs::path(dir) / "img" / (name + ".png")).string(), render.image);
    write_f32((fs::path(dir) / "depth" / (name + ".f32")).string(), render.depth);
    NoGradGuard ng;
    write_png((fs::path(dir) / "normal" / (name + ".png")).string(),
              encode_normal_map(render.normal_cam));
    meta.poses[index] = pose;
  };

  if (workers == 1) {
    for (int i = 0; i < count; ++i) make_one(i);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (int i = t; i < count; i += workers) make_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  json m;
  m["version"] = meta.version;
  m["resolution"] = meta.resolution;
  m["count"] = meta.count;
  m["fov_degrees"] = meta.fov_degrees;
  m["radius"] = meta.radius;
  m["near"] = meta.near;
  m["far"] = meta.far;
  m["d_min"] = meta.d_min;
  m["d_max"] = meta.d_max;
  m["yaw_range"] = meta.yaw_range;
  m["pitch_range"] = meta.pitch_range;
  m["symmetric"] = meta.symmetric;
  m["seed"] = meta.seed;
  json samples = json::array();
  for (int i = 0; i < count; ++i) {
    std::string name = sample_name(i);
    samples.push_back({{"image", "img/" + name + ".png"},
                       {"depth", "depth/" + name + ".f32"},
                       {"normal", "normal/" + name + ".png"},
                       {"yaw", meta.poses[i].yaw},
                       {"pitch", meta.poses[i].pitch},
                       {"radius", meta.poses[i].radius}});
  }
  m["samples"] = std::move(samples);
  std::ofstream out(fs::path(dir) / "manifest.json");
  GEOD_CHECK(out.good(), "cannot write manifest in '" << dir << "'");
  out << m.dump(2) << "\n";
}

DatasetMeta read_manifest(const std::string& dir) {
  fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  GEOD_CHECK(in.good(), "missing dataset manifest '" << mpath.string() << "'");
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw Error("corrupt manifest '" + mpath.string() + "': " + e.what());
  }
  DatasetMeta meta;
  try {
    meta.version = m.at("version");
    meta.resolution = m.at("resolution");
    meta.count = m.at("count");
    meta.fov_degrees = m.at("fov_degrees");
    meta.radius = m.at("radius");
    meta.near = m.at("near");
    meta.far = m.at("far");
    meta.d_min = m.at("d_min");
    meta.d_max = m.at("d_max");
    meta.yaw_range = m.at("yaw_range");
    meta.pitch_range = m.at("pitch_range");
    meta.symmetric = m.at("symmetric");
    meta.seed = m.at("seed");
    const json& samples = m.at("samples");
    GEOD_CHECK(static_cast<int>(samples.size()) == meta.count,
               "manifest sample list length " << samples.size() << " != count " << meta.count);
    meta.poses.reserve(samples.size());
    for (const auto& s : samples) {
      meta.poses.push_back(Pose{s.at("yaw"), s.at("pitch"), s.at("radius")});
    }
  } catch (const json::exception& e) {
    throw Error("manifest '" + mpath.string() + "' missing fields: " + e.what());
  }
  return meta;
}

DatasetSample load_sample(const std::string& dir, const DatasetMeta& meta, int index) {
  GEOD_CHECK(index >= 0 && index < meta.count,
             "sample index " << index << " out of range [0," << meta.count << ")");
  std::string name = sample_name(index);
  DatasetSample s;
  s.index = index;
  s.pose = meta.poses[index];
  fs::path base(dir);
  s.image = read_png((base / "img" / (name + ".png")).string());
  GEOD_CHECK(s.image.dim(0) == meta.resolution && s.image.dim(1) == meta.resolution,
             "sample " << index << ": image size " << shape_str(s.image.shape())
                       << " does not match manifest resolution " << meta.resolution);
  s.depth = read_f32((base / "depth" / (name + ".f32")).string(), meta.resolution, meta.resolution);
  NoGradGuard ng;
  s.normal = decode_normal_map(read_png((base / "normal" / (name + ".png")).string()));
  return s;
}

SampleShuffler::SampleShuffler(int count, uint64_t seed) : rng_(seed) {
  GEOD_CHECK(count > 0, "SampleShuffler: empty dataset");
  order_.resize(count);
  for (int i = 0; i < count; ++i) order_[i] = i;
}

int SampleShuffler::next() {
  if (pos_ == 0) {
    // Fisher-Yates, reseeded implicitly by continuing the stream.
    for (size_t i = order_.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order_[i - 1], order_[j]);
    }
  }
  int out = order_[pos_];
  pos_ = (pos_ + 1) % order_.size();
  return out;
}

}  // namespace geod
