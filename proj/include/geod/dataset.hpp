#pragma once

#include <string>
#include <vector>

#include "geod/camera.hpp"
#include "geod/tensor.hpp"

namespace geod {

// Scenes are smooth mirror-symmetric heightfields z = h(x, y) built from
// Gaussian bumps, textured with a low-frequency albedo and lit by a fixed
// directional light. Everything about a scene is analytic, so ground-truth
// depth and normals come from root-finding and closed-form gradients rather
// than from the renderer under test.

struct GaussianBump {
  double cx = 0, cy = 0, sigma = 0.1, amp = 0.05;
};

struct SceneLight {
  double k_ambient = 0.35;
  double k_diffuse = 0.55;
  Vec3 dir{0, 0, 1};  // unit, from surface toward the light (world space)
};

struct Scene {
  std::vector<GaussianBump> bumps;
  Vec3 albedo_base{0.6, 0.5, 0.4};
  double albedo_amp = 0.2;
  double albedo_freq_x = 6.0, albedo_freq_y = 5.0;
  double albedo_phase_x = 0.0;  // stays 0 for symmetric scenes (even in x)
  double albedo_phase_y = 0.0;
  SceneLight light;
  bool symmetric = true;
};

Scene sample_scene(Rng& rng, bool symmetric);

double height_at(const Scene& scene, double x, double y);
// (dh/dx, dh/dy)
void height_gradient(const Scene& scene, double x, double y, double& hx, double& hy);
Vec3 albedo_at(const Scene& scene, double x, double y);

struct SceneRender {
  Tensor image;       // [H,W,3] in [0,1]
  Tensor depth;       // [H,W] camera-space z of the surface hit
  Tensor normal_cam;  // [H,W,3] unit, camera space (z component < 0: faces camera)
};

// Analytic ray cast (Newton with a bisection bracket on [near, far]).
SceneRender render_scene(const Scene& scene, const Pose& pose, const Intrinsics& K, double near,
                         double far);

// On-disk layout under `dir`:
//   manifest.json
//   img/NNNNNN.png  depth/NNNNNN.f32  normal/NNNNNN.png
struct DatasetMeta {
  int version = 1;
  int resolution = 32;
  int count = 0;
  double fov_degrees = 30.0;
  double radius = 1.0, near = 0.8, far = 1.2;
  double d_min = 0.88, d_max = 1.12;
  double yaw_range = 0.3, pitch_range = 0.155;
  bool symmetric = true;
  uint64_t seed = 0;
  std::vector<Pose> poses;  // one per sample, index-aligned
};

void generate_dataset(const std::string& dir, int count, int resolution, uint64_t seed,
                      bool symmetric, int workers);

DatasetMeta read_manifest(const std::string& dir);

struct DatasetSample {
  Tensor image;   // [H,W,3]
  Tensor depth;   // [H,W]
  Tensor normal;  // [H,W,3] unit camera-space (decoded from PNG)
  Pose pose;
  int index = 0;
};

DatasetSample load_sample(const std::string& dir, const DatasetMeta& meta, int index);

// Deterministic shuffled stream of sample indices for training.
class SampleShuffler {
 public:
  SampleShuffler(int count, uint64_t seed);
  int next();

 private:
  std::vector<int> order_;
  size_t pos_ = 0;
  Rng rng_;
};

}  // namespace geod
