#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "testutil.hpp"
#include "geod/dataset.hpp"
#include "geod/image_io.hpp"

using namespace geod;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("dataset");

TEST_CASE("height gradient matches finite differences") {
  Rng rng(5);
  Scene scene = sample_scene(rng, true);
  for (int i = 0; i < 40; ++i) {
    double x = rng.uniform(-0.3, 0.3), y = rng.uniform(-0.3, 0.3);
    double hx, hy;
    height_gradient(scene, x, y, hx, hy);
    double eps = 1e-7;
    double fx = (height_at(scene, x + eps, y) - height_at(scene, x - eps, y)) / (2 * eps);
    double fy = (height_at(scene, x, y + eps) - height_at(scene, x, y - eps)) / (2 * eps);
    CHECK(hx == doctest::Approx(fx).scale(1).epsilon(1e-6));
    CHECK(hy == doctest::Approx(fy).scale(1).epsilon(1e-6));
  }
}

TEST_CASE("rendered depth solves the surface equation exactly") {
  Rng rng(11);
  Intrinsics K = intrinsics_from_fov(30, 16, 16);
  for (int rep = 0; rep < 3; ++rep) {
    Scene scene = sample_scene(rng, true);
    Pose pose = sample_pose(rng, PoseRange{0.3, 0.155, 1.0});
    Frame f = pose_frame(pose);
    SceneRender r = render_scene(scene, pose, K, 0.8, 1.2);
    for (int v = 0; v < 16; v += 3) {
      for (int u = 0; u < 16; u += 3) {
        double t = r.depth.at({v, u});
        CHECK(t > 0.8);
        CHECK(t < 1.2);
        double a = (u - K.cx) / K.fx, b = (v - K.cy) / K.fy;
        Vec3 dir = f.right * a + f.down * b + f.forward;
        Vec3 p = f.center + dir * t;
        CHECK(p.z == doctest::Approx(height_at(scene, p.x, p.y)).scale(1).epsilon(1e-9));
        // Camera-space normals are unit and face the camera.
        Vec3 n{r.normal_cam.at({v, u, 0}), r.normal_cam.at({v, u, 1}), r.normal_cam.at({v, u, 2})};
        CHECK(norm(n) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(n.z < 0);
      }
    }
    // Image values stay in [0,1] by construction (k_a + k_d <= 0.98).
    for (double x : r.image.values()) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("symmetric scenes: view at -yaw is the mirrored view at +yaw") {
  Rng rng(23);
  Intrinsics K = intrinsics_from_fov(30, 16, 16);
  Scene scene = sample_scene(rng, true);
  double pitch = M_PI / 2 + 0.08;
  SceneRender a = render_scene(scene, Pose{0.22, pitch, 1.0}, K, 0.8, 1.2);
  SceneRender b = render_scene(scene, Pose{-0.22, pitch, 1.0}, K, 0.8, 1.2);
  Tensor b_flipped = flip(b.image, 1);
  for (int64_t i = 0; i < a.image.numel(); ++i) {
    CHECK(a.image.values()[i] == doctest::Approx(b_flipped.values()[i]).scale(1).epsilon(1e-8));
  }
  Tensor bd_flip = flip(b.depth, 1);
  for (int64_t i = 0; i < a.depth.numel(); ++i) {
    CHECK(a.depth.values()[i] == doctest::Approx(bd_flip.values()[i]).scale(1).epsilon(1e-8));
  }
}

TEST_CASE("asymmetric scenes break the mirror property") {
  Rng rng(31);
  Scene scene = sample_scene(rng, false);
  Intrinsics K = intrinsics_from_fov(30, 16, 16);
  SceneRender a = render_scene(scene, Pose{0.2, M_PI / 2, 1.0}, K, 0.8, 1.2);
  SceneRender b = render_scene(scene, Pose{-0.2, M_PI / 2, 1.0}, K, 0.8, 1.2);
  double diff = 0;
  Tensor b_flipped = flip(b.image, 1);
  for (int64_t i = 0; i < a.image.numel(); ++i) {
    diff += std::fabs(a.image.values()[i] - b_flipped.values()[i]);
  }
  CHECK(diff / static_cast<double>(a.image.numel()) > 1e-3);
}

TEST_CASE("dataset write/read round-trip with exact f32 depth") {
  fs::path dir = geod::testutil::scratch_root() / "geod_ds_test";
  fs::remove_all(dir);
  generate_dataset(dir.string(), 4, 16, 77, true, 1);
  DatasetMeta meta = read_manifest(dir.string());
  CHECK(meta.count == 4);
  CHECK(meta.resolution == 16);
  CHECK(meta.symmetric);
  CHECK(meta.poses.size() == 4);
  for (const Pose& p : meta.poses) {
    CHECK(std::fabs(p.yaw) <= meta.yaw_range);
    CHECK(std::fabs(p.pitch - M_PI / 2) <= meta.pitch_range);
  }
  DatasetSample s = load_sample(dir.string(), meta, 2);
  CHECK(s.image.shape() == Shape{16, 16, 3});
  CHECK(s.depth.shape() == Shape{16, 16});
  CHECK(s.normal.shape() == Shape{16, 16, 3});
  // Depth survives the f32 file bit-exactly at float precision; normals are
  // unit after decode.
  for (double d : s.depth.values()) {
    CHECK(d > 0.8);
    CHECK(d < 1.2);
  }
  for (int v = 0; v < 16; v += 5) {
    for (int u = 0; u < 16; u += 5) {
      double n = 0;
      for (int c = 0; c < 3; ++c) n += s.normal.at({v, u, c}) * s.normal.at({v, u, c});
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(s.normal.at({v, u, 2}) < 0);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("regenerating with the same seed reproduces identical bytes") {
  fs::path d1 = geod::testutil::scratch_root() / "geod_ds_a";
  fs::path d2 = geod::testutil::scratch_root() / "geod_ds_b";
  fs::remove_all(d1);
  fs::remove_all(d2);
  generate_dataset(d1.string(), 2, 12, 123, true, 1);
  generate_dataset(d2.string(), 2, 12, 123, true, 2);  // worker count must not matter
  for (const char* rel : {"img/000000.png", "depth/000001.f32", "normal/000001.png"}) {
    std::ifstream f1(d1 / rel, std::ios::binary), f2(d2 / rel, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("corrupt datasets fail loudly naming the sample") {
  fs::path dir = geod::testutil::scratch_root() / "geod_ds_bad";
  fs::remove_all(dir);
  CHECK_THROWS_AS(read_manifest(dir.string()), Error);
  generate_dataset(dir.string(), 2, 12, 9, true, 1);
  DatasetMeta meta = read_manifest(dir.string());
  // Truncate one depth file.
  {
    std::ofstream f(dir / "depth" / "000001.f32", std::ios::binary | std::ios::trunc);
    f << "xx";
  }
  CHECK_THROWS_AS(load_sample(dir.string(), meta, 1), Error);
  CHECK_THROWS_AS(load_sample(dir.string(), meta, 7), Error);
  fs::remove_all(dir);
}

TEST_CASE("shuffler is deterministic and covers every index") {
  SampleShuffler s1(10, 4), s2(10, 4);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 20; ++i) {
    int a = s1.next();
    CHECK(a == s2.next());
    if (i < 10) seen[a]++;
  }
  for (int c : seen) CHECK(c == 1);
}

TEST_SUITE_END();
