#include <cmath>

#include "doctest.h"
#include "geod/camera.hpp"

using namespace geod;

TEST_SUITE_BEGIN("camera");

TEST_CASE("canonical pose: yaw 0 / pitch pi/2 looks down -z from (0,0,r)") {
  Frame f = pose_frame(Pose{0, M_PI / 2, 2.5});
  CHECK(f.center.x == doctest::Approx(0));
  CHECK(f.center.y == doctest::Approx(0));
  CHECK(f.center.z == doctest::Approx(2.5));
  CHECK(f.forward.z == doctest::Approx(-1));
  CHECK(f.right.x == doctest::Approx(1));
  CHECK(f.down.y == doctest::Approx(-1));
}

TEST_CASE("frames are right-handed orthonormal for random poses") {
  Rng rng(42);
  for (int i = 0; i < 30; ++i) {
    Pose p{rng.uniform(-0.5, 0.5), M_PI / 2 + rng.uniform(-0.3, 0.3), rng.uniform(0.5, 2.0)};
    Frame f = pose_frame(p);
    CHECK(norm(f.right) == doctest::Approx(1).epsilon(1e-12));
    CHECK(norm(f.down) == doctest::Approx(1).epsilon(1e-12));
    CHECK(norm(f.forward) == doctest::Approx(1).epsilon(1e-12));
    CHECK(dot(f.right, f.down) == doctest::Approx(0).scale(1).epsilon(1e-12));
    CHECK(dot(f.right, f.forward) == doctest::Approx(0).scale(1).epsilon(1e-12));
    Vec3 z = cross(f.right, f.down);
    CHECK(z.x == doctest::Approx(f.forward.x).scale(1).epsilon(1e-12));
    CHECK(z.y == doctest::Approx(f.forward.y).scale(1).epsilon(1e-12));
    CHECK(z.z == doctest::Approx(f.forward.z).scale(1).epsilon(1e-12));
    // Camera looks at the origin.
    Vec3 origin_cam = world_to_camera(f, Vec3{0, 0, 0});
    CHECK(origin_cam.x == doctest::Approx(0).scale(1).epsilon(1e-12));
    CHECK(origin_cam.y == doctest::Approx(0).scale(1).epsilon(1e-12));
    CHECK(origin_cam.z == doctest::Approx(p.radius).epsilon(1e-12));
  }
}

TEST_CASE("degenerate pitch is rejected") {
  CHECK_THROWS_AS(pose_frame(Pose{0.1, 0.0, 1.0}), Error);
  CHECK_THROWS_AS(pose_frame(Pose{0.1, M_PI, 1.0}), Error);
  CHECK_THROWS_AS(pose_frame(Pose{0.1, M_PI / 2, 0.0}), Error);
}

TEST_CASE("project(lift) is the identity for random pixels and depths") {
  Intrinsics K = intrinsics_from_fov(30, 32, 32);
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    double u = rng.uniform(0, 31), v = rng.uniform(0, 31), d = rng.uniform(0.2, 5.0);
    Vec3 p = lift(u, v, d, K);
    CHECK(p.z == doctest::Approx(d));
    Projection pr = project(p, K);
    REQUIRE(pr.valid);
    CHECK(pr.u == doctest::Approx(u).epsilon(1e-10));
    CHECK(pr.v == doctest::Approx(v).epsilon(1e-10));
  }
  CHECK_FALSE(project(Vec3{0, 0, -1}, K).valid);
}

TEST_CASE("world/camera transforms round-trip and compose") {
  Rng rng(9);
  Pose a{0.2, M_PI / 2 - 0.1, 1.0};
  Pose b{-0.25, M_PI / 2 + 0.12, 1.0};
  Frame fa = pose_frame(a), fb = pose_frame(b);
  Rigid ab = relative_transform(a, b);
  for (int i = 0; i < 50; ++i) {
    Vec3 w{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2)};
    Vec3 cam = world_to_camera(fa, w);
    Vec3 back = camera_to_world(fa, cam);
    CHECK(back.x == doctest::Approx(w.x).scale(1).epsilon(1e-12));
    CHECK(back.y == doctest::Approx(w.y).scale(1).epsilon(1e-12));
    CHECK(back.z == doctest::Approx(w.z).scale(1).epsilon(1e-12));
    // X_b = R X_a + t agrees with going through world space.
    Vec3 via_world = world_to_camera(fb, w);
    Vec3 direct{ab.R[0] * cam.x + ab.R[1] * cam.y + ab.R[2] * cam.z + ab.t.x,
                ab.R[3] * cam.x + ab.R[4] * cam.y + ab.R[5] * cam.z + ab.t.y,
                ab.R[6] * cam.x + ab.R[7] * cam.y + ab.R[8] * cam.z + ab.t.z};
    CHECK(direct.x == doctest::Approx(via_world.x).scale(1).epsilon(1e-10));
    CHECK(direct.y == doctest::Approx(via_world.y).scale(1).epsilon(1e-10));
    CHECK(direct.z == doctest::Approx(via_world.z).scale(1).epsilon(1e-10));
  }
  Rigid aa = relative_transform(a, a);
  CHECK(aa.R[0] == doctest::Approx(1));
  CHECK(aa.R[4] == doctest::Approx(1));
  CHECK(aa.R[8] == doctest::Approx(1));
  CHECK(norm(aa.t) == doctest::Approx(0).scale(1).epsilon(1e-12));
}

TEST_CASE("rays: unit forward component, correct center, principal direction") {
  Intrinsics K = intrinsics_from_fov(30, 8, 8);
  Pose p{0.15, M_PI / 2 + 0.05, 1.0};
  Frame f = pose_frame(p);
  RayGrid rays = make_rays(p, K);
  REQUIRE(rays.dirs.shape() == Shape{64, 3});
  for (int i = 0; i < 64; ++i) {
    Vec3 d{rays.dirs.at({i, 0}), rays.dirs.at({i, 1}), rays.dirs.at({i, 2})};
    // Unnormalized dirs have forward component exactly 1...
    CHECK(dot(d, f.forward) == doctest::Approx(1.0).epsilon(1e-12));
    // ...and norms holds the geometric length.
    CHECK(norm(d) == doctest::Approx(rays.norms.at({i, 0})).epsilon(1e-12));
    CHECK(rays.origins.at({i, 0}) == doctest::Approx(f.center.x));
  }
  // Marching t along a ray lands at camera depth t.
  Rng rng(3);
  for (int iter = 0; iter < 20; ++iter) {
    int i = rng.uniform_int(0, 63);
    double t = rng.uniform(0.5, 1.5);
    Vec3 o{rays.origins.at({i, 0}), rays.origins.at({i, 1}), rays.origins.at({i, 2})};
    Vec3 d{rays.dirs.at({i, 0}), rays.dirs.at({i, 1}), rays.dirs.at({i, 2})};
    Vec3 x = o + d * t;
    CHECK(world_to_camera(f, x).z == doctest::Approx(t).epsilon(1e-12));
  }
}

TEST_CASE("rays are differentiable in yaw: matches finite differences") {
  Intrinsics K = intrinsics_from_fov(30, 4, 4);
  Tape::active().clear();
  auto loss_of = [&](double yaw_val, bool graph) -> Tensor {
    Tensor yaw = Tensor::from_data({1, 1}, {yaw_val});
    if (graph) yaw.set_requires_grad(true);
    RayGrid rays = make_rays(yaw, Tensor::from_data({1, 1}, {M_PI / 2 - 0.07}), 1.0, K);
    Tensor weights = Tensor::from_data({16, 3}, [] {
      std::vector<double> w(48);
      for (size_t i = 0; i < w.size(); ++i) w[i] = 0.01 * static_cast<double>(i) - 0.2;
      return w;
    }());
    return add(sum(mul(rays.dirs, weights)), sum(mul(rays.origins, weights)));
  };
  Tensor yaw = Tensor::from_data({1, 1}, {0.12});
  yaw.set_requires_grad(true);
  RayGrid rays = make_rays(yaw, Tensor::from_data({1, 1}, {M_PI / 2 - 0.07}), 1.0, K);
  Tensor weights = Tensor::from_data({16, 3}, [] {
    std::vector<double> w(48);
    for (size_t i = 0; i < w.size(); ++i) w[i] = 0.01 * static_cast<double>(i) - 0.2;
    return w;
  }());
  Tensor loss = add(sum(mul(rays.dirs, weights)), sum(mul(rays.origins, weights)));
  GradMap gm = backward(loss);
  double analytic = gm.get(yaw).item();
  Tape::active().clear();
  double eps = 1e-6;
  double fd;
  {
    NoGradGuard ng;
    fd = (loss_of(0.12 + eps, false).item() - loss_of(0.12 - eps, false).item()) / (2 * eps);
  }
  CHECK(analytic == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("rotation tensors are orthonormal and match axis formulas") {
  Tensor ry = rotation_y(Tensor::from_data({1, 1}, {0.3}));
  // R * R^T == I
  Tensor prod = matmul(ry, ry, false, true);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(prod.at({i, j}) == doctest::Approx(i == j ? 1.0 : 0.0).scale(1).epsilon(1e-12));
    }
  }
  CHECK(ry.at({0, 0}) == doctest::Approx(std::cos(0.3)));
  CHECK(ry.at({0, 2}) == doctest::Approx(std::sin(0.3)));
  Tensor rx = rotation_x(Tensor::from_data({1, 1}, {-0.2}));
  CHECK(rx.at({1, 2}) == doctest::Approx(std::sin(0.2)));
  Tensor rz = rotation_z(Tensor::from_data({1, 1}, {0.5}));
  CHECK(rz.at({1, 0}) == doctest::Approx(std::sin(0.5)));
}

TEST_CASE("pose sampling stays inside the configured ranges") {
  Rng rng(1);
  PoseRange range{0.3, 0.155, 1.0};
  for (int i = 0; i < 200; ++i) {
    Pose p = sample_pose(rng, range);
    CHECK(p.yaw >= -0.3);
    CHECK(p.yaw <= 0.3);
    CHECK(p.pitch >= M_PI / 2 - 0.155);
    CHECK(p.pitch <= M_PI / 2 + 0.155);
    CHECK(p.radius == 1.0);
  }
}

TEST_SUITE_END();
