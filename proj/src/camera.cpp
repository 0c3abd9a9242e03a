#include "geod/camera.hpp"

namespace geod {

Intrinsics intrinsics_from_fov(double fov_degrees, int width, int height) {
  GEOD_CHECK(fov_degrees > 0 && fov_degrees < 180, "fov must be in (0, 180), got " << fov_degrees);
  GEOD_CHECK(width > 0 && height > 0, "image size must be positive");
  double half = fov_degrees * M_PI / 360.0;
  Intrinsics K;
  K.width = width;
  K.height = height;
  K.fx = (width / 2.0) / std::tan(half);
  K.fy = (height / 2.0) / std::tan(half);
  K.cx = (width - 1) / 2.0;
  K.cy = (height - 1) / 2.0;
  return K;
}

Pose sample_pose(Rng& rng, const PoseRange& range) {
  Pose p;
  p.yaw = rng.uniform(-range.yaw_range, range.yaw_range);
  p.pitch = M_PI / 2 + rng.uniform(-range.pitch_range, range.pitch_range);
  p.radius = range.radius;
  return p;
}

Frame pose_frame(const Pose& pose) {
  double sp = std::sin(pose.pitch), cp = std::cos(pose.pitch);
  double sy = std::sin(pose.yaw), cy = std::cos(pose.yaw);
  GEOD_CHECK(std::fabs(sp) > 1e-6, "degenerate pitch " << pose.pitch << " (view parallel to up axis)");
  GEOD_CHECK(pose.radius > 0, "camera radius must be positive");
  Frame f;
  f.center = Vec3{sp * sy, cp, sp * cy} * pose.radius;
  f.forward = normalized(f.center * -1.0);
  // right = normalize(cross(forward, up)); closed form avoids the norm.
  f.right = {cy, 0, -sy};
  f.down = cross(f.forward, f.right);
  return f;
}

Vec3 world_to_camera(const Frame& f, Vec3 p_world) {
  Vec3 d = p_world - f.center;
  return {dot(d, f.right), dot(d, f.down), dot(d, f.forward)};
}

Vec3 camera_to_world(const Frame& f, Vec3 p_cam) {
  return f.center + f.right * p_cam.x + f.down * p_cam.y + f.forward * p_cam.z;
}

Vec3 lift(double u, double v, double depth, const Intrinsics& K) {
  return {(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth};
}

Projection project(Vec3 p_cam, const Intrinsics& K) {
  Projection out;
  if (p_cam.z <= 1e-9) return out;
  out.u = K.fx * p_cam.x / p_cam.z + K.cx;
  out.v = K.fy * p_cam.y / p_cam.z + K.cy;
  out.valid = true;
  return out;
}

Rigid relative_transform(const Frame& a, const Frame& b) {
  // Columns of world-from-camera rotations.
  Vec3 ax = a.right, ay = a.down, az = a.forward;
  Vec3 bx = b.right, by = b.down, bz = b.forward;
  Rigid rt;
  // R = Rb^T * Ra, entries are dots of basis vectors.
  rt.R[0] = dot(bx, ax); rt.R[1] = dot(bx, ay); rt.R[2] = dot(bx, az);
  rt.R[3] = dot(by, ax); rt.R[4] = dot(by, ay); rt.R[5] = dot(by, az);
  rt.R[6] = dot(bz, ax); rt.R[7] = dot(bz, ay); rt.R[8] = dot(bz, az);
  Vec3 d = a.center - b.center;
  rt.t = {dot(bx, d), dot(by, d), dot(bz, d)};
  return rt;
}

Rigid relative_transform(const Pose& a, const Pose& b) {
  return relative_transform(pose_frame(a), pose_frame(b));
}

namespace {

// (a, b) = ((u-cx)/fx, (v-cy)/fy) per pixel, row-major over the image.
void pixel_tangents(const Intrinsics& K, std::vector<double>& a, std::vector<double>& b,
                    std::vector<double>& n) {
  int64_t count = static_cast<int64_t>(K.width) * K.height;
  a.resize(count);
  b.resize(count);
  n.resize(count);
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      int64_t i = static_cast<int64_t>(v) * K.width + u;
      a[i] = (u - K.cx) / K.fx;
      b[i] = (v - K.cy) / K.fy;
      n[i] = std::sqrt(1.0 + a[i] * a[i] + b[i] * b[i]);
    }
  }
}

Tensor scalar11(double v) { return Tensor::from_data({1, 1}, {v}); }

}  // namespace

Tensor camera_basis(const Tensor& yaw, const Tensor& pitch) {
  GEOD_CHECK((yaw.shape() == Shape{1, 1} && pitch.shape() == Shape{1, 1}),
             "camera_basis: yaw/pitch must be [1,1] scalars");
  GEOD_CHECK(std::fabs(std::sin(pitch.item())) > 1e-6,
             "degenerate pitch (view parallel to up axis)");
  Tensor sy = sin_t(yaw), cy = cos_t(yaw);
  Tensor sp = sin_t(pitch), cp = cos_t(pitch);
  Tensor zero = Tensor::zeros({1, 1});
  Tensor right = concat({cy, zero, neg(sy)}, 1);                              // [1,3]
  Tensor down = concat({mul(cp, sy), neg(sp), mul(cp, cy)}, 1);               // [1,3]
  Tensor forward = concat({neg(mul(sp, sy)), neg(cp), neg(mul(sp, cy))}, 1);  // [1,3]
  return concat({right, down, forward}, 0);
}

RayGrid make_rays(const Tensor& yaw, const Tensor& pitch, double radius, const Intrinsics& K) {
  GEOD_CHECK(radius > 0, "camera radius must be positive");
  int64_t count = static_cast<int64_t>(K.width) * K.height;
  std::vector<double> av, bv, nv;
  pixel_tangents(K, av, bv, nv);

  Tensor basis = camera_basis(yaw, pitch);
  Tensor right = slice(basis, 0, 0, 1);    // [1,3]
  Tensor down = slice(basis, 0, 1, 2);
  Tensor forward = slice(basis, 0, 2, 3);
  Tensor center = mul(neg(forward), radius);

  Shape full = {static_cast<int>(count), 3};
  Tensor A = broadcast_to(Tensor::from_data({static_cast<int>(count), 1}, std::move(av)), full);
  Tensor B = broadcast_to(Tensor::from_data({static_cast<int>(count), 1}, std::move(bv)), full);
  Tensor dirs = add(add(mul(A, broadcast_to(right, full)), mul(B, broadcast_to(down, full))),
                    broadcast_to(forward, full));
  RayGrid grid;
  grid.origins = broadcast_to(center, full);
  grid.dirs = dirs;
  grid.norms = Tensor::from_data({static_cast<int>(count), 1}, std::move(nv));
  grid.width = K.width;
  grid.height = K.height;
  return grid;
}

RayGrid make_rays(const Pose& pose, const Intrinsics& K) {
  pose_frame(pose);  // validates
  return make_rays(scalar11(pose.yaw), scalar11(pose.pitch), pose.radius, K);
}

namespace {
Tensor rot_from_rows(std::initializer_list<Tensor> rows) {
  std::vector<Tensor> rs(rows);
  return concat(rs, 0);
}
}  // namespace

Tensor rotation_x(const Tensor& angle) {
  Tensor s = sin_t(angle), c = cos_t(angle);
  Tensor zero = Tensor::zeros({1, 1}), one = Tensor::full({1, 1}, 1.0);
  return rot_from_rows({concat({one, zero, zero}, 1), concat({zero, c, neg(s)}, 1),
                        concat({zero, s, c}, 1)});
}

Tensor rotation_y(const Tensor& angle) {
  Tensor s = sin_t(angle), c = cos_t(angle);
  Tensor zero = Tensor::zeros({1, 1}), one = Tensor::full({1, 1}, 1.0);
  return rot_from_rows({concat({c, zero, s}, 1), concat({zero, one, zero}, 1),
                        concat({neg(s), zero, c}, 1)});
}

Tensor rotation_z(const Tensor& angle) {
  Tensor s = sin_t(angle), c = cos_t(angle);
  Tensor zero = Tensor::zeros({1, 1}), one = Tensor::full({1, 1}, 1.0);
  return rot_from_rows({concat({c, neg(s), zero}, 1), concat({s, c, zero}, 1),
                        concat({zero, zero, one}, 1)});
}

Tensor rigid_rotation_tensor(const Rigid& rt) {
  return Tensor::from_data({3, 3}, std::vector<double>(rt.R, rt.R + 9));
}

Tensor rigid_translation_tensor(const Rigid& rt) {
  return Tensor::from_data({1, 3}, {rt.t.x, rt.t.y, rt.t.z});
}

}  // namespace geod
