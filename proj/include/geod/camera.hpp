#pragma once

#include <cmath>

#include "geod/tensor.hpp"

namespace geod {

// Conventions used everywhere:
//  - world is right-handed, +y up; the scene sits around the origin.
//  - camera space is right-handed with +x right, +y down, +z forward, so the
//    camera looks down its own +z axis and surface normals that face the
//    camera have negative z in camera space.
//  - pixel (u,v) addresses the texel center; u grows right, v grows down.
//  - "depth" is the camera-space z coordinate (not distance along the ray).

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) {
  double n = norm(a);
  return {a.x / n, a.y / n, a.z / n};
}

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

// Pinhole intrinsics from a full horizontal/vertical field of view; the
// principal point sits at the geometric image center.
Intrinsics intrinsics_from_fov(double fov_degrees, int width, int height);

// Camera position on a radius-`radius` sphere around the origin, looking at
// the origin. pitch pi/2 is equatorial; yaw 0 / pitch pi/2 puts the camera
// at (0, 0, radius).
struct Pose {
  double yaw = 0, pitch = M_PI / 2, radius = 1.0;
};

struct PoseRange {
  double yaw_range = 0.3;     // yaw ~ U(-yaw_range, +yaw_range)
  double pitch_range = 0.155; // pitch ~ U(pi/2 - r, pi/2 + r)
  double radius = 1.0;
};

Pose sample_pose(Rng& rng, const PoseRange& range);

// World-from-camera basis (columns of R) plus the camera center.
struct Frame {
  Vec3 right, down, forward, center;
};

Frame pose_frame(const Pose& pose);  // errors when sin(pitch) ~ 0 (up parallel to view)

Vec3 world_to_camera(const Frame& f, Vec3 p_world);
Vec3 camera_to_world(const Frame& f, Vec3 p_cam);

// K^{-1} [u,v,1] scaled by depth: the camera-space point with z == depth.
Vec3 lift(double u, double v, double depth, const Intrinsics& K);

// Projects a camera-space point; valid only when z > 0.
struct Projection {
  double u = 0, v = 0;
  bool valid = false;
};
Projection project(Vec3 p_cam, const Intrinsics& K);

// Rigid map from camera-a space to camera-b space: X_b = R * X_a + t.
struct Rigid {
  double R[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 t;
};
Rigid relative_transform(const Pose& a, const Pose& b);
Rigid relative_transform(const Frame& a, const Frame& b);

// Per-pixel rays. dirs are *unnormalized* with unit forward component so
// that origin + dir * t lands exactly at camera depth t; norms holds
// ||dir|| for converting depth spacing to geometric arc length.
struct RayGrid {
  Tensor origins;  // [H*W, 3] world
  Tensor dirs;     // [H*W, 3] world, camera-z component == 1
  Tensor norms;    // [H*W, 1] constant ||dir||
  int width = 0, height = 0;
};

// Differentiable in yaw/pitch when those are recorded scalars (shape [1,1]).
RayGrid make_rays(const Tensor& yaw, const Tensor& pitch, double radius, const Intrinsics& K);
RayGrid make_rays(const Pose& pose, const Intrinsics& K);

// Camera-from-world rotation as a [3,3] tensor whose rows are the camera
// right/down/forward axes; world vectors map into camera space via
// matmul(v_world, basis, false, true). Differentiable in yaw/pitch ([1,1]).
Tensor camera_basis(const Tensor& yaw, const Tensor& pitch);

// Rotation matrices as [3,3] tensors, differentiable in the angle ([1,1]).
Tensor rotation_x(const Tensor& angle);
Tensor rotation_y(const Tensor& angle);
Tensor rotation_z(const Tensor& angle);

// Constant tensors for a fixed rigid transform.
Tensor rigid_rotation_tensor(const Rigid& rt);     // [3,3]
Tensor rigid_translation_tensor(const Rigid& rt);  // [1,3]

}  // namespace geod
