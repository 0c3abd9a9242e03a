#include "geod/warp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace geod {

namespace {

// Splats every source pixel into the destination view and keeps, per
// destination pixel, the source coordinates of the nearest surface. Pixels
// nobody lands on inherit a neighboring winner (a few dilation sweeps) so
// the fixed-point pass starts close even inside magnification gaps.
void initial_correspondence(const std::vector<double>& depth, const Rigid& rt,
                            const Intrinsics& K, std::vector<double>* init_uv) {
  const int w = K.width, h = K.height;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(static_cast<size_t>(w) * h, inf);
  init_uv->assign(static_cast<size_t>(w) * h * 2, -1.0);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double d = depth[static_cast<size_t>(v) * w + u];
      if (!(d > 0)) continue;
      const Vec3 ps = lift(u, v, d, K);
      const Vec3 pd{rt.R[0] * ps.x + rt.R[1] * ps.y + rt.R[2] * ps.z + rt.t.x,
                    rt.R[3] * ps.x + rt.R[4] * ps.y + rt.R[5] * ps.z + rt.t.y,
                    rt.R[6] * ps.x + rt.R[7] * ps.y + rt.R[8] * ps.z + rt.t.z};
      const Projection pr = project(pd, K);
      if (!pr.valid) continue;
      const int qu = static_cast<int>(std::lround(pr.u));
      const int qv = static_cast<int>(std::lround(pr.v));
      if (qu < 0 || qu >= w || qv < 0 || qv >= h) continue;
      const size_t q = static_cast<size_t>(qv) * w + qu;
      if (pd.z < zbuf[q]) {
        zbuf[q] = pd.z;
        (*init_uv)[q * 2 + 0] = u;
        (*init_uv)[q * 2 + 1] = v;
      }
    }
  for (int sweep = 0; sweep < 3; ++sweep) {
    std::vector<double> next = *init_uv;
    bool any_hole = false;
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const size_t q = static_cast<size_t>(v) * w + u;
        if ((*init_uv)[q * 2] >= 0) continue;
        double su = 0, sv = 0, n = 0;
        const int du[4] = {1, -1, 0, 0}, dv[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int uu = u + du[k], vv = v + dv[k];
          if (uu < 0 || uu >= w || vv < 0 || vv >= h) continue;
          const size_t p = static_cast<size_t>(vv) * w + uu;
          if ((*init_uv)[p * 2] < 0) continue;
          su += (*init_uv)[p * 2], sv += (*init_uv)[p * 2 + 1], n += 1;
        }
        if (n > 0) {
          next[q * 2] = su / n;
          next[q * 2 + 1] = sv / n;
        } else {
          any_hole = true;
        }
      }
    *init_uv = std::move(next);
    if (!any_hole) break;
  }
  // pixels with no winner anywhere default to themselves; the residual test
  // decides whether that accidental guess actually corresponds
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const size_t q = static_cast<size_t>(v) * w + u;
      if ((*init_uv)[q * 2] < 0) {
        (*init_uv)[q * 2] = u;
        (*init_uv)[q * 2 + 1] = v;
      }
    }
}

}  // namespace

WarpResult reproject_warp(const Tensor& src_image, const Tensor& src_depth, const Pose& src_pose,
                          const Pose& dst_pose, const Intrinsics& K, const WarpOptions& opt) {
  GEOD_CHECK(src_image.ndim() == 3, "reproject_warp: src_image must be [H,W,C], got "
                                        << shape_str(src_image.shape()));
  const int h = src_image.dim(0), w = src_image.dim(1);
  GEOD_CHECK(src_depth.ndim() == 2 && src_depth.dim(0) == h && src_depth.dim(1) == w,
             "reproject_warp: src_depth " << shape_str(src_depth.shape())
                                          << " must be [H,W] matching the image");
  GEOD_CHECK(K.width == w && K.height == h, "reproject_warp: intrinsics are "
                                                << K.width << "x" << K.height << " but image is "
                                                << w << "x" << h);
  GEOD_CHECK(opt.fixed_point_iters >= 1, "reproject_warp: need at least one refinement step");

  const Rigid rt = relative_transform(src_pose, dst_pose);
  std::vector<double> init_uv;
  {
    NoGradGuard ng;
    initial_correspondence(src_depth.detach().values(), rt, K, &init_uv);
  }

  const int n = h * w;
  Tensor rot = rigid_rotation_tensor(rt);      // [3,3]
  Tensor tr = rigid_translation_tensor(rt);    // [1,3]
  std::vector<double> qs(static_cast<size_t>(n) * 2);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      qs[(static_cast<size_t>(v) * w + u) * 2 + 0] = u;
      qs[(static_cast<size_t>(v) * w + u) * 2 + 1] = v;
    }
  Tensor q = make_tensor({h, w, 2}, std::move(qs));
  Tensor depth_hw1 = reshape(src_depth, {h, w, 1});

  // destination pixel coordinates of the source point sampled at s
  auto reproject = [&](const Tensor& s) {
    Tensor d = grid_sample_bilinear(depth_hw1, s);                     // [H,W,1]
    Tensor su = slice(s, 2, 0, 1), sv = slice(s, 2, 1, 2);             // [H,W,1]
    Tensor x = mul(d, div(sub(su, K.cx), K.fx));
    Tensor y = mul(d, div(sub(sv, K.cy), K.fy));
    Tensor p_src = reshape(concat({x, y, d}, 2), {n, 3});
    Tensor p_dst = add(matmul(p_src, rot, false, true), broadcast_to(tr, {n, 3}));
    Tensor z = max_const(slice(p_dst, 1, 2, 3), opt.min_z);            // [N,1]
    Tensor uu = add(mul(div(slice(p_dst, 1, 0, 1), z), K.fx), K.cx);
    Tensor vv = add(mul(div(slice(p_dst, 1, 1, 2), z), K.fy), K.cy);
    struct Out {
      Tensor uv, z;
    } out{reshape(concat({uu, vv}, 1), {h, w, 2}), slice(p_dst, 1, 2, 3)};
    return out;
  };

  Tensor s = make_tensor({h, w, 2}, std::move(init_uv));
  for (int it = 0; it < opt.fixed_point_iters; ++it)
    s = add(s, sub(q, reproject(s).uv));
  auto final_rp = reproject(s);

  WarpResult out;
  out.image = grid_sample_bilinear(src_image, s);
  out.depth = reshape(final_rp.z, {h, w});
  {
    NoGradGuard ng;
    const Tensor uv_t = final_rp.uv.detach(), s_t = s.detach(), z_t = final_rp.z.detach();
    const std::vector<double>& uv = uv_t.values();
    const std::vector<double>& sv = s_t.values();
    const std::vector<double>& zv = z_t.values();
    std::vector<double> mask(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const double ru = uv[static_cast<size_t>(i) * 2] - q.values()[static_cast<size_t>(i) * 2];
      const double rv =
          uv[static_cast<size_t>(i) * 2 + 1] - q.values()[static_cast<size_t>(i) * 2 + 1];
      const double su = sv[static_cast<size_t>(i) * 2], svv = sv[static_cast<size_t>(i) * 2 + 1];
      const double slack = 1e-6;  // borders count; fp noise must not flip them
      const bool ok = std::hypot(ru, rv) <= opt.tolerance_px && zv[i] > opt.min_z &&
                      su >= -slack && su <= w - 1.0 + slack && svv >= -slack &&
                      svv <= h - 1.0 + slack;
      mask[i] = ok ? 1.0 : 0.0;
    }
    out.valid = make_tensor({h, w, 1}, std::move(mask));
  }
  return out;
}

}  // namespace geod
