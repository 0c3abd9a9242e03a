#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "geod/config.hpp"
#include "geod/dataset.hpp"
#include "geod/generator.hpp"
#include "geod/inversion.hpp"
#include "geod/losses.hpp"
#include "geod/metrics.hpp"
#include "geod/training.hpp"

namespace py = pybind11;
using namespace geod;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DArray& a) {
  Shape shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
  const double* p = a.data();
  return Tensor::from_data(shape, std::vector<double>(p, p + a.size()));
}

py::array_t<double> from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> dims(t.shape().begin(), t.shape().end());
  py::array_t<double> a(dims);
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

struct LoadedModel {
  ParameterStore store;
  TrainingConfig cfg;
  Intrinsics K;
};

LoadedModel load_model(const std::string& ckpt) {
  LoadedModel m;
  const std::string meta = load_checkpoint(ckpt, m.store);
  GEOD_CHECK(!meta.empty(), "checkpoint '" << ckpt << "' carries no config");
  m.cfg = parse_training_config(meta);
  m.K = intrinsics_from_fov(m.cfg.fov_degrees, m.cfg.resolution, m.cfg.resolution);
  return m;
}

RenderOutput render_latent(const LoadedModel& m, const Generator& gen, double yaw, double pitch,
                           uint64_t z_seed) {
  Rng r(z_seed);
  Tensor z = Tensor::randn({1, m.cfg.generator.latent_dim}, r);
  return render_image(gen, z, make_rays(Pose{yaw, pitch, m.cfg.pose.radius}, m.K), nullptr);
}

}  // namespace

PYBIND11_MODULE(_geod, mod) {
  mod.doc() = "geometry-supervised radiance-field GAN: core operations";

  mod.def(
      "gen_data",
      [](const std::string& out, int n, int res, uint64_t seed, bool symmetric, int workers) {
        generate_dataset(out, n, res, seed, symmetric, workers);
      },
      py::arg("out"), py::arg("n") = 200, py::arg("res") = 32, py::arg("seed") = 1,
      py::arg("symmetric") = true, py::arg("workers") = 4,
      "Render a synthetic dataset (images, depth, normals, manifest) into `out`.");

  mod.def(
      "train",
      [](const std::string& data, const std::string& out, const std::string& config_json) {
        TrainingConfig cfg =
            config_json.empty() ? TrainingConfig{} : parse_training_config(config_json);
        Trainer t(cfg, data, out);
        TrainResult r = t.run();
        py::dict d;
        d["completed_steps"] = r.completed_steps;
        d["aborted"] = r.aborted;
        d["abort_reason"] = r.abort_reason;
        d["final_checkpoint"] = r.final_checkpoint;
        return d;
      },
      py::arg("data"), py::arg("out"), py::arg("config_json") = "",
      "Run adversarial training; returns a summary dict. config_json overlays the defaults.");

  mod.def(
      "evaluate",
      [](const std::string& ckpt, const std::string& data, int n_images, int64_t invert_steps,
         int re_pairs, uint64_t seed) {
        EvalOptions opt;
        opt.n_images = n_images;
        opt.invert_steps = invert_steps;
        opt.re_pairs = re_pairs;
        opt.seed = seed;
        return eval_report_json(evaluate_checkpoint(ckpt, data, opt));
      },
      py::arg("ckpt"), py::arg("data"), py::arg("n_images") = 12,
      py::arg("invert_steps") = 150, py::arg("re_pairs") = 8, py::arg("seed") = 1,
      "Score a checkpoint (SIDE by inversion + reprojection error); returns the report JSON.");

  mod.def(
      "render",
      [](const std::string& ckpt, double yaw, double pitch, uint64_t z_seed) {
        LoadedModel m = load_model(ckpt);
        const Generator gen(m.cfg.generator, m.store);
        NoGradGuard ng;
        RenderOutput ro = render_latent(m, gen, yaw, pitch, z_seed);
        return py::make_tuple(from_tensor(ro.color), from_tensor(ro.depth),
                              from_tensor(ro.alpha));
      },
      py::arg("ckpt"), py::arg("yaw") = 0.0, py::arg("pitch") = M_PI / 2,
      py::arg("z_seed") = 1,
      "Render one view of a seeded latent; returns (color [H,W,3], depth [H,W], alpha [H,W]).");

  mod.def(
      "extract_geometry",
      [](const std::string& ckpt, double yaw, double pitch, uint64_t z_seed) {
        LoadedModel m = load_model(ckpt);
        const Generator gen(m.cfg.generator, m.store);
        NoGradGuard ng;
        RenderOutput ro = render_latent(m, gen, yaw, pitch, z_seed);
        Tensor depth = clip(div(ro.depth, max_const(ro.alpha, 1e-4)), m.cfg.generator.near,
                            m.cfg.generator.far);
        py::dict d;
        d["color"] = from_tensor(ro.color);
        d["depth"] = from_tensor(depth);
        d["normal"] = from_tensor(normal_from_depth(depth, m.K));
        d["alpha"] = from_tensor(ro.alpha);
        return d;
      },
      py::arg("ckpt"), py::arg("yaw") = 0.0, py::arg("pitch") = M_PI / 2,
      py::arg("z_seed") = 1,
      "Render a latent and lift its opacity-normalized depth to camera-space normals.");

  mod.def(
      "invert",
      [](const std::string& ckpt, const DArray& image, const std::string& mode, int64_t steps,
         double yaw, double pitch) {
        GEOD_CHECK(mode == "z" || mode == "z-pose", "mode must be z or z-pose");
        LoadedModel m = load_model(ckpt);
        const Generator gen(m.cfg.generator, m.store);
        const PerceptualPyramid pyramid(m.store);
        InversionConfig ic;
        ic.steps = steps;
        ic.optimize_pose = mode == "z-pose";
        ic.init_pose = Pose{yaw, pitch, m.cfg.pose.radius};
        InversionResult r = invert(gen, to_tensor(image), m.K, &pyramid, ic);
        py::dict d;
        d["z"] = from_tensor(r.z);
        d["yaw"] = r.pose.yaw;
        d["pitch"] = r.pose.pitch;
        d["loss"] = r.loss;
        d["pixel_l1"] = r.pixel_l1;
        d["best_step"] = r.best_step;
        return d;
      },
      py::arg("ckpt"), py::arg("image"), py::arg("mode") = "z", py::arg("steps") = 300,
      py::arg("yaw") = 0.0, py::arg("pitch") = M_PI / 2,
      "Fit a latent (and optionally the camera) to an [H,W,3] image in [0,1].");

  mod.def(
      "side",
      [](const DArray& pred, const DArray& gt, py::object mask) {
        Tensor p = to_tensor(pred), g = to_tensor(gt);
        Tensor m = mask.is_none() ? Tensor::full(p.shape(), 1.0)
                                  : to_tensor(mask.cast<DArray>());
        return side(p, g, m);
      },
      py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none(),
      "Scale-invariant depth error sqrt(var(log pred - log gt)) over the mask.");

  mod.def(
      "f_logistic", [](double t) { return f_logistic(Tensor::scalar(t)).item(); }, py::arg("t"),
      "Logistic GAN objective -softplus(-t); f(0) = -ln 2.");

  mod.def("lambda_schedule", &lambda_ramp, py::arg("it"), py::arg("value_start"),
          py::arg("value_end"), py::arg("it_start"), py::arg("it_end"),
          "Linear ramp used for the fake-geometry weight.");

  mod.def(
      "normal_from_depth",
      [](const DArray& depth, double fov_degrees) {
        Tensor d = to_tensor(depth);
        GEOD_CHECK(d.shape().size() == 2, "depth must be [H,W]");
        Intrinsics K = intrinsics_from_fov(fov_degrees, d.shape()[1], d.shape()[0]);
        return from_tensor(normal_from_depth(d, K));
      },
      py::arg("depth"), py::arg("fov_degrees") = 30.0,
      "Camera-space unit normals from a [H,W] depth map (z < 0 faces the camera).");

  mod.def(
      "intrinsics",
      [](double fov_degrees, int width, int height) {
        Intrinsics K = intrinsics_from_fov(fov_degrees, width, height);
        py::dict d;
        d["fx"] = K.fx;
        d["fy"] = K.fy;
        d["cx"] = K.cx;
        d["cy"] = K.cy;
        d["width"] = K.width;
        d["height"] = K.height;
        return d;
      },
      py::arg("fov_degrees"), py::arg("width"), py::arg("height"),
      "Pinhole intrinsics for a given horizontal field of view.");

  mod.def(
      "default_config",
      []() { return training_config_json(TrainingConfig{}); },
      "The fully resolved default training config as JSON.");
}
