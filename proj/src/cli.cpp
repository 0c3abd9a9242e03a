#include "geod/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "geod/config.hpp"
#include "geod/dataset.hpp"
#include "geod/image_io.hpp"
#include "geod/inversion.hpp"
#include "geod/metrics.hpp"
#include "geod/training.hpp"
#include "geod/warp.hpp"
#include "json.hpp"

namespace geod {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void echo(const json& j) { std::cout << j.dump(2) << "\n"; }

std::string slurp_file(const std::string& path) {
  std::ifstream f(path);
  GEOD_CHECK(f.good(), "cannot read '" << path << "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// A checkpoint plus the config it was trained under; the store must outlive
// any Generator/Discriminator attached to it.
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

Tensor latent_from_seed(uint64_t z_seed, int latent_dim) {
  Rng r(z_seed);
  return Tensor::randn({1, latent_dim}, r);
}

// Opacity-normalized depth, clamped to the render interval so empty sky
// doesn't blow up the visualization or the normals.
Tensor presentable_depth(const RenderOutput& ro, const GeneratorConfig& gc) {
  return clip(div(ro.depth, max_const(ro.alpha, 1e-4)), gc.near, gc.far);
}

int cmd_gen_data(const std::string& out, int n, int res, uint64_t seed, bool symmetric,
                 int workers) {
  generate_dataset(out, n, res, seed, symmetric, workers);
  echo(json{{"command", "gen-data"},
            {"out", out},
            {"n", n},
            {"res", res},
            {"seed", seed},
            {"symmetric", symmetric}});
  return 0;
}

int cmd_train(const TrainingConfig& cfg, const std::string& data, const std::string& out) {
  Trainer t(cfg, data, out);
  TrainResult r = t.run();
  json j{{"command", "train"},
         {"out", out},
         {"completed_steps", r.completed_steps},
         {"aborted", r.aborted},
         {"final_checkpoint", r.final_checkpoint},
         {"metrics_csv", out + "/metrics.csv"}};
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  echo(j);
  return r.aborted ? 2 : 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& metrics_path,
             const EvalOptions& opt) {
  EvalReport rep = evaluate_checkpoint(ckpt, data, opt);
  const std::string js = eval_report_json(rep);
  if (!metrics_path.empty()) {
    std::ofstream f(metrics_path);
    GEOD_CHECK(f.good(), "cannot write '" << metrics_path << "'");
    f << js << "\n";
  }
  std::cout << js << "\n";
  return 0;
}

int cmd_render(const std::string& ckpt, const std::string& out, double yaw, double pitch,
               uint64_t z_seed) {
  LoadedModel m = load_model(ckpt);
  const Generator gen(m.cfg.generator, m.store);
  NoGradGuard ng;
  Tensor z = latent_from_seed(z_seed, m.cfg.generator.latent_dim);
  Pose pose{yaw, pitch, m.cfg.pose.radius};
  RenderOutput ro = render_image(gen, z, make_rays(pose, m.K), nullptr);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_png(out, ro.color);
  echo(json{{"command", "render"},
            {"out", out},
            {"yaw", yaw},
            {"pitch", pitch},
            {"z_seed", z_seed}});
  return 0;
}

int cmd_extract_geometry(const std::string& ckpt, const std::string& out, double yaw,
                         double pitch, uint64_t z_seed) {
  LoadedModel m = load_model(ckpt);
  const Generator gen(m.cfg.generator, m.store);
  NoGradGuard ng;
  Tensor z = latent_from_seed(z_seed, m.cfg.generator.latent_dim);
  Pose pose{yaw, pitch, m.cfg.pose.radius};
  RenderOutput ro = render_image(gen, z, make_rays(pose, m.K), nullptr);
  Tensor depth = presentable_depth(ro, m.cfg.generator);
  Tensor normals = normal_from_depth(depth, m.K);

  fs::create_directories(out);
  write_png(out + "/color.png", ro.color);
  write_f32(out + "/depth.f32", depth);
  write_f32(out + "/alpha.f32", ro.alpha);
  const double near = m.cfg.generator.near, far = m.cfg.generator.far;
  const int H = m.cfg.resolution;
  write_png(out + "/depth.png",
            reshape(mul(sub(depth, near), 1.0 / (far - near)), {H, H, 1}));
  write_png(out + "/normal.png", encode_normal_map(normals));
  echo(json{{"command", "extract-geometry"},
            {"out", out},
            {"yaw", yaw},
            {"pitch", pitch},
            {"z_seed", z_seed}});
  return 0;
}

int cmd_invert(const std::string& ckpt, const std::string& image, const std::string& out,
               const std::string& mode, int64_t steps, double yaw, double pitch) {
  LoadedModel m = load_model(ckpt);
  const Generator gen(m.cfg.generator, m.store);
  const PerceptualPyramid pyramid(m.store);
  Tensor target = read_png(image);
  GEOD_CHECK(target.shape()[0] == m.cfg.resolution && target.shape()[1] == m.cfg.resolution,
             "image is " << target.shape()[0] << "x" << target.shape()[1]
                         << " but the checkpoint renders " << m.cfg.resolution << "x"
                         << m.cfg.resolution);

  InversionConfig ic;
  ic.steps = steps;
  ic.optimize_pose = mode == "z-pose";
  ic.init_pose = Pose{yaw, pitch, m.cfg.pose.radius};
  InversionResult r = invert(gen, target, m.K, &pyramid, ic);

  fs::create_directories(out);
  {
    NoGradGuard ng;
    RenderOutput ro = render_image(gen, r.z, make_rays(r.pose, m.K), nullptr);
    write_png(out + "/recon.png", ro.color);
  }
  json j{{"command", "invert"},  {"out", out},
         {"mode", mode},         {"z", r.z.values()},
         {"yaw", r.pose.yaw},    {"pitch", r.pose.pitch},
         {"loss", r.loss},       {"pixel_l1", r.pixel_l1},
         {"best_step", r.best_step}};
  {
    std::ofstream f(out + "/inversion.json");
    f << j.dump(2) << "\n";
  }
  echo(j);
  return 0;
}

}  // namespace

int dispatch(std::vector<std::string> args) {
  CLI::App app{"geometry-supervised radiance-field GAN on synthetic scenes", "geod"};
  app.require_subcommand(1);

  // gen-data ---------------------------------------------------------------
  auto* gd = app.add_subcommand("gen-data", "render a synthetic dataset");
  std::string gd_out;
  int gd_n = 200, gd_res = 32, gd_workers = 4;
  uint64_t gd_seed = 1;
  bool gd_symmetric = true;
  gd->add_option("--out", gd_out, "dataset directory")->required();
  gd->add_option("--n", gd_n, "number of images");
  gd->add_option("--res", gd_res, "image resolution");
  gd->add_option("--seed", gd_seed, "scene/pose seed");
  gd->add_option("--symmetric", gd_symmetric, "mirror-symmetric scenes (1) or free (0)");
  gd->add_option("--workers", gd_workers, "render threads");

  // train -------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "adversarial training");
  std::string tr_data, tr_out, tr_cfg, tr_mode;
  uint64_t tr_seed = 0;
  int64_t tr_steps = 0;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "run output directory")->required();
  tr->add_option("--cfg", tr_cfg, "JSON config (partial; overlays defaults)");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "override config seed");
  auto* tr_steps_opt = tr->add_option("--steps", tr_steps, "override config steps");
  auto* tr_mode_opt =
      tr->add_option("--mode", tr_mode, "override config mode")
          ->check(CLI::IsMember({"baseline", "geod", "geod-consistency"}));

  // eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "score a checkpoint (SIDE + reprojection)");
  std::string ev_ckpt, ev_data, ev_metrics;
  EvalOptions ev_opt;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--metrics", ev_metrics, "also write the JSON report here");
  ev->add_option("--seed", ev_opt.seed, "evaluation seed");
  ev->add_option("--n", ev_opt.n_images, "images scored by inversion");
  ev->add_option("--steps", ev_opt.invert_steps, "inversion steps per image");

  // render -------------------------------------------------------------
  auto* rd = app.add_subcommand("render", "render one view of a sampled latent");
  std::string rd_ckpt, rd_out;
  double rd_yaw = 0.0, rd_pitch = M_PI / 2;
  uint64_t rd_zseed = 1;
  rd->add_option("--ckpt", rd_ckpt, "checkpoint file")->required();
  rd->add_option("--out", rd_out, "output PNG")->required();
  rd->add_option("--yaw", rd_yaw, "camera yaw (radians)");
  rd->add_option("--pitch", rd_pitch, "camera pitch (radians)");
  rd->add_option("--z-seed", rd_zseed, "latent seed");

  // extract-geometry ----------------------------------------------------
  auto* xg = app.add_subcommand("extract-geometry",
                                "render color, depth, opacity and normals of a latent");
  std::string xg_ckpt, xg_out;
  double xg_yaw = 0.0, xg_pitch = M_PI / 2;
  uint64_t xg_zseed = 1;
  xg->add_option("--ckpt", xg_ckpt, "checkpoint file")->required();
  xg->add_option("--out", xg_out, "output directory")->required();
  xg->add_option("--yaw", xg_yaw, "camera yaw (radians)");
  xg->add_option("--pitch", xg_pitch, "camera pitch (radians)");
  xg->add_option("--z-seed", xg_zseed, "latent seed");

  // invert ----------------------------------------------------------------
  auto* iv = app.add_subcommand("invert", "fit a latent (optionally the camera) to an image");
  std::string iv_ckpt, iv_image, iv_out, iv_mode = "z";
  int64_t iv_steps = 300;
  double iv_yaw = 0.0, iv_pitch = M_PI / 2;
  iv->add_option("--ckpt", iv_ckpt, "checkpoint file")->required();
  iv->add_option("--image", iv_image, "target PNG")->required();
  iv->add_option("--out", iv_out, "output directory")->required();
  iv->add_option("--mode", iv_mode, "z: latent only; z-pose: latent + viewpoint")
      ->check(CLI::IsMember({"z", "z-pose"}));
  iv->add_option("--steps", iv_steps, "optimization steps");
  iv->add_option("--yaw", iv_yaw, "camera yaw (fixed in mode z, initial in z-pose)");
  iv->add_option("--pitch", iv_pitch, "camera pitch (fixed in mode z, initial in z-pose)");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(gd)) {
      return cmd_gen_data(gd_out, gd_n, gd_res, gd_seed, gd_symmetric, gd_workers);
    }
    if (app.got_subcommand(tr)) {
      TrainingConfig cfg;
      if (!tr_cfg.empty()) cfg = parse_training_config(slurp_file(tr_cfg));
      if (tr_seed_opt->count()) cfg.seed = tr_seed;
      if (tr_steps_opt->count()) cfg.steps = tr_steps;
      if (tr_mode_opt->count()) cfg.mode = tr_mode;
      return cmd_train(cfg, tr_data, tr_out);
    }
    if (app.got_subcommand(ev)) return cmd_eval(ev_ckpt, ev_data, ev_metrics, ev_opt);
    if (app.got_subcommand(rd)) return cmd_render(rd_ckpt, rd_out, rd_yaw, rd_pitch, rd_zseed);
    if (app.got_subcommand(xg)) {
      return cmd_extract_geometry(xg_ckpt, xg_out, xg_yaw, xg_pitch, xg_zseed);
    }
    if (app.got_subcommand(iv)) {
      return cmd_invert(iv_ckpt, iv_image, iv_out, iv_mode, iv_steps, iv_yaw, iv_pitch);
    }
  } catch (const Error& e) {
    LOG_ERROR(e.what());
    return 2;
  } catch (const std::exception& e) {
    LOG_ERROR("unexpected: " << e.what());
    return 2;
  }
  return 1;  // unreachable with require_subcommand(1)
}

}  // namespace geod
