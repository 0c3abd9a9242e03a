#include "geod/config.hpp"

#include <string>

#include "json.hpp"

namespace geod {

using nlohmann::json;

namespace {

template <typename T>
void take(json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string("config key '") + key + "': " + e.what());
  }
  j.erase(key);
}

void expect_consumed(const json& j, const char* where) {
  GEOD_CHECK(j.empty(), "unknown config keys under '" << where << "': " << j.dump());
}

json take_object(json& j, const char* key) {
  if (!j.contains(key)) return json::object();
  GEOD_CHECK(j.at(key).is_object(), "config key '" << key << "' must be an object");
  json sub = j.at(key);
  j.erase(key);
  return sub;
}

}  // namespace

TrainingConfig parse_training_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  GEOD_CHECK(j.is_object(), "config must be a JSON object");
  TrainingConfig cfg;

  take(j, "mode", cfg.mode);
  take(j, "steps", cfg.steps);
  take(j, "batch", cfg.batch);
  take(j, "resolution", cfg.resolution);
  take(j, "seed", cfg.seed);
  take(j, "fov_degrees", cfg.fov_degrees);
  take(j, "lambda_gp", cfg.lambda_gp);
  take(j, "lambda_geo_r", cfg.lambda_geo_r);
  take(j, "checkpoint_every", cfg.checkpoint_every);

  json g = take_object(j, "generator");
  take(g, "latent_dim", cfg.generator.latent_dim);
  take(g, "hidden", cfg.generator.hidden);
  take(g, "layers", cfg.generator.layers);
  take(g, "first_omega", cfg.generator.first_omega);
  take(g, "coord_scale", cfg.generator.coord_scale);
  take(g, "n_ray_samples", cfg.generator.n_ray_samples);
  take(g, "near", cfg.generator.near);
  take(g, "far", cfg.generator.far);
  take(g, "renormalize_depth", cfg.generator.renormalize_depth);
  expect_consumed(g, "generator");

  json d = take_object(j, "discriminator");
  take(d, "base_channels", cfg.discriminator.base_channels);
  take(d, "d_min", cfg.discriminator.d_min);
  take(d, "d_max", cfg.discriminator.d_max);
  take(d, "conf_floor", cfg.discriminator.conf_floor);
  take(d, "light_xy_bound", cfg.discriminator.light_xy_bound);
  take(d, "yaw_bound", cfg.discriminator.yaw_bound);
  take(d, "pitch_bound", cfg.discriminator.pitch_bound);
  expect_consumed(d, "discriminator");

  json o = take_object(j, "optimizer");
  take(o, "lr_g", cfg.optimizer.lr_g);
  take(o, "lr_d", cfg.optimizer.lr_d);
  take(o, "beta1", cfg.optimizer.beta1);
  take(o, "beta2", cfg.optimizer.beta2);
  take(o, "eps", cfg.optimizer.eps);
  expect_consumed(o, "optimizer");

  json s = take_object(j, "schedule");
  take(s, "adjust", cfg.schedule.adjust);
  take(s, "lambda_geo_f_start", cfg.schedule.lambda_geo_f_start);
  take(s, "lambda_geo_f_end", cfg.schedule.lambda_geo_f_end);
  take(s, "it_start", cfg.schedule.it_start);
  take(s, "it_end", cfg.schedule.it_end);
  expect_consumed(s, "schedule");

  json c = take_object(j, "consistency");
  take(c, "lambda", cfg.consistency.lambda);
  take(c, "start_fraction", cfg.consistency.start_fraction);
  take(c, "views", cfg.consistency.views);
  take(c, "every", cfg.consistency.every);
  expect_consumed(c, "consistency");

  json gb = take_object(j, "geometry_branch");
  take(gb, "mode", cfg.geometry_branch.mode);
  take(gb, "pretrain_steps", cfg.geometry_branch.pretrain_steps);
  take(gb, "pretrain_lr", cfg.geometry_branch.pretrain_lr);
  expect_consumed(gb, "geometry_branch");

  json p = take_object(j, "pose");
  take(p, "yaw_range", cfg.pose.yaw_range);
  take(p, "pitch_range", cfg.pose.pitch_range);
  take(p, "radius", cfg.pose.radius);
  expect_consumed(p, "pose");

  expect_consumed(j, "config");
  // Derived fields: the discriminator always sees full-resolution frames, and
  // any geometry branch that gets pretrained needs its own encoder.
  cfg.discriminator.resolution = cfg.resolution;
  cfg.discriminator.separate_geometry_encoder = cfg.geometry_branch.mode != "scratch";
  validate_training_config(cfg);
  return cfg;
}

void validate_training_config(const TrainingConfig& cfg) {
  GEOD_CHECK(cfg.mode == "baseline" || cfg.mode == "geod" || cfg.mode == "geod-consistency",
             "mode must be baseline, geod or geod-consistency, got '" << cfg.mode << "'");
  const std::string& gm = cfg.geometry_branch.mode;
  GEOD_CHECK(gm == "scratch" || gm == "pretrained" || gm == "fine_tuned",
             "geometry_branch.mode must be scratch, pretrained or fine_tuned, got '" << gm << "'");
  GEOD_CHECK(cfg.steps > 0 && cfg.batch > 0, "steps and batch must be positive");
  GEOD_CHECK(cfg.resolution >= 16 && cfg.resolution % 8 == 0,
             "resolution must be a multiple of 8 and >= 16");
  GEOD_CHECK(cfg.generator.near > 0 && cfg.generator.far > cfg.generator.near,
             "generator needs 0 < near < far");
  GEOD_CHECK(cfg.discriminator.d_min < cfg.discriminator.d_max,
             "discriminator needs d_min < d_max");
  GEOD_CHECK(cfg.optimizer.lr_g > 0 && cfg.optimizer.lr_d > 0, "learning rates must be positive");
  GEOD_CHECK(cfg.schedule.it_start <= cfg.schedule.it_end,
             "schedule.it_start must not exceed schedule.it_end");
  GEOD_CHECK(cfg.consistency.views >= 2 && cfg.consistency.every >= 1,
             "consistency needs views >= 2 and every >= 1");
  GEOD_CHECK(cfg.consistency.start_fraction >= 0.0 && cfg.consistency.start_fraction <= 1.0,
             "consistency.start_fraction must lie in [0,1]");
  GEOD_CHECK(cfg.lambda_gp >= 0 && cfg.lambda_geo_r >= 0, "loss weights must be nonnegative");
  GEOD_CHECK(cfg.geometry_branch.pretrain_steps >= 0, "pretrain_steps must be nonnegative");
  GEOD_CHECK(cfg.fov_degrees > 1.0 && cfg.fov_degrees < 179.0, "fov_degrees out of range");
}

std::string training_config_json(const TrainingConfig& cfg) {
  json j;
  j["mode"] = cfg.mode;
  j["steps"] = cfg.steps;
  j["batch"] = cfg.batch;
  j["resolution"] = cfg.resolution;
  j["seed"] = cfg.seed;
  j["fov_degrees"] = cfg.fov_degrees;
  j["lambda_gp"] = cfg.lambda_gp;
  j["lambda_geo_r"] = cfg.lambda_geo_r;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["generator"] = {{"latent_dim", cfg.generator.latent_dim},
                    {"hidden", cfg.generator.hidden},
                    {"layers", cfg.generator.layers},
                    {"first_omega", cfg.generator.first_omega},
                    {"coord_scale", cfg.generator.coord_scale},
                    {"n_ray_samples", cfg.generator.n_ray_samples},
                    {"near", cfg.generator.near},
                    {"far", cfg.generator.far},
                    {"renormalize_depth", cfg.generator.renormalize_depth}};
  j["discriminator"] = {{"base_channels", cfg.discriminator.base_channels},
                        {"d_min", cfg.discriminator.d_min},
                        {"d_max", cfg.discriminator.d_max},
                        {"conf_floor", cfg.discriminator.conf_floor},
                        {"light_xy_bound", cfg.discriminator.light_xy_bound},
                        {"yaw_bound", cfg.discriminator.yaw_bound},
                        {"pitch_bound", cfg.discriminator.pitch_bound}};
  j["optimizer"] = {{"lr_g", cfg.optimizer.lr_g},
                    {"lr_d", cfg.optimizer.lr_d},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps}};
  j["schedule"] = {{"adjust", cfg.schedule.adjust},
                   {"lambda_geo_f_start", cfg.schedule.lambda_geo_f_start},
                   {"lambda_geo_f_end", cfg.schedule.lambda_geo_f_end},
                   {"it_start", cfg.schedule.it_start},
                   {"it_end", cfg.schedule.it_end}};
  j["consistency"] = {{"lambda", cfg.consistency.lambda},
                      {"start_fraction", cfg.consistency.start_fraction},
                      {"views", cfg.consistency.views},
                      {"every", cfg.consistency.every}};
  j["geometry_branch"] = {{"mode", cfg.geometry_branch.mode},
                          {"pretrain_steps", cfg.geometry_branch.pretrain_steps},
                          {"pretrain_lr", cfg.geometry_branch.pretrain_lr}};
  j["pose"] = {{"yaw_range", cfg.pose.yaw_range},
               {"pitch_range", cfg.pose.pitch_range},
               {"radius", cfg.pose.radius}};
  return j.dump(2);
}

}  // namespace geod
