#pragma once

#include <cstdint>
#include <string>

#include "geod/camera.hpp"
#include "geod/discriminator.hpp"
#include "geod/generator.hpp"

namespace geod {

struct ScheduleConfig {
  bool adjust = true;  // ramp the fake-geometry weight; constant at _end otherwise
  double lambda_geo_f_start = 0.1;
  double lambda_geo_f_end = 1.0;
  int64_t it_start = 500;
  int64_t it_end = 1500;
};

struct OptimizerConfig {
  double lr_g = 2e-3;
  double lr_d = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ConsistencyConfig {
  double lambda = 10.0;
  double start_fraction = 0.75;  // fraction of total steps before the term turns on
  int views = 6;
  int every = 4;  // evaluated on every n-th generator step (it is expensive)
};

struct GeometryBranchConfig {
  // scratch: branch shares the trunk and trains with the GAN;
  // pretrained: separate encoder, reconstruction-pretrained, then frozen;
  // fine_tuned: separate encoder, pretrained, keeps training with the GAN.
  std::string mode = "scratch";
  int64_t pretrain_steps = 400;
  double pretrain_lr = 2e-3;
};

struct TrainingConfig {
  std::string mode = "geod";  // baseline | geod | geod-consistency
  int64_t steps = 2000;
  int batch = 3;
  int resolution = 32;
  uint64_t seed = 1;
  double fov_degrees = 30.0;
  double lambda_gp = 1.0;
  double lambda_geo_r = 1.0;
  int64_t checkpoint_every = 1000;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  ConsistencyConfig consistency;
  GeometryBranchConfig geometry_branch;
  PoseRange pose;
};

// Parses a (possibly partial) JSON object over the defaults above; unknown
// keys and malformed values are errors. Validates mode strings and ranges.
TrainingConfig parse_training_config(const std::string& json_text);

// Full resolved config as JSON; parse(resolve(cfg)) == cfg.
std::string training_config_json(const TrainingConfig& cfg);

void validate_training_config(const TrainingConfig& cfg);

}  // namespace geod
