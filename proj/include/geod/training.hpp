#pragma once

#include <string>
#include <vector>

#include "geod/config.hpp"
#include "geod/dataset.hpp"
#include "geod/discriminator.hpp"
#include "geod/generator.hpp"
#include "geod/losses.hpp"
#include "geod/params.hpp"

namespace geod {

// Per-step scalars, one CSV row each (batch means). Terms that are off this
// step (baseline mode, ramp not started, consistency skipped) log as zero.
struct StepStats {
  double adv_g = 0;
  double geo_f = 0;
  double consistency = 0;
  double adv_d_real = 0;
  double adv_d_fake = 0;
  double gp = 0;
  double geo_r = 0;
  double lambda_geo_f = 0;
};

struct TrainResult {
  int64_t completed_steps = 0;
  bool aborted = false;  // a step threw (non-finite loss); params stay intact
  std::string abort_reason;
  std::string final_checkpoint;
};

// Alternating GAN driver: one discriminator update then one generator update
// per step. Owns the parameter store, both optimizers and all RNG streams;
// run() writes run.json, metrics.csv and checkpoints under out_dir.
//
// What trains when:
//   mode=baseline          pure adversarial + gradient penalty
//   mode=geod              + branch reconstruction on reals (D side, unless the
//                            branch is frozen) and ramped geometry agreement on
//                            fakes (G side)
//   mode=geod-consistency  + multi-view depth consensus on fakes (G side)
// geometry_branch.mode picks who owns the branch: scratch shares the domain
// trunk and trains with D; pretrained runs a separate reconstruction-warmed
// encoder that then freezes; fine_tuned warms the same way but keeps training.
class Trainer {
 public:
  Trainer(const TrainingConfig& cfg, std::string data_dir, std::string out_dir);

  TrainResult run();

  // One D update + one G update; exposed so tests can drive the loop.
  StepStats train_step(int64_t it);

  // The two halves of train_step, individually steppable so routing can be
  // checked phase by phase (a D update must not move generator parameters
  // and vice versa).
  void discriminator_step(int64_t it, StepStats& stats);
  void generator_step(int64_t it, StepStats& stats);

  // Reconstruction-only warmup of the separate geometry encoder
  // (pretrained / fine_tuned branch modes; no-op for scratch).
  void pretrain_geometry();

  ParameterStore& params() { return store_; }
  const TrainingConfig& config() const { return cfg_; }
  const Intrinsics& intrinsics() const { return K_; }
  const Generator& generator() const { return gen_; }
  const Discriminator& discriminator() const { return disc_; }

 private:
  Tensor sample_latent();
  Tensor real_image();
  RenderOutput render_fake(const Tensor& z, const Pose& pose);
  // Depth consensus across `views` renders of one latent: every view's
  // predicted depth is warped into the canonical frame and pulled toward
  // their proximity-weighted blend where the warps are valid.
  Tensor consistency_loss(const Tensor& z);
  std::vector<std::string> d_prefixes() const;
  bool geo_trains_with_d() const;

  TrainingConfig cfg_;
  std::string data_dir_, out_dir_;
  DatasetMeta meta_;
  Intrinsics K_;
  ParameterStore store_;
  Rng init_rng_;
  Generator gen_;
  Discriminator disc_;
  PerceptualPyramid percep_;
  Adam opt_g_, opt_d_;
  Rng rng_;        // poses and latents
  Rng strat_rng_;  // stratified depth samples
  SampleShuffler shuffler_;
};

}  // namespace geod
