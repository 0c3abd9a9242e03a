#include "geod/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <utility>

#include "geod/warp.hpp"
#include "json.hpp"

namespace geod {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Independent child streams off the run seed, so e.g. adding a pretraining
// phase cannot shift the poses the main loop draws.
uint64_t substream(uint64_t seed, int k) {
  Rng r(seed);
  uint64_t s = 0;
  for (int i = 0; i <= k; ++i) s = r.next_seed();
  return s;
}

TrainingConfig resolved(TrainingConfig cfg) {
  cfg.discriminator.resolution = cfg.resolution;
  cfg.discriminator.separate_geometry_encoder = cfg.geometry_branch.mode != "scratch";
  validate_training_config(cfg);
  return cfg;
}

void check_finite(double v, const char* what, int64_t it) {
  GEOD_CHECK(std::isfinite(v), "non-finite " << what << " at step " << it);
}

// [1,1] logit-derived terms down to rank 0 so they mix with scalar losses.
Tensor sc(const Tensor& t) { return reshape(t, {}); }

}  // namespace

Trainer::Trainer(const TrainingConfig& cfg, std::string data_dir, std::string out_dir)
    : cfg_(resolved(cfg)),
      data_dir_(std::move(data_dir)),
      out_dir_(std::move(out_dir)),
      meta_(read_manifest(data_dir_)),
      K_(intrinsics_from_fov(cfg_.fov_degrees, cfg_.resolution, cfg_.resolution)),
      init_rng_(substream(cfg_.seed, 0)),
      gen_(cfg_.generator, store_, init_rng_),
      disc_(cfg_.discriminator, store_, init_rng_),
      percep_(store_, init_rng_),
      opt_g_(AdamConfig{cfg_.optimizer.lr_g, cfg_.optimizer.beta1, cfg_.optimizer.beta2,
                        cfg_.optimizer.eps}),
      opt_d_(AdamConfig{cfg_.optimizer.lr_d, cfg_.optimizer.beta1, cfg_.optimizer.beta2,
                        cfg_.optimizer.eps}),
      rng_(substream(cfg_.seed, 1)),
      strat_rng_(substream(cfg_.seed, 2)),
      shuffler_(meta_.count, substream(cfg_.seed, 3)) {
  GEOD_CHECK(meta_.count > 0, "dataset at '" << data_dir_ << "' is empty");
  GEOD_CHECK(meta_.resolution == cfg_.resolution,
             "dataset resolution " << meta_.resolution << " != configured " << cfg_.resolution);
  if (meta_.fov_degrees != cfg_.fov_degrees) {
    LOG_INFO("dataset fov " << meta_.fov_degrees << " differs from configured "
                            << cfg_.fov_degrees);
  }
}

bool Trainer::geo_trains_with_d() const {
  if (cfg_.mode == "baseline") return false;
  return cfg_.geometry_branch.mode == "scratch" || cfg_.geometry_branch.mode == "fine_tuned";
}

std::vector<std::string> Trainer::d_prefixes() const {
  if (geo_trains_with_d()) return {"disc."};
  return {"disc.trunk.", "disc.domain."};
}

Tensor Trainer::sample_latent() {
  return Tensor::randn({1, cfg_.generator.latent_dim}, rng_);
}

Tensor Trainer::real_image() { return load_sample(data_dir_, meta_, shuffler_.next()).image; }

RenderOutput Trainer::render_fake(const Tensor& z, const Pose& pose) {
  return render_image(gen_, z, make_rays(pose, K_), &strat_rng_);
}

Tensor Trainer::consistency_loss(const Tensor& z) {
  const int V = cfg_.consistency.views;
  const int H = cfg_.resolution, W = cfg_.resolution;
  const Pose canonical{0.0, M_PI / 2, cfg_.pose.radius};

  std::vector<Tensor> depths, valids;
  std::vector<double> weights;
  for (int v = 0; v < V; ++v) {
    Pose p = v == 0 ? canonical : sample_pose(rng_, cfg_.pose);
    RenderOutput ro = render_fake(z, p);
    GeometryPrediction g = disc_.geometry(ro.color, K_);
    WarpResult wr = reproject_warp(ro.color, g.depth, p, canonical, K_);
    depths.push_back(wr.depth);
    valids.push_back(reshape(wr.valid, {H, W}));
    // Views near the canonical one warp with less stretch; trust them more.
    weights.push_back(1.0 / (1.0 + std::fabs(p.yaw) + std::fabs(p.pitch - M_PI / 2)));
  }

  Tensor num = Tensor::zeros({H, W});
  Tensor den = Tensor::zeros({H, W});
  for (int v = 0; v < V; ++v) {
    num = add(num, mul(mul(valids[v], depths[v]), weights[v]));
    den = add(den, mul(valids[v], weights[v]));
  }
  Tensor consensus = div(num, max_const(den, 1e-8));

  Tensor loss = Tensor::scalar(0.0);
  for (int v = 0; v < V; ++v) {
    Tensor resid = mul(valids[v], abs_t(sub(depths[v], consensus)));
    Tensor count = max_const(sum(valids[v]), 1.0);
    loss = add(loss, div(sum(resid), count));
  }
  return mul(loss, 1.0 / V);
}

StepStats Trainer::train_step(int64_t it) {
  StepStats st;
  discriminator_step(it, st);
  generator_step(it, st);
  return st;
}

void Trainer::discriminator_step(int64_t it, StepStats& st) {
  const int B = cfg_.batch;
  const bool geod_mode = cfg_.mode != "baseline";

  Tape::active().clear();
  std::vector<Tensor> reals, fakes;
  for (int b = 0; b < B; ++b) reals.push_back(real_image());
  {
    NoGradGuard ng;  // D's fakes carry no generator graph
    for (int b = 0; b < B; ++b) {
      fakes.push_back(render_fake(sample_latent(), sample_pose(rng_, cfg_.pose)).color);
    }
  }

  Tensor adv_real = Tensor::scalar(0.0), adv_fake = Tensor::scalar(0.0);
  Tensor gp = Tensor::scalar(0.0), geo_r = Tensor::scalar(0.0);
  for (int b = 0; b < B; ++b) {
    adv_real = add(adv_real, sc(neg(f_logistic(disc_.domain_logit(reals[b])))));
    adv_fake = add(adv_fake, sc(neg(f_logistic(neg(disc_.domain_logit(fakes[b]))))));
    gp = add(gp, gradient_penalty(disc_, reals[b]));
    if (geod_mode && geo_trains_with_d()) {
      geo_r = add(geo_r,
                  reconstruction_loss(disc_.geometry(reals[b], K_), reals[b], percep_).total);
    }
  }
  Tensor loss_d = mul(add(add(adv_real, adv_fake),
                          add(mul(gp, cfg_.lambda_gp), mul(geo_r, cfg_.lambda_geo_r))),
                      1.0 / B);
  st.adv_d_real = adv_real.item() / B;
  st.adv_d_fake = adv_fake.item() / B;
  st.gp = gp.item() / B;
  st.geo_r = geo_r.item() / B;
  check_finite(loss_d.item(), "discriminator loss", it);
  opt_d_.step(store_, backward(loss_d), d_prefixes());
  Tape::active().clear();
}

void Trainer::generator_step(int64_t it, StepStats& st) {
  const int B = cfg_.batch;
  const bool geod_mode = cfg_.mode != "baseline";

  Tape::active().clear();
  double lambda_geo_f = 0.0;
  if (geod_mode) {
    const ScheduleConfig& s = cfg_.schedule;
    lambda_geo_f = s.adjust ? lambda_ramp(it, s.lambda_geo_f_start, s.lambda_geo_f_end,
                                          s.it_start, s.it_end)
                            : s.lambda_geo_f_end;
  }
  st.lambda_geo_f = lambda_geo_f;

  Tensor adv_g = Tensor::scalar(0.0), geo_f = Tensor::scalar(0.0);
  Tensor z0;
  for (int b = 0; b < B; ++b) {
    Tensor z = sample_latent();
    if (b == 0) z0 = z;
    RenderOutput ro = render_fake(z, sample_pose(rng_, cfg_.pose));
    adv_g = add(adv_g, sc(neg(f_logistic(disc_.domain_logit(ro.color)))));
    if (geod_mode) {
      geo_f = add(geo_f, fake_geometry_loss(ro, disc_.geometry(ro.color, K_), K_));
    }
  }
  Tensor loss_g = mul(add(adv_g, mul(geo_f, lambda_geo_f)), 1.0 / B);

  const bool consistency_on = cfg_.mode == "geod-consistency" &&
                              it >= static_cast<int64_t>(cfg_.consistency.start_fraction *
                                                         static_cast<double>(cfg_.steps)) &&
                              it % cfg_.consistency.every == 0;
  if (consistency_on) {
    Tensor con = consistency_loss(z0);
    st.consistency = con.item();
    loss_g = add(loss_g, mul(con, cfg_.consistency.lambda));
  }
  st.adv_g = adv_g.item() / B;
  st.geo_f = geo_f.item() / B;
  check_finite(loss_g.item(), "generator loss", it);
  opt_g_.step(store_, backward(loss_g), {"gen."});
  Tape::active().clear();
}

void Trainer::pretrain_geometry() {
  if (cfg_.geometry_branch.mode == "scratch" || cfg_.mode == "baseline") return;
  const int64_t steps = cfg_.geometry_branch.pretrain_steps;
  Adam opt(AdamConfig{cfg_.geometry_branch.pretrain_lr, cfg_.optimizer.beta1,
                      cfg_.optimizer.beta2, cfg_.optimizer.eps});
  SampleShuffler shuf(meta_.count, substream(cfg_.seed, 4));
  for (int64_t it = 0; it < steps; ++it) {
    Tape::active().clear();
    Tensor loss = Tensor::scalar(0.0);
    for (int b = 0; b < cfg_.batch; ++b) {
      Tensor img = load_sample(data_dir_, meta_, shuf.next()).image;
      loss = add(loss, reconstruction_loss(disc_.geometry(img, K_), img, percep_).total);
    }
    loss = mul(loss, 1.0 / cfg_.batch);
    check_finite(loss.item(), "pretraining loss", it);
    opt.step(store_, backward(loss), {"disc.geo."});
    if (it % 50 == 0 || it == steps - 1) {
      LOG_INFO("pretrain " << it << "/" << steps << " recon " << loss.item());
    }
  }
  Tape::active().clear();
}

TrainResult Trainer::run() {
  fs::create_directories(out_dir_);
  {
    json j;
    j["config"] = json::parse(training_config_json(cfg_));
    j["data_dir"] = data_dir_;
    j["out_dir"] = out_dir_;
    j["dataset"] = {{"count", meta_.count},
                    {"resolution", meta_.resolution},
                    {"symmetric", meta_.symmetric}};
    std::ofstream f(out_dir_ + "/run.json");
    f << j.dump(2) << "\n";
  }
  std::ofstream csv(out_dir_ + "/metrics.csv");
  GEOD_CHECK(csv.good(), "cannot write metrics.csv under '" << out_dir_ << "'");
  csv << "it,adv_g,geo_f,consistency,adv_d_real,adv_d_fake,gp,geo_r,lambda_geo_f\n";
  csv << std::setprecision(8);

  TrainResult res;
  const std::string meta_json = training_config_json(cfg_);
  try {
    pretrain_geometry();
    for (int64_t it = 0; it < cfg_.steps; ++it) {
      StepStats st = train_step(it);
      csv << it << ',' << st.adv_g << ',' << st.geo_f << ',' << st.consistency << ','
          << st.adv_d_real << ',' << st.adv_d_fake << ',' << st.gp << ',' << st.geo_r << ','
          << st.lambda_geo_f << '\n';
      csv.flush();
      res.completed_steps = it + 1;
      if (it % 100 == 0 || it == cfg_.steps - 1) {
        LOG_INFO("step " << it << " adv_g " << st.adv_g << " geo_f " << st.geo_f << " gp "
                         << st.gp << " geo_r " << st.geo_r);
      }
      if (cfg_.checkpoint_every > 0 && (it + 1) % cfg_.checkpoint_every == 0 &&
          it + 1 < cfg_.steps) {
        save_checkpoint(out_dir_ + "/ckpt_" + std::to_string(it + 1) + ".bin", store_,
                        meta_json);
      }
    }
  } catch (const Error& e) {
    // The finiteness check fires before the optimizer applies, so parameters
    // are still the last good ones; keep them and stop.
    res.aborted = true;
    res.abort_reason = e.what();
    LOG_ERROR("training aborted: " << e.what());
  }
  res.final_checkpoint = out_dir_ + "/ckpt_final.bin";
  save_checkpoint(res.final_checkpoint, store_, meta_json);
  return res;
}

}  // namespace geod
