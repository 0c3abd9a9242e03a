#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "geod/dataset.hpp"
#include "geod/inversion.hpp"
#include "geod/metrics.hpp"
#include "geod/training.hpp"

using namespace geod;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("side: closed forms, scale invariance, masking") {
  // Two pixels with log-depth errors {1, 0}: mean 0.5, var 0.25, side 0.5.
  Tensor gt = Tensor::from_data({1, 2}, {1.0, 1.0});
  Tensor pred = Tensor::from_data({1, 2}, {std::exp(1.0), 1.0});
  Tensor full = Tensor::full({1, 2}, 1.0);
  CHECK(side(pred, gt, full) == doctest::Approx(0.5).epsilon(1e-12));

  // A global rescale of the prediction shifts every delta equally: side 0.
  Tensor d = Tensor::from_data({2, 2}, {0.9, 1.1, 1.0, 1.3});
  Tensor full4 = Tensor::full({2, 2}, 1.0);
  CHECK(side(mul(d, 7.3), d, full4) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(side(mul(d, 0.01), d, full4) == doctest::Approx(0.0).epsilon(1e-9));

  // Masked-out pixels cannot influence the score, however broken they are.
  Tensor pred_bad = Tensor::from_data({1, 3}, {std::exp(1.0), 1.0, -5.0});
  Tensor gt3 = Tensor::from_data({1, 3}, {1.0, 1.0, 1.0});
  Tensor mask = Tensor::from_data({1, 3}, {1.0, 1.0, 0.0});
  CHECK(side(pred_bad, gt3, mask) == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(side(pred, gt, Tensor::zeros({1, 2})), Error);       // empty mask
  CHECK_THROWS_AS(side(Tensor::zeros({1, 2}), gt, full), Error);       // pred <= 0
  CHECK_THROWS_AS(side(pred, gt, Tensor::full({1, 3}, 1.0)), Error);   // shape clash
}

TEST_CASE("median: both parities, singleton, empty") {
  CHECK(median({3.0}) == 3.0);
  CHECK(median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("reprojection error: identity is zero, truth beats a flat guess") {
  Rng rng(41);
  Intrinsics K = intrinsics_from_fov(30.0, 16, 16);
  Scene scene = sample_scene(rng, /*symmetric=*/true);
  const Pose pa{-0.15, M_PI / 2 - 0.04, 1.0};
  const Pose pb{0.15, M_PI / 2 + 0.04, 1.0};
  SceneRender ra = render_scene(scene, pa, K, 0.8, 1.2);
  SceneRender rb = render_scene(scene, pb, K, 0.8, 1.2);

  double vf = 0.0;
  CHECK(reprojection_error(ra.image, ra.depth, pa, ra.image, pa, K, &vf) ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(vf == doctest::Approx(1.0));

  double re_true = reprojection_error(ra.image, ra.depth, pa, rb.image, pb, K, &vf);
  CHECK(vf > 0.6);
  CHECK(re_true < 0.02);

  Tensor flat = Tensor::full(ra.depth.shape(), 1.0);
  double re_flat = reprojection_error(ra.image, flat, pa, rb.image, pb, K);
  CHECK(re_flat > 3.0 * re_true);

  // Depth below the warp's z cutoff invalidates everything.
  Tensor degenerate = Tensor::full(ra.depth.shape(), 1e-6);
  CHECK_THROWS_AS(reprojection_error(ra.image, degenerate, pa, rb.image, pb, K), Error);
}

TEST_CASE("inversion recovers a latent the generator itself produced") {
  ParameterStore store;
  Rng rng(11);
  GeneratorConfig gc;
  gc.latent_dim = 8;
  gc.hidden = 16;
  gc.layers = 2;
  gc.n_ray_samples = 6;
  Generator gen(gc, store, rng);
  Intrinsics K = intrinsics_from_fov(30.0, 16, 16);

  SUBCASE("latent only, known camera") {
    // Freshly initialized film weights are deliberately tiny, which makes the
    // field nearly latent-independent; amplify them so z visibly matters.
    Tensor w1 = store.get("gen.map.w1");
    std::vector<double> v = w1.values();
    for (double& x : v) x *= 100.0;
    store.set_values("gen.map.w1", v);
    Tensor z_star = Tensor::randn({1, gc.latent_dim}, rng);
    Tensor target;
    {
      NoGradGuard ng;
      target = render_image(gen, z_star, make_rays(Pose{}, K), nullptr).color.detach();
    }
    InversionConfig ic;
    ic.steps = 0;
    InversionResult at_init = invert(gen, target, K, nullptr, ic);
    CHECK(at_init.best_step == 0);
    CHECK(at_init.z.values() == std::vector<double>(gc.latent_dim, 0.0));

    ic.steps = 150;
    ic.lr = 0.1;
    InversionResult fit = invert(gen, target, K, nullptr, ic);
    CHECK(fit.loss < at_init.loss);
    // A random amplified field is full of local minima; a third off the
    // initialization error is what descent reliably earns here.
    CHECK(fit.pixel_l1 < 0.7 * at_init.pixel_l1);
  }

  SUBCASE("latent and viewpoint") {
    // Kept at its weak initialization the field barely reacts to z, so the
    // image is decided by the camera alone and yaw must be found exactly;
    // an amplified field would let z counterfeit the viewpoint instead.
    const double yaw_star = 0.15;
    Tensor z_star = Tensor::randn({1, gc.latent_dim}, rng);
    Tensor target;
    {
      NoGradGuard ng;
      target = render_image(gen, z_star, make_rays(Pose{yaw_star, M_PI / 2, 1.0}, K), nullptr)
                   .color.detach();
    }
    InversionConfig ic;
    ic.steps = 250;
    ic.lr = 0.05;
    InversionResult fixed = invert(gen, target, K, nullptr, ic);
    ic.optimize_pose = true;
    InversionResult fit = invert(gen, target, K, nullptr, ic);
    CHECK(std::fabs(fit.pose.yaw - yaw_star) < 0.1);
    CHECK(fit.loss <= fixed.loss + 1e-6);  // the extra freedom may not hurt
  }
}

TEST_CASE("checkpoint evaluation: full protocol, deterministic") {
  fs::path ds = geod::testutil::scratch_root() / "geod_eval_test_ds";
  fs::path out = geod::testutil::scratch_root() / "geod_eval_test_run";
  fs::remove_all(ds);
  fs::remove_all(out);
  generate_dataset(ds.string(), 8, 16, /*seed=*/5, /*symmetric=*/true, /*workers=*/2);

  TrainingConfig cfg;
  cfg.steps = 2;
  cfg.batch = 2;
  cfg.resolution = 16;
  cfg.generator.latent_dim = 8;
  cfg.generator.hidden = 16;
  cfg.generator.layers = 2;
  cfg.generator.n_ray_samples = 6;
  cfg.discriminator.base_channels = 8;
  Trainer t(cfg, ds.string(), out.string());
  TrainResult res = t.run();
  REQUIRE_FALSE(res.aborted);

  EvalOptions opt;
  opt.n_images = 2;
  opt.invert_steps = 3;
  opt.re_pairs = 2;
  EvalReport rep = evaluate_checkpoint(res.final_checkpoint, ds.string(), opt);
  CHECK(rep.side_per_image.size() == 2);
  CHECK(rep.re_per_pair.size() + rep.warnings.size() >= 1);
  for (double s : rep.side_per_image) {
    CHECK(std::isfinite(s));
    CHECK(s >= 0.0);
  }
  CHECK(rep.side_median >= 0.0);

  EvalReport again = evaluate_checkpoint(res.final_checkpoint, ds.string(), opt);
  CHECK(eval_report_json(again) == eval_report_json(rep));

  fs::remove_all(ds);
  fs::remove_all(out);
}

TEST_SUITE_END();
