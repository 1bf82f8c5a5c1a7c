#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "latnav/errors.hpp"
#include "latnav/rng.hpp"
#include "latnav/world_model.hpp"
#include "oracles.hpp"

using namespace latnav;
namespace fs = std::filesystem;

namespace {

WorldModel::Config miniature_wm() {
  WorldModel::Config cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  cfg.layers = 2;
  cfg.double_precision = true;
  return cfg;
}

LatentSequence sine_sequence(int length, int latent_dim, uint64_t seed, double noise) {
  Rng rng(seed);
  const double phase_a = rng.uniform(0.0, 2.0 * M_PI);
  const double phase_b = rng.uniform(0.0, 2.0 * M_PI);
  LatentSequence seq;
  for (int t = 0; t < length; ++t) {
    std::vector<double> l(latent_dim, 0.0);
    l[0] = std::sin(0.3 * t + phase_a);
    if (latent_dim > 1) l[1] = std::cos(0.3 * t + phase_a);
    if (latent_dim > 2) l[2] = std::sin(0.17 * t + phase_b);
    if (latent_dim > 3) l[3] = std::cos(0.17 * t + phase_b);
    for (double& v : l) v += rng.normal(0.0, noise);
    seq.latents.push_back(l);
    seq.deltas.push_back({0.1, 0.0, 0.05});
  }
  return seq;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_sine_dataset(const fs::path& dir, size_t trajectories, int length,
                        int latent_dim, uint64_t seed) {
  TrajectoryDatasetWriter writer(dir, latent_dim, seed, 0xabc);
  for (size_t i = 0; i < trajectories; ++i) {
    const LatentSequence seq = sine_sequence(length, latent_dim, derive_seed(seed, i), 0.01);
    Trajectory traj;
    traj.termination = Termination::kTimeout;
    for (int t = 0; t < length; ++t) {
      TrajectoryStep step;
      step.latent.assign(seq.latents[t].begin(), seq.latents[t].end());
      step.delta = seq.deltas[t];
      traj.steps.push_back(step);
    }
    writer.append(traj);
  }
  writer.finalize();
}

// NLL of the best constant Gaussian fit to the one-step targets.
double constant_predictor_nll(const TrajectoryDataset& data) {
  std::vector<double> sum, sum_sq;
  size_t n = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const Trajectory& traj = data.get(i);
    for (size_t t = 1; t < traj.steps.size(); ++t) {
      const auto& l = traj.steps[t].latent;
      if (sum.empty()) {
        sum.assign(l.size(), 0.0);
        sum_sq.assign(l.size(), 0.0);
      }
      for (size_t k = 0; k < l.size(); ++k) {
        sum[k] += l[k];
        sum_sq[k] += static_cast<double>(l[k]) * l[k];
      }
      ++n;
    }
  }
  double nll = 0.0;
  for (size_t k = 0; k < sum.size(); ++k) {
    const double mean = sum[k] / static_cast<double>(n);
    const double var = std::max(1e-12, sum_sq[k] / static_cast<double>(n) - mean * mean);
    nll += 0.5 * std::log(2.0 * M_PI * var) + 0.5;
  }
  return nll;
}

}  // namespace

TEST_CASE("gaussian nll closed forms") {
  CHECK(gaussian_nll(1.7, 1.7, 1.0) ==
        doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_nll(0.0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_nll(0.0, 0.0, -1.0), std::invalid_argument);

  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const double mu = rng.uniform(-5.0, 5.0);
    const double sigma = rng.uniform(0.05, 3.0);
    // Keep the density away from underflow so its direct log stays finite.
    const double x = mu + sigma * rng.uniform(-8.0, 8.0);
    const double density =
        std::exp(-0.5 * (x - mu) * (x - mu) / (sigma * sigma)) /
        (sigma * std::sqrt(2.0 * M_PI));
    CHECK(gaussian_nll(x, mu, sigma) == doctest::Approx(-std::log(density)).epsilon(1e-9));
  }

  const LatentDistribution pred{{0.2, -1.0}, {0.5, 2.0}};
  const std::vector<double> x{0.4, 0.1};
  CHECK(gaussian_nll(x, pred) ==
        doctest::Approx(gaussian_nll(0.4, 0.2, 0.5) + gaussian_nll(0.1, -1.0, 2.0))
            .epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_nll({0.0}, pred), std::invalid_argument);
}

TEST_CASE("wm loss terms") {
  const LatentDistribution std_pred{{0.0, 0.0}, {1.0, 1.0}};
  const WmLossTerms at_mean = wm_loss(std_pred, {0.0, 0.0});
  CHECK(at_mean.kl == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(at_mean.nll == doctest::Approx(std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK(at_mean.total(0.1) == doctest::Approx(at_mean.nll + 0.1 * at_mean.kl));

  // nll is minimized over mu at mu = x for fixed sigma.
  const std::vector<double> x{0.8};
  const double at_x = wm_loss({{0.8}, {0.7}}, x).nll;
  CHECK(wm_loss({{0.8 + 0.3}, {0.7}}, x).nll > at_x);
  CHECK(wm_loss({{0.8 - 0.3}, {0.7}}, x).nll > at_x);
}

TEST_CASE("measurement update basics") {
  WorldModel::Config cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  cfg.layers = 2;
  WorldModel model(cfg, 3);

  const Belief b0 = model.initial_belief();
  CHECK(b0.hidden.size() == 16);
  CHECK_FALSE(b0.has_pred());

  const std::vector<double> zeros(4, 0.0);
  const auto [b1, pred] = model.measurement_update(b0, zeros, {});
  REQUIRE(pred.mu.size() == 4);
  for (double v : pred.mu) CHECK(std::isfinite(v));
  for (double s : pred.sigma) CHECK(s > 0.0);
  for (float v : b1.hidden) CHECK(std::isfinite(v));

  const auto [b1b, predb] = model.measurement_update(b0, zeros, {});
  CHECK(b1b.hidden == b1.hidden);
  CHECK(b1b.cell == b1.cell);
  CHECK(predb.mu == pred.mu);
  CHECK(predb.sigma == pred.sigma);

  CHECK_THROWS_AS(model.measurement_update(b0, {0.0, 0.0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(
      model.measurement_update(b0, {0.0, 0.0, 0.0, std::nan("")}, {}),
      std::invalid_argument);
  CHECK_THROWS_AS(model.measurement_update(b0, zeros, {1.0, 0.0, std::nan("")}),
                  std::invalid_argument);
  Belief bad = b0;
  bad.hidden.pop_back();
  CHECK_THROWS_AS(model.measurement_update(bad, zeros, {}), std::invalid_argument);
}

TEST_CASE("belief stays finite under long bounded input sequences") {
  WorldModel::Config cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  WorldModel model(cfg, 9);
  Rng rng(7);
  Belief b = model.initial_belief();
  for (int t = 0; t < 500; ++t) {
    std::vector<double> l(4);
    for (double& v : l) v = rng.uniform(-3.0, 3.0);
    const Pose2 d{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.2, 0.2)};
    b = model.measurement_update(b, l, d).first;
    b = model.dream_update(b, d).first;
  }
  for (float v : b.hidden) CHECK(std::isfinite(v));
  for (float v : b.cell) CHECK(std::isfinite(v));
  for (double s : b.pred.sigma) CHECK(s > 0.0);
}

TEST_CASE("dream equals measurement fed with the previous mean") {
  WorldModel::Config cfg;
  cfg.latent_dim = 6;
  cfg.hidden_dim = 12;
  WorldModel model(cfg, 11);
  Rng rng(5);
  Belief b = model.initial_belief();
  CHECK_THROWS_AS(model.dream_update(b, {}), std::invalid_argument);
  for (int t = 0; t < 5; ++t) {
    std::vector<double> l(6);
    for (double& v : l) v = rng.uniform(-1.0, 1.0);
    b = model.measurement_update(b, l, {0.05, 0.0, 0.01}).first;
  }
  const Pose2 dpsi{0.08, -0.02, 0.03};
  const auto [dream_b, dream_pred] = model.dream_update(b, dpsi);
  const auto [meas_b, meas_pred] = model.measurement_update(b, b.pred.mu, dpsi);
  CHECK(dream_b.hidden == meas_b.hidden);
  CHECK(dream_b.cell == meas_b.cell);
  CHECK(dream_pred.mu == meas_pred.mu);
  CHECK(dream_pred.sigma == meas_pred.sigma);
}

TEST_CASE("window loss equals folding the public updates") {
  WorldModel::Config cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  WorldModel model(cfg, 19);
  const LatentSequence seq = sine_sequence(10, 4, 77, 0.02);

  Belief b = model.initial_belief();
  double manual = 0.0;
  for (size_t t = 0; t + 1 < seq.length(); ++t) {
    const auto [nb, pred] = model.measurement_update(b, seq.latents[t], seq.deltas[t]);
    b = nb;
    manual += wm_loss(pred, seq.latents[t + 1]).total(0.1);
  }
  manual /= static_cast<double>(seq.length() - 1);
  CHECK(model.window_loss(seq, 0.1) == doctest::Approx(manual).epsilon(1e-4));

  CHECK_THROWS_AS(model.window_loss({{}, {}}, 0.1), std::invalid_argument);
}

TEST_CASE("world model gradient matches central finite differences") {
  WorldModel model(miniature_wm(), 31);
  const LatentSequence seq = sine_sequence(6, 4, 13, 0.05);
  const double lambda = 0.1;
  const int dream_start = 2, dream_len = 2;

  std::vector<double> grad;
  model.window_loss_grad(seq, lambda, dream_start, dream_len, &grad);
  std::vector<double> params = model.parameters();
  REQUIRE(params.size() == grad.size());

  const double h = 1e-5;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    model.set_parameters(params);
    const double up = model.window_loss(seq, lambda, dream_start, dream_len);
    params[i] = saved - h;
    model.set_parameters(params);
    const double down = model.window_loss(seq, lambda, dream_start, dream_len);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    num += (fd - grad[i]) * (fd - grad[i]);
    den += grad[i] * grad[i];
  }
  REQUIRE(den > 0.0);
  CHECK(std::sqrt(num / den) < 1e-4);
}

TEST_CASE("world model checkpoint round trip") {
  const fs::path dir = fresh_dir("latnav_wm_ckpt");
  WorldModel::Config cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  WorldModel model(cfg, 23);
  model.save(dir / "wm.ck");
  WorldModel loaded = WorldModel::load(dir / "wm.ck");
  CHECK(loaded.parameters() == model.parameters());

  Seq2SeqModel::Config scfg;
  scfg.latent_dim = 4;
  scfg.hidden_dim = 8;
  Seq2SeqModel s2s(scfg, 2);
  s2s.save(dir / "s2s.ck");
  CHECK_THROWS_AS(WorldModel::load(dir / "s2s.ck"), DependencyError);
  CHECK_THROWS_AS(Seq2SeqModel::load(dir / "wm.ck"), DependencyError);
}

TEST_CASE("world model training beats the constant predictor and reruns identically") {
  const fs::path dir = fresh_dir("latnav_wm_train");
  write_sine_dataset(dir, 8, 30, 4, 0x5eed);
  const TrajectoryDataset data = TrajectoryDataset::open(dir);

  WorldModel::Config mcfg;
  mcfg.latent_dim = 4;
  mcfg.hidden_dim = 16;
  mcfg.layers = 2;

  WmSettings ws;
  ws.hidden_dim = 16;
  ws.layers = 2;
  ws.epochs = 40;
  ws.batch_size = 8;
  ws.window = 20;
  ws.horizon = 6;
  ws.dream_fraction = 0.5;
  ws.validation_fraction = 0.25;

  WorldModel model(mcfg, 29);
  const WmTrainMetrics metrics = train_world_model(model, data, ws, 31);
  REQUIRE(metrics.epoch_loss.size() == 40);
  REQUIRE(metrics.val_nll.size() == 40);
  CHECK(metrics.val_nll.back() < constant_predictor_nll(data));
  CHECK(metrics.epoch_loss.back() < metrics.epoch_loss.front());

  WorldModel rerun(mcfg, 29);
  const WmTrainMetrics again = train_world_model(rerun, data, ws, 31);
  CHECK(again.epoch_loss == metrics.epoch_loss);
  CHECK(rerun.parameters() == model.parameters());
}

TEST_CASE("world model training rejects an empty dataset") {
  const fs::path dir = fresh_dir("latnav_wm_empty");
  TrajectoryDatasetWriter writer(dir, 4, 1, 2);
  writer.finalize();
  const TrajectoryDataset data = TrajectoryDataset::open(dir);
  WorldModel model(miniature_wm(), 1);
  WmSettings ws;
  ws.hidden_dim = 8;
  ws.layers = 2;
  CHECK_THROWS_AS(train_world_model(model, data, ws, 1), DependencyError);
}

TEST_CASE("seq2seq encoder shape contract and loss structure") {
  Seq2SeqModel::Config cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  cfg.layers = 2;
  Seq2SeqModel model(cfg, 41);

  for (int len : {3, 10, 25}) {
    const LatentSequence seq = sine_sequence(len, 4, 100 + static_cast<uint64_t>(len), 0.02);
    const Belief b = model.encode(seq);
    CHECK(b.hidden.size() == 16);
    CHECK(b.cell.size() == 16);
    CHECK_FALSE(b.has_pred());
  }

  const LatentSequence seq = sine_sequence(12, 4, 55, 0.02);
  const auto recon_only = model.window_loss(seq, 0);
  CHECK(recon_only.pred_nll == 0.0);
  CHECK(recon_only.total() == recon_only.recon_nll);
  const auto both = model.window_loss(seq, 4);
  CHECK(both.total() == doctest::Approx(both.recon_nll + both.pred_nll));
  CHECK_THROWS_AS(model.window_loss(seq, 11), std::invalid_argument);
  CHECK_THROWS_AS(model.horizon_nll(seq, 12), std::invalid_argument);
  CHECK(model.horizon_nll(seq, 8).size() == 4);
}

TEST_CASE("seq2seq gradient matches central finite differences") {
  Seq2SeqModel::Config cfg;
  cfg.latent_dim = 3;
  cfg.hidden_dim = 6;
  cfg.layers = 1;
  cfg.double_precision = true;
  Seq2SeqModel model(cfg, 47);
  const LatentSequence seq = sine_sequence(8, 3, 21, 0.05);
  const int horizon = 3;

  std::vector<double> grad;
  model.window_loss_grad(seq, horizon, &grad);
  std::vector<double> params = model.parameters();
  REQUIRE(params.size() == grad.size());

  const double h = 1e-5;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    model.set_parameters(params);
    const double up = model.window_loss(seq, horizon).total();
    params[i] = saved - h;
    model.set_parameters(params);
    const double down = model.window_loss(seq, horizon).total();
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    num += (fd - grad[i]) * (fd - grad[i]);
    den += grad[i] * grad[i];
  }
  REQUIRE(den > 0.0);
  CHECK(std::sqrt(num / den) < 1e-4);
}

TEST_CASE("seq2seq training learns and prediction error grows with lookahead") {
  const fs::path dir = fresh_dir("latnav_s2s_train");
  write_sine_dataset(dir, 8, 34, 4, 0xf00d);
  const TrajectoryDataset data = TrajectoryDataset::open(dir);

  Seq2SeqModel::Config mcfg;
  mcfg.latent_dim = 4;
  mcfg.hidden_dim = 16;
  mcfg.layers = 2;

  WmSettings ws;
  ws.hidden_dim = 16;
  ws.layers = 2;
  ws.epochs = 40;
  ws.batch_size = 8;
  ws.window = 20;
  ws.horizon = 10;
  ws.validation_fraction = 0.25;

  Seq2SeqModel model(mcfg, 53);
  const WmTrainMetrics metrics = train_seq2seq(model, data, ws, 59);
  CHECK(metrics.epoch_loss.back() < metrics.epoch_loss.front());

  // Averaged over held-out sequences, one-step predictions beat ten-step.
  double one = 0.0, ten = 0.0;
  for (uint64_t s = 0; s < 6; ++s) {
    const LatentSequence seq = sine_sequence(30, 4, 0x900d + s, 0.01);
    const auto nll = model.horizon_nll(seq, 20);
    one += nll.front();
    ten += nll.back();
  }
  CHECK(one < ten);

  Seq2SeqModel rerun(mcfg, 53);
  const WmTrainMetrics again = train_seq2seq(rerun, data, ws, 59);
  CHECK(again.epoch_loss == metrics.epoch_loss);
}
