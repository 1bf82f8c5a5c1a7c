#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "latnav/errors.hpp"
#include "latnav/rng.hpp"
#include "latnav/vae.hpp"
#include "oracles.hpp"

using namespace latnav;
namespace fs = std::filesystem;

namespace {

ConvVae::Config miniature_config() {
  ConvVae::Config cfg;
  cfg.width = 8;
  cfg.height = 4;
  cfg.latent_dim = 2;
  cfg.base_width = 2;
  cfg.stages = 2;
  cfg.max_range = 4.0;
  cfg.double_precision = true;
  return cfg;
}

DepthImage pattern_image(int width, int height, uint64_t seed, double invalid_rate) {
  Rng rng(seed);
  DepthImage img(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (rng.bernoulli(invalid_rate)) continue;
      img.at(r, c) = static_cast<float>(rng.uniform(0.3, 3.9));
    }
  }
  return img;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Depth ramps controlled by three factors, so a small latent can explain the
// whole set and overfitting is possible.
DepthImage ramp_image(int width, int height, uint64_t seed, double invalid_rate) {
  Rng rng(seed);
  const double center = rng.uniform(1.0, 3.0);
  const double gx = rng.uniform(-2.0, 2.0);
  const double gy = rng.uniform(-2.0, 2.0);
  DepthImage img(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (invalid_rate > 0.0 && rng.bernoulli(invalid_rate)) continue;
      const double d = center + gx * (c - width / 2.0) / width +
                       gy * (r - height / 2.0) / height;
      img.at(r, c) = static_cast<float>(std::clamp(d, 0.3, 3.9));
    }
  }
  return img;
}

void write_pattern_dataset(const fs::path& dir, int width, int height, size_t count,
                           uint64_t seed) {
  ImageDatasetWriter writer(dir, width, height, seed, 0x1234);
  for (size_t i = 0; i < count; ++i) {
    ImageRecord rec;
    rec.clean = ramp_image(width, height, derive_seed(seed, i), 0.0);
    rec.degraded = ramp_image(width, height, derive_seed(seed, i), 0.15);
    rec.target = rec.clean;
    writer.append(rec);
  }
  writer.finalize();
}

}  // namespace

TEST_CASE("kl against the closed form") {
  LatentDistribution std_normal{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  CHECK(kl_standard_normal(std_normal) == doctest::Approx(0.0).epsilon(1e-15));

  LatentDistribution d{{1.5}, {0.7}};
  const double expected = 0.5 * (1.5 * 1.5 + 0.49 - 1.0) - std::log(0.7);
  CHECK(kl_standard_normal(d) == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(kl_standard_normal({{0.0}, {1.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(kl_standard_normal({{0.0}, {0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(kl_standard_normal({{0.0}, {-1.0}}), std::invalid_argument);
}

TEST_CASE("kl against a monte carlo estimate") {
  std::vector<double> mu{0.6, -1.1, 0.25, 2.0};
  std::vector<double> sigma{0.5, 1.4, 0.9, 2.2};
  const double exact = kl_standard_normal({mu, sigma});
  const auto mc = oracle::mc_kl_standard_normal(mu, sigma, 1000000, 0x6b6c6d63);
  CHECK(mc.standard_error > 0.0);
  CHECK(std::abs(mc.mean - exact) < 3.0 * mc.standard_error);
}

TEST_CASE("encode and decode shapes and ranges") {
  ConvVae::Config cfg;
  cfg.width = 32;
  cfg.height = 16;
  cfg.latent_dim = 8;
  cfg.base_width = 4;
  ConvVae model(cfg, 7);

  const DepthImage img = pattern_image(32, 16, 11, 0.1);
  const LatentDistribution d = model.encode(img);
  REQUIRE(d.mu.size() == 8);
  REQUIRE(d.sigma.size() == 8);
  for (double s : d.sigma) CHECK(s > 0.0);

  const DepthImage out = model.decode(d.mu);
  REQUIRE(out.width == 32);
  REQUIRE(out.height == 16);
  for (float v : out.values) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  CHECK_THROWS_AS(model.encode(DepthImage(8, 8)), std::invalid_argument);
  CHECK_THROWS_AS(model.decode({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(model.loss(img, img, {0.0, 0.0}), std::invalid_argument);

  // All-invalid input is a legal frame.
  const LatentDistribution blank = model.encode(DepthImage(32, 16));
  CHECK(std::isfinite(blank.mu[0]));
}

TEST_CASE("batched encode matches single encode") {
  ConvVae::Config cfg;
  cfg.width = 16;
  cfg.height = 16;
  cfg.latent_dim = 4;
  cfg.base_width = 4;
  cfg.stages = 3;
  ConvVae model(cfg, 3);
  const DepthImage a = pattern_image(16, 16, 1, 0.05);
  const DepthImage b = pattern_image(16, 16, 2, 0.05);
  const auto batch = model.encode_batch({a, b});
  const auto single_a = model.encode(a);
  const auto single_b = model.encode(b);
  for (int i = 0; i < 4; ++i) {
    CHECK(batch[0].mu[i] == doctest::Approx(single_a.mu[i]).epsilon(1e-5));
    CHECK(batch[1].mu[i] == doctest::Approx(single_b.mu[i]).epsilon(1e-5));
  }
}

TEST_CASE("zero sample noise reduces the latent to its mean") {
  ConvVae::Config cfg = miniature_config();
  ConvVae model(cfg, 21);
  const DepthImage input = pattern_image(cfg.width, cfg.height, 5, 0.1);
  const DepthImage target = pattern_image(cfg.width, cfg.height, 6, 0.0);

  const LatentDistribution d = model.encode(input);
  const DepthImage decoded = model.decode(d.mu);
  double manual_recon = 0.0;
  for (size_t i = 0; i < decoded.values.size(); ++i) {
    const double diff = decoded.values[i] - target.values[i] / cfg.max_range;
    manual_recon += diff * diff;
  }
  manual_recon /= static_cast<double>(decoded.values.size());

  const VaeLossTerms terms = model.loss(input, target, {0.0, 0.0});
  CHECK(terms.recon == doctest::Approx(manual_recon).epsilon(1e-6));
  CHECK(terms.kl == doctest::Approx(kl_standard_normal(d)).epsilon(1e-9));
  CHECK(terms.total(2.0) == doctest::Approx(terms.recon + 2.0 * terms.kl));
}

TEST_CASE("analytic gradient matches central finite differences") {
  ConvVae::Config cfg = miniature_config();
  ConvVae model(cfg, 99);
  const DepthImage input = pattern_image(cfg.width, cfg.height, 13, 0.15);
  const DepthImage target = pattern_image(cfg.width, cfg.height, 14, 0.0);
  const std::vector<double> eps{0.37, -0.81};
  const double beta = 0.6;

  std::vector<double> grad;
  model.loss_grad(input, target, eps, beta, &grad);

  std::vector<double> params = model.parameters();
  REQUIRE(params.size() == grad.size());
  REQUIRE(params.size() == model.parameter_count());

  const double h = 1e-5;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    model.set_parameters(params);
    const double up = model.loss(input, target, eps).total(beta);
    params[i] = saved - h;
    model.set_parameters(params);
    const double down = model.loss(input, target, eps).total(beta);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    num += (fd - grad[i]) * (fd - grad[i]);
    den += grad[i] * grad[i];
  }
  model.set_parameters(params);
  REQUIRE(den > 0.0);
  CHECK(std::sqrt(num / den) < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  const fs::path dir = fresh_dir("latnav_vae_ckpt");
  ConvVae::Config cfg;
  cfg.width = 16;
  cfg.height = 8;
  cfg.latent_dim = 4;
  cfg.base_width = 2;
  cfg.stages = 2;
  ConvVae model(cfg, 41);
  const fs::path path = dir / "vae.ck";
  model.save(path);

  ConvVae loaded = ConvVae::load(path);
  CHECK(loaded.config().latent_dim == 4);
  CHECK(loaded.parameters() == model.parameters());

  const DepthImage img = pattern_image(16, 8, 77, 0.1);
  const auto a = model.encode(img);
  const auto b = loaded.encode(img);
  CHECK(a.mu == b.mu);
  CHECK(a.sigma == b.sigma);

  CHECK_THROWS_AS(ConvVae::load(dir / "absent.ck"), DependencyError);
}

TEST_CASE("identical seeds give identical models") {
  ConvVae::Config cfg = miniature_config();
  ConvVae a(cfg, 5);
  ConvVae b(cfg, 5);
  ConvVae c(cfg, 6);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.parameters() != c.parameters());
}

TEST_CASE("training reduces the loss and reruns bit-identically") {
  const fs::path dir = fresh_dir("latnav_vae_train");
  write_pattern_dataset(dir, 16, 8, 24, 0xda7a);
  const ImageDataset data = ImageDataset::open(dir);

  ConvVae::Config mcfg;
  mcfg.width = 16;
  mcfg.height = 8;
  mcfg.latent_dim = 4;
  mcfg.base_width = 4;
  mcfg.stages = 2;

  VaeSettings vs;
  vs.latent_dim = 4;
  vs.base_width = 4;
  vs.beta = 1.0 / (16.0 * 8.0);
  vs.lr = 2e-3;
  vs.epochs = 150;
  vs.batch_size = 8;
  vs.degraded_mix = 0.3;

  ConvVae model(mcfg, 17);
  const VaeTrainMetrics metrics = train_vae(model, data, vs, 23);
  REQUIRE(metrics.epoch_loss.size() == 150);
  CHECK(metrics.epoch_recon.back() < metrics.epoch_recon.front());
  CHECK(metrics.epoch_recon.back() < 0.02);

  ConvVae rerun(mcfg, 17);
  const VaeTrainMetrics again = train_vae(rerun, data, vs, 23);
  CHECK(again.epoch_loss == metrics.epoch_loss);
  CHECK(rerun.parameters() == model.parameters());

  ConvVae other(mcfg, 17);
  const VaeTrainMetrics different = train_vae(other, data, vs, 24);
  CHECK(different.epoch_loss != metrics.epoch_loss);
}

TEST_CASE("training rejects an empty dataset") {
  const fs::path dir = fresh_dir("latnav_vae_empty");
  ImageDatasetWriter writer(dir, 16, 8, 1, 2);
  writer.finalize();
  const ImageDataset data = ImageDataset::open(dir);
  ConvVae::Config mcfg;
  mcfg.width = 16;
  mcfg.height = 8;
  mcfg.latent_dim = 4;
  mcfg.base_width = 4;
  mcfg.stages = 2;
  ConvVae model(mcfg, 1);
  VaeSettings vs;
  vs.latent_dim = 4;
  vs.base_width = 4;
  CHECK_THROWS_AS(train_vae(model, data, vs, 1), DependencyError);
}
