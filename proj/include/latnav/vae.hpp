#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <vector>

#include "latnav/camera.hpp"
#include "latnav/config.hpp"
#include "latnav/dataset.hpp"

namespace latnav {

struct LatentDistribution {
  std::vector<double> mu;
  std::vector<double> sigma;  // elementwise positive
};

// Closed form of KL(N(mu, diag sigma^2) || N(0, I)).
double kl_standard_normal(const LatentDistribution& d);

struct VaeLossTerms {
  double recon = 0.0;  // mean squared error against the target
  double kl = 0.0;
  double total(double beta) const { return recon + beta * kl; }
};

class ConvVae;

struct VaeTrainMetrics {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::vector<double> epoch_recon;
  std::vector<double> epoch_kl;
};

// Minibatch Adam over the container, mixing degraded inputs at
// cfg.degraded_mix; targets are the filtered images unless cfg.raw_targets
// selects the clean renders. Deterministic given (model seed, train seed, data).
VaeTrainMetrics train_vae(ConvVae& model, const ImageDataset& data,
                          const VaeSettings& cfg, uint64_t seed,
                          std::ostream* log = nullptr);

// Convolutional encoder/decoder pair over depth images. Images enter
// normalized by max_range with invalid pixels left at 0; the decoder emits
// values in [0,1].
class ConvVae {
 public:
  struct Config {
    int width = 64;
    int height = 32;
    int latent_dim = 32;
    int base_width = 16;  // channels of the first stage, doubling per stage
    int stages = 4;       // stride-2 stages; width/height divisible by 2^stages
    double max_range = 4.0;
    bool double_precision = false;  // used by the finite-difference checks
  };

  ConvVae(const Config& cfg, uint64_t seed);
  ~ConvVae();
  ConvVae(ConvVae&&) noexcept;
  ConvVae& operator=(ConvVae&&) noexcept;

  const Config& config() const;

  LatentDistribution encode(const DepthImage& img) const;
  std::vector<LatentDistribution> encode_batch(const std::vector<DepthImage>& imgs) const;
  // z must have length latent_dim; the result holds normalized values.
  DepthImage decode(const std::vector<double>& z) const;

  // Reparametrized loss with explicit sample noise; eps of length latent_dim
  // (eps = 0 makes the sampled latent equal mu).
  VaeLossTerms loss(const DepthImage& input, const DepthImage& target,
                    const std::vector<double>& eps) const;
  // Same loss, plus d(total)/d(parameters) at the given beta.
  VaeLossTerms loss_grad(const DepthImage& input, const DepthImage& target,
                         const std::vector<double>& eps, double beta,
                         std::vector<double>* grad) const;

  size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  void save(const std::filesystem::path& path) const;
  static ConvVae load(const std::filesystem::path& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  friend VaeTrainMetrics train_vae(ConvVae&, const ImageDataset&, const VaeSettings&,
                                   uint64_t, std::ostream*);
};

// One fixed global initialization for thread count; safe to call repeatedly.
void init_torch_runtime();

}  // namespace latnav
