#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <utility>
#include <vector>

#include "latnav/config.hpp"
#include "latnav/dataset.hpp"
#include "latnav/geometry.hpp"
#include "latnav/vae.hpp"

namespace latnav {

// 0.5*((x-mu)/sigma)^2 + ln(sigma) + 0.5*ln(2*pi); summed form adds over
// dimensions.
double gaussian_nll(double x, double mu, double sigma);
double gaussian_nll(const std::vector<double>& x, const LatentDistribution& pred);

struct WmLossTerms {
  double nll = 0.0;
  double kl = 0.0;
  double total(double lambda) const { return nll + lambda * kl; }
};

WmLossTerms wm_loss(const LatentDistribution& pred, const std::vector<double>& measured);

// Recurrent hidden and cell vectors (layer-major) plus the latest predicted
// next-latent distribution; pred stays empty until the first update.
struct Belief {
  std::vector<float> hidden;
  std::vector<float> cell;
  LatentDistribution pred;

  bool has_pred() const { return !pred.mu.empty(); }
};

// An encoded rollout restricted to what the sequence models consume:
// per-step latent vectors and the camera motion leading into each frame.
struct LatentSequence {
  std::vector<std::vector<double>> latents;
  std::vector<Pose2> deltas;

  size_t length() const { return latents.size(); }
};

LatentSequence to_latent_sequence(const Trajectory& traj);

class WorldModel;
class Seq2SeqModel;

struct WmTrainMetrics {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::vector<double> epoch_nll;
  std::vector<double> val_nll;     // teacher-forced validation nll per epoch
};

// Truncated-window training over (latent, delta) sequences with the VAE
// frozen upstream. A share of windows replays a contiguous dream segment
// (inputs fed from the model's own predicted mean) so predicted sigma learns
// to widen without measurements and to recover afterwards. The trailing
// validation_fraction of trajectories is held out.
WmTrainMetrics train_world_model(WorldModel& model, const TrajectoryDataset& data,
                                 const WmSettings& cfg, uint64_t seed,
                                 std::ostream* log = nullptr);

WmTrainMetrics train_seq2seq(Seq2SeqModel& model, const TrajectoryDataset& data,
                             const WmSettings& cfg, uint64_t seed,
                             std::ostream* log = nullptr);

// LSTM core over [latent, delta] inputs with linear heads for the mean and
// log-sigma of the next latent.
class WorldModel {
 public:
  struct Config {
    int latent_dim = 32;
    int hidden_dim = 128;
    int layers = 2;
    bool double_precision = false;
  };

  WorldModel(const Config& cfg, uint64_t seed);
  ~WorldModel();
  WorldModel(WorldModel&&) noexcept;
  WorldModel& operator=(WorldModel&&) noexcept;

  const Config& config() const;

  Belief initial_belief() const;
  std::pair<Belief, LatentDistribution> measurement_update(const Belief& b,
                                                           const std::vector<double>& latent,
                                                           const Pose2& dpsi) const;
  // Same step fed with the previous predicted mean; requires a prior
  // prediction in the belief.
  std::pair<Belief, LatentDistribution> dream_update(const Belief& b,
                                                     const Pose2& dpsi) const;

  // Mean one-step loss over a teacher-forced window; steps whose index falls
  // in [dream_start, dream_start + dream_len) are fed the previous predicted
  // mean instead of the recorded latent (dream_start >= 1). Targets are
  // always the recorded latents.
  double window_loss(const LatentSequence& seq, double lambda, int dream_start = 0,
                     int dream_len = 0) const;
  double window_loss_grad(const LatentSequence& seq, double lambda, int dream_start,
                          int dream_len, std::vector<double>* grad) const;

  size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  void save(const std::filesystem::path& path) const;
  static WorldModel load(const std::filesystem::path& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  friend WmTrainMetrics train_world_model(WorldModel&, const TrajectoryDataset&,
                                          const WmSettings&, uint64_t, std::ostream*);
};

// Encoder LSTM producing the policy representation, trained against two
// decoder LSTMs: one reconstructing the input window in reverse order, one
// predicting a future horizon conditioned on the future pose increments. Only
// the encoder runs at inference.
class Seq2SeqModel {
 public:
  struct Config {
    int latent_dim = 32;
    int hidden_dim = 128;
    int layers = 2;
    bool double_precision = false;
  };

  Seq2SeqModel(const Config& cfg, uint64_t seed);
  ~Seq2SeqModel();
  Seq2SeqModel(Seq2SeqModel&&) noexcept;
  Seq2SeqModel& operator=(Seq2SeqModel&&) noexcept;

  const Config& config() const;

  Belief initial_belief() const;
  Belief encode_step(const Belief& b, const std::vector<double>& latent,
                     const Pose2& dpsi) const;
  Belief encode(const LatentSequence& seq) const;

  // Combined loss over one window: the first length() - horizon steps are the
  // input, the rest the prediction targets. horizon may be 0 (reconstruction
  // only) and must leave at least two input steps.
  struct LossTerms {
    double recon_nll = 0.0;
    double pred_nll = 0.0;
    double total() const { return recon_nll + pred_nll; }
  };
  LossTerms window_loss(const LatentSequence& seq, int horizon) const;
  LossTerms window_loss_grad(const LatentSequence& seq, int horizon,
                             std::vector<double>* grad) const;

  // Autoregressive prediction from the encoder state: per-step nll of each
  // future latent, feeding predicted means forward. Length of the result is
  // seq.length() - input_len.
  std::vector<double> horizon_nll(const LatentSequence& seq, size_t input_len) const;

  size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  void save(const std::filesystem::path& path) const;
  static Seq2SeqModel load(const std::filesystem::path& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  friend WmTrainMetrics train_seq2seq(Seq2SeqModel&, const TrajectoryDataset&,
                                      const WmSettings&, uint64_t, std::ostream*);
};

}  // namespace latnav
