#include "latnav/world_model.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "latnav/errors.hpp"
#include "latnav/rng.hpp"
#include "torch_util.hpp"

namespace latnav {

double gaussian_nll(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  const double z = (x - mu) / sigma;
  return 0.5 * z * z + std::log(sigma) + 0.5 * std::log(2.0 * M_PI);
}

double gaussian_nll(const std::vector<double>& x, const LatentDistribution& pred) {
  if (x.size() != pred.mu.size() || x.size() != pred.sigma.size()) {
    throw std::invalid_argument("latent and prediction differ in length");
  }
  double nll = 0.0;
  for (size_t i = 0; i < x.size(); ++i) nll += gaussian_nll(x[i], pred.mu[i], pred.sigma[i]);
  return nll;
}

WmLossTerms wm_loss(const LatentDistribution& pred, const std::vector<double>& measured) {
  return {gaussian_nll(measured, pred), kl_standard_normal(pred)};
}

LatentSequence to_latent_sequence(const Trajectory& traj) {
  LatentSequence seq;
  seq.latents.reserve(traj.steps.size());
  seq.deltas.reserve(traj.steps.size());
  for (const TrajectoryStep& step : traj.steps) {
    seq.latents.emplace_back(step.latent.begin(), step.latent.end());
    seq.deltas.push_back(step.delta);
  }
  return seq;
}

namespace {

constexpr double kLogSigmaMin = -8.0;
constexpr double kLogSigmaMax = 8.0;

void check_finite(const std::vector<double>& latent, const Pose2& dpsi) {
  for (double v : latent) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite latent input");
  }
  if (!std::isfinite(dpsi.x) || !std::isfinite(dpsi.y) || !std::isfinite(dpsi.yaw)) {
    throw std::invalid_argument("non-finite pose increment");
  }
}

// (T, latent) and (T, 3) data tensors for one sequence.
std::pair<torch::Tensor, torch::Tensor> sequence_tensors(const LatentSequence& seq,
                                                         int latent_dim,
                                                         torch::Dtype dtype) {
  const int64_t T = static_cast<int64_t>(seq.length());
  auto lat = torch::empty({T, latent_dim}, torch::kFloat64);
  auto del = torch::empty({T, 3}, torch::kFloat64);
  for (int64_t t = 0; t < T; ++t) {
    if (static_cast<int>(seq.latents[t].size()) != latent_dim) {
      throw std::invalid_argument("latent dimension mismatch in sequence");
    }
    std::copy_n(seq.latents[t].data(), latent_dim, lat[t].data_ptr<double>());
    del[t][0] = seq.deltas[t].x;
    del[t][1] = seq.deltas[t].y;
    del[t][2] = seq.deltas[t].yaw;
  }
  return {lat.to(dtype), del.to(dtype)};
}

std::vector<float> to_float_vector(const torch::Tensor& t) {
  auto flat = t.detach().to(torch::kFloat32).contiguous().view(-1);
  return {flat.data_ptr<float>(), flat.data_ptr<float>() + flat.numel()};
}

LatentDistribution to_distribution(const torch::Tensor& mu, const torch::Tensor& sigma) {
  auto mu_d = mu.detach().to(torch::kFloat64).contiguous().view(-1);
  auto sg_d = sigma.detach().to(torch::kFloat64).contiguous().view(-1);
  LatentDistribution d;
  d.mu.assign(mu_d.data_ptr<double>(), mu_d.data_ptr<double>() + mu_d.numel());
  d.sigma.assign(sg_d.data_ptr<double>(), sg_d.data_ptr<double>() + sg_d.numel());
  return d;
}

// Shared recurrent core: LSTM over [latent, delta] with linear heads.
struct RecurrentCore {
  torch::nn::LSTM lstm{nullptr};
  torch::nn::Linear mu_head{nullptr};
  torch::nn::Linear ls_head{nullptr};

  void build(torch::nn::Module& owner, const std::string& prefix, int latent_dim,
             int hidden_dim, int layers) {
    lstm = torch::nn::LSTM(
        torch::nn::LSTMOptions(latent_dim + 3, hidden_dim).num_layers(layers));
    mu_head = torch::nn::Linear(hidden_dim, latent_dim);
    ls_head = torch::nn::Linear(hidden_dim, latent_dim);
    owner.register_module(prefix + "_lstm", lstm);
    owner.register_module(prefix + "_mu", mu_head);
    owner.register_module(prefix + "_ls", ls_head);
  }

  // input (B, latent+3), state (layers, B, hidden); returns top output and
  // the advanced state.
  std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> step(
      const torch::Tensor& input, const torch::Tensor& h, const torch::Tensor& c) {
    auto [out, state] = lstm->forward(input.unsqueeze(0), std::make_tuple(h, c));
    return {out.squeeze(0), std::get<0>(state), std::get<1>(state)};
  }

  std::pair<torch::Tensor, torch::Tensor> predict(const torch::Tensor& top) {
    auto mu = mu_head->forward(top);
    auto ls = ls_head->forward(top).clamp(kLogSigmaMin, kLogSigmaMax);
    return {mu, ls};
  }
};

torch::Tensor nll_terms(const torch::Tensor& target, const torch::Tensor& mu,
                        const torch::Tensor& ls) {
  auto sigma = torch::exp(ls);
  auto z = (target - mu) / sigma;
  return torch::sum(0.5 * z * z + ls + 0.5 * std::log(2.0 * M_PI), -1);
}

torch::Tensor kl_terms(const torch::Tensor& mu, const torch::Tensor& ls) {
  auto sigma = torch::exp(ls);
  return torch::sum(0.5 * (mu * mu + sigma * sigma - 1.0) - ls, -1);
}

struct WindowSlice {
  size_t traj = 0;
  size_t start = 0;
  size_t len = 0;
  int dream_start = 0;  // 0 disables the dream segment
  int dream_len = 0;
};

// Enumerates training windows at half-window stride, keeping whole short
// trajectories as single windows.
std::vector<WindowSlice> enumerate_windows(const std::vector<size_t>& traj_ids,
                                           const TrajectoryDataset& data, size_t window) {
  std::vector<WindowSlice> out;
  const size_t stride = std::max<size_t>(1, window / 2);
  for (size_t id : traj_ids) {
    const size_t len = data.get(id).steps.size();
    if (len < 2) continue;
    if (len <= window) {
      out.push_back({id, 0, len, 0, 0});
      continue;
    }
    for (size_t start = 0; start + window <= len; start += stride) {
      out.push_back({id, start, window, 0, 0});
      if (start + window == len) break;
    }
    if ((len - window) % stride != 0) out.push_back({id, len - window, window, 0, 0});
  }
  return out;
}

std::vector<std::vector<WindowSlice>> bucket_batches(std::vector<WindowSlice> windows,
                                                     size_t batch_size,
                                                     std::mt19937_64& rng) {
  std::map<size_t, std::vector<WindowSlice>> by_len;
  for (const WindowSlice& w : windows) by_len[w.len].push_back(w);
  std::vector<std::vector<WindowSlice>> batches;
  for (auto& [len, group] : by_len) {
    std::shuffle(group.begin(), group.end(), rng);
    for (size_t i = 0; i < group.size(); i += batch_size) {
      const size_t n = std::min(batch_size, group.size() - i);
      batches.emplace_back(group.begin() + i, group.begin() + i + n);
    }
  }
  return batches;
}

}  // namespace

// ---------------------------------------------------------------------------
// WorldModel

struct WmNetImpl : torch::nn::Module {
  WorldModel::Config cfg;
  RecurrentCore core;

  explicit WmNetImpl(const WorldModel::Config& c) : cfg(c) {
    core.build(*this, "core", cfg.latent_dim, cfg.hidden_dim, cfg.layers);
  }
};

struct WorldModel::Impl {
  Config cfg;
  std::shared_ptr<WmNetImpl> net;

  torch::Dtype dtype() const { return detail::dtype_for(cfg.double_precision); }

  std::pair<torch::Tensor, torch::Tensor> belief_state(const Belief& b, int batch) const {
    const int64_t n = static_cast<int64_t>(cfg.layers) * cfg.hidden_dim;
    if (b.hidden.empty() && b.cell.empty()) {
      auto z = torch::zeros({cfg.layers, batch, cfg.hidden_dim}, dtype());
      return {z, z.clone()};
    }
    if (static_cast<int64_t>(b.hidden.size()) != n ||
        static_cast<int64_t>(b.cell.size()) != n) {
      throw std::invalid_argument("belief state has wrong dimensions");
    }
    auto h = torch::from_blob(const_cast<float*>(b.hidden.data()), {cfg.layers, 1, cfg.hidden_dim},
                              torch::kFloat32)
                 .to(dtype())
                 .clone();
    auto c = torch::from_blob(const_cast<float*>(b.cell.data()), {cfg.layers, 1, cfg.hidden_dim},
                              torch::kFloat32)
                 .to(dtype())
                 .clone();
    return {h, c};
  }

  std::pair<Belief, LatentDistribution> step(const Belief& b,
                                             const std::vector<double>& latent,
                                             const Pose2& dpsi) const {
    if (static_cast<int>(latent.size()) != cfg.latent_dim) {
      throw std::invalid_argument("latent vector has wrong length");
    }
    check_finite(latent, dpsi);
    torch::NoGradGuard guard;
    auto input = torch::empty({1, cfg.latent_dim + 3}, torch::kFloat64);
    std::copy_n(latent.data(), cfg.latent_dim, input.data_ptr<double>());
    input[0][cfg.latent_dim] = dpsi.x;
    input[0][cfg.latent_dim + 1] = dpsi.y;
    input[0][cfg.latent_dim + 2] = dpsi.yaw;
    auto [h, c] = belief_state(b, 1);
    auto [top, hn, cn] = net->core.step(input.to(dtype()), h, c);
    auto [mu, ls] = net->core.predict(top);
    Belief nb;
    nb.hidden = to_float_vector(hn);
    nb.cell = to_float_vector(cn);
    nb.pred = to_distribution(mu, torch::exp(ls));
    return {nb, nb.pred};
  }

  // Batched window loss. lat (B, T, latent), del (B, T, 3); dream flags per
  // window; returns (mean total, mean nll) over all one-step predictions.
  std::pair<torch::Tensor, torch::Tensor> window_loss_tensor(
      const torch::Tensor& lat, const torch::Tensor& del, double lambda,
      const std::vector<std::pair<int, int>>& dreams) const {
    const int64_t B = lat.size(0);
    const int64_t T = lat.size(1);
    auto mask = torch::zeros({B, T}, torch::kBool);
    for (int64_t b = 0; b < B; ++b) {
      const auto [ds, dl] = dreams[static_cast<size_t>(b)];
      for (int t = ds; t < ds + dl && t < T; ++t) {
        if (ds >= 1) mask[b][t] = true;
      }
    }
    auto h = torch::zeros({cfg.layers, B, cfg.hidden_dim}, dtype());
    auto c = torch::zeros({cfg.layers, B, cfg.hidden_dim}, dtype());
    torch::Tensor total_sum = torch::zeros({}, dtype());
    torch::Tensor nll_sum = torch::zeros({}, dtype());
    torch::Tensor prev_mu;
    for (int64_t t = 0; t + 1 < T; ++t) {
      torch::Tensor in_lat = lat.select(1, t);
      if (t > 0) {
        in_lat = torch::where(mask.select(1, t).unsqueeze(1), prev_mu, in_lat);
      }
      auto input = torch::cat({in_lat, del.select(1, t)}, 1);
      auto [top, hn, cn] = net->core.step(input, h, c);
      h = hn;
      c = cn;
      auto [mu, ls] = net->core.predict(top);
      auto nll = nll_terms(lat.select(1, t + 1), mu, ls);
      auto kl = kl_terms(mu, ls);
      nll_sum = nll_sum + nll.sum();
      total_sum = total_sum + (nll + lambda * kl).sum();
      prev_mu = mu;
    }
    const double count = static_cast<double>(B * (T - 1));
    return {total_sum / count, nll_sum / count};
  }
};

WorldModel::WorldModel(const Config& cfg, uint64_t seed) : impl_(std::make_unique<Impl>()) {
  if (cfg.latent_dim < 1 || cfg.hidden_dim < 1 || cfg.layers < 1) {
    throw ConfigError("world model dimensions must be positive");
  }
  detail::init_runtime();
  impl_->cfg = cfg;
  torch::manual_seed(derive_seed(seed, 0x776d3030));
  impl_->net = std::make_shared<WmNetImpl>(cfg);
  impl_->net->to(impl_->dtype());
}

WorldModel::~WorldModel() = default;
WorldModel::WorldModel(WorldModel&&) noexcept = default;
WorldModel& WorldModel::operator=(WorldModel&&) noexcept = default;

const WorldModel::Config& WorldModel::config() const { return impl_->cfg; }

Belief WorldModel::initial_belief() const {
  Belief b;
  const size_t n = static_cast<size_t>(impl_->cfg.layers) * impl_->cfg.hidden_dim;
  b.hidden.assign(n, 0.0f);
  b.cell.assign(n, 0.0f);
  return b;
}

std::pair<Belief, LatentDistribution> WorldModel::measurement_update(
    const Belief& b, const std::vector<double>& latent, const Pose2& dpsi) const {
  return impl_->step(b, latent, dpsi);
}

std::pair<Belief, LatentDistribution> WorldModel::dream_update(const Belief& b,
                                                               const Pose2& dpsi) const {
  if (!b.has_pred()) {
    throw std::invalid_argument("dream update requires a prior prediction");
  }
  return impl_->step(b, b.pred.mu, dpsi);
}

double WorldModel::window_loss(const LatentSequence& seq, double lambda, int dream_start,
                               int dream_len) const {
  torch::NoGradGuard guard;
  if (seq.length() < 2) throw std::invalid_argument("window needs at least two steps");
  auto [lat, del] = sequence_tensors(seq, impl_->cfg.latent_dim, impl_->dtype());
  auto [total, nll] = impl_->window_loss_tensor(lat.unsqueeze(0), del.unsqueeze(0), lambda,
                                                {{dream_start, dream_len}});
  return total.item<double>();
}

double WorldModel::window_loss_grad(const LatentSequence& seq, double lambda,
                                    int dream_start, int dream_len,
                                    std::vector<double>* grad) const {
  if (seq.length() < 2) throw std::invalid_argument("window needs at least two steps");
  auto params = impl_->net->parameters();
  for (auto& p : params) {
    if (p.grad().defined()) p.grad().zero_();
  }
  auto [lat, del] = sequence_tensors(seq, impl_->cfg.latent_dim, impl_->dtype());
  auto [total, nll] = impl_->window_loss_tensor(lat.unsqueeze(0), del.unsqueeze(0), lambda,
                                                {{dream_start, dream_len}});
  total.backward();
  if (grad != nullptr) *grad = detail::flatten_gradients(params);
  return total.item<double>();
}

size_t WorldModel::parameter_count() const {
  size_t n = 0;
  for (const auto& p : impl_->net->parameters()) n += static_cast<size_t>(p.numel());
  return n;
}

std::vector<double> WorldModel::parameters() const {
  return detail::flatten_parameters(impl_->net->parameters());
}

void WorldModel::set_parameters(const std::vector<double>& flat) {
  detail::unflatten_parameters(impl_->net->parameters(), flat);
}

void WorldModel::save(const std::filesystem::path& path) const {
  nlohmann::json meta = {
      {"kind", "world_model"}, {"version", 1},
      {"latent_dim", impl_->cfg.latent_dim}, {"hidden_dim", impl_->cfg.hidden_dim},
      {"layers", impl_->cfg.layers}, {"double_precision", impl_->cfg.double_precision},
  };
  detail::save_checkpoint(path, meta, impl_->net->parameters());
}

WorldModel WorldModel::load(const std::filesystem::path& path) {
  std::vector<double> flat;
  nlohmann::json meta = detail::load_checkpoint(path, "world_model", &flat);
  Config cfg;
  cfg.latent_dim = meta.at("latent_dim").get<int>();
  cfg.hidden_dim = meta.at("hidden_dim").get<int>();
  cfg.layers = meta.at("layers").get<int>();
  cfg.double_precision = meta.at("double_precision").get<bool>();
  WorldModel model(cfg, 0);
  model.set_parameters(flat);
  return model;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct SplitIds {
  std::vector<size_t> train;
  std::vector<size_t> val;
};

SplitIds split_trajectories(const TrajectoryDataset& data, double validation_fraction) {
  if (data.size() == 0) throw DependencyError("trajectory dataset is empty");
  SplitIds split;
  const size_t n_val = static_cast<size_t>(validation_fraction * static_cast<double>(data.size()));
  const size_t n_train = data.size() - n_val;
  for (size_t i = 0; i < n_train; ++i) split.train.push_back(i);
  for (size_t i = n_train; i < data.size(); ++i) split.val.push_back(i);
  if (split.val.empty()) split.val = split.train;  // tiny datasets validate in-sample
  return split;
}

// (B, T, latent) and (B, T, 3) batch tensors for equal-length slices.
std::pair<torch::Tensor, torch::Tensor> batch_tensors(const TrajectoryDataset& data,
                                                      const std::vector<WindowSlice>& batch,
                                                      int latent_dim, torch::Dtype dtype) {
  const int64_t B = static_cast<int64_t>(batch.size());
  const int64_t T = static_cast<int64_t>(batch.front().len);
  auto lat = torch::empty({B, T, latent_dim}, torch::kFloat64);
  auto del = torch::empty({B, T, 3}, torch::kFloat64);
  for (int64_t b = 0; b < B; ++b) {
    const WindowSlice& w = batch[static_cast<size_t>(b)];
    const Trajectory& traj = data.get(w.traj);
    for (int64_t t = 0; t < T; ++t) {
      const TrajectoryStep& step = traj.steps[w.start + static_cast<size_t>(t)];
      if (static_cast<int>(step.latent.size()) != latent_dim) {
        throw std::invalid_argument("latent dimension mismatch in trajectory");
      }
      for (int i = 0; i < latent_dim; ++i) lat[b][t][i] = static_cast<double>(step.latent[i]);
      del[b][t][0] = step.delta.x;
      del[b][t][1] = step.delta.y;
      del[b][t][2] = step.delta.yaw;
    }
  }
  return {lat.to(dtype), del.to(dtype)};
}

}  // namespace

WmTrainMetrics train_world_model(WorldModel& model, const TrajectoryDataset& data,
                                 const WmSettings& cfg, uint64_t seed, std::ostream* log) {
  detail::init_runtime();
  auto& impl = *model.impl_;
  if (impl.cfg.hidden_dim != cfg.hidden_dim || impl.cfg.layers != cfg.layers) {
    throw std::invalid_argument("model does not match the world model settings");
  }
  const SplitIds split = split_trajectories(data, cfg.validation_fraction);
  const auto window = static_cast<size_t>(cfg.window);
  std::vector<WindowSlice> val_windows = enumerate_windows(split.val, data, window);
  if (enumerate_windows(split.train, data, window).empty() || val_windows.empty()) {
    throw DependencyError("trajectory dataset has no usable windows");
  }

  torch::optim::Adam opt(impl.net->parameters(), torch::optim::AdamOptions(cfg.lr));
  Rng dream_rng(derive_seed(seed, 0x776d6472));
  const auto dtype = impl.dtype();

  WmTrainMetrics metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(seed, 0x776d0000 + static_cast<uint64_t>(epoch)));
    std::vector<WindowSlice> windows = enumerate_windows(split.train, data, window);
    auto batches = bucket_batches(std::move(windows), static_cast<size_t>(cfg.batch_size),
                                  shuffle_rng);
    double sum_total = 0.0, sum_nll = 0.0;
    size_t count = 0;
    for (auto& batch : batches) {
      std::vector<std::pair<int, int>> dreams(batch.size(), {0, 0});
      const int T = static_cast<int>(batch.front().len);
      for (size_t b = 0; b < batch.size(); ++b) {
        // A dream needs room for a prefix, the segment and a recovery step.
        if (T >= 6 && dream_rng.bernoulli(cfg.dream_fraction)) {
          const int max_len = std::min(cfg.horizon, T - 3);
          if (max_len >= 2) {
            const int len = dream_rng.uniform_int(2, max_len);
            const int start = dream_rng.uniform_int(1, T - 2 - len);
            dreams[b] = {start, len};
          }
        }
      }
      auto [lat, del] = batch_tensors(data, batch, impl.cfg.latent_dim, dtype);
      auto [total, nll] = impl.window_loss_tensor(lat, del, cfg.lambda_kl, dreams);
      opt.zero_grad();
      total.backward();
      opt.step();
      const double n = static_cast<double>(batch.size() * (batch.front().len - 1));
      sum_total += total.item<double>() * n;
      sum_nll += nll.item<double>() * n;
      count += static_cast<size_t>(n);
    }
    metrics.epoch_loss.push_back(sum_total / static_cast<double>(count));
    metrics.epoch_nll.push_back(sum_nll / static_cast<double>(count));

    {
      torch::NoGradGuard guard;
      std::mt19937_64 val_rng(0);
      auto val_batches = bucket_batches(val_windows, static_cast<size_t>(cfg.batch_size), val_rng);
      double vsum = 0.0;
      size_t vcount = 0;
      for (auto& batch : val_batches) {
        std::vector<std::pair<int, int>> no_dreams(batch.size(), {0, 0});
        auto [lat, del] = batch_tensors(data, batch, impl.cfg.latent_dim, dtype);
        auto [total, nll] = impl.window_loss_tensor(lat, del, cfg.lambda_kl, no_dreams);
        const double n = static_cast<double>(batch.size() * (batch.front().len - 1));
        vsum += nll.item<double>() * n;
        vcount += static_cast<size_t>(n);
      }
      metrics.val_nll.push_back(vsum / static_cast<double>(vcount));
    }
    if (log != nullptr) {
      (*log) << "wm epoch " << epoch << " loss " << metrics.epoch_loss.back() << " nll "
             << metrics.epoch_nll.back() << " val_nll " << metrics.val_nll.back() << "\n";
    }
  }
  return metrics;
}

// ---------------------------------------------------------------------------
// Seq2Seq

struct S2sNetImpl : torch::nn::Module {
  Seq2SeqModel::Config cfg;
  torch::nn::LSTM encoder{nullptr};
  RecurrentCore recon;
  RecurrentCore pred;

  explicit S2sNetImpl(const Seq2SeqModel::Config& c) : cfg(c) {
    encoder = torch::nn::LSTM(
        torch::nn::LSTMOptions(cfg.latent_dim + 3, cfg.hidden_dim).num_layers(cfg.layers));
    register_module("encoder", encoder);
    recon.build(*this, "recon", cfg.latent_dim, cfg.hidden_dim, cfg.layers);
    pred.build(*this, "pred", cfg.latent_dim, cfg.hidden_dim, cfg.layers);
  }
};

struct Seq2SeqModel::Impl {
  Config cfg;
  std::shared_ptr<S2sNetImpl> net;

  torch::Dtype dtype() const { return detail::dtype_for(cfg.double_precision); }

  std::pair<torch::Tensor, torch::Tensor> belief_state(const Belief& b) const {
    const int64_t n = static_cast<int64_t>(cfg.layers) * cfg.hidden_dim;
    if (b.hidden.empty() && b.cell.empty()) {
      auto z = torch::zeros({cfg.layers, 1, cfg.hidden_dim}, dtype());
      return {z, z.clone()};
    }
    if (static_cast<int64_t>(b.hidden.size()) != n ||
        static_cast<int64_t>(b.cell.size()) != n) {
      throw std::invalid_argument("belief state has wrong dimensions");
    }
    auto h = torch::from_blob(const_cast<float*>(b.hidden.data()), {cfg.layers, 1, cfg.hidden_dim},
                              torch::kFloat32)
                 .to(dtype())
                 .clone();
    auto c = torch::from_blob(const_cast<float*>(b.cell.data()), {cfg.layers, 1, cfg.hidden_dim},
                              torch::kFloat32)
                 .to(dtype())
                 .clone();
    return {h, c};
  }

  // Loss over a batch of equal-length windows. horizon picks how many
  // trailing steps are prediction targets.
  std::pair<torch::Tensor, torch::Tensor> loss_tensors(const torch::Tensor& lat,
                                                       const torch::Tensor& del,
                                                       int horizon) const {
    const int64_t B = lat.size(0);
    const int64_t T = lat.size(1);
    const int64_t W = T - horizon;
    if (horizon < 0 || W < 2) {
      throw std::invalid_argument("horizon leaves fewer than two input steps");
    }
    auto inputs = torch::cat({lat.slice(1, 0, W), del.slice(1, 0, W)}, 2).transpose(0, 1);
    auto h0 = torch::zeros({cfg.layers, B, cfg.hidden_dim}, lat.scalar_type());
    auto [enc_out, enc_state] = net->encoder->forward(inputs, std::make_tuple(h0, h0.clone()));
    auto eh = std::get<0>(enc_state);
    auto ec = std::get<1>(enc_state);

    // Reconstruction emits the input window in reverse, teacher-forced with
    // the previous reversed latent and no pose increment.
    auto zero_delta = torch::zeros({B, 3}, lat.scalar_type());
    auto h = eh;
    auto c = ec;
    torch::Tensor recon_sum = torch::zeros({}, lat.scalar_type());
    for (int64_t k = 0; k < W; ++k) {
      auto in_lat = (k == 0) ? torch::zeros({B, static_cast<int64_t>(cfg.latent_dim)},
                                            lat.scalar_type())
                             : lat.select(1, W - k);
      auto [top, hn, cn] = net->recon.step(torch::cat({in_lat, zero_delta}, 1), h, c);
      h = hn;
      c = cn;
      auto [mu, ls] = net->recon.predict(top);
      recon_sum = recon_sum + nll_terms(lat.select(1, W - 1 - k), mu, ls).sum();
    }

    torch::Tensor pred_sum = torch::zeros({}, lat.scalar_type());
    if (horizon > 0) {
      h = eh;
      c = ec;
      torch::Tensor prev = lat.select(1, W - 1);
      for (int64_t k = 0; k < horizon; ++k) {
        auto [top, hn, cn] =
            net->pred.step(torch::cat({prev, del.select(1, W + k)}, 1), h, c);
        h = hn;
        c = cn;
        auto [mu, ls] = net->pred.predict(top);
        pred_sum = pred_sum + nll_terms(lat.select(1, W + k), mu, ls).sum();
        prev = mu;  // self-fed rollout, matching how the decoder runs at test
      }
    }
    return {recon_sum / static_cast<double>(B * W),
            horizon > 0 ? pred_sum / static_cast<double>(B * horizon)
                        : pred_sum};
  }
};

Seq2SeqModel::Seq2SeqModel(const Config& cfg, uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
  if (cfg.latent_dim < 1 || cfg.hidden_dim < 1 || cfg.layers < 1) {
    throw ConfigError("seq2seq dimensions must be positive");
  }
  detail::init_runtime();
  impl_->cfg = cfg;
  torch::manual_seed(derive_seed(seed, 0x73327330));
  impl_->net = std::make_shared<S2sNetImpl>(cfg);
  impl_->net->to(impl_->dtype());
}

Seq2SeqModel::~Seq2SeqModel() = default;
Seq2SeqModel::Seq2SeqModel(Seq2SeqModel&&) noexcept = default;
Seq2SeqModel& Seq2SeqModel::operator=(Seq2SeqModel&&) noexcept = default;

const Seq2SeqModel::Config& Seq2SeqModel::config() const { return impl_->cfg; }

Belief Seq2SeqModel::initial_belief() const {
  Belief b;
  const size_t n = static_cast<size_t>(impl_->cfg.layers) * impl_->cfg.hidden_dim;
  b.hidden.assign(n, 0.0f);
  b.cell.assign(n, 0.0f);
  return b;
}

Belief Seq2SeqModel::encode_step(const Belief& b, const std::vector<double>& latent,
                                 const Pose2& dpsi) const {
  if (static_cast<int>(latent.size()) != impl_->cfg.latent_dim) {
    throw std::invalid_argument("latent vector has wrong length");
  }
  check_finite(latent, dpsi);
  torch::NoGradGuard guard;
  auto input = torch::empty({1, 1, impl_->cfg.latent_dim + 3}, torch::kFloat64);
  std::copy_n(latent.data(), impl_->cfg.latent_dim, input.data_ptr<double>());
  input[0][0][impl_->cfg.latent_dim] = dpsi.x;
  input[0][0][impl_->cfg.latent_dim + 1] = dpsi.y;
  input[0][0][impl_->cfg.latent_dim + 2] = dpsi.yaw;
  auto [h, c] = impl_->belief_state(b);
  auto [out, state] =
      impl_->net->encoder->forward(input.to(impl_->dtype()), std::make_tuple(h, c));
  Belief nb;
  nb.hidden = to_float_vector(std::get<0>(state));
  nb.cell = to_float_vector(std::get<1>(state));
  return nb;
}

Belief Seq2SeqModel::encode(const LatentSequence& seq) const {
  Belief b = initial_belief();
  for (size_t t = 0; t < seq.length(); ++t) {
    b = encode_step(b, seq.latents[t], seq.deltas[t]);
  }
  return b;
}

Seq2SeqModel::LossTerms Seq2SeqModel::window_loss(const LatentSequence& seq,
                                                  int horizon) const {
  torch::NoGradGuard guard;
  auto [lat, del] = sequence_tensors(seq, impl_->cfg.latent_dim, impl_->dtype());
  auto [recon, pred] = impl_->loss_tensors(lat.unsqueeze(0), del.unsqueeze(0), horizon);
  return {recon.item<double>(), pred.item<double>()};
}

Seq2SeqModel::LossTerms Seq2SeqModel::window_loss_grad(const LatentSequence& seq,
                                                       int horizon,
                                                       std::vector<double>* grad) const {
  auto params = impl_->net->parameters();
  for (auto& p : params) {
    if (p.grad().defined()) p.grad().zero_();
  }
  auto [lat, del] = sequence_tensors(seq, impl_->cfg.latent_dim, impl_->dtype());
  auto [recon, pred] = impl_->loss_tensors(lat.unsqueeze(0), del.unsqueeze(0), horizon);
  auto total = recon + pred;
  total.backward();
  if (grad != nullptr) *grad = detail::flatten_gradients(params);
  return {recon.item<double>(), pred.item<double>()};
}

std::vector<double> Seq2SeqModel::horizon_nll(const LatentSequence& seq,
                                              size_t input_len) const {
  if (input_len < 2 || input_len >= seq.length()) {
    throw std::invalid_argument("horizon exceeds the available future frames");
  }
  torch::NoGradGuard guard;
  LatentSequence head;
  head.latents.assign(seq.latents.begin(), seq.latents.begin() + static_cast<long>(input_len));
  head.deltas.assign(seq.deltas.begin(), seq.deltas.begin() + static_cast<long>(input_len));
  const Belief enc = encode(head);
  auto [h, c] = impl_->belief_state(enc);
  const auto dtype = impl_->dtype();

  std::vector<double> out;
  auto prev = torch::from_blob(const_cast<double*>(seq.latents[input_len - 1].data()),
                               {1, impl_->cfg.latent_dim}, torch::kFloat64)
                  .to(dtype)
                  .clone();
  for (size_t k = input_len; k < seq.length(); ++k) {
    auto del = torch::tensor({seq.deltas[k].x, seq.deltas[k].y, seq.deltas[k].yaw},
                             torch::kFloat64)
                   .view({1, 3})
                   .to(dtype);
    auto [top, hn, cn] = impl_->net->pred.step(torch::cat({prev, del}, 1), h, c);
    h = hn;
    c = cn;
    auto [mu, ls] = impl_->net->pred.predict(top);
    auto target = torch::from_blob(const_cast<double*>(seq.latents[k].data()),
                                   {1, impl_->cfg.latent_dim}, torch::kFloat64)
                      .to(dtype)
                      .clone();
    out.push_back(nll_terms(target, mu, ls).sum().item<double>());
    prev = mu;
  }
  return out;
}

size_t Seq2SeqModel::parameter_count() const {
  size_t n = 0;
  for (const auto& p : impl_->net->parameters()) n += static_cast<size_t>(p.numel());
  return n;
}

std::vector<double> Seq2SeqModel::parameters() const {
  return detail::flatten_parameters(impl_->net->parameters());
}

void Seq2SeqModel::set_parameters(const std::vector<double>& flat) {
  detail::unflatten_parameters(impl_->net->parameters(), flat);
}

void Seq2SeqModel::save(const std::filesystem::path& path) const {
  nlohmann::json meta = {
      {"kind", "seq2seq"}, {"version", 1},
      {"latent_dim", impl_->cfg.latent_dim}, {"hidden_dim", impl_->cfg.hidden_dim},
      {"layers", impl_->cfg.layers}, {"double_precision", impl_->cfg.double_precision},
  };
  detail::save_checkpoint(path, meta, impl_->net->parameters());
}

Seq2SeqModel Seq2SeqModel::load(const std::filesystem::path& path) {
  std::vector<double> flat;
  nlohmann::json meta = detail::load_checkpoint(path, "seq2seq", &flat);
  Config cfg;
  cfg.latent_dim = meta.at("latent_dim").get<int>();
  cfg.hidden_dim = meta.at("hidden_dim").get<int>();
  cfg.layers = meta.at("layers").get<int>();
  cfg.double_precision = meta.at("double_precision").get<bool>();
  Seq2SeqModel model(cfg, 0);
  model.set_parameters(flat);
  return model;
}

WmTrainMetrics train_seq2seq(Seq2SeqModel& model, const TrajectoryDataset& data,
                             const WmSettings& cfg, uint64_t seed, std::ostream* log) {
  detail::init_runtime();
  auto& impl = *model.impl_;
  if (impl.cfg.hidden_dim != cfg.hidden_dim || impl.cfg.layers != cfg.layers) {
    throw std::invalid_argument("model does not match the world model settings");
  }
  const SplitIds split = split_trajectories(data, cfg.validation_fraction);
  const size_t span = static_cast<size_t>(cfg.window + cfg.horizon);
  std::vector<WindowSlice> val_windows = enumerate_windows(split.val, data, span);
  if (enumerate_windows(split.train, data, span).empty() || val_windows.empty()) {
    throw DependencyError("trajectory dataset has no usable windows");
  }

  torch::optim::Adam opt(impl.net->parameters(), torch::optim::AdamOptions(cfg.lr));
  const auto dtype = impl.dtype();
  auto horizon_for = [&cfg](size_t len) {
    return std::min<int>(cfg.horizon, std::max<int>(0, static_cast<int>(len) - 2));
  };

  WmTrainMetrics metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(seed, 0x73320000 + static_cast<uint64_t>(epoch)));
    std::vector<WindowSlice> windows = enumerate_windows(split.train, data, span);
    auto batches = bucket_batches(std::move(windows), static_cast<size_t>(cfg.batch_size),
                                  shuffle_rng);
    double sum_total = 0.0, sum_pred = 0.0;
    size_t count = 0;
    for (auto& batch : batches) {
      auto [lat, del] = batch_tensors(data, batch, impl.cfg.latent_dim, dtype);
      auto [recon, pred] = impl.loss_tensors(lat, del, horizon_for(batch.front().len));
      auto total = recon + pred;
      opt.zero_grad();
      total.backward();
      opt.step();
      sum_total += total.item<double>() * static_cast<double>(batch.size());
      sum_pred += pred.item<double>() * static_cast<double>(batch.size());
      count += batch.size();
    }
    metrics.epoch_loss.push_back(sum_total / static_cast<double>(count));
    metrics.epoch_nll.push_back(sum_pred / static_cast<double>(count));

    {
      torch::NoGradGuard guard;
      std::mt19937_64 val_rng(0);
      auto val_batches = bucket_batches(val_windows, static_cast<size_t>(cfg.batch_size), val_rng);
      double vsum = 0.0;
      size_t vcount = 0;
      for (auto& batch : val_batches) {
        auto [lat, del] = batch_tensors(data, batch, impl.cfg.latent_dim, dtype);
        auto [recon, pred] = impl.loss_tensors(lat, del, horizon_for(batch.front().len));
        vsum += (recon + pred).item<double>() * static_cast<double>(batch.size());
        vcount += batch.size();
      }
      metrics.val_nll.push_back(vsum / static_cast<double>(vcount));
    }
    if (log != nullptr) {
      (*log) << "s2s epoch " << epoch << " loss " << metrics.epoch_loss.back() << " pred "
             << metrics.epoch_nll.back() << " val " << metrics.val_nll.back() << "\n";
    }
  }
  return metrics;
}

}  // namespace latnav
