#include "latnav/policy.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "latnav/errors.hpp"
#include "latnav/gae.hpp"
#include "latnav/rng.hpp"
#include "torch_util.hpp"

namespace latnav {

std::string variant_name(PolicyVariant v) {
  switch (v) {
    case PolicyVariant::kReactive: return "reactive";
    case PolicyVariant::kWorldModel: return "worldmodel";
    case PolicyVariant::kSeq2Seq: return "seq2seq";
    case PolicyVariant::kBlind: return "blind";
    case PolicyVariant::kE2eCnn: return "e2e-cnn";
    case PolicyVariant::kE2eCnnLstm: return "e2e-cnn-lstm";
  }
  throw std::invalid_argument("unknown policy variant");
}

PolicyVariant parse_variant(const std::string& name) {
  for (PolicyVariant v : {PolicyVariant::kReactive, PolicyVariant::kWorldModel,
                          PolicyVariant::kSeq2Seq, PolicyVariant::kBlind,
                          PolicyVariant::kE2eCnn, PolicyVariant::kE2eCnnLstm}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown policy variant '" + name + "'");
}

bool variant_uses_images(PolicyVariant v) {
  return v == PolicyVariant::kE2eCnn || v == PolicyVariant::kE2eCnnLstm;
}

bool variant_is_recurrent(PolicyVariant v) { return v == PolicyVariant::kE2eCnnLstm; }

namespace {

constexpr double kInitStd = 0.5;
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)

struct PolicyNetImpl : torch::nn::Module {
  PolicyNet::Config cfg;
  torch::nn::ModuleList convs;
  torch::nn::Linear cnn_proj{nullptr};
  torch::nn::LSTM lstm{nullptr};
  torch::nn::Linear pi1{nullptr}, pi2{nullptr}, pi_out{nullptr};
  torch::nn::Linear v1{nullptr}, v2{nullptr}, v_out{nullptr};
  torch::Tensor log_std;

  explicit PolicyNetImpl(const PolicyNet::Config& c) : cfg(c) {
    int mlp_in = cfg.repr_dim + 2;
    if (variant_uses_images(cfg.variant)) {
      int in_ch = 1;
      int out_ch = cfg.cnn_base;
      for (int s = 0; s < 4; ++s) {
        convs->push_back(torch::nn::Conv2d(
            torch::nn::Conv2dOptions(in_ch, out_ch, 4).stride(2).padding(1)));
        in_ch = out_ch;
        out_ch *= 2;
      }
      register_module("convs", convs);
      const int64_t flat = static_cast<int64_t>(in_ch) * (cfg.image_height / 16) *
                           (cfg.image_width / 16);
      cnn_proj = register_module("cnn_proj", torch::nn::Linear(flat, cfg.cnn_feature));
      if (variant_is_recurrent(cfg.variant)) {
        lstm = register_module(
            "lstm", torch::nn::LSTM(torch::nn::LSTMOptions(cfg.cnn_feature + 2,
                                                           cfg.lstm_hidden)));
        mlp_in = cfg.lstm_hidden;
      } else {
        mlp_in = cfg.cnn_feature + 2;
      }
    }
    pi1 = register_module("pi1", torch::nn::Linear(mlp_in, cfg.hidden_dim));
    pi2 = register_module("pi2", torch::nn::Linear(cfg.hidden_dim, cfg.hidden_dim));
    pi_out = register_module("pi_out", torch::nn::Linear(cfg.hidden_dim, 3));
    v1 = register_module("v1", torch::nn::Linear(mlp_in, cfg.hidden_dim));
    v2 = register_module("v2", torch::nn::Linear(cfg.hidden_dim, cfg.hidden_dim));
    v_out = register_module("v_out", torch::nn::Linear(cfg.hidden_dim, 1));
    log_std = register_parameter("log_std", torch::full({3}, std::log(kInitStd)));
  }

  torch::Tensor cnn_features(const torch::Tensor& images) {
    auto x = images.view({images.size(0), 1, cfg.image_height, cfg.image_width});
    for (const auto& m : *convs) x = torch::elu(m->as<torch::nn::Conv2d>()->forward(x));
    return torch::tanh(cnn_proj->forward(x.flatten(1)));
  }

  // Mean is squashed into the simulator's symmetric limits.
  std::pair<torch::Tensor, torch::Tensor> heads(const torch::Tensor& trunk_in) {
    auto pzh = torch::tanh(pi2->forward(torch::tanh(pi1->forward(trunk_in))));
    auto mean = Action::kLimit * torch::tanh(pi_out->forward(pzh));
    auto vh = torch::tanh(v2->forward(torch::tanh(v1->forward(trunk_in))));
    return {mean, v_out->forward(vh).squeeze(-1)};
  }
};

torch::Tensor gaussian_logp(const torch::Tensor& actions, const torch::Tensor& mean,
                            const torch::Tensor& log_std) {
  auto z = (actions - mean) / torch::exp(log_std);
  return torch::sum(-0.5 * z * z - log_std - kHalfLog2Pi, -1);
}

torch::Tensor gaussian_entropy(const torch::Tensor& log_std) {
  return torch::sum(log_std + 0.5 + kHalfLog2Pi);
}

}  // namespace

struct PolicyNet::Impl {
  Config cfg;
  std::shared_ptr<PolicyNetImpl> net;
  std::unique_ptr<torch::optim::Adam> opt;
  double opt_lr = 0.0;

  torch::Dtype dtype() const { return detail::dtype_for(cfg.double_precision); }

  torch::optim::Adam& optimizer(double lr) {
    if (!opt || opt_lr != lr) {
      opt = std::make_unique<torch::optim::Adam>(net->parameters(),
                                                 torch::optim::AdamOptions(lr));
      opt_lr = lr;
    }
    return *opt;
  }

  void check_obs(const PolicyObs& obs) const {
    if (static_cast<int>(obs.repr.size()) != cfg.repr_dim) {
      throw std::invalid_argument("observation representation has wrong length");
    }
    const int image_size =
        variant_uses_images(cfg.variant) ? cfg.image_width * cfg.image_height : 0;
    if (static_cast<int>(obs.image.size()) != image_size) {
      throw std::invalid_argument("observation image has wrong size");
    }
  }

  // (N, repr+2) or images (N, H*W) plus goals staged for the variant.
  struct ObsTensors {
    torch::Tensor trunk_in;  // feedforward trunk input (unused for recurrent)
    torch::Tensor features;  // cnn features + goal, recurrent variant
  };

  ObsTensors stage_obs(const std::vector<PolicyObs>& obs) {
    const int64_t n = static_cast<int64_t>(obs.size());
    auto goals = torch::empty({n, 2}, torch::kFloat32);
    for (int64_t i = 0; i < n; ++i) {
      goals[i][0] = obs[i].goal[0];
      goals[i][1] = obs[i].goal[1];
    }
    goals = goals.to(dtype());
    ObsTensors out;
    if (variant_uses_images(cfg.variant)) {
      auto images = torch::empty({n, static_cast<int64_t>(cfg.image_width) * cfg.image_height},
                                 torch::kFloat32);
      for (int64_t i = 0; i < n; ++i) {
        std::copy_n(obs[i].image.data(), obs[i].image.size(), images[i].data_ptr<float>());
      }
      auto feat = net->cnn_features(images.to(dtype()));
      if (variant_is_recurrent(cfg.variant)) {
        out.features = torch::cat({feat, goals}, 1);
      } else {
        out.trunk_in = torch::cat({feat, goals}, 1);
      }
    } else {
      auto repr = torch::empty({n, cfg.repr_dim}, torch::kFloat32);
      for (int64_t i = 0; i < n; ++i) {
        std::copy_n(obs[i].repr.data(), obs[i].repr.size(), repr[i].data_ptr<float>());
      }
      out.trunk_in = torch::cat({repr.to(dtype()), goals}, 1);
    }
    return out;
  }
};

PolicyNet::PolicyNet(const Config& cfg, uint64_t seed) : impl_(std::make_unique<Impl>()) {
  if (cfg.repr_dim < 0 || cfg.hidden_dim < 1) {
    throw ConfigError("policy dimensions must be valid");
  }
  if (variant_uses_images(cfg.variant)) {
    if (cfg.image_width < 16 || cfg.image_height < 16 || cfg.image_width % 16 != 0 ||
        cfg.image_height % 16 != 0) {
      throw ConfigError("end-to-end policies need image dimensions divisible by 16");
    }
    if (cfg.repr_dim != 0) {
      throw ConfigError("end-to-end policies take no representation input");
    }
  }
  detail::init_runtime();
  impl_->cfg = cfg;
  torch::manual_seed(derive_seed(seed, 0x706f6c31));
  impl_->net = std::make_shared<PolicyNetImpl>(cfg);
  impl_->net->to(impl_->dtype());
}

PolicyNet::~PolicyNet() = default;
PolicyNet::PolicyNet(PolicyNet&&) noexcept = default;
PolicyNet& PolicyNet::operator=(PolicyNet&&) noexcept = default;

const PolicyNet::Config& PolicyNet::config() const { return impl_->cfg; }

PolicyState PolicyNet::initial_state() const {
  PolicyState s;
  if (variant_is_recurrent(impl_->cfg.variant)) {
    s.hidden.assign(static_cast<size_t>(impl_->cfg.lstm_hidden), 0.0f);
    s.cell.assign(static_cast<size_t>(impl_->cfg.lstm_hidden), 0.0f);
  }
  return s;
}

PolicyNet::ActResult PolicyNet::act(const PolicyObs& obs, const PolicyState& state) const {
  return act_batch({obs}, {state}).front();
}

std::vector<PolicyNet::ActResult> PolicyNet::act_batch(
    const std::vector<PolicyObs>& obs, const std::vector<PolicyState>& states) const {
  if (obs.empty()) return {};
  if (obs.size() != states.size()) {
    throw std::invalid_argument("observation and state counts differ");
  }
  for (const PolicyObs& o : obs) impl_->check_obs(o);
  torch::NoGradGuard guard;
  const int64_t n = static_cast<int64_t>(obs.size());
  auto staged = impl_->stage_obs(obs);

  torch::Tensor trunk_in = staged.trunk_in;
  torch::Tensor hn, cn;
  if (variant_is_recurrent(impl_->cfg.variant)) {
    const int64_t lh = impl_->cfg.lstm_hidden;
    auto h = torch::empty({1, n, lh}, torch::kFloat32);
    auto c = torch::empty({1, n, lh}, torch::kFloat32);
    for (int64_t i = 0; i < n; ++i) {
      if (static_cast<int64_t>(states[i].hidden.size()) != lh ||
          static_cast<int64_t>(states[i].cell.size()) != lh) {
        throw std::invalid_argument("policy state has wrong dimensions");
      }
      std::copy_n(states[i].hidden.data(), lh, h[0][i].data_ptr<float>());
      std::copy_n(states[i].cell.data(), lh, c[0][i].data_ptr<float>());
    }
    auto [out, state] = impl_->net->lstm->forward(
        staged.features.unsqueeze(0), std::make_tuple(h.to(impl_->dtype()), c.to(impl_->dtype())));
    trunk_in = out.squeeze(0);
    hn = std::get<0>(state).squeeze(0).to(torch::kFloat32).contiguous();
    cn = std::get<1>(state).squeeze(0).to(torch::kFloat32).contiguous();
  }

  auto [mean, value] = impl_->net->heads(trunk_in);
  auto mean_d = mean.to(torch::kFloat64).contiguous();
  auto value_d = value.to(torch::kFloat64).contiguous();
  auto std_d = torch::exp(impl_->net->log_std).to(torch::kFloat64).contiguous();
  const double* sp = std_d.data_ptr<double>();

  std::vector<ActResult> results(obs.size());
  for (int64_t i = 0; i < n; ++i) {
    ActResult& r = results[static_cast<size_t>(i)];
    const double* mp = mean_d[i].data_ptr<double>();
    for (int k = 0; k < 3; ++k) {
      r.dist.mean[static_cast<size_t>(k)] = mp[k];
      r.dist.stddev[static_cast<size_t>(k)] = sp[k];
    }
    r.value = value_d[i].item<double>();
    if (variant_is_recurrent(impl_->cfg.variant)) {
      const float* hp = hn[i].data_ptr<float>();
      const float* cp = cn[i].data_ptr<float>();
      r.state.hidden.assign(hp, hp + impl_->cfg.lstm_hidden);
      r.state.cell.assign(cp, cp + impl_->cfg.lstm_hidden);
    }
  }
  return results;
}

size_t PolicyNet::parameter_count() const {
  size_t n = 0;
  for (const auto& p : impl_->net->parameters()) n += static_cast<size_t>(p.numel());
  return n;
}

std::vector<double> PolicyNet::parameters() const {
  return detail::flatten_parameters(impl_->net->parameters());
}

void PolicyNet::set_parameters(const std::vector<double>& flat) {
  detail::unflatten_parameters(impl_->net->parameters(), flat);
}

void PolicyNet::save(const std::filesystem::path& path) const {
  const Config& c = impl_->cfg;
  nlohmann::json meta = {
      {"kind", "policy"},       {"version", 1},
      {"variant", variant_name(c.variant)},
      {"repr_dim", c.repr_dim}, {"image_width", c.image_width},
      {"image_height", c.image_height}, {"hidden_dim", c.hidden_dim},
      {"cnn_base", c.cnn_base}, {"cnn_feature", c.cnn_feature},
      {"lstm_hidden", c.lstm_hidden}, {"double_precision", c.double_precision},
  };
  detail::save_checkpoint(path, meta, impl_->net->parameters());
}

PolicyNet PolicyNet::load(const std::filesystem::path& path) {
  std::vector<double> flat;
  nlohmann::json meta = detail::load_checkpoint(path, "policy", &flat);
  Config cfg;
  cfg.variant = parse_variant(meta.at("variant").get<std::string>());
  cfg.repr_dim = meta.at("repr_dim").get<int>();
  cfg.image_width = meta.at("image_width").get<int>();
  cfg.image_height = meta.at("image_height").get<int>();
  cfg.hidden_dim = meta.at("hidden_dim").get<int>();
  cfg.cnn_base = meta.at("cnn_base").get<int>();
  cfg.cnn_feature = meta.at("cnn_feature").get<int>();
  cfg.lstm_hidden = meta.at("lstm_hidden").get<int>();
  cfg.double_precision = meta.at("double_precision").get<bool>();
  PolicyNet net(cfg, 0);
  net.set_parameters(flat);
  return net;
}

// ---------------------------------------------------------------------------
// PPO

namespace {

struct Advantages {
  torch::Tensor adv;      // (N) normalized
  torch::Tensor returns;  // (N)
};

Advantages compute_buffer_advantages(const RolloutBuffer& buf, const PpoSettings& cfg,
                                     torch::Dtype dtype) {
  std::vector<double> adv_flat(buf.size()), ret_flat(buf.size());
  for (int e = 0; e < buf.num_envs; ++e) {
    std::vector<double> rewards(buf.steps), values(buf.steps);
    std::vector<bool> dones(buf.steps);
    for (int t = 0; t < buf.steps; ++t) {
      const size_t i = static_cast<size_t>(e) * buf.steps + t;
      rewards[static_cast<size_t>(t)] = buf.rewards[i];
      values[static_cast<size_t>(t)] = buf.values[i];
      dones[static_cast<size_t>(t)] = buf.dones[i] != 0;
    }
    const GaeResult gae =
        compute_gae(rewards, values, buf.bootstrap_values[static_cast<size_t>(e)], dones,
                    cfg.gamma, cfg.gae_lambda);
    for (int t = 0; t < buf.steps; ++t) {
      const size_t i = static_cast<size_t>(e) * buf.steps + t;
      adv_flat[i] = gae.advantages[static_cast<size_t>(t)];
      ret_flat[i] = gae.returns[static_cast<size_t>(t)];
    }
  }
  auto adv = torch::from_blob(adv_flat.data(), {static_cast<int64_t>(buf.size())},
                              torch::kFloat64)
                 .to(dtype)
                 .clone();
  auto ret = torch::from_blob(ret_flat.data(), {static_cast<int64_t>(buf.size())},
                              torch::kFloat64)
                 .to(dtype)
                 .clone();
  // Degenerate spreads (all-zero advantages) skip normalization so the
  // zero-advantage contract holds exactly.
  const double stddev = adv.std().item<double>();
  if (stddev > 1e-8) adv = (adv - adv.mean()) / stddev;
  return {adv, ret};
}

torch::Tensor rows(const std::vector<float>& data, size_t count, int width,
                   torch::Dtype dtype) {
  return torch::from_blob(const_cast<float*>(data.data()),
                          {static_cast<int64_t>(count), width}, torch::kFloat32)
      .to(dtype)
      .clone();
}

}  // namespace

PpoStats ppo_update(PolicyNet& policy, const RolloutBuffer& buf, const PpoSettings& cfg,
                    uint64_t seed) {
  auto& impl = *policy.impl_;
  auto& net = *impl.net;
  const auto dtype = impl.dtype();
  if (buf.num_envs <= 0 || buf.steps <= 0) {
    throw std::invalid_argument("empty rollout buffer");
  }
  const size_t n = buf.size();
  if (buf.actions.size() != n * 3 || buf.logp.size() != n || buf.rewards.size() != n ||
      buf.values.size() != n || buf.dones.size() != n ||
      buf.bootstrap_values.size() != static_cast<size_t>(buf.num_envs) ||
      buf.goals.size() != n * 2 ||
      buf.repr.size() != n * static_cast<size_t>(buf.repr_dim) ||
      buf.images.size() != n * static_cast<size_t>(buf.image_size)) {
    throw std::invalid_argument("rollout buffer arrays are misaligned");
  }
  const bool recurrent = variant_is_recurrent(impl.cfg.variant);
  const bool images = variant_uses_images(impl.cfg.variant);
  if (images && buf.image_size != impl.cfg.image_width * impl.cfg.image_height) {
    throw std::invalid_argument("rollout image size does not match the policy");
  }
  if (!images && buf.repr_dim != impl.cfg.repr_dim) {
    throw std::invalid_argument("rollout representation does not match the policy");
  }
  if (recurrent &&
      (buf.h0.size() != static_cast<size_t>(buf.num_envs) * impl.cfg.lstm_hidden ||
       buf.c0.size() != buf.h0.size())) {
    throw std::invalid_argument("rollout recurrent state does not match the policy");
  }

  auto goals = rows(buf.goals, n, 2, dtype);
  auto actions = rows(buf.actions, n, 3, dtype);
  auto old_logp = rows(buf.logp, n, 1, dtype).squeeze(1);
  torch::Tensor repr, imgs;
  if (images) {
    imgs = rows(buf.images, n, buf.image_size, dtype);
  } else {
    repr = buf.repr_dim > 0 ? rows(buf.repr, n, buf.repr_dim, dtype)
                            : torch::zeros({static_cast<int64_t>(n), 0},
                                           torch::TensorOptions().dtype(dtype));
  }
  const Advantages ga = compute_buffer_advantages(buf, cfg, dtype);

  // Trunk inputs for one set of flat indices; recurrent replay resets state
  // at episode boundaries inside the sequence.
  auto trunk_for = [&](const torch::Tensor& idx) -> torch::Tensor {
    if (!images) return torch::cat({repr.index_select(0, idx), goals.index_select(0, idx)}, 1);
    auto feat = net.cnn_features(imgs.index_select(0, idx));
    return torch::cat({feat, goals.index_select(0, idx)}, 1);
  };

  auto recurrent_trunk = [&](const std::vector<int64_t>& envs) -> torch::Tensor {
    const int64_t E = static_cast<int64_t>(envs.size());
    const int64_t T = buf.steps;
    std::vector<int64_t> flat;
    flat.reserve(static_cast<size_t>(E * T));
    for (int64_t e : envs) {
      for (int64_t t = 0; t < T; ++t) flat.push_back(e * T + t);
    }
    auto idx = torch::tensor(flat, torch::kInt64);
    auto feat = torch::cat({net.cnn_features(imgs.index_select(0, idx)),
                            goals.index_select(0, idx)}, 1)
                    .view({E, T, -1});
    const int64_t lh = impl.cfg.lstm_hidden;
    auto h = torch::empty({E, lh}, torch::kFloat32);
    auto c = torch::empty({E, lh}, torch::kFloat32);
    for (int64_t k = 0; k < E; ++k) {
      std::copy_n(buf.h0.data() + envs[static_cast<size_t>(k)] * lh, lh,
                  h[k].data_ptr<float>());
      std::copy_n(buf.c0.data() + envs[static_cast<size_t>(k)] * lh, lh,
                  c[k].data_ptr<float>());
    }
    auto hc = std::make_tuple(h.to(dtype).unsqueeze(0), c.to(dtype).unsqueeze(0));
    std::vector<torch::Tensor> outs;
    for (int64_t t = 0; t < T; ++t) {
      if (t > 0) {
        auto keep = torch::empty({E, 1}, torch::kFloat32);
        for (int64_t k = 0; k < E; ++k) {
          const size_t i =
              static_cast<size_t>(envs[static_cast<size_t>(k)]) * buf.steps + t - 1;
          keep[k][0] = buf.dones[i] != 0 ? 0.0f : 1.0f;
        }
        auto keep_t = keep.to(dtype).unsqueeze(0);
        hc = std::make_tuple(std::get<0>(hc) * keep_t, std::get<1>(hc) * keep_t);
      }
      auto [out, state] = net.lstm->forward(feat.select(1, t).unsqueeze(0), hc);
      hc = state;
      outs.push_back(out.squeeze(0));
    }
    return torch::stack(outs, 1).view({E * T, -1});  // (E*T) ordered env-major
  };

  PpoStats stats;
  {
    torch::NoGradGuard guard;
    torch::Tensor trunk;
    if (recurrent) {
      std::vector<int64_t> all_envs(static_cast<size_t>(buf.num_envs));
      std::iota(all_envs.begin(), all_envs.end(), 0);
      trunk = recurrent_trunk(all_envs);
    } else {
      trunk = trunk_for(torch::arange(static_cast<int64_t>(n), torch::kInt64));
    }
    auto [mean, value] = net.heads(trunk);
    auto ratio = torch::exp(gaussian_logp(actions, mean, net.log_std) - old_logp);
    stats.initial_mean_ratio = ratio.mean().item<double>();
    stats.initial_ratio_max_dev = (ratio - 1.0).abs().max().item<double>();
  }

  auto& opt = impl.optimizer(cfg.lr);
  double sum_ratio = 0.0, sum_clip = 0.0, sum_pl = 0.0, sum_vl = 0.0, sum_ent = 0.0;
  size_t batches = 0, samples = 0, clipped = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(seed, 0x70700000 + static_cast<uint64_t>(epoch)));
    std::vector<std::vector<int64_t>> minibatches;
    if (recurrent) {
      std::vector<int64_t> envs(static_cast<size_t>(buf.num_envs));
      std::iota(envs.begin(), envs.end(), 0);
      std::shuffle(envs.begin(), envs.end(), rng);
      const size_t per =
          std::max<size_t>(1, static_cast<size_t>(cfg.minibatch) / buf.steps);
      for (size_t i = 0; i < envs.size(); i += per) {
        minibatches.emplace_back(envs.begin() + i,
                                 envs.begin() + std::min(envs.size(), i + per));
      }
    } else {
      std::vector<int64_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t i = 0; i < n; i += static_cast<size_t>(cfg.minibatch)) {
        minibatches.emplace_back(order.begin() + i,
                                 order.begin() + std::min(n, i + cfg.minibatch));
      }
    }

    for (const auto& mb : minibatches) {
      torch::Tensor trunk, idx;
      if (recurrent) {
        std::vector<int64_t> flat;
        for (int64_t e : mb) {
          for (int64_t t = 0; t < buf.steps; ++t) flat.push_back(e * buf.steps + t);
        }
        idx = torch::tensor(flat, torch::kInt64);
        trunk = recurrent_trunk(mb);
      } else {
        idx = torch::tensor(mb, torch::kInt64);
        trunk = trunk_for(idx);
      }
      auto [mean, value] = net.heads(trunk);
      auto logp = gaussian_logp(actions.index_select(0, idx), mean, net.log_std);
      auto ratio = torch::exp(logp - old_logp.index_select(0, idx));
      auto adv = ga.adv.index_select(0, idx);
      auto surr1 = ratio * adv;
      auto surr2 = torch::clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * adv;
      auto policy_loss = -torch::min(surr1, surr2).mean();
      auto value_loss = torch::mean(torch::square(value - ga.returns.index_select(0, idx)));
      auto entropy = gaussian_entropy(net.log_std);
      auto total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
      opt.zero_grad();
      total.backward();
      opt.step();

      sum_ratio += ratio.mean().item<double>();
      sum_pl += policy_loss.item<double>();
      sum_vl += value_loss.item<double>();
      sum_ent += entropy.item<double>();
      clipped += static_cast<size_t>(
          ((ratio - 1.0).abs() > cfg.clip_ratio).sum().item<int64_t>());
      samples += static_cast<size_t>(ratio.numel());
      ++batches;
    }
  }
  stats.mean_ratio = sum_ratio / static_cast<double>(batches);
  stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(samples);
  stats.policy_loss = sum_pl / static_cast<double>(batches);
  stats.value_loss = sum_vl / static_cast<double>(batches);
  stats.entropy = sum_ent / static_cast<double>(batches);
  return stats;
}

}  // namespace latnav
