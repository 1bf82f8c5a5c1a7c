#include "latnav/vae.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "latnav/errors.hpp"
#include "latnav/rng.hpp"
#include "torch_util.hpp"

namespace latnav {

void init_torch_runtime() { detail::init_runtime(); }

double kl_standard_normal(const LatentDistribution& d) {
  if (d.mu.size() != d.sigma.size()) {
    throw std::invalid_argument("latent mean and sigma differ in length");
  }
  double kl = 0.0;
  for (size_t i = 0; i < d.mu.size(); ++i) {
    const double s = d.sigma[i];
    if (!(s > 0.0)) throw std::invalid_argument("latent sigma must be positive");
    kl += 0.5 * (d.mu[i] * d.mu[i] + s * s - 1.0) - std::log(s);
  }
  return kl;
}

namespace {

constexpr double kLogSigmaMin = -8.0;
constexpr double kLogSigmaMax = 8.0;

struct VaeNetImpl : torch::nn::Module {
  ConvVae::Config cfg;
  torch::nn::ModuleList enc_convs;
  torch::nn::Linear heads{nullptr};
  torch::nn::Linear dec_in{nullptr};
  torch::nn::ModuleList dec_convs;
  int64_t feat_c = 0, feat_h = 0, feat_w = 0;

  explicit VaeNetImpl(const ConvVae::Config& c) : cfg(c) {
    feat_h = cfg.height >> cfg.stages;
    feat_w = cfg.width >> cfg.stages;
    feat_c = static_cast<int64_t>(cfg.base_width) << (cfg.stages - 1);
    int in_ch = 1;
    int out_ch = cfg.base_width;
    for (int s = 0; s < cfg.stages; ++s) {
      enc_convs->push_back(torch::nn::Conv2d(
          torch::nn::Conv2dOptions(in_ch, out_ch, 4).stride(2).padding(1)));
      in_ch = out_ch;
      out_ch *= 2;
    }
    const int64_t feat = feat_c * feat_h * feat_w;
    heads = torch::nn::Linear(feat, 2 * cfg.latent_dim);
    dec_in = torch::nn::Linear(cfg.latent_dim, feat);
    int ch = static_cast<int>(feat_c);
    for (int s = 0; s < cfg.stages; ++s) {
      const int next = (s + 1 == cfg.stages) ? 1 : ch / 2;
      dec_convs->push_back(torch::nn::ConvTranspose2d(
          torch::nn::ConvTranspose2dOptions(ch, next, 4).stride(2).padding(1)));
      ch = next;
    }
    register_module("enc_convs", enc_convs);
    register_module("heads", heads);
    register_module("dec_in", dec_in);
    register_module("dec_convs", dec_convs);
  }

  std::pair<torch::Tensor, torch::Tensor> encode(torch::Tensor x) {
    for (const auto& m : *enc_convs) {
      x = torch::elu(m->as<torch::nn::Conv2d>()->forward(x));
    }
    auto h = heads->forward(x.flatten(1));
    auto mu = h.slice(1, 0, cfg.latent_dim);
    auto log_sigma =
        h.slice(1, cfg.latent_dim, 2 * cfg.latent_dim).clamp(kLogSigmaMin, kLogSigmaMax);
    return {mu, log_sigma};
  }

  torch::Tensor decode(torch::Tensor z) {
    auto x = torch::elu(dec_in->forward(z)).view({z.size(0), feat_c, feat_h, feat_w});
    const size_t n = dec_convs->size();
    for (size_t i = 0; i < n; ++i) {
      x = (*dec_convs)[i]->as<torch::nn::ConvTranspose2d>()->forward(x);
      x = (i + 1 == n) ? torch::sigmoid(x) : torch::elu(x);
    }
    return x;
  }
};

void validate_vae_config(const ConvVae::Config& cfg) {
  if (cfg.stages < 1 || cfg.stages > 6) throw ConfigError("vae stages out of range");
  if (cfg.latent_dim < 1) throw ConfigError("vae latent_dim must be positive");
  if (cfg.base_width < 1) throw ConfigError("vae base_width must be positive");
  if (cfg.max_range <= 0.0) throw ConfigError("vae max_range must be positive");
  const int div = 1 << cfg.stages;
  if (cfg.width % div != 0 || cfg.height % div != 0 || cfg.height < div || cfg.width < div) {
    throw ConfigError("vae resolution must be divisible by 2^stages");
  }
}

}  // namespace

struct ConvVae::Impl {
  Config cfg;
  std::shared_ptr<VaeNetImpl> net;

  torch::Tensor to_tensor(const DepthImage& img) const {
    if (img.width != cfg.width || img.height != cfg.height) {
      throw std::invalid_argument("depth image resolution does not match the model");
    }
    auto t = torch::from_blob(const_cast<float*>(img.values.data()),
                              {1, 1, cfg.height, cfg.width}, torch::kFloat32)
                 .to(detail::dtype_for(cfg.double_precision))
                 .clone();
    return t / cfg.max_range;
  }

  DepthImage from_tensor(const torch::Tensor& t) const {
    auto flat = t.detach().to(torch::kFloat32).contiguous().view(-1);
    DepthImage img(cfg.width, cfg.height);
    std::copy_n(flat.data_ptr<float>(), img.values.size(), img.values.begin());
    return img;
  }

  torch::Tensor eps_tensor(const std::vector<double>& eps) const {
    if (static_cast<int>(eps.size()) != cfg.latent_dim) {
      throw std::invalid_argument("eps must have latent_dim entries");
    }
    return torch::from_blob(const_cast<double*>(eps.data()), {1, cfg.latent_dim},
                            torch::kFloat64)
        .to(detail::dtype_for(cfg.double_precision))
        .clone();
  }

  // recon is the pixel-mean squared error, kl the per-sample sum.
  std::pair<torch::Tensor, torch::Tensor> loss_tensors(const torch::Tensor& input,
                                                       const torch::Tensor& target,
                                                       const torch::Tensor& eps) {
    auto [mu, log_sigma] = net->encode(input);
    auto sigma = torch::exp(log_sigma);
    auto z = mu + sigma * eps;
    auto recon = torch::mean(torch::square(net->decode(z) - target));
    auto kl = torch::sum(0.5 * (torch::square(mu) + torch::square(sigma) - 1.0) - log_sigma,
                         /*dim=*/1)
                  .mean();
    return {recon, kl};
  }
};

ConvVae::ConvVae(const Config& cfg, uint64_t seed) : impl_(std::make_unique<Impl>()) {
  validate_vae_config(cfg);
  detail::init_runtime();
  impl_->cfg = cfg;
  torch::manual_seed(derive_seed(seed, 0x76616530));
  impl_->net = std::make_shared<VaeNetImpl>(cfg);
  impl_->net->to(detail::dtype_for(cfg.double_precision));
}

ConvVae::~ConvVae() = default;
ConvVae::ConvVae(ConvVae&&) noexcept = default;
ConvVae& ConvVae::operator=(ConvVae&&) noexcept = default;

const ConvVae::Config& ConvVae::config() const { return impl_->cfg; }

LatentDistribution ConvVae::encode(const DepthImage& img) const {
  return encode_batch({img}).front();
}

std::vector<LatentDistribution> ConvVae::encode_batch(
    const std::vector<DepthImage>& imgs) const {
  if (imgs.empty()) return {};
  torch::NoGradGuard guard;
  const auto& cfg = impl_->cfg;
  auto batch = torch::empty({static_cast<int64_t>(imgs.size()), 1, cfg.height, cfg.width},
                            torch::kFloat32);
  for (size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i].width != cfg.width || imgs[i].height != cfg.height) {
      throw std::invalid_argument("depth image resolution does not match the model");
    }
    std::copy_n(imgs[i].values.data(), imgs[i].values.size(),
                batch[static_cast<int64_t>(i)].data_ptr<float>());
  }
  batch = batch.to(detail::dtype_for(cfg.double_precision)) / cfg.max_range;
  auto [mu, log_sigma] = impl_->net->encode(batch);
  auto mu_d = mu.to(torch::kFloat64).contiguous();
  auto sg_d = torch::exp(log_sigma).to(torch::kFloat64).contiguous();
  std::vector<LatentDistribution> out(imgs.size());
  for (size_t i = 0; i < imgs.size(); ++i) {
    const double* mp = mu_d[static_cast<int64_t>(i)].data_ptr<double>();
    const double* sp = sg_d[static_cast<int64_t>(i)].data_ptr<double>();
    out[i].mu.assign(mp, mp + cfg.latent_dim);
    out[i].sigma.assign(sp, sp + cfg.latent_dim);
  }
  return out;
}

DepthImage ConvVae::decode(const std::vector<double>& z) const {
  if (static_cast<int>(z.size()) != impl_->cfg.latent_dim) {
    throw std::invalid_argument("latent vector has wrong length");
  }
  torch::NoGradGuard guard;
  auto zt = torch::from_blob(const_cast<double*>(z.data()),
                             {1, impl_->cfg.latent_dim}, torch::kFloat64)
                .to(detail::dtype_for(impl_->cfg.double_precision))
                .clone();
  return impl_->from_tensor(impl_->net->decode(zt));
}

VaeLossTerms ConvVae::loss(const DepthImage& input, const DepthImage& target,
                           const std::vector<double>& eps) const {
  torch::NoGradGuard guard;
  auto [recon, kl] = impl_->loss_tensors(impl_->to_tensor(input), impl_->to_tensor(target),
                                         impl_->eps_tensor(eps));
  return {recon.item<double>(), kl.item<double>()};
}

VaeLossTerms ConvVae::loss_grad(const DepthImage& input, const DepthImage& target,
                                const std::vector<double>& eps, double beta,
                                std::vector<double>* grad) const {
  auto params = impl_->net->parameters();
  for (auto& p : params) {
    if (p.grad().defined()) p.grad().zero_();
  }
  auto [recon, kl] = impl_->loss_tensors(impl_->to_tensor(input), impl_->to_tensor(target),
                                         impl_->eps_tensor(eps));
  auto total = recon + beta * kl;
  total.backward();
  if (grad != nullptr) *grad = detail::flatten_gradients(params);
  return {recon.item<double>(), kl.item<double>()};
}

size_t ConvVae::parameter_count() const {
  size_t n = 0;
  for (const auto& p : impl_->net->parameters()) n += static_cast<size_t>(p.numel());
  return n;
}

std::vector<double> ConvVae::parameters() const {
  return detail::flatten_parameters(impl_->net->parameters());
}

void ConvVae::set_parameters(const std::vector<double>& flat) {
  detail::unflatten_parameters(impl_->net->parameters(), flat);
}

void ConvVae::save(const std::filesystem::path& path) const {
  nlohmann::json meta = {
      {"kind", "vae"},
      {"version", 1},
      {"width", impl_->cfg.width},
      {"height", impl_->cfg.height},
      {"latent_dim", impl_->cfg.latent_dim},
      {"base_width", impl_->cfg.base_width},
      {"stages", impl_->cfg.stages},
      {"max_range", impl_->cfg.max_range},
      {"double_precision", impl_->cfg.double_precision},
  };
  detail::save_checkpoint(path, meta, impl_->net->parameters());
}

ConvVae ConvVae::load(const std::filesystem::path& path) {
  std::vector<double> flat;
  nlohmann::json meta = detail::load_checkpoint(path, "vae", &flat);
  Config cfg;
  cfg.width = meta.at("width").get<int>();
  cfg.height = meta.at("height").get<int>();
  cfg.latent_dim = meta.at("latent_dim").get<int>();
  cfg.base_width = meta.at("base_width").get<int>();
  cfg.stages = meta.at("stages").get<int>();
  cfg.max_range = meta.at("max_range").get<double>();
  cfg.double_precision = meta.at("double_precision").get<bool>();
  ConvVae model(cfg, 0);
  model.set_parameters(flat);
  return model;
}

VaeTrainMetrics train_vae(ConvVae& model, const ImageDataset& data,
                          const VaeSettings& cfg, uint64_t seed, std::ostream* log) {
  detail::init_runtime();
  if (data.size() == 0) throw DependencyError("image dataset is empty");
  auto& impl = *model.impl_;
  const auto& mcfg = impl.cfg;
  if (mcfg.latent_dim != cfg.latent_dim || mcfg.base_width != cfg.base_width) {
    throw std::invalid_argument("model does not match the vae settings");
  }

  torch::manual_seed(derive_seed(seed, 0x76746e31));
  torch::optim::Adam opt(impl.net->parameters(), torch::optim::AdamOptions(cfg.lr));
  Rng mix_rng(derive_seed(seed, 0x76746e32));
  const auto dtype = detail::dtype_for(mcfg.double_precision);

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  VaeTrainMetrics metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(seed, 0x76650000 + static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_total = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t n = std::min(order.size() - start, static_cast<size_t>(cfg.batch_size));
      auto input = torch::empty({static_cast<int64_t>(n), 1, mcfg.height, mcfg.width},
                                torch::kFloat32);
      auto target = torch::empty_like(input);
      for (size_t k = 0; k < n; ++k) {
        ImageRecord rec = data.get(order[start + k]);
        const DepthImage& src =
            mix_rng.bernoulli(cfg.degraded_mix) ? rec.degraded : rec.clean;
        const DepthImage& tgt = cfg.raw_targets ? rec.clean : rec.target;
        std::copy_n(src.values.data(), src.values.size(),
                    input[static_cast<int64_t>(k)].data_ptr<float>());
        std::copy_n(tgt.values.data(), tgt.values.size(),
                    target[static_cast<int64_t>(k)].data_ptr<float>());
      }
      input = input.to(dtype) / mcfg.max_range;
      target = target.to(dtype) / mcfg.max_range;

      auto [mu, log_sigma] = impl.net->encode(input);
      auto sigma = torch::exp(log_sigma);
      auto z = mu + sigma * torch::randn_like(mu);
      auto recon = torch::mean(torch::square(impl.net->decode(z) - target));
      auto kl =
          torch::sum(0.5 * (torch::square(mu) + torch::square(sigma) - 1.0) - log_sigma, 1)
              .mean();
      auto total = recon + cfg.beta * kl;
      opt.zero_grad();
      total.backward();
      opt.step();

      sum_total += total.item<double>() * static_cast<double>(n);
      sum_recon += recon.item<double>() * static_cast<double>(n);
      sum_kl += kl.item<double>() * static_cast<double>(n);
      seen += n;
    }
    metrics.epoch_loss.push_back(sum_total / static_cast<double>(seen));
    metrics.epoch_recon.push_back(sum_recon / static_cast<double>(seen));
    metrics.epoch_kl.push_back(sum_kl / static_cast<double>(seen));
    if (log != nullptr) {
      (*log) << "vae epoch " << epoch << " loss " << metrics.epoch_loss.back() << " recon "
             << metrics.epoch_recon.back() << " kl " << metrics.epoch_kl.back() << "\n";
    }
  }
  return metrics;
}

}  // namespace latnav
