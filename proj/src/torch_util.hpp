#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "latnav/errors.hpp"

namespace latnav::detail {

// Single-threaded kernels keep reruns bit-identical.
void init_runtime();

inline torch::Dtype dtype_for(bool double_precision) {
  return double_precision ? torch::kFloat64 : torch::kFloat32;
}

inline std::vector<double> flatten_parameters(const std::vector<torch::Tensor>& params) {
  std::vector<double> out;
  for (const auto& p : params) {
    auto flat = p.detach().to(torch::kFloat64).contiguous().view(-1);
    const double* ptr = flat.data_ptr<double>();
    out.insert(out.end(), ptr, ptr + flat.numel());
  }
  return out;
}

inline void unflatten_parameters(const std::vector<torch::Tensor>& params,
                                 const std::vector<double>& flat) {
  int64_t total = 0;
  for (const auto& p : params) total += p.numel();
  if (static_cast<int64_t>(flat.size()) != total) {
    throw std::invalid_argument("parameter vector has wrong length");
  }
  torch::NoGradGuard guard;
  int64_t off = 0;
  for (const auto& p : params) {
    auto src = torch::from_blob(const_cast<double*>(flat.data()) + off, {p.numel()},
                                torch::kFloat64)
                   .to(p.scalar_type())
                   .view(p.sizes());
    p.copy_(src);
    off += p.numel();
  }
}

inline std::vector<double> flatten_gradients(const std::vector<torch::Tensor>& params) {
  std::vector<double> out;
  for (const auto& p : params) {
    torch::Tensor g = p.grad().defined()
                          ? p.grad()
                          : torch::zeros_like(p);
    auto flat = g.detach().to(torch::kFloat64).contiguous().view(-1);
    const double* ptr = flat.data_ptr<double>();
    out.insert(out.end(), ptr, ptr + flat.numel());
  }
  return out;
}

// Checkpoint container: magic, version, json meta, then all parameters as
// little-endian f64 in registration order.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<torch::Tensor>& params);
nlohmann::json load_checkpoint(const std::filesystem::path& path,
                               const std::string& expected_kind,
                               std::vector<double>* flat);

}  // namespace latnav::detail
