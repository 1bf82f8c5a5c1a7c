#include "torch_util.hpp"

#include <fstream>
#include <mutex>

#include "latnav/artifacts.hpp"

namespace latnav::detail {

void init_runtime() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    at::set_num_threads(1);
    try {
      at::set_num_interop_threads(1);
    } catch (const c10::Error&) {
      // Already launched; the pool size no longer matters for determinism
      // because intra-op stays at 1.
    }
  });
}

namespace {
constexpr uint32_t kMagic = 0x4c4e434bu;  // "LNCK"
constexpr uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<torch::Tensor>& params) {
  const std::string meta_text = meta.dump();
  std::vector<double> flat = flatten_parameters(params);

  std::string blob;
  auto append = [&blob](const void* p, size_t n) {
    blob.append(reinterpret_cast<const char*>(p), n);
  };
  append(&kMagic, sizeof(kMagic));
  append(&kVersion, sizeof(kVersion));
  const uint64_t meta_len = meta_text.size();
  append(&meta_len, sizeof(meta_len));
  blob.append(meta_text);
  const uint64_t count = flat.size();
  append(&count, sizeof(count));
  append(flat.data(), flat.size() * sizeof(double));
  atomic_write(path, blob);
}

nlohmann::json load_checkpoint(const std::filesystem::path& path,
                               const std::string& expected_kind,
                               std::vector<double>* flat) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("missing checkpoint: " + path.string());
  auto read = [&in, &path](void* p, size_t n) {
    if (!in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n))) {
      throw DependencyError("truncated checkpoint: " + path.string());
    }
  };
  uint32_t magic = 0, version = 0;
  read(&magic, sizeof(magic));
  read(&version, sizeof(version));
  if (magic != kMagic || version != kVersion) {
    throw DependencyError("unrecognized checkpoint format: " + path.string());
  }
  uint64_t meta_len = 0;
  read(&meta_len, sizeof(meta_len));
  std::string meta_text(meta_len, '\0');
  read(meta_text.data(), meta_len);
  nlohmann::json meta = nlohmann::json::parse(meta_text, nullptr, false);
  if (meta.is_discarded() || meta.value("kind", "") != expected_kind) {
    throw DependencyError("checkpoint is not a " + expected_kind + " model: " +
                          path.string());
  }
  uint64_t count = 0;
  read(&count, sizeof(count));
  flat->resize(count);
  read(flat->data(), count * sizeof(double));
  return meta;
}

}  // namespace latnav::detail
