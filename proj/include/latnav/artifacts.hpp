#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace latnav {

// FNV-1a, the hash used for config and artifact provenance chaining.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }
inline uint64_t fnv1a(const std::vector<uint8_t>& v) { return fnv1a(v.data(), v.size()); }

std::string hash_hex(uint64_t h);

// Content hash of a file; throws DependencyError when the file is absent.
uint64_t file_fnv1a(const std::filesystem::path& path);

// Write-then-rename so readers never observe a half-written file.
void atomic_write(const std::filesystem::path& path, const std::string& content);
void atomic_write(const std::filesystem::path& path, const std::vector<uint8_t>& content);

// Exclusive ownership of a run directory for the duration of a stage.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

// Stage manifests chain every artifact back to its config and upstream
// artifacts. No timestamps: manifests must be bit-identical across reruns.
nlohmann::json make_stage_manifest(const std::string& stage, uint64_t config_hash,
                                   uint64_t seed, const std::string& preset,
                                   const nlohmann::json& inputs,
                                   const nlohmann::json& outputs);

void write_stage_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest);

// Reads dir/manifest.json and checks it was written by `stage`; throws
// DependencyError naming the absent or mismatched stage.
nlohmann::json require_stage(const std::filesystem::path& dir, const std::string& stage);

}  // namespace latnav
