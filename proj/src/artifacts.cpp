#include "latnav/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "latnav/errors.hpp"

namespace latnav {

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

uint64_t file_fnv1a(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DependencyError("missing artifact file: " + path.string());
  }
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

namespace {

void atomic_write_impl(const std::filesystem::path& path, const void* data, size_t n) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) {
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  atomic_write_impl(path, content.data(), content.size());
}

void atomic_write(const std::filesystem::path& path, const std::vector<uint8_t>& content) {
  atomic_write_impl(path, content.data(), content.size());
}

RunLock::RunLock(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  lock_path_ = dir / "lock";
  if (std::filesystem::exists(lock_path_)) {
    throw ConfigError("run directory is locked by another stage: " + dir.string());
  }
  std::ofstream out(lock_path_);
  out << "locked\n";
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(lock_path_, ec);
}

nlohmann::json make_stage_manifest(const std::string& stage, uint64_t config_hash,
                                   uint64_t seed, const std::string& preset,
                                   const nlohmann::json& inputs,
                                   const nlohmann::json& outputs) {
  nlohmann::json m;
  m["stage"] = stage;
  m["version"] = 1;
  m["config_hash"] = hash_hex(config_hash);
  m["seed"] = hash_hex(seed);  // hex keeps 64-bit seeds exact in JSON
  m["preset"] = preset;
  m["inputs"] = inputs.is_null() ? nlohmann::json::object() : inputs;
  m["outputs"] = outputs.is_null() ? nlohmann::json::object() : outputs;
  return m;
}

void write_stage_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest) {
  std::filesystem::create_directories(dir);
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

nlohmann::json require_stage(const std::filesystem::path& dir, const std::string& stage) {
  const std::filesystem::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) {
    throw DependencyError("stage '" + stage + "' has not produced " + path.string() +
                          "; run it first");
  }
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw DependencyError("unreadable manifest " + path.string() + ": " + e.what());
  }
  if (m.value("stage", "") != stage) {
    throw DependencyError("expected artifacts of stage '" + stage + "' in " + dir.string() +
                          " but found '" + m.value("stage", "<none>") + "'");
  }
  return m;
}

}  // namespace latnav
