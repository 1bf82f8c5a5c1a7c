#include "latnav/dataset.hpp"

#include <cstring>

#include "latnav/artifacts.hpp"
#include "latnav/errors.hpp"

namespace latnav {

namespace {

constexpr uint32_t kImageMagic = 0x4c4e4944;  // "LNID"
constexpr uint32_t kTrajMagic = 0x4c4e544a;   // "LNTJ"
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw DependencyError("dataset records truncated");
  }
  return v;
}

void put_u16_grid(std::ofstream& out, const DepthImage& img) {
  const auto mm = depth_to_millimeters(img);
  out.write(reinterpret_cast<const char*>(mm.data()),
            static_cast<std::streamsize>(mm.size() * sizeof(uint16_t)));
}

nlohmann::json base_manifest(const std::string& kind, uint64_t seed, uint64_t config_hash,
                             const nlohmann::json& provenance) {
  nlohmann::json m;
  m["kind"] = kind;
  m["version"] = kFormatVersion;
  m["seed"] = hash_hex(seed);
  m["config_hash"] = hash_hex(config_hash);
  m["provenance"] = provenance.is_null() ? nlohmann::json::object() : provenance;
  return m;
}

uint64_t parse_hex(const nlohmann::json& j, const char* key) {
  const std::string s = j.value(key, "");
  return std::strtoull(s.c_str(), nullptr, 16);
}

}  // namespace

ImageDatasetWriter::ImageDatasetWriter(const std::filesystem::path& dir, int width,
                                       int height, uint64_t seed, uint64_t config_hash,
                                       nlohmann::json provenance)
    : dir_(dir),
      width_(width),
      height_(height),
      seed_(seed),
      config_hash_(config_hash),
      provenance_(std::move(provenance)) {
  std::filesystem::create_directories(dir_);
  out_.open(dir_ / "records.bin", std::ios::binary | std::ios::trunc);
  if (!out_) {
    throw std::runtime_error("cannot create " + (dir_ / "records.bin").string());
  }
  put(out_, kImageMagic);
  put(out_, kFormatVersion);
  put(out_, static_cast<uint32_t>(width_));
  put(out_, static_cast<uint32_t>(height_));
}

void ImageDatasetWriter::append(const ImageRecord& rec) {
  for (const DepthImage* img : {&rec.clean, &rec.degraded, &rec.target}) {
    if (img->width != width_ || img->height != height_) {
      throw std::invalid_argument("image record resolution mismatch");
    }
  }
  put_u16_grid(out_, rec.clean);
  put_u16_grid(out_, rec.degraded);
  put_u16_grid(out_, rec.target);
  ++count_;
}

void ImageDatasetWriter::finalize() {
  if (finalized_) return;
  out_.close();
  if (!out_) {
    throw std::runtime_error("failed writing " + (dir_ / "records.bin").string());
  }
  nlohmann::json m = base_manifest("images", seed_, config_hash_, provenance_);
  m["count"] = count_;
  m["width"] = width_;
  m["height"] = height_;
  m["records_hash"] = hash_hex(file_fnv1a(dir_ / "records.bin"));
  atomic_write(dir_ / "manifest.json", m.dump(2) + "\n");
  finalized_ = true;
}

ImageDataset ImageDataset::open(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) {
    throw DependencyError("no image dataset at " + dir.string());
  }
  ImageDataset ds;
  try {
    min >> ds.manifest_;
  } catch (const nlohmann::json::exception& e) {
    throw DependencyError("unreadable dataset manifest: " + std::string(e.what()));
  }
  if (ds.manifest_.value("kind", "") != "images") {
    throw DependencyError(dir.string() + " is not an image dataset");
  }
  ds.count_ = ds.manifest_.value("count", 0u);
  ds.width_ = ds.manifest_.value("width", 0);
  ds.height_ = ds.manifest_.value("height", 0);
  ds.config_hash_ = parse_hex(ds.manifest_, "config_hash");
  ds.records_path_ = dir / "records.bin";

  std::ifstream in(ds.records_path_, std::ios::binary);
  if (!in) {
    throw DependencyError("missing " + ds.records_path_.string());
  }
  uint32_t magic = 0, version = 0, w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || magic != kImageMagic || version != kFormatVersion) {
    throw DependencyError("bad image records header in " + ds.records_path_.string());
  }
  if (static_cast<int>(w) != ds.width_ || static_cast<int>(h) != ds.height_) {
    throw DependencyError("image records resolution disagrees with manifest");
  }
  const size_t record_bytes = static_cast<size_t>(ds.width_) * ds.height_ * 2 * 3;
  const auto file_size = std::filesystem::file_size(ds.records_path_);
  if (file_size != 16 + record_bytes * ds.count_) {
    throw DependencyError("image records size disagrees with manifest count");
  }
  return ds;
}

ImageRecord ImageDataset::get(size_t index) const {
  if (index >= count_) {
    throw std::out_of_range("image dataset index");
  }
  const size_t pixels = static_cast<size_t>(width_) * height_;
  const size_t record_bytes = pixels * 2 * 3;
  std::ifstream in(records_path_, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(16 + index * record_bytes));
  std::vector<uint16_t> mm(pixels);
  ImageRecord rec;
  for (DepthImage* img : {&rec.clean, &rec.degraded, &rec.target}) {
    in.read(reinterpret_cast<char*>(mm.data()),
            static_cast<std::streamsize>(pixels * sizeof(uint16_t)));
    if (!in) {
      throw DependencyError("image dataset truncated at record " + std::to_string(index));
    }
    *img = depth_from_millimeters(mm, width_, height_);
  }
  return rec;
}

bool Trajectory::operator==(const Trajectory& o) const {
  if (termination != o.termination || degraded != o.degraded ||
      steps.size() != o.steps.size()) {
    return false;
  }
  for (size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].latent != o.steps[i].latent) return false;
    if (steps[i].delta != o.steps[i].delta) return false;
    if (steps[i].action.vx != o.steps[i].action.vx ||
        steps[i].action.vy != o.steps[i].action.vy ||
        steps[i].action.wz != o.steps[i].action.wz) {
      return false;
    }
    if (steps[i].reward != o.steps[i].reward) return false;
  }
  return true;
}

TrajectoryDatasetWriter::TrajectoryDatasetWriter(const std::filesystem::path& dir,
                                                 int latent_dim, uint64_t seed,
                                                 uint64_t config_hash,
                                                 nlohmann::json provenance)
    : dir_(dir),
      latent_dim_(latent_dim),
      seed_(seed),
      config_hash_(config_hash),
      provenance_(std::move(provenance)) {
  std::filesystem::create_directories(dir_);
  out_.open(dir_ / "records.bin", std::ios::binary | std::ios::trunc);
  if (!out_) {
    throw std::runtime_error("cannot create " + (dir_ / "records.bin").string());
  }
  put(out_, kTrajMagic);
  put(out_, kFormatVersion);
  put(out_, static_cast<uint32_t>(latent_dim_));
}

void TrajectoryDatasetWriter::append(const Trajectory& traj) {
  put(out_, static_cast<uint32_t>(traj.steps.size()));
  put(out_, static_cast<uint8_t>(traj.termination));
  put(out_, static_cast<uint8_t>(traj.degraded ? 1 : 0));
  for (const TrajectoryStep& s : traj.steps) {
    if (static_cast<int>(s.latent.size()) != latent_dim_) {
      throw std::invalid_argument("trajectory latent dimension mismatch");
    }
    out_.write(reinterpret_cast<const char*>(s.latent.data()),
               static_cast<std::streamsize>(s.latent.size() * sizeof(float)));
    put(out_, s.delta.x);
    put(out_, s.delta.y);
    put(out_, s.delta.yaw);
    put(out_, s.action.vx);
    put(out_, s.action.vy);
    put(out_, s.action.wz);
    put(out_, s.reward);
  }
  ++count_;
  total_steps_ += traj.steps.size();
}

void TrajectoryDatasetWriter::finalize() {
  if (finalized_) return;
  out_.close();
  if (!out_) {
    throw std::runtime_error("failed writing " + (dir_ / "records.bin").string());
  }
  nlohmann::json m = base_manifest("trajectories", seed_, config_hash_, provenance_);
  m["count"] = count_;
  m["total_steps"] = total_steps_;
  m["latent_dim"] = latent_dim_;
  m["records_hash"] = hash_hex(file_fnv1a(dir_ / "records.bin"));
  atomic_write(dir_ / "manifest.json", m.dump(2) + "\n");
  finalized_ = true;
}

TrajectoryDataset TrajectoryDataset::open(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) {
    throw DependencyError("no trajectory dataset at " + dir.string());
  }
  TrajectoryDataset ds;
  try {
    min >> ds.manifest_;
  } catch (const nlohmann::json::exception& e) {
    throw DependencyError("unreadable dataset manifest: " + std::string(e.what()));
  }
  if (ds.manifest_.value("kind", "") != "trajectories") {
    throw DependencyError(dir.string() + " is not a trajectory dataset");
  }
  ds.config_hash_ = parse_hex(ds.manifest_, "config_hash");
  const uint64_t count = ds.manifest_.value("count", 0u);

  std::ifstream in(dir / "records.bin", std::ios::binary);
  if (!in) {
    throw DependencyError("missing " + (dir / "records.bin").string());
  }
  if (take<uint32_t>(in) != kTrajMagic || take<uint32_t>(in) != kFormatVersion) {
    throw DependencyError("bad trajectory records header");
  }
  ds.latent_dim_ = static_cast<int>(take<uint32_t>(in));
  if (ds.latent_dim_ != ds.manifest_.value("latent_dim", 0)) {
    throw DependencyError("trajectory latent_dim disagrees with manifest");
  }
  ds.trajectories_.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Trajectory traj;
    const uint32_t len = take<uint32_t>(in);
    traj.termination = static_cast<Termination>(take<uint8_t>(in));
    traj.degraded = take<uint8_t>(in) != 0;
    traj.steps.resize(len);
    for (uint32_t s = 0; s < len; ++s) {
      TrajectoryStep& step = traj.steps[s];
      step.latent.resize(ds.latent_dim_);
      in.read(reinterpret_cast<char*>(step.latent.data()),
              static_cast<std::streamsize>(step.latent.size() * sizeof(float)));
      if (!in) {
        throw DependencyError("trajectory records truncated");
      }
      step.delta.x = take<double>(in);
      step.delta.y = take<double>(in);
      step.delta.yaw = take<double>(in);
      step.action.vx = take<double>(in);
      step.action.vy = take<double>(in);
      step.action.wz = take<double>(in);
      step.reward = take<double>(in);
    }
    ds.trajectories_.push_back(std::move(traj));
  }
  return ds;
}

}  // namespace latnav
