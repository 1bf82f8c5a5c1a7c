#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latnav/camera.hpp"
#include "latnav/sim.hpp"

namespace latnav {

// One collected frame: the raw render, its sensor-degraded copy and the
// filtered reconstruction target, all at the same resolution.
struct ImageRecord {
  DepthImage clean;
  DepthImage degraded;
  DepthImage target;
};

// Streaming writer for the image container: manifest.json plus a flat
// records file of 16-bit millimeter grids. Records are fixed-size, so the
// reader seeks by index.
class ImageDatasetWriter {
 public:
  ImageDatasetWriter(const std::filesystem::path& dir, int width, int height,
                     uint64_t seed, uint64_t config_hash,
                     nlohmann::json provenance = {});
  void append(const ImageRecord& rec);
  // Writes the manifest; the container is unreadable until this runs.
  void finalize();

 private:
  std::filesystem::path dir_;
  std::ofstream out_;
  int width_;
  int height_;
  uint64_t seed_;
  uint64_t config_hash_;
  nlohmann::json provenance_;
  uint64_t count_ = 0;
  bool finalized_ = false;
};

class ImageDataset {
 public:
  static ImageDataset open(const std::filesystem::path& dir);

  size_t size() const { return count_; }
  int width() const { return width_; }
  int height() const { return height_; }
  uint64_t config_hash() const { return config_hash_; }
  const nlohmann::json& manifest() const { return manifest_; }
  ImageRecord get(size_t index) const;

 private:
  std::filesystem::path records_path_;
  nlohmann::json manifest_;
  size_t count_ = 0;
  int width_ = 0;
  int height_ = 0;
  uint64_t config_hash_ = 0;
};

// One step of an encoded rollout. `delta` is the planar camera motion
// leading into this frame, expressed in the previous camera frame; zero for
// the first step of a trajectory.
struct TrajectoryStep {
  std::vector<float> latent;
  Pose2 delta;
  Action action;
  double reward = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  Termination termination = Termination::kNone;
  bool degraded = false;  // episode ran with degraded sensing

  bool operator==(const Trajectory&) const;
};

class TrajectoryDatasetWriter {
 public:
  TrajectoryDatasetWriter(const std::filesystem::path& dir, int latent_dim,
                          uint64_t seed, uint64_t config_hash,
                          nlohmann::json provenance = {});
  void append(const Trajectory& traj);
  void finalize();

 private:
  std::filesystem::path dir_;
  std::ofstream out_;
  int latent_dim_;
  uint64_t seed_;
  uint64_t config_hash_;
  nlohmann::json provenance_;
  uint64_t count_ = 0;
  uint64_t total_steps_ = 0;
  bool finalized_ = false;
};

class TrajectoryDataset {
 public:
  static TrajectoryDataset open(const std::filesystem::path& dir);

  size_t size() const { return trajectories_.size(); }
  int latent_dim() const { return latent_dim_; }
  uint64_t config_hash() const { return config_hash_; }
  const nlohmann::json& manifest() const { return manifest_; }
  const Trajectory& get(size_t index) const { return trajectories_[index]; }
  const std::vector<Trajectory>& all() const { return trajectories_; }

 private:
  nlohmann::json manifest_;
  std::vector<Trajectory> trajectories_;
  int latent_dim_ = 0;
  uint64_t config_hash_ = 0;
};

}  // namespace latnav
