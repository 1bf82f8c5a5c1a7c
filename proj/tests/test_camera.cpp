#include <doctest.h>

#include <cmath>

#include "latnav/camera.hpp"
#include "latnav/errors.hpp"
#include "latnav/world.hpp"

#include "oracles.hpp"

using namespace latnav;

namespace {

CameraMount level_mount() {
  CameraMount m;
  m.offset = {0.0, 0.0, 0.45};
  m.pitch = 0.0;
  m.tilt = 0.0;
  return m;
}

// Pixels whose rendered depth differs sharply from a neighbor sit on
// silhouette edges where a marching oracle cannot localize the hit.
bool near_discontinuity(const DepthImage& img, int r, int c, double jump) {
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      const int nr = r + dr, nc = c + dc;
      if (nr < 0 || nr >= img.height || nc < 0 || nc >= img.width) continue;
      if (std::abs(double(img.at(nr, nc)) - img.at(r, c)) > jump) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("a frontal wall renders at its analytic ray distances") {
  WorldState world;
  world.bounds = {{-10.0, -10.0}, {10.0, 10.0}};
  const double wall_x = 2.0;
  world.walls.push_back(Wall{Obb2{{wall_x + 0.05, 0.0}, {0.05, 10.0}, 0.0}, 3.0});

  CameraIntrinsics intr;
  AgentState agent;  // at origin facing +x
  const CameraMount mount = level_mount();
  const DepthImage img = render_depth(world, agent, mount, intr);

  const double tan_h = std::tan(deg_to_rad(intr.hfov_deg) / 2.0);
  const double tan_v = std::tan(deg_to_rad(intr.vfov_deg) / 2.0);
  for (int r = 0; r < intr.height; ++r) {
    for (int c = 0; c < intr.width; ++c) {
      const double u = 2.0 * (c + 0.5) / intr.width - 1.0;
      const double v = 2.0 * (r + 0.5) / intr.height - 1.0;
      const Vec3 d = {1.0, -u * tan_h, -v * tan_v};
      const double inv = 1.0 / d.norm();
      const double dx = d.x * inv;
      const double dz = d.z * inv;
      // Nearest of the wall face and, for downward rays, the ground plane.
      double expected = wall_x / dx;
      if (dz < 0.0) expected = std::min(expected, -mount.offset.z / dz);
      expected = std::clamp(expected, intr.min_range, intr.max_range);
      CHECK(std::abs(double(img.at(r, c)) - expected) <= 1e-3);
    }
  }
}

TEST_CASE("an empty scene renders ground below the horizon and max range above") {
  WorldState world;
  world.bounds = {{-10.0, -10.0}, {10.0, 10.0}};
  CameraIntrinsics intr;
  AgentState agent;
  const DepthImage img = render_depth(world, agent, level_mount(), intr);
  for (int c = 0; c < intr.width; ++c) {
    CHECK(img.at(0, c) == doctest::Approx(intr.max_range));  // top row looks up
  }
  // Bottom rows look down at nearby ground.
  CHECK(img.at(intr.height - 1, intr.width / 2) < intr.max_range);
  for (float d : img.values) {
    CHECK(d >= intr.min_range);
    CHECK(d <= intr.max_range);
  }
}

TEST_CASE("rendered depth matches a ray-marching oracle on cluttered scenes") {
  const double h = 1e-4;
  int checked = 0;
  for (uint64_t seed = 0; seed < 6; ++seed) {
    WorldConfig wc;
    wc.seed = 500 + seed;
    wc.object_density = 0.2;
    const WorldState world = generate_world(wc);

    CameraIntrinsics intr;
    Rng rng(derive_seed(9000, seed));
    AgentState agent;
    try {
      agent.pose = sample_start_goal(world, {0.35, 0.25}, 0.05, 3.0, rng).first;
    } catch (const SamplingError&) {
      continue;
    }
    CameraMount mount;
    mount.offset = {0.3, 0.0, 0.45};
    mount.pitch = rng.uniform(-0.05, 0.05);
    mount.tilt = rng.uniform(-0.05, 0.05);
    const DepthImage img = render_depth(world, agent, mount, intr);
    const Pose2 cam = camera_pose(agent, mount);

    for (int k = 0; k < 48; ++k) {
      const int r = rng.uniform_int(0, intr.height - 1);
      const int c = rng.uniform_int(0, intr.width - 1);
      if (near_discontinuity(img, r, c, 0.05)) continue;

      Vec3 origin, dir;
      oracle::camera_ray(cam, mount.offset.z, mount.pitch, intr, r, c, &origin, &dir);
      int run = 0;
      const double t = oracle::march_ray(origin, dir, world, h, intr.max_range, &run);
      if (t < intr.max_range && run < 3) continue;  // tangential sliver
      const double expected = std::clamp(t, intr.min_range, intr.max_range);
      CHECK(std::abs(double(img.at(r, c)) - expected) <= 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 150);
}

TEST_CASE("rendering is deterministic") {
  WorldConfig wc;
  wc.seed = 321;
  const WorldState world = generate_world(wc);
  AgentState agent;
  CameraIntrinsics intr;
  const DepthImage a = render_depth(world, agent, level_mount(), intr);
  const DepthImage b = render_depth(world, agent, level_mount(), intr);
  CHECK(a == b);
}

TEST_CASE("degradation is reproducible and never revalidates pixels") {
  WorldConfig wc;
  wc.seed = 11;
  wc.object_density = 0.2;
  const WorldState world = generate_world(wc);
  AgentState agent;
  CameraIntrinsics intr;
  DepthImage img = render_depth(world, agent, level_mount(), intr);
  img.at(3, 3) = 0.0f;  // pre-existing invalid pixel
  img.at(20, 40) = 0.0f;

  DegradeConfig dc;
  Rng r1(77), r2(77), r3(78);
  const DepthImage a = degrade(img, dc, intr, r1);
  const DepthImage b = degrade(img, dc, intr, r2);
  const DepthImage c = degrade(img, dc, intr, r3);
  CHECK(a == b);
  CHECK(a != c);

  for (size_t i = 0; i < img.size(); ++i) {
    if (img.values[i] == 0.0f) CHECK(a.values[i] == 0.0f);
    if (a.values[i] != 0.0f) {
      CHECK(a.values[i] >= intr.min_range);
      CHECK(a.values[i] <= intr.max_range);
    }
  }
}

TEST_CASE("dropout rate controls the invalidated fraction") {
  CameraIntrinsics intr;
  intr.width = 1000;
  intr.height = 1000;
  DepthImage img(intr.width, intr.height);
  for (float& v : img.values) v = 2.0f;

  DegradeConfig dc;
  dc.noise_scale = 0.0;
  dc.edge_threshold = 0.0;
  dc.dropout_rate = 0.02;
  Rng rng(5);
  const DepthImage out = degrade(img, dc, intr, rng);
  const double invalid = 1.0 - coverage(out);
  CHECK(invalid >= 0.018);
  CHECK(invalid <= 0.022);
}

TEST_CASE("depth discontinuities invalidate both sides of the jump") {
  CameraIntrinsics intr;
  intr.width = 16;
  intr.height = 8;
  DepthImage img(intr.width, intr.height);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      img.at(r, c) = c < 8 ? 1.0f : 3.0f;  // 2 m jump between columns 7 and 8
    }
  }
  DegradeConfig dc;
  dc.noise_scale = 0.0;
  dc.dropout_rate = 0.0;
  dc.edge_threshold = 0.5;
  Rng rng(1);
  const DepthImage out = degrade(img, dc, intr, rng);
  for (int r = 0; r < img.height; ++r) {
    CHECK(out.at(r, 7) == 0.0f);
    CHECK(out.at(r, 8) == 0.0f);
    CHECK(out.at(r, 0) == 1.0f);
    CHECK(out.at(r, 15) == 3.0f);
  }
}

TEST_CASE("noise perturbs depths by a range-dependent amount") {
  CameraIntrinsics intr;
  intr.width = 200;
  intr.height = 200;
  DepthImage img(intr.width, intr.height);
  for (float& v : img.values) v = 3.0f;

  DegradeConfig dc;
  dc.noise_scale = 0.04;
  dc.edge_threshold = 0.0;
  dc.dropout_rate = 0.0;
  Rng rng(9);
  const DepthImage out = degrade(img, dc, intr, rng);
  double sum = 0.0, sumsq = 0.0;
  for (float v : out.values) {
    sum += v - 3.0;
    sumsq += (v - 3.0) * (v - 3.0);
  }
  const double n = out.size();
  const double sigma = std::sqrt(sumsq / n - (sum / n) * (sum / n));
  // sigma(d) = 0.04 * 9 / 4 = 0.09
  CHECK(sigma == doctest::Approx(0.09).epsilon(0.05));
  CHECK(std::abs(sum / n) < 0.002);
}

TEST_CASE("millimeter encoding round-trips to sub-millimeter accuracy") {
  DepthImage img(8, 4);
  Rng rng(13);
  for (size_t i = 0; i < img.size(); ++i) {
    img.values[i] = i % 5 == 0 ? 0.0f : static_cast<float>(rng.uniform(0.2, 4.0));
  }
  const auto mm = depth_to_millimeters(img);
  const DepthImage back = depth_from_millimeters(mm, img.width, img.height);
  for (size_t i = 0; i < img.size(); ++i) {
    if (img.values[i] == 0.0f) {
      CHECK(back.values[i] == 0.0f);
    } else {
      CHECK(std::abs(back.values[i] - img.values[i]) <= 5.1e-4);
    }
  }
}

TEST_CASE("coverage counts the valid fraction") {
  DepthImage img(4, 2);
  CHECK(coverage(img) == 0.0);
  img.at(0, 0) = 1.0f;
  img.at(1, 3) = 2.0f;
  CHECK(coverage(img) == doctest::Approx(0.25));
  CHECK(coverage(DepthImage{}) == 0.0);
}

TEST_CASE("intrinsics validation rejects bad settings") {
  CameraIntrinsics intr;
  intr.min_range = 5.0;
  CHECK_THROWS_AS(intr.validate(), ConfigError);
  CameraIntrinsics tiny;
  tiny.width = 4;
  CHECK_THROWS_AS(tiny.validate(), ConfigError);
  CameraIntrinsics wide;
  wide.hfov_deg = 180.0;
  CHECK_THROWS_AS(wide.validate(), ConfigError);
}
