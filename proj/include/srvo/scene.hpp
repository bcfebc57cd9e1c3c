#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "srvo/rng.hpp"
#include "srvo/tensor.hpp"

namespace srvo {

struct GenerationError : std::runtime_error {
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ProjectionError : std::runtime_error {
  explicit ProjectionError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr int kDescriptorDim = 8;
inline constexpr int kMaxObjects = 3;
inline constexpr int kDescriptorClusters = 20;

using Descriptor = std::array<double, kDescriptorDim>;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
};

struct Vec2 {
  double u = 0.0, v = 0.0;
};

struct Box {
  Vec3 min{-0.5, -0.5, -0.5};
  Vec3 max{0.5, 0.5, 0.5};

  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  Vec3 clamp(const Vec3& p) const {
    auto cl = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
    return {cl(p.x, min.x, max.x), cl(p.y, min.y, max.y), cl(p.z, min.z, max.z)};
  }
  Vec3 center() const { return {(min.x + max.x) / 2, (min.y + max.y) / 2, (min.z + max.z) / 2}; }
  double diameter() const { return (max - min).norm(); }
};

struct SceneObject {
  Vec3 position;
  Descriptor descriptor{};
};

struct Scene {
  std::vector<SceneObject> objects;
  int target_index = 0;
  double table_z = -0.4;
  Box workspace;

  const SceneObject& target() const { return objects[static_cast<size_t>(target_index)]; }
};

// world->camera rotation stored row-major; camera-frame axes are
// (right, up, forward) with forward pointing at the scene.
struct Camera {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 position;
  double focal = 1.0;

  Vec3 to_camera(const Vec3& p) const {
    const Vec3 d = p - position;
    return {rotation[0] * d.x + rotation[1] * d.y + rotation[2] * d.z,
            rotation[3] * d.x + rotation[4] * d.y + rotation[5] * d.z,
            rotation[6] * d.x + rotation[7] * d.y + rotation[8] * d.z};
  }
};

struct ArmState {
  Vec3 effector_position;
};

// Raw direction command; the dynamics normalize it to a constant-speed
// displacement.
struct Action {
  Vec3 direction;
};

struct ObservationSlot {
  Vec2 uv;
  Descriptor descriptor{};
  double present = 0.0;
};

struct Observation {
  Vec2 effector_uv;
  std::array<ObservationSlot, kMaxObjects> slots{};

  static constexpr int kVectorDim = 2 + kMaxObjects * (2 + kDescriptorDim + 1);

  Tensor to_vector() const {
    Tensor t({kVectorDim});
    int64_t i = 0;
    t.data[i++] = effector_uv.u;
    t.data[i++] = effector_uv.v;
    for (const auto& s : slots) {
      t.data[i++] = s.uv.u;
      t.data[i++] = s.uv.v;
      for (double d : s.descriptor) t.data[i++] = d;
      t.data[i++] = s.present;
    }
    return t;
  }
};

struct QueryDescriptor {
  Descriptor descriptor{};

  Tensor to_vector() const {
    Tensor t({kDescriptorDim});
    for (int i = 0; i < kDescriptorDim; ++i) t.data[static_cast<size_t>(i)] = descriptor[static_cast<size_t>(i)];
    return t;
  }
};

enum class DescriptorDomain { SEEN, UNSEEN };
enum class ViewpointPool { TRAIN, HELDOUT };

struct EnvConfig {
  double velocity = 0.08;
  double reach_radius = 0.08;
  double table_z = -0.4;
  Box workspace;
  double min_object_gap = 0.1;
  double object_margin = 0.05;   // keeps spawned objects off the walls
  double descriptor_noise = 0.05;
  double query_noise = 0.05;
  double spawn_min_dist = 0.2;   // initial arm-to-target distance band for
  double spawn_max_dist = 0.55;  // horizon-10 episodes
  uint64_t descriptor_seed = 0x5EED0001ULL;
  uint64_t pool_seed = 0x5EED0002ULL;
};

// ---------------------------------------------------------------------------
// Descriptor clusters: 20 SEEN + 20 UNSEEN fixed centers, a deterministic
// function of the build seed, kept mutually separated.
// ---------------------------------------------------------------------------

// Sign-code centers (+/-0.8 per component) kept at Hamming distance >= 2:
// every pair differs strongly in at least two coordinates, so cluster
// identity survives the +/-0.05 sampling noise with a wide margin.
inline std::vector<Descriptor> descriptor_centers(uint64_t seed) {
  std::vector<Descriptor> centers;
  Rng rng(mix_seed(seed, 0xDE5CULL));
  while (centers.size() < 2 * kDescriptorClusters) {
    Descriptor c{};
    for (double& v : c) v = rng.uniform_int(2) == 0 ? -0.8 : 0.8;
    bool ok = true;
    for (const auto& other : centers) {
      int hamming = 0;
      for (int i = 0; i < kDescriptorDim; ++i)
        if ((c[static_cast<size_t>(i)] > 0) != (other[static_cast<size_t>(i)] > 0)) ++hamming;
      if (hamming < 2) {
        ok = false;
        break;
      }
    }
    if (ok) centers.push_back(c);
  }
  return centers;
}

inline const std::vector<Descriptor>& descriptor_centers_cached(uint64_t seed) {
  static const uint64_t cached_seed = seed;
  static const std::vector<Descriptor> cached = descriptor_centers(seed);
  if (seed != cached_seed) throw StructuralError("descriptor seed changed within process");
  return cached;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline Scene sample_scene(const EnvConfig& env, uint64_t seed, int n_objects,
                          DescriptorDomain domain) {
  if (n_objects < 1 || n_objects > kMaxObjects) throw StructuralError("n_objects must be 1..3");
  Rng rng(mix_seed(seed, 0x5CE4EULL));
  Scene scene;
  scene.table_z = env.table_z;
  scene.workspace = env.workspace;
  const auto& centers = descriptor_centers_cached(env.descriptor_seed);
  const size_t base = domain == DescriptorDomain::SEEN ? 0 : kDescriptorClusters;

  for (int attempt = 0;; ++attempt) {
    if (attempt >= 1000) throw GenerationError("scene rejection sampling failed (overlap)");
    std::vector<Vec3> pos;
    for (int i = 0; i < n_objects; ++i) {
      pos.push_back({rng.uniform(env.workspace.min.x + env.object_margin,
                                 env.workspace.max.x - env.object_margin),
                     rng.uniform(env.workspace.min.y + env.object_margin,
                                 env.workspace.max.y - env.object_margin),
                     env.table_z});
    }
    bool ok = true;
    for (int i = 0; i < n_objects && ok; ++i)
      for (int j = i + 1; j < n_objects; ++j)
        if ((pos[static_cast<size_t>(i)] - pos[static_cast<size_t>(j)]).norm() < env.min_object_gap) {
          ok = false;
          break;
        }
    if (!ok) continue;
    for (int i = 0; i < n_objects; ++i) {
      SceneObject obj;
      obj.position = pos[static_cast<size_t>(i)];
      obj.descriptor = centers[base + rng.uniform_int(kDescriptorClusters)];
      for (double& v : obj.descriptor) v += rng.uniform(-env.descriptor_noise, env.descriptor_noise);
      scene.objects.push_back(obj);
    }
    break;
  }
  scene.target_index = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_objects)));
  return scene;
}

inline QueryDescriptor make_query(const EnvConfig& env, const Scene& scene, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9E44ULL));
  QueryDescriptor q;
  q.descriptor = scene.target().descriptor;
  for (double& v : q.descriptor) v += rng.uniform(-env.query_noise, env.query_noise);
  return q;
}

// Orthonormal look-at rotation with det +1; view axis hits `center` exactly.
inline Camera camera_look_at(const Vec3& position, const Vec3& center, double focal = 1.0) {
  const Vec3 forward = (center - position).normalized();
  Vec3 right = Vec3{0, 0, 1}.cross(forward).normalized();
  if (right.norm() < 1e-9) right = {1, 0, 0};  // looking straight up/down
  const Vec3 up = forward.cross(right);
  Camera cam;
  cam.position = position;
  cam.focal = focal;
  cam.rotation = {right.x, right.y, right.z, up.x, up.y, up.z, forward.x, forward.y, forward.z};
  return cam;
}

struct CameraPools {
  std::vector<Camera> train;
  std::vector<Camera> heldout;
};

// Hemisphere grid around the workspace center: 20 azimuth columns over
// [-45 deg, +45 deg] x 10 elevations over [15 deg, 65 deg], per-cell radius in
// [1.5, 2.5]. Even azimuth columns form the TRAIN pool, odd columns HELDOUT,
// so the pools are disjoint by construction.
inline CameraPools build_camera_pools(const EnvConfig& env) {
  CameraPools pools;
  const Vec3 center = env.workspace.center();
  constexpr int kAz = 20;
  constexpr int kEl = 10;
  const double az_lo = -45.0 * M_PI / 180.0, az_hi = 45.0 * M_PI / 180.0;
  const double el_lo = 15.0 * M_PI / 180.0, el_hi = 65.0 * M_PI / 180.0;
  for (int a = 0; a < kAz; ++a) {
    for (int e = 0; e < kEl; ++e) {
      Rng cell(mix_seed(env.pool_seed, static_cast<uint64_t>(a), static_cast<uint64_t>(e)));
      const double az = az_lo + (az_hi - az_lo) * a / (kAz - 1);
      const double el = el_lo + (el_hi - el_lo) * e / (kEl - 1);
      const double r = cell.uniform(1.5, 2.5);
      const Vec3 pos = center + Vec3{r * std::cos(el) * std::cos(az),
                                     r * std::cos(el) * std::sin(az), r * std::sin(el)};
      Camera cam = camera_look_at(pos, center);
      (a % 2 == 0 ? pools.train : pools.heldout).push_back(cam);
    }
  }
  return pools;
}

inline const CameraPools& camera_pools_cached(const EnvConfig& env) {
  static const uint64_t cached_seed = env.pool_seed;
  static const CameraPools pools = build_camera_pools(env);
  if (env.pool_seed != cached_seed) throw StructuralError("pool seed changed within process");
  return pools;
}

inline Camera sample_camera(const EnvConfig& env, uint64_t seed, ViewpointPool pool) {
  const CameraPools& pools = camera_pools_cached(env);
  const auto& set = pool == ViewpointPool::TRAIN ? pools.train : pools.heldout;
  Rng rng(mix_seed(seed, 0xCA3E4AULL));
  return set[rng.uniform_int(set.size())];
}

// Pinhole projection u = f * (Xc/Zc, Yc/Zc).
inline Vec2 project(const Camera& cam, const Vec3& point) {
  const Vec3 c = cam.to_camera(point);
  if (c.z <= 1e-6) throw ProjectionError("point at non-positive camera depth");
  return {cam.focal * c.x / c.z, cam.focal * c.y / c.z};
}

inline Observation render_observation(const Scene& scene, const ArmState& arm, const Camera& cam,
                                      const std::vector<int>& slot_perm) {
  Observation obs;
  obs.effector_uv = project(cam, arm.effector_position);
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    ObservationSlot& slot = obs.slots[static_cast<size_t>(slot_perm[i])];
    slot.uv = project(cam, scene.objects[i].position);
    slot.descriptor = scene.objects[i].descriptor;
    slot.present = 1.0;
  }
  return obs;
}

// x' = clamp(x + v * a/|a|) for |a| > 1e-8, else a no-op.
inline ArmState step_dynamics(const ArmState& arm, const Action& action, double v,
                              const Box& workspace) {
  const double n = action.direction.norm();
  if (n <= 1e-8) return arm;
  const Vec3 next = arm.effector_position + action.direction * (v / n);
  return {workspace.clamp(next)};
}

inline int reward(const ArmState& arm, const Scene& scene, double rho) {
  return (arm.effector_position - scene.target().position).norm() <= rho ? 1 : 0;
}

// Unit direction toward the target; the zero action inside the reach radius.
inline Action expert_action(const ArmState& arm, const Scene& scene, double rho) {
  const Vec3 delta = scene.target().position - arm.effector_position;
  if (delta.norm() <= rho) return {};
  return {delta.normalized()};
}

inline double final_distance(const ArmState& arm, const Scene& scene) {
  return (arm.effector_position - scene.target().position).norm();
}

// Initial effector placement for horizon-limited episodes: uniform over the
// workspace above the table, rejected into the reachable distance band.
inline Vec3 sample_arm_start(const EnvConfig& env, const Scene& scene, uint64_t seed) {
  Rng rng(mix_seed(seed, 0xA4357A47ULL));
  const Vec3 target = scene.target().position;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Vec3 p{rng.uniform(env.workspace.min.x, env.workspace.max.x),
           rng.uniform(env.workspace.min.y, env.workspace.max.y),
           rng.uniform(env.table_z, env.workspace.max.z)};
    const double d = (p - target).norm();
    if (d >= env.spawn_min_dist && d <= env.spawn_max_dist) return p;
  }
  throw GenerationError("arm start rejection sampling failed");
}

inline Vec3 sample_arm_start_anywhere(const EnvConfig& env, uint64_t seed) {
  Rng rng(mix_seed(seed, 0xA4357A48ULL));
  return {rng.uniform(env.workspace.min.x, env.workspace.max.x),
          rng.uniform(env.workspace.min.y, env.workspace.max.y),
          rng.uniform(env.table_z, env.workspace.max.z)};
}

}  // namespace srvo
