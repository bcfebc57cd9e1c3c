#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "srvo/binio.hpp"
#include "srvo/scene.hpp"
#include "srvo/tensor.hpp"

namespace srvo {

enum class ActionSource : uint8_t { POLICY = 0, EXPERT = 1, EXPERT_NOISY = 2, RANDOM = 3 };

struct TrajectoryStep {
  Observation observation;
  Action executed;       // action actually applied to the dynamics
  Action expert_label;   // clean expert direction at the pre-action state
  double reward = 0.0;   // reward at the post-action state
  Vec3 arm_position;     // effector position before the action
  Tensor trunk_features; // policy trunk output, zeros for policy-free rollouts
};

struct Trajectory {
  Scene scene;
  Camera camera;
  uint64_t seed = 0;
  ActionSource source = ActionSource::EXPERT;
  std::vector<int> slot_perm;  // scene object index -> observation slot
  QueryDescriptor query;
  Vec3 arm_init;
  Vec3 arm_final;  // effector position after the last action
  std::vector<TrajectoryStep> steps;

  int horizon() const { return static_cast<int>(steps.size()); }

  // Post-action effector position of step t (0-based).
  Vec3 arm_after(int t) const {
    return t + 1 < horizon() ? steps[static_cast<size_t>(t + 1)].arm_position : arm_final;
  }
};

// FIFO replay buffer: oldest trajectory out once capacity is reached.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity = 50000) : capacity_(capacity) {}

  void push(Trajectory t) {
    buf_.push_back(std::move(t));
    while (buf_.size() > capacity_) buf_.pop_front();
  }

  size_t size() const { return buf_.size(); }
  size_t capacity() const { return capacity_; }
  const Trajectory& at(size_t i) const { return buf_[i]; }

 private:
  size_t capacity_;
  std::deque<Trajectory> buf_;
};

// ---------------------------------------------------------------------------
// Dataset file: magic "SRVD", version, header (T, k, n_episodes, master seed,
// resolved config JSON), FNV-1a payload hash, then packed float64 records.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_vec3(std::string& out, const Vec3& v) {
  binio::put_f64(out, v.x);
  binio::put_f64(out, v.y);
  binio::put_f64(out, v.z);
}

inline Vec3 get_vec3(binio::Reader& r) {
  Vec3 v;
  v.x = r.f64();
  v.y = r.f64();
  v.z = r.f64();
  return v;
}

inline void pack_trajectory(std::string& out, const Trajectory& t) {
  binio::put_u64(out, t.seed);
  binio::put_u32(out, static_cast<uint32_t>(t.source));
  binio::put_u32(out, static_cast<uint32_t>(t.scene.objects.size()));
  binio::put_u32(out, static_cast<uint32_t>(t.scene.target_index));
  for (int i = 0; i < kMaxObjects; ++i)
    binio::put_u32(out, i < static_cast<int>(t.slot_perm.size())
                            ? static_cast<uint32_t>(t.slot_perm[static_cast<size_t>(i)])
                            : 0u);
  binio::put_f64(out, t.scene.table_z);
  put_vec3(out, t.scene.workspace.min);
  put_vec3(out, t.scene.workspace.max);
  for (int i = 0; i < kMaxObjects; ++i) {
    if (i < static_cast<int>(t.scene.objects.size())) {
      const auto& o = t.scene.objects[static_cast<size_t>(i)];
      put_vec3(out, o.position);
      for (double d : o.descriptor) binio::put_f64(out, d);
    } else {
      for (int j = 0; j < 3 + kDescriptorDim; ++j) binio::put_f64(out, 0.0);
    }
  }
  for (double d : t.camera.rotation) binio::put_f64(out, d);
  put_vec3(out, t.camera.position);
  binio::put_f64(out, t.camera.focal);
  for (double d : t.query.descriptor) binio::put_f64(out, d);
  put_vec3(out, t.arm_init);
  put_vec3(out, t.arm_final);
  for (const auto& s : t.steps) {
    const Tensor obs = s.observation.to_vector();
    for (double d : obs.data) binio::put_f64(out, d);
    put_vec3(out, s.executed.direction);
    put_vec3(out, s.expert_label.direction);
    binio::put_f64(out, s.reward);
    put_vec3(out, s.arm_position);
    binio::put_u32(out, static_cast<uint32_t>(s.trunk_features.numel()));
    for (double d : s.trunk_features.data) binio::put_f64(out, d);
  }
}

inline Observation unpack_observation(binio::Reader& r) {
  Observation o;
  o.effector_uv.u = r.f64();
  o.effector_uv.v = r.f64();
  for (auto& s : o.slots) {
    s.uv.u = r.f64();
    s.uv.v = r.f64();
    for (double& d : s.descriptor) d = r.f64();
    s.present = r.f64();
  }
  return o;
}

inline Trajectory unpack_trajectory(binio::Reader& r, int horizon) {
  Trajectory t;
  t.seed = r.u64();
  t.source = static_cast<ActionSource>(r.u32());
  const uint32_t n_objects = r.u32();
  t.scene.target_index = static_cast<int>(r.u32());
  t.slot_perm.resize(kMaxObjects);
  for (int i = 0; i < kMaxObjects; ++i) t.slot_perm[static_cast<size_t>(i)] = static_cast<int>(r.u32());
  t.slot_perm.resize(n_objects);
  t.scene.table_z = r.f64();
  t.scene.workspace.min = get_vec3(r);
  t.scene.workspace.max = get_vec3(r);
  for (int i = 0; i < kMaxObjects; ++i) {
    SceneObject o;
    o.position = get_vec3(r);
    for (double& d : o.descriptor) d = r.f64();
    if (i < static_cast<int>(n_objects)) t.scene.objects.push_back(o);
  }
  for (double& d : t.camera.rotation) d = r.f64();
  t.camera.position = get_vec3(r);
  t.camera.focal = r.f64();
  for (double& d : t.query.descriptor) d = r.f64();
  t.arm_init = get_vec3(r);
  t.arm_final = get_vec3(r);
  for (int s = 0; s < horizon; ++s) {
    TrajectoryStep step;
    step.observation = unpack_observation(r);
    step.executed.direction = get_vec3(r);
    step.expert_label.direction = get_vec3(r);
    step.reward = r.f64();
    step.arm_position = get_vec3(r);
    const uint32_t trunk_n = r.u32();
    step.trunk_features = Tensor({static_cast<int64_t>(trunk_n)});
    r.f64_into(step.trunk_features.data.data(), trunk_n);
    t.steps.push_back(std::move(step));
  }
  return t;
}

}  // namespace detail

inline constexpr uint32_t kDatasetVersion = 1;

inline std::string serialize_dataset(const std::vector<Trajectory>& trajectories, int horizon,
                                     uint64_t master_seed, const std::string& config_json) {
  std::string body;
  for (const auto& t : trajectories) {
    if (t.horizon() != horizon) throw StructuralError("trajectory horizon mismatch in dataset");
    detail::pack_trajectory(body, t);
  }
  std::string out;
  out.append("SRVD");
  binio::put_u32(out, kDatasetVersion);
  binio::put_u32(out, static_cast<uint32_t>(horizon));
  binio::put_u32(out, static_cast<uint32_t>(kDescriptorDim));
  binio::put_u64(out, trajectories.size());
  binio::put_u64(out, master_seed);
  binio::put_u64(out, config_json.size());
  out.append(config_json);
  binio::put_u64(out, fnv1a64(body.data(), body.size()));
  out.append(body);
  return out;
}

struct DatasetHeader {
  int horizon = 0;
  int descriptor_dim = 0;
  uint64_t n_episodes = 0;
  uint64_t master_seed = 0;
  std::string config_json;
  uint64_t body_hash = 0;
};

inline std::vector<Trajectory> deserialize_dataset(const std::string& bytes,
                                                   DatasetHeader* header_out = nullptr) {
  binio::Reader r(bytes);
  if (r.bytes(4) != "SRVD") throw StructuralError("bad dataset magic");
  if (r.u32() != kDatasetVersion) throw StructuralError("unsupported dataset version");
  DatasetHeader h;
  h.horizon = static_cast<int>(r.u32());
  h.descriptor_dim = static_cast<int>(r.u32());
  if (h.descriptor_dim != kDescriptorDim) throw StructuralError("descriptor dim mismatch");
  h.n_episodes = r.u64();
  h.master_seed = r.u64();
  const uint64_t cfg_len = r.u64();
  h.config_json = r.bytes(cfg_len);
  h.body_hash = r.u64();
  const uint64_t actual = fnv1a64(bytes.data() + r.pos(), bytes.size() - r.pos());
  if (actual != h.body_hash) throw StructuralError("dataset payload hash mismatch");
  std::vector<Trajectory> out;
  out.reserve(h.n_episodes);
  for (uint64_t i = 0; i < h.n_episodes; ++i) out.push_back(detail::unpack_trajectory(r, h.horizon));
  if (header_out) *header_out = h;
  return out;
}

inline void write_dataset_file(const std::string& path, const std::vector<Trajectory>& trajectories,
                               int horizon, uint64_t master_seed, const std::string& config_json) {
  binio::write_file(path, serialize_dataset(trajectories, horizon, master_seed, config_json));
}

inline std::vector<Trajectory> read_dataset_file(const std::string& path,
                                                 DatasetHeader* header_out = nullptr) {
  return deserialize_dataset(binio::read_file(path), header_out);
}

}  // namespace srvo
