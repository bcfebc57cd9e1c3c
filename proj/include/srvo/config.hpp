#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "srvo/eval.hpp"
#include "srvo/policy.hpp"
#include "srvo/scene.hpp"
#include "srvo/training.hpp"

namespace srvo {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

using json = nlohmann::json;

struct PathsConfig {
  std::string dataset = "data/demos.srvd";
  std::string checkpoint_dir = "ckpt";
  std::string report_dir = "reports";
};

struct TrainingBlock {
  int episodes = 12000;
  double demo_noise = 0.7;
  double gamma = 0.9;
  int mc_unrolls = 3;
  double mc_noise = 0.05;
  double w_supervised = 1.0;
  double w_value = 0.5;
  double w_localization = 2.0;
  int batch_size = 16;
  int value_slots = 4;
  int64_t steps = 8500;
  size_t buffer_capacity = 50000;
  double lr = 1e-3;
  double lr_decay = 0.98;
  int64_t lr_decay_steps = 1000;
  int horizon = 10;
  int64_t checkpoint_every = 1000;
  int dagger_episodes = 2000;
  int64_t dagger_steps = 4000;
  int dagger_iters = 2;
  int64_t adapt_steps = 600;
  int adapt_batch = 16;
  double adapt_lr = 1e-3;
  int adapt_labels = 76;
  uint64_t shift_seed = 777;
};

struct EvalBlock {
  double cem_sigma = 0.05;
  int cem_candidates = 150;
  int cem_top_k = 5;
  int n_trials = 300;
  int horizon = 10;
};

struct RunConfig {
  uint64_t seed = 42;
  int threads = 2;
  EnvConfig env;
  ModelConfig model;
  TrainingBlock training;
  EvalBlock eval;
  PathsConfig paths;

  TrainSettings train_settings() const {
    TrainSettings s;
    s.gamma = training.gamma;
    s.mc_unrolls = training.mc_unrolls;
    s.mc_noise = training.mc_noise;
    s.weights = {training.w_supervised, training.w_value, training.w_localization};
    s.batch_size = training.batch_size;
    s.value_slots = training.value_slots;
    s.steps = training.steps;
    s.adam = {training.lr, 0.9, 0.999, 1e-8, training.lr_decay, training.lr_decay_steps};
    s.threads = threads;
    s.checkpoint_every = training.checkpoint_every;
    s.seed = seed;
    return s;
  }

  CemConfig cem_config() const { return {eval.cem_sigma, eval.cem_candidates, eval.cem_top_k}; }
};

namespace detail {

inline void reject_unknown(const json& j, const std::vector<std::string>& known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw UsageError("unknown config key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void maybe_vec3(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) {
    auto a = j.at(key).get<std::vector<double>>();
    if (a.size() != 3) throw UsageError(std::string("expected 3 components for ") + key);
    out = {a[0], a[1], a[2]};
  }
}

}  // namespace detail

inline json env_to_json(const EnvConfig& e) {
  return json{{"velocity", e.velocity},
              {"reach_radius", e.reach_radius},
              {"table_z", e.table_z},
              {"workspace_min", {e.workspace.min.x, e.workspace.min.y, e.workspace.min.z}},
              {"workspace_max", {e.workspace.max.x, e.workspace.max.y, e.workspace.max.z}},
              {"min_object_gap", e.min_object_gap},
              {"object_margin", e.object_margin},
              {"descriptor_dim", kDescriptorDim},
              {"descriptor_noise", e.descriptor_noise},
              {"query_noise", e.query_noise},
              {"spawn_min_dist", e.spawn_min_dist},
              {"spawn_max_dist", e.spawn_max_dist},
              {"descriptor_seed", e.descriptor_seed},
              {"pool_seed", e.pool_seed}};
}

inline json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["env"] = env_to_json(c.env);
  j["model"] = {{"obs_width", c.model.obs_width},
                {"query_width", c.model.query_width},
                {"action_embed", c.model.action_embed},
                {"lstm_units", c.model.lstm_units},
                {"qhead_width", c.model.qhead_width}};
  j["training"] = {{"episodes", c.training.episodes},
                   {"demo_noise", c.training.demo_noise},
                   {"gamma", c.training.gamma},
                   {"mc_unrolls", c.training.mc_unrolls},
                   {"mc_noise", c.training.mc_noise},
                   {"w_supervised", c.training.w_supervised},
                   {"w_value", c.training.w_value},
                   {"w_localization", c.training.w_localization},
                   {"batch_size", c.training.batch_size},
                   {"value_slots", c.training.value_slots},
                   {"steps", c.training.steps},
                   {"buffer_capacity", c.training.buffer_capacity},
                   {"lr", c.training.lr},
                   {"lr_decay", c.training.lr_decay},
                   {"lr_decay_steps", c.training.lr_decay_steps},
                   {"horizon", c.training.horizon},
                   {"checkpoint_every", c.training.checkpoint_every},
                   {"dagger_episodes", c.training.dagger_episodes},
                   {"dagger_steps", c.training.dagger_steps},
                   {"dagger_iters", c.training.dagger_iters},
                   {"adapt_steps", c.training.adapt_steps},
                   {"adapt_batch", c.training.adapt_batch},
                   {"adapt_lr", c.training.adapt_lr},
                   {"adapt_labels", c.training.adapt_labels},
                   {"shift_seed", c.training.shift_seed}};
  j["eval"] = {{"cem_sigma", c.eval.cem_sigma},
               {"cem_candidates", c.eval.cem_candidates},
               {"cem_top_k", c.eval.cem_top_k},
               {"n_trials", c.eval.n_trials},
               {"horizon", c.eval.horizon}};
  j["paths"] = {{"dataset", c.paths.dataset},
                {"checkpoint_dir", c.paths.checkpoint_dir},
                {"report_dir", c.paths.report_dir}};
  return j;
}

inline std::string resolved_config_json(const RunConfig& c) { return config_to_json(c).dump(); }

inline void validate_config(const RunConfig& c) {
  if (c.env.velocity <= 0.0) throw UsageError("env.velocity must be > 0");
  if (c.env.reach_radius <= 0.0) throw UsageError("env.reach_radius must be > 0");
  if (c.training.gamma < 0.0 || c.training.gamma >= 1.0)
    throw UsageError("training.gamma must be in [0, 1)");
  if (c.training.mc_unrolls < 1) throw UsageError("training.mc_unrolls must be >= 1");
  if (c.training.w_supervised < 0 || c.training.w_value < 0 || c.training.w_localization < 0)
    throw UsageError("loss weights must be >= 0");
  if (c.training.batch_size < 1) throw UsageError("training.batch_size must be >= 1");
  if (c.training.value_slots < 0) throw UsageError("training.value_slots must be >= 0");
  if (c.training.horizon < 1 || c.eval.horizon < 1) throw UsageError("horizon must be >= 1");
  if (c.eval.cem_top_k < 1 || c.eval.cem_top_k > c.eval.cem_candidates)
    throw UsageError("eval.cem_top_k must be in [1, cem_candidates]");
  if (c.eval.cem_sigma < 0.0) throw UsageError("eval.cem_sigma must be >= 0");
  if (c.eval.n_trials < 1) throw UsageError("eval.n_trials must be >= 1");
  if (c.threads < 0) throw UsageError("threads must be >= 0");
}

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  detail::reject_unknown(j, {"seed", "threads", "env", "model", "training", "eval", "paths"},
                         "top level");
  detail::maybe(j, "seed", c.seed);
  detail::maybe(j, "threads", c.threads);
  if (j.contains("env")) {
    const json& e = j.at("env");
    detail::reject_unknown(e,
                           {"velocity", "reach_radius", "table_z", "workspace_min", "workspace_max",
                            "min_object_gap", "object_margin", "descriptor_dim", "descriptor_noise",
                            "query_noise", "spawn_min_dist", "spawn_max_dist", "descriptor_seed",
                            "pool_seed"},
                           "env");
    detail::maybe(e, "velocity", c.env.velocity);
    detail::maybe(e, "reach_radius", c.env.reach_radius);
    detail::maybe(e, "table_z", c.env.table_z);
    detail::maybe_vec3(e, "workspace_min", c.env.workspace.min);
    detail::maybe_vec3(e, "workspace_max", c.env.workspace.max);
    detail::maybe(e, "min_object_gap", c.env.min_object_gap);
    detail::maybe(e, "object_margin", c.env.object_margin);
    detail::maybe(e, "descriptor_noise", c.env.descriptor_noise);
    detail::maybe(e, "query_noise", c.env.query_noise);
    detail::maybe(e, "spawn_min_dist", c.env.spawn_min_dist);
    detail::maybe(e, "spawn_max_dist", c.env.spawn_max_dist);
    detail::maybe(e, "descriptor_seed", c.env.descriptor_seed);
    detail::maybe(e, "pool_seed", c.env.pool_seed);
    if (e.contains("descriptor_dim") && e.at("descriptor_dim").get<int>() != kDescriptorDim)
      throw UsageError("env.descriptor_dim is fixed at 8 in this build");
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    detail::reject_unknown(m, {"obs_width", "query_width", "action_embed", "lstm_units", "qhead_width"},
                           "model");
    detail::maybe(m, "obs_width", c.model.obs_width);
    detail::maybe(m, "query_width", c.model.query_width);
    detail::maybe(m, "action_embed", c.model.action_embed);
    detail::maybe(m, "lstm_units", c.model.lstm_units);
    detail::maybe(m, "qhead_width", c.model.qhead_width);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    detail::reject_unknown(
        t, {"episodes", "demo_noise", "gamma", "mc_unrolls", "mc_noise", "w_supervised", "w_value",
            "w_localization", "batch_size", "value_slots", "steps", "buffer_capacity", "lr", "lr_decay",
            "lr_decay_steps", "horizon", "checkpoint_every", "dagger_episodes", "dagger_steps", "dagger_iters",
            "adapt_steps", "adapt_batch", "adapt_lr", "adapt_labels", "shift_seed"},
        "training");
    detail::maybe(t, "episodes", c.training.episodes);
    detail::maybe(t, "demo_noise", c.training.demo_noise);
    detail::maybe(t, "gamma", c.training.gamma);
    detail::maybe(t, "mc_unrolls", c.training.mc_unrolls);
    detail::maybe(t, "mc_noise", c.training.mc_noise);
    detail::maybe(t, "w_supervised", c.training.w_supervised);
    detail::maybe(t, "w_value", c.training.w_value);
    detail::maybe(t, "w_localization", c.training.w_localization);
    detail::maybe(t, "batch_size", c.training.batch_size);
    detail::maybe(t, "value_slots", c.training.value_slots);
    detail::maybe(t, "steps", c.training.steps);
    detail::maybe(t, "buffer_capacity", c.training.buffer_capacity);
    detail::maybe(t, "lr", c.training.lr);
    detail::maybe(t, "lr_decay", c.training.lr_decay);
    detail::maybe(t, "lr_decay_steps", c.training.lr_decay_steps);
    detail::maybe(t, "horizon", c.training.horizon);
    detail::maybe(t, "checkpoint_every", c.training.checkpoint_every);
    detail::maybe(t, "dagger_episodes", c.training.dagger_episodes);
    detail::maybe(t, "dagger_steps", c.training.dagger_steps);
    detail::maybe(t, "dagger_iters", c.training.dagger_iters);
    detail::maybe(t, "adapt_steps", c.training.adapt_steps);
    detail::maybe(t, "adapt_batch", c.training.adapt_batch);
    detail::maybe(t, "adapt_lr", c.training.adapt_lr);
    detail::maybe(t, "adapt_labels", c.training.adapt_labels);
    detail::maybe(t, "shift_seed", c.training.shift_seed);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::reject_unknown(e, {"cem_sigma", "cem_candidates", "cem_top_k", "n_trials", "horizon"},
                           "eval");
    detail::maybe(e, "cem_sigma", c.eval.cem_sigma);
    detail::maybe(e, "cem_candidates", c.eval.cem_candidates);
    detail::maybe(e, "cem_top_k", c.eval.cem_top_k);
    detail::maybe(e, "n_trials", c.eval.n_trials);
    detail::maybe(e, "horizon", c.eval.horizon);
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    detail::reject_unknown(p, {"dataset", "checkpoint_dir", "report_dir"}, "paths");
    detail::maybe(p, "dataset", c.paths.dataset);
    detail::maybe(p, "checkpoint_dir", c.paths.checkpoint_dir);
    detail::maybe(p, "report_dir", c.paths.report_dir);
  }
  validate_config(c);
  return c;
}

inline RunConfig config_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Scene / camera pool JSON (versioned, arrays row-major)
// ---------------------------------------------------------------------------

inline json camera_to_json(const Camera& cam) {
  json j;
  j["rotation"] = cam.rotation;
  j["position"] = {cam.position.x, cam.position.y, cam.position.z};
  j["focal"] = cam.focal;
  return j;
}

inline Camera camera_from_json(const json& j) {
  Camera cam;
  auto rot = j.at("rotation").get<std::vector<double>>();
  if (rot.size() != 9) throw UsageError("camera rotation must have 9 entries");
  for (size_t i = 0; i < 9; ++i) cam.rotation[i] = rot[i];
  auto pos = j.at("position").get<std::vector<double>>();
  if (pos.size() != 3) throw UsageError("camera position must have 3 entries");
  cam.position = {pos[0], pos[1], pos[2]};
  cam.focal = j.at("focal").get<double>();
  return cam;
}

inline json scene_to_json(const Scene& s) {
  json objs = json::array();
  for (const auto& o : s.objects) {
    json jo;
    jo["position"] = {o.position.x, o.position.y, o.position.z};
    jo["descriptor"] = o.descriptor;
    objs.push_back(jo);
  }
  json j;
  j["objects"] = objs;
  j["target_index"] = s.target_index;
  j["table_z"] = s.table_z;
  j["workspace"] = {{"min", {s.workspace.min.x, s.workspace.min.y, s.workspace.min.z}},
                    {"max", {s.workspace.max.x, s.workspace.max.y, s.workspace.max.z}}};
  return j;
}

inline Scene scene_from_json(const json& j) {
  Scene s;
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    auto pos = jo.at("position").get<std::vector<double>>();
    o.position = {pos[0], pos[1], pos[2]};
    auto d = jo.at("descriptor").get<std::vector<double>>();
    if (d.size() != kDescriptorDim) throw UsageError("bad descriptor length");
    for (size_t i = 0; i < d.size(); ++i) o.descriptor[i] = d[i];
    s.objects.push_back(o);
  }
  s.target_index = j.at("target_index").get<int>();
  s.table_z = j.at("table_z").get<double>();
  auto mn = j.at("workspace").at("min").get<std::vector<double>>();
  auto mx = j.at("workspace").at("max").get<std::vector<double>>();
  s.workspace.min = {mn[0], mn[1], mn[2]};
  s.workspace.max = {mx[0], mx[1], mx[2]};
  return s;
}

inline json pools_to_json(const CameraPools& pools) {
  json j;
  j["version"] = 1;
  j["train"] = json::array();
  j["heldout"] = json::array();
  for (const auto& c : pools.train) j["train"].push_back(camera_to_json(c));
  for (const auto& c : pools.heldout) j["heldout"].push_back(camera_to_json(c));
  return j;
}

inline CameraPools pools_from_json(const json& j) {
  if (j.at("version").get<int>() != 1) throw UsageError("unsupported pools version");
  CameraPools pools;
  for (const auto& c : j.at("train")) pools.train.push_back(camera_from_json(c));
  for (const auto& c : j.at("heldout")) pools.heldout.push_back(camera_from_json(c));
  return pools;
}

}  // namespace srvo
