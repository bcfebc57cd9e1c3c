#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "srvo/nn.hpp"
#include "srvo/params.hpp"
#include "srvo/scene.hpp"
#include "srvo/trajectory.hpp"

namespace srvo {

enum class Variant { RECURRENT, REACTIVE };

inline const char* variant_name(Variant v) {
  return v == Variant::RECURRENT ? "recurrent" : "reactive";
}

// Desk-scale widths; topology is fixed, widths are configurable.
struct ModelConfig {
  int64_t obs_width = 64;
  int64_t query_width = 32;
  int64_t action_embed = 64;
  int64_t lstm_units = 64;  // also the reactive trunk width
  int64_t qhead_width = 64;

  int64_t obs_in() const { return Observation::kVectorDim; }
  int64_t query_in() const { return kDescriptorDim; }
  int64_t core_in() const { return obs_width + query_width + action_embed; }
  int64_t trunk_dim() const { return lstm_units; }
  static constexpr int64_t kLocCells = 64;  // 8x8 grid
};

struct RecurrentState {
  Tensor h;
  Tensor c;

  static RecurrentState zeros(int64_t units) {
    return {Tensor({units}), Tensor({units})};
  }
};

struct PolicyOutput {
  Tensor action_mean;  // 3, raw (normalized at execution time)
  Tensor trunk;        // input to the Q head
  Tensor loc_logits;   // 8x8 grid logits
};

// Parameter names grouped by prefix. Everything under "enc_" counts as the
// visual stack and is the only part touched by domain adaptation.
inline ParamStore make_policy_params(const ModelConfig& cfg, Variant variant, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9A4A35ULL));
  ParamStore p;
  // biases share the uniform(-s, s) init; exact zeros would park the first
  // step's ReLUs on the kink (a_0 is the zero vector by contract)
  auto init_bias = [&](int64_t out, int64_t in) {
    Tensor b({out});
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : b.data) v = rng.uniform(-s, s);
    return b;
  };
  auto dense = [&](const std::string& name, int64_t out, int64_t in) {
    p.add(name + ".w", init_dense_weight(out, in, rng));
    p.add(name + ".b", init_bias(out, in));
  };
  dense("enc_obs.l1", cfg.obs_width, cfg.obs_in());
  dense("enc_obs.l2", cfg.obs_width, cfg.obs_width);
  dense("enc_query.l1", cfg.query_width, cfg.query_in());
  dense("enc_query.l2", cfg.query_width, cfg.query_width);
  // query-conditioned localization needs a nonlinear fusion layer: matching
  // the query against per-slot descriptors is not linearly expressible
  dense("enc_loc.l1", cfg.obs_width, cfg.obs_width + cfg.query_width);
  dense("enc_loc.l2", ModelConfig::kLocCells, cfg.obs_width);
  dense("embed_act", cfg.action_embed, 3);
  if (variant == Variant::RECURRENT) {
    p.add("lstm.w", init_dense_weight(4 * cfg.lstm_units, cfg.core_in() + cfg.lstm_units, rng));
    Tensor b = init_bias(4 * cfg.lstm_units, cfg.core_in() + cfg.lstm_units);
    for (int64_t k = 0; k < cfg.lstm_units; ++k) b.data[static_cast<size_t>(cfg.lstm_units + k)] += 1.0;
    p.add("lstm.b", std::move(b));  // forget-gate bias starts near +1
  } else {
    dense("ff.l1", cfg.lstm_units, cfg.core_in());
    dense("ff.l2", cfg.lstm_units, cfg.lstm_units);
  }
  dense("act_head", 3, cfg.trunk_dim());
  dense("qhead.embed", cfg.action_embed, 3);
  dense("qhead.l1", cfg.qhead_width, cfg.trunk_dim() + cfg.action_embed);
  dense("qhead.l2", cfg.qhead_width, cfg.qhead_width);
  dense("qhead.out", 1, cfg.qhead_width);
  return p;
}

inline Variant detect_variant(const ParamStore& p) {
  return p.has("lstm.w") ? Variant::RECURRENT : Variant::REACTIVE;
}

inline bool is_encoder_param(const std::string& name) { return name.rfind("enc_", 0) == 0; }

// ---------------------------------------------------------------------------
// Direct (inference) forward pass.
// ---------------------------------------------------------------------------

inline Tensor encode_obs(const ParamStore& p, const Tensor& obs_vec) {
  Tensor h = fast_dense(p.at("enc_obs.l1.w"), p.at("enc_obs.l1.b"), obs_vec, Act::RELU);
  return fast_dense(p.at("enc_obs.l2.w"), p.at("enc_obs.l2.b"), h, Act::RELU);
}

inline Tensor encode_query(const ParamStore& p, const Tensor& query_vec) {
  Tensor h = fast_dense(p.at("enc_query.l1.w"), p.at("enc_query.l1.b"), query_vec, Act::RELU);
  return fast_dense(p.at("enc_query.l2.w"), p.at("enc_query.l2.b"), h, Act::RELU);
}

// One step of the controller: returns the heads and the successor state.
// The input state is never modified.
inline std::pair<PolicyOutput, RecurrentState> policy_forward(
    const ParamStore& p, Variant variant, const Observation& obs, const Action& prev_action,
    const QueryDescriptor& query, const RecurrentState& state) {
  const Tensor obs_feat = encode_obs(p, obs.to_vector());
  const Tensor query_feat = encode_query(p, query.to_vector());
  const Tensor act_vec = vec({prev_action.direction.x, prev_action.direction.y, prev_action.direction.z});
  const Tensor act_emb = fast_dense(p.at("embed_act.w"), p.at("embed_act.b"), act_vec, Act::RELU);
  const Tensor core_in = fast_concat({&obs_feat, &query_feat, &act_emb});

  PolicyOutput out;
  RecurrentState next = state;
  if (variant == Variant::RECURRENT) {
    LstmState s = fast_lstm_cell(p.at("lstm.w"), p.at("lstm.b"), core_in, {state.h, state.c});
    out.trunk = s.h;
    next = {s.h, s.c};
  } else {
    Tensor h1 = fast_dense(p.at("ff.l1.w"), p.at("ff.l1.b"), core_in, Act::RELU);
    out.trunk = fast_dense(p.at("ff.l2.w"), p.at("ff.l2.b"), h1, Act::RELU);
  }
  out.action_mean = fast_dense(p.at("act_head.w"), p.at("act_head.b"), out.trunk, Act::IDENTITY);
  const Tensor loc_in = fast_concat({&obs_feat, &query_feat});
  const Tensor loc_h = fast_dense(p.at("enc_loc.l1.w"), p.at("enc_loc.l1.b"), loc_in, Act::RELU);
  out.loc_logits = fast_dense(p.at("enc_loc.l2.w"), p.at("enc_loc.l2.b"), loc_h, Act::IDENTITY);
  return {std::move(out), std::move(next)};
}

// Q head: embeds the candidate action and scores it against the trunk.
inline double q_value(const ParamStore& p, const Tensor& trunk, const Action& candidate) {
  const Tensor a = vec({candidate.direction.x, candidate.direction.y, candidate.direction.z});
  const Tensor emb = fast_dense(p.at("qhead.embed.w"), p.at("qhead.embed.b"), a, Act::RELU);
  const Tensor z = fast_concat({&trunk, &emb});
  const Tensor h1 = fast_dense(p.at("qhead.l1.w"), p.at("qhead.l1.b"), z, Act::RELU);
  const Tensor h2 = fast_dense(p.at("qhead.l2.w"), p.at("qhead.l2.b"), h1, Act::RELU);
  const Tensor o = fast_dense(p.at("qhead.out.w"), p.at("qhead.out.b"), h2, Act::IDENTITY);
  return o.data[0];
}

// Stateless ablation: the full pipeline with the recurrent core replaced by
// two ReLU layers.
inline PolicyOutput reactive_forward(const ParamStore& p, const Observation& obs,
                                     const Action& prev_action, const QueryDescriptor& query) {
  return policy_forward(p, Variant::REACTIVE, obs, prev_action, query, RecurrentState::zeros(0)).first;
}

// ---------------------------------------------------------------------------
// Tape (training) forward pass. Performs the same arithmetic as above so the
// two paths agree bitwise.
// ---------------------------------------------------------------------------

struct StepIds {
  int action_mean = -1;
  int trunk = -1;
  int loc_logits = -1;
  int h = -1;
  int c = -1;
};

inline int encode_query_tape(Tape& t, int query_id) {
  int h = t.dense(t.param("enc_query.l1.w"), t.param("enc_query.l1.b"), query_id, Act::RELU);
  return t.dense(t.param("enc_query.l2.w"), t.param("enc_query.l2.b"), h, Act::RELU);
}

inline int encode_obs_tape(Tape& t, int obs_id) {
  int h = t.dense(t.param("enc_obs.l1.w"), t.param("enc_obs.l1.b"), obs_id, Act::RELU);
  return t.dense(t.param("enc_obs.l2.w"), t.param("enc_obs.l2.b"), h, Act::RELU);
}

// query_feat_id is hoisted by the caller so an episode tape encodes the query
// once.
inline StepIds policy_step_tape(Tape& t, Variant variant, int obs_id, int prev_act_id,
                                int query_feat_id, int h_id, int c_id) {
  const int obs_feat = encode_obs_tape(t, obs_id);
  const int act_emb = t.dense(t.param("embed_act.w"), t.param("embed_act.b"), prev_act_id, Act::RELU);
  const int core_in = t.concat({obs_feat, query_feat_id, act_emb});
  StepIds out;
  if (variant == Variant::RECURRENT) {
    auto s = t.lstm_cell(t.param("lstm.w"), t.param("lstm.b"), core_in, h_id, c_id);
    out.h = s.h;
    out.c = s.c;
    out.trunk = s.h;
  } else {
    int h1 = t.dense(t.param("ff.l1.w"), t.param("ff.l1.b"), core_in, Act::RELU);
    out.trunk = t.dense(t.param("ff.l2.w"), t.param("ff.l2.b"), h1, Act::RELU);
    out.h = h_id;
    out.c = c_id;
  }
  out.action_mean = t.dense(t.param("act_head.w"), t.param("act_head.b"), out.trunk, Act::IDENTITY);
  const int loc_in = t.concat({obs_feat, query_feat_id});
  const int loc_h = t.dense(t.param("enc_loc.l1.w"), t.param("enc_loc.l1.b"), loc_in, Act::RELU);
  out.loc_logits = t.dense(t.param("enc_loc.l2.w"), t.param("enc_loc.l2.b"), loc_h, Act::IDENTITY);
  return out;
}

inline int q_value_tape(Tape& t, int trunk_id, int cand_id) {
  int emb = t.dense(t.param("qhead.embed.w"), t.param("qhead.embed.b"), cand_id, Act::RELU);
  int z = t.concat({trunk_id, emb});
  int h1 = t.dense(t.param("qhead.l1.w"), t.param("qhead.l1.b"), z, Act::RELU);
  int h2 = t.dense(t.param("qhead.l2.w"), t.param("qhead.l2.b"), h1, Act::RELU);
  return t.dense(t.param("qhead.out.w"), t.param("qhead.out.b"), h2, Act::IDENTITY);
}

// ---------------------------------------------------------------------------
// Episode rollout.
// ---------------------------------------------------------------------------

// Fixed affine remap of appearance descriptors; stands in for the appearance
// gap between the training domain and a deployment domain.
struct DescriptorShift {
  std::array<double, kDescriptorDim * kDescriptorDim> linear{};
  Descriptor offset{};

  Descriptor apply(const Descriptor& d) const {
    Descriptor out{};
    for (int i = 0; i < kDescriptorDim; ++i) {
      double acc = offset[static_cast<size_t>(i)];
      for (int j = 0; j < kDescriptorDim; ++j)
        acc += linear[static_cast<size_t>(i * kDescriptorDim + j)] * d[static_cast<size_t>(j)];
      out[static_cast<size_t>(i)] = acc;
    }
    return out;
  }
};

// Rotation * diag * rotation keeps the condition number at
// max(scale)/min(scale) <= 1.5/0.55 < 5.
inline DescriptorShift make_descriptor_shift(uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5817F7ULL));
  constexpr int k = kDescriptorDim;
  std::array<double, k * k> m{};
  for (int i = 0; i < k; ++i) m[static_cast<size_t>(i * k + i)] = rng.uniform(0.55, 1.5);
  auto rotate = [&](bool left) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < k - 1; ++i) {
        const int j = i + 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k - i - 1)));
        const double th = rng.uniform(0.0, 6.283185307179586);
        const double c = std::cos(th), s = std::sin(th);
        for (int r = 0; r < k; ++r) {
          if (left) {
            const double a = m[static_cast<size_t>(i * k + r)];
            const double b = m[static_cast<size_t>(j * k + r)];
            m[static_cast<size_t>(i * k + r)] = c * a - s * b;
            m[static_cast<size_t>(j * k + r)] = s * a + c * b;
          } else {
            const double a = m[static_cast<size_t>(r * k + i)];
            const double b = m[static_cast<size_t>(r * k + j)];
            m[static_cast<size_t>(r * k + i)] = c * a - s * b;
            m[static_cast<size_t>(r * k + j)] = s * a + c * b;
          }
        }
      }
    }
  };
  rotate(true);
  rotate(false);
  DescriptorShift shift;
  shift.linear = m;
  for (double& v : shift.offset) v = rng.uniform(-0.25, 0.25);
  return shift;
}

inline Observation apply_shift(const Observation& obs, const DescriptorShift* shift) {
  if (!shift) return obs;
  Observation out = obs;
  for (auto& slot : out.slots)
    if (slot.present > 0.5) slot.descriptor = shift->apply(slot.descriptor);
  return out;
}

inline Action normalized_or_zero(const Vec3& v) {
  const double n = v.norm();
  return n > 1e-8 ? Action{v * (1.0 / n)} : Action{};
}

struct UnrollOptions {
  double sigma_d = 0.0;                    // exploration noise for EXPERT_NOISY
  double policy_noise = 0.0;               // Gaussian exploration around the POLICY mean
  const DescriptorShift* shift = nullptr;  // applied to object + query descriptors
  bool full_workspace_start = false;       // ignore the reachable spawn band
  // optional POLICY-source action override (test-time search); the returned
  // action is still normalized before execution
  std::function<Action(const PolicyOutput&, int)> select;
};

// T steps of render -> forward -> select -> step. `params` may be null for
// policy-free sources (EXPERT, EXPERT_NOISY, RANDOM); trunk features are then
// recorded as zeros.
inline Trajectory unroll(const ParamStore* params, Variant variant, const EnvConfig& env,
                         const Scene& scene, const Camera& camera, int T, ActionSource source,
                         uint64_t seed, const UnrollOptions& opt = {}) {
  if (T < 1) throw StructuralError("unroll horizon must be >= 1");
  if (source == ActionSource::POLICY && params == nullptr)
    throw StructuralError("POLICY source requires parameters");

  Trajectory traj;
  traj.scene = scene;
  traj.camera = camera;
  traj.seed = seed;
  traj.source = source;

  Rng perm_rng(mix_seed(seed, 0x9E491ULL));
  std::vector<int> perm3 = perm_rng.permutation(kMaxObjects);
  traj.slot_perm.assign(perm3.begin(), perm3.begin() + static_cast<long>(scene.objects.size()));

  traj.query = make_query(env, scene, mix_seed(seed, 0x9EE41ULL));
  if (opt.shift) traj.query.descriptor = opt.shift->apply(traj.query.descriptor);

  ArmState arm{opt.full_workspace_start
                   ? sample_arm_start_anywhere(env, mix_seed(seed, 0x54A47ULL))
                   : sample_arm_start(env, scene, mix_seed(seed, 0x54A47ULL))};
  traj.arm_init = arm.effector_position;

  Rng noise_rng(mix_seed(seed, 0x4015EULL));
  const int64_t trunk_dim = params ? params->at("act_head.w").cols() : 0;
  RecurrentState state = RecurrentState::zeros(trunk_dim);
  Action prev_action;
  for (int t = 0; t < T; ++t) {
    TrajectoryStep step;
    step.arm_position = arm.effector_position;
    step.observation = apply_shift(render_observation(scene, arm, camera, traj.slot_perm), opt.shift);
    step.expert_label = expert_action(arm, scene, env.reach_radius);

    PolicyOutput out;
    if (params) {
      auto [o, next] = policy_forward(*params, variant, step.observation, prev_action, traj.query, state);
      out = std::move(o);
      state = std::move(next);
      step.trunk_features = out.trunk;
    } else {
      step.trunk_features = Tensor({trunk_dim});
    }

    switch (source) {
      case ActionSource::POLICY: {
        Vec3 dir = opt.select ? opt.select(out, t).direction
                              : Vec3{out.action_mean.data[0], out.action_mean.data[1],
                                     out.action_mean.data[2]};
        if (opt.policy_noise > 0.0)
          dir = dir + Vec3{noise_rng.normal(0.0, opt.policy_noise),
                           noise_rng.normal(0.0, opt.policy_noise),
                           noise_rng.normal(0.0, opt.policy_noise)};
        step.executed = normalized_or_zero(dir);
        break;
      }
      case ActionSource::EXPERT:
        step.executed = step.expert_label;
        break;
      case ActionSource::EXPERT_NOISY: {
        Vec3 noisy = step.expert_label.direction +
                     Vec3{noise_rng.normal(0.0, opt.sigma_d), noise_rng.normal(0.0, opt.sigma_d),
                          noise_rng.normal(0.0, opt.sigma_d)};
        step.executed = normalized_or_zero(noisy);
        break;
      }
      case ActionSource::RANDOM:
        step.executed = normalized_or_zero(
            {noise_rng.normal(), noise_rng.normal(), noise_rng.normal()});
        break;
    }

    arm = step_dynamics(arm, step.executed, env.velocity, env.workspace);
    step.reward = reward(arm, scene, env.reach_radius);
    prev_action = step.executed;
    traj.steps.push_back(std::move(step));
  }
  traj.arm_final = arm.effector_position;
  return traj;
}

}  // namespace srvo
