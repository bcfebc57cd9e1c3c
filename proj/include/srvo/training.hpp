#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "srvo/nn.hpp"
#include "srvo/policy.hpp"
#include "srvo/scene.hpp"
#include "srvo/threading.hpp"
#include "srvo/trajectory.hpp"

namespace srvo {

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Demonstration synthesis
// ---------------------------------------------------------------------------

// Noisy-expert episodes: executed = normalize(expert + eps), eps ~ N(0, s^2 I);
// the stored label stays the clean expert direction at every visited state.
// Start positions mix two regimes: half the episodes start anywhere in the
// workspace (label direction varies with effector position across the box),
// half start close to the target (endgame states, where depth along the view
// ray is only resolvable from motion).
inline std::vector<Trajectory> generate_demonstrations(const EnvConfig& env, int n_episodes,
                                                       double sigma_d, uint64_t seed, int horizon,
                                                       int threads = 1) {
  std::vector<Trajectory> out(static_cast<size_t>(n_episodes));
  parallel_for(n_episodes, threads, [&](int64_t i) {
    const uint64_t ep_seed = mix_seed(seed, 0xDE33ULL, static_cast<uint64_t>(i));
    Rng rng(mix_seed(ep_seed, 0x031ULL));
    const int n_objects = 1 + static_cast<int>(rng.uniform_int(kMaxObjects));
    const Scene scene = sample_scene(env, mix_seed(ep_seed, 0x5CULL), n_objects, DescriptorDomain::SEEN);
    const Camera camera = sample_camera(env, mix_seed(ep_seed, 0xCAULL), ViewpointPool::TRAIN);
    UnrollOptions opt;
    opt.sigma_d = sigma_d;
    opt.full_workspace_start = true;
    if (i % 2 == 1) {
      // near-target regime
      EnvConfig near_env = env;
      near_env.spawn_min_dist = 0.08;
      near_env.spawn_max_dist = 0.35;
      opt.full_workspace_start = false;
      out[static_cast<size_t>(i)] = unroll(nullptr, Variant::RECURRENT, near_env, scene, camera,
                                           horizon, ActionSource::EXPERT_NOISY, ep_seed, opt);
      return;
    }
    out[static_cast<size_t>(i)] = unroll(nullptr, Variant::RECURRENT, env, scene, camera, horizon,
                                         ActionSource::EXPERT_NOISY, ep_seed, opt);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Auxiliary localization target
// ---------------------------------------------------------------------------

struct GridLabel {
  int cell = 0;
  bool clamped = false;  // target projected outside the [-1,1]^2 window
};

// Cell of the 8x8 image-plane grid containing the target's projection.
inline GridLabel grid_cell_label(const Camera& camera, const Scene& scene) {
  const Vec2 uv = project(camera, scene.target().position);
  auto to_index = [](double coord) {
    int idx = static_cast<int>(std::floor((coord + 1.0) / 2.0 * 8.0));
    if (idx < 0) idx = 0;
    if (idx > 7) idx = 7;
    return idx;
  };
  GridLabel label;
  label.clamped = uv.u < -1.0 || uv.u > 1.0 || uv.v < -1.0 || uv.v > 1.0;
  label.cell = to_index(uv.v) * 8 + to_index(uv.u);
  return label;
}

// ---------------------------------------------------------------------------
// Monte-Carlo Q targets
// ---------------------------------------------------------------------------

struct QTarget {
  int t = 0;          // 0-based step index
  Action candidate;   // the executed action at step t
  double value = 0.0; // r_t + mean over M rollouts of the discounted tail
};

// For each step t: take the stored a_t, then run M fresh policy rollouts of
// length T-t from the post-action state; target = r_t + mean_M sum gamma^i r.
// sigma_explore = 0 makes the continuation policy deterministic.
inline std::vector<QTarget> mc_q_targets(const ParamStore& params, Variant variant,
                                         const EnvConfig& env, const Trajectory& traj, double gamma,
                                         int M, double sigma_explore, uint64_t seed,
                                         const DescriptorShift* shift = nullptr) {
  if (M < 1) throw StructuralError("mc_q_targets requires M >= 1");
  const int T = traj.horizon();
  const int64_t units = params.at("act_head.w").cols();

  // Replay the recorded episode to recover the controller state after each
  // step.
  std::vector<RecurrentState> state_after(static_cast<size_t>(T + 1));
  state_after[0] = RecurrentState::zeros(units);
  {
    RecurrentState state = RecurrentState::zeros(units);
    Action prev;
    for (int t = 0; t < T; ++t) {
      auto [out, next] = policy_forward(params, variant, traj.steps[static_cast<size_t>(t)].observation,
                                        prev, traj.query, state);
      state = std::move(next);
      prev = traj.steps[static_cast<size_t>(t)].executed;
      state_after[static_cast<size_t>(t + 1)] = state;
    }
  }

  std::vector<QTarget> targets(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    QTarget qt;
    qt.t = t;
    qt.candidate = traj.steps[static_cast<size_t>(t)].executed;
    double tail_sum = 0.0;
    for (int m = 0; m < M; ++m) {
      Rng noise(mix_seed(seed, static_cast<uint64_t>(t), static_cast<uint64_t>(m)));
      ArmState arm{traj.arm_after(t)};
      RecurrentState state = state_after[static_cast<size_t>(t + 1)];
      Action prev = traj.steps[static_cast<size_t>(t)].executed;
      double ret = 0.0;
      double discount = 1.0;
      for (int tp = t + 1; tp < T; ++tp) {
        const Observation obs =
            apply_shift(render_observation(traj.scene, arm, traj.camera, traj.slot_perm), shift);
        auto [out, next] = policy_forward(params, variant, obs, prev, traj.query, state);
        state = std::move(next);
        Vec3 mean{out.action_mean.data[0], out.action_mean.data[1], out.action_mean.data[2]};
        if (sigma_explore > 0.0)
          mean = mean + Vec3{noise.normal(0.0, sigma_explore), noise.normal(0.0, sigma_explore),
                             noise.normal(0.0, sigma_explore)};
        const Action executed = normalized_or_zero(mean);
        arm = step_dynamics(arm, executed, env.velocity, env.workspace);
        discount *= gamma;
        ret += discount * reward(arm, traj.scene, env.reach_radius);
        prev = executed;
      }
      tail_sum += ret;
    }
    qt.value = traj.steps[static_cast<size_t>(t)].reward + tail_sum / M;
    targets[static_cast<size_t>(t)] = qt;
  }
  return targets;
}

// ---------------------------------------------------------------------------
// Episode losses (one tape per trajectory; gradients via BPTT)
// ---------------------------------------------------------------------------

struct LossWeights {
  double supervised = 1.0;
  double value = 0.5;
  double localization = 0.5;
};

struct LossTerms {
  double supervised = 0.0;
  double value = 0.0;
  double localization = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o) {
    supervised += o.supervised;
    value += o.value;
    localization += o.localization;
    total += o.total;
    return *this;
  }
};

// Teacher-forced episode graph: recorded observations and executed actions are
// fed back as inputs; the weighted sum of the three heads' losses is returned
// as a scalar node.
inline int trajectory_loss_tape(Tape& tape, Variant variant, const Trajectory& traj,
                                const std::vector<QTarget>* q_targets, const LossWeights& w,
                                LossTerms* terms_out = nullptr) {
  const int T = traj.horizon();
  const GridLabel loc = grid_cell_label(traj.camera, traj.scene);
  const int query_feat = encode_query_tape(tape, tape.input(traj.query.to_vector()));
  const int64_t units = tape.value(tape.param("act_head.w")).cols();
  int h = tape.input(Tensor({units}));
  int c = tape.input(Tensor({units}));

  int sup_loss = -1;
  int loc_loss = -1;
  int val_loss = -1;
  for (int t = 0; t < T; ++t) {
    const TrajectoryStep& step = traj.steps[static_cast<size_t>(t)];
    const Vec3 prev = t == 0 ? Vec3{} : traj.steps[static_cast<size_t>(t - 1)].executed.direction;
    const int obs_id = tape.input(step.observation.to_vector());
    const int prev_id = tape.input(vec({prev.x, prev.y, prev.z}));
    const StepIds ids = policy_step_tape(tape, variant, obs_id, prev_id, query_feat, h, c);
    h = ids.h;
    c = ids.c;

    const Vec3 lbl = step.expert_label.direction;
    const int sup_t = tape.sq_diff_sum(ids.action_mean, vec({lbl.x, lbl.y, lbl.z}));
    sup_loss = sup_loss < 0 ? sup_t : tape.add(sup_loss, sup_t);

    const int loc_t = tape.softmax_xent(ids.loc_logits, loc.cell);
    loc_loss = loc_loss < 0 ? loc_t : tape.add(loc_loss, loc_t);

    if (q_targets) {
      const QTarget& qt = (*q_targets)[static_cast<size_t>(t)];
      const Vec3 cand = qt.candidate.direction;
      const int cand_id = tape.input(vec({cand.x, cand.y, cand.z}));
      const int q_id = q_value_tape(tape, ids.trunk, cand_id);
      const int val_t = tape.sq_diff_sum(q_id, scalar(qt.value));
      val_loss = val_loss < 0 ? val_t : tape.add(val_loss, val_t);
    }
  }

  if (terms_out) {
    terms_out->supervised = tape.value(sup_loss).data[0];
    terms_out->localization = tape.value(loc_loss).data[0];
    terms_out->value = val_loss >= 0 ? tape.value(val_loss).data[0] : 0.0;
  }

  int total = tape.scale(sup_loss, w.supervised);
  total = tape.add(total, tape.scale(loc_loss, w.localization));
  if (val_loss >= 0) total = tape.add(total, tape.scale(val_loss, w.value));
  if (terms_out) terms_out->total = tape.value(total).data[0];
  return total;
}

// Sum over steps of |action_mean - expert_label|^2 with gradients.
inline std::pair<double, GradMap> supervised_loss(const ParamStore& params, Variant variant,
                                                  const Trajectory& traj) {
  Tape tape(params);
  LossWeights w;
  w.value = 0.0;
  w.localization = 0.0;  // weights (1,0,0): total == supervised term
  LossTerms terms;
  const int total = trajectory_loss_tape(tape, variant, traj, nullptr, w, &terms);
  GradMap grads = tape.backward(total);
  return {terms.supervised, std::move(grads)};
}

// Sum over steps of (q(trunk_t, a_t) - target_t)^2 with gradients into the Q
// head and the trunk.
inline std::pair<double, GradMap> value_loss(const ParamStore& params, Variant variant,
                                             const Trajectory& traj,
                                             const std::vector<QTarget>& targets) {
  Tape tape(params);
  LossWeights w;
  w.supervised = 0.0;
  w.localization = 0.0;
  w.value = 1.0;
  LossTerms terms;
  const int total = trajectory_loss_tape(tape, variant, traj, &targets, w, &terms);
  GradMap grads = tape.backward(total);
  return {terms.value, std::move(grads)};
}

// ---------------------------------------------------------------------------
// DAgger: on-policy unrolls relabeled with the expert at every visited state
// ---------------------------------------------------------------------------

// On-policy collection follows the stochastic exploration policy (Gaussian
// around the model mean); labels are the clean expert at every visited state.
inline std::vector<Trajectory> dagger_iteration(const ParamStore& params, Variant variant,
                                                const EnvConfig& env, int n_episodes, int horizon,
                                                uint64_t seed, int threads = 1,
                                                double exploration_noise = 0.3) {
  std::vector<Trajectory> out(static_cast<size_t>(n_episodes));
  parallel_for(n_episodes, threads, [&](int64_t i) {
    const uint64_t ep_seed = mix_seed(seed, 0xDA66E4ULL, static_cast<uint64_t>(i));
    Rng rng(mix_seed(ep_seed, 0x031ULL));
    const int n_objects = 1 + static_cast<int>(rng.uniform_int(kMaxObjects));
    const Scene scene = sample_scene(env, mix_seed(ep_seed, 0x5CULL), n_objects, DescriptorDomain::SEEN);
    const Camera camera = sample_camera(env, mix_seed(ep_seed, 0xCAULL), ViewpointPool::TRAIN);
    UnrollOptions opt;
    opt.policy_noise = exploration_noise;
    out[static_cast<size_t>(i)] =
        unroll(&params, variant, env, scene, camera, horizon, ActionSource::POLICY, ep_seed, opt);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainSettings {
  double gamma = 0.9;
  int mc_unrolls = 5;
  double mc_noise = 0.05;  // exploration noise in MC target rollouts
  LossWeights weights;
  int batch_size = 8;
  int value_slots = 0;  // batch slots carrying the value term per step; 0 = all
  int64_t steps = 4000;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 0.98, 1000};
  int threads = 1;
  int64_t checkpoint_every = 1000;
  uint64_t seed = 0;
  double divergence_limit = 1e6;
};

struct CurvePoint {
  int64_t step = 0;
  double supervised = 0.0;
  double value = 0.0;
  double localization = 0.0;
  double total = 0.0;
};

using CheckpointFn = std::function<void(int64_t step)>;

// Minibatch Adam over the weighted three-part objective. Q targets are
// recomputed from the current parameters for every drawn trajectory, so a
// resumed run reproduces the original loss sequence exactly.
inline std::vector<CurvePoint> train(ParamStore& params, Variant variant, const ReplayBuffer& buffer,
                                     const TrainSettings& cfg, const EnvConfig& env, AdamState& opt,
                                     const CheckpointFn& checkpoint_cb = nullptr,
                                     int64_t start_step = 0) {
  if (buffer.size() == 0) throw StructuralError("training buffer is empty");
  std::vector<CurvePoint> curves;
  // the value term may ride on a subset of batch slots (stochastic term with
  // the weight rescaled so the expectation is unchanged)
  const int value_slots = cfg.weights.value > 0.0
                              ? (cfg.value_slots > 0 ? std::min(cfg.value_slots, cfg.batch_size)
                                                     : cfg.batch_size)
                              : 0;
  for (int64_t s = start_step; s < cfg.steps; ++s) {
    Rng batch_rng(mix_seed(cfg.seed, 0xBA7CULL, static_cast<uint64_t>(s)));
    std::vector<size_t> batch(static_cast<size_t>(cfg.batch_size));
    for (auto& b : batch) b = static_cast<size_t>(batch_rng.uniform_int(buffer.size()));

    std::vector<GradMap> grads(batch.size());
    std::vector<LossTerms> terms(batch.size());
    parallel_for(static_cast<int64_t>(batch.size()), cfg.threads, [&](int64_t slot) {
      const Trajectory& traj = buffer.at(batch[static_cast<size_t>(slot)]);
      const bool use_value = slot < value_slots;
      std::vector<QTarget> targets;
      if (use_value)
        targets = mc_q_targets(params, variant, env, traj, cfg.gamma, cfg.mc_unrolls, cfg.mc_noise,
                               mix_seed(cfg.seed, static_cast<uint64_t>(s), static_cast<uint64_t>(slot)));
      LossWeights w = cfg.weights;
      if (use_value) w.value = cfg.weights.value * cfg.batch_size / value_slots;
      Tape tape(params);
      const int total = trajectory_loss_tape(tape, variant, traj, use_value ? &targets : nullptr,
                                             w, &terms[static_cast<size_t>(slot)]);
      grads[static_cast<size_t>(slot)] = tape.backward(total);
    });

    // fixed-order reduction, then mean over the batch; slots without the
    // value term have no Q-head entries, which count as zero
    GradMap mean_grads = std::move(grads[0]);
    for (size_t i = 1; i < grads.size(); ++i)
      for (auto& [name, g] : grads[i]) {
        auto it = mean_grads.find(name);
        if (it == mean_grads.end()) {
          mean_grads.emplace(name, std::move(g));
        } else {
          for (size_t j = 0; j < g.data.size(); ++j) it->second.data[j] += g.data[j];
        }
      }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& [name, g] : mean_grads)
      for (double& v : g.data) v *= inv;

    CurvePoint pt;
    pt.step = s;
    for (const auto& t : terms) {
      pt.supervised += t.supervised * inv;
      if (value_slots > 0) pt.value += t.value / value_slots;
      pt.localization += t.localization * inv;
      pt.total += t.total * inv;
    }
    if (!std::isfinite(pt.total) || pt.total > cfg.divergence_limit)
      throw DivergenceError("training diverged at step " + std::to_string(s) +
                            " (total=" + std::to_string(pt.total) + ")");
    curves.push_back(pt);

    adam_step(params, mean_grads, opt);
    if (checkpoint_cb && cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0)
      checkpoint_cb(s + 1);
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Encoder-only domain adaptation
// ---------------------------------------------------------------------------

struct AdaptSample {
  Observation observation;  // descriptors already in the shifted domain
  QueryDescriptor query;
  int cell = 0;
};

// Weakly labeled shifted-domain set: random scenes viewed from train-pool
// cameras with descriptors mapped through the shift; the label is the target's
// grid cell, which the shift does not move.
inline std::vector<AdaptSample> make_adapt_set(const EnvConfig& env, const DescriptorShift& shift,
                                               int n, uint64_t seed) {
  std::vector<AdaptSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const uint64_t s = mix_seed(seed, 0xADA31ULL, static_cast<uint64_t>(i));
    Rng rng(mix_seed(s, 0x031ULL));
    const int n_objects = 1 + static_cast<int>(rng.uniform_int(kMaxObjects));
    const Scene scene = sample_scene(env, mix_seed(s, 0x5CULL), n_objects, DescriptorDomain::SEEN);
    const Camera camera = sample_camera(env, mix_seed(s, 0xCAULL), ViewpointPool::TRAIN);
    const Vec3 arm = sample_arm_start_anywhere(env, mix_seed(s, 0xA4ULL));
    std::vector<int> perm = rng.permutation(kMaxObjects);
    perm.resize(scene.objects.size());
    AdaptSample sample;
    sample.observation = apply_shift(render_observation(scene, {arm}, camera, perm), &shift);
    sample.query = make_query(env, scene, mix_seed(s, 0x9EULL));
    sample.query.descriptor = shift.apply(sample.query.descriptor);
    sample.cell = grid_cell_label(camera, scene).cell;
    out.push_back(std::move(sample));
  }
  return out;
}

struct AdaptSettings {
  int64_t steps = 600;
  int batch_size = 16;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 1.0, 1000};
  uint64_t seed = 0;
};

// Cross-entropy localization steps that touch only the "enc_" parameters;
// the motor-side tensors are untouched by construction.
inline void adapt_encoder(ParamStore& params, const std::vector<AdaptSample>& labeled,
                          const AdaptSettings& cfg) {
  if (labeled.empty()) throw StructuralError("adapt_encoder requires a non-empty labeled set");
  AdamState opt;
  opt.cfg = cfg.adam;
  for (int64_t s = 0; s < cfg.steps; ++s) {
    Rng rng(mix_seed(cfg.seed, 0xADA9ULL, static_cast<uint64_t>(s)));
    GradMap mean_grads;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const AdaptSample& sample = labeled[rng.uniform_int(labeled.size())];
      Tape tape(params);
      const int obs_feat = encode_obs_tape(tape, tape.input(sample.observation.to_vector()));
      const int query_feat = encode_query_tape(tape, tape.input(sample.query.to_vector()));
      const int loc_h = tape.dense(tape.param("enc_loc.l1.w"), tape.param("enc_loc.l1.b"),
                                   tape.concat({obs_feat, query_feat}), Act::RELU);
      const int logits = tape.dense(tape.param("enc_loc.l2.w"), tape.param("enc_loc.l2.b"),
                                    loc_h, Act::IDENTITY);
      const int loss = tape.softmax_xent(logits, sample.cell);
      GradMap g = tape.backward(loss);
      if (mean_grads.empty()) {
        mean_grads = std::move(g);
      } else {
        for (auto& [name, t] : mean_grads) {
          const Tensor& o = g.at(name);
          for (size_t j = 0; j < t.data.size(); ++j) t.data[j] += o.data[j];
        }
      }
    }
    for (auto& [name, t] : mean_grads) {
      if (!is_encoder_param(name)) throw StructuralError("adaptation touched non-encoder param " + name);
      for (double& v : t.data) v /= cfg.batch_size;
    }
    adam_step(params, mean_grads, opt);
  }
}

inline double localization_accuracy(const ParamStore& params, const std::vector<AdaptSample>& samples) {
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const auto& s : samples) {
    const Tensor obs_feat = encode_obs(params, s.observation.to_vector());
    const Tensor query_feat = encode_query(params, s.query.to_vector());
    const Tensor loc_h = fast_dense(params.at("enc_loc.l1.w"), params.at("enc_loc.l1.b"),
                                    fast_concat({&obs_feat, &query_feat}), Act::RELU);
    const Tensor logits = fast_dense(params.at("enc_loc.l2.w"), params.at("enc_loc.l2.b"),
                                     loc_h, Act::IDENTITY);
    int argmax = 0;
    for (int64_t i = 1; i < logits.numel(); ++i)
      if (logits.data[static_cast<size_t>(i)] > logits.data[static_cast<size_t>(argmax)])
        argmax = static_cast<int>(i);
    if (argmax == s.cell) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace srvo
