#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "srvo/checkpoint.hpp"
#include "srvo/config.hpp"
#include "srvo/eval.hpp"
#include "srvo/gradcheck.hpp"
#include "srvo/policy.hpp"
#include "srvo/training.hpp"

namespace srvo {

struct VerifyResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

namespace verify_detail {

inline Trajectory sample_check_trajectory(const RunConfig& cfg, uint64_t seed, int horizon) {
  const Scene scene = sample_scene(cfg.env, mix_seed(seed, 1), 2, DescriptorDomain::SEEN);
  const Camera cam = sample_camera(cfg.env, mix_seed(seed, 2), ViewpointPool::TRAIN);
  UnrollOptions opt;
  opt.sigma_d = 0.2;
  return unroll(nullptr, Variant::RECURRENT, cfg.env, scene, cam, horizon,
                ActionSource::EXPERT_NOISY, mix_seed(seed, 3), opt);
}

// Discounted-sum oracle for deterministic continuations: re-simulates the
// policy step by step and accumulates gamma powers directly.
inline double brute_force_q(const ParamStore& params, Variant variant, const EnvConfig& env,
                            const Trajectory& traj, int t, double gamma) {
  const int T = traj.horizon();
  const int64_t units = params.at("act_head.w").cols();
  RecurrentState state = RecurrentState::zeros(units);
  Action prev;
  for (int s = 0; s <= t; ++s) {
    auto [out, next] =
        policy_forward(params, variant, traj.steps[static_cast<size_t>(s)].observation, prev,
                       traj.query, state);
    state = std::move(next);
    prev = traj.steps[static_cast<size_t>(s)].executed;
  }
  double q = traj.steps[static_cast<size_t>(t)].reward;
  ArmState arm{traj.arm_after(t)};
  for (int tp = t + 1; tp < T; ++tp) {
    const Observation obs = render_observation(traj.scene, arm, traj.camera, traj.slot_perm);
    auto [out, next] = policy_forward(params, variant, obs, prev, traj.query, state);
    state = std::move(next);
    const Action a = normalized_or_zero(
        {out.action_mean.data[0], out.action_mean.data[1], out.action_mean.data[2]});
    arm = step_dynamics(arm, a, env.velocity, env.workspace);
    q += std::pow(gamma, static_cast<double>(tp - t)) * reward(arm, traj.scene, env.reach_radius);
    prev = a;
  }
  return q;
}

}  // namespace verify_detail

// Gradient-check, oracle-equivalence, and determinism suites run by
// `srvo verify`. Each check is seconds, not minutes.
inline std::vector<VerifyResult> run_verify_suite(const RunConfig& cfg) {
  std::vector<VerifyResult> results;
  auto add = [&](const std::string& name, bool ok, const std::string& detail = "") {
    results.push_back({name, ok, detail});
  };

  // dense + lstm gradients against central differences on a reduced model
  {
    ModelConfig small;
    small.obs_width = 12;
    small.query_width = 8;
    small.action_embed = 8;
    small.lstm_units = 10;
    small.qhead_width = 8;
    ParamStore params = make_policy_params(small, Variant::RECURRENT, 11);
    const Trajectory traj = verify_detail::sample_check_trajectory(cfg, 21, 3);
    std::vector<QTarget> targets =
        mc_q_targets(params, Variant::RECURRENT, cfg.env, traj, 0.9, 1, 0.0, 31);
    LossWeights w;
    auto fn = [&](const ParamStore& p) {
      Tape tape(p);
      const int total = trajectory_loss_tape(tape, Variant::RECURRENT, traj, &targets, w);
      return tape.value(total).data[0];
    };
    Tape tape(params);
    LossTerms terms;
    const int total = trajectory_loss_tape(tape, Variant::RECURRENT, traj, &targets, w, &terms);
    GradMap grads = tape.backward(total);
    const double err = grad_check(fn, params, grads, 1e-5, 41);
    add("gradient_check_small_model", err < 1e-4, "max rel err " + format_double(err));
  }

  // desk-width model, subsampled coordinates
  {
    ParamStore params = make_policy_params(cfg.model, Variant::RECURRENT, 13);
    const Trajectory traj = verify_detail::sample_check_trajectory(cfg, 23, 3);
    LossWeights w;
    w.value = 0.0;
    auto fn = [&](const ParamStore& p) {
      Tape tape(p);
      const int total = trajectory_loss_tape(tape, Variant::RECURRENT, traj, nullptr, w);
      return tape.value(total).data[0];
    };
    Tape tape(params);
    const int total = trajectory_loss_tape(tape, Variant::RECURRENT, traj, nullptr, w);
    GradMap grads = tape.backward(total);
    const double err = grad_check(fn, params, grads, 1e-5, 43);
    add("gradient_check_desk_model", err < 1e-4, "max rel err " + format_double(err));
  }

  // MC targets vs an independent discounted-sum oracle
  {
    ModelConfig small;
    small.obs_width = 12;
    small.query_width = 8;
    small.action_embed = 8;
    small.lstm_units = 10;
    small.qhead_width = 8;
    ParamStore params = make_policy_params(small, Variant::RECURRENT, 17);
    bool ok = true;
    double worst = 0.0;
    for (int k = 0; k < 5 && ok; ++k) {
      const Trajectory traj = verify_detail::sample_check_trajectory(cfg, 100 + k, 6);
      auto targets = mc_q_targets(params, Variant::RECURRENT, cfg.env, traj, 0.9, 1, 0.0, 7);
      for (int t = 0; t < traj.horizon(); ++t) {
        const double oracle =
            verify_detail::brute_force_q(params, Variant::RECURRENT, cfg.env, traj, t, 0.9);
        worst = std::max(worst, std::abs(oracle - targets[static_cast<size_t>(t)].value));
      }
      ok = worst <= 1e-12;
    }
    add("mc_oracle_equivalence", ok, "max abs diff " + format_double(worst));
  }

  // CEM top-1 equals a brute-force argmax over the same candidates
  {
    bool ok = true;
    for (uint64_t s = 0; s < 10 && ok; ++s) {
      PolicyOutput out;
      out.action_mean = vec({0.3, -0.2, 0.5});
      out.trunk = Tensor({4});
      CemConfig cem;
      cem.top_k = 1;
      const Vec3 star{0.35, -0.1, 0.4};
      auto score = [&](const Action& a) {
        const Vec3 d = a.direction - star;
        return -d.dot(d);
      };
      const Action picked = select_action_cem_scored(out, cem, s, score);
      const auto candidates = cem_candidates(out, cem, s);
      double best = -1e300;
      Vec3 best_a;
      for (const auto& a : candidates) {
        const double v = score(a);
        if (v > best) {
          best = v;
          best_a = a.direction;
        }
      }
      ok = picked.direction.x == best_a.x && picked.direction.y == best_a.y &&
           picked.direction.z == best_a.z;
    }
    add("cem_argmax_property", ok);
  }

  // determinism: samplers and unrolls are pure functions of their seed
  {
    const Scene a = sample_scene(cfg.env, 7, 2, DescriptorDomain::SEEN);
    const Scene b = sample_scene(cfg.env, 7, 2, DescriptorDomain::SEEN);
    bool ok = a.objects.size() == b.objects.size() && a.target_index == b.target_index;
    for (size_t i = 0; i < a.objects.size() && ok; ++i)
      ok = a.objects[i].position.x == b.objects[i].position.x &&
           a.objects[i].descriptor == b.objects[i].descriptor;
    ParamStore params = make_policy_params(cfg.model, Variant::RECURRENT, 3);
    const Camera cam = sample_camera(cfg.env, 5, ViewpointPool::HELDOUT);
    const Trajectory t1 = unroll(&params, Variant::RECURRENT, cfg.env, a, cam, 5, ActionSource::POLICY, 9);
    const Trajectory t2 = unroll(&params, Variant::RECURRENT, cfg.env, a, cam, 5, ActionSource::POLICY, 9);
    for (int t = 0; t < 5 && ok; ++t)
      ok = t1.steps[static_cast<size_t>(t)].executed.direction.x ==
               t2.steps[static_cast<size_t>(t)].executed.direction.x &&
           t1.steps[static_cast<size_t>(t)].observation.effector_uv.u ==
               t2.steps[static_cast<size_t>(t)].observation.effector_uv.u;
    add("determinism", ok);
  }

  // camera pools: disjoint, look-at invariant holds
  {
    const CameraPools& pools = camera_pools_cached(cfg.env);
    bool ok = pools.train.size() == 100 && pools.heldout.size() == 100;
    for (const auto& a : pools.train)
      for (const auto& b : pools.heldout)
        if (a.position.x == b.position.x && a.position.y == b.position.y &&
            a.position.z == b.position.z)
          ok = false;
    const Vec3 center = cfg.env.workspace.center();
    for (const auto& c : pools.train) {
      const Vec3 fwd{c.rotation[6], c.rotation[7], c.rotation[8]};
      const Vec3 to_center = (center - c.position).normalized();
      if (std::acos(std::min(1.0, fwd.dot(to_center))) >= 1e-6) ok = false;
    }
    add("camera_pools", ok);
  }

  return results;
}

// Confirms the declared content hash inside a dataset, checkpoint, or report
// CSV artifact.
inline VerifyResult verify_artifact(const std::string& path) {
  VerifyResult r;
  r.name = "artifact_hash(" + path + ")";
  try {
    const std::string bytes = binio::read_file(path);
    if (bytes.size() >= 4 && bytes.substr(0, 4) == "SRVD") {
      deserialize_dataset(bytes);  // throws on hash mismatch
      r.ok = true;
      r.detail = "dataset hash ok";
    } else if (bytes.size() >= 4 && bytes.substr(0, 4) == "SRVO") {
      deserialize_checkpoint(bytes);
      r.ok = true;
      r.detail = "checkpoint hash ok";
    } else if (bytes.rfind("# srvo eval report", 0) == 0) {
      const std::string key = "# fnv64: ";
      const size_t at = bytes.find(key);
      if (at == std::string::npos) throw StructuralError("report missing hash line");
      const size_t eol = bytes.find('\n', at);
      const uint64_t declared = std::stoull(bytes.substr(at + key.size(), eol - at - key.size()));
      const std::string data = bytes.substr(eol + 1);
      if (fnv1a64(data.data(), data.size()) != declared)
        throw StructuralError("report hash mismatch");
      r.ok = true;
      r.detail = "report hash ok";
    } else {
      throw StructuralError("unrecognized artifact format");
    }
  } catch (const std::exception& e) {
    r.ok = false;
    r.detail = e.what();
  }
  return r;
}

}  // namespace srvo
