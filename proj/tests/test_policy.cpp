#include <gtest/gtest.h>

#include <cmath>

#include "srvo/gradcheck.hpp"
#include "srvo/policy.hpp"
#include "srvo/training.hpp"

using namespace srvo;

namespace {

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.obs_width = 16;
  cfg.query_width = 8;
  cfg.action_embed = 8;
  cfg.lstm_units = 12;
  cfg.qhead_width = 8;
  return cfg;
}

struct Fixture {
  EnvConfig env;
  ModelConfig model = small_model();
  ParamStore params = make_policy_params(model, Variant::RECURRENT, 99);
  Scene scene = sample_scene(env, 5, 2, DescriptorDomain::SEEN);
  Camera camera = sample_camera(env, 6, ViewpointPool::TRAIN);
  Observation obs = render_observation(scene, {{0.1, -0.1, 0.0}}, camera, {0, 1, 2});
  QueryDescriptor query = make_query(env, scene, 7);
};

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

}  // namespace

TEST(policy_forward, deterministic_and_shape_contract) {
  Fixture f;
  const RecurrentState zero = RecurrentState::zeros(f.model.lstm_units);
  auto [o1, s1] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, zero);
  auto [o2, s2] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, zero);
  EXPECT_EQ(o1.action_mean.numel(), 3);
  EXPECT_EQ(o1.loc_logits.numel(), 64);
  EXPECT_EQ(o1.trunk.numel(), f.model.lstm_units);
  EXPECT_TRUE(tensors_equal(o1.action_mean, o2.action_mean));
  EXPECT_TRUE(tensors_equal(s1.h, s2.h));
  EXPECT_TRUE(tensors_equal(s1.c, s2.c));
}

TEST(policy_forward, output_state_differs_from_input_state) {
  Fixture f;
  const RecurrentState zero = RecurrentState::zeros(f.model.lstm_units);
  auto [out, next] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, zero);
  EXPECT_FALSE(tensors_equal(next.h, zero.h));
  EXPECT_FALSE(tensors_equal(next.c, zero.c));
}

TEST(policy_forward, input_state_is_not_modified) {
  Fixture f;
  RecurrentState state = RecurrentState::zeros(f.model.lstm_units);
  state.h.data[0] = 0.25;
  const Tensor h_before = state.h;
  policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, state);
  EXPECT_TRUE(tensors_equal(state.h, h_before));
}

TEST(policy_forward, depends_only_on_declared_inputs) {
  // interleaving unrelated forward passes leaves the result unchanged
  Fixture f;
  RecurrentState state = RecurrentState::zeros(f.model.lstm_units);
  state.h.data[3] = -0.4;
  auto [want, wnext] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, state);
  for (int k = 0; k < 5; ++k) {
    const Observation other = render_observation(f.scene, {{-0.2, 0.3, 0.1}}, f.camera, {1, 0, 2});
    policy_forward(f.params, Variant::RECURRENT, other, {{1, 0, 0}}, f.query,
                   RecurrentState::zeros(f.model.lstm_units));
  }
  auto [got, gnext] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, state);
  EXPECT_TRUE(tensors_equal(want.action_mean, got.action_mean));
  EXPECT_TRUE(tensors_equal(wnext.h, gnext.h));
}

TEST(policy_forward, recurrence_matters) {
  // identical current inputs, different states -> different outputs
  Fixture f;
  const RecurrentState zero = RecurrentState::zeros(f.model.lstm_units);
  auto [o1, s1] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, zero);
  // build a different state by feeding a different prefix
  const Observation other = render_observation(f.scene, {{-0.3, 0.2, 0.2}}, f.camera, {0, 1, 2});
  auto [o2, s2] = policy_forward(f.params, Variant::RECURRENT, other, {{0, 1, 0}}, f.query, zero);
  auto [a, sa] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, s1);
  auto [b, sb] = policy_forward(f.params, Variant::RECURRENT, f.obs, {}, f.query, s2);
  EXPECT_FALSE(tensors_equal(a.action_mean, b.action_mean));
}

TEST(policy_forward, tape_path_matches_direct_path_bitwise) {
  Fixture f;
  RecurrentState state = RecurrentState::zeros(f.model.lstm_units);
  state.h.data[1] = 0.3;
  state.c.data[2] = -0.2;
  const Action prev{{0.4, -0.1, 0.2}};
  auto [want, wnext] = policy_forward(f.params, Variant::RECURRENT, f.obs, prev, f.query, state);

  Tape tape(f.params);
  const int query_feat = encode_query_tape(tape, tape.input(f.query.to_vector()));
  const int obs_id = tape.input(f.obs.to_vector());
  const int prev_id = tape.input(vec({prev.direction.x, prev.direction.y, prev.direction.z}));
  const StepIds ids = policy_step_tape(tape, Variant::RECURRENT, obs_id, prev_id, query_feat,
                                       tape.input(state.h), tape.input(state.c));
  EXPECT_TRUE(tensors_equal(tape.value(ids.action_mean), want.action_mean));
  EXPECT_TRUE(tensors_equal(tape.value(ids.loc_logits), want.loc_logits));
  EXPECT_TRUE(tensors_equal(tape.value(ids.h), wnext.h));
  EXPECT_TRUE(tensors_equal(tape.value(ids.c), wnext.c));
}

TEST(q_value, deterministic_and_matches_tape) {
  Fixture f;
  Tensor trunk({f.model.lstm_units});
  Rng rng(1);
  for (double& v : trunk.data) v = rng.uniform(-1, 1);
  const Action cand{{0.2, -0.5, 0.1}};
  const double a = q_value(f.params, trunk, cand);
  const double b = q_value(f.params, trunk, cand);
  EXPECT_EQ(a, b);
  Tape tape(f.params);
  const int q = q_value_tape(tape, tape.input(trunk),
                             tape.input(vec({cand.direction.x, cand.direction.y, cand.direction.z})));
  EXPECT_EQ(tape.value(q).data[0], a);
}

TEST(q_value, gradient_wrt_candidate_matches_finite_differences) {
  Fixture f;
  Tensor trunk({f.model.lstm_units});
  Rng rng(2);
  for (double& v : trunk.data) v = rng.uniform(-1, 1);
  Tensor cand = vec({0.3, 0.2, -0.4});

  Tape tape(f.params);
  const int cand_id = tape.input(cand);
  const int q = q_value_tape(tape, tape.input(trunk), cand_id);
  tape.backward(q);
  const Tensor& analytic = tape.grad(cand_id);
  ASSERT_EQ(analytic.numel(), 3);

  const double h = 1e-5;
  for (int i = 0; i < 3; ++i) {
    Tensor up = cand, dn = cand;
    up.data[static_cast<size_t>(i)] += h;
    dn.data[static_cast<size_t>(i)] -= h;
    const double numeric = (q_value(f.params, trunk, {{up.data[0], up.data[1], up.data[2]}}) -
                            q_value(f.params, trunk, {{dn.data[0], dn.data[1], dn.data[2]}})) /
                           (2 * h);
    EXPECT_LT(rel_err(analytic.data[static_cast<size_t>(i)], numeric), 1e-4);
  }
}

TEST(q_value, zero_weight_head_outputs_bias) {
  Fixture f;
  ParamStore p = make_policy_params(f.model, Variant::RECURRENT, 3);
  for (auto& [name, t] : p.all_mutable())
    if (name.rfind("qhead.", 0) == 0)
      for (double& v : t.data) v = 0.0;
  p.mutable_at("qhead.out.b").data[0] = 1.25;
  Tensor trunk({f.model.lstm_units});
  trunk.data[0] = 0.7;
  EXPECT_DOUBLE_EQ(q_value(p, trunk, {{0.1, 0.2, 0.3}}), 1.25);
  EXPECT_DOUBLE_EQ(q_value(p, trunk, {{-0.9, 0.0, 0.4}}), 1.25);
}

TEST(reactive_forward, stateless_and_history_invariant) {
  Fixture f;
  ParamStore p = make_policy_params(f.model, Variant::REACTIVE, 11);
  const PolicyOutput a = reactive_forward(p, f.obs, {}, f.query);
  for (int k = 0; k < 4; ++k)
    reactive_forward(p, render_observation(f.scene, {{0.0, 0.3, -0.1}}, f.camera, {2, 1, 0}),
                     {{1, 1, 0}}, f.query);
  const PolicyOutput b = reactive_forward(p, f.obs, {}, f.query);
  EXPECT_TRUE(tensors_equal(a.action_mean, b.action_mean));
  EXPECT_TRUE(tensors_equal(a.trunk, b.trunk));
}

TEST(reactive_forward, has_fewer_parameters_than_recurrent) {
  ModelConfig cfg;  // desk widths
  const ParamStore rec = make_policy_params(cfg, Variant::RECURRENT, 1);
  const ParamStore rea = make_policy_params(cfg, Variant::REACTIVE, 1);
  EXPECT_LT(rea.total_params(), rec.total_params());
}

TEST(unroll, horizon_and_determinism) {
  Fixture f;
  const Trajectory t1 =
      unroll(&f.params, Variant::RECURRENT, f.env, f.scene, f.camera, 10, ActionSource::POLICY, 21);
  EXPECT_EQ(t1.horizon(), 10);
  const Trajectory t2 =
      unroll(&f.params, Variant::RECURRENT, f.env, f.scene, f.camera, 10, ActionSource::POLICY, 21);
  ASSERT_EQ(t2.horizon(), 10);
  for (int t = 0; t < 10; ++t) {
    const auto& a = t1.steps[static_cast<size_t>(t)];
    const auto& b = t2.steps[static_cast<size_t>(t)];
    EXPECT_EQ(a.executed.direction.x, b.executed.direction.x);
    EXPECT_EQ(a.executed.direction.y, b.executed.direction.y);
    EXPECT_EQ(a.executed.direction.z, b.executed.direction.z);
    EXPECT_EQ(a.reward, b.reward);
    EXPECT_TRUE(tensors_equal(a.observation.to_vector(), b.observation.to_vector()));
  }
}

TEST(unroll, expert_source_reaches_target_on_reachable_scene) {
  Fixture f;
  // spawn band keeps the start within 0.45 of the target: 10 steps suffice
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Scene scene = sample_scene(f.env, seed, 2, DescriptorDomain::SEEN);
    const Trajectory t =
        unroll(nullptr, Variant::RECURRENT, f.env, scene, f.camera, 10, ActionSource::EXPERT, seed);
    EXPECT_EQ(t.steps.back().reward, 1.0) << "seed " << seed;
  }
}

TEST(unroll, executed_actions_have_unit_norm_or_zero) {
  Fixture f;
  UnrollOptions opt;
  opt.sigma_d = 0.3;
  const Trajectory t = unroll(&f.params, Variant::RECURRENT, f.env, f.scene, f.camera, 10,
                              ActionSource::EXPERT_NOISY, 33, opt);
  for (const auto& step : t.steps) {
    const double n = step.executed.direction.norm();
    EXPECT_TRUE(std::abs(n - 1.0) < 1e-9 || n == 0.0);
  }
}

TEST(unroll, expert_labels_are_recomputable_from_arm_positions) {
  Fixture f;
  UnrollOptions opt;
  opt.sigma_d = 0.2;
  const Trajectory t = unroll(nullptr, Variant::RECURRENT, f.env, f.scene, f.camera, 10,
                              ActionSource::EXPERT_NOISY, 44, opt);
  for (const auto& step : t.steps) {
    const Action expect = expert_action({step.arm_position}, f.scene, f.env.reach_radius);
    EXPECT_DOUBLE_EQ(step.expert_label.direction.x, expect.direction.x);
    EXPECT_DOUBLE_EQ(step.expert_label.direction.y, expect.direction.y);
    EXPECT_DOUBLE_EQ(step.expert_label.direction.z, expect.direction.z);
  }
}

TEST(unroll, policy_source_requires_params) {
  Fixture f;
  EXPECT_THROW(
      unroll(nullptr, Variant::RECURRENT, f.env, f.scene, f.camera, 5, ActionSource::POLICY, 1),
      StructuralError);
}

TEST(unroll, executed_displacement_norm_is_v_or_zero_regardless_of_mean_magnitude) {
  Fixture f;
  // inflate the action head so raw means are far from unit norm
  ParamStore p = make_policy_params(f.model, Variant::RECURRENT, 55);
  for (double& v : p.mutable_at("act_head.b").data) v = 5.0;
  const Trajectory t =
      unroll(&p, Variant::RECURRENT, f.env, f.scene, f.camera, 10, ActionSource::POLICY, 66);
  for (int i = 0; i < t.horizon(); ++i) {
    const Vec3 before = t.steps[static_cast<size_t>(i)].arm_position;
    const Vec3 after = t.arm_after(i);
    const double moved = (after - before).norm();
    const bool interior = moved > 0 && f.env.workspace.contains(
        before + t.steps[static_cast<size_t>(i)].executed.direction.normalized() * f.env.velocity);
    if (interior) EXPECT_NEAR(moved, f.env.velocity, 1e-12);
  }
}

TEST(grad_check, full_small_model_episode_under_1e4_params_passes) {
  Fixture f;
  EXPECT_LE(f.params.total_params(), 10000);
  const Trajectory traj = unroll(nullptr, Variant::RECURRENT, f.env, f.scene, f.camera, 3,
                                 ActionSource::EXPERT_NOISY, 77, {.sigma_d = 0.2});
  LossWeights w;
  w.value = 0.0;
  auto fn = [&](const ParamStore& p) {
    Tape tape(p);
    return tape.value(trajectory_loss_tape(tape, Variant::RECURRENT, traj, nullptr, w)).data[0];
  };
  Tape tape(f.params);
  const int total = trajectory_loss_tape(tape, Variant::RECURRENT, traj, nullptr, w);
  GradMap grads = tape.backward(total);
  EXPECT_LT(grad_check(fn, f.params, grads, 1e-5), 1e-4);
}
