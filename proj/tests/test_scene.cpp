#include <gtest/gtest.h>

#include <cmath>

#include "srvo/rng.hpp"
#include "srvo/scene.hpp"

using namespace srvo;

namespace {

EnvConfig default_env() { return EnvConfig{}; }

bool scenes_identical(const Scene& a, const Scene& b) {
  if (a.objects.size() != b.objects.size() || a.target_index != b.target_index) return false;
  for (size_t i = 0; i < a.objects.size(); ++i) {
    if (a.objects[i].position.x != b.objects[i].position.x ||
        a.objects[i].position.y != b.objects[i].position.y ||
        a.objects[i].position.z != b.objects[i].position.z ||
        a.objects[i].descriptor != b.objects[i].descriptor)
      return false;
  }
  return true;
}

Camera top_down_camera() {
  // hand-built: at (0,0,2) looking down -z, det(R) = +1
  Camera cam;
  cam.position = {0, 0, 2};
  cam.rotation = {1, 0, 0, 0, -1, 0, 0, 0, -1};
  cam.focal = 1.0;
  return cam;
}

}  // namespace

TEST(sample_scene, deterministic_in_seed) {
  const EnvConfig env = default_env();
  const Scene a = sample_scene(env, 7, 2, DescriptorDomain::SEEN);
  const Scene b = sample_scene(env, 7, 2, DescriptorDomain::SEEN);
  EXPECT_TRUE(scenes_identical(a, b));
}

TEST(sample_scene, different_seeds_differ) {
  const EnvConfig env = default_env();
  const Scene a = sample_scene(env, 7, 2, DescriptorDomain::SEEN);
  const Scene b = sample_scene(env, 8, 2, DescriptorDomain::SEEN);
  EXPECT_FALSE(scenes_identical(a, b));
}

TEST(sample_scene, invariants_hold_over_many_seeds) {
  const EnvConfig env = default_env();
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const int n = 1 + static_cast<int>(seed % 3);
    const Scene s = sample_scene(env, seed, n, DescriptorDomain::SEEN);
    ASSERT_EQ(static_cast<int>(s.objects.size()), n);
    ASSERT_GE(s.target_index, 0);
    ASSERT_LT(s.target_index, n);
    for (const auto& o : s.objects) {
      EXPECT_TRUE(env.workspace.contains(o.position));
      EXPECT_DOUBLE_EQ(o.position.z, env.table_z);
    }
    for (size_t i = 0; i < s.objects.size(); ++i)
      for (size_t j = i + 1; j < s.objects.size(); ++j)
        EXPECT_GE((s.objects[i].position - s.objects[j].position).norm(), env.min_object_gap);
  }
}

TEST(sample_scene, impossible_packing_raises_generation_error) {
  EnvConfig env = default_env();
  env.workspace.min = {-0.06, -0.06, -0.5};
  env.workspace.max = {0.06, 0.06, 0.5};
  env.table_z = -0.4;
  EXPECT_THROW(sample_scene(env, 1, 3, DescriptorDomain::SEEN), GenerationError);
}

TEST(sample_scene, seen_and_unseen_descriptors_come_from_disjoint_clusters) {
  const EnvConfig env = default_env();
  const auto centers = descriptor_centers(env.descriptor_seed);
  ASSERT_EQ(centers.size(), 40u);
  auto l2 = [](const Descriptor& a, const Descriptor& b) {
    double acc = 0;
    for (int i = 0; i < kDescriptorDim; ++i) {
      const double d = a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = sample_scene(env, seed, 2, DescriptorDomain::SEEN);
    const Scene u = sample_scene(env, seed, 2, DescriptorDomain::UNSEEN);
    for (const auto& o : s.objects) {
      double best_seen = 1e9, best_unseen = 1e9;
      for (size_t c = 0; c < 20; ++c) best_seen = std::min(best_seen, l2(o.descriptor, centers[c]));
      for (size_t c = 20; c < 40; ++c) best_unseen = std::min(best_unseen, l2(o.descriptor, centers[c]));
      EXPECT_LT(best_seen, 0.15);
      EXPECT_GT(best_unseen, 0.5);
    }
    for (const auto& o : u.objects) {
      double best_seen = 1e9, best_unseen = 1e9;
      for (size_t c = 0; c < 20; ++c) best_seen = std::min(best_seen, l2(o.descriptor, centers[c]));
      for (size_t c = 20; c < 40; ++c) best_unseen = std::min(best_unseen, l2(o.descriptor, centers[c]));
      EXPECT_LT(best_unseen, 0.15);
      EXPECT_GT(best_seen, 0.5);
    }
  }
}

TEST(make_query, stays_within_infinity_norm_bound_of_target) {
  const EnvConfig env = default_env();
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Scene s = sample_scene(env, seed, 3, DescriptorDomain::SEEN);
    const QueryDescriptor q = make_query(env, s, seed + 1);
    for (int i = 0; i < kDescriptorDim; ++i)
      EXPECT_LE(std::abs(q.descriptor[static_cast<size_t>(i)] -
                         s.target().descriptor[static_cast<size_t>(i)]),
                env.query_noise + 1e-12);
  }
}

TEST(camera_pools, train_and_heldout_are_disjoint) {
  const EnvConfig env = default_env();
  const CameraPools pools = build_camera_pools(env);
  ASSERT_EQ(pools.train.size(), 100u);
  ASSERT_EQ(pools.heldout.size(), 100u);
  for (const auto& a : pools.train)
    for (const auto& b : pools.heldout) {
      const bool same = a.position.x == b.position.x && a.position.y == b.position.y &&
                        a.position.z == b.position.z;
      EXPECT_FALSE(same);
    }
}

TEST(camera_pools, every_camera_looks_at_workspace_center) {
  const EnvConfig env = default_env();
  const CameraPools pools = build_camera_pools(env);
  const Vec3 center = env.workspace.center();
  auto check = [&](const Camera& cam) {
    const Vec3 fwd{cam.rotation[6], cam.rotation[7], cam.rotation[8]};
    const Vec3 to_center = (center - cam.position).normalized();
    const double cosang = std::min(1.0, fwd.dot(to_center));
    EXPECT_LT(std::acos(cosang), 1e-6);
  };
  for (const auto& c : pools.train) check(c);
  for (const auto& c : pools.heldout) check(c);
}

TEST(camera_pools, rotations_are_orthonormal_with_unit_determinant) {
  const EnvConfig env = default_env();
  const CameraPools pools = build_camera_pools(env);
  auto check = [&](const Camera& cam) {
    const auto& r = cam.rotation;
    const Vec3 r0{r[0], r[1], r[2]}, r1{r[3], r[4], r[5]}, r2{r[6], r[7], r[8]};
    EXPECT_NEAR(r0.norm(), 1.0, 1e-9);
    EXPECT_NEAR(r1.norm(), 1.0, 1e-9);
    EXPECT_NEAR(r2.norm(), 1.0, 1e-9);
    EXPECT_NEAR(r0.dot(r1), 0.0, 1e-9);
    EXPECT_NEAR(r0.dot(r2), 0.0, 1e-9);
    EXPECT_NEAR(r1.dot(r2), 0.0, 1e-9);
    const double det = r0.dot(r1.cross(r2));
    EXPECT_NEAR(det, 1.0, 1e-9);
  };
  for (const auto& c : pools.train) check(c);
  for (const auto& c : pools.heldout) check(c);
}

TEST(camera_pools, workspace_corners_have_positive_depth_everywhere) {
  const EnvConfig env = default_env();
  const CameraPools pools = build_camera_pools(env);
  auto check = [&](const Camera& cam) {
    for (double x : {env.workspace.min.x, env.workspace.max.x})
      for (double y : {env.workspace.min.y, env.workspace.max.y})
        for (double z : {env.workspace.min.z, env.workspace.max.z})
          EXPECT_GT(cam.to_camera({x, y, z}).z, 0.0);
  };
  for (const auto& c : pools.train) check(c);
  for (const auto& c : pools.heldout) check(c);
}

TEST(sample_camera, deterministic_and_a_pool_member) {
  const EnvConfig env = default_env();
  const Camera a = sample_camera(env, 3, ViewpointPool::TRAIN);
  const Camera b = sample_camera(env, 3, ViewpointPool::TRAIN);
  EXPECT_EQ(a.position.x, b.position.x);
  EXPECT_EQ(a.rotation, b.rotation);
  const CameraPools pools = build_camera_pools(env);
  bool member = false;
  for (const auto& c : pools.train)
    if (c.position.x == a.position.x && c.position.y == a.position.y &&
        c.position.z == a.position.z)
      member = true;
  EXPECT_TRUE(member);
}

TEST(project, optical_axis_point_maps_to_origin) {
  const Camera cam = top_down_camera();
  const Vec2 uv = project(cam, {0, 0, 0});
  EXPECT_DOUBLE_EQ(uv.u, 0.0);
  EXPECT_DOUBLE_EQ(uv.v, 0.0);
}

TEST(project, hand_computed_pinhole_example) {
  // camera at (0,0,2) looking down -z, point (0.5,0,0): depth 2, u = 0.5/2
  const Camera cam = top_down_camera();
  const Vec2 uv = project(cam, {0.5, 0, 0});
  EXPECT_NEAR(uv.u, 0.25, 1e-12);
  EXPECT_NEAR(uv.v, 0.0, 1e-12);
}

TEST(project, point_behind_camera_raises) {
  const Camera cam = top_down_camera();
  EXPECT_THROW(project(cam, {0, 0, 3}), ProjectionError);
}

TEST(project, preserves_left_right_order_at_fixed_depth) {
  const EnvConfig env = default_env();
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const Camera cam = sample_camera(env, static_cast<uint64_t>(trial), ViewpointPool::TRAIN);
    // two points on the same camera-depth plane, mapped back to world
    const double z = rng.uniform(1.0, 2.0);
    const double x1 = rng.uniform(-0.4, 0.4), x2 = rng.uniform(-0.4, 0.4);
    const double y = rng.uniform(-0.3, 0.3);
    auto to_world = [&](double xc) {
      const auto& r = cam.rotation;
      return Vec3{r[0] * xc + r[3] * y + r[6] * z, r[1] * xc + r[4] * y + r[7] * z,
                  r[2] * xc + r[5] * y + r[8] * z} +
             cam.position;
    };
    const Vec2 u1 = project(cam, to_world(x1));
    const Vec2 u2 = project(cam, to_world(x2));
    if (x1 < x2) EXPECT_LT(u1.u, u2.u);
    if (x1 > x2) EXPECT_GT(u1.u, u2.u);
  }
}

TEST(render_observation, single_object_scene_fills_exactly_one_slot) {
  const EnvConfig env = default_env();
  const Scene s = sample_scene(env, 11, 1, DescriptorDomain::SEEN);
  const Camera cam = sample_camera(env, 1, ViewpointPool::TRAIN);
  const Observation obs = render_observation(s, {{0, 0, 0}}, cam, {2});
  int present = 0;
  for (const auto& slot : obs.slots) present += slot.present > 0.5 ? 1 : 0;
  EXPECT_EQ(present, 1);
  EXPECT_GT(obs.slots[2].present, 0.5);
  // absent slots zero-filled
  for (int i : {0, 1}) {
    EXPECT_DOUBLE_EQ(obs.slots[static_cast<size_t>(i)].uv.u, 0.0);
    EXPECT_DOUBLE_EQ(obs.slots[static_cast<size_t>(i)].uv.v, 0.0);
    for (double d : obs.slots[static_cast<size_t>(i)].descriptor) EXPECT_DOUBLE_EQ(d, 0.0);
  }
}

TEST(render_observation, top_down_uv_order_matches_world_x_order) {
  const EnvConfig env = default_env();
  Scene s = sample_scene(env, 13, 3, DescriptorDomain::SEEN);
  const Camera cam = top_down_camera();
  const Observation obs = render_observation(s, {{0, 0, 0}}, cam, {0, 1, 2});
  for (size_t i = 0; i < 3; ++i) {
    const Vec2 direct = project(cam, s.objects[i].position);
    EXPECT_DOUBLE_EQ(obs.slots[i].uv.u, direct.u);
    EXPECT_DOUBLE_EQ(obs.slots[i].uv.v, direct.v);
  }
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = 0; j < 3; ++j)
      if (s.objects[i].position.x < s.objects[j].position.x)
        EXPECT_LT(obs.slots[i].uv.u, obs.slots[j].uv.u);
}

TEST(render_observation, different_cameras_give_different_effector_uv) {
  const EnvConfig env = default_env();
  const Scene s = sample_scene(env, 17, 2, DescriptorDomain::SEEN);
  const Camera a = sample_camera(env, 100, ViewpointPool::TRAIN);
  const Camera b = sample_camera(env, 1234, ViewpointPool::HELDOUT);
  const ArmState arm{{0.1, 0.2, 0.0}};
  const Observation oa = render_observation(s, arm, a, {0, 1, 2});
  const Observation ob = render_observation(s, arm, b, {0, 1, 2});
  EXPECT_TRUE(oa.effector_uv.u != ob.effector_uv.u || oa.effector_uv.v != ob.effector_uv.v);
}

TEST(step_dynamics, normalizes_direction_to_constant_speed) {
  const EnvConfig env = default_env();
  const ArmState next = step_dynamics({{0, 0, 0.5}}, {{2, 0, 0}}, 0.05, env.workspace);
  EXPECT_NEAR(next.effector_position.x, 0.05, 1e-15);
  EXPECT_DOUBLE_EQ(next.effector_position.y, 0.0);
  EXPECT_DOUBLE_EQ(next.effector_position.z, 0.5);
}

TEST(step_dynamics, zero_action_is_a_noop) {
  const EnvConfig env = default_env();
  const ArmState arm{{0.1, -0.2, 0.3}};
  const ArmState next = step_dynamics(arm, {{0, 0, 0}}, 0.05, env.workspace);
  EXPECT_DOUBLE_EQ(next.effector_position.x, arm.effector_position.x);
  EXPECT_DOUBLE_EQ(next.effector_position.y, arm.effector_position.y);
  EXPECT_DOUBLE_EQ(next.effector_position.z, arm.effector_position.z);
}

TEST(step_dynamics, outward_step_at_boundary_is_clamped) {
  const EnvConfig env = default_env();
  const ArmState next = step_dynamics({{0.5, 0.48, 0.0}}, {{1, 1, 0}}, 0.05, env.workspace);
  EXPECT_DOUBLE_EQ(next.effector_position.x, 0.5);
  // 0.48 + 0.05/sqrt(2) exceeds 0.5, so y clamps too
  EXPECT_DOUBLE_EQ(next.effector_position.y, 0.5);
}

TEST(step_dynamics, step_length_is_exactly_v_unless_clamped_or_zero) {
  const EnvConfig env = default_env();
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const ArmState arm{{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)}};
    const Action a{{rng.normal(), rng.normal(), rng.normal()}};
    const ArmState next = step_dynamics(arm, a, 0.05, env.workspace);
    const double moved = (next.effector_position - arm.effector_position).norm();
    const bool clamped =
        !env.workspace.contains(arm.effector_position + a.direction.normalized() * 0.05);
    if (!clamped && a.direction.norm() > 1e-8) EXPECT_NEAR(moved, 0.05, 1e-12);
  }
}

TEST(reward, thresholds_and_boundary_convention) {
  const EnvConfig env = default_env();
  Scene s = sample_scene(env, 19, 1, DescriptorDomain::SEEN);
  const Vec3 y = s.target().position;
  EXPECT_EQ(reward({{y + Vec3{0.04, 0, 0}}}, s, 0.05), 1);
  EXPECT_EQ(reward({{y + Vec3{0.06, 0, 0}}}, s, 0.05), 0);
  EXPECT_EQ(reward({{y + Vec3{0.05, 0, 0}}}, s, 0.05), 1);  // <= convention
}

TEST(reward, monotone_in_distance) {
  const EnvConfig env = default_env();
  Scene s = sample_scene(env, 23, 2, DescriptorDomain::SEEN);
  const Vec3 y = s.target().position;
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double d1 = rng.uniform(0.0, 0.3);
    const double d2 = rng.uniform(0.0, d1);
    const Vec3 dir = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
    const int r1 = reward({{y + dir * d1}}, s, env.reach_radius);
    const int r2 = reward({{y + dir * d2}}, s, env.reach_radius);
    if (r1 == 1) EXPECT_EQ(r2, 1);
  }
}

TEST(expert_action, points_at_target_with_unit_norm) {
  const EnvConfig env = default_env();
  Scene s = sample_scene(env, 29, 1, DescriptorDomain::SEEN);
  s.objects[0].position = {1, 0, 0};
  // x=(0,0,0), y=(1,0,0) -> (1,0,0)
  Action a = expert_action({{0, 0, 0}}, s, env.reach_radius);
  EXPECT_DOUBLE_EQ(a.direction.x, 1.0);
  EXPECT_DOUBLE_EQ(a.direction.y, 0.0);
  // x=y -> zero action
  Action zero = expert_action({{1, 0, 0}}, s, env.reach_radius);
  EXPECT_DOUBLE_EQ(zero.direction.norm(), 0.0);
  // x=(0,0,0), y=(1,1,0) -> (0.70711, 0.70711, 0)
  s.objects[0].position = {1, 1, 0};
  Action diag = expert_action({{0, 0, 0}}, s, env.reach_radius);
  EXPECT_NEAR(diag.direction.x, 0.70711, 1e-5);
  EXPECT_NEAR(diag.direction.y, 0.70711, 1e-5);
  EXPECT_NEAR(diag.direction.x, 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(final_distance, matches_brute_force_formula_on_random_pairs) {
  const EnvConfig env = default_env();
  Scene s = sample_scene(env, 31, 1, DescriptorDomain::SEEN);
  s.objects[0].position = {0, 0, 0};
  EXPECT_DOUBLE_EQ(final_distance({{0, 0, 0}}, s), 0.0);
  EXPECT_DOUBLE_EQ(final_distance({{1, 0, 0}}, s), 1.0);
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec3 y{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    s.objects[0].position = y;
    const double direct = std::sqrt((x.x - y.x) * (x.x - y.x) + (x.y - y.y) * (x.y - y.y) +
                                    (x.z - y.z) * (x.z - y.z));
    EXPECT_NEAR(final_distance({x}, s), direct, 1e-15);
  }
}

TEST(expert, converges_within_diameter_over_v_steps_from_any_start) {
  const EnvConfig env = default_env();
  const int bound = static_cast<int>(std::ceil(env.workspace.diameter() / env.velocity)) + 1;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = sample_scene(env, seed, 1 + static_cast<int>(seed % 3), DescriptorDomain::SEEN);
    ArmState arm{sample_arm_start_anywhere(env, seed)};
    int reached_at = -1;
    for (int t = 0; t < bound; ++t) {
      arm = step_dynamics(arm, expert_action(arm, s, env.reach_radius), env.velocity, env.workspace);
      if (reward(arm, s, env.reach_radius) == 1) {
        reached_at = t;
        break;
      }
    }
    EXPECT_GE(reached_at, 0) << "seed " << seed;
  }
}
