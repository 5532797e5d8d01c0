#include <doctest.h>

#include "sparsepose/ik.hpp"
#include "support.hpp"

using namespace sparsepose;

namespace {

HandTargets wrists_of(const Skeleton& s, const PoseOutput& p) {
  const JointState st = forward_kinematics(s, p);
  return {st.pos[20], st.pos[21]};
}

bool is_arm(std::size_t joint) { return joint >= 16 && joint <= 19; }

void check_untouched(const PoseOutput& in, const PoseOutput& out) {
  CHECK(out.root_pos == in.root_pos);
  CHECK(out.global_orient.m == in.global_orient.m);
  for (std::size_t j = 1; j < kNumJoints; ++j)
    if (!is_arm(j)) CHECK(out.local_rot[j - 1].m == in.local_rot[j - 1].m);
}

}  // namespace

TEST_CASE("zero iterations return the input") {
  const Skeleton& s = Skeleton::standard();
  std::mt19937_64 rng(1);
  const PoseOutput p = sptest::random_pose(rng);
  IkConfig cfg;
  cfg.iters = 0;
  const IkResult r = refine_arms(p, s, {Vec3(1, 2, 3), Vec3(-1, 0, 0)}, cfg);
  for (std::size_t j = 0; j < kNumLocal; ++j) CHECK(r.pose.local_rot[j].m == p.local_rot[j].m);
  CHECK(r.initial_error == r.final_error);
  CHECK_FALSE(r.fell_back);
}

TEST_CASE("a pose already at the targets stays put") {
  const Skeleton& s = Skeleton::standard();
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const PoseOutput p = sptest::random_pose(rng);
    IkConfig cfg;
    cfg.iters = 10;
    const IkResult r = refine_arms(p, s, wrists_of(s, p), cfg);
    CHECK(r.initial_error < 1e-20);
    for (std::size_t j = 0; j < kNumLocal; ++j) CHECK(sptest::max_abs(r.pose.local_rot[j].m, p.local_rot[j].m) < 1e-9);
    check_untouched(p, r.pose);
  }
}

TEST_CASE("an elbow perturbation is mostly undone") {
  const Skeleton& s = Skeleton::standard();
  std::mt19937_64 rng(3);
  for (const IkOptimizer opt : {IkOptimizer::kAdam, IkOptimizer::kGradientDescent}) {
    for (int i = 0; i < 10; ++i) {
      const PoseOutput truth = sptest::random_pose(rng, 1.0);
      PoseOutput bent = truth;
      bent.local(18) = bent.local(18) * axis_angle_to_matrix({0.1 * sptest::random_unit(rng)});
      bent.local(19) = bent.local(19) * axis_angle_to_matrix({0.1 * sptest::random_unit(rng)});
      IkConfig cfg;
      cfg.iters = 50;
      cfg.optimizer = opt;
      cfg.lr = opt == IkOptimizer::kAdam ? 5e-3 : 0.5;
      const IkResult r = refine_arms(bent, s, wrists_of(s, truth), cfg);
      CAPTURE(i);
      CHECK(r.initial_error > 0);
      CHECK(r.final_error <= 0.1 * r.initial_error);
      for (std::size_t j = 0; j < kNumLocal; ++j) CHECK(is_rotation(r.pose.local_rot[j].m, 1e-9));
      check_untouched(bent, r.pose);
      // The reported error matches the returned pose.
      const HandTargets t = wrists_of(s, truth);
      const HandTargets w = wrists_of(s, r.pose);
      CHECK(r.final_error == doctest::Approx((w.left - t.left).squaredNorm() + (w.right - t.right).squaredNorm())
                                 .epsilon(1e-9));
    }
  }
}

TEST_CASE("final error never exceeds the initial error") {
  const Skeleton& s = Skeleton::standard();
  std::mt19937_64 rng(4);
  for (int i = 0; i < 30; ++i) {
    const PoseOutput p = sptest::random_pose(rng);
    IkConfig cfg;
    cfg.iters = 5;
    // Far too large a step: divergence must fall back to the input.
    cfg.lr = i % 2 == 0 ? 50.0 : 1e-3;
    cfg.optimizer = IkOptimizer::kGradientDescent;
    const HandTargets t{wrists_of(s, p).left + 0.05 * sptest::random_unit(rng),
                        wrists_of(s, p).right + 0.05 * sptest::random_unit(rng)};
    const IkResult r = refine_arms(p, s, t, cfg);
    CHECK(r.final_error <= r.initial_error);
    if (r.fell_back)
      for (std::size_t j = 0; j < kNumLocal; ++j) CHECK(r.pose.local_rot[j].m == p.local_rot[j].m);
    check_untouched(p, r.pose);
  }
}

TEST_CASE("left targets only move the left arm") {
  const Skeleton& s = Skeleton::standard();
  std::mt19937_64 rng(5);
  const PoseOutput p = sptest::random_pose(rng);
  HandTargets t = wrists_of(s, p);
  t.left += Vec3(0.03, -0.02, 0.01);
  IkConfig cfg;
  cfg.iters = 20;
  cfg.optimizer = IkOptimizer::kGradientDescent;
  cfg.lr = 1e-2;
  const IkResult r = refine_arms(p, s, t, cfg);
  CHECK(r.final_error < r.initial_error);
  CHECK(sptest::max_abs(r.pose.local(17).m, p.local(17).m) < 1e-12);
  CHECK(sptest::max_abs(r.pose.local(19).m, p.local(19).m) < 1e-12);
  CHECK(sptest::max_abs(r.pose.local(16).m, p.local(16).m) > 1e-6);
  // Adam's normalized steps jitter around an already satisfied target.
  cfg.optimizer = IkOptimizer::kAdam;
  cfg.lr = 1e-3;
  const HandTargets w = wrists_of(s, refine_arms(p, s, t, cfg).pose);
  CHECK((w.right - t.right).norm() < 1e-3);
}

TEST_CASE("batched refinement equals per-frame refinement") {
  const Skeleton& s = Skeleton::standard();
  std::mt19937_64 rng(6);
  std::vector<PoseOutput> poses;
  std::vector<HandTargets> targets;
  for (int i = 0; i < 7; ++i) {
    poses.push_back(sptest::random_pose(rng));
    HandTargets t = wrists_of(s, poses.back());
    t.left += 0.02 * sptest::random_unit(rng);
    t.right += 0.02 * sptest::random_unit(rng);
    targets.push_back(t);
  }
  IkConfig cfg;
  cfg.iters = 8;
  const auto batch = refine_arms_batch(poses, s, targets, cfg);
  REQUIRE(batch.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const IkResult one = refine_arms(poses[i], s, targets[i], cfg);
    CHECK(batch[i].final_error == doctest::Approx(one.final_error).epsilon(1e-9));
    for (std::size_t j = 0; j < kNumLocal; ++j)
      CHECK(sptest::max_abs(batch[i].pose.local_rot[j].m, one.pose.local_rot[j].m) < 1e-9);
  }
  CHECK(refine_arms_batch({}, s, {}, cfg).empty());
}
