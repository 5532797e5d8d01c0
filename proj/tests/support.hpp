#pragma once
// Independent oracles and random generators shared by the tests.

#include <Eigen/Geometry>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "sparsepose/autodiff.hpp"
#include "sparsepose/skeleton.hpp"

namespace sptest {

using sparsepose::AxisAngle;
using sparsepose::Mat3;
using sparsepose::PoseOutput;
using sparsepose::RotMatrix;
using sparsepose::Skeleton;
using sparsepose::Vec3;

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do v = Vec3(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-6);
  return v.normalized();
}

inline AxisAngle random_axis_angle(std::mt19937_64& rng, double min_angle, double max_angle) {
  std::uniform_real_distribution<double> a(min_angle, max_angle);
  return {random_unit(rng) * a(rng)};
}

// Quaternion route, written out by hand: q = (cos t/2, sin t/2 * axis).
inline Mat3 quaternion_matrix(const Vec3& rotvec) {
  const double t = rotvec.norm();
  if (t == 0.0) return Mat3::Identity();
  const Vec3 ax = rotvec / t;
  const double w = std::cos(t / 2), x = ax.x() * std::sin(t / 2), y = ax.y() * std::sin(t / 2),
               z = ax.z() * std::sin(t / 2);
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

inline RotMatrix random_rotation(std::mt19937_64& rng, double max_angle = std::numbers::pi) {
  return {quaternion_matrix(random_axis_angle(rng, 0.0, max_angle).v)};
}

inline PoseOutput random_pose(std::mt19937_64& rng, double max_angle = 1.5) {
  PoseOutput p;
  p.global_orient = random_rotation(rng);
  for (auto& l : p.local_rot) l = random_rotation(rng, max_angle);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  p.root_pos = Vec3(u(rng), u(rng), u(rng));
  return p;
}

// Recursive descent over the tree with 4x4 homogeneous transforms.
inline void homogeneous_fk(const Skeleton& s, const PoseOutput& p, int joint,
                           const Eigen::Matrix4d& parent_world, std::vector<Eigen::Matrix4d>& out) {
  Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
  if (joint == 0) {
    local.topLeftCorner<3, 3>() = p.global_orient.m;
    local.topRightCorner<3, 1>() = p.root_pos;
  } else {
    local.topLeftCorner<3, 3>() = p.local(joint).m;
    local.topRightCorner<3, 1>() = s.offset[static_cast<std::size_t>(joint)];
  }
  out[static_cast<std::size_t>(joint)] = parent_world * local;
  for (int c = 0; c < static_cast<int>(sparsepose::kNumJoints); ++c)
    if (s.parent[static_cast<std::size_t>(c)] == joint)
      homogeneous_fk(s, p, c, out[static_cast<std::size_t>(joint)], out);
}

inline std::vector<Eigen::Matrix4d> homogeneous_fk(const Skeleton& s, const PoseOutput& p) {
  std::vector<Eigen::Matrix4d> out(sparsepose::kNumJoints, Eigen::Matrix4d::Zero());
  homogeneous_fk(s, p, 0, Eigen::Matrix4d::Identity(), out);
  return out;
}

inline double max_abs(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline sparsepose::ad::Tensor random_tensor(std::mt19937_64& rng, sparsepose::ad::Shape shape,
                                            double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<sparsepose::Real> v(sparsepose::ad::numel(shape));
  for (auto& x : v) x = static_cast<sparsepose::Real>(u(rng));
  return sparsepose::ad::Tensor::from(std::move(shape), std::move(v), grad);
}

struct GradCheck {
  double max_rel = 0;
  double max_abs = 0;
};

// Central differences of a scalar function against the tape's gradient.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(
    const std::function<sparsepose::ad::Tensor(const std::vector<sparsepose::ad::Tensor>&)>& f,
    std::vector<sparsepose::ad::Tensor> inputs, double eps = 1e-5, double floor = 1e-6) {
  using namespace sparsepose::ad;
  for (auto& t : inputs) t.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(f(inputs));
  }
  std::vector<std::vector<sparsepose::Real>> analytic;
  for (const auto& t : inputs)
    analytic.emplace_back(t.grad().empty() ? std::vector<sparsepose::Real>(t.numel(), 0)
                                           : std::vector<sparsepose::Real>(t.grad().begin(), t.grad().end()));
  GradCheck r;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    auto data = inputs[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const sparsepose::Real keep = data[i];
      data[i] = keep + eps;
      const double up = f(inputs).item();
      data[i] = keep - eps;
      const double down = f(inputs).item();
      data[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      r.max_abs = std::max(r.max_abs, abs_err);
      r.max_rel = std::max(r.max_rel, rel);
    }
  }
  return r;
}

}  // namespace sptest
