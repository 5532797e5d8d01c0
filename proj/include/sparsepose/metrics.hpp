#pragma once
// Rotation, position and velocity errors between two pose sequences.

#include <array>
#include <span>
#include <string>

#include "sparsepose/config.hpp"
#include "sparsepose/skeleton.hpp"

namespace sparsepose {

struct EvalReport {
  double mpjre = 0;       // degrees
  double mpjpe = 0;       // cm
  double mpjpe_hand = 0;  // cm, wrists only
  double mpjve = 0;       // cm/s
  std::array<double, kNumJoints> joint_re{};
  std::array<double, kNumJoints> joint_pe{};
  std::array<double, kNumJoints> joint_ve{};
  std::size_t frames = 0;

  /// Summary followed by one aligned row per joint.
  std::string to_table(const Skeleton& s) const;
  KeyValues to_kv(const Skeleton& s) const;
};

/// Pelvis rotation error uses the global orientation. Velocities are
/// backward differences scaled by `fps`; the first frame has none.
/// `threads` > 1 splits the per-frame work; results are identical.
/// Throws InvalidArgument on a length mismatch or non-positive fps.
EvalReport evaluate(std::span<const PoseOutput> pred, std::span<const PoseOutput> gt,
                    const Skeleton& s, double fps = 60.0, unsigned threads = 1);

}  // namespace sparsepose
