#pragma once
// 22-joint kinematic tree, forward kinematics and root recovery.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparsepose/rotations.hpp"

namespace sparsepose {

inline constexpr std::size_t kNumJoints = 22;
/// Joints with a parent-relative rotation (all but the root).
inline constexpr std::size_t kNumLocal = kNumJoints - 1;
inline constexpr int kNoParent = -1;

struct Skeleton {
  std::array<int, kNumJoints> parent{};
  /// Rest-pose offset from the parent joint, in the parent frame, meters.
  std::array<Vec3, kNumJoints> offset{};
  std::array<std::string, kNumJoints> names{};

  int root_index = 0;
  int head_index = 15;
  int left_hand_index = 20;
  int right_hand_index = 21;
  int left_shoulder_index = 16;
  int right_shoulder_index = 17;
  int left_elbow_index = 18;
  int right_elbow_index = 19;

  /// The built-in SMPL-ordered stick figure (same values as
  /// data/skeleton_default.txt).
  static const Skeleton& standard();

  /// Parses "name parent x y z" lines; '#' starts a comment. Parent -1 marks
  /// the root. Throws ConfigError on malformed input or a broken tree.
  static Skeleton parse(std::string_view text);
  static Skeleton load(const std::filesystem::path& path);
  /// Canonical text form; parse(to_text()) reproduces the skeleton exactly.
  std::string to_text() const;
  /// FNV-1a of to_text().
  std::uint64_t hash() const;

  int index_of(std::string_view name) const;
  /// Joints from the root down to `joint`, inclusive.
  std::vector<int> chain_to(int joint) const;
  bool is_ancestor(int ancestor, int joint) const;
};

/// One predicted or ground-truth body pose.
struct PoseOutput {
  RotMatrix global_orient;
  /// Parent-relative rotations of joints 1..21, stored at [joint - 1].
  std::array<RotMatrix, kNumLocal> local_rot{};
  Vec3 root_pos = Vec3::Zero();

  const RotMatrix& local(int joint) const { return local_rot[static_cast<std::size_t>(joint - 1)]; }
  RotMatrix& local(int joint) { return local_rot[static_cast<std::size_t>(joint - 1)]; }
};

struct JointState {
  std::array<Vec3, kNumJoints> pos{};
  std::array<RotMatrix, kNumJoints> orient{};
};

JointState forward_kinematics(const Skeleton& s, const PoseOutput& p);

/// Root position that puts the head joint exactly at `head_pos_world`.
Vec3 root_from_head(const Skeleton& s, const RotMatrix& global_orient,
                    std::span<const RotMatrix, kNumLocal> local_rot, const Vec3& head_pos_world);

/// Global orientation implied by a world head orientation and the local
/// rotations along the root-to-head chain.
RotMatrix global_from_head(const Skeleton& s, const RotMatrix& head_orient_world,
                           std::span<const RotMatrix, kNumLocal> local_rot);

}  // namespace sparsepose
