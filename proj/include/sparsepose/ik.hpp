#pragma once
// Post-hoc arm refinement: shoulder and elbow rotations are adjusted so the
// wrists approach the tracked hand positions.

#include <span>
#include <vector>

#include "sparsepose/skeleton.hpp"

namespace sparsepose {

enum class IkOptimizer { kAdam, kGradientDescent };

struct IkConfig {
  double lr = 1e-3;
  /// 0 disables refinement.
  std::size_t iters = 5;
  IkOptimizer optimizer = IkOptimizer::kAdam;
};

struct HandTargets {
  Vec3 left = Vec3::Zero();
  Vec3 right = Vec3::Zero();
};

struct IkResult {
  PoseOutput pose;
  /// Sum of squared wrist errors, m^2.
  double initial_error = 0;
  double final_error = 0;
  /// The optimized pose was worse and the input was returned.
  bool fell_back = false;
};

/// Optimizes the 6D codes of both shoulders and elbows against
/// E = |left - wrist_l|^2 + |right - wrist_r|^2. Every other rotation and
/// the root are returned untouched.
IkResult refine_arms(const PoseOutput& pose, const Skeleton& s, const HandTargets& targets,
                     const IkConfig& cfg);

/// Same as refine_arms for each frame, solved as one batched problem.
std::vector<IkResult> refine_arms_batch(std::span<const PoseOutput> poses, const Skeleton& s,
                                        std::span<const HandTargets> targets, const IkConfig& cfg);

}  // namespace sparsepose
