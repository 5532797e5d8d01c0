#pragma once
// Differentiable counterparts of recover_6d and forward kinematics, built
// from autodiff primitives so gradients flow through Gram-Schmidt and the
// kinematic chain.

#include "sparsepose/autodiff.hpp"
#include "sparsepose/skeleton.hpp"

namespace sparsepose::ad {

/// [..., 6] codes -> [..., 3, 3] rotation matrices (rows b1, b2, b3).
Tensor recover_6d(const Tensor& codes);

/// [..., 3, 3] -> [..., 6] (first two rows).
Tensor matrix_to_6d(const Tensor& rot);

struct FkResult {
  Tensor positions;  // [B, 22, 3], root at the origin
  Tensor orients;    // [B, 22, 3, 3]
};

/// Forward kinematics with the root placed at the origin.
/// global: [B, 3, 3]; local: [B, 21, 3, 3].
FkResult forward_kinematics(const Skeleton& s, const Tensor& global, const Tensor& local);

/// World head orientation [B, 3, 3] composed with the inverse of the
/// root-to-head chain of `local` [B, 21, 3, 3].
Tensor global_from_head(const Skeleton& s, const Tensor& head_orient, const Tensor& local);

Tensor from_matrix(const RotMatrix& r);
Tensor from_vec3(const Vec3& v);

}  // namespace sparsepose::ad
