#pragma once
// Rotation encodings: axis-angle, 3x3 matrix and the continuous 6D code
// (first two matrix rows). All geometry is double precision.

#include <Eigen/Core>
#include <array>

namespace sparsepose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation vector: unit axis scaled by the angle in radians.
struct AxisAngle {
  Vec3 v = Vec3::Zero();
};

struct RotMatrix {
  Mat3 m = Mat3::Identity();

  static RotMatrix identity() { return {}; }
  RotMatrix operator*(const RotMatrix& rhs) const { return {m * rhs.m}; }
  Vec3 operator*(const Vec3& x) const { return m * x; }
  RotMatrix transpose() const { return {m.transpose()}; }
};

/// Rows 0 and 1 of a rotation matrix, row-major: (r00 r01 r02 r10 r11 r12).
/// Raw network outputs need not be normalized.
struct Rotation6D {
  std::array<double, 6> r{1, 0, 0, 0, 1, 0};
};

/// Rodrigues' formula. Throws InvalidArgument on non-finite input.
RotMatrix axis_angle_to_matrix(const AxisAngle& a);

/// Canonical rotation vector with angle in [0, pi]. At exactly pi the axis
/// sign is chosen so that its first non-zero component is positive.
AxisAngle matrix_to_axis_angle(const RotMatrix& r);

Rotation6D matrix_to_6d(const RotMatrix& r);

/// Gram-Schmidt: b1 = n(a1), b2 = n(a2 - (b1.a2) b1), b3 = b1 x b2, returned
/// as matrix rows. Throws DegenerateRotation for zero or parallel rows.
RotMatrix recover_6d(const Rotation6D& code);

/// Relative rotation prev^T * cur.
RotMatrix angular_velocity(const RotMatrix& prev, const RotMatrix& cur);

/// Geodesic distance on SO(3), in radians within [0, pi].
double geodesic_angle(const RotMatrix& a, const RotMatrix& b);

RotMatrix rot_x(double angle);
RotMatrix rot_y(double angle);
RotMatrix rot_z(double angle);

/// Orthonormal with determinant +1, within `tol`.
bool is_rotation(const Mat3& m, double tol = 1e-6);

}  // namespace sparsepose
