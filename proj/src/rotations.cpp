#include "sparsepose/rotations.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "sparsepose/errors.hpp"

namespace sparsepose {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 k;
  k << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return k;
}

Vec3 vee_antisymmetric(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

}  // namespace

RotMatrix axis_angle_to_matrix(const AxisAngle& a) {
  if (!a.v.allFinite()) throw InvalidArgument("axis_angle_to_matrix: non-finite input");
  const double theta = a.v.norm();
  const Mat3 k = skew(a.v);
  if (theta < 1e-8) {
    // Second-order Taylor expansion; exact identity at zero.
    return {Mat3::Identity() + k + 0.5 * k * k};
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return {Mat3::Identity() + s * k + c * k * k};
}

AxisAngle matrix_to_axis_angle(const RotMatrix& r) {
  const Mat3& m = r.m;
  const double cos_theta = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3 w = vee_antisymmetric(m);  // 2 sin(theta) * axis
  if (theta < 1e-6) return {0.5 * w};
  if (theta < 2.5) return {w * (theta / (2.0 * std::sin(theta)))};

  // Near pi the antisymmetric part vanishes; read the axis from the
  // symmetric part, a a^T = (S - cos I) / (1 - cos).
  const Mat3 aat = (0.5 * (m + m.transpose()) - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
  Eigen::Index col = 0;
  aat.diagonal().maxCoeff(&col);
  Vec3 axis = aat.col(col) / std::sqrt(std::max(aat(col, col), 1e-300));
  axis.normalize();
  const double along = axis.dot(w);
  if (std::abs(along) > 1e-12) {
    if (along < 0) axis = -axis;
  } else {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
  }
  return {axis * theta};
}

Rotation6D matrix_to_6d(const RotMatrix& r) {
  const Mat3& m = r.m;
  return {{m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2)}};
}

RotMatrix recover_6d(const Rotation6D& code) {
  const Vec3 a1(code.r[0], code.r[1], code.r[2]);
  const Vec3 a2(code.r[3], code.r[4], code.r[5]);
  if (!a1.allFinite() || !a2.allFinite())
    throw DegenerateRotation("recover_6d: non-finite 6D code");
  const double n1 = a1.norm();
  const double n2 = a2.norm();
  if (n1 < 1e-12 || n2 < 1e-12) throw DegenerateRotation("recover_6d: zero row in 6D code");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double nu = u2.norm();
  if (nu < 1e-9 * n2) throw DegenerateRotation("recover_6d: parallel rows in 6D code");
  const Vec3 b2 = u2 / nu;
  const Vec3 b3 = b1.cross(b2);
  RotMatrix out;
  out.m.row(0) = b1.transpose();
  out.m.row(1) = b2.transpose();
  out.m.row(2) = b3.transpose();
  return out;
}

RotMatrix angular_velocity(const RotMatrix& prev, const RotMatrix& cur) {
  return {prev.m.transpose() * cur.m};
}

double geodesic_angle(const RotMatrix& a, const RotMatrix& b) {
  // atan2(sin, cos) of the relative rotation; unlike acos of the trace alone
  // this stays accurate near 0 and is exactly 0 for a == b.
  const Mat3 rel = a.m.transpose() * b.m;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double s = 0.5 * vee_antisymmetric(rel).norm();
  return std::atan2(s, c);
}

RotMatrix rot_x(double angle) {
  return {Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix()};
}
RotMatrix rot_y(double angle) {
  return {Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix()};
}
RotMatrix rot_z(double angle) {
  return {Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix()};
}

bool is_rotation(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  if (((m.transpose() * m) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(m.determinant() - 1.0) <= tol;
}

}  // namespace sparsepose
