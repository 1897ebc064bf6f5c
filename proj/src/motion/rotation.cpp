#include "motion/rotation.hpp"

#include <cmath>
#include <numbers>

namespace duet::motion {

double wrap_angle(double radians) { return std::remainder(radians, 2.0 * std::numbers::pi); }

Mat3 rotation_y(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 r;
  r << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
  return r;
}

Rot6 matrix_to_rot6d(const Mat3& r) { return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)}; }

Mat3 rot6d_to_matrix(const Rot6& six) {
  Eigen::Vector3d a1(six[0], six[1], six[2]);
  Eigen::Vector3d a2(six[3], six[4], six[5]);
  if (a1.norm() == 0.0) a1 = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d b1 = a1.normalized();
  Eigen::Vector3d resid = a2 - b1.dot(a2) * b1;
  if (resid.norm() == 0.0) {
    const Eigen::Vector3d axes[3] = {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ()};
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (std::abs(b1.dot(axes[i])) < std::abs(b1.dot(axes[best]))) best = i;
    }
    resid = axes[best] - b1.dot(axes[best]) * b1;
  }
  const Eigen::Vector3d b2 = resid.normalized();
  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b1.cross(b2);
  return out;
}

double yaw_from_root_rotation(const Mat3& r, double fallback) {
  const Eigen::Vector3d f = r.col(2);
  if (std::hypot(f.x(), f.z()) < 1e-9) return fallback;
  return std::atan2(f.x(), f.z());
}

Mat3 minimal_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const Eigen::Vector3d a = from.normalized();
  const Eigen::Vector3d b = to.normalized();
  const double c = a.dot(b);
  if (c < -1.0 + 1e-12) {
    Eigen::Vector3d axis = a.cross(Eigen::Vector3d::UnitX());
    if (axis.norm() < 1e-6) axis = a.cross(Eigen::Vector3d::UnitY());
    return Eigen::AngleAxisd(std::numbers::pi, axis.normalized()).toRotationMatrix();
  }
  const Eigen::Vector3d v = a.cross(b);
  Mat3 k;
  k << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return Mat3::Identity() + k + k * k / (1.0 + c);
}

}  // namespace duet::motion
