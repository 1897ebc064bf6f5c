#pragma once

#include <Eigen/Dense>

#include <array>

namespace duet::motion {

using Mat3 = Eigen::Matrix3d;
using Rot6 = std::array<double, 6>;

/// Wraps an angle into [-pi, pi] (pi itself is kept).
double wrap_angle(double radians);

/// Rotation about +Y; maps +Z to (sin yaw, 0, cos yaw).
Mat3 rotation_y(double yaw);

/// First two columns of R: (R00, R10, R20, R01, R11, R21).
Rot6 matrix_to_rot6d(const Mat3& r);

/// Gram-Schmidt decode. A zero first column falls back to +X; a second column
/// exactly parallel to the first is replaced by the world axis least aligned
/// with the first column.
Mat3 rot6d_to_matrix(const Rot6& six);

/// Heading of a root rotation: its +Z axis projected on the ground plane.
/// Returns `fallback` when that projection is degenerate (axis near vertical).
double yaw_from_root_rotation(const Mat3& r, double fallback);

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
Mat3 minimal_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to);

}  // namespace duet::motion
