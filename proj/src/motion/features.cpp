#include "motion/features.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace duet::motion {

Eigen::VectorXd flatten(const MotionFrame& f) {
  const auto n = f.positions.rows();
  Eigen::VectorXd out(12 * n + 4);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.segment<3>(3 * j) = f.positions.row(j).transpose();
    out.segment<3>(3 * n + 3 * j) = f.velocities.row(j).transpose();
    out.segment<6>(6 * n + 6 * j) = f.rotations.row(j).transpose();
  }
  for (int c = 0; c < 4; ++c) out(12 * n + c) = f.contacts[static_cast<std::size_t>(c)];
  return out;
}

MotionFrame unflatten(std::span<const double> flat, int joint_count) {
  const Eigen::Index n = joint_count;
  if (static_cast<Eigen::Index>(flat.size()) != 12 * n + 4) {
    fail(ErrorCode::kInvalidArgument, "unflatten: expected " + std::to_string(12 * n + 4) + " values");
  }
  MotionFrame f;
  f.positions.resize(n, 3);
  f.velocities.resize(n, 3);
  f.rotations.resize(n, 6);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int k = 0; k < 3; ++k) {
      f.positions(j, k) = flat[static_cast<std::size_t>(3 * j + k)];
      f.velocities(j, k) = flat[static_cast<std::size_t>(3 * n + 3 * j + k)];
    }
    for (int k = 0; k < 6; ++k) f.rotations(j, k) = flat[static_cast<std::size_t>(6 * n + 6 * j + k)];
  }
  for (int c = 0; c < 4; ++c) {
    const double v = std::clamp(flat[static_cast<std::size_t>(12 * n + c)], 0.0, 1.0);
    f.contacts[static_cast<std::size_t>(c)] = v >= 0.5 ? 1 : 0;
  }
  return f;
}

Mat3 root_rotation(const JointMat& p, const Skeleton& sk) {
  const Eigen::Vector3d across = (p.row(sk.l_hip) - p.row(sk.r_hip) + p.row(sk.l_shoulder) - p.row(sk.r_shoulder)).transpose();
  Eigen::Vector3d up = (p.row(sk.neck) - p.row(sk.root)).transpose();
  if (up.norm() < 1e-12) up = Eigen::Vector3d::UnitY();
  up.normalize();
  Eigen::Vector3d x = across - across.dot(up) * up;
  Mat3 r;
  if (x.norm() < 1e-12) {
    // Degenerate span: report a vertical facing axis so callers fall back.
    r.col(0) = Eigen::Vector3d::UnitX();
    r.col(1) = Eigen::Vector3d::UnitZ();
    r.col(2) = Eigen::Vector3d::UnitY();
    return r;
  }
  x.normalize();
  r.col(0) = x;
  r.col(1) = up;
  r.col(2) = x.cross(up);
  return r;
}

double frame_yaw(const JointMat& positions, const Skeleton& sk, double fallback) {
  return yaw_from_root_rotation(root_rotation(positions, sk), fallback);
}

std::vector<std::array<std::uint8_t, 4>> foot_contacts(std::span<const std::array<Eigen::Vector3d, 4>> heel_toe,
                                                        double fps, double threshold) {
  const std::size_t t = heel_toe.size();
  if (t < 2) fail(ErrorCode::kInvalidArgument, "foot_contacts: need at least 2 frames");
  std::vector<std::array<std::uint8_t, 4>> out(t);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i == 0 ? 1 : i;
    for (std::size_t k = 0; k < 4; ++k) {
      const double speed = (heel_toe[b][k] - heel_toe[a][k]).norm() * fps;
      out[i][k] = speed < threshold ? 1 : 0;
    }
  }
  return out;
}

std::vector<MotionFrame> compute_features(std::span<const JointMat> positions, const Skeleton& sk, double fps,
                                          double contact_speed) {
  const std::size_t t = positions.size();
  if (t < 2) fail(ErrorCode::kInvalidArgument, "compute_features: need at least 2 frames");
  const Eigen::Index n = sk.joint_count();
  for (std::size_t i = 0; i < t; ++i) {
    if (positions[i].rows() != n) fail(ErrorCode::kInvalidArgument, "compute_features: joint count mismatch");
    if (!positions[i].allFinite()) {
      fail(ErrorCode::kInvalidArgument, "compute_features: non-finite position at frame " + std::to_string(i));
    }
  }

  std::vector<MotionFrame> frames(t);
  std::vector<std::array<Eigen::Vector3d, 4>> feet(t);
  for (std::size_t i = 0; i < t; ++i) {
    MotionFrame& f = frames[i];
    f.positions = positions[i];
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i == 0 ? 1 : i;
    f.velocities = (positions[b] - positions[a]) * fps;

    const Mat3 root = root_rotation(positions[i], sk);
    const double yaw = yaw_from_root_rotation(root, 0.0);
    const Mat3 root_t = root.transpose();
    f.rotations.resize(n, 6);
    for (Eigen::Index j = 0; j < n; ++j) {
      Mat3 rj = Mat3::Identity();
      if (j == sk.root) {
        rj = rotation_y(-yaw) * root;
      } else if (const int c = sk.primary_child[static_cast<std::size_t>(j)]; c >= 0) {
        const Eigen::Vector3d bone = root_t * (positions[i].row(c) - positions[i].row(j)).transpose();
        const Eigen::Vector3d& rest = sk.offsets[static_cast<std::size_t>(c)];
        if (bone.norm() > 1e-12 && rest.norm() > 1e-12) rj = minimal_rotation(rest, bone);
      }
      const Rot6 six = matrix_to_rot6d(rj);
      for (int k = 0; k < 6; ++k) f.rotations(j, k) = six[static_cast<std::size_t>(k)];
    }
    feet[i] = {positions[i].row(sk.l_heel).transpose(), positions[i].row(sk.l_toe).transpose(),
               positions[i].row(sk.r_heel).transpose(), positions[i].row(sk.r_toe).transpose()};
  }
  const auto contacts = foot_contacts(feet, fps, contact_speed);
  for (std::size_t i = 0; i < t; ++i) frames[i].contacts = contacts[i];
  return frames;
}

}  // namespace duet::motion
