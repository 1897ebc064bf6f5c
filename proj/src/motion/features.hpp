#pragma once

#include "motion/rotation.hpp"
#include "motion/skeleton.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace duet::motion {

inline constexpr double kFps = 20.0;
inline constexpr double kContactSpeed = 0.05;  // m/s, strict

using JointMat = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using RotMat = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

/// Per-frame state of one dancer: world positions and velocities, root-space
/// 6D joint rotations, and heel/toe contacts (left heel, left toe, right heel,
/// right toe).
struct MotionFrame {
  JointMat positions;
  JointMat velocities;
  RotMat rotations;
  std::array<std::uint8_t, 4> contacts{};
};

[[nodiscard]] constexpr int feature_dim(int joint_count) { return 12 * joint_count + 4; }

/// Flat layout: positions (3N) | velocities (3N) | rotations (6N) | contacts (4).
Eigen::VectorXd flatten(const MotionFrame& f);

/// Inverse of flatten. Contact channels are clamped to [0,1] and thresholded
/// at 0.5.
MotionFrame unflatten(std::span<const double> flat, int joint_count);

/// Root orientation from hip/shoulder span and pelvis-to-neck axis.
Mat3 root_rotation(const JointMat& positions, const Skeleton& sk);

/// Heading of a pose; `fallback` when the facing axis is vertical.
double frame_yaw(const JointMat& positions, const Skeleton& sk, double fallback);

/// Builds MotionFrames from raw joint positions (T >= 2). Velocity of frame 0
/// copies frame 1. Throws duet::Error naming the first non-finite frame.
std::vector<MotionFrame> compute_features(std::span<const JointMat> positions, const Skeleton& sk, double fps = kFps,
                                          double contact_speed = kContactSpeed);

/// Flag = 1 iff joint speed < threshold. `heel_toe` holds, per frame, the
/// positions of left heel, left toe, right heel, right toe.
std::vector<std::array<std::uint8_t, 4>> foot_contacts(std::span<const std::array<Eigen::Vector3d, 4>> heel_toe,
                                                        double fps, double threshold = kContactSpeed);

}  // namespace duet::motion
