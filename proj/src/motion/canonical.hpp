#pragma once

#include "motion/features.hpp"
#include "motion/relation.hpp"

#include <span>
#include <vector>

namespace duet::motion {

/// Ground-plane rigid transform: p -> R_y(yaw) p + (tx, 0, tz).
struct RigidTransform2D {
  double tx = 0.0;
  double tz = 0.0;
  double yaw = 0.0;

  [[nodiscard]] Eigen::Vector3d apply(const Eigen::Vector3d& p) const;
  [[nodiscard]] Eigen::Vector3d rotate(const Eigen::Vector3d& v) const;
  [[nodiscard]] RigidTransform2D inverse() const;
  /// (this * other)(p) = this(other(p))
  [[nodiscard]] RigidTransform2D compose(const RigidTransform2D& other) const;
  [[nodiscard]] RootPose apply(const RootPose& pose) const;
};

/// Positions are transformed, velocities rotated; root-space rotations and
/// contacts are frame-invariant and copied.
MotionFrame transform_frame(const MotionFrame& f, const RigidTransform2D& t);
std::vector<MotionFrame> transform_frames(std::span<const MotionFrame> frames, const RigidTransform2D& t);

/// Canonicalized segment plus the transform mapping it back to the world.
struct MotionWindow {
  std::vector<MotionFrame> frames;
  RigidTransform2D to_world;
  int start = 0;
};

/// Moves the first frame's root to the XZ origin facing +Z. A degenerate first
/// heading uses `fallback_yaw`.
MotionWindow canonicalize_window(std::span<const MotionFrame> frames, const Skeleton& sk, int start = 0,
                                 double fallback_yaw = 0.0);

std::vector<MotionFrame> invert_canonicalization(const MotionWindow& w);

struct DuetWindow {
  MotionWindow leader;
  MotionWindow follower;
  std::vector<RelationFrame> relation;  // copied, not canonicalized
  int start = 0;
};

struct DuetSequence;

/// Splits into windows of `tau` frames every `stride` frames; trailing frames
/// that do not fill a window are dropped. Empty when the sequence is shorter
/// than `tau`.
std::vector<DuetWindow> windowize(const DuetSequence& seq, int tau, int stride);

}  // namespace duet::motion
