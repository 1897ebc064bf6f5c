#pragma once

#include "motion/features.hpp"

#include <span>
#include <vector>

namespace duet::motion {

/// Ground-plane placement of a dancer's root.
struct RootPose {
  double x = 0.0;
  double z = 0.0;
  double yaw = 0.0;
};

/// Follower root offset and heading expressed in the leader's ground frame.
struct RelationFrame {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;  // wrapped into [-pi, pi]
};

RootPose root_pose(const MotionFrame& f, const Skeleton& sk, double fallback_yaw = 0.0);

RelationFrame relation_from_poses(const RootPose& leader, const RootPose& follower);

/// Inverse of relation_from_poses with respect to the follower.
RootPose follower_from_relation(const RootPose& leader, const RelationFrame& rel);

/// Relation per frame; degenerate headings reuse the previous frame's yaw.
std::vector<RelationFrame> relation_track(std::span<const MotionFrame> leader, std::span<const MotionFrame> follower,
                                          const Skeleton& sk);

/// Per-frame headings with the previous-yaw fallback (first frame falls back to 0).
std::vector<double> yaw_track(std::span<const MotionFrame> frames, const Skeleton& sk);

}  // namespace duet::motion
