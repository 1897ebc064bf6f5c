#pragma once

// World-frame placement of generated follower windows.

#include "motion/canonical.hpp"
#include "motion/relation.hpp"

#include <span>
#include <vector>

namespace duet::pipeline {

/// Circular mean of relations (x, z averaged, theta via mean sin/cos).
motion::RelationFrame mean_relation(std::span<const motion::RelationFrame> rels);

/// Target root pose of window k: the anchor from the leader root at the
/// window's first frame and `rel`, blended for k > 0 with the previous
/// window's last follower pose extrapolated by one frame. `blend` is the
/// weight of that continuation pose (0.5 = equal weights).
motion::RootPose blend_poses(const motion::RootPose& anchor, const motion::RootPose& continuation, double blend);

/// Maps decoded canonical windows (tau frames each) into the world frame and
/// concatenates them. The result has leader.size() frames; frames past the
/// last window hold its final pose.
std::vector<motion::JointMat> place_follower(std::span<const std::vector<motion::MotionFrame>> windows,
                                             std::span<const motion::MotionFrame> leader, const motion::Skeleton& sk,
                                             const motion::RelationFrame& rel, double blend = 0.5);

}  // namespace duet::pipeline
