#include "motion/relation.hpp"

#include "common/error.hpp"

#include <cmath>

namespace duet::motion {

RootPose root_pose(const MotionFrame& f, const Skeleton& sk, double fallback_yaw) {
  return {f.positions(sk.root, 0), f.positions(sk.root, 2), frame_yaw(f.positions, sk, fallback_yaw)};
}

RelationFrame relation_from_poses(const RootPose& leader, const RootPose& follower) {
  const double dx = follower.x - leader.x;
  const double dz = follower.z - leader.z;
  const double c = std::cos(leader.yaw);
  const double s = std::sin(leader.yaw);
  return {c * dx - s * dz, s * dx + c * dz, wrap_angle(follower.yaw - leader.yaw)};
}

RootPose follower_from_relation(const RootPose& leader, const RelationFrame& rel) {
  const double c = std::cos(leader.yaw);
  const double s = std::sin(leader.yaw);
  return {leader.x + c * rel.x + s * rel.z, leader.z - s * rel.x + c * rel.z, wrap_angle(leader.yaw + rel.theta)};
}

std::vector<double> yaw_track(std::span<const MotionFrame> frames, const Skeleton& sk) {
  std::vector<double> out(frames.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    prev = frame_yaw(frames[i].positions, sk, prev);
    out[i] = prev;
  }
  return out;
}

std::vector<RelationFrame> relation_track(std::span<const MotionFrame> leader, std::span<const MotionFrame> follower,
                                          const Skeleton& sk) {
  if (leader.size() != follower.size()) fail(ErrorCode::kInvalidArgument, "relation_track: track lengths differ");
  const auto yl = yaw_track(leader, sk);
  const auto yf = yaw_track(follower, sk);
  std::vector<RelationFrame> out(leader.size());
  for (std::size_t i = 0; i < leader.size(); ++i) {
    const RootPose pl{leader[i].positions(sk.root, 0), leader[i].positions(sk.root, 2), yl[i]};
    const RootPose pf{follower[i].positions(sk.root, 0), follower[i].positions(sk.root, 2), yf[i]};
    out[i] = relation_from_poses(pl, pf);
  }
  return out;
}

}  // namespace duet::motion
