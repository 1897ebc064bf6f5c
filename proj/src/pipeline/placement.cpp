#include "pipeline/placement.hpp"

#include "common/error.hpp"
#include "motion/rotation.hpp"

#include <cmath>

namespace duet::pipeline {

using motion::RootPose;

motion::RelationFrame mean_relation(std::span<const motion::RelationFrame> rels) {
  if (rels.empty()) fail(ErrorCode::kInvalidArgument, "mean_relation: empty input");
  double x = 0, z = 0, s = 0, c = 0;
  for (const auto& r : rels) {
    x += r.x;
    z += r.z;
    s += std::sin(r.theta);
    c += std::cos(r.theta);
  }
  const double n = static_cast<double>(rels.size());
  return {x / n, z / n, std::atan2(s, c)};
}

RootPose blend_poses(const RootPose& anchor, const RootPose& continuation, double blend) {
  const double a = 1.0 - blend;
  return {a * anchor.x + blend * continuation.x, a * anchor.z + blend * continuation.z,
          std::atan2(a * std::sin(anchor.yaw) + blend * std::sin(continuation.yaw),
                     a * std::cos(anchor.yaw) + blend * std::cos(continuation.yaw))};
}

std::vector<motion::JointMat> place_follower(std::span<const std::vector<motion::MotionFrame>> windows,
                                             std::span<const motion::MotionFrame> leader, const motion::Skeleton& sk,
                                             const motion::RelationFrame& rel, double blend) {
  if (windows.empty()) fail(ErrorCode::kInvalidArgument, "place_follower: no windows");
  if (blend < 0.0 || blend > 1.0) fail(ErrorCode::kInvalidArgument, "place_follower: blend must be in [0, 1]");
  const int n = static_cast<int>(leader.size());
  std::vector<motion::JointMat> out;
  out.reserve(leader.size());
  RootPose prev_last, prev_before;
  for (std::size_t k = 0; k < windows.size() && static_cast<int>(out.size()) < n; ++k) {
    const auto& w = windows[k];
    if (w.empty()) fail(ErrorCode::kInvalidArgument, "place_follower: empty window");
    const int start = static_cast<int>(out.size());
    RootPose target = motion::follower_from_relation(motion::root_pose(leader[static_cast<std::size_t>(start)], sk), rel);
    if (k > 0) {
      const RootPose cont{2.0 * prev_last.x - prev_before.x, 2.0 * prev_last.z - prev_before.z,
                          motion::wrap_angle(prev_last.yaw + motion::wrap_angle(prev_last.yaw - prev_before.yaw))};
      target = blend_poses(target, cont, blend);
    }
    const RootPose c0 = motion::root_pose(w.front(), sk);
    const motion::RigidTransform2D t =
        motion::RigidTransform2D{target.x, target.z, target.yaw}.compose(motion::RigidTransform2D{c0.x, c0.z, c0.yaw}.inverse());
    for (const auto& f : w) {
      if (static_cast<int>(out.size()) >= n) break;
      out.push_back(motion::transform_frame(f, t).positions);
    }
    const std::size_t m = out.size();
    double yaw_last = motion::frame_yaw(out[m - 1], sk, target.yaw);
    const motion::JointMat& before = m >= 2 ? out[m - 2] : out[m - 1];
    prev_before = {before(sk.root, 0), before(sk.root, 2), motion::frame_yaw(before, sk, yaw_last)};
    prev_last = {out[m - 1](sk.root, 0), out[m - 1](sk.root, 2), yaw_last};
  }
  while (static_cast<int>(out.size()) < n) out.push_back(out.back());
  return out;
}

}  // namespace duet::pipeline
