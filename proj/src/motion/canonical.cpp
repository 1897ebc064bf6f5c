#include "motion/canonical.hpp"

#include "common/error.hpp"
#include "motion/duet.hpp"

#include <cmath>

namespace duet::motion {

Eigen::Vector3d RigidTransform2D::apply(const Eigen::Vector3d& p) const {
  return rotate(p) + Eigen::Vector3d(tx, 0.0, tz);
}

Eigen::Vector3d RigidTransform2D::rotate(const Eigen::Vector3d& v) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x() + s * v.z(), v.y(), -s * v.x() + c * v.z()};
}

RigidTransform2D RigidTransform2D::inverse() const {
  RigidTransform2D inv{0.0, 0.0, -yaw};
  const Eigen::Vector3d t = inv.rotate(Eigen::Vector3d(tx, 0.0, tz));
  inv.tx = -t.x();
  inv.tz = -t.z();
  return inv;
}

RigidTransform2D RigidTransform2D::compose(const RigidTransform2D& other) const {
  const Eigen::Vector3d t = apply(Eigen::Vector3d(other.tx, 0.0, other.tz));
  return {t.x(), t.z(), yaw + other.yaw};
}

RootPose RigidTransform2D::apply(const RootPose& pose) const {
  const Eigen::Vector3d p = apply(Eigen::Vector3d(pose.x, 0.0, pose.z));
  return {p.x(), p.z(), wrap_angle(pose.yaw + yaw)};
}

MotionFrame transform_frame(const MotionFrame& f, const RigidTransform2D& t) {
  MotionFrame out = f;
  for (Eigen::Index j = 0; j < f.positions.rows(); ++j) {
    out.positions.row(j) = t.apply(f.positions.row(j).transpose()).transpose();
    out.velocities.row(j) = t.rotate(f.velocities.row(j).transpose()).transpose();
  }
  return out;
}

std::vector<MotionFrame> transform_frames(std::span<const MotionFrame> frames, const RigidTransform2D& t) {
  std::vector<MotionFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(transform_frame(f, t));
  return out;
}

MotionWindow canonicalize_window(std::span<const MotionFrame> frames, const Skeleton& sk, int start,
                                 double fallback_yaw) {
  if (frames.empty()) fail(ErrorCode::kInvalidArgument, "canonicalize_window: empty window");
  const RootPose p0 = root_pose(frames.front(), sk, fallback_yaw);
  MotionWindow w;
  w.to_world = {p0.x, p0.z, p0.yaw};
  w.frames = transform_frames(frames, w.to_world.inverse());
  w.start = start;
  return w;
}

std::vector<MotionFrame> invert_canonicalization(const MotionWindow& w) { return transform_frames(w.frames, w.to_world); }

std::vector<DuetWindow> windowize(const DuetSequence& seq, int tau, int stride) {
  if (tau <= 0 || stride <= 0) fail(ErrorCode::kInvalidArgument, "windowize: tau and stride must be positive");
  std::vector<DuetWindow> out;
  const int t = static_cast<int>(seq.leader.size());
  if (t < tau) return out;
  const auto yl = yaw_track(seq.leader, seq.skeleton);
  const auto yf = yaw_track(seq.follower, seq.skeleton);
  for (int s = 0; s + tau <= t; s += stride) {
    DuetWindow w;
    w.start = s;
    const std::span<const MotionFrame> lead(seq.leader.data() + s, static_cast<std::size_t>(tau));
    const std::span<const MotionFrame> foll(seq.follower.data() + s, static_cast<std::size_t>(tau));
    const double fl = s > 0 ? yl[static_cast<std::size_t>(s - 1)] : 0.0;
    const double ff = s > 0 ? yf[static_cast<std::size_t>(s - 1)] : 0.0;
    w.leader = canonicalize_window(lead, seq.skeleton, s, fl);
    w.follower = canonicalize_window(foll, seq.skeleton, s, ff);
    w.relation.assign(seq.relation.begin() + s, seq.relation.begin() + s + tau);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace duet::motion
