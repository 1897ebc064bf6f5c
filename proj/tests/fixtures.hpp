#pragma once

#include "motion/canonical.hpp"
#include "motion/duet.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace fixtures {

using duet::motion::JointMat;
using duet::motion::Skeleton;

/// Rest pose placed at (x, z) with heading `yaw`, arms swung by `swing` rad.
inline JointMat posed(const Skeleton& sk, double x, double z, double yaw, double swing = 0.0, double height = 0.95) {
  auto rest = sk.rest_positions(Eigen::Vector3d(0.0, height, 0.0));
  const Eigen::Matrix3d arm = Eigen::AngleAxisd(swing, Eigen::Vector3d::UnitX()).toRotationMatrix();
  for (int j : {sk.l_elbow, sk.l_wrist, sk.r_elbow, sk.r_wrist}) {
    const int sh = (j == sk.l_elbow || j == sk.l_wrist) ? sk.l_shoulder : sk.r_shoulder;
    rest[static_cast<std::size_t>(j)] = rest[static_cast<std::size_t>(sh)] +
                                        arm * (rest[static_cast<std::size_t>(j)] - rest[static_cast<std::size_t>(sh)]);
  }
  const Eigen::Matrix3d r = duet::motion::rotation_y(yaw);
  JointMat p(sk.joint_count(), 3);
  for (int j = 0; j < sk.joint_count(); ++j) {
    p.row(j) = (r * rest[static_cast<std::size_t>(j)] + Eigen::Vector3d(x, 0.0, z)).transpose();
  }
  return p;
}

/// Wandering, turning, arm-swinging track.
inline std::vector<JointMat> random_track(const Skeleton& sk, int frames, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double x = 3.0 * u(rng), z = 3.0 * u(rng), yaw = 3.0 * u(rng);
  const double vx = 0.5 * u(rng), vz = 0.5 * u(rng), w = 0.8 * u(rng), ph = u(rng);
  std::vector<JointMat> out;
  for (int i = 0; i < frames; ++i) {
    const double t = i / 20.0;
    out.push_back(posed(sk, x + vx * t, z + vz * t + 0.05 * std::sin(3 * t), yaw + w * t, 0.6 * std::sin(2 * t + ph)));
  }
  return out;
}

inline duet::motion::DuetSequence random_duet(const Skeleton& sk, int frames, std::mt19937_64& rng) {
  auto a = random_track(sk, frames, rng);
  auto b = random_track(sk, frames, rng);
  return duet::motion::make_duet(a, b, sk);
}

}  // namespace fixtures
