#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace duet::motion {

/// Kinematic tree. Y-up world, ground = XZ plane, rest pose faces +Z.
struct Skeleton {
  std::vector<std::string> names;
  std::vector<int> parents;                // -1 for the root
  std::vector<Eigen::Vector3d> offsets;    // rest offset from parent, meters
  std::vector<int> primary_child;          // bone used for the joint's rotation; -1 for leaves

  int root = 0;
  int l_hip = 1, r_hip = 2, spine = 3;
  int l_knee = 4, r_knee = 5;
  int l_heel = 7, r_heel = 8, l_toe = 10, r_toe = 11;
  int neck = 12, head = 15;
  int l_shoulder = 16, r_shoulder = 17, l_elbow = 18, r_elbow = 19, l_wrist = 20, r_wrist = 21;

  [[nodiscard]] int joint_count() const { return static_cast<int>(parents.size()); }

  /// Throws duet::Error when the parent array is not a tree rooted at `root`,
  /// a named index is out of range, or an offset is non-finite.
  void validate() const;

  /// 22-joint SMPL-style body.
  static Skeleton smpl22();

  /// Rest-pose joint positions with the root at `root_pos`.
  [[nodiscard]] std::vector<Eigen::Vector3d> rest_positions(const Eigen::Vector3d& root_pos) const;
};

}  // namespace duet::motion
