#include "motion/skeleton.hpp"

#include "common/error.hpp"

#include <cmath>

namespace duet::motion {

void Skeleton::validate() const {
  const int n = joint_count();
  if (n == 0) fail(ErrorCode::kInvalidArgument, "skeleton has no joints");
  if (static_cast<int>(offsets.size()) != n || static_cast<int>(names.size()) != n ||
      static_cast<int>(primary_child.size()) != n) {
    fail(ErrorCode::kInvalidArgument, "skeleton arrays have inconsistent lengths");
  }
  for (int idx : {root, l_hip, r_hip, spine, l_knee, r_knee, l_heel, r_heel, l_toe, r_toe, neck, head, l_shoulder,
                  r_shoulder, l_elbow, r_elbow, l_wrist, r_wrist}) {
    if (idx < 0 || idx >= n) fail(ErrorCode::kInvalidArgument, "named joint index out of range");
  }
  if (parents[static_cast<std::size_t>(root)] != -1) fail(ErrorCode::kInvalidArgument, "root must have parent -1");
  for (int j = 0; j < n; ++j) {
    if (!offsets[static_cast<std::size_t>(j)].allFinite()) fail(ErrorCode::kInvalidArgument, "non-finite rest offset");
    if (j == root) continue;
    int cur = j;
    for (int steps = 0; cur != root; ++steps) {
      const int p = parents[static_cast<std::size_t>(cur)];
      if (p < 0 || p >= n || steps > n) fail(ErrorCode::kInvalidArgument, "parent array is not a tree rooted at root");
      cur = p;
    }
    const int c = primary_child[static_cast<std::size_t>(j)];
    if (c >= 0 && parents[static_cast<std::size_t>(c)] != j) {
      fail(ErrorCode::kInvalidArgument, "primary child is not a child of its joint");
    }
  }
}

Skeleton Skeleton::smpl22() {
  Skeleton s;
  s.names = {"pelvis",     "left_hip",   "right_hip",      "spine1",         "left_knee",  "right_knee",
             "spine2",     "left_ankle", "right_ankle",    "spine3",         "left_foot",  "right_foot",
             "neck",       "left_collar", "right_collar",  "head",           "left_shoulder", "right_shoulder",
             "left_elbow", "right_elbow", "left_wrist",    "right_wrist"};
  s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  s.offsets = {
      {0.0, 0.0, 0.0},      {0.06, -0.09, 0.0},   {-0.06, -0.09, 0.0},  {0.0, 0.11, -0.02},
      {0.04, -0.38, 0.0},   {-0.04, -0.38, 0.0},  {0.0, 0.14, 0.01},    {-0.01, -0.40, -0.04},
      {0.01, -0.40, -0.04}, {0.0, 0.06, 0.02},    {0.04, -0.06, 0.12},  {-0.04, -0.06, 0.12},
      {0.0, 0.21, -0.03},   {0.08, 0.12, -0.02},  {-0.08, 0.12, -0.02}, {0.0, 0.09, 0.05},
      {0.12, 0.04, -0.01},  {-0.12, 0.04, -0.01}, {0.26, 0.0, -0.02},   {-0.26, 0.0, -0.02},
      {0.25, 0.0, 0.0},     {-0.25, 0.0, 0.0},
  };
  s.primary_child = {3, 4, 5, 6, 7, 8, 9, 10, 11, 12, -1, -1, 15, 16, 17, -1, 18, 19, 20, 21, -1, -1};
  return s;
}

std::vector<Eigen::Vector3d> Skeleton::rest_positions(const Eigen::Vector3d& root_pos) const {
  std::vector<Eigen::Vector3d> p(offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    const int par = parents[j];
    p[j] = par < 0 ? root_pos : p[static_cast<std::size_t>(par)] + offsets[j];
  }
  return p;
}

}  // namespace duet::motion
