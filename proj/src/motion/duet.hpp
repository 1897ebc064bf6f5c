#pragma once

#include "motion/features.hpp"
#include "motion/relation.hpp"
#include "motion/skeleton.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace duet::motion {

/// Leader and follower tracks in a shared world frame plus the derived
/// relation track.
struct DuetSequence {
  double fps = kFps;
  Skeleton skeleton = Skeleton::smpl22();
  std::vector<MotionFrame> leader;
  std::vector<MotionFrame> follower;
  std::vector<RelationFrame> relation;
  std::optional<std::string> style;
  std::optional<std::vector<double>> beat_times;  // seconds
  std::optional<std::vector<int>> beat_accents;   // parallel to beat_times
  std::optional<double> bpm;

  [[nodiscard]] int length() const { return static_cast<int>(leader.size()); }

  /// Equal track lengths and relation consistent with the motion tracks.
  void validate(double tol = 1e-6) const;

  /// Recomputes the relation track from the two motion tracks.
  void refresh_relation();
};

DuetSequence make_duet(std::span<const JointMat> leader_positions, std::span<const JointMat> follower_positions,
                       const Skeleton& sk, double fps = kFps);

std::vector<JointMat> positions_of(std::span<const MotionFrame> frames);

/// Duet motion file (magic "DUET"); see docs/formats.md. Features are stored
/// alongside positions so decoded tracks round-trip exactly.
void write_duet(const std::filesystem::path& path, const DuetSequence& seq);
DuetSequence read_duet(const std::filesystem::path& path);

}  // namespace duet::motion
