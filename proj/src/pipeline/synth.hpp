#pragma once

#include "audio/beats.hpp"
#include "motion/duet.hpp"

#include "json.hpp"

#include <array>
#include <string>
#include <vector>

namespace duet::pipeline {

enum class Move { kBasic = 0, kSide = 1, kTurn = 2, kTravel = 3 };
inline constexpr int kMoveCount = 4;
inline constexpr int kBeatsPerMove = 8;

const char* move_name(Move m);

struct StyleSpec {
  std::string name;
  std::array<double, kMoveCount> move_probs;  // next-move distribution, sums to 1
  double step_length = 0.12;                  // metres per beat
  double arm_swing = 0.5;                     // radians
};

struct SyntheticDuetSpec {
  double bpm = 120.0;
  double duration = 60.0;  // seconds
  double fps = motion::kFps;
  std::vector<StyleSpec> styles;
  int follower_lag = 2;        // frames
  double leader_drift = 0.05;  // max |timing jitter| of leader beats, seconds
  double noise = 1.0;          // relation wobble amplitude scale
  double min_distance = 0.7, max_distance = 1.4;  // follower root distance from leader
  double max_bearing = 0.6;    // follower bearing off the leader's forward axis, radians
  double max_facing = 0.5;     // deviation of the relative heading from pi, radians
  bool random_beat_offset = true;
  std::vector<int> accent_pattern{2, 0, 1, 0};
  unsigned seed = 1;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// salsa, bachata and merengue presets.
std::vector<StyleSpec> default_styles();
SyntheticDuetSpec default_synthetic_spec();

struct SyntheticSequence {
  motion::DuetSequence duet;
  audio::BeatTrack beats;
  std::vector<Move> moves;
  motion::RelationFrame target_relation;
};

/// Leader root placement as a function of the beat coordinate u (beats since
/// the first onset), for a program of moves starting at the origin facing +Z.
motion::RootPose program_pose(std::span<const Move> moves, double u, double step_length);

/// Deterministic in `spec` (including its seed) and `count`.
std::vector<SyntheticSequence> generate_synthetic_corpus(const SyntheticDuetSpec& spec, int count);

}  // namespace duet::pipeline
