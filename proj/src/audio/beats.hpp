#pragma once

#include "json.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace duet::audio {

struct BeatTrack {
  double bpm = 120.0;
  std::vector<double> onsets;  // seconds, strictly increasing, inside [0, duration)
  std::vector<int> accents;    // 0..3, parallel to onsets
  double duration = 0.0;       // seconds

  void validate() const;
};

/// Onsets at offset + k * 60 / bpm for every k with onset < duration; the
/// accent pattern is cycled (empty pattern means accent 0).
BeatTrack synthesize_beat_track(double bpm, double duration, std::span<const int> accent_pattern, double offset = 0.0);

struct AudioTokenStream {
  std::vector<int> tokens;
  double hop = 0.05;
};

inline constexpr int kPhaseBuckets = 8;
inline constexpr int kAccentLevels = 4;
inline constexpr int kSilenceCode = 0;

/// One token per hop: 0 before the first onset (or for silence), otherwise
/// 1 + phase_bucket * 4 + accent, where the phase is the fraction of the
/// current inter-onset interval elapsed. With k_a < 33 the 32 active codes are
/// folded into [1, k_a).
AudioTokenStream tokenize_audio(const BeatTrack& track, double hop = 0.05, int k_a = 512);

/// Stream length law: ceil(duration / hop).
int stream_length(double duration, double hop);

nlohmann::json beat_track_to_json(const BeatTrack& t);
BeatTrack beat_track_from_json(const nlohmann::json& j);
void write_beat_track(const std::filesystem::path& path, const BeatTrack& t);
BeatTrack read_beat_track(const std::filesystem::path& path);

}  // namespace duet::audio
