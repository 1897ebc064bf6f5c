#include "audio/beats.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace duet::audio {

namespace {
constexpr double kTimeTol = 1e-9;
}

void BeatTrack::validate() const {
  if (!(bpm > 0.0) || !std::isfinite(bpm)) fail(ErrorCode::kInvalidArgument, "beat track: BPM must be positive");
  if (!(duration >= 0.0)) fail(ErrorCode::kInvalidArgument, "beat track: negative duration");
  if (accents.size() != onsets.size()) fail(ErrorCode::kInvalidArgument, "beat track: one accent per onset required");
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    if (!std::isfinite(onsets[i]) || onsets[i] < 0.0 || onsets[i] >= duration) {
      fail(ErrorCode::kInvalidArgument, "beat track: onset " + std::to_string(i) + " outside [0, duration)");
    }
    if (i > 0 && onsets[i] <= onsets[i - 1]) fail(ErrorCode::kInvalidArgument, "beat track: onsets must increase strictly");
    if (accents[i] < 0 || accents[i] >= kAccentLevels) fail(ErrorCode::kInvalidArgument, "beat track: accent outside 0..3");
  }
}

BeatTrack synthesize_beat_track(double bpm, double duration, std::span<const int> accent_pattern, double offset) {
  if (!(bpm > 0.0)) fail(ErrorCode::kInvalidArgument, "synthesize_beat_track: BPM must be positive");
  if (offset < 0.0) fail(ErrorCode::kInvalidArgument, "synthesize_beat_track: negative offset");
  BeatTrack t;
  t.bpm = bpm;
  t.duration = duration;
  const double period = 60.0 / bpm;
  for (int k = 0;; ++k) {
    const double on = offset + k * period;
    if (on >= duration) break;
    t.onsets.push_back(on);
    t.accents.push_back(accent_pattern.empty() ? 0 : accent_pattern[static_cast<std::size_t>(k) % accent_pattern.size()]);
  }
  t.validate();
  return t;
}

int stream_length(double duration, double hop) {
  if (!(hop > 0.0)) fail(ErrorCode::kInvalidArgument, "audio hop must be positive");
  return static_cast<int>(std::ceil(duration / hop - kTimeTol));
}

AudioTokenStream tokenize_audio(const BeatTrack& track, double hop, int k_a) {
  if (k_a < 8) fail(ErrorCode::kInvalidArgument, "tokenize_audio: K_a must be >= 8");
  track.validate();
  AudioTokenStream s;
  s.hop = hop;
  const int n = stream_length(track.duration, hop);
  s.tokens.assign(static_cast<std::size_t>(n), kSilenceCode);
  const double period = 60.0 / track.bpm;
  std::size_t j = 0;  // index of the next onset not yet passed
  for (int i = 0; i < n; ++i) {
    const double t = i * hop;
    while (j < track.onsets.size() && track.onsets[j] <= t + kTimeTol) ++j;
    if (j == 0) continue;
    const std::size_t b = j - 1;
    const double interval = j < track.onsets.size() ? track.onsets[j] - track.onsets[b] : period;
    const double phase = std::max(0.0, (t - track.onsets[b]) / interval);
    const int bucket = std::min(kPhaseBuckets - 1, static_cast<int>(std::floor(phase * kPhaseBuckets + kTimeTol)));
    const int active = bucket * kAccentLevels + track.accents[b];
    s.tokens[static_cast<std::size_t>(i)] = 1 + active % (k_a - 1);
  }
  return s;
}

nlohmann::json beat_track_to_json(const BeatTrack& t) {
  return {{"bpm", t.bpm}, {"onsets", t.onsets}, {"accents", t.accents}, {"duration", t.duration}};
}

BeatTrack beat_track_from_json(const nlohmann::json& j) {
  BeatTrack t;
  try {
    t.bpm = j.at("bpm");
    t.onsets = j.at("onsets").get<std::vector<double>>();
    t.accents = j.at("accents").get<std::vector<int>>();
    t.duration = j.at("duration");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("beat track: ") + e.what());
  }
  t.validate();
  return t;
}

void write_beat_track(const std::filesystem::path& path, const BeatTrack& t) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << beat_track_to_json(t).dump(2) << '\n';
}

BeatTrack read_beat_track(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot read " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return beat_track_from_json(j);
}

}  // namespace duet::audio
