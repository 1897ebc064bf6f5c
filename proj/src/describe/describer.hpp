#pragma once

#include "motion/canonical.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace duet::describe {

inline constexpr double kDisplacement = 0.2;  // meters
inline constexpr double kTurn = 0.5235987755982988;  // 30 degrees
inline constexpr double kFastSpeed = 1.5;     // m/s, mean joint speed
inline constexpr double kSlowLow = 0.05;
inline constexpr double kSlowHigh = 0.3;

enum class Trigger {
  kRise,            // joint height change * sign > threshold, optionally ending above `other`
  kRootShift,       // root displacement along axis * sign > threshold
  kReach,           // (joint - root) displacement along axis * sign > threshold
  kGap,             // change of |joint - other| * sign > threshold
  kTurn,            // yaw change * sign > threshold
  kTurnAround,      // |yaw change| > threshold
  kLean,            // final (neck - root) along forward * sign > threshold
  kFootOff,         // fraction of frames with heel and toe both off the ground >= threshold
  kSpeedAbove,      // mean joint speed > threshold
  kSpeedBetween,    // threshold < mean joint speed <= upper
};

/// Canonical frame axes: x = dancer's left, y = up, z = forward. Positive yaw
/// change is counterclockwise seen from above.
struct CaptionRule {
  int id = 0;
  std::string phrase;
  Trigger trigger = Trigger::kRise;
  int joint = 0;
  int other = -1;
  int axis = 1;
  double sign = 1.0;
  double threshold = 0.0;
  double upper = 0.0;
};

struct Caption {
  std::vector<std::string> phrases;
  int window = 0;
  [[nodiscard]] std::string text() const;  // phrases joined with ", "
};

inline const char* const kHoldPosition = "holds position";

std::vector<CaptionRule> default_rules(const motion::Skeleton& sk);

/// Evaluates every rule in id order; no hits gives "holds position".
Caption describe_window(const motion::MotionWindow& w, const motion::Skeleton& sk, std::span<const CaptionRule> rules,
                        int window_index = 0);

/// Every phrase the rule set can emit, including the fallback.
std::vector<std::string> phrase_set(std::span<const CaptionRule> rules);

struct CaptionRecord {
  std::string sequence;
  int window = 0;
  std::string text;
};

void write_caption_corpus(const std::filesystem::path& path, std::span<const CaptionRecord> records);
std::vector<CaptionRecord> read_caption_corpus(const std::filesystem::path& path);

}  // namespace duet::describe
