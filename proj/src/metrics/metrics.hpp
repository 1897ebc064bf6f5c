#pragma once

#include "motion/duet.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace duet::metrics {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FeatureSpace { kKinematic, kGraphical, kCrossDistance };

/// One row per sequence.
struct FeatureVectorSet {
  FeatureSpace space = FeatureSpace::kKinematic;
  Mat rows;
  void validate() const;
};

/// Per joint: mean speed | mean squared speed | mean acceleration magnitude (3 N dims).
Eigen::VectorXd kinematic_features(std::span<const motion::MotionFrame> frames, double fps = motion::kFps);

inline constexpr int kGraphicalDim = 16;
/// Names of the time-averaged boolean relations, in feature order.
const std::array<std::string, kGraphicalDim>& graphical_feature_names();
Eigen::VectorXd graphical_features(std::span<const motion::MotionFrame> frames, const motion::Skeleton& sk);

inline constexpr int kCrossPairs = 9;
/// (leader joint, follower joint) pairs for the cross-distance features.
std::array<std::pair<int, int>, kCrossPairs> cross_pairs(const motion::Skeleton& sk);
/// Means of the pair distances followed by their (population) standard deviations.
Eigen::VectorXd crossdist_features(const motion::DuetSequence& seq);

/// Frechet distance between Gaussian fits. With fewer than dim + 1 samples the
/// covariances are shrunk towards a scaled identity by `kFidShrinkage`.
inline constexpr double kFidShrinkage = 0.1;
double fid(const Mat& a, const Mat& b);

/// Mean Euclidean distance over `pairs` random disjoint pairs (reshuffled when
/// more pairs than n / 2 are requested).
double diversity(const Mat& set, int pairs, unsigned seed);

/// Local minima of the 5-frame box-smoothed speed, in seconds.
std::vector<double> beats_from_speed(std::span<const double> speed, double fps = motion::kFps);
/// Mean joint speed per frame.
std::vector<double> mean_joint_speed(std::span<const motion::MotionFrame> frames);
std::vector<double> motion_beats(std::span<const motion::MotionFrame> frames, double fps = motion::kFps);

inline constexpr double kBeatSigmaFrames = 3.0;
/// Gaussian-kernel alignment of `reference` beats to their nearest `candidate` beat.
double beat_kernel_score(std::span<const double> candidate, std::span<const double> reference, double sigma);
double bas(std::span<const double> motion_beats, std::span<const double> music_beats,
           double sigma = kBeatSigmaFrames / motion::kFps);
double bed(std::span<const double> leader_beats, std::span<const double> follower_beats,
           double sigma = kBeatSigmaFrames / motion::kFps);

struct MetricReport {
  double fid_k = 0, fid_g = 0, div_k = 0, div_g = 0;
  double fid_cd = 0, div_cd = 0;
  double bed = 0, bas = 0;
  int generated = 0;
  int reference = 0;
  int bas_samples = 0;
  std::string config_hash;
  std::string label;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

/// Smallest reference standard deviation used when standardizing features.
inline constexpr double kStandardizeFloor = 0.05;

/// Evaluates generated duets against ground truth. Features of both sets are
/// standardized with the ground-truth statistics before FID and diversity.
MetricReport evaluate(std::span<const motion::DuetSequence> generated, std::span<const motion::DuetSequence> reference,
                      unsigned seed = 0);

/// Plain-text table grouped into solo, interactive and rhythmic columns.
std::string format_table(std::span<const MetricReport> rows);
/// label,metric,value lines for plotting.
std::string format_csv(std::span<const MetricReport> rows);

}  // namespace duet::metrics
