#pragma once

#include "motion/canonical.hpp"
#include "motion/duet.hpp"
#include "vq/vqvae.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace duet::vq {

struct TokenizedTrack {
  std::vector<int> indices;
  std::vector<int> starts;
  std::vector<motion::RigidTransform2D> transforms;  // canonical -> world, motion tracks only
};

/// Relation windows use [r_x, r_z, sin r_theta, cos r_theta] so headings near
/// +-pi stay continuous.
inline constexpr int kRelationChannels = 4;

Mat motion_window_matrix(std::span<const motion::MotionFrame> frames);
std::vector<motion::MotionFrame> motion_frames_from_matrix(const Mat& m, int joint_count);
Mat relation_window_matrix(std::span<const motion::RelationFrame> frames);
std::vector<motion::RelationFrame> relation_frames_from_matrix(const Mat& m);

/// Position channels of the flat motion layout.
std::vector<int> motion_velocity_channels(int joint_count);
std::vector<int> relation_velocity_channels();

/// Canonicalized motion windows of one track (stride = tau).
std::vector<motion::MotionWindow> motion_windows(std::span<const motion::MotionFrame> track, const motion::Skeleton& sk,
                                                 int tau);

TokenizedTrack tokenize_motion(const VqVae& vq, std::span<const motion::MotionFrame> track, const motion::Skeleton& sk);
/// Decodes each token and maps it back with the stored transforms.
std::vector<motion::MotionFrame> detokenize_motion(const VqVae& vq, const TokenizedTrack& tokens, int joint_count);
/// Canonical frames of one decoded motion token.
std::vector<motion::MotionFrame> decode_motion_token(const VqVae& vq, int index, int joint_count);

TokenizedTrack tokenize_relation(const VqVae& vq, std::span<const motion::RelationFrame> track);
std::vector<motion::RelationFrame> detokenize_relation(const VqVae& vq, std::span<const int> indices);

/// Training windows from both dancers of every sequence.
std::vector<Mat> motion_training_windows(std::span<const motion::DuetSequence> seqs, int tau);
std::vector<Mat> relation_training_windows(std::span<const motion::DuetSequence> seqs, int tau);

/// Token corpus: one "sequence<TAB>role<TAB>space separated ids" line per track.
struct TokenRecord {
  std::string sequence;
  std::string role;
  std::vector<int> tokens;
};

void write_token_corpus(const std::filesystem::path& path, std::span<const TokenRecord> records);
std::vector<TokenRecord> read_token_corpus(const std::filesystem::path& path);

}  // namespace duet::vq
