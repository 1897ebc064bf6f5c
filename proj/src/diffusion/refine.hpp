#pragma once

#include "diffusion/denoiser.hpp"
#include "motion/canonical.hpp"
#include "motion/duet.hpp"

#include <functional>
#include <random>
#include <vector>

namespace duet::diffusion {

/// Called with every intermediate state (after clamping) during refinement.
using StateObserver = std::function<void(int step, const Mat& state)>;

/// Noises only the follower half up to the t_r-th inference step, then runs
/// guided DDIM back to 0, re-clamping the leader half to `leader` after every
/// update. Inputs and output are normalized state halves (T x feature_dim).
Mat refine_follower(const Denoiser& d, const Mat& leader, const Mat& follower, int t_r, int style, std::mt19937_64& rng,
                    const StateObserver& observe = {});

/// Both dancers' joint positions over [start, start + len) in the ground frame
/// of the leader's root at `start`. Rows past the end repeat the last frame.
struct CropState {
  Mat state;  // len x 6N, leader | follower, unnormalized
  motion::RigidTransform2D to_world;
};
CropState duet_crop(const motion::DuetSequence& seq, int start, int len);

/// Crops of `crop` frames every `stride` frames; sequences shorter than a crop
/// give one padded crop.
struct CropSet {
  std::vector<Mat> crops;
  std::vector<int> styles;
};
CropSet training_crops(const std::vector<motion::DuetSequence>& seqs, const DenoiserConfig& cfg, int stride);

/// Refines the follower track of `seq` over sliding crops with 50% overlap and
/// a linear cross-fade; the leader track is returned unchanged.
motion::DuetSequence refine_duet(const Denoiser& d, const motion::DuetSequence& seq, std::mt19937_64& rng,
                                 int t_r = -1);

}  // namespace duet::diffusion
