#pragma once

#include "nn/graph.hpp"

#include <random>
#include <span>
#include <vector>

namespace duet::vq {

using nn::Mat;

/// K code vectors with exponential-moving-average statistics.
struct Codebook {
  Mat codes;                  // K x d
  Eigen::VectorXd cluster_size;  // EMA assignment mass N_k
  Mat ema_sum;                // EMA of assigned latent sums
  std::vector<long> usage;    // assignments since the last reset check

  /// Codes drawn from uniform(-1/K, 1/K); EMA state starts at mass 1 with
  /// the code itself as the running sum.
  static Codebook uniform(int k, int d, std::mt19937_64& rng);

  [[nodiscard]] int size() const { return static_cast<int>(codes.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(codes.cols()); }
};

struct Quantized {
  int index = 0;
  Eigen::VectorXd code;
};

/// Nearest code by Euclidean distance; ties go to the lowest index.
Quantized quantize(const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z);
std::vector<int> quantize_rows(const Codebook& cb, const Mat& z);

/// N_k <- mu N_k + (1 - mu) n_k and the same for the running sums; codes are
/// then sum / Laplace-smoothed N_k.
void ema_update(Codebook& cb, const Mat& latents, std::span<const int> assignments, double decay, double eps = 1e-5);

/// Replaces every code whose EMA mass is below `threshold` with a uniformly
/// drawn row of `recent`, and resets its statistics. Returns the reset count.
int reset_dead_codes(Codebook& cb, const Mat& recent, double threshold, std::mt19937_64& rng);

}  // namespace duet::vq
