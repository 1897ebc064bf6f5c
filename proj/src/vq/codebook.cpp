#include "vq/codebook.hpp"

#include "common/error.hpp"

#include <limits>

namespace duet::vq {

Codebook Codebook::uniform(int k, int d, std::mt19937_64& rng) {
  if (k < 1 || d < 1) fail(ErrorCode::kInvalidArgument, "codebook needs K >= 1 and d >= 1");
  std::uniform_real_distribution<double> u(-1.0 / k, 1.0 / k);
  Codebook cb;
  cb.codes.resize(k, d);
  for (Eigen::Index i = 0; i < cb.codes.size(); ++i) cb.codes.data()[i] = u(rng);
  cb.cluster_size = Eigen::VectorXd::Ones(k);
  cb.ema_sum = cb.codes;
  cb.usage.assign(static_cast<std::size_t>(k), 0);
  return cb;
}

Quantized quantize(const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (cb.size() == 0) fail(ErrorCode::kInvalidArgument, "quantize: empty codebook");
  if (z.size() != cb.dim()) fail(ErrorCode::kInvalidArgument, "quantize: latent dimension mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cb.size(); ++k) {
    const double d = (cb.codes.row(k).transpose() - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return {best, cb.codes.row(best).transpose()};
}

std::vector<int> quantize_rows(const Codebook& cb, const Mat& z) {
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) out[static_cast<std::size_t>(i)] = quantize(cb, z.row(i).transpose()).index;
  return out;
}

void ema_update(Codebook& cb, const Mat& latents, std::span<const int> assignments, double decay, double eps) {
  if (static_cast<Eigen::Index>(assignments.size()) != latents.rows()) {
    fail(ErrorCode::kInvalidArgument, "ema_update: one assignment per latent row required");
  }
  const int k = cb.size();
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  Mat sums = Mat::Zero(k, cb.dim());
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int a = assignments[i];
    if (a < 0 || a >= k) fail(ErrorCode::kOutOfRange, "ema_update: assignment out of range");
    counts(a) += 1.0;
    sums.row(a) += latents.row(static_cast<Eigen::Index>(i));
    cb.usage[static_cast<std::size_t>(a)] += 1;
  }
  cb.cluster_size = decay * cb.cluster_size + (1.0 - decay) * counts;
  cb.ema_sum = decay * cb.ema_sum + (1.0 - decay) * sums;
  const double n = cb.cluster_size.sum();
  if (n <= 0.0) return;
  for (int i = 0; i < k; ++i) {
    const double smoothed = (cb.cluster_size(i) + eps) / (n + k * eps) * n;
    cb.codes.row(i) = cb.ema_sum.row(i) / smoothed;
  }
}

int reset_dead_codes(Codebook& cb, const Mat& recent, double threshold, std::mt19937_64& rng) {
  if (recent.rows() == 0) fail(ErrorCode::kInvalidArgument, "reset_dead_codes: no recent latents");
  if (recent.cols() != cb.dim()) fail(ErrorCode::kInvalidArgument, "reset_dead_codes: latent dimension mismatch");
  std::uniform_int_distribution<Eigen::Index> pick(0, recent.rows() - 1);
  int reset = 0;
  for (int i = 0; i < cb.size(); ++i) {
    if (cb.cluster_size(i) < threshold) {
      const Eigen::Index r = pick(rng);
      cb.codes.row(i) = recent.row(r);
      cb.ema_sum.row(i) = recent.row(r);
      cb.cluster_size(i) = 1.0;
      ++reset;
    }
  }
  std::fill(cb.usage.begin(), cb.usage.end(), 0);
  return reset;
}

}  // namespace duet::vq
