#pragma once

#include <Eigen/Dense>

#include <vector>

namespace duet::diffusion {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct NoiseSchedule {
  int steps = 0;
  double offset = 0.008;
  std::vector<double> alpha_bar;  // steps + 1 entries, alpha_bar[0] = 1

  [[nodiscard]] double abar(int t) const;
  [[nodiscard]] double sigma(int t) const;
};

/// abar(t) = f(t) / f(0), f(t) = cos^2(((t/N) + s) / (1 + s) * pi/2).
NoiseSchedule cosine_schedule(int steps, double s = 0.008);

/// Variance-preserving forward process: sqrt(abar) X + sqrt(1 - abar) eps.
Mat add_noise(const NoiseSchedule& sched, const Mat& x, int t, const Mat& eps);

/// Uniform stride over the training steps, from 0 to `steps`: {0, N/k, ..., N}.
std::vector<int> inference_timesteps(const NoiseSchedule& sched, int inference_steps);

/// Deterministic (eta = 0) DDIM update from step t to t_prev using the x0 estimate.
/// With eta > 0 fresh noise `z` is mixed in.
Mat ddim_step(const NoiseSchedule& sched, const Mat& x_t, const Mat& x0_pred, int t, int t_prev, double eta = 0.0,
              const Mat* z = nullptr);

}  // namespace duet::diffusion
