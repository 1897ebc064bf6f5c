#include "diffusion/schedule.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace duet::diffusion {

double NoiseSchedule::abar(int t) const {
  if (t < 0 || t > steps) fail(ErrorCode::kOutOfRange, "diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(steps) + "]");
  return alpha_bar[static_cast<std::size_t>(t)];
}

double NoiseSchedule::sigma(int t) const { return std::sqrt(1.0 - abar(t)); }

NoiseSchedule cosine_schedule(int steps, double s) {
  if (steps < 1) fail(ErrorCode::kInvalidArgument, "cosine schedule needs at least one step");
  if (!(s >= 0.0)) fail(ErrorCode::kInvalidArgument, "cosine schedule offset must be non-negative");
  auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule out;
  out.steps = steps;
  out.offset = s;
  out.alpha_bar.resize(static_cast<std::size_t>(steps) + 1);
  const double f0 = f(0);
  for (int t = 0; t <= steps; ++t) out.alpha_bar[static_cast<std::size_t>(t)] = f(t) / f0;
  out.alpha_bar[0] = 1.0;
  return out;
}

Mat add_noise(const NoiseSchedule& sched, const Mat& x, int t, const Mat& eps) {
  if (x.rows() != eps.rows() || x.cols() != eps.cols()) fail(ErrorCode::kInvalidArgument, "add_noise: shape mismatch");
  if (t == 0) return x;
  const double a = sched.abar(t);
  return std::sqrt(a) * x + std::sqrt(1.0 - a) * eps;
}

std::vector<int> inference_timesteps(const NoiseSchedule& sched, int inference_steps) {
  if (inference_steps < 1 || inference_steps > sched.steps) {
    fail(ErrorCode::kInvalidArgument, "inference steps must be in [1, training steps]");
  }
  std::vector<int> ts(static_cast<std::size_t>(inference_steps) + 1);
  for (int i = 0; i <= inference_steps; ++i) {
    ts[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(static_cast<double>(i) * sched.steps / inference_steps));
  }
  return ts;
}

Mat ddim_step(const NoiseSchedule& sched, const Mat& x_t, const Mat& x0_pred, int t, int t_prev, double eta, const Mat* z) {
  if (t_prev >= t) fail(ErrorCode::kInvalidArgument, "ddim_step: t_prev must be below t");
  const double a = sched.abar(t), ap = sched.abar(t_prev);
  const Mat eps = (x_t - std::sqrt(a) * x0_pred) / std::sqrt(1.0 - a);
  if (t_prev == 0) return x0_pred;
  double sig = 0.0;
  if (eta > 0.0) sig = eta * std::sqrt((1.0 - ap) / (1.0 - a) * (1.0 - a / ap));
  Mat out = std::sqrt(ap) * x0_pred + std::sqrt(std::max(0.0, 1.0 - ap - sig * sig)) * eps;
  if (sig > 0.0) {
    if (z == nullptr) fail(ErrorCode::kInvalidArgument, "ddim_step: eta > 0 needs a noise sample");
    out += sig * *z;
  }
  return out;
}

}  // namespace duet::diffusion
