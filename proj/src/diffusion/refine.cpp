#include "diffusion/refine.hpp"

#include "common/error.hpp"
#include "motion/canonical.hpp"
#include "motion/relation.hpp"

#include <algorithm>
#include <cmath>

namespace duet::diffusion {

Mat refine_follower(const Denoiser& d, const Mat& leader, const Mat& follower, int t_r, int style, std::mt19937_64& rng,
                    const StateObserver& observe) {
  const auto& cfg = d.config();
  if (leader.rows() != follower.rows() || leader.cols() != follower.cols()) {
    fail(ErrorCode::kInvalidArgument, "refine: leader and follower shapes differ");
  }
  if (leader.cols() != cfg.feature_dim) fail(ErrorCode::kInvalidArgument, "refine: feature width mismatch");
  if (t_r < 0 || t_r > cfg.inference_steps) fail(ErrorCode::kOutOfRange, "refine: t_r outside the inference schedule");
  if (t_r == 0) return follower;
  const std::vector<int> ts = inference_timesteps(d.schedule(), cfg.inference_steps);
  const int D = cfg.feature_dim;
  std::normal_distribution<double> n(0.0, 1.0);
  Mat eps(follower.rows(), D);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = n(rng);
  Mat x(leader.rows(), 2 * D);
  x.leftCols(D) = leader;
  x.rightCols(D) = add_noise(d.schedule(), follower, ts[static_cast<std::size_t>(t_r)], eps);
  if (observe) observe(t_r, x);
  for (int i = t_r; i >= 1; --i) {
    const int t = ts[static_cast<std::size_t>(i)], tp = ts[static_cast<std::size_t>(i - 1)];
    Mat x0 = d.cfg_predict(x, t, style, cfg.guidance);
    x0.leftCols(D) = leader;
    Mat z;
    if (cfg.eta > 0.0) {
      z.resize(x.rows(), x.cols());
      for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = n(rng);
    }
    x = ddim_step(d.schedule(), x, x0, t, tp, cfg.eta, cfg.eta > 0.0 ? &z : nullptr);
    x.leftCols(D) = leader;
    if (observe) observe(i - 1, x);
  }
  return x.rightCols(D);
}

namespace {

void put_positions(Mat& state, int row, int col, const motion::JointMat& p, const motion::RigidTransform2D& to_local) {
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    const Eigen::Vector3d q = to_local.apply(p.row(j).transpose());
    state.block(row, col + 3 * j, 1, 3) = q.transpose();
  }
}

}  // namespace

CropState duet_crop(const motion::DuetSequence& seq, int start, int len) {
  const int T = seq.length();
  if (T == 0 || start < 0 || start >= T || len < 1) fail(ErrorCode::kOutOfRange, "duet_crop: crop outside the sequence");
  const int N = seq.skeleton.joint_count();
  const motion::RootPose rp = motion::root_pose(seq.leader[static_cast<std::size_t>(start)], seq.skeleton);
  CropState out;
  out.to_world = motion::RigidTransform2D{rp.x, rp.z, rp.yaw};
  const motion::RigidTransform2D to_local = out.to_world.inverse();
  out.state.resize(len, 6 * N);
  for (int i = 0; i < len; ++i) {
    const auto f = static_cast<std::size_t>(std::min(start + i, T - 1));
    put_positions(out.state, i, 0, seq.leader[f].positions, to_local);
    put_positions(out.state, i, 3 * N, seq.follower[f].positions, to_local);
  }
  return out;
}

CropSet training_crops(const std::vector<motion::DuetSequence>& seqs, const DenoiserConfig& cfg, int stride) {
  if (stride < 1) fail(ErrorCode::kInvalidArgument, "training_crops: stride must be >= 1");
  CropSet out;
  for (const auto& s : seqs) {
    if (3 * s.skeleton.joint_count() != cfg.feature_dim) {
      fail(ErrorCode::kIncompatible, "training_crops: skeleton does not match the denoiser feature width");
    }
    const int style = cfg.style_index(s.style.value_or(""));
    const int last = std::max(0, s.length() - cfg.crop);
    for (int st = 0; st <= last; st += stride) {
      out.crops.push_back(duet_crop(s, st, cfg.crop).state);
      out.styles.push_back(style);
    }
  }
  return out;
}

motion::DuetSequence refine_duet(const Denoiser& d, const motion::DuetSequence& seq, std::mt19937_64& rng, int t_r) {
  const auto& cfg = d.config();
  const int T = seq.length();
  const int N = seq.skeleton.joint_count();
  if (static_cast<int>(seq.follower.size()) != T) fail(ErrorCode::kInvalidArgument, "refine: leader and follower lengths differ");
  if (3 * N != cfg.feature_dim) fail(ErrorCode::kIncompatible, "refine: skeleton does not match the denoiser feature width");
  if (t_r < 0) t_r = cfg.refine_steps;
  if (T < 2 || t_r == 0) return seq;
  const int style = cfg.style_index(seq.style.value_or(""));
  const int len = std::min(cfg.crop, T);
  const int hop = std::max(1, len / 2);
  std::vector<int> starts;
  for (int s = 0; s + len < T; s += hop) starts.push_back(s);
  starts.push_back(T - len);

  Mat acc = Mat::Zero(T, 3 * N);
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(T);
  for (int s : starts) {
    const CropState c = duet_crop(seq, s, len);
    const Mat z = d.normalize(c.state);
    const Mat f = refine_follower(d, z.leftCols(3 * N), z.rightCols(3 * N), t_r, style, rng);
    Mat full(len, 6 * N);
    full.leftCols(3 * N) = z.leftCols(3 * N);
    full.rightCols(3 * N) = f;
    const Mat world = d.denormalize(full);
    for (int i = 0; i < len; ++i) {
      const double w = std::min(i + 1, len - i);
      for (int j = 0; j < N; ++j) {
        const Eigen::Vector3d p = c.to_world.apply(world.block(i, 3 * N + 3 * j, 1, 3).transpose());
        acc.block(s + i, 3 * j, 1, 3) += w * p.transpose();
      }
      wsum(s + i) += w;
    }
  }
  std::vector<motion::JointMat> fpos(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    motion::JointMat p(N, 3);
    for (int j = 0; j < N; ++j) p.row(j) = acc.block(t, 3 * j, 1, 3) / wsum(t);
    fpos[static_cast<std::size_t>(t)] = std::move(p);
  }
  motion::DuetSequence out = seq;
  out.follower = motion::compute_features(fpos, seq.skeleton, seq.fps);
  out.refresh_relation();
  return out;
}

}  // namespace duet::diffusion
