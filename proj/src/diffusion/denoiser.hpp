#pragma once

#include "diffusion/schedule.hpp"
#include "nn/layers.hpp"

#include "json.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace duet::diffusion {

using nn::Graph;
using nn::Var;

struct DenoiserConfig {
  int feature_dim = 66;  // per dancer; the state is T x (2 * feature_dim)
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int crop = 100;
  int train_steps = 1000;
  int inference_steps = 50;
  double eta = 0.0;
  double guidance = 3.5;
  double cond_dropout = 0.1;
  std::string loss_weighting = "uniform";  // lambda_t = 1
  double clean_leader_prob = 0.5;
  int refine_steps = 10;  // index into the inference schedule
  double lr = 1e-3;
  int batch_size = 8;
  int iterations = 2000;
  std::vector<std::string> styles;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
  /// Embedding row of a style label; unknown or empty labels map to the null row.
  [[nodiscard]] int style_index(const std::string& style) const;
  [[nodiscard]] int null_style() const { return static_cast<int>(styles.size()); }
};

struct DenoiserBlock {
  nn::LayerNorm ln1, ln2;
  nn::Linear wq, wk, wv, wo, ff1, ff2;
};

/// Transformer over frames predicting the clean two-person state from a noisy one.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(DenoiserConfig cfg, std::mt19937_64& rng);

  [[nodiscard]] const DenoiserConfig& config() const { return cfg_; }
  [[nodiscard]] const NoiseSchedule& schedule() const { return sched_; }

  Var forward(Graph& g, const Mat& x_t, int t, int style) const;
  [[nodiscard]] Mat predict(const Mat& x_t, int t, int style) const;
  /// (1 - scale) * uncond + scale * cond
  [[nodiscard]] Mat cfg_predict(const Mat& x_t, int t, int style, double scale) const;

  std::vector<nn::Param*> params();

  // Per-channel normalization over the 2 * feature_dim state channels.
  Eigen::RowVectorXd mean, stddev;
  void fit_normalization(const std::vector<Mat>& crops);
  [[nodiscard]] Mat normalize(const Mat& x) const;
  [[nodiscard]] Mat denormalize(const Mat& x) const;

 private:
  DenoiserConfig cfg_;
  NoiseSchedule sched_;
  nn::Linear in_, t1_, t2_, out_;
  nn::Param pos_, style_;
  std::vector<DenoiserBlock> blocks_;
  nn::LayerNorm ln_f_;
};

/// Sinusoidal step embedding (1 x dim).
Mat step_embedding(int t, int dim);

/// lambda_t * mean squared error between the prediction and the clean state.
Var x0_loss(Graph& g, Var pred, const Mat& target, double lambda = 1.0);

/// One noisy training example.
struct NoisedExample {
  Mat noisy;
  int t = 0;
  int style = 0;
};

/// Samples t ~ U{1..N}, eps, optional clean leader half and conditioning dropout.
NoisedExample make_training_example(const Denoiser& d, const Mat& x0, int style, std::mt19937_64& rng);

/// One optimizer step over a batch of normalized crops; returns the mean loss.
class DenoiserTrainer {
 public:
  explicit DenoiserTrainer(Denoiser& d);
  double step(const std::vector<const Mat*>& batch, const std::vector<int>& styles, std::mt19937_64& rng);

 private:
  Denoiser& d_;
  nn::AdamW opt_;
};

using StepCallback = std::function<void(int iteration, double loss)>;

/// Random batches of normalized crops for `iterations` steps. Returns per-step losses.
std::vector<double> train_denoiser(Denoiser& d, const std::vector<Mat>& crops, const std::vector<int>& styles,
                                   int iterations, std::mt19937_64& rng, const StepCallback& cb = {});

/// Fixed-noise evaluation loss (deterministic given `seed`).
double evaluate_denoiser(const Denoiser& d, const std::vector<Mat>& crops, const std::vector<int>& styles, unsigned seed,
                         int draws = 4);

void save_denoiser(const Denoiser& d, const std::string& path, const nlohmann::json& metadata);
Denoiser load_denoiser(const std::string& path, nlohmann::json* header = nullptr);

}  // namespace duet::diffusion
