#pragma once

#include "nn/layers.hpp"
#include "vq/codebook.hpp"

#include "json.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace duet::vq {

using nn::Graph;
using nn::Var;

struct VqVaeConfig {
  int input_dim = 268;
  int latent_dim = 512;
  int codebook_size = 512;
  int window = 20;
  int hidden = 128;
  int layers = 2;
  double ema_decay = 0.95;
  double commit_weight = 0.02;
  double velocity_weight = 0.1;
  double dead_code_threshold = 1.0;
  int warmup_epochs = 5;
  double learning_rate = 1e-4;
  int batch_size = 2048;
  int epochs = 2000;
  double lr_gamma = 0.05;
  // Channels whose frame-to-frame differences enter the velocity loss
  // (joint positions for motion, every channel for relations).
  std::vector<int> velocity_channels;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static VqVaeConfig from_json(const nlohmann::json& j);
};

/// GRU over a time-major stacked input ((T*B) x in, row t*B + b).
struct GruLayer {
  nn::Linear in;  // in -> 3H, gate order r, z, n
  nn::Param w_h;  // H x 3H
  nn::Param b_h;  // 1 x 3H

  GruLayer() = default;
  GruLayer(const std::string& name, int in_dim, int hidden, std::mt19937_64& rng);
  [[nodiscard]] int hidden() const { return static_cast<int>(w_h.value.rows()); }
  /// Hidden state per step, returned in time order regardless of direction.
  std::vector<Var> run(Graph& g, Var x, int steps, int batch, Var h0, bool reverse) const;
  void collect(std::vector<nn::Param*>& out);
};

struct VqLosses {
  double total = 0;
  double reconstruction = 0;
  double commitment = 0;
  double velocity = 0;
};

struct LossVars {
  Var total, reconstruction, commitment, velocity;
};

class VqVae {
 public:
  VqVae() = default;
  VqVae(VqVaeConfig cfg, std::mt19937_64& rng);

  [[nodiscard]] const VqVaeConfig& config() const { return cfg_; }
  VqVaeConfig& mutable_config() { return cfg_; }
  Codebook& codebook() { return codebook_; }
  [[nodiscard]] const Codebook& codebook() const { return codebook_; }
  std::vector<nn::Param*> params();

  // Per-channel normalization applied before encoding and undone after decoding.
  void fit_normalization(std::span<const Mat> windows);
  [[nodiscard]] const Eigen::VectorXd& feature_mean() const { return mean_; }
  [[nodiscard]] const Eigen::VectorXd& feature_std() const { return std_; }
  void set_normalization(Eigen::VectorXd mean, Eigen::VectorXd stddev);
  [[nodiscard]] Mat normalize(const Mat& window) const;
  [[nodiscard]] Mat denormalize(const Mat& window) const;

  // Graph pieces, all in normalized space. `x` is time-major stacked (tau*B x D).
  Var encode_graph(Graph& g, Var x, int batch) const;
  Var decode_graph(Graph& g, Var code, int batch) const;
  LossVars loss_graph(Graph& g, Var x, Var z, Var zq, const Mat& codes, int batch) const;

  /// Raw window (tau x D) -> latent.
  [[nodiscard]] Eigen::VectorXd encode(const Mat& window) const;
  [[nodiscard]] int tokenize(const Mat& window) const;
  /// Raw reconstruction (tau x D) of a code index.
  [[nodiscard]] Mat decode(int index) const;
  [[nodiscard]] Mat decode_code(const Eigen::VectorXd& code) const;
  [[nodiscard]] Mat reconstruct(const Mat& window) const;

  /// Plain losses for raw windows; no parameter or codebook change.
  [[nodiscard]] VqLosses evaluate(std::span<const Mat> windows) const;

 private:
  void check_window(const Mat& w) const;

  VqVaeConfig cfg_;
  std::vector<GruLayer> enc_fwd_, enc_bwd_;
  nn::Linear enc_out_;
  std::vector<nn::Linear> dec_init_;
  std::vector<GruLayer> dec_;
  nn::Param dec_steps_;  // tau x 3H per-step input offsets of the first decoder layer
  nn::Linear dec_out_;
  Codebook codebook_;
  Eigen::VectorXd mean_, std_;
  Mat vel_select_;
};

/// Time-major stack of equal-shape windows.
Mat stack_windows(std::span<const Mat> windows);

/// One optimizer step per call; epoch bookkeeping for dead-code resets and the
/// learning-rate drop.
class VqTrainer {
 public:
  explicit VqTrainer(VqVae& model);

  VqLosses step(std::span<const Mat> batch);
  /// Runs the reset check and LR schedule after epoch `epoch` (0-based).
  /// Returns the number of codes reset.
  int end_epoch(int epoch, std::mt19937_64& rng);
  [[nodiscard]] long steps() const { return opt_.steps(); }
  [[nodiscard]] double lr() const { return opt_.lr(); }

  using Progress = std::function<void(int epoch, const VqLosses& mean_losses, int resets)>;
  /// Full training run over `windows` (normalization is fitted first).
  std::vector<VqLosses> fit(std::span<const Mat> windows, std::mt19937_64& rng, const Progress& progress = {});

 private:
  VqVae& model_;
  nn::AdamW opt_;
  Mat recent_;
  Eigen::Index recent_fill_ = 0;
  Eigen::Index recent_next_ = 0;
};

void save_vqvae(const VqVae& model, const std::string& path, const nlohmann::json& metadata);
VqVae load_vqvae(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace duet::vq
