#pragma once

#include "common/container.hpp"
#include "nn/graph.hpp"

#include <random>
#include <string>
#include <vector>

namespace duet::nn {

Mat xavier_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols);
Mat normal_init(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

/// y = x W + b, W stored in x out.
struct Linear {
  Param w;
  Param b;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, int in, int out, std::mt19937_64& rng, bool bias = true);
  Var operator()(Graph& g, Var x) const;
  void collect(std::vector<Param*>& out);
  [[nodiscard]] int in_dim() const { return static_cast<int>(w.value.rows()); }
  [[nodiscard]] int out_dim() const { return static_cast<int>(w.value.cols()); }
};

struct LayerNorm {
  Param gamma;
  Param beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);
  Var operator()(Graph& g, Var x) const;
  void collect(std::vector<Param*>& out);
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

class AdamW {
 public:
  AdamW(std::vector<Param*> params, AdamWConfig cfg);

  /// Applies one update from the accumulated gradients, then zeroes them.
  /// Returns the pre-clip global gradient norm.
  double step();
  void zero_grad();
  void set_lr(double lr) { cfg_.lr = lr; }
  [[nodiscard]] double lr() const { return cfg_.lr; }
  [[nodiscard]] long steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamWConfig cfg_;
  long t_ = 0;
};

/// Parameters <-> container blobs (float32).
void append_params(Container& c, const std::vector<Param*>& params);
void load_params(const Container& c, const std::vector<Param*>& params);

double global_grad_norm(const std::vector<Param*>& params);

}  // namespace duet::nn
