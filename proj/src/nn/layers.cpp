#include "nn/layers.hpp"

#include "common/error.hpp"

#include <cmath>

namespace duet::nn {

Mat xavier_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Mat normal_init(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Linear::Linear(const std::string& name, int in, int out, std::mt19937_64& rng, bool bias)
    : w(name + ".w", xavier_uniform(rng, in, out)), b(name + ".b", Mat::Zero(1, out)), has_bias(bias) {}

Var Linear::operator()(Graph& g, Var x) const {
  Var y = g.matmul(x, g.param(w));
  return has_bias ? g.add_row(y, g.param(b)) : y;
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&w);
  if (has_bias) out.push_back(&b);
}

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gamma(name + ".gamma", Mat::Ones(1, dim)), beta(name + ".beta", Mat::Zero(1, dim)) {}

Var LayerNorm::operator()(Graph& g, Var x) const { return g.layer_norm(x, g.param(gamma), g.param(beta)); }

void LayerNorm::collect(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

AdamW::AdamW(std::vector<Param*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (Param* p : params_) {
    p->m1 = Mat::Zero(p->value.rows(), p->value.cols());
    p->m2 = Mat::Zero(p->value.rows(), p->value.cols());
    p->zero_grad();
  }
}

double global_grad_norm(const std::vector<Param*>& params) {
  double s = 0.0;
  for (const Param* p : params) {
    if (p->trainable && p->grad.size() > 0) s += p->grad.squaredNorm();
  }
  return std::sqrt(s);
}

double AdamW::step() {
  for (Param* p : params_) {
    if (!p->frozen_rows.empty() && p->grad.size() > 0) {
      for (Eigen::Index r = 0; r < p->grad.rows(); ++r) {
        if (p->frozen_rows[static_cast<std::size_t>(r)]) p->grad.row(r).setZero();
      }
    }
  }
  const double norm = global_grad_norm(params_);
  if (!std::isfinite(norm)) fail(ErrorCode::kNumerical, "non-finite gradient norm");
  const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param* p : params_) {
    if (!p->trainable || p->grad.size() == 0) continue;
    Mat gr = p->grad * clip;
    p->m1 = cfg_.beta1 * p->m1 + (1.0 - cfg_.beta1) * gr;
    p->m2 = cfg_.beta2 * p->m2 + (1.0 - cfg_.beta2) * gr.cwiseProduct(gr);
    Mat upd = (p->m1.array() / bc1) / ((p->m2.array() / bc2).sqrt() + cfg_.eps);
    if (cfg_.weight_decay > 0.0) upd += cfg_.weight_decay * p->value;
    if (!p->frozen_rows.empty()) {
      for (Eigen::Index r = 0; r < upd.rows(); ++r) {
        if (p->frozen_rows[static_cast<std::size_t>(r)]) upd.row(r).setZero();
      }
    }
    p->value -= cfg_.lr * upd;
  }
  zero_grad();
  return norm;
}

void AdamW::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void append_params(Container& c, const std::vector<Param*>& params) {
  for (const Param* p : params) {
    Blob b;
    b.name = p->name;
    b.shape = {p->value.rows(), p->value.cols()};
    b.data.resize(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) b.data[static_cast<std::size_t>(i)] = static_cast<float>(p->value.data()[i]);
    c.blobs.push_back(std::move(b));
  }
}

void load_params(const Container& c, const std::vector<Param*>& params) {
  for (Param* p : params) {
    const Blob& b = c.at(p->name);
    if (b.shape.size() != 2 || b.shape[0] != p->value.rows() || b.shape[1] != p->value.cols()) {
      fail(ErrorCode::kIncompatible, "checkpoint shape mismatch for '" + p->name + "'");
    }
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = b.data[static_cast<std::size_t>(i)];
    p->zero_grad();
  }
}

}  // namespace duet::nn
