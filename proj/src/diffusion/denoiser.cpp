#include "diffusion/denoiser.hpp"

#include "common/container.hpp"
#include "common/error.hpp"

#include <algorithm>
#include <cmath>

namespace duet::diffusion {

void DenoiserConfig::validate() const {
  if (feature_dim < 1) fail(ErrorCode::kInvalidArgument, "denoiser config: feature dim must be positive");
  if (d_model < 2 || heads < 1 || d_model % heads != 0) {
    fail(ErrorCode::kInvalidArgument, "denoiser config: width must be divisible by the head count");
  }
  if (layers < 1 || ffn_mult < 1 || crop < 2) fail(ErrorCode::kInvalidArgument, "denoiser config: bad network shape");
  if (train_steps < 1 || inference_steps < 1 || inference_steps > train_steps) {
    fail(ErrorCode::kInvalidArgument, "denoiser config: inference steps must be in [1, training steps]");
  }
  if (refine_steps < 0 || refine_steps > inference_steps) {
    fail(ErrorCode::kInvalidArgument, "denoiser config: refinement steps must be in [0, inference steps]");
  }
  if (eta < 0 || cond_dropout < 0 || cond_dropout > 1 || clean_leader_prob < 0 || clean_leader_prob > 1) {
    fail(ErrorCode::kInvalidArgument, "denoiser config: probability out of range");
  }
  if (loss_weighting != "uniform") fail(ErrorCode::kInvalidArgument, "denoiser config: only uniform loss weighting is supported");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "denoiser config: batch size must be >= 1");
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"feature_dim", feature_dim}, {"d_model", d_model},
          {"layers", layers},           {"heads", heads},
          {"ffn_mult", ffn_mult},       {"crop", crop},
          {"train_steps", train_steps}, {"inference_steps", inference_steps},
          {"eta", eta},                 {"guidance", guidance},
          {"cond_dropout", cond_dropout}, {"loss_weighting", loss_weighting},
          {"clean_leader_prob", clean_leader_prob}, {"refine_steps", refine_steps},
          {"lr", lr},                   {"batch_size", batch_size},
          {"iterations", iterations},   {"styles", styles}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  try {
    c.feature_dim = j.at("feature_dim");
    c.d_model = j.at("d_model");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.ffn_mult = j.at("ffn_mult");
    c.crop = j.at("crop");
    c.train_steps = j.at("train_steps");
    c.inference_steps = j.at("inference_steps");
    c.eta = j.at("eta");
    c.guidance = j.at("guidance");
    c.cond_dropout = j.at("cond_dropout");
    c.loss_weighting = j.at("loss_weighting");
    c.clean_leader_prob = j.at("clean_leader_prob");
    c.refine_steps = j.at("refine_steps");
    c.lr = j.at("lr");
    c.batch_size = j.at("batch_size");
    c.iterations = j.at("iterations");
    c.styles = j.at("styles").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("denoiser config: ") + e.what());
  }
  c.validate();
  return c;
}

int DenoiserConfig::style_index(const std::string& style) const {
  const auto it = std::find(styles.begin(), styles.end(), style);
  return it == styles.end() ? null_style() : static_cast<int>(it - styles.begin());
}

Mat step_embedding(int t, int dim) {
  Mat e(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
    e(0, i) = std::sin(t * freq);
    e(0, half + i) = std::cos(t * freq);
  }
  if (dim % 2) e(0, dim - 1) = 0.0;
  return e;
}

Denoiser::Denoiser(DenoiserConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  sched_ = cosine_schedule(cfg_.train_steps);
  const int d = cfg_.d_model, io = 2 * cfg_.feature_dim;
  in_ = nn::Linear("in", io, d, rng);
  t1_ = nn::Linear("step1", d, d, rng);
  t2_ = nn::Linear("step2", d, d, rng);
  pos_ = nn::Param("pos", nn::normal_init(rng, cfg_.crop, d, 0.02));
  style_ = nn::Param("style", nn::normal_init(rng, cfg_.null_style() + 1, d, 0.02));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    DenoiserBlock b;
    b.ln1 = nn::LayerNorm(p + ".ln1", d);
    b.ln2 = nn::LayerNorm(p + ".ln2", d);
    b.wq = nn::Linear(p + ".wq", d, d, rng);
    b.wk = nn::Linear(p + ".wk", d, d, rng, false);  // a key bias cancels in the softmax
    b.wv = nn::Linear(p + ".wv", d, d, rng);
    b.wo = nn::Linear(p + ".wo", d, d, rng);
    b.ff1 = nn::Linear(p + ".ff1", d, cfg_.ffn_mult * d, rng);
    b.ff2 = nn::Linear(p + ".ff2", cfg_.ffn_mult * d, d, rng);
    blocks_.push_back(std::move(b));
  }
  ln_f_ = nn::LayerNorm("ln_f", d);
  out_ = nn::Linear("out", d, io, rng);
  mean = Eigen::RowVectorXd::Zero(io);
  stddev = Eigen::RowVectorXd::Ones(io);
}

std::vector<nn::Param*> Denoiser::params() {
  std::vector<nn::Param*> out;
  in_.collect(out);
  t1_.collect(out);
  t2_.collect(out);
  out.push_back(&pos_);
  out.push_back(&style_);
  for (DenoiserBlock& b : blocks_) {
    for (nn::LayerNorm* ln : {&b.ln1, &b.ln2}) ln->collect(out);
    for (nn::Linear* l : {&b.wq, &b.wk, &b.wv, &b.wo, &b.ff1, &b.ff2}) l->collect(out);
  }
  ln_f_.collect(out);
  out_.collect(out);
  return out;
}

Var Denoiser::forward(Graph& g, const Mat& x_t, int t, int style) const {
  const int T = static_cast<int>(x_t.rows());
  if (x_t.cols() != 2 * cfg_.feature_dim) fail(ErrorCode::kInvalidArgument, "denoiser: state width mismatch");
  if (T < 1 || T > cfg_.crop) fail(ErrorCode::kOutOfRange, "denoiser: crop length " + std::to_string(T) + " outside [1, " + std::to_string(cfg_.crop) + "]");
  if (style < 0 || style > cfg_.null_style()) fail(ErrorCode::kOutOfRange, "denoiser: style index out of range");
  const int H = cfg_.heads, dh = cfg_.d_model / cfg_.heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Var h = g.add(in_(g, g.constant(x_t)), g.slice_rows(g.param(pos_), 0, T));
  Var temb = t2_(g, g.gelu(t1_(g, g.constant(step_embedding(t, cfg_.d_model)))));
  const int srow[1] = {style};
  h = g.add_row(h, g.add(temb, g.gather_rows(g.param(style_), srow)));
  for (const DenoiserBlock& b : blocks_) {
    Var a = b.ln1(g, h);
    Var q = b.wq(g, a), k = b.wk(g, a), v = b.wv(g, a);
    std::vector<Var> heads;
    for (int i = 0; i < H; ++i) {
      Var att = g.softmax_rows(g.scale(g.matmul_nt(g.slice_cols(q, i * dh, dh), g.slice_cols(k, i * dh, dh)), inv));
      heads.push_back(g.matmul(att, g.slice_cols(v, i * dh, dh)));
    }
    h = g.add(h, b.wo(g, g.concat_cols(heads)));
    h = g.add(h, b.ff2(g, g.gelu(b.ff1(g, b.ln2(g, h)))));
  }
  return out_(g, ln_f_(g, h));
}

Mat Denoiser::predict(const Mat& x_t, int t, int style) const {
  Graph g(false);
  return g.value(forward(g, x_t, t, style));
}

Mat Denoiser::cfg_predict(const Mat& x_t, int t, int style, double scale) const {
  const Mat cond = predict(x_t, t, style);
  const Mat uncond = predict(x_t, t, cfg_.null_style());
  return (1.0 - scale) * uncond + scale * cond;
}

void Denoiser::fit_normalization(const std::vector<Mat>& crops) {
  const int io = 2 * cfg_.feature_dim;
  Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(io), s2 = Eigen::RowVectorXd::Zero(io);
  double n = 0;
  for (const Mat& c : crops) {
    if (c.cols() != io) fail(ErrorCode::kInvalidArgument, "fit_normalization: crop width mismatch");
    s += c.colwise().sum();
    s2 += c.array().square().matrix().colwise().sum();
    n += static_cast<double>(c.rows());
  }
  if (n < 1) fail(ErrorCode::kMissingInput, "fit_normalization: no frames");
  mean = s / n;
  stddev = (s2 / n - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-2);
}

Mat Denoiser::normalize(const Mat& x) const {
  return (x.rowwise() - mean).array().rowwise() / stddev.array();
}

Mat Denoiser::denormalize(const Mat& x) const {
  return (x.array().rowwise() * stddev.array()).matrix().rowwise() + mean;
}

Var x0_loss(Graph& g, Var pred, const Mat& target, double lambda) { return g.scale(g.mse(pred, target), lambda); }

NoisedExample make_training_example(const Denoiser& d, const Mat& x0, int style, std::mt19937_64& rng) {
  const auto& cfg = d.config();
  NoisedExample ex;
  ex.t = std::uniform_int_distribution<int>(1, cfg.train_steps)(rng);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat eps(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = n(rng);
  ex.noisy = add_noise(d.schedule(), x0, ex.t, eps);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < cfg.clean_leader_prob) ex.noisy.leftCols(cfg.feature_dim) = x0.leftCols(cfg.feature_dim);
  ex.style = u(rng) < cfg.cond_dropout ? cfg.null_style() : style;
  return ex;
}

DenoiserTrainer::DenoiserTrainer(Denoiser& d) : d_(d), opt_(d.params(), nn::AdamWConfig{.lr = d.config().lr}) {}

double DenoiserTrainer::step(const std::vector<const Mat*>& batch, const std::vector<int>& styles, std::mt19937_64& rng) {
  if (batch.empty() || batch.size() != styles.size()) fail(ErrorCode::kInvalidArgument, "denoiser step: bad batch");
  double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const NoisedExample ex = make_training_example(d_, *batch[i], styles[i], rng);
    Graph g;
    Var loss = x0_loss(g, d_.forward(g, ex.noisy, ex.t, ex.style), *batch[i]);
    const double v = g.scalar(loss);
    if (!std::isfinite(v)) fail(ErrorCode::kNumerical, "denoiser training diverged: non-finite loss at t=" + std::to_string(ex.t));
    total += v;
    g.backward(g.scale(loss, 1.0 / static_cast<double>(batch.size())));
  }
  opt_.step();
  return total / static_cast<double>(batch.size());
}

std::vector<double> train_denoiser(Denoiser& d, const std::vector<Mat>& crops, const std::vector<int>& styles,
                                   int iterations, std::mt19937_64& rng, const StepCallback& cb) {
  if (crops.empty() || crops.size() != styles.size()) fail(ErrorCode::kMissingInput, "train_denoiser: no training crops");
  DenoiserTrainer tr(d);
  std::vector<double> losses;
  std::uniform_int_distribution<std::size_t> pick(0, crops.size() - 1);
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(d.config().batch_size), crops.size());
  for (int it = 0; it < iterations; ++it) {
    std::vector<const Mat*> batch;
    std::vector<int> st;
    for (std::size_t b = 0; b < bs; ++b) {
      const std::size_t i = pick(rng);
      batch.push_back(&crops[i]);
      st.push_back(styles[i]);
    }
    losses.push_back(tr.step(batch, st, rng));
    if (cb) cb(it, losses.back());
  }
  return losses;
}

double evaluate_denoiser(const Denoiser& d, const std::vector<Mat>& crops, const std::vector<int>& styles, unsigned seed,
                         int draws) {
  std::mt19937_64 rng(seed);
  double total = 0;
  int n = 0;
  for (std::size_t i = 0; i < crops.size(); ++i) {
    for (int k = 0; k < draws; ++k) {
      const NoisedExample ex = make_training_example(d, crops[i], styles[i], rng);
      total += (d.predict(ex.noisy, ex.t, ex.style) - crops[i]).squaredNorm() / static_cast<double>(crops[i].size());
      ++n;
    }
  }
  return n ? total / n : 0.0;
}

void save_denoiser(const Denoiser& d, const std::string& path, const nlohmann::json& metadata) {
  Container c;
  c.magic = "DCKP";
  const nlohmann::json cfg = d.config().to_json();
  c.header["kind"] = "diffusion";
  c.header["config"] = cfg;
  c.header["config_hash"] = fnv1a_hex(cfg.dump());
  c.header["metadata"] = metadata;
  nn::append_params(c, const_cast<Denoiser&>(d).params());
  for (const auto& [name, v] : {std::pair{"norm.mean", &d.mean}, std::pair{"norm.std", &d.stddev}}) {
    Blob b;
    b.name = name;
    b.shape = {1, v->size()};
    for (Eigen::Index i = 0; i < v->size(); ++i) b.data.push_back(static_cast<float>((*v)(i)));
    c.blobs.push_back(std::move(b));
  }
  write_container(path, c);
}

Denoiser load_denoiser(const std::string& path, nlohmann::json* header) {
  const Container c = read_container(path, "DCKP");
  if (c.header.value("kind", "") != "diffusion") fail(ErrorCode::kIncompatible, path + ": not a diffusion checkpoint");
  if (c.header.value("config_hash", "") != fnv1a_hex(c.header.at("config").dump())) {
    fail(ErrorCode::kIncompatible, path + ": config hash mismatch");
  }
  std::mt19937_64 rng(0);
  Denoiser d(DenoiserConfig::from_json(c.header.at("config")), rng);
  nn::load_params(c, d.params());
  for (auto [name, v] : {std::pair{"norm.mean", &d.mean}, std::pair{"norm.std", &d.stddev}}) {
    const Blob& b = c.at(name);
    if (static_cast<Eigen::Index>(b.data.size()) != v->size()) fail(ErrorCode::kIncompatible, path + ": normalization size mismatch");
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = b.data[static_cast<std::size_t>(i)];
  }
  if (header != nullptr) *header = c.header;
  return d;
}

}  // namespace duet::diffusion
