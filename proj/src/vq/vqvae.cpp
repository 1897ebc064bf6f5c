#include "vq/vqvae.hpp"

#include "common/container.hpp"
#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace duet::vq {

void VqVaeConfig::validate() const {
  if (input_dim < 1 || latent_dim < 1 || window < 2 || hidden < 1 || layers < 1) {
    fail(ErrorCode::kInvalidArgument, "vq config: dimensions must be positive and window >= 2");
  }
  if (codebook_size < 1) fail(ErrorCode::kInvalidArgument, "vq config: codebook size must be >= 1");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) fail(ErrorCode::kInvalidArgument, "vq config: EMA decay must lie in (0, 1)");
  if (commit_weight < 0 || velocity_weight < 0) fail(ErrorCode::kInvalidArgument, "vq config: loss weights must be >= 0");
  if (batch_size < 1 || epochs < 0 || learning_rate <= 0) fail(ErrorCode::kInvalidArgument, "vq config: bad optimizer settings");
  for (int c : velocity_channels) {
    if (c < 0 || c >= input_dim) fail(ErrorCode::kInvalidArgument, "vq config: velocity channel out of range");
  }
}

nlohmann::json VqVaeConfig::to_json() const {
  return {{"input_dim", input_dim},
          {"latent_dim", latent_dim},
          {"codebook_size", codebook_size},
          {"window", window},
          {"hidden", hidden},
          {"layers", layers},
          {"ema_decay", ema_decay},
          {"commit_weight", commit_weight},
          {"velocity_weight", velocity_weight},
          {"dead_code_threshold", dead_code_threshold},
          {"warmup_epochs", warmup_epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"lr_gamma", lr_gamma},
          {"velocity_channels", velocity_channels}};
}

VqVaeConfig VqVaeConfig::from_json(const nlohmann::json& j) {
  VqVaeConfig c;
  try {
    c.input_dim = j.at("input_dim");
    c.latent_dim = j.at("latent_dim");
    c.codebook_size = j.at("codebook_size");
    c.window = j.at("window");
    c.hidden = j.at("hidden");
    c.layers = j.at("layers");
    c.ema_decay = j.at("ema_decay");
    c.commit_weight = j.at("commit_weight");
    c.velocity_weight = j.at("velocity_weight");
    c.dead_code_threshold = j.at("dead_code_threshold");
    c.warmup_epochs = j.at("warmup_epochs");
    c.learning_rate = j.at("learning_rate");
    c.batch_size = j.at("batch_size");
    c.epochs = j.at("epochs");
    c.lr_gamma = j.at("lr_gamma");
    c.velocity_channels = j.at("velocity_channels").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("vq config: ") + e.what());
  }
  c.validate();
  return c;
}

GruLayer::GruLayer(const std::string& name, int in_dim, int hidden, std::mt19937_64& rng)
    : in(name + ".in", in_dim, 3 * hidden, rng),
      w_h(name + ".w_h", nn::xavier_uniform(rng, hidden, 3 * hidden)),
      b_h(name + ".b_h", Mat::Zero(1, 3 * hidden)) {}

std::vector<Var> GruLayer::run(Graph& g, Var x, int steps, int batch, Var h0, bool reverse) const {
  Var gx = in(g, x);
  Var wh = g.param(w_h);
  Var bh = g.param(b_h);
  std::vector<Var> out(static_cast<std::size_t>(steps));
  Var h = h0;
  for (int i = 0; i < steps; ++i) {
    const int t = reverse ? steps - 1 - i : i;
    h = g.gru_cell(g.slice_rows(gx, t * batch, batch), h, wh, bh);
    out[static_cast<std::size_t>(t)] = h;
  }
  return out;
}

void GruLayer::collect(std::vector<nn::Param*>& out) {
  in.collect(out);
  out.push_back(&w_h);
  out.push_back(&b_h);
}

VqVae::VqVae(VqVaeConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int H = cfg_.hidden;
  for (int l = 0; l < cfg_.layers; ++l) {
    const int in_dim = l == 0 ? cfg_.input_dim : 2 * H;
    enc_fwd_.emplace_back("enc.l" + std::to_string(l) + ".fwd", in_dim, H, rng);
    enc_bwd_.emplace_back("enc.l" + std::to_string(l) + ".bwd", in_dim, H, rng);
  }
  enc_out_ = nn::Linear("enc.out", 2 * H, cfg_.latent_dim, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    dec_init_.emplace_back("dec.init" + std::to_string(l), cfg_.latent_dim, H, rng);
    dec_.emplace_back("dec.l" + std::to_string(l), l == 0 ? cfg_.latent_dim : H, H, rng);
  }
  dec_steps_ = nn::Param("dec.steps", nn::normal_init(rng, cfg_.window, 3 * H, 0.1));
  dec_out_ = nn::Linear("dec.out", H, cfg_.input_dim, rng);
  codebook_ = Codebook::uniform(cfg_.codebook_size, cfg_.latent_dim, rng);
  mean_ = Eigen::VectorXd::Zero(cfg_.input_dim);
  std_ = Eigen::VectorXd::Ones(cfg_.input_dim);
  vel_select_ = Mat::Zero(cfg_.input_dim, static_cast<Eigen::Index>(cfg_.velocity_channels.size()));
  for (std::size_t i = 0; i < cfg_.velocity_channels.size(); ++i) {
    vel_select_(cfg_.velocity_channels[i], static_cast<Eigen::Index>(i)) = 1.0;
  }
}

std::vector<nn::Param*> VqVae::params() {
  std::vector<nn::Param*> out;
  for (auto& l : enc_fwd_) l.collect(out);
  for (auto& l : enc_bwd_) l.collect(out);
  enc_out_.collect(out);
  for (auto& l : dec_init_) l.collect(out);
  for (auto& l : dec_) l.collect(out);
  out.push_back(&dec_steps_);
  dec_out_.collect(out);
  return out;
}

void VqVae::fit_normalization(std::span<const Mat> windows) {
  if (windows.empty()) fail(ErrorCode::kInvalidArgument, "fit_normalization: no windows");
  const Eigen::Index D = cfg_.input_dim;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(D), sq = Eigen::VectorXd::Zero(D);
  double n = 0;
  for (const Mat& w : windows) {
    check_window(w);
    sum += w.colwise().sum().transpose();
    sq += w.array().square().matrix().colwise().sum().transpose();
    n += static_cast<double>(w.rows());
  }
  mean_ = sum / n;
  std_ = (sq / n - mean_.cwiseProduct(mean_)).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-2);
}

void VqVae::set_normalization(Eigen::VectorXd mean, Eigen::VectorXd stddev) {
  if (mean.size() != cfg_.input_dim || stddev.size() != cfg_.input_dim) {
    fail(ErrorCode::kInvalidArgument, "set_normalization: dimension mismatch");
  }
  mean_ = std::move(mean);
  std_ = std::move(stddev);
}

Mat VqVae::normalize(const Mat& window) const {
  return ((window.rowwise() - mean_.transpose()).array().rowwise() / std_.transpose().array()).matrix();
}

Mat VqVae::denormalize(const Mat& window) const {
  return ((window.array().rowwise() * std_.transpose().array()).matrix().rowwise() + mean_.transpose());
}

void VqVae::check_window(const Mat& w) const {
  if (w.rows() != cfg_.window) {
    fail(ErrorCode::kInvalidArgument,
         "window length " + std::to_string(w.rows()) + " != " + std::to_string(cfg_.window));
  }
  if (w.cols() != cfg_.input_dim) fail(ErrorCode::kInvalidArgument, "window feature dimension mismatch");
}

Var VqVae::encode_graph(Graph& g, Var x, int batch) const {
  const int T = cfg_.window;
  Var h0 = g.constant(Mat::Zero(batch, cfg_.hidden));
  Var input = x;
  std::vector<Var> f, b;
  for (int l = 0; l < cfg_.layers; ++l) {
    f = enc_fwd_[static_cast<std::size_t>(l)].run(g, input, T, batch, h0, false);
    b = enc_bwd_[static_cast<std::size_t>(l)].run(g, input, T, batch, h0, true);
    if (l + 1 < cfg_.layers) {
      std::vector<Var> rows;
      rows.reserve(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) {
        const std::array<Var, 2> pair{f[static_cast<std::size_t>(t)], b[static_cast<std::size_t>(t)]};
        rows.push_back(g.concat_cols(pair));
      }
      input = g.concat_rows(rows);
    }
  }
  const std::array<Var, 2> last{f.back(), b.front()};
  return enc_out_(g, g.concat_cols(last));
}

Var VqVae::decode_graph(Graph& g, Var code, int batch) const {
  const int T = cfg_.window;
  std::vector<Var> hs;
  // First layer: latent every step plus a learned per-step offset.
  {
    const GruLayer& L = dec_[0];
    Var base = L.in(g, code);
    Var steps = g.param(dec_steps_);
    Var wh = g.param(L.w_h);
    Var bh = g.param(L.b_h);
    Var h = g.tanh(dec_init_[0](g, code));
    for (int t = 0; t < T; ++t) {
      h = g.gru_cell(g.add_row(base, g.slice_rows(steps, t, 1)), h, wh, bh);
      hs.push_back(h);
    }
  }
  for (int l = 1; l < cfg_.layers; ++l) {
    Var x = g.concat_rows(hs);
    Var h0 = g.tanh(dec_init_[static_cast<std::size_t>(l)](g, code));
    hs = dec_[static_cast<std::size_t>(l)].run(g, x, T, batch, h0, false);
  }
  return dec_out_(g, g.concat_rows(hs));
}

LossVars VqVae::loss_graph(Graph& g, Var x, Var z, Var zq, const Mat& codes, int batch) const {
  LossVars out;
  Var y = decode_graph(g, zq, batch);
  out.reconstruction = g.mse(y, g.value(x));
  out.commitment = g.mse(z, codes);
  const int T = cfg_.window;
  if (vel_select_.cols() > 0) {
    Var sel = g.constant(vel_select_);
    Var ys = g.matmul(y, sel);
    Mat xs = g.value(x) * vel_select_;
    const Eigen::Index n = static_cast<Eigen::Index>(T - 1) * batch;
    Var dy = g.sub(g.slice_rows(ys, batch, static_cast<int>(n)), g.slice_rows(ys, 0, static_cast<int>(n)));
    Mat dx = xs.bottomRows(n) - xs.topRows(n);
    out.velocity = g.mse(dy, dx);
  } else {
    out.velocity = g.constant(Mat::Zero(1, 1));
  }
  out.total = g.add(g.add(out.reconstruction, g.scale(out.commitment, cfg_.commit_weight)),
                    g.scale(out.velocity, cfg_.velocity_weight));
  return out;
}

Eigen::VectorXd VqVae::encode(const Mat& window) const {
  check_window(window);
  Graph g(false);
  Var z = encode_graph(g, g.constant(normalize(window)), 1);
  return g.value(z).row(0).transpose();
}

int VqVae::tokenize(const Mat& window) const { return quantize(codebook_, encode(window)).index; }

Mat VqVae::decode(int index) const {
  if (index < 0 || index >= codebook_.size()) {
    fail(ErrorCode::kOutOfRange, "decode: code index " + std::to_string(index) + " outside [0, " +
                                     std::to_string(codebook_.size()) + ")");
  }
  return decode_code(codebook_.codes.row(index).transpose());
}

Mat VqVae::decode_code(const Eigen::VectorXd& code) const {
  if (code.size() != cfg_.latent_dim) fail(ErrorCode::kInvalidArgument, "decode: latent dimension mismatch");
  Graph g(false);
  Var y = decode_graph(g, g.constant(code.transpose()), 1);
  return denormalize(g.value(y));
}

Mat VqVae::reconstruct(const Mat& window) const { return decode(tokenize(window)); }

Mat stack_windows(std::span<const Mat> windows) {
  if (windows.empty()) fail(ErrorCode::kInvalidArgument, "stack_windows: empty batch");
  const Eigen::Index T = windows[0].rows(), D = windows[0].cols();
  const auto B = static_cast<Eigen::Index>(windows.size());
  Mat out(T * B, D);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Mat& w = windows[static_cast<std::size_t>(b)];
    if (w.rows() != T || w.cols() != D) fail(ErrorCode::kInvalidArgument, "stack_windows: ragged batch");
    for (Eigen::Index t = 0; t < T; ++t) out.row(t * B + b) = w.row(t);
  }
  return out;
}

namespace {

struct Forward {
  LossVars loss;
  Mat latents;
  std::vector<int> indices;
};

Forward run_forward(const VqVae& m, Graph& g, std::span<const Mat> windows) {
  std::vector<Mat> norm;
  norm.reserve(windows.size());
  for (const Mat& w : windows) {
    if (w.rows() != m.config().window || w.cols() != m.config().input_dim) {
      fail(ErrorCode::kInvalidArgument, "vq batch: window shape mismatch");
    }
    norm.push_back(m.normalize(w));
  }
  const int B = static_cast<int>(windows.size());
  Var x = g.constant(stack_windows(norm));
  Var z = m.encode_graph(g, x, B);
  Forward f;
  f.latents = g.value(z);
  f.indices = quantize_rows(m.codebook(), f.latents);
  Mat codes(B, m.config().latent_dim);
  for (int b = 0; b < B; ++b) codes.row(b) = m.codebook().codes.row(f.indices[static_cast<std::size_t>(b)]);
  Var zq = g.straight_through(z, codes);
  f.loss = m.loss_graph(g, x, z, zq, codes, B);
  return f;
}

VqLosses values(const Graph& g, const LossVars& l) {
  return {g.scalar(l.total), g.scalar(l.reconstruction), g.scalar(l.commitment), g.scalar(l.velocity)};
}

}  // namespace

VqLosses VqVae::evaluate(std::span<const Mat> windows) const {
  Graph g(false);
  return values(g, run_forward(*this, g, windows).loss);
}

VqTrainer::VqTrainer(VqVae& model)
    : model_(model), opt_(model.params(), nn::AdamWConfig{.lr = model.config().learning_rate}) {
  recent_.resize(4096, model.config().latent_dim);
}

VqLosses VqTrainer::step(std::span<const Mat> batch) {
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "vq train_step: empty batch");
  Graph g;
  Forward f = run_forward(model_, g, batch);
  const VqLosses l = values(g, f.loss);
  if (!std::isfinite(l.total)) {
    fail(ErrorCode::kNumerical, "vq train_step: non-finite loss at step " + std::to_string(opt_.steps()) +
                                    " (reconstruction " + std::to_string(l.reconstruction) + ", commitment " +
                                    std::to_string(l.commitment) + ", velocity " + std::to_string(l.velocity) + ")");
  }
  g.backward(f.loss.total);
  opt_.step();
  ema_update(model_.codebook(), f.latents, f.indices, model_.config().ema_decay);
  for (Eigen::Index r = 0; r < f.latents.rows(); ++r) {
    recent_.row(recent_next_) = f.latents.row(r);
    recent_next_ = (recent_next_ + 1) % recent_.rows();
    recent_fill_ = std::min(recent_fill_ + 1, recent_.rows());
  }
  return l;
}

int VqTrainer::end_epoch(int epoch, std::mt19937_64& rng) {
  const VqVaeConfig& c = model_.config();
  const int drop_epoch = c.epochs / 2;
  int resets = 0;
  // Resets stop at the learning-rate drop so the decoder sees the final codebook.
  if (epoch + 1 >= c.warmup_epochs && epoch + 1 < drop_epoch && recent_fill_ > 0) {
    resets = reset_dead_codes(model_.codebook(), recent_.topRows(recent_fill_), c.dead_code_threshold, rng);
  }
  if (epoch + 1 == drop_epoch) opt_.set_lr(c.learning_rate * c.lr_gamma);
  return resets;
}

std::vector<VqLosses> VqTrainer::fit(std::span<const Mat> windows, std::mt19937_64& rng, const Progress& progress) {
  if (windows.empty()) fail(ErrorCode::kInvalidArgument, "vq fit: no training windows");
  model_.fit_normalization(windows);
  const VqVaeConfig& c = model_.config();
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<VqLosses> history;
  std::vector<Mat> batch;
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    VqLosses acc;
    int n = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(c.batch_size)) {
      batch.clear();
      for (std::size_t i = s; i < std::min(order.size(), s + static_cast<std::size_t>(c.batch_size)); ++i) {
        batch.push_back(windows[order[i]]);
      }
      const VqLosses l = step(batch);
      acc.total += l.total;
      acc.reconstruction += l.reconstruction;
      acc.commitment += l.commitment;
      acc.velocity += l.velocity;
      ++n;
    }
    acc.total /= n;
    acc.reconstruction /= n;
    acc.commitment /= n;
    acc.velocity /= n;
    const int resets = end_epoch(epoch, rng);
    history.push_back(acc);
    if (progress) progress(epoch, acc, resets);
  }
  return history;
}

namespace {

Blob blob_from(const std::string& name, const Mat& m) {
  Blob b{name, {m.rows(), m.cols()}, {}};
  b.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) b.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return b;
}

Mat mat_from(const Blob& b, Eigen::Index rows, Eigen::Index cols) {
  if (b.shape.size() != 2 || b.shape[0] != rows || b.shape[1] != cols) {
    fail(ErrorCode::kIncompatible, "checkpoint shape mismatch for '" + b.name + "'");
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = b.data[static_cast<std::size_t>(i)];
  return m;
}

}  // namespace

void save_vqvae(const VqVae& model, const std::string& path, const nlohmann::json& metadata) {
  Container c;
  c.magic = "DCKP";
  const nlohmann::json cfg = model.config().to_json();
  c.header["kind"] = "vqvae";
  c.header["config"] = cfg;
  c.header["config_hash"] = fnv1a_hex(cfg.dump());
  c.header["metadata"] = metadata;
  nn::append_params(c, const_cast<VqVae&>(model).params());
  const Codebook& cb = model.codebook();
  c.blobs.push_back(blob_from("codebook.codes", cb.codes));
  c.blobs.push_back(blob_from("codebook.cluster_size", cb.cluster_size.transpose()));
  c.blobs.push_back(blob_from("codebook.ema_sum", cb.ema_sum));
  c.blobs.push_back(blob_from("norm.mean", model.feature_mean().transpose()));
  c.blobs.push_back(blob_from("norm.std", model.feature_std().transpose()));
  write_container(path, c);
}

VqVae load_vqvae(const std::string& path, nlohmann::json* metadata) {
  const Container c = read_container(path, "DCKP");
  if (c.header.value("kind", "") != "vqvae") fail(ErrorCode::kIncompatible, path + ": not a VQ-VAE checkpoint");
  const VqVaeConfig cfg = VqVaeConfig::from_json(c.header.at("config"));
  if (c.header.value("config_hash", "") != fnv1a_hex(c.header.at("config").dump())) {
    fail(ErrorCode::kIncompatible, path + ": config hash mismatch");
  }
  std::mt19937_64 rng(0);
  VqVae m(cfg, rng);
  nn::load_params(c, m.params());
  Codebook& cb = m.codebook();
  const Eigen::Index K = cfg.codebook_size, d = cfg.latent_dim, D = cfg.input_dim;
  cb.codes = mat_from(c.at("codebook.codes"), K, d);
  cb.cluster_size = mat_from(c.at("codebook.cluster_size"), 1, K).row(0).transpose();
  cb.ema_sum = mat_from(c.at("codebook.ema_sum"), K, d);
  m.set_normalization(mat_from(c.at("norm.mean"), 1, D).row(0).transpose(),
                      mat_from(c.at("norm.std"), 1, D).row(0).transpose());
  if (metadata != nullptr) *metadata = c.header.value("metadata", nlohmann::json::object());
  return m;
}

}  // namespace duet::vq
