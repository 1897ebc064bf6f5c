#include "lm/model.hpp"

#include "common/container.hpp"
#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace duet::lm {

void LmConfig::validate() const {
  if (vocab_size < 1) fail(ErrorCode::kInvalidArgument, "lm config: vocabulary size must be positive");
  if (d_model < 1 || layers < 1 || heads < 1 || d_model % heads != 0) {
    fail(ErrorCode::kInvalidArgument, "lm config: embedding dim must be divisible by the head count");
  }
  if (context < 2) fail(ErrorCode::kInvalidArgument, "lm config: context too short");
  if (lora_rank < 1) fail(ErrorCode::kInvalidArgument, "lm config: LoRA rank must be >= 1");
  if (dropout < 0 || dropout >= 1 || lora_dropout < 0 || lora_dropout >= 1) {
    fail(ErrorCode::kInvalidArgument, "lm config: dropout outside [0, 1)");
  }
  for (int id : base_ids) {
    if (id < 0 || id >= vocab_size) fail(ErrorCode::kInvalidArgument, "lm config: base id out of range");
  }
}

nlohmann::json LmConfig::to_json() const {
  return {{"vocab_size", vocab_size},   {"d_model", d_model},       {"layers", layers},
          {"heads", heads},             {"context", context},       {"ffn_mult", ffn_mult},
          {"dropout", dropout},         {"lora_rank", lora_rank},   {"lora_alpha", lora_alpha},
          {"lora_dropout", lora_dropout}, {"base_ids", base_ids},   {"lr_stage0", lr_stage0},
          {"lr_stage1", lr_stage1},     {"lr_stage2", lr_stage2},   {"batch_size", batch_size},
          {"epochs_stage0", epochs_stage0}, {"epochs_stage1", epochs_stage1}, {"epochs_stage2", epochs_stage2},
          {"temperature", temperature}, {"top_k", top_k}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  try {
    c.vocab_size = j.at("vocab_size");
    c.d_model = j.at("d_model");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.context = j.at("context");
    c.ffn_mult = j.at("ffn_mult");
    c.dropout = j.at("dropout");
    c.lora_rank = j.at("lora_rank");
    c.lora_alpha = j.at("lora_alpha");
    c.lora_dropout = j.at("lora_dropout");
    c.base_ids = j.at("base_ids").get<std::vector<int>>();
    c.lr_stage0 = j.at("lr_stage0");
    c.lr_stage1 = j.at("lr_stage1");
    c.lr_stage2 = j.at("lr_stage2");
    c.batch_size = j.at("batch_size");
    c.epochs_stage0 = j.at("epochs_stage0");
    c.epochs_stage1 = j.at("epochs_stage1");
    c.epochs_stage2 = j.at("epochs_stage2");
    c.temperature = j.at("temperature");
    c.top_k = j.at("top_k");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("lm config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<int> base_token_ids(const vocab::Vocabulary& v) {
  std::vector<int> ids{vocab::kPad, vocab::kSys, vocab::kEos, vocab::kUnk};
  const vocab::Range t = v.range(vocab::TokenClass::kText);
  for (int id = t.begin; id < t.end; ++id) ids.push_back(id);
  return ids;
}

LoraAdapter::LoraAdapter(const std::string& name, int d_in, int d_out, int rank, double alpha, double drop,
                         std::mt19937_64& rng)
    : a(name + ".lora_a", Mat(rank, d_in)), b(name + ".lora_b", Mat::Zero(d_out, rank)), scale(alpha / rank), dropout(drop) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < a.value.size(); ++i) a.value.data()[i] = u(rng);
}

Var LoraAdapter::delta(Graph& g, Var x, std::mt19937_64* rng) const {
  Var in = (rng != nullptr && dropout > 0.0) ? g.dropout(x, dropout, *rng) : x;
  return g.scale(g.matmul_nt(g.matmul_nt(in, g.param(a)), g.param(b)), scale);
}

TokenLm::TokenLm(LmConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int d = cfg_.d_model, V = cfg_.vocab_size;
  tok_emb_ = nn::Param("tok_emb", nn::normal_init(rng, V, d, 0.02));
  pos_emb_ = nn::Param("pos_emb", nn::normal_init(rng, cfg_.context, d, 0.02));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    Block b;
    b.ln1 = nn::LayerNorm(p + ".ln1", d);
    b.ln2 = nn::LayerNorm(p + ".ln2", d);
    b.wq = nn::Linear(p + ".wq", d, d, rng);
    b.wk = nn::Linear(p + ".wk", d, d, rng, false);  // a key bias cancels in the softmax
    b.wv = nn::Linear(p + ".wv", d, d, rng);
    b.wo = nn::Linear(p + ".wo", d, d, rng);
    b.lq = LoraAdapter(p + ".wq", d, d, cfg_.lora_rank, cfg_.lora_alpha, cfg_.lora_dropout, rng);
    b.lk = LoraAdapter(p + ".wk", d, d, cfg_.lora_rank, cfg_.lora_alpha, cfg_.lora_dropout, rng);
    b.lv = LoraAdapter(p + ".wv", d, d, cfg_.lora_rank, cfg_.lora_alpha, cfg_.lora_dropout, rng);
    b.lo = LoraAdapter(p + ".wo", d, d, cfg_.lora_rank, cfg_.lora_alpha, cfg_.lora_dropout, rng);
    b.ff1 = nn::Linear(p + ".ff1", d, cfg_.ffn_mult * d, rng);
    b.ff2 = nn::Linear(p + ".ff2", cfg_.ffn_mult * d, d, rng);
    blocks_.push_back(std::move(b));
  }
  ln_f_ = nn::LayerNorm("ln_f", d);
  head_ = nn::Param("head", nn::normal_init(rng, V, d, 0.02));
  set_stage(Stage::kBase);
}

std::vector<nn::Param*> TokenLm::params() {
  std::vector<nn::Param*> out{&tok_emb_, &pos_emb_};
  for (Block& b : blocks_) {
    b.ln1.collect(out);
    b.wq.collect(out);
    b.wk.collect(out);
    b.wv.collect(out);
    b.wo.collect(out);
    b.ln2.collect(out);
    b.ff1.collect(out);
    b.ff2.collect(out);
  }
  ln_f_.collect(out);
  out.push_back(&head_);
  for (nn::Param* p : lora_params()) out.push_back(p);
  return out;
}

std::vector<nn::Param*> TokenLm::lora_params() {
  std::vector<nn::Param*> out;
  for (Block& b : blocks_) {
    for (LoraAdapter* l : {&b.lq, &b.lk, &b.lv, &b.lo}) {
      out.push_back(&l->a);
      out.push_back(&l->b);
    }
  }
  return out;
}

void TokenLm::set_stage(Stage s) {
  stage_ = s;
  const auto lora = lora_params();
  auto is_lora = [&](const nn::Param* p) { return std::find(lora.begin(), lora.end(), p) != lora.end(); };
  std::vector<bool> base_rows(static_cast<std::size_t>(cfg_.vocab_size), false);
  for (int id : cfg_.base_ids) base_rows[static_cast<std::size_t>(id)] = true;
  for (nn::Param* p : params()) {
    p->frozen_rows.clear();
    switch (s) {
      case Stage::kBase:
        p->trainable = !is_lora(p);
        break;
      case Stage::kAlign:
        p->trainable = is_lora(p) || p == &tok_emb_ || p == &head_;
        if (p == &tok_emb_ || p == &head_) p->frozen_rows = base_rows;
        break;
      case Stage::kFinetune:
        p->trainable = is_lora(p);
        break;
    }
  }
  lora_on_ = s != Stage::kBase;
}

Var TokenLm::project(Graph& g, const nn::Linear& w, const LoraAdapter& l, Var x, std::mt19937_64* rng) const {
  Var y = w(g, x);
  return lora_on_ ? g.add(y, l.delta(g, x, rng)) : y;
}

Var TokenLm::forward(Graph& g, std::span<const int> ids, std::mt19937_64* rng) const {
  const int T = static_cast<int>(ids.size());
  if (T == 0) fail(ErrorCode::kInvalidArgument, "lm forward: empty sequence");
  if (T > cfg_.context) {
    fail(ErrorCode::kOutOfRange, "lm forward: length " + std::to_string(T) + " exceeds context " + std::to_string(cfg_.context));
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg_.vocab_size) fail(ErrorCode::kOutOfRange, "lm forward: token id " + std::to_string(id) + " out of range");
  }
  const int H = cfg_.heads, dh = cfg_.d_model / cfg_.heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  auto drop = [&](Var v) { return (rng != nullptr && cfg_.dropout > 0.0) ? g.dropout(v, cfg_.dropout, *rng) : v; };
  Var x = g.add(g.gather_rows(g.param(tok_emb_), ids), g.slice_rows(g.param(pos_emb_), 0, T));
  for (const Block& b : blocks_) {
    Var h = b.ln1(g, x);
    Var q = project(g, b.wq, b.lq, h, rng);
    Var k = project(g, b.wk, b.lk, h, rng);
    Var v = project(g, b.wv, b.lv, h, rng);
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i) {
      Var qi = g.slice_cols(q, i * dh, dh), ki = g.slice_cols(k, i * dh, dh), vi = g.slice_cols(v, i * dh, dh);
      Var att = g.softmax_rows(g.scale(g.matmul_nt(qi, ki), inv), true);
      heads.push_back(g.matmul(att, vi));
    }
    x = g.add(x, drop(project(g, b.wo, b.lo, g.concat_cols(heads), rng)));
    x = g.add(x, drop(b.ff2(g, g.gelu(b.ff1(g, b.ln2(g, x))))));
  }
  return g.matmul_nt(ln_f_(g, x), g.param(head_));
}

Mat TokenLm::logits(std::span<const int> ids) const {
  Graph g(false);
  return g.value(forward(g, ids));
}

Var nll_loss(Graph& g, Var logits, std::span<const int> ids, std::span<const std::uint8_t> mask) {
  const int T = static_cast<int>(ids.size());
  if (mask.size() != ids.size() || g.value(logits).rows() != T) fail(ErrorCode::kInvalidArgument, "nll_loss: shape mismatch");
  if (T < 2) return g.constant(Mat::Zero(1, 1));
  std::vector<int> targets(ids.begin() + 1, ids.end());
  std::vector<double> w(static_cast<std::size_t>(T - 1));
  for (int t = 1; t < T; ++t) w[static_cast<std::size_t>(t - 1)] = mask[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
  return g.cross_entropy(g.slice_rows(logits, 0, T - 1), targets, w);
}

namespace {

int supervised(const vocab::PromptSequence& s) {
  return s.mask.empty() ? 0 : std::accumulate(s.mask.begin() + 1, s.mask.end(), 0);
}

}  // namespace

double sequence_nll(const TokenLm& m, const vocab::PromptSequence& s) {
  Graph g(false);
  return g.scalar(nll_loss(g, m.forward(g, s.ids), s.ids, s.mask));
}

double mean_nll(const TokenLm& m, std::span<const vocab::PromptSequence> data) {
  double total = 0;
  long count = 0;
  for (const auto& s : data) {
    if (supervised(s) == 0) continue;
    total += sequence_nll(m, s);
    count += supervised(s);
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

TrainReport train_lm(TokenLm& m, std::span<const vocab::PromptSequence> data, int epochs, int batch_size, double lr,
                     std::mt19937_64& rng, const EpochCallback& cb) {
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "train_lm: batch size must be >= 1");
  nn::AdamW opt(m.params(), nn::AdamWConfig{.lr = lr});
  TrainReport rep;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    long epoch_count = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), s + static_cast<std::size_t>(batch_size));
      int count = 0;
      for (std::size_t i = s; i < end; ++i) count += supervised(data[order[i]]);
      if (count == 0) continue;
      for (std::size_t i = s; i < end; ++i) {
        const auto& ex = data[order[i]];
        if (supervised(ex) == 0) continue;
        Graph g;
        Var loss = nll_loss(g, m.forward(g, ex.ids, &rng), ex.ids, ex.mask);
        const double v = g.scalar(loss);
        if (!std::isfinite(v)) {
          fail(ErrorCode::kNumerical, "lm training diverged: non-finite loss at epoch " + std::to_string(e) + ", step " +
                                          std::to_string(rep.steps));
        }
        epoch_loss += v;
        g.backward(g.scale(loss, 1.0 / count));
      }
      epoch_count += count;
      opt.step();
      ++rep.steps;
    }
    const double mean = epoch_count ? epoch_loss / static_cast<double>(epoch_count) : 0.0;
    rep.epoch_loss.push_back(mean);
    if (cb) cb(e, mean);
  }
  return rep;
}

Generation generate(const TokenLm& m, const vocab::Vocabulary& v, std::span<const int> context, const SamplingConfig& s,
                    int max_tokens, std::mt19937_64& rng) {
  if (context.empty() || context.back() != vocab::kFollowerOpen) {
    fail(ErrorCode::kInvalidArgument, "generate: context must end with <Follower>");
  }
  std::vector<int> ids(context.begin(), context.end());
  const vocab::Range motion = v.range(vocab::TokenClass::kMotion);
  std::vector<int> allowed;
  for (int id = motion.begin; id < motion.end; ++id) allowed.push_back(id);
  allowed.push_back(vocab::kFollowerClose);
  Generation out;
  for (int step = 0; step < max_tokens; ++step) {
    const Mat lg = m.logits(ids);
    const auto last = lg.row(lg.rows() - 1);
    int pick = allowed[0];
    if (s.temperature <= 0.0) {
      for (int id : allowed) {
        if (last(id) > last(pick)) pick = id;
      }
    } else {
      std::vector<int> cand = allowed;
      const int k = s.top_k > 0 ? std::min<int>(s.top_k, static_cast<int>(cand.size())) : static_cast<int>(cand.size());
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), [&](int a, int b) {
        return last(a) > last(b) || (last(a) == last(b) && a < b);
      });
      cand.resize(static_cast<std::size_t>(k));
      std::vector<double> w(cand.size());
      const double mx = last(cand[0]);
      for (std::size_t i = 0; i < cand.size(); ++i) w[i] = std::exp((last(cand[i]) - mx) / s.temperature);
      std::discrete_distribution<std::size_t> d(w.begin(), w.end());
      pick = cand[d(rng)];
    }
    if (pick == vocab::kFollowerClose) {
      out.closed = true;
      return out;
    }
    out.follower.push_back(pick - motion.begin);
    ids.push_back(pick);
    if (static_cast<int>(ids.size()) >= m.config().context) break;
  }
  out.truncated = true;
  return out;
}

void save_lm(const TokenLm& m, const std::string& path, const std::string& vocab_hash, const nlohmann::json& metadata) {
  Container c;
  c.magic = "DCKP";
  const nlohmann::json cfg = m.config().to_json();
  c.header["kind"] = "lm";
  c.header["config"] = cfg;
  c.header["config_hash"] = fnv1a_hex(cfg.dump());
  c.header["vocab_hash"] = vocab_hash;
  c.header["stage"] = static_cast<int>(m.stage());
  c.header["metadata"] = metadata;
  nn::append_params(c, const_cast<TokenLm&>(m).params());
  write_container(path, c);
}

TokenLm load_lm(const std::string& path, nlohmann::json* header) {
  const Container c = read_container(path, "DCKP");
  if (c.header.value("kind", "") != "lm") fail(ErrorCode::kIncompatible, path + ": not a language-model checkpoint");
  if (c.header.value("config_hash", "") != fnv1a_hex(c.header.at("config").dump())) {
    fail(ErrorCode::kIncompatible, path + ": config hash mismatch");
  }
  std::mt19937_64 rng(0);
  TokenLm m(LmConfig::from_json(c.header.at("config")), rng);
  nn::load_params(c, m.params());
  m.set_stage(static_cast<Stage>(c.header.value("stage", 0)));
  if (header != nullptr) *header = c.header;
  return m;
}

}  // namespace duet::lm
