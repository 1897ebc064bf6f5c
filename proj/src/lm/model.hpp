#pragma once

#include "nn/layers.hpp"
#include "vocab/prompt.hpp"

#include "json.hpp"

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace duet::lm {

using nn::Graph;
using nn::Mat;
using nn::Var;

struct LmConfig {
  int vocab_size = 0;
  int d_model = 256;
  int layers = 4;
  int heads = 8;
  int context = 1024;
  int ffn_mult = 4;
  double dropout = 0.0;
  int lora_rank = 64;
  double lora_alpha = 64.0;
  double lora_dropout = 0.1;
  // Ids [0, base_rows) belong to the base model (specials without markers and
  // text words); their embedding and output-head rows stay frozen once
  // multimodal training starts.
  std::vector<int> base_ids;
  double lr_stage0 = 1e-3;
  double lr_stage1 = 2e-5;
  double lr_stage2 = 1e-5;
  int batch_size = 4;
  int epochs_stage0 = 10;
  int epochs_stage1 = 10;
  int epochs_stage2 = 100;
  double temperature = 0.9;
  int top_k = 50;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

/// Low-rank update s * x A^T B^T on a linear map, s = alpha / r.
/// Ids frozen during multimodal alignment: <pad> <sys> <eos> <unk> and all text words.
std::vector<int> base_token_ids(const vocab::Vocabulary& v);

struct LoraAdapter {
  nn::Param a;  // r x d_in
  nn::Param b;  // d_out x r, zero at init
  double scale = 1.0;
  double dropout = 0.0;

  LoraAdapter() = default;
  LoraAdapter(const std::string& name, int d_in, int d_out, int rank, double alpha, double dropout, std::mt19937_64& rng);
  Var delta(Graph& g, Var x, std::mt19937_64* rng) const;
};

struct Block {
  nn::LayerNorm ln1, ln2;
  nn::Linear wq, wk, wv, wo;
  LoraAdapter lq, lk, lv, lo;
  nn::Linear ff1, ff2;
};

enum class Stage { kBase = 0, kAlign = 1, kFinetune = 2 };

class TokenLm {
 public:
  TokenLm() = default;
  TokenLm(LmConfig cfg, std::mt19937_64& rng);

  [[nodiscard]] const LmConfig& config() const { return cfg_; }

  /// Logits (T x V) for one sequence. `rng` enables dropout (training only).
  Var forward(Graph& g, std::span<const int> ids, std::mt19937_64* rng = nullptr) const;
  [[nodiscard]] Mat logits(std::span<const int> ids) const;

  /// Sets trainable flags / frozen rows for a stage:
  ///  base     - everything except LoRA factors;
  ///  align    - multimodal embedding/head rows and LoRA factors;
  ///  finetune - LoRA factors only.
  void set_stage(Stage s);
  [[nodiscard]] Stage stage() const { return stage_; }
  /// LoRA on/off in the forward pass (off during base training).
  void enable_lora(bool on) { lora_on_ = on; }
  [[nodiscard]] bool lora_enabled() const { return lora_on_; }

  std::vector<nn::Param*> params();
  std::vector<nn::Param*> lora_params();
  nn::Param& embedding() { return tok_emb_; }
  nn::Param& head() { return head_; }
  nn::LayerNorm& final_norm() { return ln_f_; }

 private:
  Var project(Graph& g, const nn::Linear& w, const LoraAdapter& l, Var x, std::mt19937_64* rng) const;

  LmConfig cfg_;
  nn::Param tok_emb_;  // V x d
  nn::Param pos_emb_;  // context x d
  std::vector<Block> blocks_;
  nn::LayerNorm ln_f_;
  nn::Param head_;  // V x d
  Stage stage_ = Stage::kBase;
  bool lora_on_ = true;
};

/// Summed negative log-likelihood over masked-in positions.
/// `logits` row t predicts ids[t + 1]; weights come from mask[t + 1].
Var nll_loss(Graph& g, Var logits, std::span<const int> ids, std::span<const std::uint8_t> mask);
/// Plain value of the same loss.
double sequence_nll(const TokenLm& m, const vocab::PromptSequence& s);

struct TrainReport {
  std::vector<double> epoch_loss;  // mean NLL per supervised token
  long steps = 0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Mini-batch AdamW over `data` for the model's current stage; loss is the
/// summed NLL divided by the number of supervised tokens in the batch.
TrainReport train_lm(TokenLm& m, std::span<const vocab::PromptSequence> data, int epochs, int batch_size, double lr,
                     std::mt19937_64& rng, const EpochCallback& cb = {});

/// Mean NLL per supervised token.
double mean_nll(const TokenLm& m, std::span<const vocab::PromptSequence> data);

struct SamplingConfig {
  double temperature = 0.9;  // 0 = greedy
  int top_k = 50;
};

struct Generation {
  std::vector<int> follower;  // motion codebook indices
  bool closed = false;        // </Follower> emitted
  bool truncated = false;     // stopped at max_tokens
};

/// Constrained decoding after a context ending with <Follower>: only motion
/// ids and </Follower> can be emitted.
Generation generate(const TokenLm& m, const vocab::Vocabulary& v, std::span<const int> context, const SamplingConfig& s,
                    int max_tokens, std::mt19937_64& rng);

void save_lm(const TokenLm& m, const std::string& path, const std::string& vocab_hash, const nlohmann::json& metadata);
TokenLm load_lm(const std::string& path, nlohmann::json* header = nullptr);

}  // namespace duet::lm
