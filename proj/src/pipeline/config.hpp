#pragma once

// Pipeline configuration: a tree of module sections filled from a key = value
// text file. Keys are "section.field" (for example "lm.d_model"); values are
// parsed to the type of the field's default. See docs/formats.md.

#include "diffusion/denoiser.hpp"
#include "lm/model.hpp"
#include "pipeline/synth.hpp"
#include "vq/tokenizer.hpp"
#include "vq/vqvae.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace duet::pipeline {

struct Ablation {
  bool audio = true;
  bool captions = true;
  bool relation = true;
  bool refine = true;
  /// "full" or the disabled switches joined by '+', e.g. "no-relation".
  [[nodiscard]] std::string label() const;
};

class PipelineConfig {
 public:
  /// Desk-scale defaults (64 sequences x 60 s).
  PipelineConfig();
  static PipelineConfig preset(const std::string& name);  // "desk" or "smoke"
  static PipelineConfig load(const std::filesystem::path& path);
  /// Applies key = value lines on top of the current values. A "preset" key
  /// must come first.
  void apply_text(const std::string& text, const std::string& origin = "<config>");

  void set(const std::string& key, const std::string& value);
  [[nodiscard]] std::string get(const std::string& key) const;
  [[nodiscard]] const nlohmann::json& tree() const { return tree_; }
  [[nodiscard]] std::string to_text() const;

  [[nodiscard]] std::filesystem::path run_dir() const;
  [[nodiscard]] unsigned seed() const;
  [[nodiscard]] unsigned shared_seed() const;
  [[nodiscard]] Ablation ablation() const;

  [[nodiscard]] SyntheticDuetSpec corpus_spec() const;
  [[nodiscard]] int corpus_count() const;
  [[nodiscard]] int eval_count() const;
  [[nodiscard]] vq::VqVaeConfig motion_vq(int joint_count) const;
  [[nodiscard]] vq::VqVaeConfig relation_vq() const;
  [[nodiscard]] int audio_codebook() const;
  [[nodiscard]] lm::LmConfig lm_config(int vocab_size, std::vector<int> base_ids) const;
  [[nodiscard]] diffusion::DenoiserConfig denoiser_config(int feature_dim, std::vector<std::string> styles) const;

  [[nodiscard]] int integer(const std::string& key) const;
  [[nodiscard]] double number(const std::string& key) const;
  [[nodiscard]] bool flag(const std::string& key) const;

  /// Hash of one section, or of the whole tree minus run_dir for "".
  [[nodiscard]] std::string section_hash(const std::string& section) const;

 private:
  [[nodiscard]] const nlohmann::json& at(const std::string& key) const;
  nlohmann::json tree_;
};

}  // namespace duet::pipeline
