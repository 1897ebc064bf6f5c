#pragma once

// Stage commands over a run directory. Layout (see docs/formats.md):
//   data/<seq>.duet, data/<seq>.beats.json, data/split.json
//   vq/motion.ckpt, vq/relation.ckpt
//   tokens/{motion,relation,audio}.tsv, tokens/meta.json, tokens/relation_stats.json
//   captions/{leader,follower}.tsv, captions/vocab.json, captions/meta.json
//   diffusion/denoiser.ckpt
//   variants/<label>-s<seed>/{lm.ckpt, gen/, refined/, metrics.json}
//   report/{table.txt, metrics.csv}
//   manifest.json

#include "metrics/metrics.hpp"
#include "pipeline/config.hpp"
#include "vocab/prompt.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace duet::pipeline {

using Logger = std::function<void(const std::string&)>;

/// Optional overrides of a command's default input and output locations.
struct StageIo {
  std::filesystem::path in;
  std::filesystem::path out;
};

const std::vector<std::string>& command_names();

void gen_data(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
void train_vq(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
void tokenize(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
void describe(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
void train_diffusion(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
void train_lm(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
void generate(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
void refine(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
/// Writes ground-truth, raw and (unless refinement is off) refined reports.
std::vector<metrics::MetricReport> evaluate(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});
/// Collects every variants/*/metrics.json into the text table and CSV.
std::string report(const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});

/// Dispatch by command name ("gen-data", "train-vq", ...).
void run_command(const std::string& name, const PipelineConfig& cfg, const StageIo& io = {}, const Logger& log = {});

/// All stages in order. Shared stages (data, VQ, tokens, captions, denoiser)
/// are skipped when the manifest records the same stamp and their outputs exist.
std::vector<metrics::MetricReport> run_pipeline(const PipelineConfig& cfg, const Logger& log = {});

/// variants/<ablation label>-s<seed>
std::filesystem::path variant_dir(const PipelineConfig& cfg);

/// Prompt sets the LM stages would train on, plus one inference prompt per
/// generation chunk of the eval sequences. Needs tokenize and describe outputs.
struct PromptSets {
  std::vector<vocab::PromptSequence> text, stage1, stage2, inference;
};
PromptSets build_prompt_sets(const PipelineConfig& cfg);

/// Cuts a duet into consecutive clips of `len` frames (a trailing remainder is
/// dropped); beat times are shifted into each clip.
std::vector<motion::DuetSequence> clip_duet(const motion::DuetSequence& seq, int len);

/// Stick-figure SVG of one frame (leader blue, follower red, top-down XY side view).
void write_stick_figure_svg(const motion::DuetSequence& seq, int frame, const std::filesystem::path& path);

}  // namespace duet::pipeline
