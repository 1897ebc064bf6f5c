// Command-line front end; talks to the pipeline only through the C interface.
#include "duet/duet.h"

#include "CLI11.hpp"

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace {

void print_log(const char* msg, void*) {
  std::fprintf(stderr, "%s\n", msg);
  std::fflush(stderr);
}

int report_failure(duet_status s, const std::string& what) {
  std::fprintf(stderr, "duet: %s failed (%s): %s\n", what.c_str(), duet_status_name(s), duet_last_error());
  return static_cast<int>(s);
}

using ConfigPtr = std::unique_ptr<duet_config, decltype(&duet_config_free)>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leader-follower duet generation pipeline"};
  app.require_subcommand(1);

  std::string config_path, preset = "desk", run_dir, in, out;
  std::vector<std::string> sets;
  unsigned seed = 0;
  bool no_audio = false, no_captions = false, no_relation = false, no_refine = false, quiet = false;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--preset", preset, "desk or smoke (ignored with --config)");
  app.add_option("--run-dir", run_dir, "run directory (overrides run_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "seed for LM training, generation, refinement and evaluation");
  app.add_option("--set", sets, "extra key=value override, repeatable");
  app.add_flag("--no-audio", no_audio, "drop the audio span from prompts");
  app.add_flag("--no-captions", no_captions, "drop captions and text-motion tasks");
  app.add_flag("--no-relation", no_relation, "drop the relation span; place followers with the mean relation");
  app.add_flag("--no-refine", no_refine, "skip diffusion refinement");
  app.add_flag("-q,--quiet", quiet, "no progress output");

  std::vector<CLI::App*> stage_cmds;
  for (size_t i = 0; i < duet_command_count(); ++i) {
    auto* sub = app.add_subcommand(duet_command_name(i), std::string("run the ") + duet_command_name(i) + " stage");
    sub->add_option("--in", in, "input path override");
    sub->add_option("--out", out, "output path override");
    stage_cmds.push_back(sub);
  }
  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order (shared stages are cached)");
  auto* show = app.add_subcommand("config", "print the effective configuration");
  auto* render = app.add_subcommand("render", "write stick-figure SVG frames of a .duet file");
  std::string render_in, render_out = ".";
  int frame = 0, count = 1, step = 10;
  render->add_option("--in", render_in, ".duet file")->required();
  render->add_option("--out", render_out, "output directory");
  render->add_option("--frame", frame, "first frame");
  render->add_option("--count", count, "number of frames");
  render->add_option("--step", step, "frame step");

  CLI11_PARSE(app, argc, argv);

  if (render->parsed()) {
    duet_sequence* seq = nullptr;
    if (duet_status s = duet_sequence_read(render_in.c_str(), &seq); s != DUET_OK) return report_failure(s, "render");
    std::unique_ptr<duet_sequence, decltype(&duet_sequence_free)> guard(seq, duet_sequence_free);
    for (int k = 0; k < count; ++k) {
      const int f = frame + k * step;
      if (f >= duet_sequence_frames(seq)) break;
      char name[32];
      std::snprintf(name, sizeof name, "/frame_%05d.svg", f);
      if (duet_status s = duet_sequence_render_svg(seq, f, (render_out + name).c_str()); s != DUET_OK) {
        return report_failure(s, "render");
      }
    }
    return 0;
  }

  duet_config* raw = nullptr;
  duet_status s = config_path.empty() ? duet_config_new(preset.c_str(), &raw) : duet_config_load(config_path.c_str(), &raw);
  if (s != DUET_OK) return report_failure(s, "config");
  ConfigPtr cfg(raw, duet_config_free);
  const auto set = [&](const std::string& k, const std::string& v) {
    const duet_status st = duet_config_set(cfg.get(), k.c_str(), v.c_str());
    if (st != DUET_OK) std::exit(report_failure(st, "config " + k));
  };
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "duet: --set expects key=value, got '%s'\n", kv.c_str());
      return 1;
    }
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!run_dir.empty()) set("run_dir", run_dir);
  if (*seed_opt) set("seed", std::to_string(seed));
  if (no_audio) set("ablation.audio", "false");
  if (no_captions) set("ablation.captions", "false");
  if (no_relation) set("ablation.relation", "false");
  if (no_refine) set("ablation.refine", "false");

  if (show->parsed()) {
    size_t need = 0;
    duet_config_dump(cfg.get(), nullptr, 0, &need);
    std::string text(need, '\0');
    duet_config_dump(cfg.get(), text.data(), text.size(), &need);
    std::fputs(text.c_str(), stdout);
    return 0;
  }
  const duet_log_fn log = quiet ? nullptr : print_log;
  if (pipeline->parsed()) {
    s = duet_run_pipeline(cfg.get(), log, nullptr);
    return s == DUET_OK ? 0 : report_failure(s, "pipeline");
  }
  for (auto* sub : stage_cmds) {
    if (!sub->parsed()) continue;
    s = duet_run_command(cfg.get(), sub->get_name().c_str(), in.empty() ? nullptr : in.c_str(),
                         out.empty() ? nullptr : out.c_str(), log, nullptr);
    return s == DUET_OK ? 0 : report_failure(s, sub->get_name());
  }
  return 0;
}
