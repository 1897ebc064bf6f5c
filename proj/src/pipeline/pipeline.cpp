#include "pipeline/pipeline.hpp"

#include "audio/beats.hpp"
#include "common/container.hpp"
#include "common/error.hpp"
#include "describe/describer.hpp"
#include "diffusion/refine.hpp"
#include "lm/model.hpp"
#include "pipeline/placement.hpp"
#include "pipeline/synth.hpp"
#include "vq/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace duet::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::kIo, "cannot write " + p.string());
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "bad json in " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

void require(const fs::path& p, const std::string& stage, const std::string& producer) {
  if (!fs::exists(p)) {
    fail(ErrorCode::kMissingInput, stage + ": missing input " + p.string() + " (run " + producer + " first)");
  }
}

std::string file_hash(const fs::path& p) { return fnv1a_hex(read_file(p)); }

std::mt19937_64 command_rng(unsigned seed, const std::string& command) {
  const std::string h = fnv1a_hex(command);
  std::seed_seq ss{seed, static_cast<unsigned>(std::stoull(h.substr(0, 8), nullptr, 16))};
  return std::mt19937_64(ss);
}

std::string seq_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "seq%03d", i);
  return buf;
}

// --- manifest ---------------------------------------------------------------

fs::path manifest_path(const PipelineConfig& cfg) { return cfg.run_dir() / "manifest.json"; }

void record_stage(const PipelineConfig& cfg, const std::string& key, const std::string& stamp,
                  const std::vector<fs::path>& outputs) {
  const fs::path mp = manifest_path(cfg);
  json m = fs::exists(mp) ? read_json(mp) : json{{"format", "duet-run"}, {"version", 1}, {"stages", json::object()}};
  json outs = json::object();
  for (const fs::path& o : outputs) {
    if (fs::is_regular_file(o)) outs[fs::relative(o, cfg.run_dir()).generic_string()] = file_hash(o);
  }
  m["stages"][key] = {{"stamp", stamp}, {"config_hash", cfg.section_hash("")}, {"outputs", outs}};
  write_json(mp, m);
}

bool stage_current(const PipelineConfig& cfg, const std::string& key, const std::string& stamp) {
  const fs::path mp = manifest_path(cfg);
  if (!fs::exists(mp)) return false;
  const json m = read_json(mp);
  if (!m.contains("stages") || !m["stages"].contains(key)) return false;
  const json& e = m["stages"][key];
  if (e.value("stamp", "") != stamp) return false;
  for (const auto& [rel, h] : e["outputs"].items()) {
    const fs::path p = cfg.run_dir() / rel;
    if (!fs::exists(p) || file_hash(p) != h.get<std::string>()) return false;
  }
  return !e["outputs"].empty();
}

std::string stage_stamp(const PipelineConfig& cfg, const std::string& stage) {
  const json& t = cfg.tree();
  const std::string data = fnv1a_hex(t["corpus"].dump() + "|" + std::to_string(cfg.shared_seed()));
  if (stage == "gen-data") return data;
  const std::string vq = fnv1a_hex(data + t["vq_motion"].dump() + t["vq_relation"].dump());
  if (stage == "train-vq") return vq;
  const std::string tok = fnv1a_hex(vq + t["audio"].dump());
  if (stage == "tokenize") return tok;
  if (stage == "describe") return fnv1a_hex(tok + "describe");
  if (stage == "train-diffusion") return fnv1a_hex(data + t["diffusion"].dump());
  fail(ErrorCode::kInternal, "no stamp for stage " + stage);
}

// --- data -------------------------------------------------------------------

struct Split {
  std::vector<std::string> train, eval;
};

Split load_split(const fs::path& data_dir, const std::string& stage) {
  const fs::path p = data_dir / "split.json";
  require(p, stage, "gen-data");
  const json j = read_json(p);
  return {j.at("train").get<std::vector<std::string>>(), j.at("eval").get<std::vector<std::string>>()};
}

motion::DuetSequence load_seq(const fs::path& dir, const std::string& name, const std::string& stage,
                              const std::string& producer) {
  const fs::path p = dir / (name + ".duet");
  require(p, stage, producer);
  return motion::read_duet(p);
}

std::vector<motion::DuetSequence> load_seqs(const fs::path& dir, const std::vector<std::string>& names,
                                            const std::string& stage, const std::string& producer) {
  std::vector<motion::DuetSequence> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(load_seq(dir, n, stage, producer));
  return out;
}

std::vector<std::string> style_names(const PipelineConfig& cfg) {
  std::vector<std::string> s;
  for (const StyleSpec& st : cfg.corpus_spec().styles) s.push_back(st.name);
  return s;
}

// --- tokens -----------------------------------------------------------------

struct SeqTokens {
  std::vector<int> leader, follower, relation, audio;
  std::vector<std::string> leader_captions, follower_captions;
  std::string style;
};

std::string checkpoint_stamp(const fs::path& p, const std::string& stage, const std::string& producer) {
  require(p, stage, producer);
  Container c = read_container(p.string(), "DCKP");
  return c.header.value("metadata", json::object()).value("stamp", "");
}

void check_tokens_current(const PipelineConfig& cfg, const json& meta, const std::string& stage) {
  const fs::path vq = cfg.run_dir() / "vq";
  const std::string m = checkpoint_stamp(vq / "motion.ckpt", stage, "train-vq");
  const std::string r = checkpoint_stamp(vq / "relation.ckpt", stage, "train-vq");
  if (meta.value("vq_motion", "") != m || meta.value("vq_relation", "") != r) {
    fail(ErrorCode::kIncompatible, stage + ": token corpus was produced by a different VQ checkpoint (re-run tokenize)");
  }
}

std::map<std::string, SeqTokens> load_tokens(const PipelineConfig& cfg, const std::string& stage, json* meta_out) {
  const fs::path tok = cfg.run_dir() / "tokens";
  const fs::path cap = cfg.run_dir() / "captions";
  for (const char* f : {"motion.tsv", "relation.tsv", "audio.tsv", "meta.json"}) require(tok / f, stage, "tokenize");
  for (const char* f : {"leader.tsv", "follower.tsv", "vocab.json", "meta.json"}) require(cap / f, stage, "describe");
  const json meta = read_json(tok / "meta.json");
  check_tokens_current(cfg, meta, stage);
  if (read_json(cap / "meta.json").value("tokens_stamp", "") != meta.value("stamp", "")) {
    fail(ErrorCode::kIncompatible, stage + ": captions and vocabulary are older than the token corpus (re-run describe)");
  }
  std::map<std::string, SeqTokens> out;
  for (const auto& r : vq::read_token_corpus(tok / "motion.tsv")) {
    (r.role == "leader" ? out[r.sequence].leader : out[r.sequence].follower) = r.tokens;
  }
  for (const auto& r : vq::read_token_corpus(tok / "relation.tsv")) out[r.sequence].relation = r.tokens;
  for (const auto& r : vq::read_token_corpus(tok / "audio.tsv")) out[r.sequence].audio = r.tokens;
  for (const auto& [role, file] : {std::pair{"leader", "leader.tsv"}, std::pair{"follower", "follower.tsv"}}) {
    for (const auto& c : describe::read_caption_corpus(cap / file)) {
      auto& v = std::string(role) == "leader" ? out[c.sequence].leader_captions : out[c.sequence].follower_captions;
      if (static_cast<int>(v.size()) <= c.window) v.resize(static_cast<std::size_t>(c.window) + 1);
      v[static_cast<std::size_t>(c.window)] = c.text;
    }
  }
  for (const auto& [name, style] : meta.at("styles").items()) out[name].style = style.get<std::string>();
  if (meta_out != nullptr) *meta_out = meta;
  return out;
}

const SeqTokens& tokens_of(const std::map<std::string, SeqTokens>& all, const std::string& name, const std::string& stage) {
  const auto it = all.find(name);
  if (it == all.end() || it->second.leader.empty()) fail(ErrorCode::kMissingInput, stage + ": no tokens for " + name);
  return it->second;
}

template <class T>
std::vector<T> slice(const std::vector<T>& v, int begin, int count) {
  const int b = std::min(begin, static_cast<int>(v.size()));
  const int e = std::min(begin + count, static_cast<int>(v.size()));
  return std::vector<T>(v.begin() + b, v.begin() + e);
}

vocab::TokenChunk make_chunk(const std::string& name, const SeqTokens& t, int first, int count, int tau) {
  vocab::TokenChunk c;
  c.sequence = name;
  c.first_window = first;
  c.audio = slice(t.audio, first * tau, count * tau);
  c.leader = slice(t.leader, first, count);
  c.follower = slice(t.follower, first, count);
  c.relation = slice(t.relation, first, count);
  c.leader_captions = slice(t.leader_captions, first, count);
  c.follower_captions = slice(t.follower_captions, first, count);
  c.style = t.style;
  return c;
}

std::vector<vocab::TokenChunk> training_chunks(const PipelineConfig& cfg, const std::map<std::string, SeqTokens>& all,
                                               const std::vector<std::string>& names, int tau) {
  const int cw = cfg.integer("lm.chunk_windows"), cs = cfg.integer("lm.chunk_stride");
  if (cw < 1 || cs < 1) fail(ErrorCode::kInvalidArgument, "lm.chunk_windows and lm.chunk_stride must be positive");
  std::vector<vocab::TokenChunk> out;
  for (const auto& n : names) {
    const SeqTokens& t = tokens_of(all, n, "train-lm");
    const int w = static_cast<int>(t.leader.size());
    for (int s = 0; s + cw <= w; s += cs) out.push_back(make_chunk(n, t, s, cw, tau));
  }
  return out;
}

/// Non-overlapping generation chunks; the last one may be shorter. Every
/// chunk carries the sequence's initial relation token only.
std::vector<vocab::TokenChunk> inference_chunks(const PipelineConfig& cfg, const std::string& name, const SeqTokens& t,
                                                int tau) {
  const int cw = cfg.integer("lm.chunk_windows");
  std::vector<vocab::TokenChunk> out;
  const int w = static_cast<int>(t.leader.size());
  for (int s = 0; s < w; s += cw) {
    vocab::TokenChunk c = make_chunk(name, t, s, std::min(cw, w - s), tau);
    c.relation = {t.relation.front()};
    out.push_back(std::move(c));
  }
  return out;
}

vocab::PromptOptions prompt_options(const Ablation& a) { return {a.audio, a.relation, a.captions}; }

vocab::PromptSequence inference_prompt(const vocab::Vocabulary& v, const vocab::TokenChunk& c, const Ablation& a) {
  return vocab::leader_to_follower(v, c.audio, c.leader, c.relation, {}, c.style, true, prompt_options(a));
}

int window_length(const PipelineConfig& cfg) { return cfg.integer("vq_motion.window"); }

std::vector<int> base_ids_for(const vocab::Vocabulary& v) { return lm::base_token_ids(v); }

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> n = {"gen-data", "train-vq",  "tokenize", "describe", "train-diffusion",
                                             "train-lm", "generate", "refine",   "evaluate", "report"};
  return n;
}

fs::path variant_dir(const PipelineConfig& cfg) {
  return cfg.run_dir() / "variants" / (cfg.ablation().label() + "-s" + std::to_string(cfg.seed()));
}

// --- gen-data ---------------------------------------------------------------

void gen_data(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const SyntheticDuetSpec spec = cfg.corpus_spec();
  const int count = cfg.corpus_count(), n_eval = cfg.eval_count();
  const fs::path out = io.out.empty() ? cfg.run_dir() / "data" : io.out;
  fs::create_directories(out);
  say(log, "gen-data: " + std::to_string(count) + " sequences of " + std::to_string(spec.duration) + " s");
  const auto corpus = generate_synthetic_corpus(spec, count);
  Split split;
  std::vector<fs::path> outputs;
  for (int i = 0; i < count; ++i) {
    const std::string name = seq_name(i);
    motion::write_duet(out / (name + ".duet"), corpus[static_cast<std::size_t>(i)].duet);
    audio::write_beat_track(out / (name + ".beats.json"), corpus[static_cast<std::size_t>(i)].beats);
    outputs.push_back(out / (name + ".duet"));
    outputs.push_back(out / (name + ".beats.json"));
    (i < count - n_eval ? split.train : split.eval).push_back(name);
  }
  write_json(out / "split.json", {{"train", split.train}, {"eval", split.eval}});
  outputs.push_back(out / "split.json");
  record_stage(cfg, "gen-data", stage_stamp(cfg, "gen-data"), outputs);
}

// --- train-vq ---------------------------------------------------------------

void train_vq(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path data = io.in.empty() ? cfg.run_dir() / "data" : io.in;
  const fs::path out = io.out.empty() ? cfg.run_dir() / "vq" : io.out;
  const Split split = load_split(data, "train-vq");
  const auto train = load_seqs(data, split.train, "train-vq", "gen-data");
  const int nj = train.front().skeleton.joint_count();
  const int tau = window_length(cfg);
  const std::string stamp = stage_stamp(cfg, "train-vq");
  std::mt19937_64 rng = command_rng(cfg.shared_seed(), "train-vq");
  fs::create_directories(out);

  const auto run = [&](const std::string& role, vq::VqVaeConfig vc, const std::vector<nn::Mat>& windows) {
    say(log, "train-vq: " + role + " codebook " + std::to_string(vc.codebook_size) + " on " +
                 std::to_string(windows.size()) + " windows");
    vq::VqVae model(vc, rng);
    vq::VqTrainer trainer(model);
    const int every = std::max(1, vc.epochs / 10);
    const auto losses = trainer.fit(windows, rng, [&](int epoch, const vq::VqLosses& l, int resets) {
      if ((epoch + 1) % every == 0 || epoch == 0) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "train-vq: %s epoch %d recon %.5f vel %.5f commit %.5f resets %d", role.c_str(),
                      epoch + 1, l.reconstruction, l.velocity, l.commitment, resets);
        say(log, buf);
      }
    });
    json meta = {{"stamp", stamp}, {"role", role}, {"final_reconstruction", losses.back().reconstruction}};
    vq::save_vqvae(model, (out / (role + ".ckpt")).string(), meta);
  };
  run("motion", cfg.motion_vq(nj), vq::motion_training_windows(train, tau));
  run("relation", cfg.relation_vq(), vq::relation_training_windows(train, tau));
  record_stage(cfg, "train-vq", stamp, {out / "motion.ckpt", out / "relation.ckpt"});
}

// --- tokenize ---------------------------------------------------------------

void tokenize(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path data = io.in.empty() ? cfg.run_dir() / "data" : io.in;
  const fs::path out = io.out.empty() ? cfg.run_dir() / "tokens" : io.out;
  const fs::path vqdir = cfg.run_dir() / "vq";
  require(vqdir / "motion.ckpt", "tokenize", "train-vq");
  require(vqdir / "relation.ckpt", "tokenize", "train-vq");
  json mmeta, rmeta;
  const vq::VqVae mvq = vq::load_vqvae((vqdir / "motion.ckpt").string(), &mmeta);
  const vq::VqVae rvq = vq::load_vqvae((vqdir / "relation.ckpt").string(), &rmeta);
  if (mvq.config().window != rvq.config().window) fail(ErrorCode::kIncompatible, "tokenize: VQ window lengths differ");
  const Split split = load_split(data, "tokenize");
  std::vector<std::string> all = split.train;
  all.insert(all.end(), split.eval.begin(), split.eval.end());
  const int k_audio = cfg.audio_codebook();

  std::vector<vq::TokenRecord> motion_recs, relation_recs, audio_recs;
  std::vector<motion::RelationFrame> train_relations;
  json styles = json::object();
  for (const auto& name : all) {
    const motion::DuetSequence s = load_seq(data, name, "tokenize", "gen-data");
    require(data / (name + ".beats.json"), "tokenize", "gen-data");
    const audio::BeatTrack beats = audio::read_beat_track(data / (name + ".beats.json"));
    motion_recs.push_back({name, "leader", vq::tokenize_motion(mvq, s.leader, s.skeleton).indices});
    motion_recs.push_back({name, "follower", vq::tokenize_motion(mvq, s.follower, s.skeleton).indices});
    relation_recs.push_back({name, "relation", vq::tokenize_relation(rvq, s.relation).indices});
    auto stream = audio::tokenize_audio(beats, 1.0 / s.fps, k_audio).tokens;
    if (static_cast<int>(stream.size()) < s.length()) {
      fail(ErrorCode::kIncompatible, "tokenize: beat track of " + name + " is shorter than its motion");
    }
    stream.resize(static_cast<std::size_t>(s.length()));
    audio_recs.push_back({name, "audio", stream});
    styles[name] = s.style.value_or("");
    if (std::find(split.train.begin(), split.train.end(), name) != split.train.end()) {
      train_relations.insert(train_relations.end(), s.relation.begin(), s.relation.end());
    }
  }
  say(log, "tokenize: " + std::to_string(all.size()) + " sequences");
  fs::create_directories(out);
  vq::write_token_corpus(out / "motion.tsv", motion_recs);
  vq::write_token_corpus(out / "relation.tsv", relation_recs);
  vq::write_token_corpus(out / "audio.tsv", audio_recs);
  const std::string stamp = stage_stamp(cfg, "tokenize");
  write_json(out / "meta.json", {{"stamp", stamp},
                                 {"vq_motion", mmeta.value("stamp", "")},
                                 {"vq_relation", rmeta.value("stamp", "")},
                                 {"k_motion", mvq.config().codebook_size},
                                 {"k_relation", rvq.config().codebook_size},
                                 {"k_audio", k_audio},
                                 {"window", mvq.config().window},
                                 {"styles", styles}});
  const motion::RelationFrame mean = mean_relation(train_relations);
  write_json(out / "relation_stats.json", {{"x", mean.x}, {"z", mean.z}, {"theta", mean.theta}});
  record_stage(cfg, "tokenize", stamp,
               {out / "motion.tsv", out / "relation.tsv", out / "audio.tsv", out / "meta.json", out / "relation_stats.json"});
}

// --- describe ---------------------------------------------------------------

void describe(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path data = io.in.empty() ? cfg.run_dir() / "data" : io.in;
  const fs::path out = io.out.empty() ? cfg.run_dir() / "captions" : io.out;
  const fs::path meta_path = cfg.run_dir() / "tokens" / "meta.json";
  require(meta_path, "describe", "tokenize");
  const json meta = read_json(meta_path);
  const int tau = meta.at("window");
  const Split split = load_split(data, "describe");
  std::vector<std::string> all = split.train;
  all.insert(all.end(), split.eval.begin(), split.eval.end());

  std::vector<describe::CaptionRecord> leader, follower;
  std::vector<describe::CaptionRule> rules;
  for (const auto& name : all) {
    const motion::DuetSequence s = load_seq(data, name, "describe", "gen-data");
    if (rules.empty()) rules = describe::default_rules(s.skeleton);
    const auto lw = vq::motion_windows(s.leader, s.skeleton, tau);
    const auto fw = vq::motion_windows(s.follower, s.skeleton, tau);
    for (std::size_t k = 0; k < lw.size(); ++k) {
      leader.push_back({name, static_cast<int>(k), describe::describe_window(lw[k], s.skeleton, rules, static_cast<int>(k)).text()});
      follower.push_back({name, static_cast<int>(k), describe::describe_window(fw[k], s.skeleton, rules, static_cast<int>(k)).text()});
    }
  }
  say(log, "describe: " + std::to_string(leader.size() + follower.size()) + " window captions");
  fs::create_directories(out);
  describe::write_caption_corpus(out / "leader.tsv", leader);
  describe::write_caption_corpus(out / "follower.tsv", follower);
  const vocab::Vocabulary v =
      vocab::default_vocabulary(meta.at("k_motion"), meta.at("k_relation"), meta.at("k_audio"), style_names(cfg));
  write_json(out / "vocab.json", v.manifest());
  write_json(out / "meta.json", {{"tokens_stamp", meta.at("stamp")}, {"caption_rules", rules.size()}});
  record_stage(cfg, "describe", stage_stamp(cfg, "describe"),
               {out / "leader.tsv", out / "follower.tsv", out / "vocab.json", out / "meta.json"});
}

// --- train-diffusion --------------------------------------------------------

void train_diffusion(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path data = io.in.empty() ? cfg.run_dir() / "data" : io.in;
  const fs::path out = io.out.empty() ? cfg.run_dir() / "diffusion" / "denoiser.ckpt" : io.out;
  const Split split = load_split(data, "train-diffusion");
  const auto train = load_seqs(data, split.train, "train-diffusion", "gen-data");
  const int nj = train.front().skeleton.joint_count();
  const diffusion::DenoiserConfig dc = cfg.denoiser_config(3 * nj, style_names(cfg));
  std::mt19937_64 rng = command_rng(cfg.shared_seed(), "train-diffusion");
  diffusion::Denoiser d(dc, rng);
  diffusion::CropSet set = diffusion::training_crops(train, dc, cfg.integer("diffusion.crop_stride"));
  d.fit_normalization(set.crops);
  for (auto& c : set.crops) c = d.normalize(c);
  say(log, "train-diffusion: " + std::to_string(set.crops.size()) + " crops, " + std::to_string(dc.iterations) + " steps");
  double window = 0.0;
  const int every = std::max(1, dc.iterations / 10);
  const auto losses = diffusion::train_denoiser(d, set.crops, set.styles, dc.iterations, rng, [&](int it, double loss) {
    window += loss;
    if ((it + 1) % every == 0) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "train-diffusion: step %d mean loss %.5f", it + 1, window / every);
      say(log, buf);
      window = 0.0;
    }
  });
  const std::string stamp = stage_stamp(cfg, "train-diffusion");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  diffusion::save_denoiser(d, out.string(), {{"stamp", stamp}, {"final_loss", losses.empty() ? 0.0 : losses.back()}});
  record_stage(cfg, "train-diffusion", stamp, {out});
}

// --- prompts and train-lm ---------------------------------------------------

PromptSets build_prompt_sets(const PipelineConfig& cfg) {
  const fs::path data = cfg.run_dir() / "data";
  const Split split = load_split(data, "train-lm");
  const auto tokens = load_tokens(cfg, "train-lm", nullptr);
  const vocab::Vocabulary v = vocab::Vocabulary::from_manifest(read_json(cfg.run_dir() / "captions" / "vocab.json"));
  const int tau = window_length(cfg);
  const Ablation a = cfg.ablation();
  std::mt19937_64 rng = command_rng(cfg.seed(), "train-lm");

  PromptSets sets;
  const auto chunks = training_chunks(cfg, tokens, split.train, tau);
  sets.text = vocab::build_text_tasks(v, a.captions ? std::span<const vocab::TokenChunk>(chunks) : std::span<const vocab::TokenChunk>());
  sets.stage1 = vocab::build_stage1_tasks(v, chunks, rng, prompt_options(a));
  sets.stage2 = vocab::build_stage2_tasks(v, chunks, prompt_options(a));
  for (const auto& n : split.eval) {
    for (const auto& c : inference_chunks(cfg, n, tokens_of(tokens, n, "generate"), tau)) {
      sets.inference.push_back(inference_prompt(v, c, a));
    }
  }
  return sets;
}

void train_lm(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path out = io.out.empty() ? variant_dir(cfg) / "lm.ckpt" : io.out;
  const PromptSets sets = build_prompt_sets(cfg);
  json meta;
  load_tokens(cfg, "train-lm", &meta);
  const vocab::Vocabulary v = vocab::Vocabulary::from_manifest(read_json(cfg.run_dir() / "captions" / "vocab.json"));
  const lm::LmConfig lc = cfg.lm_config(v.size(), base_ids_for(v));
  std::size_t longest = 0;
  for (const auto* set : {&sets.text, &sets.stage1, &sets.stage2, &sets.inference}) {
    for (const auto& s : *set) longest = std::max(longest, s.ids.size() + static_cast<std::size_t>(cfg.integer("lm.chunk_windows")) + 1);
  }
  if (static_cast<int>(longest) > lc.context) {
    fail(ErrorCode::kInvalidArgument, "train-lm: prompts need " + std::to_string(longest) + " positions but lm.context is " +
                                          std::to_string(lc.context));
  }
  // Separate generator from the one that drew the stage-1 sub-choices.
  std::mt19937_64 rng = command_rng(cfg.seed(), "train-lm/model");
  lm::TokenLm model(lc, rng);
  json losses = json::object();
  const auto run = [&](lm::Stage st, const char* name, const std::vector<vocab::PromptSequence>& data, int epochs, double lr) {
    model.set_stage(st);
    say(log, std::string("train-lm: ") + name + " on " + std::to_string(data.size()) + " examples");
    const auto rep = lm::train_lm(model, data, epochs, lc.batch_size, lr, rng, [&](int epoch, double loss) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "train-lm: %s epoch %d nll %.4f", name, epoch + 1, loss);
      say(log, buf);
    });
    losses[name] = rep.epoch_loss;
  };
  run(lm::Stage::kBase, "stage0", sets.text, lc.epochs_stage0, lc.lr_stage0);
  run(lm::Stage::kAlign, "stage1", sets.stage1, lc.epochs_stage1, lc.lr_stage1);
  run(lm::Stage::kFinetune, "stage2", sets.stage2, lc.epochs_stage2, lc.lr_stage2);
  fs::create_directories(out.parent_path());
  const json metadata = {{"vq_motion", meta.at("vq_motion")},
                         {"vq_relation", meta.at("vq_relation")},
                         {"tokens", meta.at("stamp")},
                         {"ablation", cfg.ablation().label()},
                         {"seed", cfg.seed()},
                         {"chunk_windows", cfg.integer("lm.chunk_windows")},
                         {"losses", losses}};
  lm::save_lm(model, out.string(), v.hash(), metadata);
  write_file(variant_dir(cfg) / "config.txt", cfg.to_text());
  record_stage(cfg, "train-lm:" + variant_dir(cfg).filename().string(), cfg.section_hash("lm"), {out});
}

// --- generate ---------------------------------------------------------------

void generate(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path data = cfg.run_dir() / "data";
  const fs::path lm_path = io.in.empty() ? variant_dir(cfg) / "lm.ckpt" : io.in;
  const fs::path out = io.out.empty() ? variant_dir(cfg) / "gen" : io.out;
  require(lm_path, "generate", "train-lm");
  json header;
  const lm::TokenLm model = lm::load_lm(lm_path.string(), &header);
  json meta;
  const auto tokens = load_tokens(cfg, "generate", &meta);
  const json& lm_meta = header.at("metadata");
  if (lm_meta.value("vq_motion", "") != meta.at("vq_motion") || lm_meta.value("vq_relation", "") != meta.at("vq_relation")) {
    fail(ErrorCode::kIncompatible, "generate: " + lm_path.string() + " was trained against different VQ checkpoints");
  }
  const vocab::Vocabulary v = vocab::Vocabulary::from_manifest(read_json(cfg.run_dir() / "captions" / "vocab.json"));
  if (header.value("vocab_hash", "") != v.hash()) {
    fail(ErrorCode::kIncompatible, "generate: vocabulary hash differs from the one the LM was trained with");
  }
  const Ablation a = cfg.ablation();
  if (lm_meta.value("ablation", "") != a.label()) {
    fail(ErrorCode::kIncompatible, "generate: LM was trained for prompt layout '" + lm_meta.value("ablation", "") +
                                       "' but the config asks for '" + a.label() + "'");
  }
  const vq::VqVae mvq = vq::load_vqvae((cfg.run_dir() / "vq" / "motion.ckpt").string());
  const vq::VqVae rvq = vq::load_vqvae((cfg.run_dir() / "vq" / "relation.ckpt").string());
  const json stats = read_json(cfg.run_dir() / "tokens" / "relation_stats.json");
  const motion::RelationFrame mean_rel{stats.at("x"), stats.at("z"), stats.at("theta")};
  const int tau = mvq.config().window;
  const lm::SamplingConfig sampling{cfg.number("lm.temperature"), cfg.integer("lm.top_k")};
  std::mt19937_64 rng = command_rng(cfg.seed(), "generate");
  const Split split = load_split(data, "generate");
  fs::create_directories(out);
  std::map<int, std::vector<motion::MotionFrame>> decoded;
  std::vector<vq::TokenRecord> records;
  int closed = 0, chunks_total = 0;
  for (const auto& name : split.eval) {
    const motion::DuetSequence gt = load_seq(data, name, "generate", "gen-data");
    const SeqTokens& t = tokens_of(tokens, name, "generate");
    const int nj = gt.skeleton.joint_count();
    std::vector<int> follower;
    for (const auto& c : inference_chunks(cfg, name, t, tau)) {
      const auto prompt = inference_prompt(v, c, a);
      const int want = static_cast<int>(c.leader.size());
      lm::Generation g = lm::generate(model, v, prompt.ids, sampling, want, rng);
      closed += g.closed ? 1 : 0;
      ++chunks_total;
      // Short answers hold the last token; an empty one falls back to the leader's token.
      if (g.follower.empty()) g.follower.push_back(follower.empty() ? c.leader.front() : follower.back());
      while (static_cast<int>(g.follower.size()) < want) g.follower.push_back(g.follower.back());
      follower.insert(follower.end(), g.follower.begin(), g.follower.end());
    }
    std::vector<std::vector<motion::MotionFrame>> windows;
    for (int k : follower) {
      auto it = decoded.find(k);
      if (it == decoded.end()) it = decoded.emplace(k, vq::decode_motion_token(mvq, k, nj)).first;
      windows.push_back(it->second);
    }
    const motion::RelationFrame rel = a.relation ? vq::detokenize_relation(rvq, std::vector<int>{t.relation.front()}).front() : mean_rel;
    const auto placed = place_follower(windows, gt.leader, gt.skeleton, rel, cfg.number("eval.blend"));
    motion::DuetSequence seq = motion::make_duet(motion::positions_of(gt.leader), placed, gt.skeleton, gt.fps);
    seq.style = gt.style;
    seq.beat_times = gt.beat_times;
    seq.beat_accents = gt.beat_accents;
    seq.bpm = gt.bpm;
    motion::write_duet(out / (name + ".duet"), seq);
    records.push_back({name, "follower", follower});
  }
  vq::write_token_corpus(out / "tokens.tsv", records);
  say(log, "generate: " + std::to_string(split.eval.size()) + " sequences, " + std::to_string(closed) + "/" +
               std::to_string(chunks_total) + " chunks closed by the model");
  std::vector<fs::path> outs{out / "tokens.tsv"};
  for (const auto& n : split.eval) outs.push_back(out / (n + ".duet"));
  record_stage(cfg, "generate:" + variant_dir(cfg).filename().string(), cfg.section_hash(""), outs);
}

// --- refine -----------------------------------------------------------------

void refine(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path in = io.in.empty() ? variant_dir(cfg) / "gen" : io.in;
  const fs::path out = io.out.empty() ? variant_dir(cfg) / "refined" : io.out;
  const fs::path ckpt = cfg.run_dir() / "diffusion" / "denoiser.ckpt";
  require(ckpt, "refine", "train-diffusion");
  json header;
  const diffusion::Denoiser d = diffusion::load_denoiser(ckpt.string(), &header);
  if (header.value("metadata", json::object()).value("stamp", "") != stage_stamp(cfg, "train-diffusion")) {
    fail(ErrorCode::kIncompatible, "refine: denoiser checkpoint does not match the corpus and diffusion config");
  }
  const Split split = load_split(cfg.run_dir() / "data", "refine");
  std::mt19937_64 rng = command_rng(cfg.seed(), "refine");
  fs::create_directories(out);
  std::vector<fs::path> outs;
  for (const auto& name : split.eval) {
    const motion::DuetSequence g = load_seq(in, name, "refine", "generate");
    motion::write_duet(out / (name + ".duet"), diffusion::refine_duet(d, g, rng));
    outs.push_back(out / (name + ".duet"));
  }
  say(log, "refine: " + std::to_string(split.eval.size()) + " sequences at t_r = " + std::to_string(d.config().refine_steps));
  record_stage(cfg, "refine:" + variant_dir(cfg).filename().string(), cfg.section_hash(""), outs);
}

// --- evaluate / report ------------------------------------------------------

std::vector<motion::DuetSequence> clip_duet(const motion::DuetSequence& seq, int len) {
  if (len < 2) fail(ErrorCode::kInvalidArgument, "clip length must be at least 2 frames");
  std::vector<motion::DuetSequence> out;
  for (int s = 0; s + len <= seq.length(); s += len) {
    motion::DuetSequence c;
    c.fps = seq.fps;
    c.skeleton = seq.skeleton;
    c.leader.assign(seq.leader.begin() + s, seq.leader.begin() + s + len);
    c.follower.assign(seq.follower.begin() + s, seq.follower.begin() + s + len);
    c.relation.assign(seq.relation.begin() + s, seq.relation.begin() + s + len);
    c.style = seq.style;
    c.bpm = seq.bpm;
    if (seq.beat_times) {
      const double t0 = s / seq.fps, t1 = (s + len) / seq.fps;
      std::vector<double> times;
      std::vector<int> acc;
      for (std::size_t i = 0; i < seq.beat_times->size(); ++i) {
        const double b = (*seq.beat_times)[i];
        if (b >= t0 && b < t1) {
          times.push_back(b - t0);
          if (seq.beat_accents) acc.push_back((*seq.beat_accents)[i]);
        }
      }
      c.beat_times = times;
      if (seq.beat_accents) c.beat_accents = acc;
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<metrics::MetricReport> evaluate(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path vdir = io.in.empty() ? variant_dir(cfg) : io.in;
  const fs::path out = io.out.empty() ? vdir / "metrics.json" : io.out;
  const Split split = load_split(cfg.run_dir() / "data", "evaluate");
  const int clip = cfg.integer("eval.clip");
  const Ablation a = cfg.ablation();
  const auto clips_of = [&](const fs::path& dir, const std::string& producer) {
    std::vector<motion::DuetSequence> all;
    for (const auto& name : split.eval) {
      for (auto& c : clip_duet(load_seq(dir, name, "evaluate", producer), clip)) all.push_back(std::move(c));
    }
    return all;
  };
  const auto gt = clips_of(cfg.run_dir() / "data", "gen-data");
  const std::string variant = vdir.filename().string();
  std::vector<metrics::MetricReport> reports;
  const auto add = [&](const std::vector<motion::DuetSequence>& gen, const std::string& row) {
    metrics::MetricReport r = metrics::evaluate(gen, gt, cfg.seed());
    r.label = variant + "/" + row;
    r.config_hash = cfg.section_hash("");
    reports.push_back(r);
    char buf[200];
    std::snprintf(buf, sizeof buf, "evaluate: %-28s FID_k %.3f FID_g %.3f FID_cd %.3f BED %.4f BAS %.4f", r.label.c_str(),
                  r.fid_k, r.fid_g, r.fid_cd, r.bed, r.bas);
    say(log, buf);
  };
  add(gt, "ground-truth");
  add(clips_of(vdir / "gen", "generate"), "raw");
  if (a.refine) add(clips_of(vdir / "refined", "refine"), "refined");
  json j = json::array();
  for (const auto& r : reports) j.push_back(r.to_json());
  write_json(out, j);
  record_stage(cfg, "evaluate:" + variant, cfg.section_hash(""), {out});
  return reports;
}

std::string report(const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  const fs::path vroot = io.in.empty() ? cfg.run_dir() / "variants" : io.in;
  const fs::path out = io.out.empty() ? cfg.run_dir() / "report" : io.out;
  if (!fs::is_directory(vroot)) fail(ErrorCode::kMissingInput, "report: missing input " + vroot.string() + " (run evaluate first)");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(vroot)) {
    if (fs::exists(e.path() / "metrics.json")) files.push_back(e.path() / "metrics.json");
  }
  if (files.empty()) fail(ErrorCode::kMissingInput, "report: no metrics.json under " + vroot.string() + " (run evaluate first)");
  std::sort(files.begin(), files.end());
  std::vector<metrics::MetricReport> rows;
  for (const auto& f : files) {
    for (const auto& r : read_json(f)) rows.push_back(metrics::MetricReport::from_json(r));
  }
  const std::string table = metrics::format_table(rows);
  write_file(out / "table.txt", table);
  write_file(out / "metrics.csv", metrics::format_csv(rows));
  say(log, "report: " + std::to_string(rows.size()) + " rows -> " + (out / "table.txt").string());
  return table;
}

void run_command(const std::string& name, const PipelineConfig& cfg, const StageIo& io, const Logger& log) {
  if (name == "gen-data") return gen_data(cfg, io, log);
  if (name == "train-vq") return train_vq(cfg, io, log);
  if (name == "tokenize") return tokenize(cfg, io, log);
  if (name == "describe") return describe(cfg, io, log);
  if (name == "train-diffusion") return train_diffusion(cfg, io, log);
  if (name == "train-lm") return train_lm(cfg, io, log);
  if (name == "generate") return generate(cfg, io, log);
  if (name == "refine") return refine(cfg, io, log);
  if (name == "evaluate") {
    evaluate(cfg, io, log);
    return;
  }
  if (name == "report") {
    report(cfg, io, log);
    return;
  }
  fail(ErrorCode::kInvalidArgument, "unknown command '" + name + "'");
}

std::vector<metrics::MetricReport> run_pipeline(const PipelineConfig& cfg, const Logger& log) {
  fs::create_directories(cfg.run_dir());
  for (const char* stage : {"gen-data", "train-vq", "tokenize", "describe", "train-diffusion"}) {
    if (std::string(stage) == "train-diffusion" && !cfg.ablation().refine) continue;
    if (stage_current(cfg, stage, stage_stamp(cfg, stage))) {
      say(log, std::string(stage) + ": up to date");
      continue;
    }
    run_command(stage, cfg, {}, log);
  }
  train_lm(cfg, {}, log);
  generate(cfg, {}, log);
  if (cfg.ablation().refine) refine(cfg, {}, log);
  auto reports = evaluate(cfg, {}, log);
  report(cfg, {}, log);
  return reports;
}

// --- stick figures ----------------------------------------------------------

void write_stick_figure_svg(const motion::DuetSequence& seq, int frame, const fs::path& path) {
  if (frame < 0 || frame >= seq.length()) fail(ErrorCode::kOutOfRange, "stick figure: frame out of range");
  const motion::Skeleton& sk = seq.skeleton;
  const auto& l = seq.leader[static_cast<std::size_t>(frame)].positions;
  const auto& f = seq.follower[static_cast<std::size_t>(frame)].positions;
  const double cx = 0.5 * (l(sk.root, 0) + f(sk.root, 0));
  const double scale = 120.0;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"300\" viewBox=\"0 0 480 300\">\n"
    << "<rect width=\"480\" height=\"300\" fill=\"white\"/>\n"
    << "<line x1=\"0\" y1=\"280\" x2=\"480\" y2=\"280\" stroke=\"#999\"/>\n";
  const auto draw = [&](const motion::JointMat& p, const char* color) {
    for (int j = 0; j < sk.joint_count(); ++j) {
      const int par = sk.parents[static_cast<std::size_t>(j)];
      if (par < 0) continue;
      o << "<line x1=\"" << 240 + scale * (p(par, 0) - cx) << "\" y1=\"" << 280 - scale * p(par, 1) << "\" x2=\""
        << 240 + scale * (p(j, 0) - cx) << "\" y2=\"" << 280 - scale * p(j, 1) << "\" stroke=\"" << color
        << "\" stroke-width=\"3\"/>\n";
    }
  };
  draw(l, "#1f5fbf");
  draw(f, "#c0392b");
  o << "<text x=\"8\" y=\"18\" font-family=\"monospace\" font-size=\"12\">frame " << frame << "</text>\n</svg>\n";
  write_file(path, o.str());
}

}  // namespace duet::pipeline
