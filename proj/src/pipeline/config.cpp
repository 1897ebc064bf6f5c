#include "pipeline/config.hpp"

#include "common/container.hpp"
#include "common/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace duet::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

nlohmann::json parse_like(const nlohmann::json& like, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  try {
    std::size_t used = 0;
    switch (like.type()) {
      case nlohmann::json::value_t::boolean:
        if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "off" || v == "no") return false;
        break;
      case nlohmann::json::value_t::number_integer:
      case nlohmann::json::value_t::number_unsigned: {
        const long long x = std::stoll(v, &used);
        if (used == v.size()) {
          if (like.type() == nlohmann::json::value_t::number_unsigned && x < 0) break;
          return like.type() == nlohmann::json::value_t::number_unsigned ? nlohmann::json(static_cast<unsigned long long>(x))
                                                                         : nlohmann::json(x);
        }
        break;
      }
      case nlohmann::json::value_t::number_float: {
        const double x = std::stod(v, &used);
        if (used == v.size()) return x;
        break;
      }
      case nlohmann::json::value_t::string:
        return v;
      case nlohmann::json::value_t::array: {
        nlohmann::json arr = nlohmann::json::array();
        const nlohmann::json elem = like.empty() ? nlohmann::json("") : like[0];
        std::stringstream ss(v);
        std::string part;
        while (std::getline(ss, part, ',')) {
          if (!trim(part).empty()) arr.push_back(parse_like(elem, key, part));
        }
        return arr;
      }
      default:
        break;
    }
  } catch (const std::logic_error&) {
  }
  fail(ErrorCode::kFormat, "config: cannot parse '" + v + "' for " + key);
}

std::string render(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + render(e);
    return out;
  }
  return v.dump();
}

}  // namespace

std::string Ablation::label() const {
  std::vector<std::string> off;
  if (!audio) off.push_back("no-audio");
  if (!captions) off.push_back("no-captions");
  if (!relation) off.push_back("no-relation");
  if (off.empty()) return "full";
  std::string s;
  for (const auto& o : off) s += (s.empty() ? "" : "+") + o;
  return s;
}

PipelineConfig::PipelineConfig() {
  const SyntheticDuetSpec spec = default_synthetic_spec();
  nlohmann::json corpus = spec.to_json();
  corpus.erase("styles");
  corpus.erase("seed");
  corpus["count"] = 64;
  corpus["eval_count"] = 16;

  vq::VqVaeConfig mv;
  mv.latent_dim = 64;
  mv.codebook_size = 128;
  mv.hidden = 64;
  mv.learning_rate = 1e-3;
  mv.batch_size = 64;
  mv.epochs = 30;
  mv.warmup_epochs = 2;
  // Same fraction (1/4) of the mean per-batch code mass as threshold 1 at
  // batch 2048 with 512 codes.
  mv.dead_code_threshold = 0.25 * mv.batch_size / mv.codebook_size;
  nlohmann::json vqm = mv.to_json();
  vqm.erase("input_dim");
  vqm.erase("velocity_channels");

  vq::VqVaeConfig rv = mv;
  rv.latent_dim = 16;
  rv.codebook_size = 64;
  rv.hidden = 32;
  rv.dead_code_threshold = 0.25 * rv.batch_size / rv.codebook_size;
  nlohmann::json vqr = rv.to_json();
  vqr.erase("input_dim");
  vqr.erase("velocity_channels");
  vqr.erase("window");

  lm::LmConfig lc;
  lc.d_model = 64;
  lc.layers = 2;
  lc.heads = 4;
  lc.context = 256;
  lc.lr_stage0 = 1e-3;
  lc.lr_stage1 = 1e-3;
  lc.lr_stage2 = 5e-4;
  lc.epochs_stage0 = 5;
  lc.epochs_stage1 = 2;
  lc.epochs_stage2 = 6;
  lc.batch_size = 4;
  lc.temperature = 0.0;
  lc.lora_rank = 16;
  lc.lora_alpha = 16.0;
  nlohmann::json lmj = lc.to_json();
  lmj.erase("vocab_size");
  lmj.erase("base_ids");
  lmj["chunk_windows"] = 4;
  lmj["chunk_stride"] = 2;

  diffusion::DenoiserConfig dc;
  dc.iterations = 3000;
  nlohmann::json dj = dc.to_json();
  dj.erase("feature_dim");
  dj.erase("styles");
  dj["crop_stride"] = 50;

  tree_ = {{"preset", "desk"},
           {"run_dir", "run"},
           {"seed", 1u},
           {"shared_seed", 1u},
           {"corpus", corpus},
           {"vq_motion", vqm},
           {"vq_relation", vqr},
           {"audio", {{"codebook", 33}}},
           {"lm", lmj},
           {"diffusion", dj},
           {"eval", {{"clip", 100}, {"blend", 0.5}}},
           {"ablation", {{"audio", true}, {"captions", true}, {"relation", true}, {"refine", true}}}};
}

PipelineConfig PipelineConfig::preset(const std::string& name) {
  PipelineConfig c;
  if (name == "desk") return c;
  if (name == "smoke") {
    c.tree_["preset"] = "smoke";
    c.tree_["corpus"]["count"] = 8;
    c.tree_["corpus"]["eval_count"] = 2;
    c.tree_["corpus"]["duration"] = 30.0;
    c.tree_["vq_motion"]["epochs"] = 20;
    c.tree_["vq_relation"]["epochs"] = 20;
    c.tree_["lm"]["epochs_stage0"] = 5;
    c.tree_["lm"]["epochs_stage1"] = 2;
    c.tree_["lm"]["epochs_stage2"] = 4;
    c.tree_["diffusion"]["iterations"] = 300;
    return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown config preset '" + name + "' (expected desk or smoke)");
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig c;
  c.apply_text(ss.str(), path.string());
  return c;
}

void PipelineConfig::apply_text(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  bool any = false;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kFormat, origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (any) fail(ErrorCode::kFormat, origin + ":" + std::to_string(lineno) + ": preset must be the first setting");
      const std::string keep_run = tree_["run_dir"];
      *this = preset(value);
      tree_["run_dir"] = keep_run;
    } else {
      try {
        set(key, value);
      } catch (const Error& e) {
        fail(e.code(), origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    any = true;
  }
}

const nlohmann::json& PipelineConfig::at(const std::string& key) const {
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    if (!tree_.contains(key) || tree_[key].is_object()) fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    return tree_[key];
  }
  const std::string sec = key.substr(0, dot), field = key.substr(dot + 1);
  if (!tree_.contains(sec) || !tree_[sec].is_object() || !tree_[sec].contains(field)) {
    fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
  }
  return tree_[sec][field];
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (key == "preset") fail(ErrorCode::kInvalidArgument, "preset can only be chosen at load time");
  const nlohmann::json parsed = parse_like(at(key), key, value);
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    tree_[key] = parsed;
  } else {
    tree_[key.substr(0, dot)][key.substr(dot + 1)] = parsed;
  }
}

std::string PipelineConfig::get(const std::string& key) const { return render(at(key)); }

std::string PipelineConfig::to_text() const {
  std::ostringstream o;
  o << "preset = " << render(tree_["preset"]) << "\n";
  for (const auto& [k, v] : tree_.items()) {
    if (k == "preset") continue;
    if (!v.is_object()) o << k << " = " << render(v) << "\n";
  }
  for (const auto& [k, v] : tree_.items()) {
    if (!v.is_object()) continue;
    o << "\n";
    for (const auto& [f, x] : v.items()) o << k << "." << f << " = " << render(x) << "\n";
  }
  return o.str();
}

std::filesystem::path PipelineConfig::run_dir() const { return tree_["run_dir"].get<std::string>(); }
unsigned PipelineConfig::seed() const { return tree_["seed"].get<unsigned>(); }
unsigned PipelineConfig::shared_seed() const { return tree_["shared_seed"].get<unsigned>(); }

Ablation PipelineConfig::ablation() const {
  const auto& a = tree_["ablation"];
  return {a["audio"].get<bool>(), a["captions"].get<bool>(), a["relation"].get<bool>(), a["refine"].get<bool>()};
}

int PipelineConfig::integer(const std::string& key) const { return at(key).get<int>(); }
double PipelineConfig::number(const std::string& key) const { return at(key).get<double>(); }
bool PipelineConfig::flag(const std::string& key) const { return at(key).get<bool>(); }

SyntheticDuetSpec PipelineConfig::corpus_spec() const {
  const auto& c = tree_["corpus"];
  SyntheticDuetSpec s = default_synthetic_spec();
  s.bpm = c["bpm"];
  s.duration = c["duration"];
  s.fps = c["fps"];
  s.follower_lag = c["follower_lag"];
  s.leader_drift = c["leader_drift"];
  s.noise = c["noise"];
  s.min_distance = c["min_distance"];
  s.max_distance = c["max_distance"];
  s.max_bearing = c["max_bearing"];
  s.max_facing = c["max_facing"];
  s.random_beat_offset = c["random_beat_offset"];
  s.accent_pattern = c["accent_pattern"].get<std::vector<int>>();
  s.seed = shared_seed();
  s.validate();
  return s;
}

int PipelineConfig::corpus_count() const { return tree_["corpus"]["count"]; }

int PipelineConfig::eval_count() const {
  const int n = tree_["corpus"]["eval_count"];
  if (n < 2 || n >= corpus_count()) fail(ErrorCode::kInvalidArgument, "corpus.eval_count must be in [2, corpus.count)");
  return n;
}

namespace {

vq::VqVaeConfig vq_from(nlohmann::json j, int input_dim, int window, std::vector<int> vel) {
  j["input_dim"] = input_dim;
  j["window"] = window;
  j["velocity_channels"] = vel;
  return vq::VqVaeConfig::from_json(j);
}

}  // namespace

vq::VqVaeConfig PipelineConfig::motion_vq(int joint_count) const {
  const auto& j = tree_["vq_motion"];
  return vq_from(j, motion::feature_dim(joint_count), j["window"], vq::motion_velocity_channels(joint_count));
}

vq::VqVaeConfig PipelineConfig::relation_vq() const {
  return vq_from(tree_["vq_relation"], vq::kRelationChannels, tree_["vq_motion"]["window"], vq::relation_velocity_channels());
}

int PipelineConfig::audio_codebook() const { return tree_["audio"]["codebook"]; }

lm::LmConfig PipelineConfig::lm_config(int vocab_size, std::vector<int> base_ids) const {
  nlohmann::json j = tree_["lm"];
  for (const char* k : {"chunk_windows", "chunk_stride"}) j.erase(k);
  j["vocab_size"] = vocab_size;
  j["base_ids"] = base_ids;
  return lm::LmConfig::from_json(j);
}

diffusion::DenoiserConfig PipelineConfig::denoiser_config(int feature_dim, std::vector<std::string> styles) const {
  nlohmann::json j = tree_["diffusion"];
  j.erase("crop_stride");
  j["feature_dim"] = feature_dim;
  j["styles"] = styles;
  return diffusion::DenoiserConfig::from_json(j);
}

std::string PipelineConfig::section_hash(const std::string& section) const {
  if (section.empty()) {
    nlohmann::json t = tree_;
    t.erase("run_dir");  // runs in different directories compare equal
    return fnv1a_hex(t.dump());
  }
  if (!tree_.contains(section)) fail(ErrorCode::kInvalidArgument, "unknown config section '" + section + "'");
  return fnv1a_hex(tree_[section].dump());
}

}  // namespace duet::pipeline
