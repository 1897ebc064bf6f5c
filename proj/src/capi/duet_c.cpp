#include "duet/duet.h"

#include "common/error.hpp"
#include "metrics/metrics.hpp"
#include "motion/duet.hpp"
#include "pipeline/config.hpp"
#include "pipeline/pipeline.hpp"

#include <malloc.h>

#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <new>
#include <string>
#include <vector>

struct duet_config {
  duet::pipeline::PipelineConfig cfg;
};

struct duet_sequence {
  duet::motion::DuetSequence seq;
};

struct duet_reports {
  std::vector<duet::metrics::MetricReport> rows;
};

namespace {

thread_local std::string g_error;

// Training allocates and frees many mid-sized matrices; keeping them off mmap
// and not trimming the heap avoids repeated page faults.
void tune_allocator() {
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
}

template <class F>
duet_status guard(F&& f) {
  try {
    f();
    g_error.clear();
    return DUET_OK;
  } catch (const duet::Error& e) {
    g_error = e.what();
    return static_cast<duet_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return DUET_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return DUET_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) duet::fail(duet::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

duet_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = s.size() + 1;
  if (buf == nullptr || cap < s.size() + 1) {
    g_error = "buffer too small";
    return buf == nullptr && cap == 0 ? DUET_OK : DUET_ERR_OUT_OF_RANGE;
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return DUET_OK;
}

duet::pipeline::Logger logger(duet_log_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const std::string& m) { fn(m.c_str(), user); };
}

}  // namespace

extern "C" {

const char* duet_version(void) { return "0.1.0"; }
const char* duet_last_error(void) { return g_error.c_str(); }

const char* duet_status_name(duet_status s) {
  switch (s) {
    case DUET_OK: return "ok";
    case DUET_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DUET_ERR_OUT_OF_RANGE: return "out of range";
    case DUET_ERR_IO: return "i/o error";
    case DUET_ERR_FORMAT: return "format error";
    case DUET_ERR_NUMERICAL: return "numerical error";
    case DUET_ERR_INCOMPATIBLE: return "incompatible";
    case DUET_ERR_MISSING_INPUT: return "missing input";
    case DUET_ERR_UNBALANCED_MARKER: return "unbalanced marker";
    case DUET_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

duet_status duet_config_new(const char* preset, duet_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new duet_config{duet::pipeline::PipelineConfig::preset(preset ? preset : "desk")};
  });
}

duet_status duet_config_load(const char* path, duet_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new duet_config{duet::pipeline::PipelineConfig::load(path)};
  });
}

void duet_config_free(duet_config* cfg) { delete cfg; }

duet_status duet_config_set(duet_config* cfg, const char* key, const char* value) {
  return guard([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

duet_status duet_config_get(const duet_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  std::string v;
  const duet_status s = guard([&] {
    need(cfg, "config");
    need(key, "key");
    v = cfg->cfg.get(key);
  });
  return s != DUET_OK ? s : copy_out(v, buf, cap, needed);
}

duet_status duet_config_dump(const duet_config* cfg, char* buf, size_t cap, size_t* needed) {
  std::string v;
  const duet_status s = guard([&] {
    need(cfg, "config");
    v = cfg->cfg.to_text();
  });
  return s != DUET_OK ? s : copy_out(v, buf, cap, needed);
}

size_t duet_command_count(void) { return duet::pipeline::command_names().size(); }

const char* duet_command_name(size_t i) {
  const auto& n = duet::pipeline::command_names();
  return i < n.size() ? n[i].c_str() : nullptr;
}

duet_status duet_run_command(const duet_config* cfg, const char* command, const char* in, const char* out,
                             duet_log_fn log, void* user) {
  return guard([&] {
    need(cfg, "config");
    need(command, "command");
    tune_allocator();
    duet::pipeline::StageIo io;
    if (in != nullptr) io.in = in;
    if (out != nullptr) io.out = out;
    duet::pipeline::run_command(command, cfg->cfg, io, logger(log, user));
  });
}

duet_status duet_run_pipeline(const duet_config* cfg, duet_log_fn log, void* user) {
  return guard([&] {
    need(cfg, "config");
    tune_allocator();
    duet::pipeline::run_pipeline(cfg->cfg, logger(log, user));
  });
}

duet_status duet_sequence_read(const char* path, duet_sequence** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new duet_sequence{duet::motion::read_duet(path)};
  });
}

void duet_sequence_free(duet_sequence* seq) { delete seq; }
int duet_sequence_frames(const duet_sequence* seq) { return seq ? seq->seq.length() : 0; }
int duet_sequence_joints(const duet_sequence* seq) { return seq ? seq->seq.skeleton.joint_count() : 0; }
double duet_sequence_fps(const duet_sequence* seq) { return seq ? seq->seq.fps : 0.0; }

duet_status duet_sequence_position(const duet_sequence* seq, duet_role role, int frame, int joint, double xyz[3]) {
  return guard([&] {
    need(seq, "sequence");
    need(xyz, "xyz");
    if (frame < 0 || frame >= seq->seq.length() || joint < 0 || joint >= seq->seq.skeleton.joint_count()) {
      duet::fail(duet::ErrorCode::kOutOfRange, "frame or joint out of range");
    }
    const auto& track = role == DUET_LEADER ? seq->seq.leader : seq->seq.follower;
    const auto& p = track[static_cast<size_t>(frame)].positions;
    for (int a = 0; a < 3; ++a) xyz[a] = p(joint, a);
  });
}

duet_status duet_sequence_relation(const duet_sequence* seq, int frame, double xz_theta[3]) {
  return guard([&] {
    need(seq, "sequence");
    need(xz_theta, "xz_theta");
    if (frame < 0 || frame >= seq->seq.length()) duet::fail(duet::ErrorCode::kOutOfRange, "frame out of range");
    const auto& r = seq->seq.relation[static_cast<size_t>(frame)];
    xz_theta[0] = r.x;
    xz_theta[1] = r.z;
    xz_theta[2] = r.theta;
  });
}

duet_status duet_sequence_render_svg(const duet_sequence* seq, int frame, const char* svg_path) {
  return guard([&] {
    need(seq, "sequence");
    need(svg_path, "svg_path");
    duet::pipeline::write_stick_figure_svg(seq->seq, frame, svg_path);
  });
}

duet_status duet_reports_read(const char* path, duet_reports** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    std::ifstream in(path);
    if (!in) duet::fail(duet::ErrorCode::kIo, std::string("cannot read ") + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      duet::fail(duet::ErrorCode::kFormat, std::string("bad metrics json: ") + e.what());
    }
    auto r = std::make_unique<duet_reports>();
    for (const auto& row : j) r->rows.push_back(duet::metrics::MetricReport::from_json(row));
    *out = r.release();
  });
}

void duet_reports_free(duet_reports* r) { delete r; }
size_t duet_reports_count(const duet_reports* r) { return r ? r->rows.size() : 0; }

const char* duet_reports_label(const duet_reports* r, size_t row) {
  return r && row < r->rows.size() ? r->rows[row].label.c_str() : nullptr;
}

duet_status duet_reports_value(const duet_reports* r, size_t row, const char* metric, double* value) {
  return guard([&] {
    need(r, "reports");
    need(metric, "metric");
    need(value, "value");
    if (row >= r->rows.size()) duet::fail(duet::ErrorCode::kOutOfRange, "report row out of range");
    const nlohmann::json j = r->rows[row].to_json();
    if (!j.contains(metric) || !j[metric].is_number()) {
      duet::fail(duet::ErrorCode::kInvalidArgument, std::string("unknown metric '") + metric + "'");
    }
    *value = j[metric].get<double>();
  });
}

}  // extern "C"
