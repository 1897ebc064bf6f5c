#include "motion/duet.hpp"

#include "common/container.hpp"
#include "common/error.hpp"

#include <cmath>

namespace duet::motion {

void DuetSequence::validate(double tol) const {
  if (leader.size() != follower.size() || leader.size() != relation.size()) {
    fail(ErrorCode::kInvalidArgument, "duet tracks have different lengths");
  }
  const auto rel = relation_track(leader, follower, skeleton);
  for (std::size_t i = 0; i < rel.size(); ++i) {
    const double dt = std::abs(wrap_angle(rel[i].theta - relation[i].theta));
    if (std::abs(rel[i].x - relation[i].x) > tol || std::abs(rel[i].z - relation[i].z) > tol || dt > tol) {
      fail(ErrorCode::kInvalidArgument, "relation track inconsistent with motion at frame " + std::to_string(i));
    }
  }
}

void DuetSequence::refresh_relation() { relation = relation_track(leader, follower, skeleton); }

DuetSequence make_duet(std::span<const JointMat> leader_positions, std::span<const JointMat> follower_positions,
                       const Skeleton& sk, double fps) {
  if (leader_positions.size() != follower_positions.size()) {
    fail(ErrorCode::kInvalidArgument, "make_duet: leader and follower lengths differ");
  }
  DuetSequence d;
  d.fps = fps;
  d.skeleton = sk;
  d.leader = compute_features(leader_positions, sk, fps);
  d.follower = compute_features(follower_positions, sk, fps);
  d.refresh_relation();
  return d;
}

std::vector<JointMat> positions_of(std::span<const MotionFrame> frames) {
  std::vector<JointMat> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.positions);
  return out;
}

namespace {

Blob positions_blob(const std::string& name, std::span<const MotionFrame> frames, int nj) {
  Blob b;
  b.name = name;
  b.shape = {static_cast<std::int64_t>(frames.size()), nj, 3};
  b.data.reserve(frames.size() * static_cast<std::size_t>(nj) * 3);
  for (const auto& f : frames) {
    for (int j = 0; j < nj; ++j) {
      for (int k = 0; k < 3; ++k) b.data.push_back(static_cast<float>(f.positions(j, k)));
    }
  }
  return b;
}

Blob features_blob(const std::string& name, std::span<const MotionFrame> frames, int nj) {
  Blob b;
  b.name = name;
  const int d = feature_dim(nj);
  b.shape = {static_cast<std::int64_t>(frames.size()), d};
  b.data.reserve(frames.size() * static_cast<std::size_t>(d));
  for (const auto& f : frames) {
    const Eigen::VectorXd v = flatten(f);
    for (int i = 0; i < d; ++i) b.data.push_back(static_cast<float>(v(i)));
  }
  return b;
}

std::vector<MotionFrame> frames_from_blobs(const Container& c, const std::string& role, const Skeleton& sk, double fps,
                                           std::int64_t t) {
  const int nj = sk.joint_count();
  if (const Blob* feat = c.find(role + "_features")) {
    const int d = feature_dim(nj);
    if (feat->shape.size() != 2 || feat->shape[0] != t || feat->shape[1] != d) {
      fail(ErrorCode::kFormat, role + "_features has wrong shape");
    }
    std::vector<MotionFrame> out;
    out.reserve(static_cast<std::size_t>(t));
    std::vector<double> row(static_cast<std::size_t>(d));
    for (std::int64_t i = 0; i < t; ++i) {
      for (int k = 0; k < d; ++k) row[static_cast<std::size_t>(k)] = feat->data[static_cast<std::size_t>(i * d + k)];
      out.push_back(unflatten(row, nj));
    }
    return out;
  }
  const Blob& pos = c.at(role + "_positions");
  if (pos.shape.size() != 3 || pos.shape[0] != t || pos.shape[1] != nj || pos.shape[2] != 3) {
    fail(ErrorCode::kFormat, role + "_positions has wrong shape");
  }
  std::vector<JointMat> ps(static_cast<std::size_t>(t), JointMat(nj, 3));
  for (std::int64_t i = 0; i < t; ++i) {
    for (int j = 0; j < nj; ++j) {
      for (int k = 0; k < 3; ++k) {
        ps[static_cast<std::size_t>(i)](j, k) = pos.data[static_cast<std::size_t>((i * nj + j) * 3 + k)];
      }
    }
  }
  return compute_features(ps, sk, fps);
}

}  // namespace

void write_duet(const std::filesystem::path& path, const DuetSequence& seq) {
  if (seq.leader.size() != seq.follower.size()) fail(ErrorCode::kInvalidArgument, "write_duet: track lengths differ");
  const int nj = seq.skeleton.joint_count();
  Container c;
  c.magic = "DUET";
  auto& h = c.header;
  h["kind"] = "duet_motion";
  h["fps"] = seq.fps;
  h["frames"] = seq.leader.size();
  h["joint_count"] = nj;
  h["joint_names"] = seq.skeleton.names;
  h["parents"] = seq.skeleton.parents;
  h["primary_child"] = seq.skeleton.primary_child;
  nlohmann::json offs = nlohmann::json::array();
  for (const auto& o : seq.skeleton.offsets) offs.push_back({o.x(), o.y(), o.z()});
  h["rest_offsets"] = offs;
  h["style"] = seq.style ? nlohmann::json(*seq.style) : nlohmann::json(nullptr);
  h["beat_times"] = seq.beat_times ? nlohmann::json(*seq.beat_times) : nlohmann::json(nullptr);
  if (seq.beat_accents) h["beat_accents"] = *seq.beat_accents;
  if (seq.bpm) h["bpm"] = *seq.bpm;
  c.blobs.push_back(positions_blob("leader_positions", seq.leader, nj));
  c.blobs.push_back(positions_blob("follower_positions", seq.follower, nj));
  c.blobs.push_back(features_blob("leader_features", seq.leader, nj));
  c.blobs.push_back(features_blob("follower_features", seq.follower, nj));
  write_container(path, c);
}

DuetSequence read_duet(const std::filesystem::path& path) {
  const Container c = read_container(path, "DUET");
  const auto& h = c.header;
  DuetSequence d;
  try {
    d.fps = h.at("fps").get<double>();
    const auto t = h.at("frames").get<std::int64_t>();
    Skeleton sk;
    sk.names = h.at("joint_names").get<std::vector<std::string>>();
    sk.parents = h.at("parents").get<std::vector<int>>();
    sk.primary_child = h.at("primary_child").get<std::vector<int>>();
    for (const auto& o : h.at("rest_offsets")) sk.offsets.emplace_back(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
    if (static_cast<int>(sk.parents.size()) != h.at("joint_count").get<int>()) {
      fail(ErrorCode::kFormat, "joint_count disagrees with parents array");
    }
    sk.validate();
    d.skeleton = sk;
    if (h.contains("style") && !h["style"].is_null()) d.style = h["style"].get<std::string>();
    if (h.contains("beat_times") && !h["beat_times"].is_null()) d.beat_times = h["beat_times"].get<std::vector<double>>();
    if (h.contains("beat_accents")) d.beat_accents = h["beat_accents"].get<std::vector<int>>();
    if (h.contains("bpm")) d.bpm = h["bpm"].get<double>();
    d.leader = frames_from_blobs(c, "leader", sk, d.fps, t);
    d.follower = frames_from_blobs(c, "follower", sk, d.fps, t);
    // Positions blob is authoritative for positions even when features exist.
    for (const char* role : {"leader", "follower"}) {
      const Blob& pos = c.at(std::string(role) + "_positions");
      auto& frames = std::string(role) == "leader" ? d.leader : d.follower;
      const int nj = sk.joint_count();
      for (std::int64_t i = 0; i < t; ++i) {
        for (int j = 0; j < nj; ++j) {
          for (int k = 0; k < 3; ++k) {
            frames[static_cast<std::size_t>(i)].positions(j, k) = pos.data[static_cast<std::size_t>((i * nj + j) * 3 + k)];
          }
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("duet header: ") + e.what());
  }
  d.refresh_relation();
  return d;
}

}  // namespace duet::motion
