#include "vq/tokenizer.hpp"

#include "common/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace duet::vq {

using motion::MotionFrame;
using motion::RelationFrame;

Mat motion_window_matrix(std::span<const MotionFrame> frames) {
  if (frames.empty()) fail(ErrorCode::kInvalidArgument, "motion_window_matrix: no frames");
  const Eigen::Index n = frames[0].positions.rows();
  Mat m(static_cast<Eigen::Index>(frames.size()), motion::feature_dim(static_cast<int>(n)));
  for (std::size_t t = 0; t < frames.size(); ++t) m.row(static_cast<Eigen::Index>(t)) = motion::flatten(frames[t]).transpose();
  return m;
}

std::vector<MotionFrame> motion_frames_from_matrix(const Mat& m, int joint_count) {
  std::vector<MotionFrame> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    out.push_back(motion::unflatten(std::span<const double>(m.row(t).data(), static_cast<std::size_t>(m.cols())), joint_count));
  }
  return out;
}

Mat relation_window_matrix(std::span<const RelationFrame> frames) {
  Mat m(static_cast<Eigen::Index>(frames.size()), kRelationChannels);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    m(r, 0) = frames[t].x;
    m(r, 1) = frames[t].z;
    m(r, 2) = std::sin(frames[t].theta);
    m(r, 3) = std::cos(frames[t].theta);
  }
  return m;
}

std::vector<RelationFrame> relation_frames_from_matrix(const Mat& m) {
  if (m.cols() != kRelationChannels) fail(ErrorCode::kInvalidArgument, "relation matrix must have 4 channels");
  std::vector<RelationFrame> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    out[static_cast<std::size_t>(t)] = {m(t, 0), m(t, 1), std::atan2(m(t, 2), m(t, 3))};
  }
  return out;
}

std::vector<int> motion_velocity_channels(int joint_count) {
  std::vector<int> c(static_cast<std::size_t>(3 * joint_count));
  for (int i = 0; i < 3 * joint_count; ++i) c[static_cast<std::size_t>(i)] = i;
  return c;
}

std::vector<int> relation_velocity_channels() { return {0, 1, 2, 3}; }

std::vector<motion::MotionWindow> motion_windows(std::span<const MotionFrame> track, const motion::Skeleton& sk,
                                                 int tau) {
  std::vector<motion::MotionWindow> out;
  if (tau < 1 || static_cast<int>(track.size()) < tau) return out;
  const std::vector<double> yaws = motion::yaw_track(track, sk);
  for (int s = 0; s + tau <= static_cast<int>(track.size()); s += tau) {
    const double fallback = s > 0 ? yaws[static_cast<std::size_t>(s - 1)] : 0.0;
    out.push_back(motion::canonicalize_window(track.subspan(static_cast<std::size_t>(s), static_cast<std::size_t>(tau)),
                                              sk, s, fallback));
  }
  return out;
}

TokenizedTrack tokenize_motion(const VqVae& vq, std::span<const MotionFrame> track, const motion::Skeleton& sk) {
  const int tau = vq.config().window;
  if (static_cast<int>(track.size()) < tau) {
    fail(ErrorCode::kInvalidArgument, "tokenize: track shorter than one window");
  }
  TokenizedTrack out;
  for (const motion::MotionWindow& w : motion_windows(track, sk, tau)) {
    out.indices.push_back(vq.tokenize(motion_window_matrix(w.frames)));
    out.starts.push_back(w.start);
    out.transforms.push_back(w.to_world);
  }
  return out;
}

std::vector<MotionFrame> decode_motion_token(const VqVae& vq, int index, int joint_count) {
  return motion_frames_from_matrix(vq.decode(index), joint_count);
}

std::vector<MotionFrame> detokenize_motion(const VqVae& vq, const TokenizedTrack& tokens, int joint_count) {
  if (tokens.transforms.size() != tokens.indices.size()) {
    fail(ErrorCode::kInvalidArgument, "detokenize: one transform per motion token required");
  }
  std::vector<MotionFrame> out;
  for (std::size_t i = 0; i < tokens.indices.size(); ++i) {
    motion::MotionWindow w;
    w.frames = decode_motion_token(vq, tokens.indices[i], joint_count);
    w.to_world = tokens.transforms[i];
    for (MotionFrame& f : motion::invert_canonicalization(w)) out.push_back(std::move(f));
  }
  return out;
}

TokenizedTrack tokenize_relation(const VqVae& vq, std::span<const RelationFrame> track) {
  const int tau = vq.config().window;
  if (static_cast<int>(track.size()) < tau) fail(ErrorCode::kInvalidArgument, "tokenize: track shorter than one window");
  TokenizedTrack out;
  for (int s = 0; s + tau <= static_cast<int>(track.size()); s += tau) {
    out.indices.push_back(vq.tokenize(relation_window_matrix(track.subspan(static_cast<std::size_t>(s), static_cast<std::size_t>(tau)))));
    out.starts.push_back(s);
  }
  return out;
}

std::vector<RelationFrame> detokenize_relation(const VqVae& vq, std::span<const int> indices) {
  std::vector<RelationFrame> out;
  for (int k : indices) {
    for (const RelationFrame& r : relation_frames_from_matrix(vq.decode(k))) out.push_back(r);
  }
  return out;
}

std::vector<Mat> motion_training_windows(std::span<const motion::DuetSequence> seqs, int tau) {
  std::vector<Mat> out;
  for (const motion::DuetSequence& s : seqs) {
    for (const auto* track : {&s.leader, &s.follower}) {
      for (const motion::MotionWindow& w : motion_windows(*track, s.skeleton, tau)) out.push_back(motion_window_matrix(w.frames));
    }
  }
  return out;
}

std::vector<Mat> relation_training_windows(std::span<const motion::DuetSequence> seqs, int tau) {
  std::vector<Mat> out;
  for (const motion::DuetSequence& s : seqs) {
    const std::span<const RelationFrame> r(s.relation);
    for (int st = 0; st + tau <= static_cast<int>(r.size()); st += tau) {
      out.push_back(relation_window_matrix(r.subspan(static_cast<std::size_t>(st), static_cast<std::size_t>(tau))));
    }
  }
  return out;
}

void write_token_corpus(const std::filesystem::path& path, std::span<const TokenRecord> records) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write token corpus " + path.string());
  for (const TokenRecord& r : records) {
    if (r.sequence.find_first_of("\t\n") != std::string::npos || r.role.find_first_of("\t\n ") != std::string::npos) {
      fail(ErrorCode::kInvalidArgument, "token corpus: sequence/role must not contain tabs or newlines");
    }
    os << r.sequence << '\t' << r.role << '\t';
    for (std::size_t i = 0; i < r.tokens.size(); ++i) os << (i ? " " : "") << r.tokens[i];
    os << '\n';
  }
  if (!os) fail(ErrorCode::kIo, "error writing token corpus " + path.string());
}

std::vector<TokenRecord> read_token_corpus(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot read token corpus " + path.string());
  std::vector<TokenRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    TokenRecord r{line.substr(0, a), line.substr(a + 1, b - a - 1), {}};
    std::istringstream ids(line.substr(b + 1));
    std::string tok;
    while (ids >> tok) {
      try {
        std::size_t used = 0;
        r.tokens.push_back(std::stoi(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": bad token '" + tok + "'");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace duet::vq
