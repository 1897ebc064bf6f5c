#include "describe/describer.hpp"

#include "common/error.hpp"

#include <cmath>
#include <fstream>

namespace duet::describe {

std::string Caption::text() const {
  std::string s;
  for (std::size_t i = 0; i < phrases.size(); ++i) s += (i ? ", " : "") + phrases[i];
  return s;
}

std::vector<CaptionRule> default_rules(const motion::Skeleton& sk) {
  using T = Trigger;
  constexpr double d = kDisplacement;
  std::vector<CaptionRule> r = {
      {1, "left hand raises above the shoulder", T::kRise, sk.l_wrist, sk.l_shoulder, 1, 1, d},
      {2, "right hand raises above the shoulder", T::kRise, sk.r_wrist, sk.r_shoulder, 1, 1, d},
      {3, "left hand raises above the head", T::kRise, sk.l_wrist, sk.head, 1, 1, d},
      {4, "right hand raises above the head", T::kRise, sk.r_wrist, sk.head, 1, 1, d},
      {5, "left hand lowers", T::kRise, sk.l_wrist, -1, 1, -1, d},
      {6, "right hand lowers", T::kRise, sk.r_wrist, -1, 1, -1, d},
      {7, "left hand reaches forward", T::kReach, sk.l_wrist, -1, 2, 1, d},
      {8, "right hand reaches forward", T::kReach, sk.r_wrist, -1, 2, 1, d},
      {9, "left hand pulls back", T::kReach, sk.l_wrist, -1, 2, -1, d},
      {10, "right hand pulls back", T::kReach, sk.r_wrist, -1, 2, -1, d},
      {11, "left hand moves outward", T::kReach, sk.l_wrist, -1, 0, 1, d},
      {12, "right hand moves outward", T::kReach, sk.r_wrist, -1, 0, -1, d},
      {13, "hands come together", T::kGap, sk.l_wrist, sk.r_wrist, 0, -1, d},
      {14, "hands move apart", T::kGap, sk.l_wrist, sk.r_wrist, 0, 1, d},
      {15, "steps forward", T::kRootShift, sk.root, -1, 2, 1, d},
      {16, "steps backward", T::kRootShift, sk.root, -1, 2, -1, d},
      {17, "steps to the left", T::kRootShift, sk.root, -1, 0, 1, d},
      {18, "steps to the right", T::kRootShift, sk.root, -1, 0, -1, d},
      {19, "turns counterclockwise", T::kTurn, sk.root, -1, 1, 1, kTurn},
      {20, "turns clockwise", T::kTurn, sk.root, -1, 1, -1, kTurn},
      {21, "turns around", T::kTurnAround, sk.root, -1, 1, 1, 5 * kTurn},
      {22, "body lowers", T::kRise, sk.root, -1, 1, -1, d},
      {23, "body rises", T::kRise, sk.root, -1, 1, 1, d},
      {24, "leans forward", T::kLean, sk.neck, -1, 2, 1, d},
      {25, "leans backward", T::kLean, sk.neck, -1, 2, -1, d},
      {26, "left foot leaves the ground", T::kFootOff, 0, -1, 1, 1, 0.5},
      {27, "right foot leaves the ground", T::kFootOff, 1, -1, 1, 1, 0.5},
      {28, "moves quickly", T::kSpeedAbove, 0, -1, 1, 1, kFastSpeed},
      {29, "moves slowly", T::kSpeedBetween, 0, -1, 1, 1, kSlowLow, kSlowHigh},
  };
  return r;
}

namespace {

struct Stats {
  const motion::JointMat* first;
  const motion::JointMat* last;
  double yaw_change = 0;
  double mean_speed = 0;
  double foot_off[2] = {0, 0};
};

Stats window_stats(const motion::MotionWindow& w, const motion::Skeleton& sk) {
  if (w.frames.empty()) fail(ErrorCode::kInvalidArgument, "describe_window: empty window");
  Stats s;
  s.first = &w.frames.front().positions;
  s.last = &w.frames.back().positions;
  double prev = motion::frame_yaw(w.frames.front().positions, sk, 0.0);
  double speed = 0;
  for (std::size_t t = 0; t < w.frames.size(); ++t) {
    const auto& f = w.frames[t];
    if (t > 0) {
      const double y = motion::frame_yaw(f.positions, sk, prev);
      s.yaw_change += motion::wrap_angle(y - prev);
      prev = y;
    }
    speed += f.velocities.rowwise().norm().mean();
    s.foot_off[0] += (f.contacts[0] == 0 && f.contacts[1] == 0) ? 1.0 : 0.0;
    s.foot_off[1] += (f.contacts[2] == 0 && f.contacts[3] == 0) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(w.frames.size());
  s.mean_speed = speed / n;
  s.foot_off[0] /= n;
  s.foot_off[1] /= n;
  return s;
}

bool fires(const CaptionRule& r, const Stats& s, const motion::Skeleton& sk) {
  const auto& a = *s.first;
  const auto& b = *s.last;
  const auto J = static_cast<Eigen::Index>(r.joint);
  const auto R = static_cast<Eigen::Index>(sk.root);
  switch (r.trigger) {
    case Trigger::kRise: {
      const bool moved = (b(J, 1) - a(J, 1)) * r.sign > r.threshold;
      return moved && (r.other < 0 || b(J, 1) > b(r.other, 1));
    }
    case Trigger::kRootShift:
      return (b(R, r.axis) - a(R, r.axis)) * r.sign > r.threshold;
    case Trigger::kReach:
      return ((b(J, r.axis) - b(R, r.axis)) - (a(J, r.axis) - a(R, r.axis))) * r.sign > r.threshold;
    case Trigger::kGap:
      return ((b.row(J) - b.row(r.other)).norm() - (a.row(J) - a.row(r.other)).norm()) * r.sign > r.threshold;
    case Trigger::kTurn:
      return s.yaw_change * r.sign > r.threshold;
    case Trigger::kTurnAround:
      return std::abs(s.yaw_change) > r.threshold;
    case Trigger::kLean: {
      // forward axis of the final frame
      const double yaw = motion::frame_yaw(b, sk, 0.0);
      const Eigen::Vector3d fwd(std::sin(yaw), 0.0, std::cos(yaw));
      return (b.row(J) - b.row(R)).dot(fwd.transpose()) * r.sign > r.threshold;
    }
    case Trigger::kFootOff:
      return s.foot_off[r.joint] >= r.threshold;
    case Trigger::kSpeedAbove:
      return s.mean_speed > r.threshold;
    case Trigger::kSpeedBetween:
      return s.mean_speed > r.threshold && s.mean_speed <= r.upper;
  }
  return false;
}

}  // namespace

Caption describe_window(const motion::MotionWindow& w, const motion::Skeleton& sk, std::span<const CaptionRule> rules,
                        int window_index) {
  const Stats s = window_stats(w, sk);
  Caption c;
  c.window = window_index;
  for (const CaptionRule& r : rules) {
    if (fires(r, s, sk)) c.phrases.push_back(r.phrase);
  }
  if (c.phrases.empty()) c.phrases.emplace_back(kHoldPosition);
  return c;
}

std::vector<std::string> phrase_set(std::span<const CaptionRule> rules) {
  std::vector<std::string> out;
  for (const CaptionRule& r : rules) out.push_back(r.phrase);
  out.emplace_back(kHoldPosition);
  return out;
}

void write_caption_corpus(const std::filesystem::path& path, std::span<const CaptionRecord> records) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write caption corpus " + path.string());
  for (const CaptionRecord& r : records) os << r.sequence << '\t' << r.window << '\t' << r.text << '\n';
  if (!os) fail(ErrorCode::kIo, "error writing caption corpus " + path.string());
}

std::vector<CaptionRecord> read_caption_corpus(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot read caption corpus " + path.string());
  std::vector<CaptionRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    CaptionRecord r;
    r.sequence = line.substr(0, a);
    try {
      r.window = std::stoi(line.substr(a + 1, b - a - 1));
    } catch (const std::exception&) {
      fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": bad window index");
    }
    r.text = line.substr(b + 1);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace duet::describe
