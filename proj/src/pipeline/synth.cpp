#include "pipeline/synth.hpp"

#include "common/error.hpp"
#include "motion/relation.hpp"
#include "motion/rotation.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace duet::pipeline {

namespace {

constexpr double kPi = std::numbers::pi;

// Velocity vanishes at both ends of a beat.
double ease(double phi) { return phi - std::sin(2.0 * kPi * phi) / (2.0 * kPi); }

struct MoveDelta {
  double forward = 0, left = 0, yaw = 0;
};

// Displacement in the move's start frame after w beats (0 <= w <= 8).
MoveDelta move_delta(Move m, double w, double step) {
  const int k = std::min(static_cast<int>(std::floor(w)), kBeatsPerMove - 1);
  const double phi = w - k;
  // Signed beat count travelled, eased within the current beat.
  auto back_and_forth = [&] {
    const double e = ease(phi);
    return k < 4 ? (k + e) : (4.0 - (k - 4 + e));
  };
  MoveDelta d;
  switch (m) {
    case Move::kBasic:
      d.forward = step * back_and_forth();
      break;
    case Move::kSide:
      d.left = step * back_and_forth();
      break;
    case Move::kTurn:
      d.yaw = 2.0 * kPi * (k + ease(phi)) / kBeatsPerMove;
      break;
    case Move::kTravel: {
      // Semicircle of radius r: heading turns by pi over the move.
      const double a = kPi * (k + ease(phi)) / kBeatsPerMove;
      const double r = step * kBeatsPerMove / kPi;
      d.forward = r * std::sin(a);
      d.left = r * (1.0 - std::cos(a));
      d.yaw = a;
      break;
    }
  }
  return d;
}

motion::RootPose compose(const motion::RootPose& base, const MoveDelta& d) {
  // Leader forward is (sin yaw, cos yaw), left is (cos yaw, -sin yaw).
  motion::RootPose p;
  p.x = base.x + d.forward * std::sin(base.yaw) + d.left * std::cos(base.yaw);
  p.z = base.z + d.forward * std::cos(base.yaw) - d.left * std::sin(base.yaw);
  p.yaw = base.yaw + d.yaw;
  return p;
}

// Beat coordinate of time t for beat instants `times` spaced by `period` on average.
double beat_coordinate(std::span<const double> times, double period, double t) {
  if (times.empty() || t <= times.front()) return times.empty() ? 0.0 : (t - times.front()) / period;
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto k = static_cast<std::size_t>(it - times.begin()) - 1;
  if (k + 1 >= times.size()) return static_cast<double>(k) + (t - times[k]) / period;
  return static_cast<double>(k) + (t - times[k]) / (times[k + 1] - times[k]);
}

struct BodyPhase {
  double u = 0;  // beat coordinate, < 0 before the first beat
};

// Limbs: alternating foot lift per beat, counter-swinging arms, slight bob.
motion::JointMat body_pose(const motion::Skeleton& sk, const motion::RootPose& root, double u, double arm_swing,
                           bool mirrored) {
  const double uu = std::max(0.0, u);
  const int k = static_cast<int>(std::floor(uu));
  const double phi = uu - k;
  const double bob = u > 0 ? 0.02 * std::sin(kPi * phi) * std::sin(kPi * phi) : 0.0;
  auto rest = sk.rest_positions(Eigen::Vector3d(0.0, 0.95 - bob, 0.0));
  const bool left_steps = (k % 2 == 0) != mirrored;
  const double lift = u > 0 ? 0.08 * std::sin(kPi * phi) : 0.0;
  for (int j : left_steps ? std::array{sk.l_knee, sk.l_heel, sk.l_toe} : std::array{sk.r_knee, sk.r_heel, sk.r_toe}) {
    rest[static_cast<std::size_t>(j)].y() += j == (left_steps ? sk.l_knee : sk.r_knee) ? 0.5 * lift : lift;
    rest[static_cast<std::size_t>(j)].z() += 0.5 * lift;
  }
  const double swing = arm_swing * std::cos(kPi * uu) * (u > 0 ? 1.0 : 0.0);
  for (int side = 0; side < 2; ++side) {
    const bool left = side == 0;
    const double a = (left != mirrored) ? swing : -swing;
    const Eigen::Matrix3d r = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix();
    const int sh = left ? sk.l_shoulder : sk.r_shoulder;
    for (int j : left ? std::array{sk.l_elbow, sk.l_wrist} : std::array{sk.r_elbow, sk.r_wrist}) {
      rest[static_cast<std::size_t>(j)] = rest[static_cast<std::size_t>(sh)] +
                                          r * (rest[static_cast<std::size_t>(j)] - rest[static_cast<std::size_t>(sh)]);
    }
  }
  const Eigen::Matrix3d ry = motion::rotation_y(root.yaw);
  motion::JointMat p(sk.joint_count(), 3);
  for (int j = 0; j < sk.joint_count(); ++j) {
    p.row(j) = (ry * rest[static_cast<std::size_t>(j)] + Eigen::Vector3d(root.x, 0.0, root.z)).transpose();
  }
  return p;
}

}  // namespace

const char* move_name(Move m) {
  switch (m) {
    case Move::kBasic: return "basic";
    case Move::kSide: return "side";
    case Move::kTurn: return "turn";
    case Move::kTravel: return "travel";
  }
  return "?";
}

std::vector<StyleSpec> default_styles() {
  return {{"salsa", {0.55, 0.15, 0.15, 0.15}, 0.14, 0.6},
          {"bachata", {0.15, 0.55, 0.15, 0.15}, 0.10, 0.3},
          {"merengue", {0.15, 0.15, 0.35, 0.35}, 0.08, 0.45}};
}

SyntheticDuetSpec default_synthetic_spec() {
  SyntheticDuetSpec s;
  s.styles = default_styles();
  return s;
}

void SyntheticDuetSpec::validate() const {
  if (!(bpm > 0)) fail(ErrorCode::kInvalidArgument, "synthetic corpus: BPM must be positive");
  if (!(duration > 0) || !(fps > 0)) fail(ErrorCode::kInvalidArgument, "synthetic corpus: duration and fps must be positive");
  if (styles.empty()) fail(ErrorCode::kInvalidArgument, "synthetic corpus: no styles");
  for (const StyleSpec& s : styles) {
    double sum = 0;
    for (double p : s.move_probs) {
      if (p < 0) fail(ErrorCode::kInvalidArgument, "synthetic corpus: negative move probability in " + s.name);
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::kInvalidArgument, "synthetic corpus: move probabilities of " + s.name + " do not sum to 1");
  }
  if (follower_lag < 0) fail(ErrorCode::kInvalidArgument, "synthetic corpus: negative follower lag");
  if (leader_drift < 0 || leader_drift >= 0.5 * 60.0 / bpm) {
    fail(ErrorCode::kInvalidArgument, "synthetic corpus: leader drift must be below half a beat");
  }
  if (noise < 0 || min_distance <= 0 || max_distance < min_distance) {
    fail(ErrorCode::kInvalidArgument, "synthetic corpus: bad noise or distance range");
  }
}

nlohmann::json SyntheticDuetSpec::to_json() const {
  nlohmann::json st = nlohmann::json::array();
  for (const StyleSpec& s : styles) {
    st.push_back({{"name", s.name}, {"move_probs", s.move_probs}, {"step_length", s.step_length}, {"arm_swing", s.arm_swing}});
  }
  return {{"bpm", bpm},
          {"duration", duration},
          {"fps", fps},
          {"styles", st},
          {"follower_lag", follower_lag},
          {"leader_drift", leader_drift},
          {"noise", noise},
          {"min_distance", min_distance},
          {"max_distance", max_distance},
          {"max_bearing", max_bearing},
          {"max_facing", max_facing},
          {"random_beat_offset", random_beat_offset},
          {"accent_pattern", accent_pattern},
          {"seed", seed}};
}

motion::RootPose program_pose(std::span<const Move> moves, double u, double step_length) {
  motion::RootPose base;
  if (u <= 0 || moves.empty()) return base;
  const int total = static_cast<int>(moves.size()) * kBeatsPerMove;
  u = std::min(u, static_cast<double>(total));
  std::size_t m = 0;
  while (u > kBeatsPerMove && m + 1 < moves.size()) {
    base = compose(base, move_delta(moves[m], kBeatsPerMove, step_length));
    u -= kBeatsPerMove;
    ++m;
  }
  return compose(base, move_delta(moves[m], u, step_length));
}

std::vector<SyntheticSequence> generate_synthetic_corpus(const SyntheticDuetSpec& spec, int count) {
  spec.validate();
  if (count < 0) fail(ErrorCode::kInvalidArgument, "synthetic corpus: negative count");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const motion::Skeleton sk = motion::Skeleton::smpl22();
  const double period = 60.0 / spec.bpm;
  const int frames = static_cast<int>(std::lround(spec.duration * spec.fps));
  std::vector<SyntheticSequence> out;
  for (int n = 0; n < count; ++n) {
    SyntheticSequence s;
    const StyleSpec& style = spec.styles[static_cast<std::size_t>(std::uniform_int_distribution<int>(
        0, static_cast<int>(spec.styles.size()) - 1)(rng))];
    const double offset = spec.random_beat_offset ? period * u01(rng) : 0.0;
    s.beats = audio::synthesize_beat_track(spec.bpm, spec.duration, spec.accent_pattern, offset);

    const int n_moves = static_cast<int>(s.beats.onsets.size()) / kBeatsPerMove + 2;
    std::discrete_distribution<int> pick(style.move_probs.begin(), style.move_probs.end());
    for (int m = 0; m < n_moves; ++m) s.moves.push_back(static_cast<Move>(pick(rng)));

    std::vector<double> leader_beats = s.beats.onsets;
    for (std::size_t k = 0; k < leader_beats.size(); ++k) leader_beats[k] += spec.leader_drift * (2.0 * u01(rng) - 1.0);

    const double dist = spec.min_distance + (spec.max_distance - spec.min_distance) * u01(rng);
    const double bearing = spec.max_bearing * (2.0 * u01(rng) - 1.0);
    const double facing = kPi + spec.max_facing * (2.0 * u01(rng) - 1.0);
    // Relation offset in the leader frame: forward is +z, left is +x.
    s.target_relation = {dist * std::sin(bearing), dist * std::cos(bearing), std::remainder(facing, 2.0 * kPi)};
    std::array<double, 3> wob_freq{}, wob_phase{};
    for (int i = 0; i < 3; ++i) {
      wob_freq[static_cast<std::size_t>(i)] = 0.05 + 0.1 * u01(rng);
      wob_phase[static_cast<std::size_t>(i)] = 2.0 * kPi * u01(rng);
    }
    const motion::RootPose start{6.0 * u01(rng) - 3.0, 6.0 * u01(rng) - 3.0, 2.0 * kPi * u01(rng) - kPi};
    auto world = [&](const motion::RootPose& local) {
      motion::RootPose p;
      p.x = start.x + std::cos(start.yaw) * local.x + std::sin(start.yaw) * local.z;
      p.z = start.z - std::sin(start.yaw) * local.x + std::cos(start.yaw) * local.z;
      p.yaw = start.yaw + local.yaw;
      return p;
    };

    std::vector<motion::JointMat> lead, follow;
    for (int f = 0; f < frames; ++f) {
      const double t = f / spec.fps;
      const double ul = beat_coordinate(leader_beats, period, t);
      const motion::RootPose lp = world(program_pose(s.moves, ul, style.step_length));
      lead.push_back(body_pose(sk, lp, ul, style.arm_swing, false));

      const double tf = t - spec.follower_lag / spec.fps;
      const double uf = beat_coordinate(s.beats.onsets, period, tf);
      const motion::RootPose anchor = world(program_pose(s.moves, uf, style.step_length));
      motion::RelationFrame rel = s.target_relation;
      rel.x += spec.noise * 0.05 * std::sin(2.0 * kPi * wob_freq[0] * t + wob_phase[0]);
      rel.z += spec.noise * 0.05 * std::sin(2.0 * kPi * wob_freq[1] * t + wob_phase[1]);
      rel.theta += spec.noise * 0.1 * std::sin(2.0 * kPi * wob_freq[2] * t + wob_phase[2]);
      const motion::RootPose fp = motion::follower_from_relation(anchor, rel);
      follow.push_back(body_pose(sk, fp, uf, style.arm_swing, true));
    }
    s.duet = motion::make_duet(lead, follow, sk, spec.fps);
    s.duet.style = style.name;
    s.duet.bpm = spec.bpm;
    s.duet.beat_times = s.beats.onsets;
    s.duet.beat_accents = s.beats.accents;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace duet::pipeline
