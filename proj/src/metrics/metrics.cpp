#include "metrics/metrics.hpp"

#include "common/error.hpp"
#include "motion/relation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace duet::metrics {

void FeatureVectorSet::validate() const {
  if (!rows.allFinite()) fail(ErrorCode::kNumerical, "feature set contains non-finite values");
}

Eigen::VectorXd kinematic_features(std::span<const motion::MotionFrame> frames, double fps) {
  const int T = static_cast<int>(frames.size());
  if (T < 2) fail(ErrorCode::kInvalidArgument, "kinematic features need at least 2 frames");
  const int N = static_cast<int>(frames[0].velocities.rows());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * N);
  for (int t = 0; t < T; ++t) {
    const auto& v = frames[static_cast<std::size_t>(t)].velocities;
    for (int j = 0; j < N; ++j) {
      const double s = v.row(j).norm();
      f(j) += s;
      f(N + j) += s * s;
    }
    if (t > 0) {
      const auto& vp = frames[static_cast<std::size_t>(t - 1)].velocities;
      for (int j = 0; j < N; ++j) f(2 * N + j) += (v.row(j) - vp.row(j)).norm() * fps;
    }
  }
  f.head(2 * N) /= T;
  f.tail(N) /= T - 1;
  return f;
}

const std::array<std::string, kGraphicalDim>& graphical_feature_names() {
  static const std::array<std::string, kGraphicalDim> names{
      "left_wrist_above_head",   "right_wrist_above_head",   "left_wrist_above_shoulder", "right_wrist_above_shoulder",
      "hands_closer_than_0.3m",  "hands_farther_than_1.0m",  "left_wrist_in_front",       "right_wrist_in_front",
      "right_foot_in_front",     "left_foot_in_front",       "left_foot_raised",          "right_foot_raised",
      "root_moving_forward",     "root_moving_backward",     "root_moving_sideways",      "torso_leaning_forward"};
  return names;
}

Eigen::VectorXd graphical_features(std::span<const motion::MotionFrame> frames, const motion::Skeleton& sk) {
  if (frames.empty()) fail(ErrorCode::kInvalidArgument, "graphical features need at least 1 frame");
  const std::vector<double> yaws = motion::yaw_track(frames, sk);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(kGraphicalDim);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& p = frames[t].positions;
    const Eigen::Vector3d fwd(std::sin(yaws[t]), 0.0, std::cos(yaws[t]));
    const Eigen::Vector3d left(std::cos(yaws[t]), 0.0, -std::sin(yaws[t]));
    auto P = [&](int j) -> Eigen::Vector3d { return p.row(j).transpose(); };
    const Eigen::Vector3d root = P(sk.root);
    const Eigen::Vector3d vel = frames[t].velocities.row(sk.root).transpose();
    const double hands = (P(sk.l_wrist) - P(sk.r_wrist)).norm();
    const bool rel[kGraphicalDim] = {
        P(sk.l_wrist).y() > P(sk.head).y(),
        P(sk.r_wrist).y() > P(sk.head).y(),
        P(sk.l_wrist).y() > P(sk.l_shoulder).y(),
        P(sk.r_wrist).y() > P(sk.r_shoulder).y(),
        hands < 0.3,
        hands > 1.0,
        fwd.dot(P(sk.l_wrist) - root) > 0.3,
        fwd.dot(P(sk.r_wrist) - root) > 0.3,
        fwd.dot(P(sk.r_toe) - P(sk.l_toe)) > 0.1,
        fwd.dot(P(sk.l_toe) - P(sk.r_toe)) > 0.1,
        P(sk.l_heel).y() > P(sk.r_heel).y() + 0.05,
        P(sk.r_heel).y() > P(sk.l_heel).y() + 0.05,
        fwd.dot(vel) > 0.1,
        fwd.dot(vel) < -0.1,
        std::abs(left.dot(vel)) > 0.1,
        fwd.dot(P(sk.neck) - root) > 0.1,
    };
    for (int k = 0; k < kGraphicalDim; ++k) f(k) += rel[k] ? 1.0 : 0.0;
  }
  return f / static_cast<double>(frames.size());
}

std::array<std::pair<int, int>, kCrossPairs> cross_pairs(const motion::Skeleton& sk) {
  return {{{sk.root, sk.root},
           {sk.l_wrist, sk.l_wrist},
           {sk.l_wrist, sk.r_wrist},
           {sk.r_wrist, sk.l_wrist},
           {sk.r_wrist, sk.r_wrist},
           {sk.root, sk.l_wrist},
           {sk.root, sk.r_wrist},
           {sk.l_wrist, sk.root},
           {sk.r_wrist, sk.root}}};
}

Eigen::VectorXd crossdist_features(const motion::DuetSequence& seq) {
  const int T = seq.length();
  if (T == 0 || static_cast<int>(seq.follower.size()) != T) fail(ErrorCode::kInvalidArgument, "cross-distance features need equal, non-empty tracks");
  const auto pairs = cross_pairs(seq.skeleton);
  Mat d(T, kCrossPairs);
  for (int t = 0; t < T; ++t) {
    const auto& l = seq.leader[static_cast<std::size_t>(t)].positions;
    const auto& f = seq.follower[static_cast<std::size_t>(t)].positions;
    for (int k = 0; k < kCrossPairs; ++k) {
      d(t, k) = (l.row(pairs[static_cast<std::size_t>(k)].first) - f.row(pairs[static_cast<std::size_t>(k)].second)).norm();
    }
  }
  Eigen::VectorXd out(2 * kCrossPairs);
  out.head(kCrossPairs) = d.colwise().mean().transpose();
  out.tail(kCrossPairs) =
      ((d.rowwise() - out.head(kCrossPairs).transpose()).array().square().colwise().sum() / T).sqrt().transpose();
  return out;
}

namespace {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Gaussian fit(const Mat& x, int dim) {
  const Eigen::Index n = x.rows();
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - g.mean.transpose();
  g.cov = n > 1 ? Eigen::MatrixXd(c.transpose() * c / static_cast<double>(n - 1)) : Eigen::MatrixXd::Zero(dim, dim);
  if (n < dim + 1) {
    const double avg = g.cov.trace() / dim;
    g.cov = (1.0 - kFidShrinkage) * g.cov + kFidShrinkage * avg * Eigen::MatrixXd::Identity(dim, dim);
  }
  return g;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const Mat& a, const Mat& b) {
  if (a.rows() < 1 || b.rows() < 1) fail(ErrorCode::kInvalidArgument, "fid: empty feature set");
  if (a.cols() != b.cols()) fail(ErrorCode::kInvalidArgument, "fid: feature dimensions differ");
  if (!a.allFinite() || !b.allFinite()) fail(ErrorCode::kNumerical, "fid: non-finite features");
  const int d = static_cast<int>(a.cols());
  const Gaussian ga = fit(a, d), gb = fit(b, d);
  const Eigen::MatrixXd sa = psd_sqrt(ga.cov);
  const Eigen::MatrixXd inner = sa * gb.cov * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double v = (ga.mean - gb.mean).squaredNorm() + ga.cov.trace() + gb.cov.trace() - 2.0 * cross;
  return std::max(0.0, v);
}

double diversity(const Mat& set, int pairs, unsigned seed) {
  const Eigen::Index n = set.rows();
  if (n < 2) fail(ErrorCode::kInvalidArgument, "diversity needs at least 2 samples");
  if (pairs < 1) fail(ErrorCode::kInvalidArgument, "diversity needs at least one pair");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  double total = 0;
  int done = 0;
  while (done < pairs) {
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i + 1 < idx.size() && done < pairs; i += 2, ++done) {
      total += (set.row(idx[i]) - set.row(idx[i + 1])).norm();
    }
  }
  return total / pairs;
}

std::vector<double> mean_joint_speed(std::span<const motion::MotionFrame> frames) {
  std::vector<double> s;
  s.reserve(frames.size());
  for (const auto& f : frames) s.push_back(f.velocities.rowwise().norm().mean());
  return s;
}

std::vector<double> beats_from_speed(std::span<const double> speed, double fps) {
  const int T = static_cast<int>(speed.size());
  if (T < 3) fail(ErrorCode::kInvalidArgument, "motion beats need at least 3 frames");
  std::vector<double> sm(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    double acc = 0;
    for (int k = -2; k <= 2; ++k) acc += speed[static_cast<std::size_t>(std::clamp(t + k, 0, T - 1))];
    sm[static_cast<std::size_t>(t)] = acc / 5.0;
  }
  std::vector<double> beats;
  for (int t = 1; t + 1 < T; ++t) {
    const double c = sm[static_cast<std::size_t>(t)];
    if (c < sm[static_cast<std::size_t>(t - 1)] && c <= sm[static_cast<std::size_t>(t + 1)]) beats.push_back(t / fps);
  }
  return beats;
}

std::vector<double> motion_beats(std::span<const motion::MotionFrame> frames, double fps) {
  const auto s = mean_joint_speed(frames);
  return beats_from_speed(s, fps);
}

double beat_kernel_score(std::span<const double> candidate, std::span<const double> reference, double sigma) {
  if (reference.empty()) fail(ErrorCode::kInvalidArgument, "beat score needs at least one reference beat");
  if (!(sigma > 0)) fail(ErrorCode::kInvalidArgument, "beat score needs a positive sigma");
  if (candidate.empty()) return 0.0;
  double total = 0;
  for (double b : reference) {
    double best = std::numeric_limits<double>::infinity();
    for (double m : candidate) best = std::min(best, (b - m) * (b - m));
    total += std::exp(-best / (2.0 * sigma * sigma));
  }
  return total / static_cast<double>(reference.size());
}

double bas(std::span<const double> motion_beats, std::span<const double> music_beats, double sigma) {
  return beat_kernel_score(motion_beats, music_beats, sigma);
}

double bed(std::span<const double> leader_beats, std::span<const double> follower_beats, double sigma) {
  return beat_kernel_score(follower_beats, leader_beats, sigma);
}

void MetricReport::validate() const {
  for (double v : {fid_k, fid_g, fid_cd}) {
    if (!(v >= -1e-6)) fail(ErrorCode::kNumerical, "metric report: negative or non-finite FID");
  }
  for (double v : {div_k, div_g, div_cd}) {
    if (!(v >= 0)) fail(ErrorCode::kNumerical, "metric report: negative or non-finite diversity");
  }
  for (double v : {bed, bas}) {
    if (!(v >= 0 && v <= 1)) fail(ErrorCode::kNumerical, "metric report: beat score outside [0, 1]");
  }
}

nlohmann::json MetricReport::to_json() const {
  return {{"label", label},         {"fid_k", fid_k},   {"fid_g", fid_g},         {"div_k", div_k},
          {"div_g", div_g},         {"fid_cd", fid_cd}, {"div_cd", div_cd},       {"bed", bed},
          {"bas", bas},             {"generated", generated}, {"reference", reference},
          {"bas_samples", bas_samples}, {"config_hash", config_hash}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.label = j.value("label", "");
    r.fid_k = j.at("fid_k");
    r.fid_g = j.at("fid_g");
    r.div_k = j.at("div_k");
    r.div_g = j.at("div_g");
    r.fid_cd = j.at("fid_cd");
    r.div_cd = j.at("div_cd");
    r.bed = j.at("bed");
    r.bas = j.at("bas");
    r.generated = j.at("generated");
    r.reference = j.at("reference");
    r.bas_samples = j.value("bas_samples", 0);
    r.config_hash = j.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("metric report: ") + e.what());
  }
  return r;
}

namespace {

Mat stack(const std::vector<Eigen::VectorXd>& rows) {
  Mat m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

// Standardize both sets with the reference statistics. Reference columns that
// barely vary (a relation the ground truth never shows) keep a floor so one
// such column cannot dominate the distance.
void standardize(Mat& gen, Mat& ref) {
  const Eigen::RowVectorXd mu = ref.colwise().mean();
  Eigen::RowVectorXd sd = ((ref.rowwise() - mu).array().square().colwise().sum() / std::max<Eigen::Index>(1, ref.rows())).sqrt();
  sd = sd.cwiseMax(kStandardizeFloor);
  gen = (gen.rowwise() - mu).array().rowwise() / sd.array();
  ref = (ref.rowwise() - mu).array().rowwise() / sd.array();
}

}  // namespace

MetricReport evaluate(std::span<const motion::DuetSequence> generated, std::span<const motion::DuetSequence> reference,
                      unsigned seed) {
  if (generated.size() < 2 || reference.size() < 2) fail(ErrorCode::kMissingInput, "evaluate: need at least 2 sequences per set");
  std::vector<Eigen::VectorXd> gk, gg, gc, rk, rg, rc;
  MetricReport r;
  double bed_sum = 0, bas_sum = 0;
  int bed_n = 0;
  for (const auto& s : generated) {
    gk.push_back(kinematic_features(s.follower, s.fps));
    gg.push_back(graphical_features(s.follower, s.skeleton));
    gc.push_back(crossdist_features(s));
    const auto lb = motion_beats(s.leader, s.fps);
    const auto fb = motion_beats(s.follower, s.fps);
    const double sigma = kBeatSigmaFrames / s.fps;
    if (!lb.empty()) {
      bed_sum += bed(lb, fb, sigma);
      ++bed_n;
    }
    if (s.beat_times && !s.beat_times->empty()) {
      bas_sum += bas(fb, *s.beat_times, sigma);
      ++r.bas_samples;
    }
  }
  for (const auto& s : reference) {
    rk.push_back(kinematic_features(s.follower, s.fps));
    rg.push_back(graphical_features(s.follower, s.skeleton));
    rc.push_back(crossdist_features(s));
  }
  auto score = [&](const std::vector<Eigen::VectorXd>& g, const std::vector<Eigen::VectorXd>& ref, double& f, double& d) {
    Mat a = stack(g), b = stack(ref);
    standardize(a, b);
    f = fid(a, b);
    d = diversity(a, static_cast<int>(a.rows()), seed);
  };
  score(gk, rk, r.fid_k, r.div_k);
  score(gg, rg, r.fid_g, r.div_g);
  score(gc, rc, r.fid_cd, r.div_cd);
  r.bed = bed_n ? bed_sum / bed_n : 0.0;
  r.bas = r.bas_samples ? bas_sum / r.bas_samples : 0.0;
  r.generated = static_cast<int>(generated.size());
  r.reference = static_cast<int>(reference.size());
  return r;
}

std::string format_table(std::span<const MetricReport> rows) {
  std::ostringstream o;
  o << std::left << std::setw(22) << "" << "| " << std::setw(40) << "Solo" << "| " << std::setw(20) << "Interactive"
    << "| " << "Rhythmic" << "\n";
  o << std::left << std::setw(22) << "method" << "| " << std::right << std::setw(9) << "FID_k" << std::setw(10) << "FID_g"
    << std::setw(10) << "Div_k" << std::setw(10) << "Div_g" << " | " << std::setw(9) << "FID_cd" << std::setw(10) << "Div_cd"
    << " | " << std::setw(8) << "BED" << std::setw(8) << "BAS" << "\n";
  o << std::string(22, '-') << "+" << std::string(41, '-') << "+" << std::string(21, '-') << "+" << std::string(17, '-') << "\n";
  o << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    o << std::left << std::setw(22) << r.label.substr(0, 21) << "| " << std::right << std::setw(9) << r.fid_k
      << std::setw(10) << r.fid_g << std::setw(10) << r.div_k << std::setw(10) << r.div_g << " | " << std::setw(9)
      << r.fid_cd << std::setw(10) << r.div_cd << " | " << std::setw(8) << r.bed << std::setw(8) << r.bas << "\n";
  }
  return o.str();
}

std::string format_csv(std::span<const MetricReport> rows) {
  std::ostringstream o;
  o << "label,metric,value\n" << std::setprecision(10);
  for (const auto& r : rows) {
    const std::pair<const char*, double> vals[] = {{"FID_k", r.fid_k},   {"FID_g", r.fid_g},   {"Div_k", r.div_k},
                                                   {"Div_g", r.div_g},   {"FID_cd", r.fid_cd}, {"Div_cd", r.div_cd},
                                                   {"BED", r.bed},       {"BAS", r.bas}};
    for (const auto& [name, v] : vals) o << r.label << "," << name << "," << v << "\n";
  }
  return o.str();
}

}  // namespace duet::metrics
