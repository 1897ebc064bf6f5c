#include "common/error.hpp"
#include "fixtures.hpp"
#include "metrics/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace duet;
using namespace duet::metrics;
using duet::motion::MotionFrame;

namespace {

const motion::Skeleton& sk() {
  static const motion::Skeleton s = motion::Skeleton::smpl22();
  return s;
}

std::vector<MotionFrame> frames_of(const std::vector<motion::JointMat>& p) { return motion::compute_features(p, sk()); }

std::vector<MotionFrame> held(const motion::JointMat& pose, int n) {
  return frames_of(std::vector<motion::JointMat>(static_cast<std::size_t>(n), pose));
}

Mat randn(int r, int c, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> n(mean, sd);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

motion::DuetSequence transformed(const motion::DuetSequence& s, const motion::RigidTransform2D& tr) {
  auto l = motion::positions_of(motion::transform_frames(s.leader, tr));
  auto f = motion::positions_of(motion::transform_frames(s.follower, tr));
  return motion::make_duet(l, f, s.skeleton);
}

}  // namespace

TEST_CASE("kinematic features: layout, static zero and velocity scaling") {
  std::mt19937_64 rng(1);
  const auto still = held(fixtures::posed(sk(), 1, 2, 0.3), 10);
  const auto f0 = kinematic_features(still);
  CHECK(f0.size() == 3 * sk().joint_count());
  CHECK(f0.cwiseAbs().maxCoeff() == 0.0);
  auto frames = frames_of(fixtures::random_track(sk(), 40, rng));
  const auto base = kinematic_features(frames);
  for (auto& f : frames) f.velocities *= 2.0;
  const auto doubled = kinematic_features(frames);
  const int N = sk().joint_count();
  for (int j = 0; j < N; ++j) {
    CHECK(std::abs(doubled(j) - 2.0 * base(j)) <= 1e-12 * std::max(1.0, base(j)));
    CHECK(std::abs(doubled(N + j) - 4.0 * base(N + j)) <= 1e-12 * std::max(1.0, base(N + j)));
    CHECK(std::abs(doubled(2 * N + j) - 2.0 * base(2 * N + j)) <= 1e-12 * std::max(1.0, base(2 * N + j)));
  }
  CHECK_THROWS_AS(kinematic_features(std::span(frames).first(1)), Error);
}

TEST_CASE("graphical features on held poses") {
  const auto names = graphical_feature_names();
  const auto tpose = held(fixtures::posed(sk(), 0, 0, 0.0), 8);
  const auto g = graphical_features(tpose, sk());
  REQUIRE(g.size() == kGraphicalDim);
  CHECK(names[0] == "left_wrist_above_head");
  CHECK(g(0) == 0.0);
  CHECK(g(1) == 0.0);
  CHECK(g(12) == 0.0);
  for (int k = 0; k < kGraphicalDim; ++k) {
    CHECK(g(k) >= 0.0);
    CHECK(g(k) <= 1.0);
  }
  auto up = fixtures::posed(sk(), 0, 0, 0.0);
  up.row(sk().l_wrist) = up.row(sk().head) + Eigen::RowVector3d(0.0, 0.5, 0.0);
  const auto gu = graphical_features(held(up, 8), sk());
  CHECK(gu(0) == 1.0);
  CHECK(gu(2) == 1.0);
  CHECK(gu(1) == 0.0);
}

TEST_CASE("graphical and cross-distance features are invariant under a common rigid motion") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto seq = fixtures::random_duet(sk(), 50, rng);
    const motion::RigidTransform2D tr{u(rng), u(rng), u(rng)};
    const auto moved = transformed(seq, tr);
    CHECK((graphical_features(seq.leader, sk()) - graphical_features(moved.leader, sk())).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((crossdist_features(seq) - crossdist_features(moved)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("cross-distance features on constructed duets") {
  const auto pose = fixtures::posed(sk(), 0, 0, 0.0);
  std::vector<motion::JointMat> a(10, pose);
  const auto same = motion::make_duet(a, a, sk());
  const auto f = crossdist_features(same);
  REQUIRE(f.size() == 2 * kCrossPairs);
  CHECK(f(0) == 0.0);
  CHECK(f(1) == 0.0);
  CHECK(f(4) == 0.0);
  std::vector<motion::JointMat> b(10, fixtures::posed(sk(), 1.0, 0, 0.0));
  const auto off = crossdist_features(motion::make_duet(a, b, sk()));
  CHECK(std::abs(off(0) - 1.0) <= 1e-12);
  CHECK(off(kCrossPairs) <= 1e-12);
}

TEST_CASE("FID closed forms and properties") {
  std::mt19937_64 rng(3);
  const Mat a = randn(400, 3, rng);
  CHECK(fid(a, a) < 1e-8);
  SUBCASE("one-dimensional Gaussian Frechet distance") {
    const Mat x = randn(5000, 1, rng, 0.0, 1.0), y = randn(5000, 1, rng, 1.0, 1.0);
    auto stats = [](const Mat& m) {
      const double mu = m.mean();
      return std::pair{mu, std::sqrt((m.array() - mu).square().sum() / static_cast<double>(m.rows() - 1))};
    };
    const auto [ma, sa] = stats(x);
    const auto [mb, sb] = stats(y);
    const double closed = (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb);
    CHECK(std::abs(fid(x, y) - closed) <= 1e-6);
    CHECK(std::abs(fid(x, y) - 1.0) <= 0.1);
  }
  SUBCASE("mean shift with identical covariance") {
    const Eigen::RowVector3d m(0.5, -1.0, 2.0);
    const Mat b = a.rowwise() + m;
    CHECK(std::abs(fid(a, b) - m.squaredNorm()) <= 1e-8);
    CHECK(std::abs(fid(a, b) - fid(b, a)) <= 1e-9);
    double prev = -1;
    for (double s = 0.0; s <= 3.0; s += 0.25) {
      const double v = fid(a, a.rowwise() + s * m);
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
  }
  SUBCASE("symmetry on unequal covariances") {
    const Mat b = randn(300, 3, rng, 0.3, 2.0);
    CHECK(std::abs(fid(a, b) - fid(b, a)) <= 1e-9 * fid(a, b));
  }
  SUBCASE("shrinkage with too few samples") {
    const Mat small = randn(4, 10, rng);
    CHECK(fid(small, small) < 1e-8);
    CHECK(std::isfinite(fid(small, randn(5, 10, rng))));
  }
  SUBCASE("rejections") {
    Mat bad = a;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(fid(bad, a), Error);
    CHECK_THROWS_AS(fid(a, Mat::Zero(3, 2)), Error);
  }
}

TEST_CASE("diversity") {
  std::mt19937_64 rng(4);
  CHECK(diversity(Mat::Ones(6, 3), 3, 1) == 0.0);
  Mat two(2, 2);
  two << 0, 0, 3, 4;
  CHECK(diversity(two, 1, 9) == 5.0);
  CHECK(diversity(two, 7, 9) == 5.0);
  const Mat s = randn(20, 4, rng);
  CHECK(diversity(s, 10, 42) == diversity(s, 10, 42));
  CHECK(diversity(s, 25, 42) > 0.0);
  CHECK_THROWS_AS(diversity(Mat::Zero(1, 3), 1, 0), Error);
}

TEST_CASE("motion beats are smoothed speed minima") {
  CHECK(beats_from_speed(std::vector<double>(60, 0.7)).empty());
  std::vector<double> speed(101);
  for (int t = 0; t <= 100; ++t) speed[static_cast<std::size_t>(t)] = std::abs(std::sin(std::numbers::pi * t / 10.0));
  const auto beats = beats_from_speed(speed, 20.0);
  REQUIRE(beats.size() == 9);
  for (std::size_t i = 0; i < beats.size(); ++i) CHECK(std::abs(beats[i] - 0.5 * static_cast<double>(i + 1)) <= 1e-12);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> noisy(80);
  for (double& v : noisy) v = u(rng);
  auto shifted = noisy;
  for (double& v : shifted) v += 0.5;
  CHECK(beats_from_speed(noisy) == beats_from_speed(shifted));
  CHECK_THROWS_AS(beats_from_speed(std::vector<double>{1.0, 2.0}), Error);
  CHECK(motion_beats(held(fixtures::posed(sk(), 0, 0, 0), 30)).empty());
}

TEST_CASE("beat alignment and echo scores") {
  const double sigma = 3.0 / 20.0;
  const std::vector<double> music{0.5, 1.0, 1.5, 2.0};
  CHECK(bas(music, music, sigma) == 1.0);
  CHECK(bas({}, music, sigma) == 0.0);
  const std::vector<double> one{1.0}, off{1.0 + sigma};
  CHECK(std::abs(bas(off, one, sigma) - std::exp(-0.5)) <= 1e-12);
  CHECK(std::abs(bas(off, one, sigma) - 0.6065306597) <= 1e-9);
  CHECK(bed(music, music, sigma) == 1.0);
  CHECK(bed(music, {}, sigma) == 0.0);
  const double d = 0.1;
  const std::vector<double> leader{1.0, 2.0}, follower{1.0 + d, 2.0 - d};
  CHECK(std::abs(bed(leader, follower, sigma) - std::exp(-d * d / (2 * sigma * sigma))) <= 1e-12);
  CHECK_THROWS_AS(bas(music, {}, sigma), Error);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(5), b(3);
    for (double& x : a) x = u(rng);
    for (double& x : b) x = u(rng);
    const double v = bas(a, b, sigma);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("evaluation report on generated sets") {
  std::mt19937_64 rng(7);
  std::vector<motion::DuetSequence> ref, gen;
  for (int i = 0; i < 6; ++i) {
    ref.push_back(fixtures::random_duet(sk(), 40, rng));
    ref.back().beat_times = std::vector<double>{0.5, 1.0, 1.5};
    gen.push_back(fixtures::random_duet(sk(), 40, rng));
    gen.back().beat_times = std::vector<double>{0.5, 1.0, 1.5};
  }
  const MetricReport self = evaluate(ref, ref, 1);
  CHECK(self.fid_k < 1e-8);
  CHECK(self.fid_g < 1e-8);
  CHECK(self.fid_cd < 1e-8);
  MetricReport r = evaluate(gen, ref, 1);
  CHECK_NOTHROW(r.validate());
  CHECK(r.fid_k > 0.0);
  CHECK(r.div_cd > 0.0);
  CHECK(r.generated == 6);
  CHECK(r.bas_samples == 6);
  r.label = "full";
  r.config_hash = "abc";
  const auto back = MetricReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  const std::vector<MetricReport> rows{r, self};
  const std::string table = format_table(rows);
  CHECK(table.find("FID_cd") != std::string::npos);
  CHECK(table.find("Interactive") != std::string::npos);
  const std::string csv = format_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 8);
  MetricReport broken = r;
  broken.bas = 1.5;
  CHECK_THROWS_AS(broken.validate(), Error);
}
