#include "common/error.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "vq/tokenizer.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace duet;
using namespace duet::vq;
using duet::nn::Graph;
using duet::nn::Var;

namespace {

// Independent nearest-neighbour oracle: explicit loops, lowest index on ties.
int brute_nearest(const Mat& codes, const Eigen::VectorXd& z) {
  int best = -1;
  double best_d = 0;
  for (Eigen::Index k = 0; k < codes.rows(); ++k) {
    double d = 0;
    for (Eigen::Index j = 0; j < codes.cols(); ++j) d += (codes(k, j) - z(j)) * (codes(k, j) - z(j));
    if (best < 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

Codebook two_codes() {
  Codebook cb;
  cb.codes.resize(2, 2);
  cb.codes << 0, 0, 1, 1;
  cb.cluster_size = Eigen::VectorXd::Ones(2);
  cb.ema_sum = cb.codes;
  cb.usage.assign(2, 0);
  return cb;
}

VqVaeConfig tiny_config() {
  VqVaeConfig c;
  c.input_dim = 3;
  c.latent_dim = 3;
  c.codebook_size = 4;
  c.window = 5;
  c.hidden = 4;
  c.layers = 2;
  c.velocity_channels = {0, 1, 2};
  return c;
}

Mat random_window(std::mt19937_64& rng, int t, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(t, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<Mat> synthetic_motion_windows(int count, unsigned seed) {
  std::mt19937_64 rng(seed);
  const auto sk = motion::Skeleton::smpl22();
  std::vector<Mat> out;
  while (static_cast<int>(out.size()) < count) {
    auto track = motion::compute_features(fixtures::random_track(sk, 20, rng), sk);
    out.push_back(motion_window_matrix(motion_windows(track, sk, 20)[0].frames));
  }
  return out;
}

}  // namespace

TEST_CASE("quantize picks the nearest code with lowest-index ties") {
  const Codebook cb = two_codes();
  // squared distances 0.05 and 1.45
  CHECK(quantize(cb, Eigen::Vector2d(0.1, 0.2)).index == 0);
  CHECK(quantize(cb, Eigen::Vector2d(0.5, 0.5)).index == 0);
  CHECK(quantize(cb, Eigen::Vector2d(0.9, 0.6)).index == 1);
  CHECK(quantize(cb, Eigen::Vector2d(0.9, 0.6)).code == Eigen::Vector2d(1, 1));

  Codebook one;
  one.codes = Mat::Constant(1, 2, 7.0);
  CHECK(quantize(one, Eigen::Vector2d(-100, 3)).index == 0);

  Codebook empty;
  CHECK_THROWS_AS((void)quantize(empty, Eigen::Vector2d(0, 0)), duet::Error);
}

TEST_CASE("quantize matches exhaustive search on 10^4 random queries") {
  std::mt19937_64 rng(11);
  Codebook cb = Codebook::uniform(64, 8, rng);
  std::normal_distribution<double> n(0.0, 1.0 / 64);
  int mismatches = 0;
  for (int q = 0; q < 10000; ++q) {
    Eigen::VectorXd z(8);
    for (int j = 0; j < 8; ++j) z(j) = n(rng);
    if (q % 100 == 0) z = cb.codes.row(q % 64).transpose();  // exact hits
    mismatches += quantize(cb, z).index != brute_nearest(cb.codes, z);
  }
  CHECK(mismatches == 0);
}

TEST_CASE("EMA update follows the closed-form recurrences") {
  Codebook cb = two_codes();
  const Mat z = (Mat(1, 2) << 2.0, 4.0).finished();
  const std::vector<int> a{0};
  ema_update(cb, z, a, 0.95);
  CHECK(cb.cluster_size(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cb.cluster_size(1) == doctest::Approx(0.95).epsilon(1e-15));
  // sums: 0.95*c + 0.05*z
  CHECK(cb.ema_sum(0, 0) == doctest::Approx(0.1));
  CHECK(cb.ema_sum(0, 1) == doctest::Approx(0.2));
  // Laplace smoothing: (N + eps) / (n + K eps) * n
  const double n = 1.95, eps = 1e-5;
  CHECK(cb.codes(0, 1) == doctest::Approx(0.2 / ((1.0 + eps) / (n + 2 * eps) * n)).epsilon(1e-12));
  CHECK(cb.codes(1, 0) == doctest::Approx(0.95 / ((0.95 + eps) / (n + 2 * eps) * n)).epsilon(1e-12));
  CHECK(cb.usage[0] == 1);

  Codebook fresh = two_codes();
  fresh.cluster_size(0) = 0.0;
  ema_update(fresh, z, a, 0.95);
  CHECK(fresh.cluster_size(0) == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("EMA never produces NaN and keeps cluster sizes non-negative") {
  std::mt19937_64 rng(5);
  Codebook cb = Codebook::uniform(8, 3, rng);
  std::uniform_int_distribution<int> pick(0, 7);
  for (int step = 0; step < 2000; ++step) {
    const int n = step % 7;  // includes empty batches
    Mat z = random_window(rng, n, 3) * (step % 3 == 0 ? 1e6 : 1e-6);
    std::vector<int> a(static_cast<std::size_t>(n));
    for (int& x : a) x = step % 5 == 0 ? 0 : pick(rng);
    ema_update(cb, z, a, 0.95);
    REQUIRE(cb.codes.allFinite());
    REQUIRE(cb.cluster_size.minCoeff() >= 0.0);
  }
  const std::vector<int> bad{9};
  CHECK_THROWS_AS(ema_update(cb, Mat::Zero(1, 3), bad, 0.95), duet::Error);
}

TEST_CASE("dead-code reset fires exactly below the threshold") {
  std::mt19937_64 rng(3);
  Codebook cb = two_codes();
  const Mat latent = (Mat(1, 2) << 0.6, 0.7).finished();

  cb.cluster_size << 1.0, 1.0;
  CHECK(reset_dead_codes(cb, latent, 1.0, rng) == 0);
  CHECK(cb.codes == two_codes().codes);

  cb.cluster_size << 1.0, std::nextafter(1.0, 0.0);
  CHECK(reset_dead_codes(cb, latent, 1.0, rng) == 1);
  CHECK(cb.codes.row(1) == latent.row(0));
  CHECK(cb.codes.row(0) == two_codes().codes.row(0));
  CHECK(cb.cluster_size(1) == 1.0);
  CHECK(cb.ema_sum.row(1) == latent.row(0));
  CHECK(quantize(cb, latent.row(0).transpose()).index == 1);

  CHECK_THROWS_AS(reset_dead_codes(cb, Mat(0, 2), 1.0, rng), duet::Error);
}

TEST_CASE("encoder is deterministic and maps zero input to zero with zero recurrent weights") {
  std::mt19937_64 rng(2);
  VqVae m(tiny_config(), rng);
  const Mat w = random_window(rng, 5, 3);
  CHECK(m.encode(w) == m.encode(w));
  for (nn::Param* p : m.params()) {
    if (p->name.rfind("enc.", 0) == 0 && p->name.find(".w_h") != std::string::npos) p->value.setZero();
  }
  CHECK(m.encode(Mat::Zero(5, 3)).isZero(0.0));
  CHECK_THROWS_AS((void)m.encode(Mat::Zero(4, 3)), duet::Error);
}

TEST_CASE("decode is bit-identical across calls and rejects bad indices") {
  std::mt19937_64 rng(8);
  VqVae m(tiny_config(), rng);
  const Mat a = m.decode(2);
  const Mat b = m.decode(2);
  CHECK(a.rows() == 5);
  CHECK(a.cols() == 3);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
  CHECK_THROWS_AS((void)m.decode(4), duet::Error);
  CHECK_THROWS_AS((void)m.decode(-1), duet::Error);
}

TEST_CASE("encoder/decoder gradients and the straight-through estimator") {
  std::mt19937_64 rng(21);
  VqVae m(tiny_config(), rng);
  std::vector<Mat> batch{random_window(rng, 5, 3), random_window(rng, 5, 3), random_window(rng, 5, 3)};
  // Spread the codes so the batch uses more than one entry.
  m.codebook().codes = random_window(rng, 4, 3);
  const Mat x = stack_windows(batch);
  const int B = 3;

  Mat codes0, z0;
  {
    Graph g(false);
    z0 = g.value(m.encode_graph(g, g.constant(x), B));
    codes0.resize(B, 3);
    for (int b = 0; b < B; ++b) codes0.row(b) = m.codebook().codes.row(quantize(m.codebook(), z0.row(b).transpose()).index);
  }
  // Tape gradient through straight_through with the codes frozen.
  auto backward = [&] {
    Graph g;
    Var xv = g.constant(x);
    Var z = m.encode_graph(g, xv, B);
    Var zq = g.straight_through(z, codes0);
    g.backward(m.loss_graph(g, xv, z, zq, codes0, B).total);
  };
  // Surrogate: quantization replaced by identity plus a frozen offset.
  auto surrogate = [&] {
    Graph g(false);
    Var xv = g.constant(x);
    Var z = m.encode_graph(g, xv, B);
    Var zq = g.add(z, g.constant(codes0 - z0));
    return g.scalar(m.loss_graph(g, xv, z, zq, codes0, B).total);
  };
  auto res = fixtures::gradcheck(m.params(), surrogate, backward, 64, 1e-4);
  CHECK_MESSAGE(res.max_rel < 1e-4, res.worst << " " << res.max_rel);

  // Reconstruction-only gradient check with identity quantization.
  auto rec_back = [&] {
    Graph g;
    Var xv = g.constant(x);
    Var z = m.encode_graph(g, xv, B);
    g.backward(g.mse(m.decode_graph(g, z, B), x));
  };
  auto rec = [&] {
    Graph g(false);
    Var xv = g.constant(x);
    Var z = m.encode_graph(g, xv, B);
    return g.scalar(g.mse(m.decode_graph(g, z, B), x));
  };
  auto r2 = fixtures::gradcheck(m.params(), rec, rec_back, 64, 1e-4);
  CHECK_MESSAGE(r2.max_rel < 1e-4, r2.worst << " " << r2.max_rel);
}

TEST_CASE("perfect reconstruction with z equal to its code gives zero loss") {
  std::mt19937_64 rng(4);
  VqVae m(tiny_config(), rng);
  Graph g(false);
  const Mat z = random_window(rng, 1, 3);
  Var zv = g.constant(z);
  Var y = m.decode_graph(g, zv, 1);
  const Mat x = g.value(y);
  LossVars l = m.loss_graph(g, g.constant(x), zv, zv, z, 1);
  CHECK(g.scalar(l.total) == 0.0);
}

TEST_CASE("single-window training loss is non-increasing within 5%") {
  std::mt19937_64 rng(6);
  VqVaeConfig c = tiny_config();
  c.input_dim = 12;
  c.window = 20;
  c.hidden = 16;
  c.latent_dim = 8;
  c.learning_rate = 1e-3;
  c.velocity_channels = {0, 1, 2, 3, 4, 5};
  VqVae m(c, rng);
  const std::vector<Mat> data{random_window(rng, 20, 12)};
  m.fit_normalization(data);
  VqTrainer tr(m);
  double best = std::numeric_limits<double>::infinity();
  double first = 0, last = 0;
  for (int s = 0; s < 200; ++s) {
    const double l = tr.step(data).total;
    if (s == 0) first = l;
    last = l;
    CHECK(l <= 1.05 * best);
    best = std::min(best, l);
  }
  CHECK(last < first);
}

TEST_CASE("overfitting four motion windows drives reconstruction below 1e-3 within 2000 steps") {
  std::mt19937_64 rng(12);
  VqVaeConfig c;
  c.input_dim = motion::feature_dim(22);
  c.latent_dim = 64;
  c.codebook_size = 16;
  c.hidden = 128;
  c.learning_rate = 2e-3;
  c.batch_size = 4;
  c.epochs = 2000;
  c.warmup_epochs = 5;
  c.lr_gamma = 0.05;
  c.velocity_channels = motion_velocity_channels(22);
  VqVae m(c, rng);
  const auto data = synthetic_motion_windows(4, 99);
  VqTrainer tr(m);
  auto hist = tr.fit(data, rng);
  CHECK(tr.steps() == 2000);
  const VqLosses final = m.evaluate(data);
  MESSAGE("reconstruction after 2000 steps: " << final.reconstruction);
  CHECK(final.reconstruction < 1e-3);
}

TEST_CASE("NaN inputs abort training with diagnostics") {
  std::mt19937_64 rng(1);
  VqVae m(tiny_config(), rng);
  VqTrainer tr(m);
  std::vector<Mat> bad{Mat::Constant(5, 3, std::nan(""))};
  try {
    tr.step(bad);
    FAIL("expected an error");
  } catch (const duet::Error& e) {
    CHECK(e.code() == duet::ErrorCode::kNumerical);
    CHECK(std::string(e.what()).find("reconstruction") != std::string::npos);
  }
}

TEST_CASE("relation window channels round-trip headings near +-pi") {
  std::vector<motion::RelationFrame> r{{0.5, 1.0, 3.1}, {0.4, -1.0, -3.1}, {0.0, 0.0, 0.0}, {1, 2, M_PI}};
  const Mat m = relation_window_matrix(r);
  CHECK(m.cols() == 4);
  const auto back = relation_frames_from_matrix(m);
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(back[i].x == r[i].x);
    CHECK(back[i].z == r[i].z);
    CHECK(std::abs(motion::wrap_angle(back[i].theta - r[i].theta)) < 1e-12);
  }
}

TEST_CASE("tokenize/detokenize lengths, ranges and checkpoint round trip") {
  std::mt19937_64 rng(31);
  const auto sk = motion::Skeleton::smpl22();
  VqVaeConfig c;
  c.input_dim = motion::feature_dim(22);
  c.latent_dim = 16;
  c.codebook_size = 8;
  c.hidden = 8;
  c.velocity_channels = motion_velocity_channels(22);
  VqVae m(c, rng);
  auto seq = fixtures::random_duet(sk, 70, rng);
  const std::vector<motion::DuetSequence> seqs{seq};
  m.fit_normalization(motion_training_windows(seqs, 20));

  const auto tok = tokenize_motion(m, std::span(seq.leader).first(60), sk);
  CHECK(tok.indices.size() == 3);
  CHECK(tok.starts == std::vector<int>{0, 20, 40});
  const auto full = tokenize_motion(m, seq.leader, sk);
  CHECK(full.indices.size() == 3);
  for (int k : full.indices) CHECK((k >= 0 && k < 8));
  const auto frames = detokenize_motion(m, full, 22);
  CHECK(frames.size() == 60);
  for (const auto& f : frames) {
    for (auto cflag : f.contacts) CHECK((cflag == 0 || cflag == 1));
  }
  CHECK_THROWS_AS(tokenize_motion(m, std::span(seq.leader).first(19), sk), duet::Error);

  VqVaeConfig rc = tiny_config();
  rc.input_dim = kRelationChannels;
  rc.window = 20;
  rc.velocity_channels = relation_velocity_channels();
  VqVae rel(rc, rng);
  const auto rt = tokenize_relation(rel, seq.relation);
  CHECK(rt.indices.size() == 3);
  CHECK(detokenize_relation(rel, rt.indices).size() == 60);

  const auto path = std::filesystem::temp_directory_path() / "duet_test_vq.dckp";
  save_vqvae(m, path.string(), {{"epochs_run", 0}});
  nlohmann::json meta;
  VqVae loaded = load_vqvae(path.string(), &meta);
  CHECK(meta.at("epochs_run") == 0);
  CHECK(loaded.config().to_json() == m.config().to_json());
  // Parameters are stored as float32; a second save/load cycle is exact.
  save_vqvae(loaded, path.string(), meta);
  VqVae again = load_vqvae(path.string());
  CHECK(again.decode(3) == loaded.decode(3));
  CHECK((loaded.decode(3) - m.decode(3)).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(again.codebook().codes == loaded.codebook().codes);
  std::filesystem::remove(path);
}

TEST_CASE("token corpus file round trip and format errors") {
  const auto path = std::filesystem::temp_directory_path() / "duet_test_tokens.tsv";
  std::vector<TokenRecord> recs{{"seq_000", "leader", {1, 2, 3}}, {"seq_000", "audio", {}}, {"seq 1", "relation", {511}}};
  write_token_corpus(path, recs);
  const auto back = read_token_corpus(path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].sequence == recs[i].sequence);
    CHECK(back[i].role == recs[i].role);
    CHECK(back[i].tokens == recs[i].tokens);
  }
  {
    std::ofstream os(path);
    os << "a\tleader\t1 x2\n";
  }
  CHECK_THROWS_AS(read_token_corpus(path), duet::Error);
  std::filesystem::remove(path);
}
