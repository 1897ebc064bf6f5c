#include "gradcheck.hpp"
#include "common/error.hpp"
#include "nn/layers.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using duet::nn::AdamW;
using duet::nn::AdamWConfig;
using duet::nn::Graph;
using duet::nn::Mat;
using duet::nn::Param;
using duet::nn::Var;

namespace {

Mat rand_mat(std::mt19937_64& rng, int r, int c, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("elementwise and matrix ops backpropagate like finite differences") {
  std::mt19937_64 rng(1);
  Param a("a", rand_mat(rng, 4, 5)), b("b", rand_mat(rng, 5, 3)), c("c", rand_mat(rng, 4, 3)),
      row("row", rand_mat(rng, 1, 3)), d("d", rand_mat(rng, 6, 3));
  const Mat target = rand_mat(rng, 4, 6);
  auto build = [&](Graph& g) {
    Var ab = g.matmul(g.param(a), g.param(b));
    Var x = g.add_row(g.add(ab, g.mul(g.param(c), g.sigmoid(ab))), g.param(row));
    Var y = g.sub(g.tanh(x), g.scale(g.gelu(x), 0.3));
    Var z = g.matmul_nt(y, g.param(d));  // 4 x 6
    Var zt = g.transpose(g.transpose(z));
    return g.add(g.mse(zt, target), g.mean(g.mul(zt, zt)));
  };
  auto res = fixtures::gradcheck({&a, &b, &c, &row, &d}, [&] { Graph g(false); return g.scalar(build(g)); },
                                 [&] { Graph g; g.backward(build(g)); });
  CHECK_MESSAGE(res.max_rel < 1e-6, res.worst);
}

TEST_CASE("softmax, layer norm, slicing and concatenation gradients") {
  std::mt19937_64 rng(2);
  Param a("a", rand_mat(rng, 5, 6)), gamma("gamma", rand_mat(rng, 1, 6)), beta("beta", rand_mat(rng, 1, 6)),
      e("e", rand_mat(rng, 5, 2));
  const Mat w = rand_mat(rng, 5, 8);
  auto build = [&](Graph& g) {
    Var ln = g.layer_norm(g.param(a), g.param(gamma), g.param(beta));
    Var sm = g.softmax_rows(g.slice_cols(ln, 1, 5), true);
    Var full = g.softmax_rows(ln);
    const std::array<Var, 3> cols{sm, g.param(e), g.slice_cols(full, 0, 1)};
    Var cat = g.concat_cols(cols);  // 5 x 8
    const std::array<Var, 2> rows{g.slice_rows(cat, 3, 2), g.slice_rows(cat, 0, 3)};
    Var r = g.concat_rows(rows);
    return g.sum(g.mul(r, g.constant(w)));
  };
  auto res = fixtures::gradcheck({&a, &gamma, &beta, &e}, [&] { Graph g(false); return g.scalar(build(g)); },
                                 [&] { Graph g; g.backward(build(g)); });
  CHECK_MESSAGE(res.max_rel < 1e-6, res.worst);
}

TEST_CASE("gather, cross entropy and GRU cell gradients") {
  std::mt19937_64 rng(3);
  Param table("table", rand_mat(rng, 7, 4)), wx("wx", rand_mat(rng, 4, 9, 0.5)), wh("wh", rand_mat(rng, 3, 9, 0.5)),
      bh("bh", rand_mat(rng, 1, 9)), h0("h0", rand_mat(rng, 5, 3)), out("out", rand_mat(rng, 3, 7));
  const std::vector<int> rows{0, 3, 3, 6, 1};
  const std::vector<int> targets{2, 0, 6, 1, 5};
  const std::vector<double> weights{1.0, 0.0, 2.0, 0.5, 1.0};
  auto build = [&](Graph& g) {
    Var x = g.gather_rows(g.param(table), rows);
    Var h = g.gru_cell(g.matmul(x, g.param(wx)), g.param(h0), g.param(wh), g.param(bh));
    h = g.gru_cell(g.matmul(x, g.param(wx)), h, g.param(wh), g.param(bh));
    return g.cross_entropy(g.matmul(h, g.param(out)), targets, weights);
  };
  auto res = fixtures::gradcheck({&table, &wx, &wh, &bh, &h0, &out}, [&] { Graph g(false); return g.scalar(build(g)); },
                                 [&] { Graph g; g.backward(build(g)); });
  CHECK_MESSAGE(res.max_rel < 1e-6, res.worst);
}

TEST_CASE("relu and dropout gradients with a fixed mask") {
  std::mt19937_64 rng(4);
  Param a("a", rand_mat(rng, 6, 6));
  auto build = [&](Graph& g) {
    std::mt19937_64 mask_rng(99);
    return g.sum(g.mul(g.dropout(g.relu(g.param(a)), 0.3, mask_rng), g.param(a)));
  };
  auto res = fixtures::gradcheck({&a}, [&] { Graph g(false); return g.scalar(build(g)); },
                                 [&] { Graph g; g.backward(build(g)); });
  CHECK(res.max_rel < 1e-6);
}

TEST_CASE("straight-through passes the upstream gradient unchanged") {
  Param a("a", Mat::Constant(2, 2, 0.3));
  Graph g;
  Var st = g.straight_through(g.param(a), Mat::Constant(2, 2, 5.0));
  CHECK(g.value(st)(1, 1) == 5.0);
  Var loss = g.sum(g.scale(st, 3.0));
  g.backward(loss);
  CHECK(a.grad.isApprox(Mat::Constant(2, 2, 3.0)));
}

TEST_CASE("cross entropy with zero weights contributes nothing") {
  Graph g;
  Var z = g.constant(Mat::Random(3, 5));
  const std::vector<int> t{1, 2, 3};
  const std::vector<double> w{0.0, 0.0, 0.0};
  CHECK(g.scalar(g.cross_entropy(z, t, w)) == 0.0);
}

TEST_CASE("AdamW first step, clipping and frozen rows") {
  Param p("p", Mat::Zero(3, 2));
  p.frozen_rows = {false, true, false};
  AdamW opt({&p}, AdamWConfig{.lr = 0.1, .clip_norm = 0.0});
  p.grad << 1.0, -2.0, 3.0, 4.0, -0.5, 0.25;
  opt.step();
  // First bias-corrected step moves by lr * g / (|g| + eps).
  CHECK(p.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.value(0, 1) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p.value(1, 0) == 0.0);
  CHECK(p.value(1, 1) == 0.0);
  CHECK(p.value(2, 0) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p.grad.isZero());

  Param q("q", Mat::Zero(1, 2));
  AdamW clip({&q}, AdamWConfig{.lr = 0.1, .clip_norm = 1.0});
  q.grad << 30.0, 40.0;
  CHECK(clip.step() == doctest::Approx(50.0));

  Param r("r", Mat::Zero(1, 1));
  AdamW bad({&r}, AdamWConfig{});
  r.grad(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.step(), duet::Error);
}
