#include "nn/graph.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace duet::nn {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ")");
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var Graph::push(Mat value, bool needs_grad, std::function<void(Graph&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && grad_enabled_;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Graph::accum(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::param(const Param& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = grad_enabled_ && p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Graph::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Mat out;
  out.noalias() = value(a) * value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
    const Mat& go = g.nodes_[self].grad;
    if (g.needs(a)) g.accum(a).noalias() += go * g.value(b).transpose();
    if (g.needs(b)) g.accum(b).noalias() += g.value(a).transpose() * go;
  });
}

Var Graph::matmul_nt(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Mat out;
  out.noalias() = value(a) * value(b).transpose();
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
    const Mat& go = g.nodes_[self].grad;
    if (g.needs(a)) g.accum(a).noalias() += go * g.value(b);
    if (g.needs(b)) g.accum(b).noalias() += go.transpose() * g.value(a);
  });
}

Var Graph::transpose(Var a) {
  Mat out = value(a).transpose();
  return push(std::move(out), needs(a), [a](Graph& g, int self) {
    g.accum(a).noalias() += g.nodes_[self].grad.transpose();
  });
}

Var Graph::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  Mat out = value(a) + value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
    const Mat& go = g.nodes_[self].grad;
    if (g.needs(a)) g.accum(a) += go;
    if (g.needs(b)) g.accum(b) += go;
  });
}

Var Graph::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  Mat out = value(a) - value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
    const Mat& go = g.nodes_[self].grad;
    if (g.needs(a)) g.accum(a) += go;
    if (g.needs(b)) g.accum(b) -= go;
  });
}

Var Graph::mul(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul");
  Mat out = value(a).cwiseProduct(value(b));
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
    const Mat& go = g.nodes_[self].grad;
    if (g.needs(a)) g.accum(a) += go.cwiseProduct(g.value(b));
    if (g.needs(b)) g.accum(b) += go.cwiseProduct(g.value(a));
  });
}

Var Graph::scale(Var a, double s) {
  Mat out = value(a) * s;
  return push(std::move(out), needs(a), [a, s](Graph& g, int self) { g.accum(a) += g.nodes_[self].grad * s; });
}

Var Graph::add_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw std::invalid_argument("add_row: expected 1 x cols row vector");
  }
  Mat out = value(a).rowwise() + value(row).row(0);
  return push(std::move(out), needs(a) || needs(row), [a, row](Graph& g, int self) {
    const Mat& go = g.nodes_[self].grad;
    if (g.needs(a)) g.accum(a) += go;
    if (g.needs(row)) g.accum(row) += go.colwise().sum();
  });
}

Var Graph::sigmoid(Var a) {
  Mat out = value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return push(std::move(out), needs(a), [a](Graph& g, int self) {
    const Mat& y = g.nodes_[self].value;
    g.accum(a).array() += g.nodes_[self].grad.array() * y.array() * (1.0 - y.array());
  });
}

Var Graph::tanh(Var a) {
  Mat out = value(a).array().tanh().matrix();
  return push(std::move(out), needs(a), [a](Graph& g, int self) {
    const Mat& y = g.nodes_[self].value;
    g.accum(a).array() += g.nodes_[self].grad.array() * (1.0 - y.array().square());
  });
}

Var Graph::relu(Var a) {
  Mat out = value(a).cwiseMax(0.0);
  return push(std::move(out), needs(a), [a](Graph& g, int self) {
    g.accum(a).array() += g.nodes_[self].grad.array() * (g.value(a).array() > 0.0).cast<double>();
  });
}

Var Graph::gelu(Var a) {
  Mat out = value(a).unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
  });
  return push(std::move(out), needs(a), [a](Graph& g, int self) {
    Mat d = g.value(a).unaryExpr([](double x) {
      double u = kGeluC * (x + 0.044715 * x * x * x);
      double t = std::tanh(u);
      double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    });
    g.accum(a).array() += g.nodes_[self].grad.array() * d.array();
  });
}

Var Graph::dropout(Var a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(value(a).rows(), value(a).cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
  Mat out = value(a).cwiseProduct(mask);
  return push(std::move(out), needs(a), [a, mask = std::move(mask)](Graph& g, int self) {
    g.accum(a) += g.nodes_[self].grad.cwiseProduct(mask);
  });
}

Var Graph::softmax_rows(Var a, bool causal) {
  const Mat& x = value(a);
  if (causal && x.rows() > x.cols()) throw std::invalid_argument("softmax_rows: causal mask needs rows <= cols");
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index n = causal ? i + 1 + (x.cols() - x.rows()) : x.cols();
    auto row = x.row(i).head(n);
    const double mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    out.row(i).head(n) = e / e.sum();
  }
  return push(std::move(out), needs(a), [a](Graph& g, int self) {
    const Mat& y = g.nodes_[self].value;
    const Mat& go = g.nodes_[self].grad;
    Vec dots = (go.cwiseProduct(y)).rowwise().sum();
    Mat& ga = g.accum(a);
    ga.array() += y.array() * (go.colwise() - dots).array();
  });
}

Var Graph::layer_norm(Var a, Var gamma, Var beta, double eps) {
  const Mat& x = value(a);
  const Eigen::Index n = x.cols();
  Vec mu = x.rowwise().mean();
  Mat xc = x.colwise() - mu;
  Vec inv = ((xc.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
  Mat xhat = xc.array().colwise() * inv.array();
  Mat out = (xhat.array().rowwise() * value(gamma).row(0).array()).rowwise() + value(beta).row(0).array();
  return push(std::move(out), needs(a) || needs(gamma) || needs(beta),
              [a, gamma, beta, xhat = std::move(xhat), inv = std::move(inv)](Graph& g, int self) {
                const Mat& go = g.nodes_[self].grad;
                if (g.needs(gamma)) g.accum(gamma) += go.cwiseProduct(xhat).colwise().sum();
                if (g.needs(beta)) g.accum(beta) += go.colwise().sum();
                if (g.needs(a)) {
                  Mat dxhat = go.array().rowwise() * g.value(gamma).row(0).array();
                  Vec m1 = dxhat.rowwise().mean();
                  Vec m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                  Mat dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                  g.accum(a) += (dx.array().colwise() * inv.array()).matrix();
                }
              });
}

Var Graph::slice_cols(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > value(a).cols()) throw std::out_of_range("slice_cols");
  Mat out = value(a).middleCols(start, count);
  return push(std::move(out), needs(a), [a, start, count](Graph& g, int self) {
    g.accum(a).middleCols(start, count) += g.nodes_[self].grad;
  });
}

Var Graph::slice_rows(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > value(a).rows()) throw std::out_of_range("slice_rows");
  Mat out = value(a).middleRows(start, count);
  return push(std::move(out), needs(a), [a, start, count](Graph& g, int self) {
    g.accum(a).middleRows(start, count) += g.nodes_[self].grad;
  });
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += value(p).cols();
    ng = ng || needs(p);
  }
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    out.middleCols(off, value(p).cols()) = value(p);
    off += value(p).cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), ng, [ps = std::move(ps)](Graph& g, int self) {
    Eigen::Index o = 0;
    for (Var p : ps) {
      const Eigen::Index c = g.value(p).cols();
      if (g.needs(p)) g.accum(p) += g.nodes_[self].grad.middleCols(o, c);
      o += c;
    }
  });
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += value(p).rows();
    ng = ng || needs(p);
  }
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    out.middleRows(off, value(p).rows()) = value(p);
    off += value(p).rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), ng, [ps = std::move(ps)](Graph& g, int self) {
    Eigen::Index o = 0;
    for (Var p : ps) {
      const Eigen::Index r = g.value(p).rows();
      if (g.needs(p)) g.accum(p) += g.nodes_[self].grad.middleRows(o, r);
      o += r;
    }
  });
}

Var Graph::gather_rows(Var table, std::span<const int> rows) {
  const Mat& t = value(table);
  Mat out(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return push(std::move(out), needs(table), [table, idx = std::move(idx)](Graph& g, int self) {
    Mat& gt = g.accum(table);
    const Mat& go = g.nodes_[self].grad;
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += go.row(static_cast<Eigen::Index>(i));
  });
}

Var Graph::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), needs(a), [a](Graph& g, int self) {
    g.accum(a).array() += g.nodes_[self].grad(0, 0);
  });
}

Var Graph::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  Mat out(1, 1);
  out(0, 0) = value(a).sum() / n;
  return push(std::move(out), needs(a), [a, n](Graph& g, int self) {
    g.accum(a).array() += g.nodes_[self].grad(0, 0) / n;
  });
}

Var Graph::mse(Var a, const Mat& target) {
  check_same_shape(value(a), target, "mse");
  Mat diff = value(a) - target;
  const double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return push(std::move(out), needs(a), [a, n, diff = std::move(diff)](Graph& g, int self) {
    g.accum(a) += diff * (2.0 * g.nodes_[self].grad(0, 0) / n);
  });
}

Var Graph::cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Mat& z = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != z.rows() || weights.size() != targets.size()) {
    throw std::invalid_argument("cross_entropy: targets/weights must match logit rows");
  }
  Mat probs = Mat::Zero(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols()) throw std::out_of_range("cross_entropy: target out of range");
    const double mx = z.row(i).maxCoeff();
    auto e = (z.row(i).array() - mx).exp();
    const double s = e.sum();
    probs.row(i) = e / s;
    loss += w * (std::log(s) + mx - z(i, y));
  }
  Mat out(1, 1);
  out(0, 0) = loss;
  std::vector<int> ys(targets.begin(), targets.end());
  std::vector<double> ws(weights.begin(), weights.end());
  return push(std::move(out), needs(logits),
              [logits, probs = std::move(probs), ys = std::move(ys), ws = std::move(ws)](Graph& g, int self) {
                const double go = g.nodes_[self].grad(0, 0);
                Mat& gl = g.accum(logits);
                for (std::size_t i = 0; i < ys.size(); ++i) {
                  if (ws[i] == 0.0) continue;
                  const auto r = static_cast<Eigen::Index>(i);
                  gl.row(r) += probs.row(r) * (go * ws[i]);
                  gl(r, ys[i]) -= go * ws[i];
                }
              });
}

Var Graph::gru_cell(Var gx, Var h, Var w_h, Var b_h) {
  const Mat& h0 = value(h);
  const Eigen::Index H = h0.cols();
  if (value(gx).cols() != 3 * H || value(w_h).rows() != H || value(w_h).cols() != 3 * H) {
    throw std::invalid_argument("gru_cell: shape mismatch");
  }
  Mat gh = (h0 * value(w_h)).rowwise() + value(b_h).row(0);
  const Mat& x = value(gx);
  Mat r = (x.leftCols(H) + gh.leftCols(H)).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Mat z = (x.middleCols(H, H) + gh.middleCols(H, H)).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Mat ghn = gh.rightCols(H);
  Mat n = (x.rightCols(H) + r.cwiseProduct(ghn)).array().tanh().matrix();
  Mat out = (1.0 - z.array()) * n.array() + z.array() * h0.array();
  const bool ng = needs(gx) || needs(h) || needs(w_h) || needs(b_h);
  return push(std::move(out), ng,
              [gx, h, w_h, b_h, r = std::move(r), z = std::move(z), n = std::move(n), ghn = std::move(ghn)](
                  Graph& g, int self) {
                const Mat& go = g.nodes_[self].grad;
                const Mat& hv = g.value(h);
                const Eigen::Index Hc = hv.cols();
                Mat dz = go.cwiseProduct(hv - n);
                Mat dn = go.cwiseProduct((1.0 - z.array()).matrix());
                Mat dan = dn.array() * (1.0 - n.array().square());
                Mat dr = dan.cwiseProduct(ghn);
                Mat dar = dr.array() * r.array() * (1.0 - r.array());
                Mat daz = dz.array() * z.array() * (1.0 - z.array());
                Mat dgh(go.rows(), 3 * Hc);
                dgh.leftCols(Hc) = dar;
                dgh.middleCols(Hc, Hc) = daz;
                dgh.rightCols(Hc) = dan.cwiseProduct(r);
                if (g.needs(gx)) {
                  Mat& ggx = g.accum(gx);
                  ggx.leftCols(Hc) += dar;
                  ggx.middleCols(Hc, Hc) += daz;
                  ggx.rightCols(Hc) += dan;
                }
                if (g.needs(h)) {
                  Mat& gh0 = g.accum(h);
                  gh0 += go.cwiseProduct(z);
                  gh0.noalias() += dgh * g.value(w_h).transpose();
                }
                if (g.needs(w_h)) g.accum(w_h).noalias() += hv.transpose() * dgh;
                if (g.needs(b_h)) g.accum(b_h) += dgh.colwise().sum();
              });
}

Var Graph::straight_through(Var through, const Mat& forward) {
  check_same_shape(value(through), forward, "straight_through");
  return push(forward, needs(through), [through](Graph& g, int self) { g.accum(through) += g.nodes_[self].grad; });
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!needs(loss)) return;
  accum(loss)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) n.param->zero_grad();
      n.param->grad += n.grad;
    } else if (n.back) {
      n.back(*this, i);
    }
  }
}

}  // namespace duet::nn
