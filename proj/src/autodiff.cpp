#include "autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace nrib::ad {

namespace {
void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}
}  // namespace

Graph::Node& Graph::node(Var v) {
  require(v.g == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
          "Var does not belong to this graph");
  return nodes_[static_cast<size_t>(v.id)];
}

const Graph::Node& Graph::node(Var v) const {
  require(v.g == const_cast<Graph*>(this) && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
          "Var does not belong to this graph");
  return nodes_[static_cast<size_t>(v.id)];
}

Var Graph::make(Mat value, bool requires_grad, std::function<void(Graph&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Mat v) { return make(std::move(v), false, nullptr); }
Var Graph::input(Mat v) { return make(std::move(v), true, nullptr); }

const Mat& Graph::value(Var v) const { return node(v).value; }

const Mat& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) {
    const_cast<Node&>(n).grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Graph::accumulate(int id, const Mat& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad += g;
}

void Graph::backward(Var loss) {
  Node& ln = node(loss);
  require(ln.value.rows() == 1 && ln.value.cols() == 1, "backward() expects a 1x1 loss");
  if (ln.grad.size() == 0) ln.grad = Mat::Zero(1, 1);
  ln.grad(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.back && n.requires_grad && n.grad.size() != 0) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// Arithmetic

Var Graph::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "add: shape mismatch");
  const int ia = a.id, ib = b.id, out = static_cast<int>(nodes_.size());
  return make(value(a) + value(b), needs(a) || needs(b), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    g.accumulate(ia, go);
    g.accumulate(ib, go);
  });
}

Var Graph::sub(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "sub: shape mismatch");
  const int ia = a.id, ib = b.id, out = static_cast<int>(nodes_.size());
  return make(value(a) - value(b), needs(a) || needs(b), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    g.accumulate(ia, go);
    g.accumulate(ib, -go);
  });
}

Var Graph::neg(Var a) { return scalar_mul(a, -1.0); }

Var Graph::mul(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "mul: shape mismatch");
  const int ia = a.id, ib = b.id, out = static_cast<int>(nodes_.size());
  return make(value(a).cwiseProduct(value(b)), needs(a) || needs(b), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    g.accumulate(ia, go.cwiseProduct(g.nodes_[ib].value));
    g.accumulate(ib, go.cwiseProduct(g.nodes_[ia].value));
  });
}

Var Graph::div(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "div: shape mismatch");
  const int ia = a.id, ib = b.id, out = static_cast<int>(nodes_.size());
  return make(value(a).cwiseQuotient(value(b)), needs(a) || needs(b), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    const Mat& bv = g.nodes_[ib].value;
    g.accumulate(ia, go.cwiseQuotient(bv));
    g.accumulate(ib, -go.cwiseProduct(g.nodes_[out].value).cwiseQuotient(bv));
  });
}

Var Graph::add_rowvec(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
          "add_rowvec: row must be 1xk matching a's columns");
  const int ia = a.id, ir = row.id, out = static_cast<int>(nodes_.size());
  Mat v = value(a);
  v.rowwise() += value(row).row(0);
  return make(std::move(v), needs(a) || needs(row), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    g.accumulate(ia, go);
    g.accumulate(ir, go.colwise().sum());
  });
}

Var Graph::mul_rowvec(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
          "mul_rowvec: row must be 1xk matching a's columns");
  const int ia = a.id, ir = row.id, out = static_cast<int>(nodes_.size());
  Mat v = value(a).array().rowwise() * value(row).row(0).array();
  return make(std::move(v), needs(a) || needs(row), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    const Mat& av = g.nodes_[ia].value;
    const Mat& rv = g.nodes_[ir].value;
    g.accumulate(ia, Mat(go.array().rowwise() * rv.row(0).array()));
    g.accumulate(ir, Mat(go.cwiseProduct(av).colwise().sum()));
  });
}

Var Graph::mul_colvec(Var a, Var col) {
  require(value(col).cols() == 1 && value(col).rows() == value(a).rows(),
          "mul_colvec: col must be Nx1 matching a's rows");
  const int ia = a.id, ic = col.id, out = static_cast<int>(nodes_.size());
  Mat v = value(a).array().colwise() * value(col).col(0).array();
  return make(std::move(v), needs(a) || needs(col), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    const Mat& av = g.nodes_[ia].value;
    const Mat& cv = g.nodes_[ic].value;
    g.accumulate(ia, Mat(go.array().colwise() * cv.col(0).array()));
    g.accumulate(ic, Mat(go.cwiseProduct(av).rowwise().sum()));
  });
}

Var Graph::scalar_mul(Var a, double c) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a) * c, needs(a), [=](Graph& g) {
    g.accumulate(ia, g.nodes_[out].grad * c);
  });
}

Var Graph::scalar_add(Var a, double c) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a).array() + c, needs(a), [=](Graph& g) {
    g.accumulate(ia, g.nodes_[out].grad);
  });
}

Var Graph::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul: inner dimension mismatch");
  const int ia = a.id, ib = b.id, out = static_cast<int>(nodes_.size());
  return make(value(a) * value(b), needs(a) || needs(b), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    g.accumulate(ia, go * g.nodes_[ib].value.transpose());
    g.accumulate(ib, g.nodes_[ia].value.transpose() * go);
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinear

Var Graph::exp(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a).array().exp(), needs(a), [=](Graph& g) {
    g.accumulate(ia, g.nodes_[out].grad.cwiseProduct(g.nodes_[out].value));
  });
}

Var Graph::safe_log(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  Mat v = value(a).array().max(kLogFloor).log();
  return make(std::move(v), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    Mat d = (av.array() > kLogFloor).select(g.nodes_[out].grad.array() / av.array(), 0.0);
    g.accumulate(ia, d);
  });
}

Var Graph::square(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a).array().square(), needs(a), [=](Graph& g) {
    g.accumulate(ia, Mat(2.0 * g.nodes_[out].grad.cwiseProduct(g.nodes_[ia].value)));
  });
}

Var Graph::relu(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a).cwiseMax(0.0), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    Mat d = (av.array() > 0.0).select(g.nodes_[out].grad, Mat::Zero(av.rows(), av.cols()));
    g.accumulate(ia, d);
  });
}

Var Graph::leaky_relu(Var a, double slope) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  const Mat& av0 = value(a);
  Mat v = (av0.array() > 0.0).select(av0, slope * av0);
  return make(std::move(v), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    const Mat& go = g.nodes_[out].grad;
    Mat d = (av.array() > 0.0).select(go, slope * go);
    g.accumulate(ia, d);
  });
}

Var Graph::elu(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  const Mat& av0 = value(a);
  Mat v = (av0.array() > 0.0).select(av0, av0.array().exp() - 1.0);
  return make(std::move(v), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    const Mat& ov = g.nodes_[out].value;
    const Mat& go = g.nodes_[out].grad;
    Mat d = (av.array() > 0.0).select(go, go.cwiseProduct(Mat(ov.array() + 1.0)));
    g.accumulate(ia, d);
  });
}

Var Graph::tanh_fn(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a).array().tanh(), needs(a), [=](Graph& g) {
    const Mat& ov = g.nodes_[out].value;
    g.accumulate(ia, Mat(g.nodes_[out].grad.array() * (1.0 - ov.array().square())));
  });
}

Var Graph::sigmoid(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  Mat v = (1.0 + (-value(a)).array().exp()).inverse();
  return make(std::move(v), needs(a), [=](Graph& g) {
    const Mat& ov = g.nodes_[out].value;
    g.accumulate(ia, Mat(g.nodes_[out].grad.array() * ov.array() * (1.0 - ov.array())));
  });
}

Var Graph::clamp(Var a, double lo, double hi) {
  require(lo < hi, "clamp: lo must be < hi");
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a).cwiseMax(lo).cwiseMin(hi), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    const Mat& go = g.nodes_[out].grad;
    Mat inside = ((av.array() > lo) && (av.array() < hi)).cast<double>();
    g.accumulate(ia, go.cwiseProduct(inside));
  });
}

// ---------------------------------------------------------------------------
// Reductions / shape

Var Graph::sum(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  Mat v(1, 1);
  v(0, 0) = value(a).sum();
  return make(std::move(v), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    g.accumulate(ia, Mat::Constant(av.rows(), av.cols(), g.nodes_[out].grad(0, 0)));
  });
}

Var Graph::mean_all(Var a) {
  require(value(a).size() > 0, "mean_all: empty matrix");
  return scalar_mul(sum(a), 1.0 / static_cast<double>(value(a).size()));
}

Var Graph::rowwise_sum(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  return make(value(a).rowwise().sum(), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    const Mat& go = g.nodes_[out].grad;
    Mat d(av.rows(), av.cols());
    d.colwise() = go.col(0);
    g.accumulate(ia, d);
  });
}

Var Graph::softmax_rows(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  const Mat& av0 = value(a);
  Mat v(av0.rows(), av0.cols());
  for (long i = 0; i < av0.rows(); ++i) {
    Eigen::ArrayXd row = av0.row(i).array() - av0.row(i).maxCoeff();
    Eigen::ArrayXd e = row.exp();
    v.row(i) = (e / e.sum()).matrix();
  }
  return make(std::move(v), needs(a), [=](Graph& g) {
    const Mat& p = g.nodes_[out].value;
    const Mat& go = g.nodes_[out].grad;
    Mat d(p.rows(), p.cols());
    for (long i = 0; i < p.rows(); ++i) {
      double dot = go.row(i).dot(p.row(i));
      d.row(i) = p.row(i).cwiseProduct(Mat(go.row(i).array() - dot));
    }
    g.accumulate(ia, d);
  });
}

Var Graph::logsumexp_rows(Var a) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  const Mat& av0 = value(a);
  Mat v(av0.rows(), 1);
  for (long i = 0; i < av0.rows(); ++i) {
    double m = av0.row(i).maxCoeff();
    v(i, 0) = m + std::log((av0.row(i).array() - m).exp().sum());
  }
  return make(std::move(v), needs(a), [=](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    const Mat& ov = g.nodes_[out].value;
    const Mat& go = g.nodes_[out].grad;
    Mat d(av.rows(), av.cols());
    for (long i = 0; i < av.rows(); ++i) {
      d.row(i) = go(i, 0) * (av.row(i).array() - ov(i, 0)).exp().matrix();
    }
    g.accumulate(ia, d);
  });
}

Var Graph::hcat(Var a, Var b) {
  require(value(a).rows() == value(b).rows(), "hcat: row count mismatch");
  const int ia = a.id, ib = b.id, out = static_cast<int>(nodes_.size());
  Mat v(value(a).rows(), value(a).cols() + value(b).cols());
  v << value(a), value(b);
  return make(std::move(v), needs(a) || needs(b), [=](Graph& g) {
    const Mat& go = g.nodes_[out].grad;
    long ca = g.nodes_[ia].value.cols();
    g.accumulate(ia, go.leftCols(ca));
    g.accumulate(ib, go.rightCols(go.cols() - ca));
  });
}

Var Graph::gather_rows(Var a, std::vector<int> idx) {
  const int ia = a.id, out = static_cast<int>(nodes_.size());
  const Mat& av0 = value(a);
  Mat v(static_cast<long>(idx.size()), av0.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < av0.rows(), "gather_rows: index out of range");
    v.row(static_cast<long>(i)) = av0.row(idx[i]);
  }
  return make(std::move(v), needs(a), [=, indices = std::move(idx)](Graph& g) {
    const Mat& av = g.nodes_[ia].value;
    const Mat& go = g.nodes_[out].grad;
    Mat d = Mat::Zero(av.rows(), av.cols());
    for (size_t i = 0; i < indices.size(); ++i) {
      d.row(indices[i]) += go.row(static_cast<long>(i));
    }
    g.accumulate(ia, d);
  });
}

Var Graph::segment_softmax(Var scores, std::vector<int> seg, int num_segments) {
  require(value(scores).cols() == 1, "segment_softmax: scores must be Ex1");
  require(static_cast<long>(seg.size()) == value(scores).rows(),
          "segment_softmax: segment ids must match score count");
  const int is = scores.id, out = static_cast<int>(nodes_.size());
  const Mat& sv = value(scores);
  const long e = sv.rows();

  Eigen::VectorXd segmax = Eigen::VectorXd::Constant(num_segments, -1e300);
  for (long i = 0; i < e; ++i) segmax[seg[static_cast<size_t>(i)]] =
      std::max(segmax[seg[static_cast<size_t>(i)]], sv(i, 0));
  Eigen::VectorXd segsum = Eigen::VectorXd::Zero(num_segments);
  Mat v(e, 1);
  for (long i = 0; i < e; ++i) {
    v(i, 0) = std::exp(sv(i, 0) - segmax[seg[static_cast<size_t>(i)]]);
    segsum[seg[static_cast<size_t>(i)]] += v(i, 0);
  }
  for (long i = 0; i < e; ++i) v(i, 0) /= segsum[seg[static_cast<size_t>(i)]];

  return make(std::move(v), needs(scores), [=, segv = std::move(seg)](Graph& g) {
    const Mat& alpha = g.nodes_[out].value;
    const Mat& go = g.nodes_[out].grad;
    Eigen::VectorXd dots = Eigen::VectorXd::Zero(num_segments);
    for (long i = 0; i < alpha.rows(); ++i) {
      dots[segv[static_cast<size_t>(i)]] += go(i, 0) * alpha(i, 0);
    }
    Mat d(alpha.rows(), 1);
    for (long i = 0; i < alpha.rows(); ++i) {
      d(i, 0) = alpha(i, 0) * (go(i, 0) - dots[segv[static_cast<size_t>(i)]]);
    }
    g.accumulate(is, d);
  });
}

Var Graph::edge_aggregate(Var alpha, Var h, std::vector<int> src, std::vector<int> dst,
                          int num_rows) {
  require(value(alpha).cols() == 1, "edge_aggregate: alpha must be Ex1");
  require(value(alpha).rows() == static_cast<long>(src.size()) && src.size() == dst.size(),
          "edge_aggregate: edge arrays must agree");
  const int ialpha = alpha.id, ih = h.id, out = static_cast<int>(nodes_.size());
  const Mat& av = value(alpha);
  const Mat& hv = value(h);
  Mat v = Mat::Zero(num_rows, hv.cols());
  for (size_t e = 0; e < src.size(); ++e) {
    v.row(dst[e]) += av(static_cast<long>(e), 0) * hv.row(src[e]);
  }
  return make(std::move(v), needs(alpha) || needs(h),
              [=, srcv = std::move(src), dstv = std::move(dst)](Graph& g) {
                const Mat& go = g.nodes_[out].grad;
                const Mat& al = g.nodes_[ialpha].value;
                const Mat& hh = g.nodes_[ih].value;
                Mat dalpha = Mat::Zero(al.rows(), 1);
                Mat dh = Mat::Zero(hh.rows(), hh.cols());
                for (size_t e = 0; e < srcv.size(); ++e) {
                  long el = static_cast<long>(e);
                  dalpha(el, 0) = hh.row(srcv[e]).dot(go.row(dstv[e]));
                  dh.row(srcv[e]) += al(el, 0) * go.row(dstv[e]);
                }
                g.accumulate(ialpha, dalpha);
                g.accumulate(ih, dh);
              });
}

}  // namespace nrib::ad
