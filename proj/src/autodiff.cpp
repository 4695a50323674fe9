#include "thepose/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace thepose::ad {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("shape", what);
}

Tape& tape_of(const Var& x) {
  if (!x.valid()) throw Error("shape", "operand is not attached to a tape");
  return *x.tape();
}

Tape& tape_of(const Var& x, const Var& y) {
  Tape& t = tape_of(x);
  if (&t != &tape_of(y)) throw Error("shape", "operands live on different tapes");
  return t;
}

}  // namespace

const Matrix& Var::value() const { return tape_of(*this).value(*this); }

Groups Groups::all(int count) {
  Groups g;
  g.members.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) g.members[i] = i;
  g.offsets.push_back(count);
  return g;
}

Groups Groups::fixed_width(std::vector<int> members, int width) {
  if (width < 1 || members.size() % static_cast<std::size_t>(width) != 0) {
    throw Error("shape", "member count is not a multiple of the group width");
  }
  Groups g;
  g.members = std::move(members);
  const int n = static_cast<int>(g.members.size()) / width;
  g.offsets.resize(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) g.offsets[i] = i * width;
  return g;
}

int Tape::check(const Var& v) const {
  if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
    throw Error("shape", "variable does not belong to this tape");
  }
  return v.id();
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[check(in)].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, false,
                        needs ? std::move(backward) : Backward{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(const Var& v, const Matrix& grad) {
  Node& node = nodes_[check(v)];
  if (!node.requires_grad) return;
  if (!node.has_grad) {
    node.grad = grad;
    node.has_grad = true;
  } else {
    node.grad += grad;
  }
}

Matrix Tape::gradient(const Var& v) const {
  const Node& node = nodes_[check(v)];
  if (node.has_grad) return node.grad;
  return Matrix::Zero(node.value.rows(), node.value.cols());
}

void Tape::backward(const Var& loss) {
  const int root = check(loss);
  if (nodes_[root].value.size() != 1) {
    throw Error("non-scalar-loss", "backward needs a 1 x 1 loss");
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad = Matrix::Ones(1, 1);
  nodes_[root].has_grad = true;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::note_kink(std::uint64_t decision) {
  kink_hash_ = (kink_hash_ ^ decision) * 0x100000001b3ULL;
}

Var linear(const Var& x, const Var& W) {
  Tape& t = tape_of(x, W);
  require(x.cols() == W.rows(), "linear: input width " + std::to_string(x.cols()) +
                                    " vs weight rows " + std::to_string(W.rows()));
  Matrix out = x.value() * W.value();
  return t.record(std::move(out), {x, W}, [x, W](Tape& tp, const Matrix& g) {
    if (tp.wants_grad(x)) tp.accumulate(x, g * W.value().transpose());
    if (tp.wants_grad(W)) tp.accumulate(W, x.value().transpose() * g);
  });
}

Var linear(const Var& x, const Var& W, const Var& b) {
  Tape& t = tape_of(x, W);
  tape_of(x, b);
  require(x.cols() == W.rows(), "linear: input width " + std::to_string(x.cols()) +
                                    " vs weight rows " + std::to_string(W.rows()));
  require(b.rows() == 1 && b.cols() == W.cols(), "linear: bias shape");
  Matrix out = x.value() * W.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), {x, W, b}, [x, W, b](Tape& tp, const Matrix& g) {
    if (tp.wants_grad(x)) tp.accumulate(x, g * W.value().transpose());
    if (tp.wants_grad(W)) tp.accumulate(W, x.value().transpose() * g);
    if (tp.wants_grad(b)) tp.accumulate(b, g.colwise().sum());
  });
}

Var relu(const Var& x) {
  Tape& t = tape_of(x);
  Matrix out = x.value().cwiseMax(0.0);
  if (t.track_kinks()) {
    const Matrix& v = x.value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      t.note_kink(v.data()[i] > 0.0 ? 1 : 2);
    }
  }
  return t.record(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, (x.value().array() > 0.0).select(g, 0.0));
  });
}

Var add(const Var& x, const Var& y) {
  Tape& t = tape_of(x, y);
  require(x.rows() == y.rows() && x.cols() == y.cols(), "add: shape mismatch");
  return t.record(x.value() + y.value(), {x, y}, [x, y](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g);
    tp.accumulate(y, g);
  });
}

Var sub(const Var& x, const Var& y) {
  Tape& t = tape_of(x, y);
  require(x.rows() == y.rows() && x.cols() == y.cols(), "sub: shape mismatch");
  return t.record(x.value() - y.value(), {x, y}, [x, y](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g);
    if (tp.wants_grad(y)) tp.accumulate(y, -g);
  });
}

Var scale(const Var& x, double factor) {
  Tape& t = tape_of(x);
  return t.record(x.value() * factor, {x}, [x, factor](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g * factor);
  });
}

Var concat(std::initializer_list<Var> xs, int axis) {
  return concat(std::span<const Var>(xs.begin(), xs.size()), axis);
}

Var concat(std::span<const Var> xs, int axis) {
  if (xs.empty()) throw Error("shape", "concat of nothing");
  if (axis != 0 && axis != 1) throw Error("shape", "concat axis must be 0 or 1");
  Tape& t = tape_of(xs.front());
  Eigen::Index rows = 0, cols = 0;
  for (const Var& x : xs) {
    tape_of(xs.front(), x);
    if (axis == 1) {
      require(x.rows() == xs.front().rows(), "concat: row counts differ");
      cols += x.cols();
    } else {
      require(x.cols() == xs.front().cols(), "concat: column counts differ");
      rows += x.rows();
    }
  }
  if (axis == 1) rows = xs.front().rows();
  else cols = xs.front().cols();
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& x : xs) {
    if (axis == 1) {
      out.middleCols(at, x.cols()) = x.value();
      at += x.cols();
    } else {
      out.middleRows(at, x.rows()) = x.value();
      at += x.rows();
    }
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return t.record(std::move(out), xs, [inputs, axis](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& x : inputs) {
      const Eigen::Index w = axis == 1 ? x.cols() : x.rows();
      if (tp.wants_grad(x)) {
        tp.accumulate(x, axis == 1 ? Matrix(g.middleCols(off, w))
                                   : Matrix(g.middleRows(off, w)));
      }
      off += w;
    }
  });
}

Var gather_rows(const Var& x, std::span<const int> indices) {
  Tape& t = tape_of(x);
  const Eigen::Index n = x.rows();
  Matrix out(static_cast<Eigen::Index>(indices.size()), x.cols());
  const Matrix& v = x.value();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n) {
      throw Error("index", "gather index " + std::to_string(indices[i]) +
                               " outside [0, " + std::to_string(n) + ")");
    }
    out.row(static_cast<Eigen::Index>(i)) = v.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return t.record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& tp, const Matrix& g) {
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      gx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    tp.accumulate(x, gx);
  });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(x);
  require(start >= 0 && count >= 0 && start + count <= x.cols(), "slice_cols: range");
  return t.record(x.value().middleCols(start, count), {x},
                  [x, start, count](Tape& tp, const Matrix& g) {
                    Matrix gx = Matrix::Zero(x.rows(), x.cols());
                    gx.middleCols(start, count) = g;
                    tp.accumulate(x, gx);
                  });
}

namespace {

void check_groups(const Groups& groups, Eigen::Index rows) {
  for (int g = 0; g < groups.size(); ++g) {
    if (groups.offsets[g + 1] <= groups.offsets[g]) {
      throw Error("shape", "empty aggregation group " + std::to_string(g));
    }
  }
  for (int m : groups.members) {
    if (m < 0 || m >= rows) {
      throw Error("index", "group member " + std::to_string(m) + " outside [0, " +
                               std::to_string(rows) + ")");
    }
  }
}

}  // namespace

Var max_over_groups(const Var& x, const Groups& groups) {
  Tape& t = tape_of(x);
  check_groups(groups, x.rows());
  const Matrix& v = x.value();
  const Eigen::Index cols = v.cols();
  const int G = groups.size();
  Matrix out(G, cols);
  std::vector<int> arg(static_cast<std::size_t>(G) * cols);
  for (int g = 0; g < G; ++g) {
    const auto members = groups.group(g);
    out.row(g) = v.row(members[0]);
    int* a = arg.data() + static_cast<std::size_t>(g) * cols;
    std::fill(a, a + cols, members[0]);
    for (std::size_t m = 1; m < members.size(); ++m) {
      const double* row = v.data() + static_cast<Eigen::Index>(members[m]) * cols;
      double* best = out.data() + static_cast<Eigen::Index>(g) * cols;
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (row[c] > best[c]) {
          best[c] = row[c];
          a[c] = members[m];
        }
      }
    }
  }
  if (t.track_kinks()) {
    for (int a : arg) t.note_kink(static_cast<std::uint64_t>(a) + 7);
  }
  return t.record(std::move(out), {x}, [x, arg = std::move(arg), cols](Tape& tp, const Matrix& g) {
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        gx(arg[static_cast<std::size_t>(r * cols + c)], c) += g(r, c);
      }
    }
    tp.accumulate(x, gx);
  });
}

Var mean_over_groups(const Var& x, const Groups& groups) {
  Tape& t = tape_of(x);
  check_groups(groups, x.rows());
  const Matrix& v = x.value();
  Matrix out = Matrix::Zero(groups.size(), v.cols());
  for (int g = 0; g < groups.size(); ++g) {
    const auto members = groups.group(g);
    for (int m : members) out.row(g) += v.row(m);
    out.row(g) /= static_cast<double>(members.size());
  }
  return t.record(std::move(out), {x}, [x, groups](Tape& tp, const Matrix& g) {
    Matrix gx = Matrix::Zero(x.rows(), x.cols());
    for (int r = 0; r < groups.size(); ++r) {
      const auto members = groups.group(r);
      const double w = 1.0 / static_cast<double>(members.size());
      for (int m : members) gx.row(m) += w * g.row(r);
    }
    tp.accumulate(x, gx);
  });
}

Var normalize_rows(const Var& x) {
  Tape& t = tape_of(x);
  const Matrix& v = x.value();
  Eigen::VectorXd norms = v.rowwise().norm();
  if (!(norms.array() > 0.0).all()) throw Error("degenerate-axes", "normalizing a zero row");
  Matrix out = norms.cwiseInverse().asDiagonal() * v;
  Matrix y = out;
  return t.record(std::move(out), {x}, [x, y = std::move(y), norms](Tape& tp, const Matrix& g) {
    Eigen::VectorXd dots = (y.array() * g.array()).rowwise().sum();
    Matrix gx = g - dots.asDiagonal() * y;
    tp.accumulate(x, norms.cwiseInverse().asDiagonal() * gx);
  });
}

Var attention_pool(const Var& x, const Var& scores) {
  Tape& t = tape_of(x, scores);
  require(scores.cols() == 1 && scores.rows() == x.rows() && x.rows() > 0,
          "attention_pool: scores must be M x 1 matching rows");
  const Eigen::VectorXd s = scores.value().col(0);
  Eigen::VectorXd w = (s.array() - s.maxCoeff()).exp();
  w /= w.sum();
  Matrix out = w.transpose() * x.value();
  return t.record(std::move(out), {x, scores}, [x, scores, w](Tape& tp, const Matrix& g) {
    if (tp.wants_grad(x)) tp.accumulate(x, w * g);
    if (tp.wants_grad(scores)) {
      const Eigen::VectorXd dw = x.value() * g.transpose();
      const double mean = w.dot(dw);
      Matrix gs = (w.array() * (dw.array() - mean)).matrix();
      tp.accumulate(scores, gs);
    }
  });
}

Var sum(const Var& x) {
  Tape& t = tape_of(x);
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.record(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mse(const Var& x, const Var& y) {
  Tape& t = tape_of(x, y);
  require(x.rows() == y.rows() && x.cols() == y.cols(), "mse: shape mismatch");
  Matrix diff = x.value() - y.value();
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return t.record(std::move(out), {x, y}, [x, y, diff, n](Tape& tp, const Matrix& g) {
    const Matrix gx = diff * (2.0 * g(0, 0) / n);
    tp.accumulate(x, gx);
    if (tp.wants_grad(y)) tp.accumulate(y, -gx);
  });
}

Var l1(const Var& x, const Var& y) {
  Tape& t = tape_of(x, y);
  require(x.rows() == y.rows() && x.cols() == y.cols(), "l1: shape mismatch");
  Matrix diff = x.value() - y.value();
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() / n;
  Matrix sign = diff.unaryExpr([](double d) { return double((d > 0.0) - (d < 0.0)); });
  if (t.track_kinks()) {
    for (Eigen::Index i = 0; i < sign.size(); ++i) {
      t.note_kink(static_cast<std::uint64_t>(sign.data()[i] + 3.0));
    }
  }
  return t.record(std::move(out), {x, y}, [x, y, sign, n](Tape& tp, const Matrix& g) {
    const Matrix gx = sign * (g(0, 0) / n);
    tp.accumulate(x, gx);
    if (tp.wants_grad(y)) tp.accumulate(y, -gx);
  });
}

}  // namespace thepose::ad
