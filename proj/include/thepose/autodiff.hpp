#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every value is a 2-D matrix (a row vector is 1 x D, a scalar 1 x 1).
// Primitives are free functions that evaluate eagerly, append a node to the
// tape of their inputs and register an exact vector-Jacobian product.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "thepose/error.hpp"
#include "thepose/geometry.hpp"

namespace thepose::ad {

using Matrix = Matrixd;

class Tape;

class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Row groups in compressed form: group g owns members[offsets[g] .. offsets[g+1]).
struct Groups {
  std::vector<int> offsets{0};
  std::vector<int> members;

  int size() const { return static_cast<int>(offsets.size()) - 1; }
  std::span<const int> group(int g) const {
    return {members.data() + offsets[g],
            static_cast<std::size_t>(offsets[g + 1] - offsets[g])};
  }
  void push(std::span<const int> rows) {
    members.insert(members.end(), rows.begin(), rows.end());
    offsets.push_back(static_cast<int>(members.size()));
  }

  // One group of every row 0..count-1.
  static Groups all(int count);
  // Consecutive groups of `width` members taken from `members`.
  static Groups fixed_width(std::vector<int> members, int width);
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var variable(Matrix value);

  const Matrix& value(const Var& v) const { return nodes_[check(v)].value; }
  bool requires_grad(const Var& v) const { return nodes_[check(v)].requires_grad; }

  // Gradient of the last backward() loss; zeros for nodes off the loss path.
  Matrix gradient(const Var& v) const;

  void backward(const Var& loss);

  // Used by primitives.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  void accumulate(const Var& v, const Matrix& grad);
  bool wants_grad(const Var& v) const { return nodes_[check(v)].requires_grad; }

  // Non-smooth decisions (relu sign, argmax choice, |x| sign) are folded into
  // a running hash when tracking is on; finite-difference checks use it to
  // detect stencils that straddle a kink.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool track_kinks() const { return track_kinks_; }
  void note_kink(std::uint64_t decision);
  std::uint64_t kink_signature() const { return kink_hash_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  int check(const Var& v) const;

  std::vector<Node> nodes_;
  bool track_kinks_ = false;
  std::uint64_t kink_hash_ = 0xcbf29ce484222325ULL;
};

// x (N x Din) * W (Din x Dout) [+ b (1 x Dout)]
Var linear(const Var& x, const Var& W);
Var linear(const Var& x, const Var& W, const Var& b);
Var relu(const Var& x);
Var add(const Var& x, const Var& y);
Var sub(const Var& x, const Var& y);
Var scale(const Var& x, double factor);
// axis 0 stacks rows, axis 1 stacks columns.
Var concat(std::span<const Var> xs, int axis);
Var concat(std::initializer_list<Var> xs, int axis);
Var gather_rows(const Var& x, std::span<const int> indices);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
// Output row g is the column-wise max / mean over rows of group g.
Var max_over_groups(const Var& x, const Groups& groups);
Var mean_over_groups(const Var& x, const Groups& groups);
Var normalize_rows(const Var& x);
// Softmax over the score column, then a weighted sum of rows: (M x C, M x 1) -> 1 x C.
Var attention_pool(const Var& x, const Var& scores);
Var sum(const Var& x);
// Means over all entries; both return 1 x 1.
Var mse(const Var& x, const Var& y);
Var l1(const Var& x, const Var& y);

}  // namespace thepose::ad
