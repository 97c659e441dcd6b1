#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Nodes are appended in
// topological order, so Tape::backward walks them in reverse and each node's
// closure pushes its gradient into its inputs. A tape is single-threaded;
// concurrent forward passes use separate tapes.

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace bpg::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Scalar value of a 1x1 node.
  double scalar() const { return value()(0, 0); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Called with the tape and the gradient of the node's output.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  /// With `track_externals` off, external() leaves carry no gradient and a
  /// forward pass records no backward closures (inference mode).
  explicit Tape(bool track_externals = true) : track_externals_(track_externals) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value without gradient tracking.
  Var constant(Matrix value);
  /// Leaf whose gradient is tracked (an input under test).
  Var variable(Matrix value);
  /// Leaf referencing externally owned storage, e.g. a model parameter. The
  /// same address always maps to the same node on one tape.
  Var external(const Matrix& storage);

  /// Records an op. `inputs` decide whether the result needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward);

  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }

  /// Adds `g` into the gradient of `v` when it is tracked.
  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every node.
  void backward(const Var& root);

  /// Gradient of a node after backward(); a zero matrix when nothing reached it.
  Matrix grad(const Var& v) const;
  /// Gradient of the leaf created by external(storage), or nullptr if the
  /// storage was never used or received no gradient.
  const Matrix* external_grad(const Matrix& storage) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, int> externals_;
  bool track_externals_ = true;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// Elementwise and linear algebra ops. Shapes are checked; a mismatch throws
// std::invalid_argument.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard product
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a (r x c) + b (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var exp(const Var& a);
/// Gradient passes only where lo <= a <= hi.
Var clamp(const Var& a, double lo, double hi);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
/// Subgradient 0 at 0.
Var abs(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Frobenius norm; gradient 0 at the origin.
Var norm(const Var& a);

/// Row gather; index -1 produces a zero row.
Var gather_rows(const Var& a, const std::vector<int>& index);
/// Column gather; index -1 produces a zero column.
Var gather_cols(const Var& a, const std::vector<int>& index);
Var block(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
          Eigen::Index cols);
Var hstack(const std::vector<Var>& parts);
Var vstack(const std::vector<Var>& parts);
/// Row-major reinterpretation, e.g. 22 x f -> 1 x 22f.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

/// out(i, j) = sum of a's entries whose slot list contains (i, j). `a` is 1 x n
/// and slots.size() == n.
Var scatter(const Var& a, Eigen::Index rows, Eigen::Index cols,
            const std::vector<std::vector<std::pair<int, int>>>& slots);

enum class Padding { kSame, kCausal };

/// Temporal unfolding for 1-D convolution over `segments` equal-length
/// sequences stacked vertically in a (segments*L) x C input. Row t of a
/// segment becomes [x_{t+o_0}, ..., x_{t+o_{k-1}}] with zero padding inside the
/// segment; offsets are -(k/2)..k/2 for kSame and -(k-1)..0 for kCausal.
Var im2col(const Var& a, int kernel, Padding padding, int segments = 1);

/// Rodrigues map of a 1x3 (or 3x1) axis-angle to a 3x3 rotation.
Var rodrigues(const Var& a);

/// Identity forward, gradient multiplied by `factor`. Only for exercising the
/// gradient checker.
Var scale_gradient(const Var& a, double factor);

}  // namespace bpg::ad
