#pragma once

// Reverse-mode differentiation over dense matrix nodes.
//
// Every node holds an Eigen::MatrixXd. Elementwise binary ops broadcast
// numpy-style in two dimensions: along each axis the extents must match or
// one of them must be 1. Row-wise ops (dot, cross, norm) treat each row as a
// vector. A Tape is append-only, so insertion order is a topological order.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace primfit {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] const Matrix& grad() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  [[nodiscard]] double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,       // param = exponent
  kSqrt,
  kSigmoid,
  kSoftplus,
  kSin,
  kCos,
  kAbs,       // zero subgradient at 0
  kNeg,
  kDot,       // row-wise, N x C . N x C -> N x 1
  kCross,     // row-wise, N x 3 x N x 3 -> N x 3
  kNorm,      // row-wise Euclidean norm -> N x 1
  kMatMul,
  kSum,       // -> 1 x 1
  kClampMin,  // param = lower bound
  kMin,       // elementwise minimum of two inputs
};

[[nodiscard]] std::string to_string(OpKind kind);

/// Arguments handed to a node's adjoint. `in_grads[k]` is null when input k
/// does not require a gradient; otherwise the adjoint accumulates into it.
struct BackwardArgs {
  std::span<const Matrix* const> inputs;
  const Matrix& output;
  const Matrix& out_grad;
  std::span<Matrix* const> in_grads;
};

class Tape {
 public:
  using Adjoint = std::function<void(const BackwardArgs&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Matrix value);
  /// Input that never receives a gradient.
  Var constant(Matrix value);
  Var constant(double value);

  Var record(OpKind kind, std::span<const Var> inputs, double param = 0.0);
  Var record(OpKind kind, std::initializer_list<Var> inputs, double param = 0.0) {
    return record(kind, std::span<const Var>(inputs.begin(), inputs.size()), param);
  }

  /// Registers an operation with a hand-written adjoint.
  Var custom(std::string name, std::span<const Var> inputs, Matrix value, Adjoint adjoint);

  /// Reverse sweep from a 1x1 root. Resets all gradients first, so calling it
  /// twice on the same tape gives the same result.
  void backward(const Var& root);

  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] const Matrix& grad(std::size_t id) const;
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  [[nodiscard]] const std::vector<std::size_t>& parents(std::size_t id) const {
    return nodes_[id].parents;
  }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    Adjoint adjoint;
    std::string op;
    bool requires_grad = false;
  };

  Var push(Node node);
  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
};

// Expression helpers. All of these call Tape::record.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);  // elementwise
Var operator/(const Var& a, const Var& b);  // elementwise
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator-(const Var& a, double b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator+(double a, const Var& b);
Var operator-(double a, const Var& b);
Var operator/(const Var& a, double b);

Var pow(const Var& a, double exponent);
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var abs(const Var& a);
Var dot_rows(const Var& a, const Var& b);
Var cross_rows(const Var& a, const Var& b);
Var norm_rows(const Var& a);
Var matmul(const Var& a, const Var& b);
Var sum(const Var& a);
Var clamp_min(const Var& a, double lo);
Var min(const Var& a, const Var& b);

// Structural ops; adjoints scatter back to the selected entries.
Var gather_rows(const Var& a, std::span<const Eigen::Index> rows);
Var concat_rows(std::span<const Var> parts);
/// Row r comes from `when_true` if mask[r], else from `when_false`.
Var select_rows(const std::vector<bool>& mask, const Var& when_true, const Var& when_false);

/// Central-difference check of the tape gradient of `f` at `x0`. Returns
/// max_k |analytic_k - numeric_k| / max(1, |numeric_k|).
double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x0,
                  double step);

}  // namespace primfit
