#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Every value is a 2-D tensor; scalars are 1x1 and batches of vectors are
// stored one vector per row. Backward rules are written in terms of the same
// differentiable ops, so a gradient computed with create_graph=true is itself
// a node that can be differentiated again (double backprop).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pcp::ad {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {
struct Node;
}

class Var {
 public:
  Var() = default;

  /// Leaf that never receives gradients.
  static Var constant(Tensor value);
  /// Leaf that participates in differentiation but is not updated by optimizers.
  static Var input(Tensor value);
  /// Trainable leaf; backward() deposits adjoints on it.
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  Tensor& mutable_value();
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  std::string shape() const;
  const char* op() const;
  std::uint64_t id() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool trainable() const;
  /// Freezes or unfreezes a leaf. A frozen leaf behaves like an input.
  void set_trainable(bool on);

  bool has_grad() const;
  const Tensor& grad() const;
  void zero_grad();

  detail::Node* raw() const { return node_.get(); }

 private:
  friend struct Builder;
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

using BackwardFn =
    std::function<std::vector<Var>(const Var& self, const Var& grad, const std::vector<bool>& needed)>;

struct Node {
  Tensor value;
  const char* op = "leaf";
  std::vector<Var> parents;
  BackwardFn backward;
  std::optional<Tensor> grad;
  std::uint64_t id = 0;
  bool requires_grad = false;
  bool trainable = false;
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- primitives -----------------------------------------------------------
// Elementwise ops accept equal shapes or a 1x1 operand on either side.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var div(const Var& a, double c);

Var matmul(const Var& a, const Var& b);     // a * b
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var matmul_tn(const Var& a, const Var& b);  // a^T * b
Var transpose(const Var& a);

Var relu(const Var& a);
Var reciprocal(const Var& a);
/// 1/x with 1/0 := 0 (and zero derivative there).
Var safe_reciprocal(const Var& a);

/// Per-row L2 norm: (n x k) -> (n x 1). The derivative at a zero row is 0.
Var row_norm(const Var& a);
/// Scales row i of a by c(i): a is (n x k), c is (n x 1).
Var mul_col(const Var& a, const Var& c);
Var div_col(const Var& a, const Var& c);
/// Adds a (1 x k) row to every row of a (n x k).
Var add_row(const Var& a, const Var& row);

Var sum(const Var& a);
Var mean(const Var& a);
Var sum_rows(const Var& a);  // (n x k) -> (1 x k)
Var sum_cols(const Var& a);  // (n x k) -> (n x 1)
/// Column-wise max over rows, (n x k) -> (1 x k). Ties go to the lowest row.
Var max_rows(const Var& a);
Var repeat_rows(const Var& a, Eigen::Index n);

Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
/// Places a into a zero tensor with `total` columns starting at `start`.
Var embed_cols(const Var& a, Eigen::Index start, Eigen::Index total);
Var embed_rows(const Var& a, Eigen::Index start, Eigen::Index total);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

// ---- differentiation ------------------------------------------------------

/// Adjoints of a scalar root with respect to arbitrary ancestor nodes. With
/// create_graph the returned tensors are differentiable nodes. Targets the
/// root does not depend on get a zero tensor.
std::vector<Var> grad(const Var& root, std::span<const Var> targets, bool create_graph);

/// Deposits d(root)/d(leaf) on every trainable leaf reachable from root.
/// Throws if any of those leaves still holds a gradient from an earlier pass;
/// call zero_grad() (or let the optimizer clear it) first.
void backward(const Var& root);

struct InputGradient {
  Var value;
  bool connected = true;
};

/// d(output)/d(input) as a differentiable node (create_graph semantics).
/// `input` may be a leaf or an intermediate node of the graph. For a batch of
/// independent rows pass sum(per-row outputs) to get per-row gradients.
InputGradient input_gradient(const Var& output, const Var& input);

}  // namespace pcp::ad
