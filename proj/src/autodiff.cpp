#include "pcp/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "pcp/error.hpp"

namespace pcp::ad {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};

std::string shape_of(const Tensor& t) {
  std::ostringstream os;
  os << '(' << t.rows() << 'x' << t.cols() << ')';
  return os.str();
}

bool is_scalar(const Tensor& t) { return t.rows() == 1 && t.cols() == 1; }

[[noreturn]] void shape_mismatch(const char* op, const Var& a, const Var& b) {
  usage_error(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}

void require_same_or_scalar(const char* op, const Var& a, const Var& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return;
  if (is_scalar(a.value()) || is_scalar(b.value())) return;
  shape_mismatch(op, a, b);
}

Tensor ones_like(const Tensor& t) { return Tensor::Ones(t.rows(), t.cols()); }

}  // namespace

struct Builder {
  static Var leaf(Tensor value, bool requires_grad, bool trainable) {
    auto n = std::make_shared<detail::Node>();
    n->value = std::move(value);
    n->id = g_next_id++;
    n->requires_grad = requires_grad;
    n->trainable = trainable;
    return Var(std::move(n));
  }

  static Var op(const char* name, Tensor value, std::vector<Var> parents, detail::BackwardFn fn) {
    auto n = std::make_shared<detail::Node>();
    n->value = std::move(value);
    n->op = name;
    n->id = g_next_id++;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (t_grad_enabled && any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward = std::move(fn);
    }
    return Var(std::move(n));
  }

  static const std::shared_ptr<detail::Node>& node(const Var& v) { return v.node_; }
};

// ---- Var ------------------------------------------------------------------

Var Var::constant(Tensor value) { return Builder::leaf(std::move(value), false, false); }
Var Var::input(Tensor value) { return Builder::leaf(std::move(value), true, false); }
Var Var::parameter(Tensor value) { return Builder::leaf(std::move(value), true, true); }

const Tensor& Var::value() const { return node_->value; }
Tensor& Var::mutable_value() { return node_->value; }

double Var::scalar() const {
  if (!is_scalar(value())) usage_error("scalar(): tensor has shape " + shape());
  return value()(0, 0);
}

std::string Var::shape() const { return defined() ? shape_of(node_->value) : "(undefined)"; }
const char* Var::op() const { return node_->op; }
std::uint64_t Var::id() const { return node_->id; }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }
bool Var::is_leaf() const { return !node_->backward; }
bool Var::trainable() const { return node_->trainable; }

void Var::set_trainable(bool on) {
  if (!is_leaf()) usage_error("set_trainable: only leaves can be frozen");
  node_->trainable = on;
  node_->requires_grad = on;
  if (!on) node_->grad.reset();
}

bool Var::has_grad() const { return node_->grad.has_value(); }

const Tensor& Var::grad() const {
  if (!node_->grad) usage_error("grad(): no adjoint present");
  return *node_->grad;
}

void Var::zero_grad() { node_->grad.reset(); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- primitives -----------------------------------------------------------

namespace {

// Reduces a gradient to the shape of an operand that was scalar-broadcast.
Var reduce_to(const Var& g, const Var& target) {
  if (is_scalar(target.value()) && !is_scalar(g.value())) return sum(g);
  return g;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_or_scalar("add", a, b);
  Tensor out;
  if (is_scalar(a.value()) && !is_scalar(b.value()))
    out = (b.value().array() + a.scalar()).matrix();
  else if (is_scalar(b.value()) && !is_scalar(a.value()))
    out = (a.value().array() + b.scalar()).matrix();
  else
    out = a.value() + b.value();
  return Builder::op("add", std::move(out), {a, b},
                     [](const Var& self, const Var& g, const std::vector<bool>& need) {
                       const auto& p = Builder::node(self)->parents;
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = reduce_to(g, p[0]);
                       if (need[1]) r[1] = reduce_to(g, p[1]);
                       return r;
                     });
}

Var sub(const Var& a, const Var& b) {
  require_same_or_scalar("sub", a, b);
  Tensor out;
  if (is_scalar(a.value()) && !is_scalar(b.value()))
    out = (a.scalar() - b.value().array()).matrix();
  else if (is_scalar(b.value()) && !is_scalar(a.value()))
    out = (a.value().array() - b.scalar()).matrix();
  else
    out = a.value() - b.value();
  return Builder::op("sub", std::move(out), {a, b},
                     [](const Var& self, const Var& g, const std::vector<bool>& need) {
                       const auto& p = Builder::node(self)->parents;
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = reduce_to(g, p[0]);
                       if (need[1]) r[1] = reduce_to(neg(g), p[1]);
                       return r;
                     });
}

Var mul(const Var& a, const Var& b) {
  require_same_or_scalar("mul", a, b);
  Tensor out;
  if (is_scalar(a.value()) && !is_scalar(b.value()))
    out = b.value() * a.scalar();
  else if (is_scalar(b.value()) && !is_scalar(a.value()))
    out = a.value() * b.scalar();
  else
    out = a.value().cwiseProduct(b.value());
  return Builder::op("mul", std::move(out), {a, b},
                     [](const Var& self, const Var& g, const std::vector<bool>& need) {
                       const auto& p = Builder::node(self)->parents;
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = reduce_to(mul(g, p[1]), p[0]);
                       if (need[1]) r[1] = reduce_to(mul(g, p[0]), p[1]);
                       return r;
                     });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  return Builder::op("scale", a.value() * c, {a},
                     [c](const Var&, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{scale(g, c)};
                     });
}

Var add_scalar(const Var& a, double c) {
  return Builder::op("add_scalar", (a.value().array() + c).matrix(), {a},
                     [](const Var&, const Var& g, const std::vector<bool>&) { return std::vector<Var>{g}; });
}

Var div(const Var& a, double c) {
  if (c == 0.0) numeric_error("div: division by zero");
  return scale(a, 1.0 / c);
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  Tensor out = a.value() * b.value();
  return Builder::op("matmul", std::move(out), {a, b},
                     [](const Var& self, const Var& g, const std::vector<bool>& need) {
                       const auto& p = Builder::node(self)->parents;
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = matmul_nt(g, p[1]);
                       if (need[1]) r[1] = matmul_tn(p[0], g);
                       return r;
                     });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
  Tensor out = a.value() * b.value().transpose();
  return Builder::op("matmul_nt", std::move(out), {a, b},
                     [](const Var& self, const Var& g, const std::vector<bool>& need) {
                       const auto& p = Builder::node(self)->parents;
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = matmul(g, p[1]);
                       if (need[1]) r[1] = matmul_tn(g, p[0]);
                       return r;
                     });
}

Var matmul_tn(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) shape_mismatch("matmul_tn", a, b);
  Tensor out = a.value().transpose() * b.value();
  return Builder::op("matmul_tn", std::move(out), {a, b},
                     [](const Var& self, const Var& g, const std::vector<bool>& need) {
                       const auto& p = Builder::node(self)->parents;
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = matmul_nt(p[1], g);
                       if (need[1]) r[1] = matmul(p[0], g);
                       return r;
                     });
}

Var transpose(const Var& a) {
  Tensor out = a.value().transpose();
  return Builder::op("transpose", std::move(out), {a},
                     [](const Var&, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{transpose(g)};
                     });
}

Var relu(const Var& a) {
  Tensor out = a.value().cwiseMax(0.0);
  return Builder::op("relu", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       const auto& x = Builder::node(self)->parents[0].value();
                       Tensor mask = (x.array() > 0.0).cast<double>().matrix();
                       return std::vector<Var>{mul(g, Var::constant(std::move(mask)))};
                     });
}

Var reciprocal(const Var& a) {
  if ((a.value().array() == 0.0).any()) numeric_error("reciprocal: zero entry in " + a.shape());
  Tensor out = a.value().cwiseInverse();
  return Builder::op("reciprocal", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{neg(mul(g, mul(self, self)))};
                     });
}

Var safe_reciprocal(const Var& a) {
  Tensor out = a.value().unaryExpr([](double x) { return x == 0.0 ? 0.0 : 1.0 / x; });
  return Builder::op("safe_reciprocal", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{neg(mul(g, mul(self, self)))};
                     });
}

Var row_norm(const Var& a) {
  Tensor out = a.value().rowwise().norm();
  return Builder::op("row_norm", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       const auto& x = Builder::node(self)->parents[0];
                       return std::vector<Var>{mul_col(x, mul(g, safe_reciprocal(self)))};
                     });
}

Var mul_col(const Var& a, const Var& c) {
  if (c.cols() != 1 || c.rows() != a.rows()) shape_mismatch("mul_col", a, c);
  Tensor out = c.value().col(0).asDiagonal() * a.value();
  return Builder::op("mul_col", std::move(out), {a, c},
                     [](const Var& self, const Var& g, const std::vector<bool>& need) {
                       const auto& p = Builder::node(self)->parents;
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = mul_col(g, p[1]);
                       if (need[1]) r[1] = sum_cols(mul(g, p[0]));
                       return r;
                     });
}

Var div_col(const Var& a, const Var& c) { return mul_col(a, reciprocal(c)); }

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_mismatch("add_row", a, row);
  Tensor out = a.value().rowwise() + row.value().row(0);
  return Builder::op("add_row", std::move(out), {a, row},
                     [](const Var&, const Var& g, const std::vector<bool>& need) {
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = g;
                       if (need[1]) r[1] = sum_rows(g);
                       return r;
                     });
}

Var sum(const Var& a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return Builder::op("sum", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       const auto& x = Builder::node(self)->parents[0].value();
                       return std::vector<Var>{mul(Var::constant(ones_like(x)), g)};
                     });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) usage_error("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum_rows(const Var& a) {
  Tensor out = a.value().colwise().sum();
  return Builder::op("sum_rows", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       const auto n = Builder::node(self)->parents[0].rows();
                       return std::vector<Var>{repeat_rows(g, n)};
                     });
}

Var sum_cols(const Var& a) {
  Tensor out = a.value().rowwise().sum();
  return Builder::op("sum_cols", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       const auto& x = Builder::node(self)->parents[0].value();
                       return std::vector<Var>{mul_col(Var::constant(ones_like(x)), g)};
                     });
}

Var max_rows(const Var& a) {
  if (a.rows() == 0) usage_error("max_rows: empty tensor");
  const auto& x = a.value();
  Tensor out(1, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < x.rows(); ++i)
      if (x(i, j) > x(best, j)) best = i;
    out(0, j) = x(best, j);
  }
  return Builder::op("max_rows", std::move(out), {a},
                     [](const Var& self, const Var& g, const std::vector<bool>&) {
                       const auto& in = Builder::node(self)->parents[0].value();
                       Tensor mask = Tensor::Zero(in.rows(), in.cols());
                       for (Eigen::Index j = 0; j < in.cols(); ++j) {
                         Eigen::Index best = 0;
                         for (Eigen::Index i = 1; i < in.rows(); ++i)
                           if (in(i, j) > in(best, j)) best = i;
                         mask(best, j) = 1.0;
                       }
                       return std::vector<Var>{mul(repeat_rows(g, in.rows()), Var::constant(std::move(mask)))};
                     });
}

Var repeat_rows(const Var& a, Eigen::Index n) {
  if (a.rows() != 1) usage_error("repeat_rows: expected a single row, got " + a.shape());
  Tensor out = a.value().replicate(n, 1);
  return Builder::op("repeat_rows", std::move(out), {a},
                     [](const Var&, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{sum_rows(g)};
                     });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) shape_mismatch("concat_cols", a, b);
  Tensor out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const auto ca = a.cols(), cb = b.cols();
  return Builder::op("concat_cols", std::move(out), {a, b},
                     [ca, cb](const Var&, const Var& g, const std::vector<bool>& need) {
                       std::vector<Var> r(2);
                       if (need[0]) r[0] = slice_cols(g, 0, ca);
                       if (need[1]) r[1] = slice_cols(g, ca, cb);
                       return r;
                     });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    usage_error("slice_cols: range out of bounds for " + a.shape());
  Tensor out = a.value().middleCols(start, count);
  const auto total = a.cols();
  return Builder::op("slice_cols", std::move(out), {a},
                     [start, total](const Var&, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{embed_cols(g, start, total)};
                     });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    usage_error("slice_rows: range out of bounds for " + a.shape());
  Tensor out = a.value().middleRows(start, count);
  const auto total = a.rows();
  return Builder::op("slice_rows", std::move(out), {a},
                     [start, total](const Var&, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{embed_rows(g, start, total)};
                     });
}

Var embed_cols(const Var& a, Eigen::Index start, Eigen::Index total) {
  if (start < 0 || start + a.cols() > total) usage_error("embed_cols: range out of bounds");
  Tensor out = Tensor::Zero(a.rows(), total);
  out.middleCols(start, a.cols()) = a.value();
  const auto count = a.cols();
  return Builder::op("embed_cols", std::move(out), {a},
                     [start, count](const Var&, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{slice_cols(g, start, count)};
                     });
}

Var embed_rows(const Var& a, Eigen::Index start, Eigen::Index total) {
  if (start < 0 || start + a.rows() > total) usage_error("embed_rows: range out of bounds");
  Tensor out = Tensor::Zero(total, a.cols());
  out.middleRows(start, a.rows()) = a.value();
  const auto count = a.rows();
  return Builder::op("embed_rows", std::move(out), {a},
                     [start, count](const Var&, const Var& g, const std::vector<bool>&) {
                       return std::vector<Var>{slice_rows(g, start, count)};
                     });
}

// ---- differentiation ------------------------------------------------------

std::vector<Var> grad(const Var& root, std::span<const Var> targets, bool create_graph) {
  if (!root.defined()) usage_error("grad: undefined root");
  if (!is_scalar(root.value())) usage_error("grad: root must be scalar, got " + root.shape());

  // Collect the requires_grad subgraph above root.
  std::vector<detail::Node*> nodes;
  std::unordered_map<detail::Node*, Var> handle;
  {
    std::vector<Var> stack;
    if (root.requires_grad()) stack.push_back(root);
    std::unordered_set<detail::Node*> seen;
    while (!stack.empty()) {
      Var v = std::move(stack.back());
      stack.pop_back();
      auto* n = v.raw();
      if (!seen.insert(n).second) continue;
      nodes.push_back(n);
      for (const auto& p : n->parents)
        if (p.requires_grad()) stack.push_back(p);
      handle.emplace(n, std::move(v));
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id < b->id; });

  // Nodes from which at least one target is reachable; others need no adjoint.
  std::unordered_set<detail::Node*> target_set;
  for (const auto& t : targets) target_set.insert(t.raw());
  std::unordered_set<detail::Node*> relevant;
  for (auto* n : nodes) {
    bool r = target_set.count(n) > 0;
    for (const auto& p : n->parents) r = r || relevant.count(p.raw()) > 0;
    if (r) relevant.insert(n);
  }

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  std::unordered_map<detail::Node*, Var> adj;
  if (relevant.count(root.raw())) adj.emplace(root.raw(), Var::constant(Tensor::Ones(1, 1)));

  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto* n = *it;
    if (!relevant.count(n) || !n->backward) continue;
    auto a = adj.find(n);
    if (a == adj.end()) continue;
    std::vector<bool> need(n->parents.size());
    bool any = false;
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      need[i] = n->parents[i].requires_grad() && relevant.count(n->parents[i].raw()) > 0;
      any = any || need[i];
    }
    if (!any) continue;
    std::vector<Var> pg = n->backward(handle.at(n), a->second, need);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      if (!need[i] || !pg[i].defined()) continue;
      auto* pn = n->parents[i].raw();
      auto existing = adj.find(pn);
      if (existing == adj.end())
        adj.emplace(pn, std::move(pg[i]));
      else
        existing->second = add(existing->second, pg[i]);
    }
    // Intermediate adjoints are no longer needed once propagated, unless a
    // target asked for them.
    if (!target_set.count(n)) adj.erase(n);
  }

  std::vector<Var> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    auto a = adj.find(t.raw());
    if (a != adj.end())
      out.push_back(a->second);
    else
      out.push_back(Var::constant(Tensor::Zero(t.rows(), t.cols())));
  }
  return out;
}

void backward(const Var& root) {
  if (!root.defined() || !is_scalar(root.value()))
    usage_error("backward: root must be scalar, got " + root.shape());
  std::vector<Var> leaves;
  {
    std::vector<Var> stack;
    if (root.requires_grad()) stack.push_back(root);
    std::unordered_set<detail::Node*> seen;
    while (!stack.empty()) {
      Var v = std::move(stack.back());
      stack.pop_back();
      if (!seen.insert(v.raw()).second) continue;
      if (v.is_leaf()) {
        if (v.trainable()) leaves.push_back(v);
        continue;
      }
      for (const auto& p : v.raw()->parents)
        if (p.requires_grad()) stack.push_back(p);
    }
  }
  for (const auto& l : leaves)
    if (l.has_grad()) usage_error("backward: parameter already holds a gradient; call zero_grad() first");
  auto grads = grad(root, leaves, false);
  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i].raw()->grad = grads[i].value();
}

InputGradient input_gradient(const Var& output, const Var& input) {
  if (!is_scalar(output.value())) usage_error("input_gradient: output must be scalar, got " + output.shape());
  if (!input.requires_grad()) return {Var::constant(Tensor::Zero(input.rows(), input.cols())), false};
  // Reachability check: is input an ancestor of output?
  bool connected = false;
  {
    std::vector<detail::Node*> stack{output.raw()};
    std::unordered_set<detail::Node*> seen;
    while (!stack.empty() && !connected) {
      auto* n = stack.back();
      stack.pop_back();
      if (n == input.raw()) connected = true;
      if (!seen.insert(n).second) continue;
      for (const auto& p : n->parents)
        if (p.requires_grad()) stack.push_back(p.raw());
    }
  }
  if (!connected) return {Var::constant(Tensor::Zero(input.rows(), input.cols())), false};
  auto g = grad(output, std::span<const Var>(&input, 1), true);
  return {g[0], true};
}

}  // namespace pcp::ad
