#include <random>

#include "doctest.h"
#include "pcp/autodiff.hpp"
#include "pcp/error.hpp"
#include "pcp/optim.hpp"
#include "support.hpp"

using namespace pcp::ad;
using testing::fd_gradient;
using testing::randn;
using testing::rel_error;

namespace {

Tensor row(std::initializer_list<double> v) {
  Tensor t(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) t(0, i++) = x;
  return t;
}

// Scalar probe: sum(out .* w) for fixed random w, so every output entry
// contributes a distinct weight.
Var probe(const Var& out, const Tensor& w) { return sum(mul(out, Var::constant(w))); }

struct UnaryCase {
  const char* name;
  std::function<Var(const Var&)> op;
  Eigen::Index r, c;
  double offset = 0.0;  // keeps inputs away from kinks/poles
};

struct BinaryCase {
  const char* name;
  std::function<Var(const Var&, const Var&)> op;
  Eigen::Index ar, ac, br, bc;
  double b_offset = 0.0;
};

void check_unary(const UnaryCase& k, std::mt19937_64& rng) {
  Tensor x0 = randn(k.r, k.c, rng);
  x0.array() += k.offset;
  Var x = Var::parameter(x0);
  Var out = k.op(x);
  const Tensor w = randn(out.rows(), out.cols(), rng);
  auto g = grad(probe(out, w), std::span<const Var>(&x, 1), false);
  Tensor xv = x0;
  auto f = [&] {
    NoGradGuard guard;
    return probe(k.op(Var::constant(xv)), w).scalar();
  };
  const Tensor fd = fd_gradient(xv, f, 1e-6);
  INFO(k.name);
  CHECK(rel_error(g[0].value(), fd) < 1e-6);
}

void check_binary(const BinaryCase& k, std::mt19937_64& rng) {
  Tensor a0 = randn(k.ar, k.ac, rng);
  Tensor b0 = randn(k.br, k.bc, rng);
  b0.array() += k.b_offset;
  Var a = Var::parameter(a0), b = Var::parameter(b0);
  Var out = k.op(a, b);
  const Tensor w = randn(out.rows(), out.cols(), rng);
  std::vector<Var> targets{a, b};
  auto g = grad(probe(out, w), targets, false);
  Tensor av = a0, bv = b0;
  auto f = [&] {
    NoGradGuard guard;
    return probe(k.op(Var::constant(av), Var::constant(bv)), w).scalar();
  };
  INFO(k.name);
  CHECK(rel_error(g[0].value(), fd_gradient(av, f, 1e-6)) < 1e-6);
  CHECK(rel_error(g[1].value(), fd_gradient(bv, f, 1e-6)) < 1e-6);
}

}  // namespace

TEST_CASE("elementwise and matrix forward values") {
  CHECK(add(Var::constant(row({1, 2})), Var::constant(row({3, 4}))).value() == row({4, 6}));
  CHECK(relu(Var::constant(row({-1, 2}))).value() == row({0, 2}));
  std::mt19937_64 rng(1);
  const Tensor v = randn(3, 1, rng);
  CHECK(matmul(Var::constant(Tensor::Identity(3, 3)), Var::constant(v)).value() == v);
}

TEST_CASE("shape mismatch names both shapes") {
  try {
    (void)add(Var::constant(Tensor::Zero(2, 3)), Var::constant(Tensor::Zero(3, 2)));
    FAIL("expected an error");
  } catch (const pcp::Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("3x2") != std::string::npos);
  }
  CHECK_THROWS_AS((void)matmul(Var::constant(Tensor::Zero(2, 3)), Var::constant(Tensor::Zero(2, 3))), pcp::Error);
}

TEST_CASE("backward on hand-computable graphs") {
  SUBCASE("product rule") {
    Var w = Var::parameter(Tensor::Constant(1, 1, 3.0));
    Var x = Var::constant(Tensor::Constant(1, 1, 2.0));
    backward(mul(w, x));
    CHECK(w.grad()(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("norm gradient") {
    Var v = Var::parameter(row({3, 4}));
    backward(sum(row_norm(v)));
    CHECK(v.grad()(0, 0) == doctest::Approx(0.6));
    CHECK(v.grad()(0, 1) == doctest::Approx(0.8));
  }
  SUBCASE("non-scalar root rejected") {
    Var v = Var::parameter(row({3, 4}));
    CHECK_THROWS_AS(backward(v), pcp::Error);
  }
  SUBCASE("unreset gradient rejected") {
    Var w = Var::parameter(Tensor::Constant(1, 1, 3.0));
    backward(mul(w, w));
    CHECK_THROWS_AS(backward(mul(w, w)), pcp::Error);
    w.zero_grad();
    backward(mul(w, w));
    CHECK(w.grad()(0, 0) == doctest::Approx(6.0));
  }
}

TEST_CASE("every primitive agrees with central differences") {
  std::mt19937_64 rng(7);
  const std::vector<UnaryCase> unary = {
      {"neg", [](const Var& x) { return neg(x); }, 3, 4},
      {"scale", [](const Var& x) { return scale(x, -1.7); }, 3, 4},
      {"add_scalar", [](const Var& x) { return add_scalar(x, 0.3); }, 3, 4},
      {"div", [](const Var& x) { return div(x, 2.5); }, 3, 4},
      {"transpose", [](const Var& x) { return transpose(x); }, 3, 4},
      {"relu", [](const Var& x) { return relu(x); }, 5, 4},
      {"reciprocal", [](const Var& x) { return reciprocal(x); }, 3, 4, 5.0},
      {"safe_reciprocal", [](const Var& x) { return safe_reciprocal(x); }, 3, 4, 5.0},
      {"row_norm", [](const Var& x) { return row_norm(x); }, 4, 3},
      {"sum", [](const Var& x) { return sum(x); }, 3, 4},
      {"mean", [](const Var& x) { return mean(x); }, 3, 4},
      {"sum_rows", [](const Var& x) { return sum_rows(x); }, 3, 4},
      {"sum_cols", [](const Var& x) { return sum_cols(x); }, 3, 4},
      {"max_rows", [](const Var& x) { return max_rows(x); }, 6, 4},
      {"repeat_rows", [](const Var& x) { return repeat_rows(x, 4); }, 1, 3},
      {"slice_cols", [](const Var& x) { return slice_cols(x, 1, 2); }, 3, 4},
      {"slice_rows", [](const Var& x) { return slice_rows(x, 1, 2); }, 4, 3},
      {"embed_cols", [](const Var& x) { return embed_cols(x, 1, 5); }, 3, 2},
      {"embed_rows", [](const Var& x) { return embed_rows(x, 2, 6); }, 2, 3},
      {"square", [](const Var& x) { return mul(x, x); }, 3, 4},
  };
  for (const auto& k : unary) check_unary(k, rng);

  const std::vector<BinaryCase> binary = {
      {"add", [](const Var& a, const Var& b) { return add(a, b); }, 3, 4, 3, 4},
      {"add broadcast", [](const Var& a, const Var& b) { return add(a, b); }, 3, 4, 1, 1},
      {"sub", [](const Var& a, const Var& b) { return sub(a, b); }, 3, 4, 3, 4},
      {"mul", [](const Var& a, const Var& b) { return mul(a, b); }, 3, 4, 3, 4},
      {"mul broadcast", [](const Var& a, const Var& b) { return mul(a, b); }, 3, 4, 1, 1},
      {"matmul", [](const Var& a, const Var& b) { return matmul(a, b); }, 3, 4, 4, 5},
      {"matmul_nt", [](const Var& a, const Var& b) { return matmul_nt(a, b); }, 3, 4, 5, 4},
      {"matmul_tn", [](const Var& a, const Var& b) { return matmul_tn(a, b); }, 4, 3, 4, 5},
      {"mul_col", [](const Var& a, const Var& b) { return mul_col(a, b); }, 3, 4, 3, 1},
      {"div_col", [](const Var& a, const Var& b) { return div_col(a, b); }, 3, 4, 3, 1, 5.0},
      {"add_row", [](const Var& a, const Var& b) { return add_row(a, b); }, 3, 4, 1, 4},
      {"concat_cols", [](const Var& a, const Var& b) { return concat_cols(a, b); }, 3, 2, 3, 4},
  };
  for (const auto& k : binary) check_binary(k, rng);
}

TEST_CASE("random 5-layer MLP adjoints match finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Var> ws, bs;
    std::vector<int> widths = {3, 16, 16, 16, 16, 1};
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      ws.push_back(Var::parameter(randn(widths[l], widths[l + 1], rng, 0.5)));
      bs.push_back(Var::parameter(randn(1, widths[l + 1], rng, 0.1)));
    }
    const Var x = Var::constant(randn(4, 3, rng));
    auto forward = [&] {
      Var h = x;
      for (std::size_t l = 0; l < ws.size(); ++l) {
        h = add_row(matmul(h, ws[l]), bs[l]);
        if (l + 1 < ws.size()) h = relu(h);
      }
      return sum(h);
    };
    backward(forward());
    for (auto& w : ws) {
      const Tensor analytic = w.grad();
      Tensor& wv = w.mutable_value();
      const Tensor fd = fd_gradient(wv, [&] {
        NoGradGuard guard;
        return forward().scalar();
      }, 1e-4);
      CHECK(rel_error(analytic, fd) < 1e-4);
      w.zero_grad();
    }
    for (auto& b : bs) b.zero_grad();
  }
}

TEST_CASE("input_gradient") {
  SUBCASE("squared norm") {
    Var q = Var::input(row({1, 2, 3}));
    auto g = input_gradient(sum(mul(q, q)), q);
    CHECK(g.connected);
    CHECK(g.value.value() == row({2, 4, 6}));
  }
  SUBCASE("constant in q gives zero and is flagged") {
    Var q = Var::input(row({1, 2, 3}));
    Var other = Var::parameter(row({1, 1, 1}));
    auto g = input_gradient(sum(other), q);
    CHECK_FALSE(g.connected);
    CHECK(g.value.value().isZero());
  }
  SUBCASE("gradient node is differentiable: d/dx (d/dx x^3) = 6x") {
    Var x = Var::parameter(Tensor::Constant(1, 1, 1.5));
    auto g = input_gradient(mul(x, mul(x, x)), x);
    CHECK(g.value.value()(0, 0) == doctest::Approx(3 * 1.5 * 1.5));
    backward(g.value);
    CHECK(x.grad()(0, 0) == doctest::Approx(6 * 1.5));
  }
  SUBCASE("intermediate node as input") {
    Var x = Var::input(row({0.5, -1.0}));
    Var y = scale(x, 2.0);
    auto g = input_gradient(sum(mul(y, y)), y);
    CHECK(g.value.value()(0, 0) == doctest::Approx(2.0));
    CHECK(g.value.value()(0, 1) == doctest::Approx(-4.0));
  }
  SUBCASE("linear F, loss on the gradient: weight adjoint matches FD") {
    std::mt19937_64 rng(3);
    Var w = Var::parameter(randn(3, 1, rng));
    const Tensor q0 = randn(1, 3, rng);
    auto loss = [&] {
      Var q = Var::input(q0);
      auto g = input_gradient(sum(matmul(q, w)), q);
      return sum(mul(slice_cols(g.value, 1, 1), slice_cols(g.value, 1, 1)));
    };
    backward(loss());
    const Tensor analytic = w.grad();
    Tensor& wv = w.mutable_value();
    const Tensor fd = fd_gradient(wv, [&] { return loss().scalar(); }, 1e-5);
    CHECK(rel_error(analytic, fd) < 1e-3);
  }
}

TEST_CASE("double backprop through a random 3-layer network") {
  std::mt19937_64 rng(5);
  std::vector<Var> ws = {Var::parameter(randn(3, 12, rng, 0.6)), Var::parameter(randn(12, 12, rng, 0.4)),
                         Var::parameter(randn(12, 1, rng, 0.4))};
  std::vector<Var> bs = {Var::parameter(randn(1, 12, rng, 0.1)), Var::parameter(randn(1, 12, rng, 0.1))};
  const Tensor q0 = randn(6, 3, rng);
  const Tensor target = randn(6, 3, rng);
  auto loss = [&] {
    Var q = Var::input(q0);
    Var h = relu(add_row(matmul(q, ws[0]), bs[0]));
    h = relu(add_row(matmul(h, ws[1]), bs[1]));
    Var s = matmul(h, ws[2]);
    auto g = input_gradient(sum(s), q);
    Var r = sub(g.value, Var::constant(target));
    return mean(sum_cols(mul(r, r)));
  };
  backward(loss());
  // The input gradient of a ReLU net does not depend on the biases, so they
  // receive no adjoint; their finite-difference gradient must vanish too.
  for (auto& b : bs) CHECK_FALSE(b.has_grad());
  for (auto* set : {&ws, &bs}) {
    for (auto& p : *set) {
      const Tensor analytic = p.has_grad() ? p.grad() : Tensor::Zero(p.rows(), p.cols());
      Tensor& pv = p.mutable_value();
      const Tensor fd = fd_gradient(pv, [&] { return loss().scalar(); }, 1e-6);
      CHECK(rel_error(analytic, fd) < 1e-3);
      p.zero_grad();
    }
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(9);
  Var w = Var::parameter(randn(4, 2, rng));
  const Var x = Var::constant(randn(5, 4, rng));
  auto l1 = [&] { return sum(relu(matmul(x, w))); };
  auto l2 = [&] { return mean(mul(matmul(x, w), matmul(x, w))); };
  backward(l1());
  const Tensor g1 = w.grad();
  w.zero_grad();
  backward(l2());
  const Tensor g2 = w.grad();
  w.zero_grad();
  backward(add(scale(l1(), 0.7), scale(l2(), -1.3)));
  CHECK((w.grad() - (0.7 * g1 - 1.3 * g2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("no-grad guard records nothing") {
  Var w = Var::parameter(row({1, 2}));
  NoGradGuard guard;
  Var y = mul(w, w);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("graph evaluation is deterministic") {
  std::mt19937_64 rng(2);
  const Tensor a = randn(8, 8, rng), b = randn(8, 8, rng);
  const Tensor r1 = relu(matmul(Var::constant(a), Var::constant(b))).value();
  const Tensor r2 = relu(matmul(Var::constant(a), Var::constant(b))).value();
  CHECK(r1 == r2);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterSet ps;
    Var p = Var::parameter(row({0.5, -0.25}));
    ps.add("p", p);
    backward(sum(mul(p, Var::constant(Tensor::Zero(1, 2)))));
    Adam adam({.lr = 0.01});
    adam.step(ps);
    CHECK(p.value() == row({0.5, -0.25}));
  }
  SUBCASE("first step moves by about lr") {
    ParameterSet ps;
    Var p = Var::parameter(Tensor::Constant(1, 1, 1.0));
    ps.add("p", p);
    backward(p);
    Adam adam({.lr = 0.01});
    adam.step(ps);
    CHECK(p.value()(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK_FALSE(p.has_grad());
    CHECK(adam.steps() == 1);
  }
  SUBCASE("identical inputs give bit-identical updates") {
    std::mt19937_64 r1(4), r2(4);
    ParameterSet a, b;
    Var pa = Var::parameter(randn(3, 3, r1)), pb = Var::parameter(randn(3, 3, r2));
    a.add("p", pa);
    b.add("p", pb);
    Adam ad1, ad2;
    for (int i = 0; i < 3; ++i) {
      backward(sum(mul(pa, pa)));
      backward(sum(mul(pb, pb)));
      ad1.step(a);
      ad2.step(b);
    }
    CHECK(pa.value() == pb.value());
  }
  SUBCASE("missing adjoint: strict rejects, lenient skips") {
    ParameterSet ps;
    Var p = Var::parameter(row({1.0}));
    ps.add("p", p);
    Adam lenient;
    lenient.step(ps);
    CHECK(p.value()(0, 0) == 1.0);
    Adam strict({.strict = true});
    CHECK_THROWS_AS(strict.step(ps), pcp::Error);
  }
  SUBCASE("duplicate names rejected") {
    ParameterSet ps;
    ps.add("p", Var::parameter(row({1.0})));
    CHECK_THROWS_AS(ps.add("p", Var::parameter(row({1.0}))), pcp::Error);
  }
}
