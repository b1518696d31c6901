#include <numeric>
#include <random>

#include "doctest.h"
#include "pcp/error.hpp"
#include "pcp/nets.hpp"
#include "support.hpp"

using namespace pcp;
using namespace pcp::ad;
using nets::Arch;
using testing::randn;

namespace {

Arch small_arch(int dim = 3) {
  Arch a;
  a.dim = dim;
  a.cond_width = 8;
  a.encoder_hidden = {8, 16};
  a.implicit_hidden = 16;
  a.implicit_layers = 4;
  a.implicit_skip = 2;
  a.query_hidden = 16;
  a.query_layers = 3;
  return a;
}

}  // namespace

TEST_CASE("encoder is invariant to point order") {
  std::mt19937_64 rng(1);
  nets::RegionEncoder enc(small_arch(), rng);
  const Tensor pts = randn(40, 3, rng);
  std::vector<Eigen::Index> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor shuffled(40, 3);
  for (Eigen::Index i = 0; i < 40; ++i) shuffled.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
  const Tensor a = enc.encode(Var::constant(pts)).value();
  const Tensor b = enc.encode(Var::constant(shuffled)).value();
  CHECK(a.rows() == 1);
  CHECK(a.cols() == 8);
  CHECK(a == b);
  CHECK_THROWS_AS(enc.encode(Var::constant(Tensor(0, 3))), Error);
  CHECK_THROWS_AS(enc.encode(Var::constant(randn(5, 2, rng))), Error);
}

TEST_CASE("implicit network") {
  std::mt19937_64 rng(2);
  nets::ImplicitNet net(small_arch(), rng);
  const Tensor q = randn(7, 3, rng, 0.5);
  const Tensor f = randn(1, 8, rng);

  SUBCASE("all-zero parameters give zero value and gradient") {
    for (auto& p : net.parameters()) p.var.mutable_value().setZero();
    auto sg = net.eval_with_grad(Var::input(q), Var::constant(f));
    CHECK(sg.sdf.value().cwiseAbs().maxCoeff() == 0.0);
    CHECK(sg.grad.value().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("shared condition row equals an explicitly repeated one") {
    Tensor rep(7, 8);
    for (Eigen::Index i = 0; i < 7; ++i) rep.row(i) = f;
    const Tensor a = net.eval(Var::constant(q), Var::constant(f)).value();
    const Tensor b = net.eval(Var::constant(q), Var::constant(rep)).value();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("rows are evaluated independently") {
    const Tensor all = net.eval(Var::constant(q), Var::constant(f)).value();
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      const Tensor one = net.eval(Var::constant(Tensor(q.row(i))), Var::constant(f)).value();
      CHECK(std::abs(one(0, 0) - all(i, 0)) < 1e-12);
    }
  }
  SUBCASE("query gradient matches finite differences") {
    auto sg = net.eval_with_grad(Var::input(q), Var::constant(f));
    Tensor qv = q;
    const Tensor fd = testing::fd_gradient(
        qv, [&] { return net.eval(Var::constant(qv), Var::constant(f)).value().sum(); }, 1e-6);
    CHECK(testing::rel_error(sg.grad.value(), fd) < 1e-6);
  }
  SUBCASE("100 random (q, f) pairs, step 1e-4") {
    // A ReLU net is piecewise linear: away from kinks central differences are
    // exact up to rounding. Pairs whose stencil crosses a kink show unequal
    // one-sided differences and are skipped; there must be few of them.
    const double h = 1e-4;
    double worst = 0.0;
    int skipped = 0;
    for (int t = 0; t < 100; ++t) {
      const Tensor qi = randn(1, 3, rng, 0.5);
      const Tensor fi = randn(1, 8, rng);
      auto sg = net.eval_with_grad(Var::input(qi), Var::constant(fi));
      auto s_at = [&](const Tensor& x) { return net.eval(Var::constant(x), Var::constant(fi)).scalar(); };
      Tensor fd(1, 3);
      bool kink = false;
      for (int a = 0; a < 3; ++a) {
        Tensor up = qi, down = qi;
        up(0, a) += h;
        down(0, a) -= h;
        const double fwd = (s_at(up) - s_at(qi)) / h, bwd = (s_at(qi) - s_at(down)) / h;
        kink = kink || std::abs(fwd - bwd) > 1e-6 * std::max(1.0, std::abs(fwd));
        fd(0, a) = 0.5 * (fwd + bwd);
      }
      if (kink) {
        ++skipped;
        continue;
      }
      worst = std::max(worst, testing::rel_error(sg.grad.value(), fd));
    }
    CHECK(worst < 1e-4);
    CHECK(skipped <= 10);
  }
  SUBCASE("width mismatches are rejected") {
    CHECK_THROWS_AS(net.eval(Var::constant(randn(3, 2, rng)), Var::constant(f)), Error);
    CHECK_THROWS_AS(net.eval(Var::constant(q), Var::constant(randn(1, 5, rng))), Error);
    CHECK_THROWS_AS(net.eval(Var::constant(q), Var::constant(randn(3, 8, rng))), Error);
  }
}

TEST_CASE("query network modes") {
  std::mt19937_64 rng(3);
  const Arch arch = small_arch(2);
  nets::QueryNet net(arch, rng);
  const Tensor q = randn(5, 2, rng);

  SUBCASE("no-shift passes the global query through") {
    auto p = net.predict(Var::constant(q), nets::QueryMode::NoShift);
    CHECK(p.query.value() == q);
    CHECK_FALSE(p.shift.defined());
    CHECK(p.condition.cols() == arch.cond_width);
  }
  SUBCASE("direct-q takes the local query from the head") {
    auto p = net.predict(Var::constant(q), nets::QueryMode::DirectQ);
    const Tensor raw = net.forward(Var::constant(q)).value();
    CHECK(p.query.value() == raw.rightCols(2));
  }
  SUBCASE("zero head: full mode is the identity with zero condition") {
    auto& params = net.parameters();
    const std::string head = "query." + std::to_string(arch.query_layers - 1);
    params.find(head + ".weight")->var.mutable_value().setZero();
    params.find(head + ".bias")->var.mutable_value().setZero();
    auto p = net.predict(Var::constant(q), nets::QueryMode::Full);
    CHECK(p.query.value() == q);
    CHECK(p.condition.value().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("head bias is a constant translation") {
    auto& params = net.parameters();
    const std::string head = "query." + std::to_string(arch.query_layers - 1);
    params.find(head + ".weight")->var.mutable_value().setZero();
    Tensor& b = params.find(head + ".bias")->var.mutable_value();
    b.setZero();
    b(0, arch.cond_width) = 0.25;
    b(0, arch.cond_width + 1) = -0.5;
    auto p = net.predict(Var::constant(q), nets::QueryMode::Full);
    CHECK((p.query.value().col(0).array() - q.col(0).array() - 0.25).abs().maxCoeff() < 1e-15);
    CHECK((p.query.value().col(1).array() - q.col(1).array() + 0.5).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("fixed-cond needs a condition of the right shape") {
    CHECK_THROWS_AS(net.predict(Var::constant(q), nets::QueryMode::FixedCond), Error);
    CHECK_THROWS_AS(net.predict(Var::constant(q), nets::QueryMode::FixedCond, Var::constant(randn(1, 3, rng))), Error);
    const Tensor c = randn(1, arch.cond_width, rng);
    auto p = net.predict(Var::constant(q), nets::QueryMode::FixedCond, Var::constant(c));
    CHECK(p.condition.value() == c);
  }
  SUBCASE("mode names round-trip") {
    for (auto m : {nets::QueryMode::Full, nets::QueryMode::NoShift, nets::QueryMode::DirectQ, nets::QueryMode::FixedCond})
      CHECK(nets::parse_query_mode(nets::to_string(m)) == m);
    CHECK_THROWS_AS(nets::parse_query_mode("sideways"), Error);
  }
}

TEST_CASE("architecture validation and parameter copies") {
  Arch a = small_arch();
  CHECK_NOTHROW(a.validate());
  a.dim = 4;
  CHECK_THROWS_AS(a.validate(), Error);
  a = small_arch();
  a.implicit_skip = a.implicit_layers;
  CHECK_THROWS_AS(a.validate(), Error);

  std::mt19937_64 r1(1), r2(2);
  nets::ImplicitNet x(small_arch(), r1), y(small_arch(), r2);
  CHECK(x.parameters().checksum() != y.parameters().checksum());
  nets::copy_values(x.parameters(), y.parameters());
  CHECK(x.parameters().checksum() == y.parameters().checksum());

  Arch wide = small_arch();
  wide.implicit_hidden = 32;
  nets::ImplicitNet z(wide, r1);
  CHECK_THROWS_AS(nets::copy_values(x.parameters(), z.parameters()), Error);
}
