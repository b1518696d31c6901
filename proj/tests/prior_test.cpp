#include <random>

#include "doctest.h"
#include "pcp/error.hpp"
#include "pcp/prior.hpp"
#include "support.hpp"

using namespace pcp;
using namespace pcp::ad;

namespace {

nets::Arch tiny_arch(int dim) {
  nets::Arch a;
  a.dim = dim;
  a.cond_width = 4;
  a.encoder_hidden = {8};
  a.implicit_hidden = 8;
  a.implicit_layers = 3;
  a.implicit_skip = 1;
  a.query_hidden = 8;
  a.query_layers = 2;
  return a;
}

std::vector<LocalRegion> circle_regions() {
  Matrix p(64, 2);
  for (int i = 0; i < 64; ++i) {
    const double t = 2.0 * M_PI * i / 64.0;
    p.row(i) << 0.5 * std::cos(t), 0.5 * std::sin(t);
  }
  return build_local_regions(PointCloud(p), 2);
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.queries_per_region = 64;
  c.sampling.per_point = 8;
  c.sampling.k_sigma = 3;
  c.adam.lr = 1e-3;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("pulling loss by hand") {
  // q = (1, 0), s = 0.5, grad = (2, 0): pulled = (0.5, 0).
  const Var q = Var::constant(Tensor{{1.0, 0.0}});
  const Var s = Var::constant(Tensor{{0.5}});
  const Var g = Var::constant(Tensor{{2.0, 0.0}});
  const Var nn = Var::constant(Tensor{{0.0, 0.0}});
  const Tensor pulled = pulled_points(q, s, g).value();
  CHECK(pulled(0, 0) == doctest::Approx(0.5));
  CHECK(pulled(0, 1) == 0.0);
  CHECK(pulling_loss(q, nn, s, g, LossMode::Squared).scalar() == doctest::Approx(0.25));
  CHECK(pulling_loss(q, nn, s, g, LossMode::Plain).scalar() == doctest::Approx(0.5));

  SUBCASE("batch mean") {
    const Var q2 = Var::constant(Tensor{{1.0, 0.0}, {0.0, 3.0}});
    const Var s2 = Var::constant(Tensor{{0.5}, {1.0}});
    const Var g2 = Var::constant(Tensor{{2.0, 0.0}, {0.0, -1.0}});
    const Var nn2 = Var::constant(Tensor{{0.0, 0.0}, {0.0, 0.0}});
    // Second row pulls to (0, 4): squared residual 16.
    CHECK(pulling_loss(q2, nn2, s2, g2, LossMode::Squared).scalar() == doctest::Approx((0.25 + 16.0) / 2));
    CHECK(pulling_loss(q2, nn2, s2, g2, LossMode::Plain).scalar() == doctest::Approx((0.5 + 4.0) / 2));
  }
  SUBCASE("zero gradient leaves the query in place") {
    const Var z = Var::constant(Tensor{{0.0, 0.0}});
    CHECK(pulled_points(q, s, z).value() == q.value());
  }
  SUBCASE("mode names") {
    CHECK(parse_loss_mode("plain") == LossMode::Plain);
    CHECK(parse_loss_mode(to_string(LossMode::Squared)) == LossMode::Squared);
    CHECK(parse_sigma_mode("stddev") == SigmaMode::StdDev);
    CHECK_THROWS_AS(parse_loss_mode("cubic"), Error);
  }
}

TEST_CASE("pulling loss gradients match finite differences") {
  std::mt19937_64 rng(11);
  Var s = Var::parameter(testing::randn(6, 1, rng));
  Var g = Var::parameter(testing::randn(6, 2, rng));
  const Var q = Var::constant(testing::randn(6, 2, rng));
  const Var nn = Var::constant(testing::randn(6, 2, rng));
  for (auto mode : {LossMode::Squared, LossMode::Plain}) {
    backward(pulling_loss(q, nn, s, g, mode));
    for (Var* p : {&s, &g}) {
      const Tensor analytic = p->grad();
      Tensor& v = p->mutable_value();
      const Tensor fd = testing::fd_gradient(v, [&] { return pulling_loss(q, nn, s, g, mode).scalar(); }, 1e-6);
      CHECK(testing::rel_error(analytic, fd) < 1e-6);
      p->zero_grad();
    }
  }
}

TEST_CASE("prior training") {
  const auto regions = circle_regions();
  REQUIRE(regions.size() == 4);
  const auto arch = tiny_arch(2);

  SUBCASE("zero epochs returns the initialization") {
    const auto init = init_prior(arch, 7);
    const auto trained = train_local_prior(regions, arch, quick_config(0));
    CHECK(trained.all_parameters().checksum() == init.all_parameters().checksum());
    CHECK(trained.loss_history.empty());
  }
  SUBCASE("same seed, same weights; one step per region per epoch") {
    int calls = 0;
    const auto a = train_local_prior(regions, arch, quick_config(3), [&](int, double) { ++calls; });
    const auto b = train_local_prior(regions, arch, quick_config(3));
    CHECK(calls == 3);
    CHECK(a.loss_history.size() == 12);
    CHECK(a.epoch_loss.size() == 3);
    CHECK(a.all_parameters().checksum() == b.all_parameters().checksum());
    auto c3 = quick_config(3);
    c3.seed = 8;
    CHECK(train_local_prior(regions, arch, c3).all_parameters().checksum() != a.all_parameters().checksum());
  }
  SUBCASE("loss goes down") {
    auto cfg = quick_config(150);
    cfg.adam.lr = 3e-3;
    const auto p = train_local_prior(regions, arch, cfg);
    CHECK(p.epoch_loss.back() < 0.5 * p.epoch_loss.front());
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(train_local_prior({}, arch, quick_config(1)), Error);
    CHECK_THROWS_AS(train_local_prior(regions, tiny_arch(3), quick_config(1)), Error);
  }
}

TEST_CASE("cloud condition ignores placement and order") {
  const auto prior = init_prior(tiny_arch(2), 1);
  std::mt19937_64 rng(4);
  const Matrix p = testing::uniform_points(30, 2, rng);
  Matrix moved = (p * 3.0).rowwise() + Eigen::RowVector2d(5.0, -2.0);
  Matrix reversed = p.colwise().reverse();
  const Tensor a = cloud_condition(prior, PointCloud(p));
  CHECK((a - cloud_condition(prior, PointCloud(moved))).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a == cloud_condition(prior, PointCloud(reversed)));
}
