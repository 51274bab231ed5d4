#include <cmath>

#include "doctest.h"
#include "nlw/errors.hpp"
#include "nlw/nncore.hpp"
#include "test_util.hpp"

using namespace nlw;
using namespace nlw::test;

TEST_CASE("mlp_forward: zero parameters give zero logits") {
  const MlpShape s{3, 5, 4};
  Rng rng(1);
  const auto logits = mlp_forward(MlpParams<double>::zeros(s), random_matrix(6, 3, rng));
  CHECK(logits.isZero(0.0));
  const Mat probs = softmax_rows(logits);
  CHECK((probs.array() - 0.25).abs().maxCoeff() < 1e-15);
}

TEST_CASE("mlp_forward: identity layers pass nonnegative input through") {
  const MlpShape s{4, 4, 4};
  auto p = MlpParams<double>::zeros(s);
  p.w1.setIdentity();
  p.w2.setIdentity();
  Rng rng(2);
  const Mat x = random_matrix(5, 4, rng).cwiseAbs();
  CHECK(mlp_forward(p, x) == x);
}

TEST_CASE("mlp_forward matches a scalar loop") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpShape s{5, 7, 3};
    const auto p = random_params(s, rng);
    const Mat x = random_matrix(4, 5, rng);
    const Mat logits = mlp_forward(p, x);
    for (Index n = 0; n < x.rows(); ++n) {
      std::vector<double> h(static_cast<std::size_t>(s.hidden));
      for (Index j = 0; j < s.hidden; ++j) {
        double z = p.b1(j);
        for (Index i = 0; i < s.input; ++i) z += p.w1(j, i) * x(n, i);
        h[static_cast<std::size_t>(j)] = z > 0 ? z : 0.0;
      }
      for (Index c = 0; c < s.classes; ++c) {
        double o = p.b2(c);
        for (Index j = 0; j < s.hidden; ++j) o += p.w2(c, j) * h[static_cast<std::size_t>(j)];
        CHECK(std::abs(o - logits(n, c)) < 1e-10);
      }
    }
  }
}

TEST_CASE("mlp_forward rejects a wrong input width") {
  Rng rng(4);
  const auto p = random_params({3, 4, 2}, rng);
  CHECK_THROWS_AS(mlp_forward(p, random_matrix(2, 5, rng)), ShapeError);
}

TEST_CASE("ce_loss_and_grad: analytic values") {
  SUBCASE("uniform logits over ten classes cost ln 10") {
    Mat t = Mat::Zero(1, 10);
    t(0, 3) = 1.0;
    const auto lg = ce_loss_and_grad<double>(Mat::Zero(1, 10), t);
    CHECK(lg.per_sample(0) == doctest::Approx(2.302585092994046).epsilon(1e-12));
  }
  SUBCASE("saturated correct logit costs nearly nothing") {
    Mat logits = Mat::Zero(1, 4);
    logits(0, 2) = 1000.0;
    Mat t = Mat::Zero(1, 4);
    t(0, 2) = 1.0;
    const auto lg = ce_loss_and_grad(logits, t);
    CHECK(lg.per_sample(0) < 1e-6);
    CHECK(lg.grad_logits.allFinite());
  }
  SUBCASE("huge wrong logit stays finite") {
    Mat logits = Mat::Zero(1, 3);
    logits(0, 0) = 1e4;
    Mat t = Mat::Zero(1, 3);
    t(0, 1) = 1.0;
    const auto lg = ce_loss_and_grad(logits, t);
    CHECK(std::isfinite(lg.per_sample(0)));
    CHECK(lg.per_sample(0) == doctest::Approx(1e4));
  }
}

TEST_CASE("ce_loss_and_grad validates its inputs") {
  CHECK_THROWS_AS(ce_loss_and_grad<double>(Mat(0, 3), Mat(0, 3)), ShapeError);
  Mat off(1, 2);
  off << 0.7, 0.7;
  CHECK_THROWS_AS(ce_loss_and_grad<double>(Mat::Zero(1, 2), off), ArgumentError);
  CHECK_THROWS(ce_loss_and_grad<double>(Mat::Zero(2, 2), Mat::Identity(3, 2)));
}

TEST_CASE("ce gradient matches finite differences on the logits") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat logits = random_matrix(3, 4, rng, 2.0);
    const Mat t = random_simplex_rows(3, 4, rng);
    const auto lg = ce_loss_and_grad(logits, t);
    const double h = 1e-5;
    for (Index i = 0; i < logits.size(); ++i) {
      Mat up = logits, down = logits;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double numeric =
          (ce_loss_and_grad(up, t).per_sample.sum() - ce_loss_and_grad(down, t).per_sample.sum()) / (2 * h);
      const double a = lg.grad_logits.data()[i];
      CHECK(std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}) < 1e-4);
    }
  }
}

TEST_CASE("backward: zero upstream gradient gives zero gradients") {
  Rng rng(6);
  const auto p = random_params({3, 6, 2}, rng);
  const Mat x = random_matrix(4, 3, rng);
  const auto g = backward(p, x, Mat(Mat::Zero(4, 2)));
  g.for_each_block([](const auto& b) { CHECK(b.isZero(0.0)); });
}

TEST_CASE("backward: a unit with negative pre-activation passes no gradient") {
  const MlpShape s{2, 2, 2};
  auto p = MlpParams<double>::zeros(s);
  p.w1 << 1.0, 0.0, -1.0, 0.0;  // unit 1 sees -x0
  p.w2 << 1.0, 1.0, -1.0, 2.0;
  Mat x(1, 2);
  x << 0.5, 0.3;
  Mat up(1, 2);
  up << 0.3, -0.7;
  const auto g = backward(p, x, up);
  CHECK(g.w1.row(1).isZero(0.0));
  CHECK(g.b1(1) == 0.0);
  CHECK(g.w2.col(1).isZero(0.0));
  CHECK_FALSE(g.w1.row(0).isZero(0.0));
}

TEST_CASE("backward matches finite differences for both losses") {
  Rng rng(7);
  int checked = 0;
  while (checked < 50) {
    const MlpShape s{4, 6, 3};
    const auto p = random_params(s, rng);
    const Mat x = random_matrix(3, 4, rng);
    if (kink_margin(p, x) < 1e-2) continue;
    const Mat t = random_simplex_rows(3, 3, rng);
    const bool use_ce = checked % 2 == 0;
    auto loss = [&](const MlpParams<double>& q) {
      const Mat logits = mlp_forward(q, x);
      return (use_ce ? ce_loss_and_grad(logits, t) : softmax_mse_loss_and_grad(logits, t)).per_sample.mean();
    };
    const auto fwd = forward_pass(p, x);
    const auto lg = use_ce ? ce_loss_and_grad(fwd.logits, t) : softmax_mse_loss_and_grad(fwd.logits, t);
    const auto g = backward(p, x, fwd, Mat(lg.grad_logits / 3.0));
    CHECK(max_rel_error(flatten(g), numeric_gradient(p, loss)) < 1e-4);
    ++checked;
  }
}

TEST_CASE("softmax_mse: equal distributions cost nothing, gradient matches differences") {
  Rng rng(8);
  const Mat logits = random_matrix(2, 5, rng);
  const Mat same = softmax_rows(logits);
  const auto zero = softmax_mse_loss_and_grad(logits, same);
  CHECK(zero.per_sample.cwiseAbs().maxCoeff() < 1e-15);
  CHECK(zero.grad_logits.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("softmax_rows and log_softmax_rows are stable and consistent") {
  Mat logits(2, 3);
  logits << 1000, 1001, 999, -1000, -1000, -1000;
  const Mat p = softmax_rows(logits);
  CHECK(p.allFinite());
  CHECK(rows_on_simplex(p, 1e-12));
  CHECK(((log_softmax_rows(logits).array().exp() - p.array()).abs().maxCoeff()) < 1e-15);
}

TEST_CASE("sgd_step: analytic cases") {
  const MlpShape s{1, 1, 1};
  auto make = [&](double v) {
    auto p = MlpParams<double>::zeros(s);
    p.w1(0, 0) = v;
    return p;
  };
  SUBCASE("vanilla step") {
    auto p = make(0.3);
    auto g = make(2.0);
    auto st = OptState<double>::for_params(p, 0.1, 0.0, 0.0);
    sgd_step(p, g, st);
    CHECK(p.w1(0, 0) == doctest::Approx(0.3 - 0.1 * 2.0).epsilon(1e-15));
  }
  SUBCASE("weight decay alone") {
    auto p = make(1.0);
    auto st = OptState<double>::for_params(p, 0.1, 0.0, 0.5);
    sgd_step(p, MlpParams<double>::zeros(s), st);
    CHECK(st.velocity.w1(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.w1(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
  }
  SUBCASE("two momentum steps") {
    auto p = make(0.0);
    auto st = OptState<double>::for_params(p, 0.1, 0.9, 0.0);
    sgd_step(p, make(1.0), st);
    sgd_step(p, make(1.0), st);
    CHECK(p.w1(0, 0) == doctest::Approx(-0.29).epsilon(1e-14));
  }
}

TEST_CASE("sgd_step rejects non-finite gradients and bad hyperparameters") {
  const MlpShape s{2, 2, 2};
  auto p = MlpParams<double>::zeros(s);
  auto g = MlpParams<double>::zeros(s);
  g.b2(0) = std::nan("");
  auto st = OptState<double>::for_params(p, 0.1, 0.9, 0.0);
  CHECK_THROWS_AS(sgd_step(p, g, st), NumericError);
  CHECK_THROWS_AS(OptState<double>::for_params(p, 0.0, 0.9, 0.0), ArgumentError);
  CHECK_THROWS_AS(OptState<double>::for_params(p, 0.1, 1.0, 0.0), ArgumentError);
  CHECK_THROWS_AS(OptState<double>::for_params(p, 0.1, 0.5, -1.0), ArgumentError);
}

TEST_CASE("init_mlp is seeded and bounded") {
  const MlpShape s{20, 30, 5};
  Rng a(9), b(9);
  const auto p = init_mlp<double>(s, a);
  CHECK(p == init_mlp<double>(s, b));
  CHECK(p.w1.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50.0));
  CHECK(p.w2.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 35.0));
  CHECK(p.b1.isZero(0.0));
  CHECK(p.parameter_count() == 20 * 30 + 30 + 30 * 5 + 5);
  CHECK_THROWS_AS(init_mlp<double>(MlpShape{0, 3, 2}, a), ShapeError);
}

TEST_CASE("identical seeds give bitwise-identical training") {
  auto run = [] {
    Rng rng(10);
    auto p = random_params({3, 8, 2}, rng);
    auto st = OptState<double>::for_params(p, 0.05, 0.9, 1e-3);
    const Mat x = random_matrix(16, 3, rng);
    Mat t = Mat::Zero(16, 2);
    for (Index i = 0; i < 16; ++i) t(i, x(i, 0) > 0 ? 1 : 0) = 1.0;
    for (int step = 0; step < 25; ++step) {
      const auto fwd = forward_pass(p, x);
      const auto lg = ce_loss_and_grad(fwd.logits, t);
      sgd_step(p, backward(p, x, fwd, Mat(lg.grad_logits / 16.0)), st);
    }
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("full-batch GD on separable data never increases the loss") {
  Rng rng(11);
  const Mat x = random_matrix(40, 2, rng);
  Mat t = Mat::Zero(40, 2);
  for (Index i = 0; i < 40; ++i) t(i, x(i, 0) + 0.5 * x(i, 1) > 0 ? 1 : 0) = 1.0;
  auto p = random_params({2, 16, 2}, rng);
  auto st = OptState<double>::for_params(p, 0.01, 0.0, 0.0);
  double prev = ce_loss_and_grad(mlp_forward(p, x), t).per_sample.mean();
  for (int step = 0; step < 200; ++step) {
    const auto fwd = forward_pass(p, x);
    const auto lg = ce_loss_and_grad(fwd.logits, t);
    sgd_step(p, backward(p, x, fwd, Mat(lg.grad_logits / 40.0)), st);
    const double now = ce_loss_and_grad(mlp_forward(p, x), t).per_sample.mean();
    REQUIRE(now <= prev + 1e-12);
    prev = now;
  }
}

TEST_CASE("argmax_lowest breaks ties toward the lowest index") {
  Vec v(4);
  v << 1.0, 3.0, 3.0, 2.0;
  CHECK(argmax_lowest(v) == 1);
  CHECK(argmax_lowest(Vec::Zero(5)) == 0);
}
