#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "nlw/engine.hpp"
#include "nlw/errors.hpp"
#include "nlw/selection.hpp"
#include "test_util.hpp"

using namespace nlw;
using namespace nlw::test;

namespace {

struct Bimodal {
  std::vector<double> values;
  std::vector<int> component;
};

Bimodal bimodal(std::uint64_t seed, int per_side = 500) {
  Rng rng(seed);
  std::normal_distribution<double> low(0.1, 0.02), high(0.9, 0.02);
  Bimodal b;
  for (int i = 0; i < per_side; ++i) {
    b.values.push_back(low(rng));
    b.component.push_back(0);
    b.values.push_back(high(rng));
    b.component.push_back(1);
  }
  return b;
}

double normal_pdf(double x, double mean, double var) {
  return std::exp(-(x - mean) * (x - mean) / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
}

void check_partition(const BatchPartition& p, std::size_t m) {
  std::vector<int> seen(m, 0);
  for (Index i : p.clean) ++seen[static_cast<std::size_t>(i)];
  for (Index i : p.unlabeled) ++seen[static_cast<std::size_t>(i)];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  CHECK(p.clean_posterior.size() == m);
  CHECK(std::is_sorted(p.clean.begin(), p.clean.end()));
  CHECK(std::is_sorted(p.unlabeled.begin(), p.unlabeled.end()));
}

}  // namespace

TEST_CASE("fit_gmm_1d: degenerate input") {
  const std::vector<double> same(10, 0.3);
  const auto fit = fit_gmm_1d(same);
  CHECK(fit.degenerate);
  CHECK(fit.iterations == 0);
}

TEST_CASE("fit_gmm_1d recovers a known mixture") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto b = bimodal(seed);
    const auto fit = fit_gmm_1d(b.values);
    CHECK_FALSE(fit.degenerate);
    CHECK(std::abs(fit.params.means[0] - 0.1) <= 0.02);
    CHECK(std::abs(fit.params.means[1] - 0.9) <= 0.02);
    CHECK(std::abs(fit.params.weights[0] - 0.5) <= 0.05);
    CHECK(std::abs(fit.params.weights[1] - 0.5) <= 0.05);
    CHECK(fit.params.means[0] <= fit.params.means[1]);
  }
}

TEST_CASE("fit_gmm_1d: log-likelihood never decreases") {
  Rng rng(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(8 + trial % 50);
    for (auto& x : v) x = u(rng) < 0.3 ? u(rng) * 0.3 : 0.4 + 0.6 * u(rng) * u(rng);
    const auto fit = fit_gmm_1d(v);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
      CHECK(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-12);
    CHECK(fit.iterations <= 100);
  }
}

TEST_CASE("gmm_m_step matches hand-computed weighted averages") {
  const std::vector<double> x{0.0, 1.0, 2.0, 4.0};
  const std::vector<double> r{1.0, 0.5, 0.25, 0.0};
  const auto p = gmm_m_step(x, r);
  // clean: weights 1, .5, .25, 0 -> sum 1.75
  const double m0 = (0.0 + 0.5 + 0.5 + 0.0) / 1.75;
  const double v0 = (1.0 * m0 * m0 + 0.5 * (1 - m0) * (1 - m0) + 0.25 * (2 - m0) * (2 - m0)) / 1.75;
  // noisy: weights 0, .5, .75, 1 -> sum 2.25
  const double m1 = (0.5 + 1.5 + 4.0) / 2.25;
  const double v1 = (0.5 * (1 - m1) * (1 - m1) + 0.75 * (2 - m1) * (2 - m1) + (4 - m1) * (4 - m1)) / 2.25;
  CHECK(std::abs(p.means[0] - m0) < 1e-10);
  CHECK(std::abs(p.means[1] - m1) < 1e-10);
  CHECK(std::abs(p.variances[0] - v0) < 1e-10);
  CHECK(std::abs(p.variances[1] - v1) < 1e-10);
  CHECK(std::abs(p.weights[0] - 1.75 / 4) < 1e-12);
  CHECK(std::abs(p.weights[1] - 2.25 / 4) < 1e-12);
}

TEST_CASE("gmm_m_step floors variances") {
  const std::vector<double> x{0.5, 0.5, 0.9};
  const std::vector<double> r{1.0, 1.0, 0.0};
  const auto p = gmm_m_step(x, r);
  CHECK(p.variances[0] == kVarianceFloor);
}

TEST_CASE("gmm_posterior_clean: analytic cases") {
  SUBCASE("midpoint of a symmetric mixture") {
    const GmmParams p{{0.2, 0.8}, {0.01, 0.01}, {0.5, 0.5}};
    CHECK(gmm_posterior_clean(0.5, p) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("well separated") {
    const GmmParams p{{0.1, 0.9}, {1e-4, 1e-4}, {0.5, 0.5}};
    CHECK(gmm_posterior_clean(0.1, p) > 0.999);
  }
  SUBCASE("direct density formula") {
    const GmmParams p{{0.2, 0.8}, {0.01, 0.04}, {0.6, 0.4}};
    const double a = 0.6 * normal_pdf(0.4, 0.2, 0.01);
    const double b = 0.4 * normal_pdf(0.4, 0.8, 0.04);
    CHECK(std::abs(gmm_posterior_clean(0.4, p) - a / (a + b)) < 1e-10);
  }
}

TEST_CASE("posteriors of the two components sum to one") {
  Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double w = 0.05 + 0.9 * u(rng);
    const GmmParams p{{u(rng), u(rng) + 0.5}, {1e-4 + u(rng) * 0.1, 1e-4 + u(rng) * 0.1}, {w, 1 - w}};
    const double loss = -5 + 60 * u(rng);
    const double clean = gmm_posterior_clean(loss, p);
    // Noisy posterior computed independently by swapping the components.
    const GmmParams swapped{{p.means[1], p.means[0]}, {p.variances[1], p.variances[0]}, {p.weights[1], p.weights[0]}};
    CHECK(std::abs(clean + gmm_posterior_clean(loss, swapped) - 1.0) < 1e-12);
    CHECK(clean >= 0.0);
    CHECK(clean <= 1.0);
  }
}

TEST_CASE("normalize_losses clamps then rescales") {
  const std::vector<double> l{-1.0, 10.0, 100.0, 30.0};
  const auto n = normalize_losses(l);
  CHECK(n[0] == 0.0);
  CHECK(n[1] == doctest::Approx(0.2));
  CHECK(n[2] == 1.0);
  CHECK(n[3] == doctest::Approx(0.6));
  const auto flat = normalize_losses(std::vector<double>{2.0, 2.0});
  CHECK(flat == std::vector<double>{0.0, 0.0});
}

TEST_CASE("select_gmm on bimodal losses") {
  const auto b = bimodal(3);
  SelectorConfig cfg;
  const auto p = select_gmm(b.values, cfg);
  check_partition(p, b.values.size());
  int agree = 0;
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    const bool clean = std::binary_search(p.clean.begin(), p.clean.end(), static_cast<Index>(i));
    agree += clean == (b.component[i] == 0);
  }
  CHECK(agree / static_cast<double>(b.values.size()) >= 0.99);

  SelectorConfig strict = cfg;
  strict.clean_threshold = 0.999999;
  const auto q = select_gmm(b.values, strict);
  CHECK(q.clean.size() <= p.clean.size());
  for (Index i : q.clean) CHECK(std::binary_search(p.clean.begin(), p.clean.end(), i));
}

TEST_CASE("select_gmm: clean set shrinks as the threshold grows") {
  Rng rng(22);
  std::exponential_distribution<double> e(2.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> l(64);
    for (auto& x : l) x = e(rng);
    std::size_t prev = l.size();
    std::vector<Index> prev_clean(l.size());
    std::iota(prev_clean.begin(), prev_clean.end(), 0);
    for (double t : {0.05, 0.2, 0.5, 0.8, 0.95, 0.999}) {
      SelectorConfig cfg;
      cfg.clean_threshold = t;
      const auto p = select_gmm(l, cfg);
      check_partition(p, l.size());
      CHECK(p.clean.size() <= prev);
      for (Index i : p.clean) CHECK(std::binary_search(prev_clean.begin(), prev_clean.end(), i));
      prev = p.clean.size();
      prev_clean = p.clean;
    }
  }
}

TEST_CASE("select_gmm: degenerate losses are all clean") {
  const std::vector<double> l(16, 0.7);
  const auto p = select_gmm(l, SelectorConfig{});
  CHECK(p.clean.size() == 16);
  CHECK(p.unlabeled.empty());
  CHECK(select_gmm(std::vector<double>{}, SelectorConfig{}).size() == 0);
  SelectorConfig bad;
  bad.clean_threshold = 1.0;
  CHECK_THROWS_AS(select_gmm(l, bad), ArgumentError);
}

TEST_CASE("select_gmm with a trailing window fits on the window") {
  LossWindow window(6);
  SelectorConfig cfg;
  cfg.window = 6;
  const std::vector<double> first{0.1, 0.1, 0.9, 0.9};
  select_gmm(first, cfg, &window);
  CHECK(window.size() == 4);
  const std::vector<double> second{0.12, 0.88, 0.5};
  const auto p = select_gmm(second, cfg, &window);
  CHECK(window.size() == 6);
  check_partition(p, 3);
  CHECK(std::find(p.clean.begin(), p.clean.end(), 0) != p.clean.end());
  CHECK(std::find(p.unlabeled.begin(), p.unlabeled.end(), 1) != p.unlabeled.end());
  const auto values = window.values();
  CHECK(values.size() == 6);
  CHECK(values.front() == doctest::Approx(0.1));  // one of the two 0.1s was evicted
  CHECK(values[1] == doctest::Approx(0.9));
}

TEST_CASE("select_spd") {
  const std::vector<int> labels{0, 1, 2, 1};
  Mat aligned = Mat::Zero(4, 3);
  for (Index i = 0; i < 4; ++i) aligned(i, labels[static_cast<std::size_t>(i)]) = 5.0;
  CHECK(select_spd(aligned, labels).clean.size() == 4);
  Mat anti = Mat::Constant(4, 3, 5.0);
  for (Index i = 0; i < 4; ++i) anti(i, labels[static_cast<std::size_t>(i)]) = -5.0;
  CHECK(select_spd(anti, labels).unlabeled.size() == 4);
  Mat tie(2, 3);
  tie << 2.0, 2.0, 0.0, 2.0, 2.0, 0.0;
  const auto p = select_spd(tie, std::vector<int>{0, 1});
  CHECK(p.clean == std::vector<Index>{0});
  CHECK(p.unlabeled == std::vector<Index>{1});
  CHECK_THROWS_AS(select_spd(tie, std::vector<int>{0}), ShapeError);
}

TEST_CASE("select_small_loss") {
  const std::vector<double> l{0.1, 0.9, 0.2, 0.8};
  CHECK(select_small_loss(l, 0.5).clean == std::vector<Index>{0, 2});
  CHECK(select_small_loss(l, 1.0).clean.size() == 4);
  CHECK(select_small_loss(l, 0.3).clean == std::vector<Index>{0, 2});  // ceil(1.2) = 2
  CHECK(select_small_loss(l, 0.25).clean == std::vector<Index>{0});
}

TEST_CASE("select_small_loss agrees with a full-sort oracle") {
  Rng rng(23);
  std::uniform_int_distribution<int> size(1, 40), coarse(0, 5);
  std::uniform_real_distribution<double> keep(0.01, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> l(static_cast<std::size_t>(size(rng)));
    for (auto& x : l) x = coarse(rng) * 0.5;  // plenty of ties
    const double k = keep(rng);
    const auto p = select_small_loss(l, k);
    check_partition(p, l.size());
    std::vector<Index> order(l.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      return l[static_cast<std::size_t>(a)] != l[static_cast<std::size_t>(b)]
                 ? l[static_cast<std::size_t>(a)] < l[static_cast<std::size_t>(b)]
                 : a < b;
    });
    const auto count = static_cast<std::size_t>(std::ceil(k * static_cast<double>(l.size()) - 1e-9));
    std::vector<Index> expected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(expected.begin(), expected.end());
    CHECK(p.clean == expected);
  }
}

TEST_CASE("select_oracle") {
  const auto p = select_oracle(std::vector<int>{0, 1, 1, 2}, std::vector<int>{0, 0, 1, 2});
  CHECK(p.clean == std::vector<Index>{0, 2, 3});
  CHECK(p.unlabeled == std::vector<Index>{1});
}

TEST_CASE("selection_metrics") {
  SUBCASE("perfect partition") {
    const auto p = partition_from_flags({true, false, true}, {1, 0, 1});
    const auto m = selection_metrics(p, {true, false, true});
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
  }
  SUBCASE("everything selected, 60% clean") {
    std::vector<bool> truth(10, false);
    std::fill(truth.begin(), truth.begin() + 6, true);
    const auto p = partition_from_flags(std::vector<bool>(10, true), std::vector<double>(10, 1.0));
    const auto m = selection_metrics(p, truth);
    CHECK(m.precision == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(m.recall == 1.0);
  }
  SUBCASE("random cases against counting") {
    Rng rng(24);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t m = 1 + trial % 30;
      std::vector<bool> sel(m), truth(m);
      for (std::size_t i = 0; i < m; ++i) {
        sel[i] = coin(rng);
        truth[i] = coin(rng);
      }
      long tp = 0, s = 0, t = 0;
      for (std::size_t i = 0; i < m; ++i) {
        tp += sel[i] && truth[i];
        s += sel[i];
        t += truth[i];
      }
      const auto r = selection_metrics(partition_from_flags(sel, std::vector<double>(m, 0.0)), truth);
      CHECK(r.precision == (s == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(s)));
      CHECK(r.recall == (t == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(t)));
    }
  }
}

TEST_CASE("selectors beat the clean base rate after warm-up on noisy two-moons") {
  const Dataset train = inject_noise(gen_two_moons(1000, 0.1, 31), {NoiseKind::symmetric, 0.4, {}, 32, false});
  Network net = make_network({2, 64, 2}, OptimizerConfig{0.05, 0.9, 0.0}, 33);
  warmup(net, train.training_view(), 30, 32, 34);
  const auto truth = train.clean_mask();
  int gmm_good = 0, spd_good = 0, batches = 0;
  for (const auto& batch : epoch_batches(train, 64, 35)) {
    const Mat logits = mlp_forward(net.params, batch.features);
    const Mat logp = log_softmax_rows(logits);
    std::vector<double> losses;
    std::vector<bool> clean;
    for (Index i = 0; i < batch.size(); ++i) {
      losses.push_back(-logp(i, batch.given_labels[static_cast<std::size_t>(i)]));
      clean.push_back(truth[static_cast<std::size_t>(batch.indices[static_cast<std::size_t>(i)])]);
    }
    gmm_good += selection_metrics(select_gmm(losses, SelectorConfig{}), clean).precision > 0.6;
    spd_good += selection_metrics(select_spd(logits, batch.given_labels), clean).precision > 0.6;
    ++batches;
  }
  CHECK(gmm_good >= 0.9 * batches);
  CHECK(spd_good >= 0.9 * batches);
}
