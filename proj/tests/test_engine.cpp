#include <cmath>

#include "doctest.h"
#include "nlw/engine.hpp"
#include "nlw/errors.hpp"
#include "test_util.hpp"

using namespace nlw;
using namespace nlw::test;

namespace {

RunConfig small_config(std::string_view preset) {
  RunConfig c = instantiate(preset);
  c.hidden = 32;
  c.epochs = 3;
  c.warmup_epochs = 2;
  c.batch_size = 32;
  c.optimizer = {0.05, 0.9, 0.0};
  c.seed = 5;
  return c;
}

Dataset noisy_moons(Index n, double ratio, std::uint64_t seed) {
  return inject_noise(gen_two_moons(n, 0.1, seed), {NoiseKind::symmetric, ratio, {}, seed + 1, false});
}

Mat one_hot(std::span<const int> labels, Index classes) {
  Mat t = Mat::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Index>(i), labels[i]) = 1.0;
  return t;
}

Mat rows_of(const Mat& m, const std::vector<Index>& rows) {
  Mat out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

TEST_CASE("warmup") {
  const Dataset train = gen_two_moons(1000, 0.1, 1);
  const OptimizerConfig opt{0.05, 0.9, 0.0};
  SUBCASE("zero epochs leaves the network untouched") {
    Network net = make_network({2, 16, 2}, opt, 2);
    const auto before = net.params;
    CHECK(warmup(net, train.training_view(), 0, 64, 3) == 0);
    CHECK(net.params == before);
  }
  SUBCASE("ten clean epochs fit two-moons") {
    Network net = make_network({2, 64, 2}, opt, 2);
    CHECK(warmup(net, train.training_view(), 10, 64, 3) == 10 * 16);
    CHECK(evaluate(net, train) > 0.9);
  }
  SUBCASE("deterministic in the seed") {
    Network a = make_network({2, 16, 2}, opt, 2), b = a, c = a;
    warmup(a, train.training_view(), 2, 64, 3);
    warmup(b, train.training_view(), 2, 64, 3);
    warmup(c, train.training_view(), 2, 64, 4);
    CHECK(a.params == b.params);
    CHECK_FALSE(a.params == c.params);
  }
  SUBCASE("negative epochs") {
    Network net = make_network({2, 16, 2}, opt, 2);
    CHECK_THROWS_AS(warmup(net, train.training_view(), -1, 64, 3), ArgumentError);
  }
}

TEST_CASE("evaluate") {
  Mat x(4, 2);
  x << 1, 0, 0, 1, 2, 1, 1, 3;
  const Dataset test(x, {0, 1, 0, 1}, {0, 1, 0, 0}, 2);
  Network net = make_network({2, 2, 2}, OptimizerConfig{}, 1);
  net.params.w1 = Mat::Identity(2, 2);
  net.params.b1.setZero();
  net.params.w2 = Mat::Identity(2, 2);
  net.params.b2.setZero();
  // Logits equal the inputs; predictions 0,1,0,1 against truth 0,1,0,0.
  CHECK(evaluate(net, test) == 0.75);
  net.params.w2.setZero();
  CHECK(evaluate(net, test) == 0.75);  // constant logits tie to class 0

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat features = random_matrix(50, 3, rng);
    std::vector<int> truth(50);
    std::uniform_int_distribution<int> cls(0, 3);
    for (auto& t : truth) t = cls(rng);
    const Dataset d(features, truth, truth, 4);
    std::vector<Network> nets{make_network({3, 8, 4}, OptimizerConfig{}, 3 + trial),
                              make_network({3, 8, 4}, OptimizerConfig{}, 100 + trial)};
    for (auto& n : nets) n.params = random_params(n.params.shape(), rng);
    long single = 0, both = 0;
    for (Index i = 0; i < 50; ++i) {
      const Mat row = features.row(i);
      const Mat l0 = mlp_forward(nets[0].params, row), l1 = mlp_forward(nets[1].params, row);
      const Mat avg = softmax_rows(l0) + softmax_rows(l1);
      int best0 = 0, best = 0;
      for (int c = 1; c < 4; ++c) {
        if (l0(0, c) > l0(0, best0)) best0 = c;
        if (avg(0, c) > avg(0, best)) best = c;
      }
      single += best0 == truth[static_cast<std::size_t>(i)];
      both += best == truth[static_cast<std::size_t>(i)];
    }
    CHECK(evaluate(nets[0], d) == static_cast<double>(single) / 50);
    CHECK(evaluate(nets, d) == static_cast<double>(both) / 50);
  }
  CHECK_THROWS_AS(evaluate(std::span<const Network>(), test), ArgumentError);
}

TEST_CASE("presets") {
  for (const auto& name : preset_names()) {
    const RunConfig c = instantiate(name);
    CHECK(c.preset == name);
    CHECK_NOTHROW(validate(c));
  }
  CHECK(instantiate("gpl").selector.kind == SelectorKind::gmm);
  CHECK(instantiate("gpl").backbone.kind == BackboneKind::pseudo_label);
  CHECK(instantiate("dividemix_plus").networks == NetworkMode::dual);
  CHECK(instantiate("dividemix_plus").schedule == Schedule::mini_batch);
  CHECK(instantiate("dividemix_epoch").schedule == Schedule::epoch_level);
  CHECK(instantiate("spd_te").backbone.kind == BackboneKind::temporal_ensembling);
  CHECK(instantiate("spd_mixmatch").backbone.kind == BackboneKind::mixmatch);
  CHECK(instantiate("cross_entropy").selector.keep_fraction == 1.0);
  CHECK_THROWS_AS(instantiate("nope"), ArgumentError);
}

TEST_CASE("validate rejects contradictory configs") {
  RunConfig c = instantiate("dividemix_plus");
  c.selector.kind = SelectorKind::spd;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.selector.kind = SelectorKind::small_loss;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.selector.kind = SelectorKind::oracle;
  CHECK_NOTHROW(validate(c));

  RunConfig bad = instantiate("gpl");
  bad.batch_size = 0;
  bad.optimizer.lr = 0;
  bad.backbone.sharpen_T = -1;
  try {
    validate(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.problems().size() == 3);
  }
}

TEST_CASE("train: counters and report shape") {
  const Dataset tr = noisy_moons(330, 0.2, 10), te = gen_two_moons(100, 0.1, 11);
  for (const char* preset : {"gpl", "dividemix_epoch"}) {
    for (int bs : {64, 33, 330, 500}) {
      RunConfig c = small_config(preset);
      c.batch_size = bs;
      c.hidden = 8;
      c.epochs = 2;
      const auto r = train(c, tr, te);
      const long per_epoch = (330 + bs - 1) / bs;
      const long nets = c.networks == NetworkMode::dual ? 2 : 1;
      CHECK(r.counters.warmup_steps == nets * c.warmup_epochs * per_epoch);
      REQUIRE(r.counters.cycles.size() == 2);
      for (int e = 0; e < 2; ++e) {
        CHECK(r.counters.cycles[static_cast<std::size_t>(e)] == per_epoch);
        CHECK(r.counters.full_selections[static_cast<std::size_t>(e)] ==
              (c.schedule == Schedule::epoch_level ? 1 : 0));
      }
      REQUIRE(r.report.rows.size() == 2);
      CHECK(r.report.rows[0].epoch == 1);
      CHECK(r.report.rows[1].epoch == 2);
      CHECK(r.networks.size() == static_cast<std::size_t>(nets));
    }
  }
}

TEST_CASE("train is reproducible and ignores ground truth outside metrics") {
  const Dataset tr = noisy_moons(200, 0.4, 20), te = gen_two_moons(100, 0.1, 21);
  for (const char* preset : {"gpl", "dividemix_plus", "spd_te"}) {
    const RunConfig c = small_config(preset);
    const auto a = train(c, tr, te);
    const auto b = train(c, tr, te);
    CHECK(a.report == b.report);
    const auto blind = train(c, tr.without_truth(), te);
    for (std::size_t k = 0; k < a.networks.size(); ++k) {
      CHECK(a.networks[k].params == b.networks[k].params);
      CHECK(a.networks[k].params == blind.networks[k].params);
    }
    for (std::size_t e = 0; e < a.report.rows.size(); ++e) {
      CHECK(a.report.rows[e].test_acc == blind.report.rows[e].test_acc);
      CHECK(a.report.rows[e].train_loss == blind.report.rows[e].train_loss);
    }
  }
}

TEST_CASE("oracle selection is exact") {
  const Dataset tr = noisy_moons(300, 0.4, 30), te = gen_two_moons(100, 0.1, 31);
  RunConfig c = small_config("spd_ce");
  c.selector.kind = SelectorKind::oracle;
  const auto r = train(c, tr, te);
  for (const auto& row : r.report.rows) {
    CHECK(row.sel_precision == 1.0);
    CHECK(row.sel_recall == 1.0);
    CHECK(row.clean_frac == doctest::Approx(0.6).epsilon(0.1));
  }
}

TEST_CASE("dual networks with the oracle selector train like single runs") {
  // Oracle posteriors are 0/1, so co-refinement leaves one-hot targets and
  // ce_only ignores the unlabeled part: the first network matches a single run.
  const Dataset tr = noisy_moons(200, 0.3, 40), te = gen_two_moons(100, 0.1, 41);
  RunConfig single = small_config("spd_ce");
  single.selector.kind = SelectorKind::oracle;
  RunConfig dual = single;
  dual.networks = NetworkMode::dual;
  const auto a = train(single, tr, te);
  const auto b = train(dual, tr, te);
  CHECK(a.networks[0].params == b.networks[0].params);
  CHECK_FALSE(b.networks[0].params == b.networks[1].params);
}

TEST_CASE("dual mini-batch epoch matches a hand-written reference loop") {
  const Dataset tr = noisy_moons(96, 0.4, 50), te = gen_two_moons(50, 0.1, 51);
  RunConfig c = small_config("dividemix_plus");
  c.epochs = 1;
  c.warmup_epochs = 1;
  c.hidden = 12;
  const auto result = train(c, tr, te);

  const TrainingView view = tr.training_view();
  const MlpShape shape{2, 12, 2};
  std::vector<Network> nets;
  std::vector<BackboneState> states;
  for (std::uint64_t k = 0; k < 2; ++k) {
    nets.push_back(make_network(shape, c.optimizer, derive_seed(c.seed, 1 + k)));
    warmup(nets.back(), view, 1, 32, derive_seed(c.seed, 20 + k));
    states.push_back(make_backbone_state(c.backbone, 96, 2, derive_seed(c.seed, 10 + k)));
  }
  for (const auto& batch : epoch_batches(view, 32, derive_seed(c.seed, 1000))) {
    std::vector<BatchPartition> parts;
    for (std::size_t k = 0; k < 2; ++k) {
      const Mat logp = log_softmax_rows(mlp_forward(nets[k].params, batch.features));
      std::vector<double> losses;
      for (Index i = 0; i < batch.size(); ++i) losses.push_back(-logp(i, batch.given_labels[static_cast<std::size_t>(i)]));
      parts.push_back(select_gmm(losses, c.selector));
    }
    for (std::size_t k = 0; k < 2; ++k) {
      const BatchPartition& p = parts[1 - k];
      LabeledPart x;
      UnlabeledPart u;
      x.features = rows_of(batch.features, p.clean);
      u.features = rows_of(batch.features, p.unlabeled);
      std::vector<int> labels;
      for (Index i : p.clean) {
        x.rows.push_back(batch.indices[static_cast<std::size_t>(i)]);
        labels.push_back(batch.given_labels[static_cast<std::size_t>(i)]);
      }
      for (Index i : p.unlabeled) u.rows.push_back(batch.indices[static_cast<std::size_t>(i)]);
      x.targets = one_hot(labels, 2);
      if (x.size() > 0) {
        const Mat own = softmax_rows(mlp_forward(nets[k].params, x.features));
        for (Index r = 0; r < x.size(); ++r) {
          const double w = p.clean_posterior[static_cast<std::size_t>(p.clean[static_cast<std::size_t>(r)])];
          x.targets.row(r) = w * x.targets.row(r) + (1 - w) * own.row(r);
        }
      }
      if (u.size() > 0) {
        u.guesses = 0.5 * (softmax_rows(mlp_forward(nets[k].params, u.features)) +
                           softmax_rows(mlp_forward(nets[1 - k].params, u.features)));
      }
      backbone_step(nets[k], states[k], x, u, c.backbone, 0, view.bounds);
    }
  }
  CHECK(result.networks[0].params == nets[0].params);
  CHECK(result.networks[1].params == nets[1].params);
  CHECK(result.report.rows[0].test_acc == evaluate(nets, te));
}

TEST_CASE("selection on clean data stays close to plain training") {
  // Selection starts from a fitted warm-up; gmm keeps dropping its high-loss
  // component on clean data, so the comparison uses a short selection phase.
  const Dataset tr = gen_two_moons(1000, 0.1, 60), te = gen_two_moons(1000, 0.1, 61);
  RunConfig base = instantiate("cross_entropy");
  base.hidden = 64;
  base.warmup_epochs = 40;
  base.epochs = 5;
  base.optimizer = {0.05, 0.9, 0.0};
  base.seed = 62;
  const double supervised = train(base, tr, te).report.rows.back().test_acc;
  CHECK(supervised > 0.97);
  for (SelectorKind s : {SelectorKind::gmm, SelectorKind::spd, SelectorKind::oracle}) {
    RunConfig c = base;
    c.selector.kind = s;
    c.selector.clean_threshold = 0.5;
    const double acc = train(c, tr, te).report.rows.back().test_acc;
    CHECK(acc >= supervised - 0.02);
  }
}

TEST_CASE("train rejects bad inputs") {
  const Dataset tr = gen_two_moons(20, 0.1, 70);
  Mat x3 = Mat::Zero(4, 3);
  const Dataset te3(x3, {0, 1, 0, 1}, {0, 1, 0, 1}, 2);
  CHECK_THROWS_AS(train(small_config("gpl"), tr, te3), ShapeError);
  RunConfig bad = small_config("gpl");
  bad.epochs = -1;
  CHECK_THROWS_AS(train(bad, tr, tr), ConfigError);
}
