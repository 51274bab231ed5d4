#include "nlw/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <ostream>
#include <random>
#include <sstream>

#include "nlw/engine.hpp"
#include "nlw/experiment.hpp"
#include "nlw/grid.hpp"
#include "nlw/nncore.hpp"
#include "nlw/random.hpp"
#include "nlw/report.hpp"
#include "nlw/selection.hpp"
#include "nlw/ssl.hpp"

#ifndef NLW_DEFAULT_DATA_DIR
#define NLW_DEFAULT_DATA_DIR ""
#endif

namespace nlw {
namespace {

// Tolerances and budgets. Accuracies are fractions; "points" are 0.01.
constexpr int kGradInstances = 50;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-4;  // five-point central stencil
constexpr double kGradBudgetS = 10.0;

constexpr double kEmMeanTol = 0.02;
constexpr double kEmWeightTol = 0.05;
constexpr double kEmAgreement = 0.99;
constexpr double kEmBudgetS = 5.0;

constexpr double kNoiseRateTol = 0.02;
constexpr double kNoiseTargetTol = 0.02;
constexpr double kNoiseBudgetS = 5.0;

constexpr int kReductionInstances = 20;
constexpr double kReductionBudgetS = 10.0;

constexpr double kOracleGap = 0.01;
constexpr double kOracleBudgetS = 60.0;

constexpr double kMarginOverCe = 0.03;
constexpr double kCleanBaseRate = 0.6;
constexpr double kOrderingBudgetS = 1200.0;

constexpr double kScheduleSlack = 0.01;
constexpr double kScheduleBudgetS = 1200.0;

const std::uint64_t kSeeds[] = {0, 1, 2};

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::filesystem::path mnist_dir(const AcceptanceOptions& o) {
  if (!o.data_dir.empty()) return o.data_dir;
  if (const char* env = std::getenv("WORKBENCH_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return NLW_DEFAULT_DATA_DIR;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

// ---- 1 -------------------------------------------------------------------

double objective(const MlpParams<double>& p, const Mat& x, const Mat& t, bool use_ce) {
  const Mat logits = mlp_forward(p, x);
  const auto lg = use_ce ? ce_loss_and_grad(logits, t) : softmax_mse_loss_and_grad(logits, t);
  return lg.per_sample.mean();
}

CriterionResult gradient_check() {
  Rng rng(derive_seed(1234, 1));
  std::uniform_int_distribution<int> dim(2, 7), hid(3, 9), cls(2, 5), rows(1, 6);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  int redrawn = 0;
  for (int inst = 0; inst < kGradInstances; ++inst) {
    MlpShape shape;
    MlpParams<double> p;
    Mat x, t;
    for (;;) {
      shape = {dim(rng), hid(rng), cls(rng)};
      p = init_mlp<double>(shape, rng);
      for (Index i = 0; i < p.b1.size(); ++i) p.b1(i) = 0.1 * normal(rng);
      for (Index i = 0; i < p.b2.size(); ++i) p.b2(i) = 0.1 * normal(rng);
      const Index n = rows(rng);
      x.resize(n, shape.input);
      for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
      t.resize(n, shape.classes);
      for (Index i = 0; i < n; ++i) {
        for (Index c = 0; c < shape.classes; ++c) t(i, c) = unif(rng) + 1e-3;
        t.row(i) /= t.row(i).sum();
      }
      // The stencil is meaningless across a ReLU kink: redraw instances whose
      // pre-activations lie within reach of zero.
      const Mat z = (x * p.w1.transpose()).rowwise() + p.b1.transpose();
      const double reach = 2 * kGradStep * (1.0 + x.cwiseAbs().maxCoeff());
      if (z.cwiseAbs().minCoeff() > 10 * reach) break;
      ++redrawn;
    }
    const Index n = x.rows();
    const bool use_ce = inst % 2 == 0;
    const auto fwd = forward_pass(p, x);
    const auto lg = use_ce ? ce_loss_and_grad(fwd.logits, t) : softmax_mse_loss_and_grad(fwd.logits, t);
    const auto g = backward(p, x, fwd, Mat(lg.grad_logits / static_cast<double>(n)));

    std::vector<double> analytic;
    g.for_each_block([&](const auto& b) { analytic.insert(analytic.end(), b.data(), b.data() + b.size()); });
    std::size_t k = 0;
    p.for_each_block([&](auto& b) {
      for (Index i = 0; i < b.size(); ++i, ++k) {
        const double saved = b.data()[i];
        auto at = [&](double offset) {
          b.data()[i] = saved + offset;
          return objective(p, x, t, use_ce);
        };
        const double numeric =
            (-at(2 * kGradStep) + 8 * at(kGradStep) - 8 * at(-kGradStep) + at(-2 * kGradStep)) / (12 * kGradStep);
        b.data()[i] = saved;
        const double a = analytic[k];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        worst = std::max(worst, rel);
      }
    });
  }
  return {1, "gradient correctness", worst < kGradRelTol,
          std::to_string(kGradInstances) + " instances (" + std::to_string(redrawn) + " redrawn near a kink), max rel err " + fmt("%.2e", worst) + " < " +
              fmt("%.0e", kGradRelTol)};
}

// ---- 2 -------------------------------------------------------------------

CriterionResult em_recovery() {
  Rng rng(derive_seed(2024, 2));
  std::normal_distribution<double> low(0.1, 0.02), high(0.9, 0.02);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> values;
  std::vector<int> source;
  for (int i = 0; i < 1000; ++i) {
    const bool hi = coin(rng);
    values.push_back(hi ? high(rng) : low(rng));
    source.push_back(hi ? 1 : 0);
  }
  const double true_w0 =
      static_cast<double>(std::count(source.begin(), source.end(), 0)) / static_cast<double>(source.size());
  GmmFit fit;
  try {
    fit = fit_gmm_1d(values);
  } catch (const std::exception& e) {
    return {2, "EM recovery", false, std::string("EM threw: ") + e.what()};
  }
  const auto& p = fit.params;
  const double mean_err = std::max(std::abs(p.means[0] - 0.1), std::abs(p.means[1] - 0.9));
  const double weight_err = std::max(std::abs(p.weights[0] - 0.5), std::abs(p.weights[1] - 0.5));
  int agree = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int predicted = gmm_posterior_clean(values[i], p) > 0.5 ? 0 : 1;
    agree += predicted == source[i];
  }
  const double agreement = agree / static_cast<double>(values.size());
  bool monotone = true;
  for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
    monotone = monotone && fit.log_likelihood[i] >= fit.log_likelihood[i - 1];
  const bool pass = mean_err <= kEmMeanTol && weight_err <= kEmWeightTol && agreement >= kEmAgreement && monotone;
  std::ostringstream d;
  d << "mean err " << fmt("%.4f", mean_err) << " (tol " << kEmMeanTol << "), weight err " << fmt("%.4f", weight_err)
    << " (tol " << kEmWeightTol << ", sample rate " << fmt("%.3f", true_w0) << "), agreement "
    << fmt("%.4f", agreement) << ", LL " << (monotone ? "monotone" : "DECREASED") << " over " << fit.iterations
    << " iterations";
  return {2, "EM recovery", pass, d.str()};
}

// ---- 3 -------------------------------------------------------------------

CriterionResult noise_fidelity() {
  constexpr int C = 10;
  constexpr int n = 10000;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % C;
  const Dataset clean(Mat::Zero(n, 1), labels, labels, C);

  NoiseSpec sym;
  sym.kind = NoiseKind::symmetric;
  sym.ratio = 0.4;
  sym.seed = 77;
  const Dataset noisy = inject_noise(clean, sym);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(C, C);
  int flipped = 0;
  for (int i = 0; i < n; ++i) {
    const int g = noisy.given_labels()[static_cast<std::size_t>(i)];
    const int t = labels[static_cast<std::size_t>(i)];
    counts(t, g) += 1;
    flipped += g != t;
  }
  const double rate = flipped / static_cast<double>(n);
  // Empirical transition matrix T(t, g) = P(given = g | true = t) against ratio / (C - 1).
  double target_err = 0.0;
  for (int t = 0; t < C; ++t) {
    const double row = counts.row(t).sum();
    for (int g = 0; g < C; ++g)
      if (g != t) target_err = std::max(target_err, std::abs(counts(t, g) / row - sym.ratio / (C - 1)));
  }

  NoiseSpec asym;
  asym.kind = NoiseKind::asymmetric;
  asym.ratio = 0.4;
  asym.seed = 78;
  asym.class_map = default_asymmetric_map(C);
  const Dataset anoisy = inject_noise(clean, asym);
  int off_edge = 0;
  for (int i = 0; i < n; ++i) {
    const int g = anoisy.given_labels()[static_cast<std::size_t>(i)];
    const int t = labels[static_cast<std::size_t>(i)];
    if (g != t && (*asym.class_map)[static_cast<std::size_t>(t)] != g) ++off_edge;
  }
  const bool pass = std::abs(rate - 0.4) <= kNoiseRateTol && target_err <= kNoiseTargetTol && off_edge == 0;
  std::ostringstream d;
  d << "symmetric rate " << fmt("%.4f", rate) << " (0.40 +- " << kNoiseRateTol << "), max |T(t,g) - ratio/(C-1)| "
    << fmt("%.4f", target_err) << " (tol " << kNoiseTargetTol << "), asymmetric off-edge flips " << off_edge;
  return {3, "noise-model fidelity", pass, d.str()};
}

// ---- 4 -------------------------------------------------------------------

bool same_network(const Network& a, const Network& b) {
  return a.params == b.params && a.opt.velocity == b.opt.velocity;
}

CriterionResult reduction_laws() {
  Rng gen(derive_seed(4040, 4));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> cls_dist(2, 5), rows_dist(4, 12);
  const BackboneKind kinds[] = {BackboneKind::temporal_ensembling, BackboneKind::mixmatch,
                                BackboneKind::pseudo_label};
  int checked = 0;
  std::string mismatch;
  for (int inst = 0; inst < kReductionInstances; ++inst) {
    const int classes = cls_dist(gen);
    const Index n = rows_dist(gen);
    const MlpShape shape{6, 8, classes};
    const Network base = make_network(shape, OptimizerConfig{}, gen());
    LabeledPart x;
    x.features.resize(n, shape.input);
    for (Index i = 0; i < x.features.size(); ++i) x.features.data()[i] = normal(gen);
    x.targets = Mat::Zero(n, classes);
    for (Index i = 0; i < n; ++i) {
      x.targets(i, static_cast<Index>(gen() % static_cast<std::uint64_t>(classes))) = 1.0;
      x.rows.push_back(i);
    }
    UnlabeledPart u;
    u.features.resize(0, shape.input);

    Network reference = base;
    ce_only_step(reference, x);
    for (BackboneKind kind : kinds) {
      BackboneConfig cfg;
      cfg.kind = kind;
      cfg.jitter_std = 0.0;
      cfg.fixed_lambda = 1.0;
      cfg.lambda_u = 0.0;
      cfg.lambda_a = 0.0;
      cfg.lambda_h = 0.0;
      cfg.min_labeled_per_batch = 1;
      const std::uint64_t seed = gen();
      Network direct = base;
      BackboneState state = make_backbone_state(cfg, n, classes, seed);
      backbone_step(direct, state, x, u, cfg, 3, std::nullopt);
      ++checked;
      if (!same_network(direct, reference) && mismatch.empty()) {
        mismatch = std::string(to_string(kind)) + " on instance " + std::to_string(inst);
      }
    }
  }
  return {4, "reduction laws", mismatch.empty(),
          mismatch.empty() ? std::to_string(checked) + " backbone steps bitwise equal to ce_only_step"
                           : "first mismatch: " + mismatch};
}

// ---- 5 -------------------------------------------------------------------

CriterionResult cycle_accounting() {
  const Dataset moons = inject_noise(gen_two_moons(330, 0.1, 5), NoiseSpec{NoiseKind::symmetric, 0.3, {}, 6, false});
  const Dataset test = gen_two_moons(100, 0.1, 7);
  std::ostringstream d;
  bool pass = true;
  for (int batch : {64, 33, 330, 500}) {
    for (Schedule sched : {Schedule::mini_batch, Schedule::epoch_level}) {
      RunConfig cfg = instantiate("dividemix_plus");
      cfg.schedule = sched;
      cfg.hidden = 16;
      cfg.epochs = 3;
      cfg.warmup_epochs = 1;
      cfg.batch_size = batch;
      const RunResult r = train(cfg, moons, test);
      const long expected = (moons.size() + batch - 1) / batch;
      for (std::size_t e = 0; e < r.counters.cycles.size(); ++e) {
        const long full_expected = sched == Schedule::epoch_level ? 1 : 0;
        if (r.counters.cycles[e] != expected || r.counters.full_selections[e] != full_expected) {
          pass = false;
          d << "batch " << batch << " " << to_string(sched) << " epoch " << e + 1 << ": cycles "
            << r.counters.cycles[e] << " (want " << expected << "), full selections "
            << r.counters.full_selections[e] << " (want " << full_expected << "); ";
        }
      }
      if (r.counters.cycles.size() != 3) {
        pass = false;
        d << "expected 3 epochs of counters; ";
      }
    }
  }
  if (pass) d << "n=330, batch sizes 64/33/330/500: cycles = ceil(n/b) per epoch; epoch_level does 1 full selection";
  return {5, "select-update accounting", pass, d.str()};
}

// ---- 6 -------------------------------------------------------------------

ExperimentConfig moons_experiment(const std::string& preset) {
  ExperimentConfig c;
  c.data.kind = DataKind::two_moons;
  c.data.n = 1000;
  c.data.test_n = 1000;
  c.data.jitter = 0.15;
  c.data.seed = 11;
  c.noise.kind = NoiseKind::symmetric;
  c.noise.ratio = 0.4;
  c.run = instantiate(preset);
  c.run.hidden = 256;
  c.run.epochs = 60;
  c.run.warmup_epochs = 5;
  c.run.batch_size = 64;
  c.run.optimizer.lr = 0.05;
  c.run.optimizer.weight_decay = 0.0;
  return c;
}

CriterionResult oracle_equivalence() {
  std::vector<double> oracle_acc, clean_acc;
  for (auto seed : kSeeds) {
    ExperimentConfig oracle = moons_experiment("cross_entropy");
    oracle.run.preset = "oracle_ce";
    oracle.run.selector.kind = SelectorKind::oracle;
    oracle.run.backbone.kind = BackboneKind::ce_only;
    oracle.run.warmup_epochs = 0;
    apply_seed(oracle, seed);
    const LoadedData data = load_data(oracle.data, oracle.noise);
    oracle_acc.push_back(train(oracle.run, data.train, data.test).report.rows.back().test_acc);

    std::vector<Index> clean_rows;
    const auto mask = data.train.clean_mask();
    for (Index i = 0; i < data.train.size(); ++i)
      if (mask[static_cast<std::size_t>(i)]) clean_rows.push_back(i);
    RunConfig supervised = instantiate("cross_entropy");
    supervised.hidden = oracle.run.hidden;
    supervised.epochs = oracle.run.epochs;
    supervised.warmup_epochs = 0;
    supervised.batch_size = oracle.run.batch_size;
    supervised.optimizer = oracle.run.optimizer;
    supervised.seed = oracle.run.seed;
    clean_acc.push_back(train(supervised, data.train.subset(clean_rows), data.test).report.rows.back().test_acc);
  }
  const double gap = std::abs(mean(oracle_acc) - mean(clean_acc));
  return {6, "oracle-selector equivalence", gap <= kOracleGap,
          "two-moons 40% symmetric, 3 seeds: oracle+ce_only " + fmt("%.4f", mean(oracle_acc)) + " vs clean-subset " +
              fmt("%.4f", mean(clean_acc)) + ", gap " + fmt("%.4f", gap) + " <= " + fmt("%.2f", kOracleGap)};
}

// ---- 7 -------------------------------------------------------------------

// Smaller training set with a long budget so that CE's last-epoch accuracy
// reflects fitting the noise; the long warm-up keeps selection from starting
// off a near-linear boundary.
ExperimentConfig moons_ordering_experiment(const std::string& preset) {
  ExperimentConfig c = moons_experiment(preset);
  c.data.n = 300;
  c.run.batch_size = 32;
  c.run.warmup_epochs = 40;
  c.run.epochs = 200;
  c.run.backbone.lambda_u = 5.0;
  c.run.backbone.mixup_alpha = 0.5;
  return c;
}

ExperimentConfig mnist_experiment(const std::string& preset, const std::filesystem::path& dir, double ratio) {
  ExperimentConfig c;
  c.data.kind = DataKind::idx;
  c.data.dir = dir.string();
  c.noise.kind = NoiseKind::symmetric;
  c.noise.ratio = ratio;
  c.run = instantiate(preset);
  c.run.hidden = 256;
  c.run.epochs = 30;
  c.run.warmup_epochs = 3;
  c.run.batch_size = 64;
  c.run.optimizer.lr = 0.02;
  return c;
}

struct Outcome {
  double final_acc = 0.0;
  double precision = 0.0;  // mean over post-warm-up epochs
};

Outcome run_cell(ExperimentConfig c, std::uint64_t seed) {
  apply_seed(c, seed);
  const LoadedData data = load_data(c.data, c.noise);
  const RunResult r = train(c.run, data.train, data.test);
  Outcome o;
  o.final_acc = r.report.rows.empty() ? 0.0 : r.report.rows.back().test_acc;
  std::vector<double> prec;
  for (const auto& row : r.report.rows) prec.push_back(row.sel_precision);
  o.precision = mean(prec);
  return o;
}

CriterionResult ordering(const AcceptanceOptions& options) {
  std::ostringstream d;
  bool pass = true;
  const auto dir = mnist_dir(options);
  struct Suite {
    std::string name;
    std::function<ExperimentConfig(const std::string&)> make;
  };
  const Suite suites[] = {
      {"two-moons", [](const std::string& p) { return moons_ordering_experiment(p); }},
      {"mnist", [&dir](const std::string& p) { return mnist_experiment(p, dir, 0.4); }},
  };
  for (const auto& suite : suites) {
    std::vector<double> ce;
    for (auto seed : kSeeds) ce.push_back(run_cell(suite.make("cross_entropy"), seed).final_acc);
    d << suite.name << ": CE " << fmt("%.4f", mean(ce));
    for (const std::string preset : {"gpl", "dividemix_plus"}) {
      std::vector<double> acc, prec;
      for (auto seed : kSeeds) {
        const Outcome o = run_cell(suite.make(preset), seed);
        acc.push_back(o.final_acc);
        prec.push_back(o.precision);
      }
      const bool ok = mean(acc) - mean(ce) >= kMarginOverCe && mean(prec) > kCleanBaseRate;
      pass = pass && ok;
      d << ", " << preset << " " << fmt("%.4f", mean(acc)) << " (prec " << fmt("%.3f", mean(prec)) << ")"
        << (ok ? "" : " [short]");
    }
    d << "; ";
  }
  d << "need margin >= " << fmt("%.2f", kMarginOverCe) << " and precision > " << kCleanBaseRate;
  return {7, "CE < selection+SSL ordering", pass, d.str()};
}

// ---- 8 -------------------------------------------------------------------

CriterionResult schedule_ablation(const AcceptanceOptions& options) {
  const auto dir = mnist_dir(options);
  std::vector<double> mb, el;
  for (auto seed : kSeeds) {
    mb.push_back(run_cell(mnist_experiment("dividemix_plus", dir, 0.8), seed).final_acc);
    el.push_back(run_cell(mnist_experiment("dividemix_epoch", dir, 0.8), seed).final_acc);
  }
  const bool pass = mean(mb) >= mean(el) - kScheduleSlack;
  return {8, "mini-batch vs epoch-level scheduling", pass,
          "mnist 80% symmetric, 3 seeds: mini_batch " + fmt("%.4f", mean(mb)) + ", epoch_level " +
              fmt("%.4f", mean(el)) + " (slack " + fmt("%.2f", kScheduleSlack) + ")"};
}

// ---- 9 -------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CriterionResult determinism(const AcceptanceOptions& options) {
  const auto root =
      options.scratch.empty() ? std::filesystem::temp_directory_path() / "nlw-verify" : options.scratch;
  ExperimentConfig c = moons_experiment("dividemix_plus");
  c.data.n = 400;
  c.data.test_n = 400;
  c.run.epochs = 4;
  c.run.warmup_epochs = 1;
  c.run.hidden = 32;
  std::vector<std::string> bodies;
  for (const char* name : {"first", "second"}) {
    run_experiment(c, root / name);
    bodies.push_back(slurp(root / name / "report.csv"));
  }
  const bool pass = !bodies[0].empty() && bodies[0] == bodies[1];
  return {9, "run determinism", pass,
          pass ? "two dividemix_plus runs wrote identical report.csv (" + std::to_string(bodies[0].size()) + " bytes)"
               : "report.csv bodies differ"};
}

// ---- 10 ------------------------------------------------------------------

CriterionResult label_hygiene() {
  const Dataset noisy = inject_noise(gen_two_moons(300, 0.15, 21), NoiseSpec{NoiseKind::symmetric, 0.4, {}, 22, false});
  const Dataset stripped = noisy.without_truth();
  const Dataset test = gen_two_moons(200, 0.15, 23);
  std::string failures;
  int checked = 0;
  for (const auto& preset : preset_names()) {
    RunConfig cfg = instantiate(preset);
    cfg.hidden = 16;
    cfg.epochs = 3;
    cfg.warmup_epochs = 1;
    cfg.batch_size = 32;
    cfg.seed = 5;
    std::vector<double> loss_a, loss_b;
    const RunResult a = train(cfg, noisy, test, [&](const EpochRow& r) { loss_a.push_back(r.train_loss); });
    const RunResult b = train(cfg, stripped, test, [&](const EpochRow& r) { loss_b.push_back(r.train_loss); });
    bool same = a.networks.size() == b.networks.size() && loss_a == loss_b;
    for (std::size_t k = 0; same && k < a.networks.size(); ++k) same = same_network(a.networks[k], b.networks[k]);
    for (std::size_t e = 0; same && e < a.report.rows.size(); ++e)
      same = a.report.rows[e].test_acc == b.report.rows[e].test_acc;
    if (!same) failures += (failures.empty() ? "" : ", ") + preset;
    ++checked;
  }
  return {10, "label hygiene", failures.empty(),
          failures.empty() ? std::to_string(checked) + " presets: parameters and losses bitwise equal without truth"
                           : "trajectories differ for: " + failures};
}

struct Budgeted {
  int id;
  double budget_s;  // 0 = no runtime bound
  std::function<CriterionResult()> run;
};

}  // namespace

std::string format_result_line(const CriterionResult& r) {
  return std::string(r.pass ? "PASS" : "FAIL") + "  " + std::to_string(r.id) + ". " + r.name + ": " + r.detail +
         " [" + fmt("%.1f", r.seconds) + " s]";
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out) {
  const std::vector<Budgeted> all = {
      {1, kGradBudgetS, gradient_check},
      {2, kEmBudgetS, em_recovery},
      {3, kNoiseBudgetS, noise_fidelity},
      {4, kReductionBudgetS, reduction_laws},
      {5, 0.0, cycle_accounting},
      {6, kOracleBudgetS, oracle_equivalence},
      {7, kOrderingBudgetS, [&] { return ordering(options); }},
      {8, kScheduleBudgetS, [&] { return schedule_ablation(options); }},
      {9, 0.0, [&] { return determinism(options); }},
      {10, 0.0, label_hygiene},
  };
  std::vector<CriterionResult> results;
  for (const auto& c : all) {
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), c.id) == options.only.end()) {
      continue;
    }
    const auto start = Clock::now();
    CriterionResult r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {c.id, "criterion " + std::to_string(c.id), false, std::string("threw: ") + e.what()};
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (c.budget_s > 0 && r.seconds > c.budget_s) {
      r.pass = false;
      r.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    out << format_result_line(r) << std::endl;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace nlw
