#include "nlw/engine.hpp"

#include <algorithm>
#include <optional>

#include "nlw/errors.hpp"
#include "nlw/random.hpp"

namespace nlw {
namespace {

// Seed streams derived from RunConfig::seed.
constexpr std::uint64_t kInitStream = 1;       // + network index
constexpr std::uint64_t kBackboneStream = 10;  // + network index
constexpr std::uint64_t kWarmupStream = 20;    // + network index
constexpr std::uint64_t kEpochStream = 1000;   // + epoch index

Mat one_hot(std::span<const int> labels, Index classes) {
  Mat t = Mat::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Index>(i), labels[i]) = 1.0;
  return t;
}

Mat take_rows(const Mat& m, std::span<const Index> positions) {
  Mat out(static_cast<Index>(positions.size()), m.cols());
  for (std::size_t k = 0; k < positions.size(); ++k) out.row(static_cast<Index>(k)) = m.row(positions[k]);
  return out;
}

/// Ground truth, reachable from metric bookkeeping and the oracle selector only.
struct GroundTruth {
  std::span<const int> labels;

  std::vector<bool> clean_mask(const MiniBatch& batch) const {
    std::vector<bool> mask(batch.indices.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = batch.given_labels[i] == labels[static_cast<std::size_t>(batch.indices[i])];
    }
    return mask;
  }

  std::vector<int> for_rows(std::span<const Index> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (Index r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
    return out;
  }
};

struct Selection {
  BatchPartition partition;
  Vec losses;
};

class Selector {
 public:
  Selector(const SelectorConfig& config, std::optional<GroundTruth> oracle_truth)
      : config_(config), oracle_truth_(std::move(oracle_truth)) {
    if (config_.window > 0) window_.emplace(config_.window);
  }

  /// Partition of `features`/`given` scored with `net`. `rows` are dataset row ids.
  Selection select(const Network& net, const Mat& features, std::span<const int> given,
                   std::span<const Index> rows, bool full_dataset) {
    const Mat logits = mlp_forward(net.params, features);
    Selection out;
    out.losses = ce_loss_and_grad<double>(logits, one_hot(given, logits.cols())).per_sample;
    const std::span<const double> losses(out.losses.data(), static_cast<std::size_t>(out.losses.size()));
    switch (config_.kind) {
      case SelectorKind::gmm:
        out.partition = select_gmm(losses, config_, full_dataset || !window_ ? nullptr : &*window_);
        break;
      case SelectorKind::spd:
        out.partition = select_spd(logits, given);
        break;
      case SelectorKind::small_loss:
        out.partition = select_small_loss(losses, config_.keep_fraction);
        break;
      case SelectorKind::oracle:
        out.partition = select_oracle(given, oracle_truth_->for_rows(rows));
        break;
    }
    return out;
  }

 private:
  SelectorConfig config_;
  std::optional<GroundTruth> oracle_truth_;
  std::optional<LossWindow> window_;
};

/// Per-row clean flags and posteriors from one full-dataset selection pass.
struct EpochPartitionCache {
  std::vector<bool> clean;
  std::vector<double> posterior;
  double mean_loss = 0.0;

  BatchPartition lookup(const MiniBatch& batch) const {
    std::vector<bool> flags(batch.indices.size());
    std::vector<double> post(batch.indices.size());
    for (std::size_t i = 0; i < flags.size(); ++i) {
      const auto r = static_cast<std::size_t>(batch.indices[i]);
      flags[i] = clean[r];
      post[i] = posterior[r];
    }
    return partition_from_flags(flags, std::move(post));
  }
};

EpochPartitionCache full_selection(Selector& selector, const Network& net, const TrainingView& view) {
  std::vector<Index> all(static_cast<std::size_t>(view.size()));
  for (Index i = 0; i < view.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  const auto sel = selector.select(net, *view.features, view.given_labels, all, true);
  EpochPartitionCache cache;
  cache.clean.assign(all.size(), false);
  for (Index i : sel.partition.clean) cache.clean[static_cast<std::size_t>(i)] = true;
  cache.posterior = sel.partition.clean_posterior;
  cache.mean_loss = sel.losses.mean();
  return cache;
}

/// Labeled/unlabeled parts for `net`, split by `partition`. When `peer` is
/// given (dual mode), labeled targets are co-refined with the partition's
/// clean posterior and unlabeled targets are co-guessed by both networks.
std::pair<LabeledPart, UnlabeledPart> build_parts(const MiniBatch& batch, const BatchPartition& partition,
                                                  const Network& net, const Network* peer, Index classes) {
  LabeledPart x;
  UnlabeledPart u;
  x.features = take_rows(batch.features, partition.clean);
  u.features = take_rows(batch.features, partition.unlabeled);
  std::vector<int> labels;
  for (Index p : partition.clean) {
    x.rows.push_back(batch.indices[static_cast<std::size_t>(p)]);
    labels.push_back(batch.given_labels[static_cast<std::size_t>(p)]);
  }
  for (Index p : partition.unlabeled) u.rows.push_back(batch.indices[static_cast<std::size_t>(p)]);
  x.targets = one_hot(labels, classes);

  if (peer != nullptr) {
    if (x.size() > 0) {
      const Mat own = softmax_rows(mlp_forward(net.params, x.features));
      for (Index k = 0; k < x.size(); ++k) {
        const double w = partition.clean_posterior[static_cast<std::size_t>(partition.clean[static_cast<std::size_t>(k)])];
        x.targets.row(k) = w * x.targets.row(k) + (1.0 - w) * own.row(k);
      }
    }
    if (u.size() > 0) {
      u.guesses = 0.5 * (softmax_rows(mlp_forward(net.params, u.features)) +
                         softmax_rows(mlp_forward(peer->params, u.features)));
    }
  }
  return {std::move(x), std::move(u)};
}

struct EpochTotals {
  double loss_sum = 0.0;
  long loss_count = 0;
  double precision_sum = 0.0;
  double recall_sum = 0.0;
  long metric_count = 0;
  long clean = 0;
  long seen = 0;

  void add(const BatchPartition& p, const std::vector<bool>& truly_clean) {
    const auto m = selection_metrics(p, truly_clean);
    precision_sum += m.precision;
    recall_sum += m.recall;
    ++metric_count;
    clean += static_cast<long>(p.clean.size());
    seen += static_cast<long>(p.size());
  }
};

void require_finite(const Network& net) {
  if (!net.params.all_finite()) throw NumericError("training produced non-finite parameters");
}

}  // namespace

void validate(const RunConfig& c) {
  std::vector<std::string> problems;
  auto check = [&problems](bool ok, const char* msg) {
    if (!ok) problems.emplace_back(msg);
  };
  check(c.epochs >= 0, "engine.epochs must be nonnegative");
  check(c.batch_size >= 1, "engine.batch_size must be at least 1");
  check(c.warmup_epochs >= 0, "engine.warmup_epochs must be nonnegative");
  check(c.hidden >= 1, "model.hidden must be at least 1");
  check(c.optimizer.lr > 0, "model.lr must be positive");
  check(c.optimizer.momentum >= 0 && c.optimizer.momentum < 1, "model.momentum must lie in [0, 1)");
  check(c.optimizer.weight_decay >= 0, "model.weight_decay must be nonnegative");
  check(c.selector.clean_threshold > 0 && c.selector.clean_threshold < 1,
        "selector.clean_threshold must lie in (0, 1)");
  check(c.selector.keep_fraction > 0 && c.selector.keep_fraction <= 1, "selector.keep_fraction must lie in (0, 1]");
  check(c.selector.em_tol > 0, "selector.em_tol must be positive");
  check(c.selector.em_max_iter >= 1, "selector.em_max_iter must be at least 1");
  check(c.networks != NetworkMode::dual ||
            c.selector.kind == SelectorKind::gmm || c.selector.kind == SelectorKind::oracle,
        "dual networks require a posterior-producing selector (gmm or oracle)");
  try {
    validate(c.backbone);
  } catch (const ArgumentError& e) {
    problems.emplace_back(e.what());
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

std::vector<std::string> preset_names() {
  return {"gpl", "dividemix_plus", "dividemix_epoch", "spd_ce", "spd_te", "spd_mixmatch", "spd_pl", "cross_entropy"};
}

RunConfig instantiate(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  auto set = [&c](SelectorKind s, BackboneKind b, Schedule sched, NetworkMode nets) {
    c.selector.kind = s;
    c.backbone.kind = b;
    c.schedule = sched;
    c.networks = nets;
  };
  if (name == "gpl") {
    set(SelectorKind::gmm, BackboneKind::pseudo_label, Schedule::mini_batch, NetworkMode::single);
  } else if (name == "dividemix_plus") {
    set(SelectorKind::gmm, BackboneKind::mixmatch, Schedule::mini_batch, NetworkMode::dual);
  } else if (name == "dividemix_epoch") {
    set(SelectorKind::gmm, BackboneKind::mixmatch, Schedule::epoch_level, NetworkMode::dual);
  } else if (name == "spd_ce") {
    set(SelectorKind::spd, BackboneKind::ce_only, Schedule::mini_batch, NetworkMode::single);
  } else if (name == "spd_te") {
    set(SelectorKind::spd, BackboneKind::temporal_ensembling, Schedule::mini_batch, NetworkMode::single);
  } else if (name == "spd_mixmatch") {
    set(SelectorKind::spd, BackboneKind::mixmatch, Schedule::mini_batch, NetworkMode::single);
  } else if (name == "spd_pl") {
    set(SelectorKind::spd, BackboneKind::pseudo_label, Schedule::mini_batch, NetworkMode::single);
  } else if (name == "cross_entropy") {
    set(SelectorKind::small_loss, BackboneKind::ce_only, Schedule::mini_batch, NetworkMode::single);
    c.selector.keep_fraction = 1.0;
  } else {
    throw ArgumentError("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

Network make_network(const MlpShape& shape, const OptimizerConfig& opt, std::uint64_t seed) {
  Rng rng(seed);
  auto params = init_mlp<double>(shape, rng);
  auto state = OptState<double>::for_params(params, opt.lr, opt.momentum, opt.weight_decay);
  return {std::move(params), std::move(state)};
}

long warmup(Network& net, const TrainingView& view, int epochs, Index batch_size, std::uint64_t seed) {
  if (epochs < 0) throw ArgumentError("warmup: epochs must be nonnegative");
  long steps = 0;
  for (int e = 0; e < epochs; ++e) {
    for (const auto& batch : epoch_batches(view, batch_size, derive_seed(seed, static_cast<std::uint64_t>(e)))) {
      LabeledPart x{batch.features, one_hot(batch.given_labels, net.params.shape().classes), batch.indices};
      ce_only_step(net, x);
      ++steps;
    }
  }
  require_finite(net);
  return steps;
}

double evaluate(std::span<const Network> nets, const Dataset& test) {
  if (test.size() == 0) throw ArgumentError("evaluate: empty test set");
  if (nets.empty()) throw ArgumentError("evaluate: no networks");
  Mat scores;
  if (nets.size() == 1) {
    scores = mlp_forward(nets.front().params, test.features());
  } else {
    scores = Mat::Zero(test.size(), nets.front().params.shape().classes);
    for (const auto& net : nets) scores += softmax_rows(mlp_forward(net.params, test.features()));
  }
  long correct = 0;
  for (Index i = 0; i < test.size(); ++i) {
    correct += argmax_lowest(scores.row(i)) == test.true_labels()[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double evaluate(const Network& net, const Dataset& test) { return evaluate(std::span<const Network>(&net, 1), test); }

RunResult train(const RunConfig& config, const Dataset& train_set, const Dataset& test, const EpochCallback& on_epoch) {
  validate(config);
  if (train_set.size() == 0) throw ArgumentError("train: empty training set");
  if (test.dim() != train_set.dim()) throw ShapeError("train: train/test feature dimensions differ");

  const TrainingView view = train_set.training_view();
  const GroundTruth truth{train_set.true_labels()};
  const Index classes = train_set.num_classes();
  const MlpShape shape{train_set.dim(), config.hidden, classes};
  const std::size_t net_count = config.networks == NetworkMode::dual ? 2 : 1;
  const bool dual = net_count == 2;

  RunResult result;
  std::vector<BackboneState> states;
  std::vector<Selector> selectors;
  for (std::size_t k = 0; k < net_count; ++k) {
    result.networks.push_back(make_network(shape, config.optimizer, derive_seed(config.seed, kInitStream + k)));
    result.counters.warmup_steps += warmup(result.networks[k], view, config.warmup_epochs, config.batch_size,
                                           derive_seed(config.seed, kWarmupStream + k));
    states.push_back(make_backbone_state(config.backbone, train_set.size(), classes,
                                         derive_seed(config.seed, kBackboneStream + k)));
    selectors.emplace_back(config.selector,
                           config.selector.kind == SelectorKind::oracle ? std::optional(truth) : std::nullopt);
  }
  auto& nets = result.networks;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochTotals totals;
    long cycles = 0, full_passes = 0;

    std::vector<EpochPartitionCache> caches;
    if (config.schedule == Schedule::epoch_level) {
      for (std::size_t k = 0; k < net_count; ++k) caches.push_back(full_selection(selectors[k], nets[k], view));
      full_passes = 1;
      totals.loss_sum = caches.front().mean_loss;
      totals.loss_count = 1;
    }

    const auto batches = epoch_batches(view, config.batch_size, derive_seed(config.seed, kEpochStream + epoch));
    for (const auto& batch : batches) {
      const auto truly_clean = truth.clean_mask(batch);
      std::vector<BatchPartition> partitions;
      for (std::size_t k = 0; k < net_count; ++k) {
        if (config.schedule == Schedule::epoch_level) {
          partitions.push_back(caches[k].lookup(batch));
        } else {
          auto sel = selectors[k].select(nets[k], batch.features, batch.given_labels, batch.indices, false);
          if (k == 0) {
            totals.loss_sum += sel.losses.sum();
            totals.loss_count += sel.losses.size();
          }
          partitions.push_back(std::move(sel.partition));
        }
        totals.add(partitions.back(), truly_clean);
      }

      if (!dual) {
        auto [x, u] = build_parts(batch, partitions[0], nets[0], nullptr, classes);
        backbone_step(nets[0], states[0], x, u, config.backbone, epoch, view.bounds);
      } else {
        // Each network trains on the partition its peer produced.
        for (std::size_t k = 0; k < 2; ++k) {
          const std::size_t peer = 1 - k;
          auto [x, u] = build_parts(batch, partitions[peer], nets[k], &nets[peer], classes);
          backbone_step(nets[k], states[k], x, u, config.backbone, epoch, view.bounds);
        }
      }
      ++cycles;
    }
    for (const auto& net : nets) require_finite(net);

    EpochRow row;
    row.epoch = epoch + 1;
    row.train_loss = totals.loss_count > 0 ? totals.loss_sum / static_cast<double>(totals.loss_count) : 0.0;
    row.test_acc = evaluate(nets, test);
    row.test_acc_first = dual ? evaluate(nets.front(), test) : row.test_acc;
    row.sel_precision = totals.metric_count > 0 ? totals.precision_sum / static_cast<double>(totals.metric_count) : 0.0;
    row.sel_recall = totals.metric_count > 0 ? totals.recall_sum / static_cast<double>(totals.metric_count) : 0.0;
    row.clean_frac = totals.seen > 0 ? static_cast<double>(totals.clean) / static_cast<double>(totals.seen) : 0.0;
    result.report.rows.push_back(row);
    result.counters.cycles.push_back(cycles);
    result.counters.full_selections.push_back(full_passes);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

}  // namespace nlw
