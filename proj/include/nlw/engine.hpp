#pragma once

// Training loop: shuffle, fetch a mini-batch, split it with a selector, then
// hand both parts to a semi-supervised backbone for one update.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlw/data.hpp"
#include "nlw/selection.hpp"
#include "nlw/ssl.hpp"

namespace nlw {

enum class Schedule { mini_batch, epoch_level };
enum class NetworkMode { single, dual };

struct OptimizerConfig {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  bool operator==(const OptimizerConfig&) const = default;
};

struct RunConfig {
  std::string preset;  // informational; empty for hand-assembled configs
  SelectorConfig selector;
  BackboneConfig backbone;
  Schedule schedule = Schedule::mini_batch;
  NetworkMode networks = NetworkMode::single;
  int epochs = 60;  // epochs after warm-up
  int batch_size = 64;
  int warmup_epochs = 5;
  int hidden = 256;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  bool operator==(const RunConfig&) const = default;
};

/// Throws ConfigError listing every contradiction (e.g. dual + spd).
void validate(const RunConfig& config);

/// Presets: gpl, dividemix_plus, dividemix_epoch, spd_ce, spd_te,
/// spd_mixmatch, spd_pl, and cross_entropy (no selection, CE on all labels).
RunConfig instantiate(std::string_view name);
std::vector<std::string> preset_names();

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double test_acc = 0.0;
  double sel_precision = 0.0;
  double sel_recall = 0.0;
  double clean_frac = 0.0;
  /// Accuracy of the first network alone (equals test_acc in single mode).
  double test_acc_first = 0.0;

  bool operator==(const EpochRow&) const = default;
};

struct RunReport {
  std::vector<EpochRow> rows;
  bool operator==(const RunReport&) const = default;
};

struct RunCounters {
  std::vector<long> cycles;           // select+update cycles per epoch
  std::vector<long> full_selections;  // full-dataset selection passes per epoch
  long warmup_steps = 0;
};

struct RunResult {
  std::vector<Network> networks;
  RunReport report;
  RunCounters counters;
};

Network make_network(const MlpShape& shape, const OptimizerConfig& opt, std::uint64_t seed);

/// Supervised CE on all given labels for `epochs` epochs. Returns the number
/// of SGD steps taken.
long warmup(Network& net, const TrainingView& view, int epochs, Index batch_size, std::uint64_t seed);

/// Fraction of argmax predictions equal to the true labels (ties to the lowest class).
double evaluate(const Network& net, const Dataset& test);
/// Argmax of the averaged softmax of all networks.
double evaluate(std::span<const Network> nets, const Dataset& test);

using EpochCallback = std::function<void(const EpochRow&)>;

/// Warm-up followed by `epochs` select-then-semi epochs. Ground-truth labels of
/// `train` are read only for selection metrics and by the oracle selector.
RunResult train(const RunConfig& config, const Dataset& train, const Dataset& test,
                const EpochCallback& on_epoch = {});

}  // namespace nlw
