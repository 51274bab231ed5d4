#pragma once

// Experiment files: UTF-8, one `section.key = value` per line, `#` comments.
// Sections: data, noise, model, selector, backbone, engine. Unknown keys are
// rejected. `engine.preset` is applied first; explicit keys override it.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "nlw/data.hpp"
#include "nlw/engine.hpp"

namespace nlw {

enum class DataKind { two_moons, idx };

struct DataConfig {
  DataKind kind = DataKind::two_moons;
  // two_moons
  Index n = 1000;
  Index test_n = 1000;
  double jitter = 0.1;
  std::uint64_t seed = 1;
  // idx: directory with {train,t10k}-{images-idx3,labels-idx1}-ubyte.
  // Empty means $WORKBENCH_DATA_DIR.
  std::string dir;
  Index max_train = 0;  // 0 keeps every row
  Index max_test = 0;

  bool operator==(const DataConfig&) const = default;
};

struct ExperimentConfig {
  DataConfig data;
  NoiseSpec noise;
  RunConfig run;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates. Throws ConfigError listing every problem with its
/// line number.
ExperimentConfig parse_experiment_text(std::string_view text);
ExperimentConfig parse_experiment(const std::filesystem::path& path);

/// Every key written explicitly; parse_experiment_text(serialize(c)) == c.
std::string serialize_experiment(const ExperimentConfig& config);

struct LoadedData {
  Dataset train;  // noisy given labels
  Dataset test;   // clean
};

/// Builds or loads the data and injects noise into the training split.
LoadedData load_data(const DataConfig& data, const NoiseSpec& noise);

std::string_view to_string(SelectorKind k);
std::string_view to_string(BackboneKind k);
std::string_view to_string(Schedule s);
std::string_view to_string(NetworkMode m);
std::string_view to_string(NoiseKind k);

}  // namespace nlw
