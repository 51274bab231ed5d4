#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace nlw {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Eigen::Index;

/// Placeholder stored in place of a ground-truth label that is not known.
inline constexpr int kUnknownLabel = -1;

/// Closed box that augmentation clamps into.
struct FeatureBounds {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const FeatureBounds&) const = default;
};

/// What the training path is allowed to see: features and given labels.
struct TrainingView {
  const Mat* features = nullptr;
  std::span<const int> given_labels;
  int num_classes = 0;
  std::optional<FeatureBounds> bounds;

  Index size() const { return features->rows(); }
  Index dim() const { return features->cols(); }
};

class Dataset {
 public:
  Dataset() = default;
  /// Validates label ranges, finiteness and row counts. `true_labels` may
  /// hold kUnknownLabel entries.
  Dataset(Mat features, std::vector<int> given_labels, std::vector<int> true_labels, int num_classes,
          std::optional<FeatureBounds> bounds = std::nullopt);

  const Mat& features() const noexcept { return features_; }
  std::span<const int> given_labels() const noexcept { return given_; }
  std::span<const int> true_labels() const noexcept { return truth_; }
  int num_classes() const noexcept { return classes_; }
  const std::optional<FeatureBounds>& bounds() const noexcept { return bounds_; }
  Index size() const noexcept { return features_.rows(); }
  Index dim() const noexcept { return features_.cols(); }

  TrainingView training_view() const { return {&features_, given_, classes_, bounds_}; }

  /// Same samples and ground truth with replacement given labels.
  Dataset with_given_labels(std::vector<int> labels) const;
  /// Same samples and given labels, ground truth replaced by kUnknownLabel.
  Dataset without_truth() const;
  /// Rows in the listed order.
  Dataset subset(std::span<const Index> rows) const;
  /// Mask of samples whose given label equals the true label.
  std::vector<bool> clean_mask() const;

 private:
  Mat features_;
  std::vector<int> given_;
  std::vector<int> truth_;
  int classes_ = 0;
  std::optional<FeatureBounds> bounds_;
};

enum class NoiseKind { symmetric, asymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.0;
  /// Asymmetric only: class_map[c] is the flip target of class c, or -1 to
  /// leave class c untouched.
  std::optional<std::vector<int>> class_map;
  std::uint64_t seed = 0;
  /// Symmetric only: draw the replacement over all C classes (self-flips
  /// possible) instead of the C-1 other classes.
  bool include_self = false;

  bool operator==(const NoiseSpec&) const = default;
};

/// 2->7, 3->8, 5->6, 7->1 for ten classes; identity elsewhere.
std::vector<int> default_asymmetric_map(int num_classes);

void validate(const NoiseSpec& spec, int num_classes);

/// Rewrites given labels only; features and ground truth are copied unchanged.
Dataset inject_noise(const Dataset& dataset, const NoiseSpec& spec);

struct MiniBatch {
  std::vector<Index> indices;
  Mat features;
  std::vector<int> given_labels;

  Index size() const { return static_cast<Index>(indices.size()); }
};

/// Shuffled row order for one epoch.
std::vector<Index> epoch_permutation(Index n, std::uint64_t epoch_seed);

/// Batches in order; the last one may be short. Batches partition [0, n).
std::vector<MiniBatch> epoch_batches(const TrainingView& view, Index batch_size, std::uint64_t epoch_seed);
std::vector<MiniBatch> epoch_batches(const Dataset& dataset, Index batch_size, std::uint64_t epoch_seed);

/// Gathers the listed rows of the view into a batch.
MiniBatch gather_batch(const TrainingView& view, std::vector<Index> rows);

/// Reads an IDX3 image file (magic 2051) and IDX1 label file (magic 2049).
/// Pixels are divided by 255; images are flattened row-major.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 int num_classes = 10);

/// Two interleaved half circles: class 0 on the upper unit half-circle,
/// class 1 on the shifted lower one. Raw coordinates, no feature bounds.
Dataset gen_two_moons(Index n, double jitter_std, std::uint64_t seed);

/// CSV with header x0..x{d-1},given,true.
void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace nlw
