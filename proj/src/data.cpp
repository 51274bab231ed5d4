#include "nlw/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "nlw/errors.hpp"
#include "nlw/random.hpp"
#include "nlw/report.hpp"

namespace nlw {

Dataset::Dataset(Mat features, std::vector<int> given_labels, std::vector<int> true_labels, int num_classes,
                 std::optional<FeatureBounds> bounds)
    : features_(std::move(features)),
      given_(std::move(given_labels)),
      truth_(std::move(true_labels)),
      classes_(num_classes),
      bounds_(bounds) {
  if (classes_ < 1) throw ArgumentError("Dataset: num_classes must be positive");
  const auto n = static_cast<std::size_t>(features_.rows());
  if (given_.size() != n || truth_.size() != n) {
    throw ShapeError("Dataset: label vectors must have one entry per feature row");
  }
  if (features_.hasNaN()) throw NumericError("Dataset: features contain NaN");
  for (std::size_t i = 0; i < n; ++i) {
    if (given_[i] < 0 || given_[i] >= classes_) {
      throw ArgumentError("Dataset: given label out of range at row " + std::to_string(i));
    }
    if (truth_[i] != kUnknownLabel && (truth_[i] < 0 || truth_[i] >= classes_)) {
      throw ArgumentError("Dataset: true label out of range at row " + std::to_string(i));
    }
  }
}

Dataset Dataset::with_given_labels(std::vector<int> labels) const {
  return Dataset(features_, std::move(labels), truth_, classes_, bounds_);
}

Dataset Dataset::without_truth() const {
  return Dataset(features_, given_, std::vector<int>(given_.size(), kUnknownLabel), classes_, bounds_);
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Mat f(static_cast<Index>(rows.size()), dim());
  std::vector<int> g, t;
  g.reserve(rows.size());
  t.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index r = rows[k];
    if (r < 0 || r >= size()) throw ArgumentError("Dataset::subset: row out of range");
    f.row(static_cast<Index>(k)) = features_.row(r);
    g.push_back(given_[r]);
    t.push_back(truth_[r]);
  }
  return Dataset(std::move(f), std::move(g), std::move(t), classes_, bounds_);
}

std::vector<bool> Dataset::clean_mask() const {
  std::vector<bool> mask(given_.size());
  for (std::size_t i = 0; i < given_.size(); ++i) mask[i] = given_[i] == truth_[i];
  return mask;
}

std::vector<int> default_asymmetric_map(int num_classes) {
  std::vector<int> map(static_cast<std::size_t>(num_classes), -1);
  if (num_classes == 10) {
    map[2] = 7;
    map[3] = 8;
    map[5] = 6;
    map[7] = 1;
  }
  return map;
}

void validate(const NoiseSpec& spec, int num_classes) {
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) throw ArgumentError("noise ratio must lie in [0, 1]");
  if (spec.kind != NoiseKind::asymmetric) return;
  if (!spec.class_map) throw ArgumentError("asymmetric noise requires a class_map");
  const auto& map = *spec.class_map;
  if (map.size() != static_cast<std::size_t>(num_classes)) {
    throw ArgumentError("class_map must have one entry per class");
  }
  for (int c = 0; c < num_classes; ++c) {
    const int target = map[static_cast<std::size_t>(c)];
    if (target == -1) continue;
    if (target < 0 || target >= num_classes) throw ArgumentError("class_map target out of range");
    if (target == c) throw ArgumentError("class_map must map a class to a different class");
  }
}

Dataset inject_noise(const Dataset& dataset, const NoiseSpec& spec) {
  const int classes = dataset.num_classes();
  validate(spec, classes);
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<int> labels(dataset.given_labels().begin(), dataset.given_labels().end());
  for (auto& label : labels) {
    // One coin per sample keeps realizations comparable across ratios.
    const bool flip = coin(rng) < spec.ratio;
    if (spec.kind == NoiseKind::symmetric) {
      if (spec.include_self) {
        std::uniform_int_distribution<int> any(0, classes - 1);
        const int draw = any(rng);
        if (flip) label = draw;
      } else if (classes > 1) {
        std::uniform_int_distribution<int> other(0, classes - 2);
        const int draw = other(rng);
        if (flip) label = draw >= label ? draw + 1 : draw;
      }
    } else if (flip) {
      const int target = (*spec.class_map)[static_cast<std::size_t>(label)];
      if (target != -1) label = target;
    }
  }
  return dataset.with_given_labels(std::move(labels));
}

std::vector<Index> epoch_permutation(Index n, std::uint64_t epoch_seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

MiniBatch gather_batch(const TrainingView& view, std::vector<Index> rows) {
  MiniBatch b;
  b.features.resize(static_cast<Index>(rows.size()), view.dim());
  b.given_labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    b.features.row(static_cast<Index>(k)) = view.features->row(rows[k]);
    b.given_labels.push_back(view.given_labels[static_cast<std::size_t>(rows[k])]);
  }
  b.indices = std::move(rows);
  return b;
}

std::vector<MiniBatch> epoch_batches(const TrainingView& view, Index batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ArgumentError("epoch_batches: batch_size must be at least 1");
  const auto order = epoch_permutation(view.size(), epoch_seed);
  std::vector<MiniBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    batches.push_back(gather_batch(view, std::vector<Index>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                            order.begin() + static_cast<std::ptrdiff_t>(stop))));
  }
  return batches;
}

std::vector<MiniBatch> epoch_batches(const Dataset& dataset, Index batch_size, std::uint64_t epoch_seed) {
  return epoch_batches(dataset.training_view(), batch_size, epoch_seed);
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) {
    throw FormatError(path.string() + ": truncated header at offset " + std::to_string(offset));
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 int num_classes) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);

  if (const auto magic = read_be32(img, 0, images_path); magic != 0x00000803) {
    throw FormatError(images_path.string() + ": bad magic " + std::to_string(magic) + " at offset 0");
  }
  if (const auto magic = read_be32(lab, 0, labels_path); magic != 0x00000801) {
    throw FormatError(labels_path.string() + ": bad magic " + std::to_string(magic) + " at offset 0");
  }
  const std::size_t count = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t label_count = read_be32(lab, 4, labels_path);
  if (label_count != count) {
    throw FormatError(labels_path.string() + ": label count " + std::to_string(label_count) +
                      " at offset 4 does not match image count " + std::to_string(count));
  }
  const std::size_t d = rows * cols;
  constexpr std::size_t kImageHeader = 16, kLabelHeader = 8;
  if (img.size() < kImageHeader + count * d) {
    throw FormatError(images_path.string() + ": truncated payload at offset " + std::to_string(img.size()) +
                      ", expected " + std::to_string(kImageHeader + count * d) + " bytes");
  }
  if (lab.size() < kLabelHeader + count) {
    throw FormatError(labels_path.string() + ": truncated payload at offset " + std::to_string(lab.size()) +
                      ", expected " + std::to_string(kLabelHeader + count) + " bytes");
  }

  Mat features(static_cast<Index>(count), static_cast<Index>(d));
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* px = img.data() + kImageHeader + i * d;
    for (std::size_t j = 0; j < d; ++j) features(static_cast<Index>(i), static_cast<Index>(j)) = px[j] / 255.0;
    const int label = lab[kLabelHeader + i];
    if (label >= num_classes) {
      throw FormatError(labels_path.string() + ": label " + std::to_string(label) + " out of range at offset " +
                        std::to_string(kLabelHeader + i));
    }
    labels[i] = label;
  }
  auto truth = labels;
  return Dataset(std::move(features), std::move(labels), std::move(truth), num_classes, FeatureBounds{0.0, 1.0});
}

Dataset gen_two_moons(Index n, double jitter_std, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw ArgumentError("gen_two_moons: n must be even and at least 2");
  if (!(jitter_std >= 0.0)) throw ArgumentError("gen_two_moons: jitter_std must be nonnegative");
  const Index half = n / 2;
  Mat x(n, 2);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < half; ++i) {
    const double t = half == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1);
    x(i, 0) = std::cos(t);
    x(i, 1) = std::sin(t);
    labels[static_cast<std::size_t>(i)] = 0;
    x(half + i, 0) = 1.0 - std::cos(t);
    x(half + i, 1) = 0.5 - std::sin(t);
    labels[static_cast<std::size_t>(half + i)] = 1;
  }
  if (jitter_std > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, jitter_std);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < 2; ++j) x(i, j) += noise(rng);
  }
  auto truth = labels;
  return Dataset(std::move(x), std::move(labels), std::move(truth), 2);
}

void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::string out;
  for (Index j = 0; j < dataset.dim(); ++j) out += "x" + std::to_string(j) + ",";
  out += "given,true\n";
  for (Index i = 0; i < dataset.size(); ++i) {
    for (Index j = 0; j < dataset.dim(); ++j) out += format_fixed(dataset.features()(i, j)) + ",";
    out += std::to_string(dataset.given_labels()[static_cast<std::size_t>(i)]) + "," +
           std::to_string(dataset.true_labels()[static_cast<std::size_t>(i)]) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace nlw
