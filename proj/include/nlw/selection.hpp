#pragma once

// Sample selectors: split a mini-batch into a trusted-label subset and an
// unlabeled subset. Indices in a BatchPartition are positions within the batch.

#include <array>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "nlw/data.hpp"

namespace nlw {

/// Two-component 1-D Gaussian mixture; component 0 (smaller mean) is "clean".
struct GmmParams {
  std::array<double, 2> means{0.0, 1.0};
  std::array<double, 2> variances{1.0, 1.0};
  std::array<double, 2> weights{0.5, 0.5};

  bool operator==(const GmmParams&) const = default;
};

inline constexpr double kVarianceFloor = 1e-6;
/// Losses are clamped to [0, kLossCeiling] before selection.
inline constexpr double kLossCeiling = 50.0;

struct EmOptions {
  double tol = 1e-6;
  int max_iter = 100;
};

struct GmmFit {
  GmmParams params;
  bool degenerate = false;
  int iterations = 0;
  /// Mean log-likelihood after initialization and after every EM iteration.
  std::vector<double> log_likelihood;
};

/// Mean log-likelihood of `values` under `params`.
double gmm_log_likelihood(std::span<const double> values, const GmmParams& params);

/// Posterior of the clean component for each value (E-step).
std::vector<double> gmm_clean_responsibilities(std::span<const double> values, const GmmParams& params);

/// M-step from clean-component responsibilities r_i (noisy gets 1 - r_i).
GmmParams gmm_m_step(std::span<const double> values, std::span<const double> clean_resp);

/// EM from a percentile initialization (means at the 10th/90th percentile,
/// equal weights, both variances = sample variance). Components are
/// relabelled so that means[0] <= means[1]. Inputs whose spread is below
/// 1e-12 return with `degenerate` set and no EM run. Throws NumericError if
/// the log-likelihood decreases.
GmmFit fit_gmm_1d(std::span<const double> values, const EmOptions& options = {});

/// p(k = 0 | loss) = p(0) p(loss|0) / p(loss).
double gmm_posterior_clean(double loss, const GmmParams& params);

/// Clamp to [0, kLossCeiling] then min-max scale to [0, 1]. A zero range maps
/// everything to 0.
std::vector<double> normalize_losses(std::span<const double> losses);

enum class SelectorKind { gmm, spd, small_loss, oracle };

struct SelectorConfig {
  SelectorKind kind = SelectorKind::gmm;
  double clean_threshold = 0.5;
  double keep_fraction = 0.5;
  double em_tol = 1e-6;
  int em_max_iter = 100;
  /// GMM fitting window in losses; 0 fits on the current batch only.
  std::size_t window = 0;

  bool operator==(const SelectorConfig&) const = default;
};

struct BatchPartition {
  std::vector<Index> clean;
  std::vector<Index> unlabeled;
  /// Per batch position: clean posterior (gmm) or 1/0 indicator (other selectors).
  std::vector<double> clean_posterior;

  Index size() const { return static_cast<Index>(clean.size() + unlabeled.size()); }
  double clean_fraction() const;
};

/// Trailing buffer of the most recent losses used as the GMM fitting window.
class LossWindow {
 public:
  explicit LossWindow(std::size_t capacity = 2048) : capacity_(capacity) {}
  void push(std::span<const double> losses);
  std::vector<double> values() const { return {buf_.begin(), buf_.end()}; }
  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<double> buf_;
};

/// Clean iff p(clean | normalized loss) > clean_threshold. With a window the
/// mixture is fitted on the window contents after appending this batch.
/// Degenerate losses give an all-clean partition.
BatchPartition select_gmm(std::span<const double> losses, const SelectorConfig& config,
                          LossWindow* window = nullptr);

/// Clean iff argmax(logits_i) == given_i (ties to the lowest class).
BatchPartition select_spd(const Mat& logits, std::span<const int> given_labels);

/// The ceil(keep_fraction * m) smallest losses are clean; ties by position.
BatchPartition select_small_loss(std::span<const double> losses, double keep_fraction);

/// Clean iff the given label equals the true label. Test selector only.
BatchPartition select_oracle(std::span<const int> given_labels, std::span<const int> true_labels);

struct SelectionMetrics {
  double precision = 1.0;
  double recall = 1.0;
};

/// precision = |clean & truly clean| / |clean| (1 when nothing selected);
/// recall = |clean & truly clean| / |truly clean| (1 when nothing truly clean).
SelectionMetrics selection_metrics(const BatchPartition& partition, const std::vector<bool>& truly_clean);

/// Builds a partition from per-position clean flags and posteriors.
BatchPartition partition_from_flags(const std::vector<bool>& clean, std::vector<double> posterior);

}  // namespace nlw
