#pragma once

// Semi-supervised backbones. Each step consumes a labeled part (features with
// soft targets) and an unlabeled part and applies exactly one SGD update.

#include <optional>
#include <vector>

#include "nlw/data.hpp"
#include "nlw/nncore.hpp"
#include "nlw/random.hpp"

namespace nlw {

enum class BackboneKind { ce_only, temporal_ensembling, mixmatch, pseudo_label };

struct BackboneConfig {
  BackboneKind kind = BackboneKind::ce_only;
  double lambda_u = 25.0;   // unsupervised weight after ramp-up
  double ema_decay = 0.6;   // temporal ensembling gamma
  double sharpen_T = 0.5;
  double mixup_alpha = 4.0;
  int k_augment = 2;
  double jitter_std = 0.05;
  int min_labeled_per_batch = 4;
  int ramp_epochs = 10;
  double lambda_a = 0.8;    // class-balance regularizer (pseudo-labeling)
  double lambda_h = 0.4;    // entropy regularizer (pseudo-labeling)
  /// Forces the MixUp coefficient instead of drawing it.
  std::optional<double> fixed_lambda;

  bool operator==(const BackboneConfig&) const = default;
};

void validate(const BackboneConfig& config);

struct Network {
  MlpParams<double> params;
  OptState<double> opt;
};

struct LabeledPart {
  Mat features;
  Mat targets;             // rows on the simplex
  std::vector<Index> rows; // dataset row ids
  Index size() const { return features.rows(); }
};

struct UnlabeledPart {
  Mat features;
  std::vector<Index> rows;
  /// Externally supplied label guesses (co-guessing); computed from the
  /// network when absent.
  std::optional<Mat> guesses;
  Index size() const { return features.rows(); }
};

struct StepStats {
  double loss = 0.0;
  bool updated = false;
  double lambda = 1.0;          // MixUp coefficient used, 1 when no mixing happened
  std::vector<Index> partners;  // MixUp partner of each pooled row
};

/// Bias-corrected EMA of per-sample logits, indexed by dataset row id.
class TemporalEnsemble {
 public:
  TemporalEnsemble() = default;
  TemporalEnsemble(Index rows, Index classes, double decay);

  /// Z <- decay * Z + (1 - decay) * logits; visit count += 1.
  void accumulate(Index row, const Vec& logits);
  bool has_target(Index row) const { return visits_[static_cast<std::size_t>(row)] > 0; }
  int visits(Index row) const { return visits_[static_cast<std::size_t>(row)]; }
  /// Z / (1 - decay^visits). Requires has_target(row).
  Vec target(Index row) const;
  const Mat& accumulator() const { return z_; }

 private:
  Mat z_;
  std::vector<int> visits_;
  double decay_ = 0.6;
};

struct BackboneState {
  TemporalEnsemble ensemble;
  Rng rng;
};

BackboneState make_backbone_state(const BackboneConfig& config, Index rows, Index classes, std::uint64_t seed);

/// Beta(alpha, alpha) draw folded to [0.5, 1].
double draw_mixup_lambda(double alpha, Rng& rng);

struct Mixed {
  Vec x;
  Vec y;
  double lambda;
};

/// x' = l x1 + (1 - l) x2, y' likewise, l = max(B, 1 - B) with B ~ Beta(alpha, alpha).
Mixed mixup(const Vec& x1, const Vec& y1, const Vec& x2, const Vec& y2, double alpha, Rng& rng);
Mixed mixup_with_lambda(const Vec& x1, const Vec& y1, const Vec& x2, const Vec& y2, double lambda);

/// q_c = p_c^(1/T) / sum_j p_j^(1/T), evaluated in the log domain.
Vec sharpen(const Vec& p, double temperature);
Mat sharpen_rows(const Mat& p, double temperature);

/// x + N(0, jitter_std^2), clamped into `bounds` when present. jitter_std == 0
/// returns x and leaves rng untouched.
Mat augment(const Mat& x, double jitter_std, Rng& rng, const std::optional<FeatureBounds>& bounds = std::nullopt);

/// Linear ramp 0 -> lambda_u over ramp_epochs.
double ramp_weight(const BackboneConfig& config, int ssl_epoch);

/// One SGD step on mean CE over the labeled part; no-op when it is empty.
StepStats ce_only_step(Network& net, const LabeledPart& labeled);

/// CE on the labeled part plus ramp-weighted MSE between softmax of the
/// current logits and softmax of the bias-corrected ensemble logits. The
/// ensemble is updated with this step's logits after the loss is formed.
StepStats temporal_ensembling_step(Network& net, TemporalEnsemble& ensemble, const LabeledPart& labeled,
                                   const UnlabeledPart& unlabeled, const BackboneConfig& config, int ssl_epoch,
                                   Rng& rng, const std::optional<FeatureBounds>& bounds = std::nullopt);

/// Soft pseudo-labels + MixUp + class-balance and entropy regularizers. Falls
/// back to ce_only_step when the labeled part is below min_labeled_per_batch.
StepStats pseudo_label_step(Network& net, const LabeledPart& labeled, const UnlabeledPart& unlabeled,
                            const BackboneConfig& config, Rng& rng,
                            const std::optional<FeatureBounds>& bounds = std::nullopt);

/// Sharpened mean prediction over k_augment jittered copies of each row.
Mat guess_labels(const Network& net, const Mat& unlabeled, const BackboneConfig& config, Rng& rng,
                 const std::optional<FeatureBounds>& bounds = std::nullopt);

/// MixMatch: label guessing over k augmentations, MixUp of the shuffled pool,
/// CE on the labeled part plus ramp-weighted MSE on the unlabeled part.
StepStats mixmatch_step(Network& net, const LabeledPart& labeled, const UnlabeledPart& unlabeled,
                        const BackboneConfig& config, int ssl_epoch, Rng& rng,
                        const std::optional<FeatureBounds>& bounds = std::nullopt);

StepStats backbone_step(Network& net, BackboneState& state, const LabeledPart& labeled,
                        const UnlabeledPart& unlabeled, const BackboneConfig& config, int ssl_epoch,
                        const std::optional<FeatureBounds>& bounds = std::nullopt);

/// Gradient of sum_i grad_logits_i . logits_i, then one SGD step.
void apply_update(Network& net, const Mat& inputs, const ForwardPass<double>& fwd, const Mat& grad_logits);

}  // namespace nlw
