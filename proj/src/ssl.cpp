#include "nlw/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nlw/errors.hpp"

namespace nlw {
namespace {

Mat vstack(const Mat& top, const Mat& bottom) {
  if (top.rows() == 0) return bottom;
  if (bottom.rows() == 0) return top;
  Mat out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

std::vector<Index> random_partners(Index n, Rng& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

double mixing_lambda(const BackboneConfig& config, Rng& rng) {
  return config.fixed_lambda ? *config.fixed_lambda : draw_mixup_lambda(config.mixup_alpha, rng);
}

/// Row i becomes lambda * m.row(i) + (1 - lambda) * m.row(partners[i]).
Mat mix_rows(const Mat& m, const std::vector<Index>& partners, double lambda) {
  Mat out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = lambda * m.row(i) + (1.0 - lambda) * m.row(partners[static_cast<std::size_t>(i)]);
  return out;
}

void check_labeled(const LabeledPart& labeled, Index classes) {
  if (labeled.size() == 0) return;
  if (labeled.targets.rows() != labeled.size() || labeled.targets.cols() != classes) {
    throw ShapeError("labeled part: targets misaligned with features");
  }
}

}  // namespace

void validate(const BackboneConfig& c) {
  if (!(c.lambda_u >= 0)) throw ArgumentError("backbone.lambda_u must be nonnegative");
  if (!(c.ema_decay >= 0 && c.ema_decay < 1)) throw ArgumentError("backbone.ema_decay must lie in [0, 1)");
  if (!(c.sharpen_T > 0)) throw ArgumentError("backbone.sharpen_T must be positive");
  if (!(c.mixup_alpha > 0)) throw ArgumentError("backbone.mixup_alpha must be positive");
  if (c.k_augment < 1) throw ArgumentError("backbone.k_augment must be at least 1");
  if (!(c.jitter_std >= 0)) throw ArgumentError("backbone.jitter_std must be nonnegative");
  if (c.min_labeled_per_batch < 0) throw ArgumentError("backbone.min_labeled_per_batch must be nonnegative");
  if (c.ramp_epochs < 0) throw ArgumentError("backbone.ramp_epochs must be nonnegative");
  if (!(c.lambda_a >= 0) || !(c.lambda_h >= 0)) throw ArgumentError("backbone regularizer weights must be nonnegative");
  if (c.fixed_lambda && !(*c.fixed_lambda >= 0 && *c.fixed_lambda <= 1)) {
    throw ArgumentError("backbone.fixed_lambda must lie in [0, 1]");
  }
}

TemporalEnsemble::TemporalEnsemble(Index rows, Index classes, double decay)
    : z_(Mat::Zero(rows, classes)), visits_(static_cast<std::size_t>(rows), 0), decay_(decay) {}

void TemporalEnsemble::accumulate(Index row, const Vec& logits) {
  z_.row(row) = decay_ * z_.row(row) + (1.0 - decay_) * logits.transpose();
  ++visits_[static_cast<std::size_t>(row)];
}

Vec TemporalEnsemble::target(Index row) const {
  const int t = visits(row);
  if (t == 0) throw ArgumentError("TemporalEnsemble: no accumulated prediction for row");
  return z_.row(row).transpose() / (1.0 - std::pow(decay_, t));
}

BackboneState make_backbone_state(const BackboneConfig& config, Index rows, Index classes, std::uint64_t seed) {
  BackboneState s{TemporalEnsemble(), Rng(seed)};
  if (config.kind == BackboneKind::temporal_ensembling) s.ensemble = TemporalEnsemble(rows, classes, config.ema_decay);
  return s;
}

double draw_mixup_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0)) throw ArgumentError("mixup: alpha must be positive");
  const double b = sample_beta(alpha, alpha, rng);
  return std::max(b, 1.0 - b);
}

Mixed mixup_with_lambda(const Vec& x1, const Vec& y1, const Vec& x2, const Vec& y2, double lambda) {
  if (x1.size() != x2.size() || y1.size() != y2.size()) throw ShapeError("mixup: operand sizes differ");
  return {lambda * x1 + (1.0 - lambda) * x2, lambda * y1 + (1.0 - lambda) * y2, lambda};
}

Mixed mixup(const Vec& x1, const Vec& y1, const Vec& x2, const Vec& y2, double alpha, Rng& rng) {
  return mixup_with_lambda(x1, y1, x2, y2, draw_mixup_lambda(alpha, rng));
}

Vec sharpen(const Vec& p, double temperature) {
  if (!(temperature > 0)) throw ArgumentError("sharpen: temperature must be positive");
  if ((p.array() < 0).any() || !(p.sum() > 0)) throw ArgumentError("sharpen: input is not a probability vector");
  if (temperature == 1.0) return p;
  const double log_max = std::log(p.maxCoeff());
  Vec q(p.size());
  for (Index c = 0; c < p.size(); ++c) {
    q(c) = p(c) > 0 ? std::exp((std::log(p(c)) - log_max) / temperature) : 0.0;
  }
  return q / q.sum();
}

Mat sharpen_rows(const Mat& p, double temperature) {
  Mat out(p.rows(), p.cols());
  for (Index i = 0; i < p.rows(); ++i) out.row(i) = sharpen(p.row(i).transpose(), temperature).transpose();
  return out;
}

Mat augment(const Mat& x, double jitter_std, Rng& rng, const std::optional<FeatureBounds>& bounds) {
  if (!(jitter_std >= 0)) throw ArgumentError("augment: jitter_std must be nonnegative");
  if (jitter_std == 0.0) return x;
  std::normal_distribution<double> noise(0.0, jitter_std);
  Mat out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) + noise(rng);
  if (bounds) out = out.cwiseMax(bounds->lo).cwiseMin(bounds->hi);
  return out;
}

double ramp_weight(const BackboneConfig& config, int ssl_epoch) {
  if (config.ramp_epochs <= 0) return config.lambda_u;
  const double progress = std::clamp(static_cast<double>(ssl_epoch) / config.ramp_epochs, 0.0, 1.0);
  return config.lambda_u * progress;
}

void apply_update(Network& net, const Mat& inputs, const ForwardPass<double>& fwd, const Mat& grad_logits) {
  const auto grads = backward(net.params, inputs, fwd, grad_logits);
  sgd_step(net.params, grads, net.opt);
}

StepStats ce_only_step(Network& net, const LabeledPart& labeled) {
  StepStats stats;
  const Index n = labeled.size();
  if (n == 0) return stats;
  check_labeled(labeled, net.params.shape().classes);
  const auto fwd = forward_pass(net.params, labeled.features);
  const auto ce = ce_loss_and_grad(fwd.logits, labeled.targets);
  const Mat grad = ce.grad_logits / static_cast<double>(n);
  apply_update(net, labeled.features, fwd, grad);
  stats.loss = ce.per_sample.mean();
  stats.updated = true;
  return stats;
}

StepStats temporal_ensembling_step(Network& net, TemporalEnsemble& ensemble, const LabeledPart& labeled,
                                   const UnlabeledPart& unlabeled, const BackboneConfig& config, int ssl_epoch,
                                   Rng& rng, const std::optional<FeatureBounds>& bounds) {
  StepStats stats;
  const Index nx = labeled.size(), nu = unlabeled.size(), total = nx + nu;
  if (total == 0) return stats;
  check_labeled(labeled, net.params.shape().classes);

  const Mat inputs = augment(vstack(labeled.features, unlabeled.features), config.jitter_std, rng, bounds);
  const auto fwd = forward_pass(net.params, inputs);
  Mat grad = Mat::Zero(total, fwd.logits.cols());

  if (nx > 0) {
    const Mat logits_x = fwd.logits.topRows(nx);
    const auto ce = ce_loss_and_grad(logits_x, labeled.targets);
    grad.topRows(nx) = ce.grad_logits / static_cast<double>(nx);
    stats.loss += ce.per_sample.mean();
  }

  auto row_id = [&](Index i) {
    return i < nx ? labeled.rows[static_cast<std::size_t>(i)] : unlabeled.rows[static_cast<std::size_t>(i - nx)];
  };

  const double weight = ramp_weight(config, ssl_epoch);
  if (weight > 0) {
    std::vector<Index> with_target;
    for (Index i = 0; i < total; ++i)
      if (ensemble.has_target(row_id(i))) with_target.push_back(i);
    if (!with_target.empty()) {
      const auto m = static_cast<Index>(with_target.size());
      Mat logits(m, fwd.logits.cols()), target_logits(m, fwd.logits.cols());
      for (Index k = 0; k < m; ++k) {
        logits.row(k) = fwd.logits.row(with_target[static_cast<std::size_t>(k)]);
        target_logits.row(k) = ensemble.target(row_id(with_target[static_cast<std::size_t>(k)])).transpose();
      }
      const auto mse = softmax_mse_loss_and_grad<double>(logits, softmax_rows(target_logits));
      for (Index k = 0; k < m; ++k) {
        grad.row(with_target[static_cast<std::size_t>(k)]) += weight * mse.grad_logits.row(k) / static_cast<double>(total);
      }
      stats.loss += weight * mse.per_sample.sum() / static_cast<double>(total);
    }
  }

  for (Index i = 0; i < total; ++i) ensemble.accumulate(row_id(i), fwd.logits.row(i).transpose());
  apply_update(net, inputs, fwd, grad);
  stats.updated = true;
  return stats;
}

StepStats pseudo_label_step(Network& net, const LabeledPart& labeled, const UnlabeledPart& unlabeled,
                            const BackboneConfig& config, Rng& rng, const std::optional<FeatureBounds>& bounds) {
  const Index nx = labeled.size(), nu = unlabeled.size(), total = nx + nu;
  if (nx < config.min_labeled_per_batch) return ce_only_step(net, labeled);
  if (total == 0) return {};
  check_labeled(labeled, net.params.shape().classes);

  Mat pseudo;
  if (nu > 0) {
    pseudo = unlabeled.guesses ? *unlabeled.guesses : softmax_rows(mlp_forward(net.params, unlabeled.features));
  }
  const Mat pool_x = augment(vstack(labeled.features, unlabeled.features), config.jitter_std, rng, bounds);
  const Mat pool_y = nu > 0 ? vstack(labeled.targets, pseudo) : labeled.targets;

  StepStats stats;
  stats.partners = random_partners(total, rng);
  stats.lambda = mixing_lambda(config, rng);
  const Mat mixed_x = mix_rows(pool_x, stats.partners, stats.lambda);
  const Mat mixed_y = mix_rows(pool_y, stats.partners, stats.lambda);

  const auto fwd = forward_pass(net.params, mixed_x);
  const auto ce = ce_loss_and_grad(fwd.logits, mixed_y);
  const double n = static_cast<double>(total);
  Mat grad = ce.grad_logits / n;
  stats.loss = ce.per_sample.mean();

  if (config.lambda_a > 0 || config.lambda_h > 0) {
    constexpr double kTiny = 1e-12;
    const Mat probs = softmax_rows(fwd.logits);
    const double classes = static_cast<double>(probs.cols());
    Mat grad_probs = Mat::Zero(probs.rows(), probs.cols());
    if (config.lambda_a > 0) {
      // sum_c prior_c log(prior_c / mean_prob_c) with a uniform prior.
      const Vec mean_prob = probs.colwise().mean().transpose().cwiseMax(kTiny);
      const double prior = 1.0 / classes;
      stats.loss += config.lambda_a * (prior * (prior / mean_prob.array()).log()).sum();
      const Eigen::RowVectorXd d_mean = (-prior / mean_prob.array()).matrix().transpose();
      grad_probs.rowwise() += config.lambda_a * d_mean / n;
    }
    if (config.lambda_h > 0) {
      const Mat logp = probs.cwiseMax(kTiny).array().log();
      stats.loss += config.lambda_h * (-(probs.array() * logp.array()).sum() / n);
      grad_probs += config.lambda_h * (-(logp.array() + 1.0) / n).matrix();
    }
    grad += softmax_backward<double>(probs, grad_probs);
  }

  apply_update(net, mixed_x, fwd, grad);
  stats.updated = true;
  return stats;
}

Mat guess_labels(const Network& net, const Mat& unlabeled, const BackboneConfig& config, Rng& rng,
                 const std::optional<FeatureBounds>& bounds) {
  Mat mean = Mat::Zero(unlabeled.rows(), net.params.shape().classes);
  for (int k = 0; k < config.k_augment; ++k) {
    mean += softmax_rows(mlp_forward(net.params, augment(unlabeled, config.jitter_std, rng, bounds)));
  }
  mean /= static_cast<double>(config.k_augment);
  return sharpen_rows(mean, config.sharpen_T);
}

StepStats mixmatch_step(Network& net, const LabeledPart& labeled, const UnlabeledPart& unlabeled,
                        const BackboneConfig& config, int ssl_epoch, Rng& rng,
                        const std::optional<FeatureBounds>& bounds) {
  const Index nx = labeled.size(), nu = unlabeled.size();
  if (nx + nu == 0) return {};
  check_labeled(labeled, net.params.shape().classes);

  const Mat x_hat = augment(labeled.features, config.jitter_std, rng, bounds);
  const Mat x_targets = nx > 0 ? sharpen_rows(labeled.targets, config.sharpen_T) : Mat();

  Mat u_hat, u_targets;
  if (nu > 0) {
    const Mat guess = unlabeled.guesses ? sharpen_rows(*unlabeled.guesses, config.sharpen_T)
                                        : guess_labels(net, unlabeled.features, config, rng, bounds);
    const Index k = config.k_augment;
    u_hat.resize(k * nu, unlabeled.features.cols());
    u_targets.resize(k * nu, guess.cols());
    for (Index a = 0; a < k; ++a) {
      u_hat.middleRows(a * nu, nu) = augment(unlabeled.features, config.jitter_std, rng, bounds);
      u_targets.middleRows(a * nu, nu) = guess;
    }
  }

  const Mat pool_x = vstack(x_hat, u_hat);
  const Mat pool_y = vstack(x_targets, u_targets);
  const Index total = pool_x.rows(), nu_pool = total - nx;

  StepStats stats;
  stats.partners = random_partners(total, rng);
  stats.lambda = mixing_lambda(config, rng);
  const Mat mixed_x = mix_rows(pool_x, stats.partners, stats.lambda);
  const Mat mixed_y = mix_rows(pool_y, stats.partners, stats.lambda);

  const auto fwd = forward_pass(net.params, mixed_x);
  Mat grad = Mat::Zero(total, fwd.logits.cols());
  if (nx > 0) {
    const Mat logits_x = fwd.logits.topRows(nx);
    const auto ce = ce_loss_and_grad<double>(logits_x, mixed_y.topRows(nx));
    grad.topRows(nx) = ce.grad_logits / static_cast<double>(nx);
    stats.loss += ce.per_sample.mean();
  }
  const double weight = ramp_weight(config, ssl_epoch);
  if (nu_pool > 0 && weight > 0) {
    const Mat logits_u = fwd.logits.bottomRows(nu_pool);
    const auto mse = softmax_mse_loss_and_grad<double>(logits_u, mixed_y.bottomRows(nu_pool));
    grad.bottomRows(nu_pool) = weight * mse.grad_logits / static_cast<double>(nu_pool);
    stats.loss += weight * mse.per_sample.mean();
  }

  apply_update(net, mixed_x, fwd, grad);
  stats.updated = true;
  return stats;
}

StepStats backbone_step(Network& net, BackboneState& state, const LabeledPart& labeled,
                        const UnlabeledPart& unlabeled, const BackboneConfig& config, int ssl_epoch,
                        const std::optional<FeatureBounds>& bounds) {
  switch (config.kind) {
    case BackboneKind::ce_only:
      return ce_only_step(net, labeled);
    case BackboneKind::temporal_ensembling:
      return temporal_ensembling_step(net, state.ensemble, labeled, unlabeled, config, ssl_epoch, state.rng, bounds);
    case BackboneKind::mixmatch:
      return mixmatch_step(net, labeled, unlabeled, config, ssl_epoch, state.rng, bounds);
    case BackboneKind::pseudo_label:
      return pseudo_label_step(net, labeled, unlabeled, config, state.rng, bounds);
  }
  throw ArgumentError("unknown backbone kind");
}

}  // namespace nlw
