#include "nlw/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "nlw/errors.hpp"
#include "nlw/nncore.hpp"

namespace nlw {
namespace {

constexpr double kDegenerateSpread = 1e-12;

std::array<double, 2> log_joint(double x, const GmmParams& p) {
  std::array<double, 2> out{};
  for (int k = 0; k < 2; ++k) {
    const double d = x - p.means[k];
    out[k] = std::log(p.weights[k]) - 0.5 * std::log(2.0 * std::numbers::pi * p.variances[k]) -
             d * d / (2.0 * p.variances[k]);
  }
  return out;
}

double log_sum(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double percentile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double clamp_loss(double v) {
  if (std::isnan(v)) throw NumericError("selection: NaN loss");
  return std::clamp(v, 0.0, kLossCeiling);
}

bool spread_below(std::span<const double> v, double eps) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo < eps;
}

}  // namespace

double gmm_log_likelihood(std::span<const double> values, const GmmParams& params) {
  double total = 0.0;
  for (double x : values) {
    const auto a = log_joint(x, params);
    total += log_sum(a[0], a[1]);
  }
  return total / static_cast<double>(values.size());
}

std::vector<double> gmm_clean_responsibilities(std::span<const double> values, const GmmParams& params) {
  std::vector<double> r(values.size());
  std::transform(values.begin(), values.end(), r.begin(),
                 [&params](double x) { return gmm_posterior_clean(x, params); });
  return r;
}

GmmParams gmm_m_step(std::span<const double> values, std::span<const double> clean_resp) {
  if (values.size() != clean_resp.size()) throw ShapeError("gmm_m_step: responsibilities misaligned");
  if (values.empty()) throw ArgumentError("gmm_m_step: no values");
  const double m = static_cast<double>(values.size());
  const double global_mean = std::accumulate(values.begin(), values.end(), 0.0) / m;
  GmmParams p;
  for (int k = 0; k < 2; ++k) {
    double mass = 0.0, first = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double r = k == 0 ? clean_resp[i] : 1.0 - clean_resp[i];
      mass += r;
      first += r * values[i];
    }
    p.weights[k] = mass / m;
    p.means[k] = mass > 0.0 ? first / mass : global_mean;
    double second = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double r = k == 0 ? clean_resp[i] : 1.0 - clean_resp[i];
      const double d = values[i] - p.means[k];
      second += r * d * d;
    }
    p.variances[k] = std::max(mass > 0.0 ? second / mass : 0.0, kVarianceFloor);
  }
  return p;
}

GmmFit fit_gmm_1d(std::span<const double> values, const EmOptions& options) {
  if (values.size() < 2) throw ArgumentError("fit_gmm_1d: need at least two values");
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("fit_gmm_1d: non-finite value");

  GmmFit fit;
  if (spread_below(values, kDegenerateSpread)) {
    fit.degenerate = true;
    const double v = values.front();
    fit.params.means = {v, v};
    fit.params.variances = {kVarianceFloor, kVarianceFloor};
    return fit;
  }

  const std::vector<double> copy(values.begin(), values.end());
  const double m = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / m;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = std::max(var / m, kVarianceFloor);
  fit.params.means = {percentile(copy, 0.1), percentile(copy, 0.9)};
  fit.params.variances = {var, var};
  fit.params.weights = {0.5, 0.5};

  double prev = gmm_log_likelihood(values, fit.params);
  fit.log_likelihood.push_back(prev);
  for (int it = 0; it < options.max_iter; ++it) {
    fit.params = gmm_m_step(values, gmm_clean_responsibilities(values, fit.params));
    const double ll = gmm_log_likelihood(values, fit.params);
    ++fit.iterations;
    fit.log_likelihood.push_back(ll);
    if (ll < prev - 1e-10 * (1.0 + std::abs(prev))) {
      throw NumericError("fit_gmm_1d: log-likelihood decreased at iteration " + std::to_string(it + 1));
    }
    if (ll - prev < options.tol) break;
    prev = ll;
  }

  if (fit.params.means[0] > fit.params.means[1]) {
    std::swap(fit.params.means[0], fit.params.means[1]);
    std::swap(fit.params.variances[0], fit.params.variances[1]);
    std::swap(fit.params.weights[0], fit.params.weights[1]);
  }
  return fit;
}

double gmm_posterior_clean(double loss, const GmmParams& params) {
  const auto a = log_joint(loss, params);
  return 1.0 / (1.0 + std::exp(a[1] - a[0]));
}

std::vector<double> normalize_losses(std::span<const double> losses) {
  std::vector<double> out(losses.size());
  std::transform(losses.begin(), losses.end(), out.begin(), clamp_loss);
  if (out.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(out.begin(), out.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  for (auto& v : out) v = range > 0.0 ? (v - lo) / range : 0.0;
  return out;
}

double BatchPartition::clean_fraction() const {
  const auto n = size();
  return n == 0 ? 0.0 : static_cast<double>(clean.size()) / static_cast<double>(n);
}

void LossWindow::push(std::span<const double> losses) {
  for (double v : losses) {
    buf_.push_back(v);
    if (buf_.size() > capacity_) buf_.pop_front();
  }
}

BatchPartition partition_from_flags(const std::vector<bool>& clean, std::vector<double> posterior) {
  BatchPartition p;
  for (std::size_t i = 0; i < clean.size(); ++i) (clean[i] ? p.clean : p.unlabeled).push_back(static_cast<Index>(i));
  p.clean_posterior = std::move(posterior);
  return p;
}

BatchPartition select_gmm(std::span<const double> losses, const SelectorConfig& config, LossWindow* window) {
  if (!(config.clean_threshold > 0.0 && config.clean_threshold < 1.0)) {
    throw ArgumentError("select_gmm: clean_threshold must lie in (0, 1)");
  }
  const auto m = losses.size();
  std::vector<double> clamped(m);
  std::transform(losses.begin(), losses.end(), clamped.begin(), clamp_loss);

  std::vector<double> fit_values = clamped;
  if (window != nullptr) {
    window->push(clamped);
    fit_values = window->values();
  }
  if (m == 0) return {};
  if (fit_values.size() < 2 || spread_below(fit_values, kDegenerateSpread)) {
    return partition_from_flags(std::vector<bool>(m, true), std::vector<double>(m, 1.0));
  }

  const auto [lo_it, hi_it] = std::minmax_element(fit_values.begin(), fit_values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  for (auto& v : fit_values) v = (v - lo) / range;
  const auto fit = fit_gmm_1d(fit_values, {config.em_tol, config.em_max_iter});
  if (fit.degenerate) return partition_from_flags(std::vector<bool>(m, true), std::vector<double>(m, 1.0));

  std::vector<bool> flags(m);
  std::vector<double> posterior(m);
  for (std::size_t i = 0; i < m; ++i) {
    posterior[i] = gmm_posterior_clean((clamped[i] - lo) / range, fit.params);
    flags[i] = posterior[i] > config.clean_threshold;
  }
  return partition_from_flags(flags, std::move(posterior));
}

BatchPartition select_spd(const Mat& logits, std::span<const int> given_labels) {
  if (static_cast<std::size_t>(logits.rows()) != given_labels.size()) {
    throw ShapeError("select_spd: logits and labels misaligned");
  }
  std::vector<bool> flags(given_labels.size());
  std::vector<double> posterior(given_labels.size());
  for (std::size_t i = 0; i < given_labels.size(); ++i) {
    flags[i] = argmax_lowest(logits.row(static_cast<Index>(i))) == given_labels[i];
    posterior[i] = flags[i] ? 1.0 : 0.0;
  }
  return partition_from_flags(flags, std::move(posterior));
}

BatchPartition select_small_loss(std::span<const double> losses, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ArgumentError("select_small_loss: keep_fraction must lie in (0, 1]");
  }
  const auto m = losses.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&losses](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  const auto keep = std::min<std::size_t>(m, static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(m) - 1e-9)));
  std::vector<bool> flags(m, false);
  for (std::size_t k = 0; k < keep; ++k) flags[order[k]] = true;
  std::vector<double> posterior(m);
  for (std::size_t i = 0; i < m; ++i) posterior[i] = flags[i] ? 1.0 : 0.0;
  return partition_from_flags(flags, std::move(posterior));
}

BatchPartition select_oracle(std::span<const int> given_labels, std::span<const int> true_labels) {
  if (given_labels.size() != true_labels.size()) throw ShapeError("select_oracle: label vectors misaligned");
  std::vector<bool> flags(given_labels.size());
  std::vector<double> posterior(given_labels.size());
  for (std::size_t i = 0; i < given_labels.size(); ++i) {
    flags[i] = given_labels[i] == true_labels[i];
    posterior[i] = flags[i] ? 1.0 : 0.0;
  }
  return partition_from_flags(flags, std::move(posterior));
}

SelectionMetrics selection_metrics(const BatchPartition& partition, const std::vector<bool>& truly_clean) {
  if (static_cast<std::size_t>(partition.size()) != truly_clean.size()) {
    throw ShapeError("selection_metrics: mask misaligned with partition");
  }
  std::size_t hits = 0;
  for (Index i : partition.clean) hits += truly_clean[static_cast<std::size_t>(i)] ? 1 : 0;
  const auto positives = static_cast<std::size_t>(std::count(truly_clean.begin(), truly_clean.end(), true));
  SelectionMetrics out;
  out.precision = partition.clean.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(partition.clean.size());
  out.recall = positives == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(positives);
  return out;
}

}  // namespace nlw
