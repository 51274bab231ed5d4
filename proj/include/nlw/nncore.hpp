#pragma once

// Two-layer ReLU MLP, softmax losses and momentum SGD.
//
// Batches are row-major in the mathematical sense: one sample per row
// ([n x input]). Everything is templated on the scalar type; the rest of the
// library instantiates it with double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "nlw/errors.hpp"

namespace nlw {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::Index;

struct MlpShape {
  Index input = 0;
  Index hidden = 256;
  Index classes = 0;

  bool operator==(const MlpShape&) const = default;
};

namespace detail {

inline void require_shape(bool ok, const char* what, Index got, Index want) {
  if (!ok) {
    throw ShapeError(std::string(what) + ": got " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

}  // namespace detail

template <typename Scalar>
struct MlpParams {
  Matrix<Scalar> w1;  // [hidden x input]
  Vector<Scalar> b1;  // [hidden]
  Matrix<Scalar> w2;  // [classes x hidden]
  Vector<Scalar> b2;  // [classes]

  static MlpParams zeros(const MlpShape& s) {
    return {Matrix<Scalar>::Zero(s.hidden, s.input), Vector<Scalar>::Zero(s.hidden),
            Matrix<Scalar>::Zero(s.classes, s.hidden), Vector<Scalar>::Zero(s.classes)};
  }

  MlpShape shape() const { return {w1.cols(), w1.rows(), w2.rows()}; }

  Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }

  /// Exact (bitwise for finite values) equality.
  bool operator==(const MlpParams& o) const {
    return shape() == o.shape() && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }

  /// Applies `f(block)` to each parameter block in the fixed order w1, b1, w2, b2.
  template <typename F>
  void for_each_block(F&& f) {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }
};

/// Glorot-uniform weights, zero biases.
template <typename Scalar, typename Rng>
MlpParams<Scalar> init_mlp(const MlpShape& s, Rng& rng) {
  if (s.input <= 0 || s.hidden <= 0 || s.classes <= 0) {
    throw ShapeError("init_mlp: all layer sizes must be positive");
  }
  auto p = MlpParams<Scalar>::zeros(s);
  auto fill = [&rng](Matrix<Scalar>& w) {
    const Scalar bound = std::sqrt(Scalar(6) / Scalar(w.rows() + w.cols()));
    std::uniform_real_distribution<Scalar> u(-bound, bound);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  };
  fill(p.w1);
  fill(p.w2);
  return p;
}

template <typename Scalar>
struct ForwardPass {
  Matrix<Scalar> hidden;  // post-ReLU activations [n x hidden]
  Matrix<Scalar> logits;  // [n x classes]
};

template <typename Scalar, typename Derived>
ForwardPass<Scalar> forward_pass(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& batch) {
  detail::require_shape(batch.cols() == p.w1.cols(), "mlp_forward: batch columns", batch.cols(),
                        p.w1.cols());
  ForwardPass<Scalar> out;
  out.hidden.noalias() = batch * p.w1.transpose();
  out.hidden.rowwise() += p.b1.transpose();
  out.hidden = out.hidden.cwiseMax(Scalar(0));
  out.logits.noalias() = out.hidden * p.w2.transpose();
  out.logits.rowwise() += p.b2.transpose();
  return out;
}

template <typename Scalar, typename Derived>
Matrix<Scalar> mlp_forward(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& batch) {
  return forward_pass(p, batch).logits;
}

/// Reverse pass. `grad_logits` is dL/dlogits for the objective being
/// differentiated; callers that want a mean over n samples scale it by 1/n.
template <typename Scalar, typename Derived>
MlpParams<Scalar> backward(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& batch,
                           const ForwardPass<Scalar>& fwd, const Matrix<Scalar>& grad_logits) {
  detail::require_shape(grad_logits.rows() == batch.rows(), "backward: grad rows", grad_logits.rows(),
                        batch.rows());
  detail::require_shape(grad_logits.cols() == p.w2.rows(), "backward: grad cols", grad_logits.cols(),
                        p.w2.rows());
  detail::require_shape(fwd.hidden.rows() == batch.rows(), "backward: cached rows", fwd.hidden.rows(),
                        batch.rows());
  MlpParams<Scalar> g;
  g.w2.noalias() = grad_logits.transpose() * fwd.hidden;
  g.b2 = grad_logits.colwise().sum().transpose();
  Matrix<Scalar> dh = grad_logits * p.w2;
  dh = (fwd.hidden.array() > Scalar(0)).select(dh, Scalar(0));
  g.w1.noalias() = dh.transpose() * batch;
  g.b1 = dh.colwise().sum().transpose();
  return g;
}

template <typename Scalar, typename Derived>
MlpParams<Scalar> backward(const MlpParams<Scalar>& p, const Eigen::MatrixBase<Derived>& batch,
                           const Matrix<Scalar>& grad_logits) {
  return backward(p, batch, forward_pass(p, batch), grad_logits);
}

template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Vector<Scalar> lse = shifted.array().exp().rowwise().sum().log();
  shifted.colwise() -= lse;
  return shifted;
}

/// Maps dL/dprobs to dL/dlogits through the softmax Jacobian.
template <typename Scalar>
Matrix<Scalar> softmax_backward(const Matrix<Scalar>& probs, const Matrix<Scalar>& grad_probs) {
  Vector<Scalar> inner = (probs.array() * grad_probs.array()).rowwise().sum();
  return probs.array() * (grad_probs.colwise() - inner).array();
}

template <typename Scalar>
struct LossAndGrad {
  Vector<Scalar> per_sample;
  Matrix<Scalar> grad_logits;  // d per_sample_i / d logits_i, one row per sample
};

/// True when every row is a probability vector within `tol`.
template <typename Derived>
bool rows_on_simplex(const Eigen::MatrixBase<Derived>& t, double tol = 1e-6) {
  if ((t.array() < -tol).any()) return false;
  auto sums = t.rowwise().sum();
  return ((sums.array() - 1).abs() <= tol).all();
}

/// Soft-target cross-entropy: loss_i = -sum_c t_ic log softmax(z_i)_c.
template <typename Scalar>
LossAndGrad<Scalar> ce_loss_and_grad(const Matrix<Scalar>& logits, const Matrix<Scalar>& targets) {
  detail::require_shape(targets.rows() == logits.rows(), "ce_loss: target rows", targets.rows(),
                        logits.rows());
  detail::require_shape(targets.cols() == logits.cols(), "ce_loss: target cols", targets.cols(),
                        logits.cols());
  if (logits.rows() == 0) throw ShapeError("ce_loss: empty batch");
  if (!rows_on_simplex(targets)) throw ArgumentError("ce_loss: targets are not on the simplex");
  const Matrix<Scalar> logp = log_softmax_rows(logits);
  LossAndGrad<Scalar> out;
  out.per_sample = -(targets.array() * logp.array()).rowwise().sum();
  out.grad_logits = logp.array().exp().matrix() - targets;
  return out;
}

/// Squared error between softmax(z_i) and a probability target, averaged over classes.
template <typename Scalar>
LossAndGrad<Scalar> softmax_mse_loss_and_grad(const Matrix<Scalar>& logits, const Matrix<Scalar>& targets) {
  detail::require_shape(targets.rows() == logits.rows(), "mse_loss: target rows", targets.rows(),
                        logits.rows());
  detail::require_shape(targets.cols() == logits.cols(), "mse_loss: target cols", targets.cols(),
                        logits.cols());
  const Scalar classes = Scalar(logits.cols());
  const Matrix<Scalar> probs = softmax_rows(logits);
  const Matrix<Scalar> diff = probs - targets;
  LossAndGrad<Scalar> out;
  out.per_sample = diff.array().square().rowwise().sum() / classes;
  out.grad_logits = softmax_backward<Scalar>(probs, (Scalar(2) / classes) * diff);
  return out;
}

template <typename Scalar>
struct OptState {
  MlpParams<Scalar> velocity;
  Scalar lr = Scalar(0.01);
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = Scalar(0);

  static OptState for_params(const MlpParams<Scalar>& p, Scalar lr, Scalar momentum, Scalar weight_decay) {
    if (!(lr > 0)) throw ArgumentError("OptState: lr must be positive");
    if (!(momentum >= 0 && momentum < 1)) throw ArgumentError("OptState: momentum must be in [0,1)");
    if (!(weight_decay >= 0)) throw ArgumentError("OptState: weight_decay must be nonnegative");
    return {MlpParams<Scalar>::zeros(p.shape()), lr, momentum, weight_decay};
  }
};

/// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v.
template <typename Scalar>
void sgd_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads, OptState<Scalar>& st) {
  if (grads.shape() != params.shape() || st.velocity.shape() != params.shape()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity shapes differ");
  }
  if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient");
  auto update = [&st](auto& p, auto& v, const auto& g) {
    v = st.momentum * v + g + st.weight_decay * p;
    p -= st.lr * v;
  };
  update(params.w1, st.velocity.w1, grads.w1);
  update(params.b1, st.velocity.b1, grads.b1);
  update(params.w2, st.velocity.w2, grads.w2);
  update(params.b2, st.velocity.b2, grads.b2);
  if (!params.all_finite()) throw NumericError("sgd_step: parameters became non-finite");
}

/// Index of the row maximum; ties go to the lowest index.
template <typename Derived>
Index argmax_lowest(const Eigen::DenseBase<Derived>& row) {
  Index best = 0;
  for (Index c = 1; c < row.size(); ++c)
    if (row(c) > row(best)) best = c;
  return best;
}

}  // namespace nlw
