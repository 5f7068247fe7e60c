#pragma once

// Feed-forward encoder, triplet loss with exact gradients, plain SGD, and the
// vector augmentation family used to build positives.

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfcl/common.hpp"

namespace cfcl {

enum class Activation { relu, tanh, identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "relu";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw ConfigError("training.activation", "unknown activation '" + std::string(s) + "'");
}

namespace detail {
inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::identity: return z;
  }
  return z;
}
inline double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}
}  // namespace detail

/// Fully connected encoder. All parameters live in one flat vector laid out
/// layer by layer as [W_0 (out x in, row-major), b_0, W_1, b_1, ...], so
/// models of equal shape support elementwise arithmetic directly.
class EncoderModel {
 public:
  EncoderModel() = default;

  EncoderModel(std::vector<std::size_t> layer_dims, Activation activation = Activation::relu)
      : dims_(std::move(layer_dims)), activation_(activation) {
    if (dims_.size() < 2) throw ShapeError("EncoderModel: need at least input and output dims");
    for (auto d : dims_)
      if (d == 0) throw ShapeError("EncoderModel: layer dims must be positive");
    std::size_t p = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(p);
      p += dims_[l] * dims_[l + 1] + dims_[l + 1];
    }
    params_.assign(p, 0.0);
  }

  /// He-uniform weights (Glorot-uniform for tanh), zero biases.
  static EncoderModel random(std::vector<std::size_t> layer_dims, Activation activation, Rng& rng) {
    EncoderModel m(std::move(layer_dims), activation);
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
      const double fan_in = static_cast<double>(m.in_dim(l));
      const double fan_out = static_cast<double>(m.out_dim(l));
      const double bound = activation == Activation::tanh ? std::sqrt(6.0 / (fan_in + fan_out))
                                                          : std::sqrt(6.0 / fan_in);
      auto w = m.weights(l);
      for (double& v : w) v = (2.0 * uniform01(rng) - 1.0) * bound;
    }
    return m;
  }

  std::size_t layer_count() const noexcept { return offsets_.size(); }
  std::size_t in_dim(std::size_t layer) const { return dims_.at(layer); }
  std::size_t out_dim(std::size_t layer) const { return dims_.at(layer + 1); }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t embedding_dim() const noexcept { return dims_.back(); }
  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  Activation activation() const noexcept { return activation_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  std::span<double> weights(std::size_t l) { return {params_.data() + offsets_.at(l), in_dim(l) * out_dim(l)}; }
  std::span<const double> weights(std::size_t l) const {
    return {params_.data() + offsets_.at(l), in_dim(l) * out_dim(l)};
  }
  std::span<double> biases(std::size_t l) {
    return {params_.data() + offsets_.at(l) + in_dim(l) * out_dim(l), out_dim(l)};
  }
  std::span<const double> biases(std::size_t l) const {
    return {params_.data() + offsets_.at(l) + in_dim(l) * out_dim(l), out_dim(l)};
  }

  bool same_shape(const EncoderModel& o) const noexcept { return dims_ == o.dims_; }

  friend bool operator==(const EncoderModel&, const EncoderModel&) = default;

  EncoderModel& operator+=(const EncoderModel& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < params_.size(); ++k) params_[k] += o.params_[k];
    return *this;
  }
  EncoderModel& operator*=(double s) {
    for (double& v : params_) v *= s;
    return *this;
  }
  friend EncoderModel operator+(EncoderModel a, const EncoderModel& b) { return a += b; }
  friend EncoderModel operator*(EncoderModel a, double s) { return a *= s; }

  void require_same_shape(const EncoderModel& o) const {
    if (!same_shape(o)) throw ShapeError("EncoderModel: shape mismatch");
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  Activation activation_ = Activation::relu;
  std::vector<double> params_;
};

/// Pre-activations of every layer, kept for backpropagation.
struct ForwardTrace {
  std::vector<Vector> inputs;       // input to layer l
  std::vector<Vector> preactivations;  // z_l
  Vector output;
};

inline ForwardTrace forward(const EncoderModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim())
    throw ShapeError("embed: input has dimension " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(model.input_dim()));
  ForwardTrace tr;
  Vector a(x.begin(), x.end());
  const std::size_t L = model.layer_count();
  for (std::size_t l = 0; l < L; ++l) {
    const auto w = model.weights(l);
    const auto b = model.biases(l);
    const std::size_t in = model.in_dim(l), out = model.out_dim(l);
    Vector z(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = b[r];
      const double* row = w.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) s += row[c] * a[c];
      z[r] = s;
    }
    Vector next(out);
    const bool last = l + 1 == L;
    for (std::size_t r = 0; r < out; ++r) next[r] = last ? z[r] : detail::activate(model.activation(), z[r]);
    tr.inputs.push_back(std::move(a));
    tr.preactivations.push_back(std::move(z));
    a = std::move(next);
  }
  tr.output = std::move(a);
  return tr;
}

inline Vector embed(const EncoderModel& model, std::span<const double> x) { return forward(model, x).output; }

/// max(0, |a-p|^2 - |a-n|^2 + m)
inline double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw ShapeError("triplet_loss: embedding dimension mismatch");
  const double v = squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin;
  return v > 0.0 ? v : 0.0;
}

struct Triplet {
  Vector anchor;
  Vector positive;
  Vector negative;
};

namespace detail {
// Adds d(output)/d(params)^T * upstream to grad.
inline void backprop(const EncoderModel& model, const ForwardTrace& tr, Vector upstream, std::span<double> grad) {
  const std::size_t L = model.layer_count();
  std::size_t offset = model.parameter_count();
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t in = model.in_dim(l), out = model.out_dim(l);
    offset -= in * out + out;
    const Vector& z = tr.preactivations[l];
    const Vector& a = tr.inputs[l];
    if (l + 1 != L)
      for (std::size_t r = 0; r < out; ++r) upstream[r] *= activate_derivative(model.activation(), z[r]);
    double* gw = grad.data() + offset;
    double* gb = gw + in * out;
    for (std::size_t r = 0; r < out; ++r) {
      const double d = upstream[r];
      if (d == 0.0) continue;
      double* row = gw + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] += d * a[c];
      gb[r] += d;
    }
    if (l == 0) break;
    Vector down(in, 0.0);
    const auto w = model.weights(l);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = upstream[r];
      if (d == 0.0) continue;
      const double* row = w.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) down[c] += row[c] * d;
    }
    upstream = std::move(down);
  }
}
}  // namespace detail

/// Adds the gradient of the triplet loss to `grad` and returns the loss.
/// Inactive hinge (loss <= 0, including the boundary) contributes nothing.
inline double accumulate_triplet_gradient(const EncoderModel& model, const Triplet& t, double margin,
                                          std::span<double> grad) {
  if (grad.size() != model.parameter_count()) throw ShapeError("triplet_gradient: gradient buffer size");
  const ForwardTrace fa = forward(model, t.anchor);
  const ForwardTrace fp = forward(model, t.positive);
  const ForwardTrace fn = forward(model, t.negative);
  const double loss = triplet_loss(fa.output, fp.output, fn.output, margin);
  if (loss <= 0.0) return 0.0;
  const std::size_t e = model.embedding_dim();
  Vector ga(e), gp(e), gn(e);
  for (std::size_t k = 0; k < e; ++k) {
    const double ea = fa.output[k], ep = fp.output[k], en = fn.output[k];
    ga[k] = 2.0 * (en - ep);
    gp[k] = -2.0 * (ea - ep);
    gn[k] = 2.0 * (ea - en);
  }
  detail::backprop(model, fa, std::move(ga), grad);
  detail::backprop(model, fp, std::move(gp), grad);
  detail::backprop(model, fn, std::move(gn), grad);
  return loss;
}

inline Vector triplet_gradient(const EncoderModel& model, const Triplet& t, double margin) {
  Vector g(model.parameter_count(), 0.0);
  accumulate_triplet_gradient(model, t, margin, g);
  return g;
}

/// Mean of per-triplet gradients over the batch. Returns the mean loss.
inline double batch_gradient(const EncoderModel& model, std::span<const Triplet> batch, double margin,
                             std::span<double> grad) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (const auto& t : batch) loss += accumulate_triplet_gradient(model, t, margin, grad);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return loss * inv;
}

/// In-place phi <- phi - lr * mean gradient. Returns the batch mean loss.
inline double apply_sgd_step(EncoderModel& model, std::span<const Triplet> batch, double learning_rate,
                             double margin) {
  if (batch.empty()) throw std::invalid_argument("sgd_step: empty batch");
  Vector grad(model.parameter_count());
  const double loss = batch_gradient(model, batch, margin, grad);
  auto p = model.params();
  for (std::size_t k = 0; k < p.size(); ++k) p[k] -= learning_rate * grad[k];
  return loss;
}

inline EncoderModel sgd_step(EncoderModel model, std::span<const Triplet> batch, double learning_rate,
                             double margin) {
  apply_sgd_step(model, batch, learning_rate, margin);
  return model;
}

// ---------------------------------------------------------------------------
// Augmentations

enum class AugmentationKind { gaussian_noise, uniform_scaling, coordinate_masking };

struct AugmentationSpec {
  AugmentationKind kind = AugmentationKind::gaussian_noise;
  double sigma = 0.0;       // gaussian_noise
  double scale_low = 1.0;   // uniform_scaling
  double scale_high = 1.0;
  double mask_fraction = 0.0;  // coordinate_masking

  static AugmentationSpec noise(double sigma) { return {AugmentationKind::gaussian_noise, sigma}; }
  static AugmentationSpec scaling(double lo, double hi) {
    return {AugmentationKind::uniform_scaling, 0.0, lo, hi};
  }
  static AugmentationSpec masking(double fraction) {
    return {AugmentationKind::coordinate_masking, 0.0, 1.0, 1.0, fraction};
  }

  void validate() const {
    switch (kind) {
      case AugmentationKind::gaussian_noise:
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("augmentation.sigma", "must be >= 0");
        break;
      case AugmentationKind::uniform_scaling:
        if (!(scale_low > 0.0) || !(scale_high >= scale_low) || !std::isfinite(scale_high))
          throw ConfigError("augmentation.scale", "need 0 < low <= high");
        break;
      case AugmentationKind::coordinate_masking:
        if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0))
          throw ConfigError("augmentation.mask_fraction", "must lie in [0, 1]");
        break;
    }
  }
};

inline Vector apply_augmentation(std::span<const double> x, const AugmentationSpec& spec, Rng& rng) {
  Vector y(x.begin(), x.end());
  switch (spec.kind) {
    case AugmentationKind::gaussian_noise:
      for (double& v : y) v += spec.sigma * standard_normal(rng);
      break;
    case AugmentationKind::uniform_scaling: {
      const double s = spec.scale_low + (spec.scale_high - spec.scale_low) * uniform01(rng);
      for (double& v : y) v *= s;
      break;
    }
    case AugmentationKind::coordinate_masking: {
      const auto count = static_cast<std::size_t>(std::floor(spec.mask_fraction * static_cast<double>(y.size()) + 0.5));
      for (auto k : sample_without_replacement(y.size(), std::min(count, y.size()), rng)) y[k] = 0.0;
      break;
    }
  }
  return y;
}

/// Samples one augmentation uniformly from the family and applies it.
inline Vector augment(std::span<const double> x, std::span<const AugmentationSpec> family, Rng& rng) {
  if (family.empty()) throw std::invalid_argument("augment: empty augmentation family");
  const auto& spec = family[uniform_index(rng, family.size())];
  spec.validate();
  return apply_augmentation(x, spec, rng);
}

}  // namespace cfcl
