#pragma once

#include <svprobe/error.hpp>
#include <svprobe/random.hpp>
#include <svprobe/tensor.hpp>
#include <svprobe/transcribe.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace svprobe {

enum class TaskKind : std::uint32_t { clip_classification = 0, frame_transcription = 1 };

inline const char* to_string(TaskKind kind) {
  return kind == TaskKind::clip_classification ? "clip_classification" : "frame_transcription";
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Unnormalized layer-weight logits; the aggregation uses softmax(logits).
struct LayerWeights {
  std::vector<double> logits;

  std::size_t size() const noexcept { return logits.size(); }
  std::vector<double> normalized() const { return softmax(logits); }
  bool operator==(const LayerWeights&) const = default;
};

// Affine map from D features to K outputs: y = weight^T x + bias.
struct LinearHead {
  Matrix weight;  // D x K
  std::vector<double> bias;

  std::size_t input_dim() const noexcept { return weight.rows(); }
  std::size_t outputs() const noexcept { return bias.size(); }
  bool operator==(const LinearHead&) const = default;
};

struct ProbeModel {
  LayerWeights layer_weights;
  LinearHead head;
  TaskKind task_kind = TaskKind::clip_classification;

  std::size_t layers() const noexcept { return layer_weights.size(); }
  std::size_t dim() const noexcept { return head.input_dim(); }
  std::size_t outputs() const noexcept { return head.outputs(); }

  // Flat parameter layout: [layer logits | head weight (row-major) | head bias].
  std::size_t parameter_count() const noexcept {
    return layers() + dim() * outputs() + outputs();
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    p.insert(p.end(), layer_weights.logits.begin(), layer_weights.logits.end());
    p.insert(p.end(), head.weight.flat().begin(), head.weight.flat().end());
    p.insert(p.end(), head.bias.begin(), head.bias.end());
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw Error("parameter vector has the wrong length");
    auto it = p.begin();
    std::copy_n(it, layers(), layer_weights.logits.begin());
    it += static_cast<std::ptrdiff_t>(layers());
    std::copy_n(it, head.weight.flat().size(), head.weight.flat().begin());
    it += static_cast<std::ptrdiff_t>(head.weight.flat().size());
    std::copy_n(it, outputs(), head.bias.begin());
  }

  void validate() const {
    if (layers() == 0 || dim() == 0 || outputs() == 0) throw Error("probe model: empty shape");
    if (head.weight.cols() != outputs()) throw Error("probe model: head weight/bias mismatch");
    if (task_kind == TaskKind::frame_transcription && outputs() != channel::kTotal) {
      throw Error("probe model: frame transcription requires 20 outputs");
    }
    for (double v : parameters()) {
      if (!std::isfinite(v)) throw Error("probe model: non-finite parameter");
    }
  }

  bool operator==(const ProbeModel&) const = default;
};

// Zero layer logits (uniform aggregation), head weights uniform in
// [-1/sqrt(D), 1/sqrt(D)] drawn from `seed`, zero bias.
inline ProbeModel make_probe_model(TaskKind kind, std::size_t layers, std::size_t dim,
                                   std::size_t outputs, std::uint64_t seed) {
  if (kind == TaskKind::frame_transcription && outputs != channel::kTotal) {
    throw Error("frame transcription requires 20 outputs");
  }
  if (layers == 0 || dim == 0 || outputs == 0) throw Error("probe model: empty shape");
  ProbeModel m;
  m.task_kind = kind;
  m.layer_weights.logits.assign(layers, 0.0);
  m.head.weight = Matrix(dim, outputs);
  m.head.bias.assign(outputs, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  Rng rng(seed);
  for (double& w : m.head.weight.flat()) w = rng.uniform(-bound, bound);
  return m;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

inline Matrix aggregate(const FeatureStack& stack, const LayerWeights& lw) {
  if (lw.size() != stack.layers()) {
    throw Error("aggregate: " + std::to_string(lw.size()) + " layer weights for " +
                std::to_string(stack.layers()) + " layers");
  }
  return weighted_layer_sum(stack, lw.normalized());
}

namespace detail {
inline void check_dim(const ProbeModel& model, const FeatureStack& stack) {
  if (stack.dim() != model.dim()) {
    throw Error("feature dim " + std::to_string(stack.dim()) + " does not match model dim " +
                std::to_string(model.dim()));
  }
}
}  // namespace detail

inline std::vector<double> forward_clip(const ProbeModel& model, const FeatureStack& stack) {
  if (model.task_kind != TaskKind::clip_classification) {
    throw Error("forward_clip: model is not a clip classifier");
  }
  detail::check_dim(model, stack);
  const auto pooled = mean_over_rows(aggregate(stack, model.layer_weights));
  return affine_transposed(model.head.weight, pooled, model.head.bias);
}

inline Matrix forward_frame(const ProbeModel& model, const FeatureStack& stack) {
  if (model.task_kind != TaskKind::frame_transcription) {
    throw Error("forward_frame: model is not a frame transcriber");
  }
  detail::check_dim(model, stack);
  const Matrix agg = aggregate(stack, model.layer_weights);
  Matrix out(agg.rows(), model.outputs());
  for (std::size_t t = 0; t < agg.rows(); ++t) {
    const auto y = affine_transposed(model.head.weight, agg.row(t), model.head.bias);
    std::copy(y.begin(), y.end(), out.row(t).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct FrameLoss {
  double loss = 0.0;
  Matrix gradient;  // dLoss/dLogits, T x 20
};

struct ClipLoss {
  double loss = 0.0;
  std::vector<double> gradient;  // dLoss/dLogits, K
};

namespace detail {

// -(w*y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))) and its derivative in z.
inline std::pair<double, double> weighted_bce(double z, double y, double w) {
  const double loss = w * y * softplus(-z) + (1.0 - y) * softplus(z);
  const double p = sigmoid(z);
  const double grad = (1.0 - y) * p - w * y * (1.0 - p);
  return {loss, grad};
}

// Cross-entropy over logits[0..n) with class `target`; writes softmax - onehot
// scaled by `scale` into grad.
inline double cross_entropy(std::span<const double> logits, std::size_t target, double scale,
                            std::span<double> grad) {
  const double lse = log_sum_exp(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] = scale * (std::exp(logits[i] - lse) - (i == target ? 1.0 : 0.0));
  }
  return lse - logits[target];
}

}  // namespace detail

inline FrameLoss svt_loss(const Matrix& logits, const FrameTargets& targets, double onset_weight,
                          double silence_weight) {
  if (logits.cols() != channel::kTotal) throw Error("svt_loss: expected 20 logit channels");
  if (logits.rows() != targets.frames()) {
    throw Error("svt_loss: " + std::to_string(logits.rows()) + " logit frames vs " +
                std::to_string(targets.frames()) + " target frames");
  }
  if (logits.rows() == 0) throw Error("svt_loss: no frames");
  for (double v : logits.flat()) {
    if (!std::isfinite(v)) throw Error("svt_loss: non-finite logits");
  }
  targets.validate();

  const std::size_t frames = logits.rows();
  const double inv_t = 1.0 / static_cast<double>(frames);
  FrameLoss out{0.0, Matrix(frames, channel::kTotal)};
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto z = logits.row(t);
    auto g = out.gradient.row(t);
    const auto [lo, go] = detail::weighted_bce(z[channel::kOnset], targets.onset[t], onset_weight);
    const auto [ls, gs] = detail::weighted_bce(z[channel::kSilence], targets.silence[t], silence_weight);
    g[channel::kOnset] = go * inv_t;
    g[channel::kSilence] = gs * inv_t;
    const double lp = detail::cross_entropy(z.subspan(channel::kPitchBegin, channel::kPitchCount),
                                            static_cast<std::size_t>(targets.pitch_class[t]), inv_t,
                                            g.subspan(channel::kPitchBegin, channel::kPitchCount));
    const double lv = detail::cross_entropy(z.subspan(channel::kOctaveBegin, channel::kOctaveCount),
                                            static_cast<std::size_t>(targets.octave[t]), inv_t,
                                            g.subspan(channel::kOctaveBegin, channel::kOctaveCount));
    total += lo + ls + lp + lv;
  }
  out.loss = total * inv_t;
  return out;
}

inline ClipLoss clf_loss(std::span<const double> logits, std::size_t label,
                         std::span<const double> class_weights) {
  if (logits.empty()) throw Error("clf_loss: no logits");
  if (label >= logits.size()) {
    throw Error("clf_loss: label " + std::to_string(label) + " out of range [0, " +
                std::to_string(logits.size()) + ")");
  }
  if (class_weights.size() != logits.size()) throw Error("clf_loss: class weight count mismatch");
  for (double v : logits) {
    if (!std::isfinite(v)) throw Error("clf_loss: non-finite logits");
  }
  const double w = class_weights[label];
  if (!(w > 0.0)) throw Error("clf_loss: class weights must be positive");
  ClipLoss out{0.0, std::vector<double>(logits.size())};
  out.loss = w * detail::cross_entropy(logits, label, w, out.gradient);
  return out;
}

// w_c = 1 / n_c^alpha
inline std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts,
                                                     double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("class alpha must lie in [0, 1]");
  std::vector<double> w;
  w.reserve(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw Error("class " + std::to_string(c) + " has zero count");
    w.push_back(1.0 / std::pow(static_cast<double>(counts[c]), alpha));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
                      double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw Error("adam_step: parameter, gradient and moment lengths differ");
  }
  if (!(lr > 0.0)) throw Error("adam_step: learning rate must be positive");
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, step);
  const double c2 = 1.0 - std::pow(state.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Training data and objective
// ---------------------------------------------------------------------------

// A class index for clip classification, or frame targets for transcription.
using Target = std::variant<std::size_t, FrameTargets>;

struct Example {
  FeatureStack features;
  Target target;
};

struct LossSettings {
  double onset_weight = 15.0;
  double silence_weight = 1.0;
  std::vector<double> class_weights;  // empty: all ones
};

// Receives dLoss/d(aggregated features) (T x D) for one example. This is the
// gradient an external frontend needs to continue backpropagation when its
// encoder layers are unfrozen; the toolkit itself never updates the frontend.
using FeatureGradientSink = std::function<void(std::size_t example_index, const Matrix& gradient)>;

struct TrainConfig {
  double stage1_lr = 3e-3;
  std::size_t stage1_epochs = 6;
  std::size_t batch_size = 32;  // 0 = full batch
  std::uint64_t seed = 0;
  double onset_weight = 15.0;
  double silence_weight = 1.0;
  double class_alpha = 0.2;
  std::vector<double> class_weights;  // per class; empty means unit weights
  FeatureGradientSink feature_gradient_sink;

  void validate() const {
    if (!(stage1_lr > 0.0)) throw ConfigError("stage1_lr must be positive");
    if (!(onset_weight >= 0.0) || !(silence_weight >= 0.0)) {
      throw ConfigError("onset/silence weights must be non-negative");
    }
    if (!(class_alpha >= 0.0 && class_alpha <= 1.0)) throw ConfigError("class_alpha must lie in [0, 1]");
    for (double w : class_weights) {
      if (!(w > 0.0)) throw ConfigError("class weights must be positive");
    }
  }

  LossSettings loss_settings() const { return {onset_weight, silence_weight, class_weights}; }
};

inline void check_example(const ProbeModel& model, const Example& ex) {
  detail::check_dim(model, ex.features);
  if (ex.features.layers() != model.layers()) {
    throw Error("example has " + std::to_string(ex.features.layers()) + " layers, model expects " +
                std::to_string(model.layers()));
  }
  if (model.task_kind == TaskKind::clip_classification) {
    const auto* label = std::get_if<std::size_t>(&ex.target);
    if (!label) throw Error("classification model given frame targets");
    if (*label >= model.outputs()) throw Error("class label out of range");
  } else {
    const auto* targets = std::get_if<FrameTargets>(&ex.target);
    if (!targets) throw Error("transcription model given a class label");
    if (targets->frames() != ex.features.frames()) {
      throw Error("frame targets length does not match feature frames");
    }
  }
}

// Loss of one example; accumulates scale * dLoss/dParams into `grad` using the
// flat layout of ProbeModel::parameters().
inline double accumulate_example_gradient(const ProbeModel& model, const Example& ex,
                                          const LossSettings& settings, double scale,
                                          std::span<double> grad,
                                          const FeatureGradientSink* sink = nullptr,
                                          std::size_t example_index = 0) {
  check_example(model, ex);
  const FeatureStack& x = ex.features;
  const std::size_t layers = model.layers();
  const std::size_t dim = model.dim();
  const std::size_t k_out = model.outputs();
  const std::size_t frames = x.frames();
  const std::vector<double> s = model.layer_weights.normalized();
  const Matrix agg = weighted_layer_sum(x, s);

  std::span<double> g_logits = grad.subspan(0, layers);
  std::span<double> g_weight = grad.subspan(layers, dim * k_out);
  std::span<double> g_bias = grad.subspan(layers + dim * k_out, k_out);

  // dLoss/d(aggregated features), T x D
  Matrix d_agg(frames, dim);
  double loss = 0.0;

  if (model.task_kind == TaskKind::clip_classification) {
    const auto pooled = mean_over_rows(agg);
    const auto logits = affine_transposed(model.head.weight, pooled, model.head.bias);
    std::vector<double> unit;
    std::span<const double> weights = settings.class_weights;
    if (weights.empty()) {
      unit.assign(k_out, 1.0);
      weights = unit;
    }
    const ClipLoss cl = clf_loss(logits, std::get<std::size_t>(ex.target), weights);
    loss = cl.loss;
    std::vector<double> d_pooled(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) {
      const auto w_row = model.head.weight.row(d);
      double acc = 0.0;
      for (std::size_t k = 0; k < k_out; ++k) {
        g_weight[d * k_out + k] += scale * pooled[d] * cl.gradient[k];
        acc += w_row[k] * cl.gradient[k];
      }
      d_pooled[d] = acc;
    }
    for (std::size_t k = 0; k < k_out; ++k) g_bias[k] += scale * cl.gradient[k];
    const double inv_t = 1.0 / static_cast<double>(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      auto row = d_agg.row(t);
      for (std::size_t d = 0; d < dim; ++d) row[d] = d_pooled[d] * inv_t;
    }
  } else {
    Matrix logits(frames, k_out);
    for (std::size_t t = 0; t < frames; ++t) {
      const auto y = affine_transposed(model.head.weight, agg.row(t), model.head.bias);
      std::copy(y.begin(), y.end(), logits.row(t).begin());
    }
    const FrameLoss fl =
        svt_loss(logits, std::get<FrameTargets>(ex.target), settings.onset_weight, settings.silence_weight);
    loss = fl.loss;
    for (std::size_t t = 0; t < frames; ++t) {
      const auto a = agg.row(t);
      const auto dz = fl.gradient.row(t);
      auto da = d_agg.row(t);
      for (std::size_t d = 0; d < dim; ++d) {
        const auto w_row = model.head.weight.row(d);
        double acc = 0.0;
        for (std::size_t k = 0; k < k_out; ++k) {
          g_weight[d * k_out + k] += scale * a[d] * dz[k];
          acc += w_row[k] * dz[k];
        }
        da[d] = acc;
      }
      for (std::size_t k = 0; k < k_out; ++k) g_bias[k] += scale * dz[k];
    }
  }

  // Through the weighted sum: dL/ds_l = <d_agg, X_l>, then the softmax Jacobian.
  std::vector<double> d_s(layers, 0.0);
  for (std::size_t l = 0; l < layers; ++l) {
    double acc = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const auto xl = x.frame(l, t);
      const auto da = d_agg.row(t);
      for (std::size_t d = 0; d < dim; ++d) acc += da[d] * static_cast<double>(xl[d]);
    }
    d_s[l] = acc;
  }
  double s_dot = 0.0;
  for (std::size_t l = 0; l < layers; ++l) s_dot += s[l] * d_s[l];
  for (std::size_t l = 0; l < layers; ++l) g_logits[l] += scale * s[l] * (d_s[l] - s_dot);

  if (sink && *sink) (*sink)(example_index, d_agg);
  return loss;
}

struct BatchObjective {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Mean loss over the batch and its gradient with respect to all parameters.
inline BatchObjective batch_objective(const ProbeModel& model, std::span<const Example> batch,
                                      const LossSettings& settings) {
  if (batch.empty()) throw Error("empty batch");
  BatchObjective out{0.0, std::vector<double>(model.parameter_count(), 0.0)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Example& ex : batch) {
    out.loss += accumulate_example_gradient(model, ex, settings, scale, out.gradient);
  }
  out.loss *= scale;
  return out;
}

// ---------------------------------------------------------------------------
// Stage-1 training: only the layer-weight logits and the linear head learn.
// ---------------------------------------------------------------------------

struct TrainResult {
  ProbeModel model;
  std::vector<double> epoch_loss;  // mean per-example training loss of each epoch
};

inline TrainResult train_stage1(std::span<const Example> dataset, ProbeModel model,
                                const TrainConfig& config) {
  config.validate();
  model.validate();
  if (dataset.empty()) throw Error("empty dataset");
  for (const Example& ex : dataset) check_example(model, ex);
  if (model.task_kind == TaskKind::clip_classification && !config.class_weights.empty() &&
      config.class_weights.size() != model.outputs()) {
    throw ConfigError("class weight count does not match model outputs");
  }

  const LossSettings settings = config.loss_settings();
  const std::size_t n = dataset.size();
  const bool full_batch = config.batch_size == 0 || config.batch_size >= n;
  const std::size_t batch_size = full_batch ? n : config.batch_size;

  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> params = model.parameters();
  AdamState adam(params.size());
  std::vector<double> grad(params.size());

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.stage1_epochs; ++epoch) {
    if (!full_batch) rng.shuffle(std::span<std::size_t>(order));
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        epoch_total += accumulate_example_gradient(model, dataset[order[i]], settings, scale, grad,
                                                   &config.feature_gradient_sink, order[i]);
      }
      adam_step(adam, params, grad, config.stage1_lr);
      model.set_parameters(params);
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(n));
  }
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Max over parameters of relative_error(analytic, central difference).
// `objective(params)` returns {loss, analytic gradient}.
template <typename Objective>
double max_gradient_error(Objective&& objective, std::vector<double> params, double eps) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  const std::vector<double> analytic = objective(std::as_const(params)).gradient;
  if (analytic.size() != params.size()) throw Error("grad_check: gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double up = objective(std::as_const(params)).loss;
    params[i] = saved - eps;
    const double down = objective(std::as_const(params)).loss;
    params[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

inline double grad_check(const ProbeModel& model, std::span<const Example> batch, double eps = 1e-5,
                         const LossSettings& settings = {}) {
  if (batch.empty()) throw Error("empty batch");
  ProbeModel probe = model;
  auto objective = [&](const std::vector<double>& p) {
    probe.set_parameters(p);
    return batch_objective(probe, batch, settings);
  };
  return max_gradient_error(objective, model.parameters(), eps);
}

// ---------------------------------------------------------------------------
// Checkpoint file (.svpm)
//
//   "SVPM", version u32, task_kind u32, layers u32, dim u32, outputs u32,
//   then f64 LE: layer logits, head weight (D x K row-major), head bias.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<unsigned char> encode_checkpoint(const ProbeModel& model) {
  model.validate();
  std::vector<unsigned char> out{'S', 'V', 'P', 'M'};
  le::put_uint<std::uint32_t>(out, kCheckpointVersion);
  le::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.task_kind));
  le::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.layers()));
  le::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim()));
  le::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(model.outputs()));
  for (double v : model.parameters()) le::put_f64(out, v);
  return out;
}

inline ProbeModel decode_checkpoint(std::span<const unsigned char> bytes) {
  constexpr std::size_t kHeader = 24;
  if (bytes.size() < kHeader) throw Error("truncated checkpoint header");
  if (std::memcmp(bytes.data(), "SVPM", 4) != 0) throw Error("bad magic: not a checkpoint");
  const auto version = le::get_uint<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) throw Error("unsupported version " + std::to_string(version));
  const auto kind = le::get_uint<std::uint32_t>(bytes, 8);
  if (kind > 1) throw Error("checkpoint: unknown task kind " + std::to_string(kind));
  const std::size_t layers = le::get_uint<std::uint32_t>(bytes, 12);
  const std::size_t dim = le::get_uint<std::uint32_t>(bytes, 16);
  const std::size_t outputs = le::get_uint<std::uint32_t>(bytes, 20);
  if (layers == 0 || dim == 0 || outputs == 0) throw Error("checkpoint: empty shape");

  ProbeModel m;
  m.task_kind = static_cast<TaskKind>(kind);
  m.layer_weights.logits.assign(layers, 0.0);
  m.head.weight = Matrix(dim, outputs);
  m.head.bias.assign(outputs, 0.0);
  const std::size_t count = m.parameter_count();
  if (bytes.size() != kHeader + count * 8) {
    throw Error("checkpoint payload size mismatch: expected " + std::to_string(count * 8) +
                " bytes, got " + std::to_string(bytes.size() - kHeader));
  }
  std::vector<double> p(count);
  for (std::size_t i = 0; i < count; ++i) p[i] = le::get_f64(bytes, kHeader + i * 8);
  m.set_parameters(p);
  m.validate();
  return m;
}

inline void write_checkpoint(const ProbeModel& model, const std::filesystem::path& path) {
  write_binary_file(path, encode_checkpoint(model));
}

inline ProbeModel read_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_binary_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace svprobe
