// Stacked LSTM sequence classifier trained by full backpropagation through
// time with Adam.
//
// Cell (no peepholes), per layer and time step:
//   z = W x_t + U h_{t-1} + b,  rows ordered [input; forget; output; candidate]
//   i = sig(z_i)  f = sig(z_f)  o = sig(z_o)  g = tanh(z_g)
//   c_t = f * c_{t-1} + i * g,   h_t = o * tanh(c_t)
// Layer l+1 consumes layer l's outputs. Inverted dropout is applied to the
// non-recurrent outputs (between layers and before the projection) in
// training mode only. The last step's top hidden state is projected to
// class logits and normalised with a softmax.
//
// The first layer reads sparse inputs: only explicit entries of each
// SparseVector contribute, so one-hot encodings cost O(nnz * 4H) per step.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surglab/features.hpp"
#include "surglab/rng.hpp"
#include "surglab/types.hpp"

namespace surglab {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 256;
  double dropout_rate = 0.2;
  std::size_t epochs = 50;
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t window_n = 5;
  std::size_t input_dim = 0;
  std::size_t n_classes = 0;

  std::size_t steps() const { return window_n + 1; }

  void validate() const {
    if (layers < 1 || hidden < 1 || epochs < 1 || batch_size < 1 || window_n < 1 || input_dim < 1)
      throw ValidationError("model config: counts must be >= 1");
    if (n_classes < 1) throw ValidationError("model config: n_classes must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ValidationError("model config: dropout_rate must lie in [0,1)");
    if (!(learning_rate > 0.0)) throw ValidationError("model config: learning_rate must be > 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Standardisation of one input feature, applied inside the model.
struct FeatureScaling {
  std::int64_t index = -1;
  double mean = 0.0;
  double sd = 1.0;

  bool active() const { return index >= 0; }
  double apply(double x) const { return (x - mean) / sd; }
  bool operator==(const FeatureScaling&) const = default;
};

struct ParamBlock {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

/// Offsets of every weight matrix inside one flat parameter vector.
class ParamLayout {
 public:
  enum class Role { InputWeights, RecurrentWeights, Bias, OutputWeights, OutputBias };

  struct Location {
    Role role;
    std::size_t layer = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    /// 0..3 = input, forget, output, candidate; only for LSTM blocks.
    std::size_t gate = 0;
  };

  explicit ParamLayout(const ModelConfig& cfg) : hidden_(cfg.hidden) {
    std::size_t off = 0;
    auto add = [&](std::size_t r, std::size_t c) {
      ParamBlock b{off, r, c};
      off += r * c;
      return b;
    };
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::size_t in = l == 0 ? cfg.input_dim : cfg.hidden;
      input_.push_back(add(4 * cfg.hidden, in));
      recurrent_.push_back(add(4 * cfg.hidden, cfg.hidden));
      bias_.push_back(add(4 * cfg.hidden, 1));
    }
    out_w_ = add(cfg.n_classes, cfg.hidden);
    out_b_ = add(cfg.n_classes, 1);
    size_ = off;
  }

  std::size_t size() const { return size_; }
  std::size_t layers() const { return input_.size(); }
  const ParamBlock& input_weights(std::size_t l) const { return input_[l]; }
  const ParamBlock& recurrent_weights(std::size_t l) const { return recurrent_[l]; }
  const ParamBlock& bias(std::size_t l) const { return bias_[l]; }
  const ParamBlock& output_weights() const { return out_w_; }
  const ParamBlock& output_bias() const { return out_b_; }

  Location locate(std::size_t index) const {
    auto in_block = [&](const ParamBlock& b) { return index >= b.offset && index < b.offset + b.size(); };
    auto fill = [&](Role role, std::size_t layer, const ParamBlock& b) {
      const std::size_t k = index - b.offset;  // column-major
      Location loc{role, layer, k % b.rows, k / b.rows, 0};
      if (role != Role::OutputWeights && role != Role::OutputBias) loc.gate = loc.row / hidden_;
      return loc;
    };
    for (std::size_t l = 0; l < layers(); ++l) {
      if (in_block(input_[l])) return fill(Role::InputWeights, l, input_[l]);
      if (in_block(recurrent_[l])) return fill(Role::RecurrentWeights, l, recurrent_[l]);
      if (in_block(bias_[l])) return fill(Role::Bias, l, bias_[l]);
    }
    if (in_block(out_w_)) return fill(Role::OutputWeights, 0, out_w_);
    if (in_block(out_b_)) return fill(Role::OutputBias, 0, out_b_);
    throw ValidationError("parameter index out of range");
  }

 private:
  std::size_t hidden_;
  std::vector<ParamBlock> input_, recurrent_, bias_;
  ParamBlock out_w_, out_b_;
  std::size_t size_ = 0;
};

/// Parameter storage. Over-aligned so vectorised kernels see the same
/// alignment on every allocation and results are bitwise reproducible.
template <typename Scalar>
using ParamVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

template <typename Scalar>
Eigen::Map<Mat<Scalar>> view(ParamVector<Scalar>& data, const ParamBlock& b) {
  return {data.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}
template <typename Scalar>
Eigen::Map<const Mat<Scalar>> view(const ParamVector<Scalar>& data, const ParamBlock& b) {
  return {data.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

/// Weights, input scaling and Adam state of one classifier.
template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  ParamVector<Scalar> values;
  ParamVector<Scalar> adam_m;
  ParamVector<Scalar> adam_v;
  std::uint64_t adam_step = 0;
  FeatureScaling scaling;

  explicit ModelParams(const ModelConfig& cfg)
      : config((cfg.validate(), cfg)),
        layout(cfg),
        values(layout.size(), Scalar(0)),
        adam_m(layout.size(), Scalar(0)),
        adam_v(layout.size(), Scalar(0)) {}

  template <typename To>
  ModelParams<To> cast() const {
    ModelParams<To> out(config);
    auto conv = [](const ParamVector<Scalar>& in, ParamVector<To>& dst) {
      std::transform(in.begin(), in.end(), dst.begin(), [](Scalar x) { return static_cast<To>(x); });
    };
    conv(values, out.values);
    conv(adam_m, out.adam_m);
    conv(adam_v, out.adam_v);
    out.adam_step = adam_step;
    out.scaling = scaling;
    return out;
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](Scalar x) { return std::isfinite(x); });
  }
};

// Activation policies act on whole Eigen arrays; derivatives are expressed
// through the activation outputs.
struct StandardActivation {
  template <typename D>
  static auto gate(const Eigen::ArrayBase<D>& z) {
    using S = typename D::Scalar;
    return (S(1) + (-z).exp()).inverse();
  }
  template <typename D>
  static auto gate_grad(const Eigen::ArrayBase<D>& y) {
    using S = typename D::Scalar;
    return y * (S(1) - y);
  }
  template <typename D>
  static auto cell(const Eigen::ArrayBase<D>& z) { return z.tanh(); }
  template <typename D>
  static auto cell_grad(const Eigen::ArrayBase<D>& y) {
    using S = typename D::Scalar;
    return S(1) - y.square();
  }
};

/// Gates held open and identity activations; the cell degenerates to a
/// linear accumulator. Used to validate the gradient plumbing alone.
struct LinearActivation {
  template <typename D>
  static auto gate(const Eigen::ArrayBase<D>& z) {
    return D::PlainObject::Ones(z.rows(), z.cols());
  }
  template <typename D>
  static auto gate_grad(const Eigen::ArrayBase<D>& y) {
    return D::PlainObject::Zero(y.rows(), y.cols());
  }
  template <typename D>
  static auto cell(const Eigen::ArrayBase<D>& z) { return z.derived(); }
  template <typename D>
  static auto cell_grad(const Eigen::ArrayBase<D>& y) {
    return D::PlainObject::Ones(y.rows(), y.cols());
  }
};

/// Intermediates of one batched forward pass, consumed by backward().
template <typename Scalar>
struct ForwardCache {
  std::vector<const FeatureWindow*> inputs;
  std::size_t batch = 0;
  std::size_t steps = 0;
  // [layer][step]: activated gates (4H x B), cell, tanh(cell), hidden (H x B).
  std::vector<std::vector<Mat<Scalar>>> gates, cell, cell_act, hidden;
  // [layer][step]: inverted-dropout multipliers on the layer output; empty when off.
  std::vector<std::vector<Mat<Scalar>>> dropout;
  Mat<Scalar> top;    // H x B, dropped last-step output of the top layer
  Mat<Scalar> probs;  // C x B
};

struct Prediction {
  std::vector<double> probabilities;
  std::size_t argmax = 0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Cross entropy with the probability floored at 1e-12.
inline double cross_entropy(std::span<const double> probabilities, std::size_t target) {
  if (target >= probabilities.size()) throw ValidationError("target class out of range");
  return -std::log(std::max(probabilities[target], kProbabilityFloor));
}

namespace detail {

template <typename Scalar>
void check_window(const ModelConfig& cfg, const FeatureWindow& w) {
  if (w.size() != cfg.steps())
    throw ValidationError("window has " + std::to_string(w.size()) + " steps, expected " +
                          std::to_string(cfg.steps()));
  for (const auto& step : w) {
    if (step.index.size() != step.value.size()) throw ValidationError("malformed sparse vector");
    for (auto idx : step.index)
      if (idx >= cfg.input_dim)
        throw ValidationError("feature index " + std::to_string(idx) + " exceeds input_dim " +
                              std::to_string(cfg.input_dim));
  }
}

/// Calls fn(index, value) for every effective input entry of a step; the
/// scaled feature is always visited, defaulting to 0 when absent.
template <typename Fn>
void for_each_input(const SparseVector& step, const FeatureScaling& scaling, Fn&& fn) {
  bool seen = false;
  for (std::size_t k = 0; k < step.nnz(); ++k) {
    if (scaling.active() && static_cast<std::int64_t>(step.index[k]) == scaling.index) {
      if (!seen) fn(step.index[k], scaling.apply(step.value[k]));
      seen = true;
    } else {
      fn(step.index[k], step.value[k]);
    }
  }
  if (scaling.active() && !seen) fn(static_cast<std::uint32_t>(scaling.index), scaling.apply(0.0));
}

template <typename Scalar>
Mat<Scalar> dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  Mat<Scalar> m(rows, cols);
  const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = bernoulli(rng, rate) ? Scalar(0) : keep;
  return m;
}

}  // namespace detail

/// Batched forward pass. `rng` is only drawn from when train_mode is set and
/// dropout is enabled.
template <typename Activation = StandardActivation, typename Scalar>
ForwardCache<Scalar> forward(const ModelParams<Scalar>& p, std::span<const FeatureWindow* const> batch,
                             bool train_mode, Rng* rng = nullptr) {
  const auto& cfg = p.config;
  const std::size_t H = cfg.hidden, L = cfg.layers, T = cfg.steps(), B = batch.size();
  if (B == 0) throw ValidationError("forward: empty batch");
  for (const auto* w : batch) detail::check_window<Scalar>(cfg, *w);
  const bool use_dropout = train_mode && cfg.dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) throw ValidationError("forward: dropout needs an rng");

  ForwardCache<Scalar> c;
  c.inputs.assign(batch.begin(), batch.end());
  c.batch = B;
  c.steps = T;
  c.gates.assign(L, std::vector<Mat<Scalar>>(T));
  c.cell.assign(L, std::vector<Mat<Scalar>>(T));
  c.cell_act.assign(L, std::vector<Mat<Scalar>>(T));
  c.hidden.assign(L, std::vector<Mat<Scalar>>(T));
  c.dropout.assign(L, {});

  const Eigen::Index h = static_cast<Eigen::Index>(H);
  Mat<Scalar> z(4 * h, static_cast<Eigen::Index>(B));
  for (std::size_t l = 0; l < L; ++l) {
    const auto W = view(p.values, p.layout.input_weights(l));
    const auto U = view(p.values, p.layout.recurrent_weights(l));
    const auto b = view(p.values, p.layout.bias(l));
    if (use_dropout && (l + 1 < L)) c.dropout[l].resize(T);

    for (std::size_t t = 0; t < T; ++t) {
      if (t == 0) {
        z = b.col(0).replicate(1, static_cast<Eigen::Index>(B));
      } else {
        z.noalias() = U * c.hidden[l][t - 1];
        z.colwise() += b.col(0);
      }
      if (l == 0) {
        for (std::size_t j = 0; j < B; ++j)
          detail::for_each_input((*batch[j])[t], p.scaling, [&](std::uint32_t idx, double v) {
            z.col(static_cast<Eigen::Index>(j)) += W.col(idx) * static_cast<Scalar>(v);
          });
      } else {
        const auto& below = c.hidden[l - 1][t];
        if (!c.dropout[l - 1].empty()) {
          z.noalias() += W * below.cwiseProduct(c.dropout[l - 1][t]);
        } else {
          z.noalias() += W * below;
        }
      }

      auto& gates = c.gates[l][t];
      gates.resize(4 * h, static_cast<Eigen::Index>(B));
      gates.topRows(3 * h).array() = Activation::gate(z.topRows(3 * h).array());
      gates.bottomRows(h).array() = Activation::cell(z.bottomRows(h).array());

      auto& cell = c.cell[l][t];
      cell = gates.middleRows(0, h).cwiseProduct(gates.middleRows(3 * h, h));
      if (t > 0) cell += gates.middleRows(h, h).cwiseProduct(c.cell[l][t - 1]);
      c.cell_act[l][t] = Activation::cell(cell.array()).matrix();
      c.hidden[l][t] = gates.middleRows(2 * h, h).cwiseProduct(c.cell_act[l][t]);

      if (use_dropout && l + 1 < L)
        c.dropout[l][t] = detail::dropout_mask<Scalar>(H, B, cfg.dropout_rate, *rng);
    }
  }

  c.top = c.hidden[L - 1][T - 1];
  if (use_dropout) {
    c.dropout[L - 1].assign(1, detail::dropout_mask<Scalar>(H, B, cfg.dropout_rate, *rng));
    c.top = c.top.cwiseProduct(c.dropout[L - 1][0]);
  }

  const auto V = view(p.values, p.layout.output_weights());
  const auto vb = view(p.values, p.layout.output_bias());
  c.probs.noalias() = V * c.top;
  c.probs.colwise() += vb.col(0);
  for (Eigen::Index j = 0; j < c.probs.cols(); ++j) {
    auto col = c.probs.col(j);
    const Scalar mx = col.maxCoeff();
    col = (col.array() - mx).exp().matrix();
    col /= col.sum();
  }
  return c;
}

/// Mean cross entropy of a cached batch.
template <typename Scalar>
double batch_loss(const ForwardCache<Scalar>& c, std::span<const std::size_t> targets) {
  if (targets.size() != c.batch) throw ValidationError("targets do not match the batch");
  double total = 0.0;
  for (std::size_t j = 0; j < c.batch; ++j) {
    if (targets[j] >= static_cast<std::size_t>(c.probs.rows()))
      throw ValidationError("target class out of range");
    total -= std::log(std::max(static_cast<double>(c.probs(static_cast<Eigen::Index>(targets[j]),
                                                           static_cast<Eigen::Index>(j))),
                               kProbabilityFloor));
  }
  return total / static_cast<double>(c.batch);
}

struct BackwardOptions {
  /// Fault injection for verification tests: drop the forget-gate gradient.
  bool zero_forget_gate_grad = false;
};

template <typename Scalar>
struct Gradients {
  ParamVector<Scalar> values;
  double loss = 0.0;
};

/// Exact gradient of the batch-mean loss with respect to every parameter,
/// by backpropagation through the whole window (dropout masks included).
template <typename Activation = StandardActivation, typename Scalar>
Gradients<Scalar> backward(const ModelParams<Scalar>& p, const ForwardCache<Scalar>& c,
                           std::span<const std::size_t> targets, BackwardOptions options = {}) {
  const auto& cfg = p.config;
  const std::size_t L = cfg.layers, T = c.steps, B = c.batch;
  const Eigen::Index h = static_cast<Eigen::Index>(cfg.hidden);
  const Eigen::Index bcols = static_cast<Eigen::Index>(B);

  Gradients<Scalar> g;
  g.loss = batch_loss(c, targets);
  g.values.assign(p.layout.size(), Scalar(0));

  Mat<Scalar> dlogits = c.probs;
  for (std::size_t j = 0; j < B; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const auto tt = static_cast<Eigen::Index>(targets[j]);
    if (static_cast<double>(c.probs(tt, jj)) < kProbabilityFloor) {
      dlogits.col(jj).setZero();  // floored loss is locally constant
    } else {
      dlogits(tt, jj) -= Scalar(1);
    }
  }
  dlogits /= static_cast<Scalar>(B);

  const auto V = view(p.values, p.layout.output_weights());
  view(g.values, p.layout.output_weights()).noalias() = dlogits * c.top.transpose();
  view(g.values, p.layout.output_bias()) = dlogits.rowwise().sum();

  // Gradient arriving at each step's output of the current layer from above.
  std::vector<Mat<Scalar>> from_above(T, Mat<Scalar>::Zero(h, bcols));
  from_above[T - 1].noalias() = V.transpose() * dlogits;
  if (!c.dropout[L - 1].empty()) from_above[T - 1] = from_above[T - 1].cwiseProduct(c.dropout[L - 1][0]);

  Mat<Scalar> dh_next(h, bcols), dc_next(h, bcols), dh(h, bcols), dcell(h, bcols), dz(4 * h, bcols);
  for (std::size_t l = L; l-- > 0;) {
    const auto W = view(p.values, p.layout.input_weights(l));
    const auto U = view(p.values, p.layout.recurrent_weights(l));
    auto dW = view(g.values, p.layout.input_weights(l));
    auto dU = view(g.values, p.layout.recurrent_weights(l));
    auto db = view(g.values, p.layout.bias(l));
    std::vector<Mat<Scalar>> to_below;
    if (l > 0) to_below.assign(T, Mat<Scalar>());

    dh_next.setZero();
    dc_next.setZero();
    for (std::size_t t = T; t-- > 0;) {
      const auto& gates = c.gates[l][t];
      const auto gi = gates.middleRows(0, h);
      const auto gf = gates.middleRows(h, h);
      const auto go = gates.middleRows(2 * h, h);
      const auto gg = gates.middleRows(3 * h, h);
      const auto& cact = c.cell_act[l][t];

      dh = from_above[t] + dh_next;
      dcell.array() = dh.array() * go.array() * Activation::cell_grad(cact.array()) + dc_next.array();

      dz.middleRows(0, h).array() = dcell.array() * gg.array() * Activation::gate_grad(gi.array());
      if (t > 0) {
        dz.middleRows(h, h).array() = dcell.array() * c.cell[l][t - 1].array() * Activation::gate_grad(gf.array());
      } else {
        dz.middleRows(h, h).setZero();
      }
      if (options.zero_forget_gate_grad) dz.middleRows(h, h).setZero();
      dz.middleRows(2 * h, h).array() = dh.array() * cact.array() * Activation::gate_grad(go.array());
      dz.middleRows(3 * h, h).array() = dcell.array() * gi.array() * Activation::cell_grad(gg.array());

      dc_next = dcell.cwiseProduct(gf);
      db.col(0) += dz.rowwise().sum();
      if (t > 0) {
        dU.noalias() += dz * c.hidden[l][t - 1].transpose();
        dh_next.noalias() = U.transpose() * dz;
      } else {
        dh_next.setZero();
      }

      if (l == 0) {
        for (std::size_t j = 0; j < B; ++j)
          detail::for_each_input((*c.inputs[j])[t], p.scaling, [&](std::uint32_t idx, double v) {
            dW.col(idx) += dz.col(static_cast<Eigen::Index>(j)) * static_cast<Scalar>(v);
          });
      } else {
        const auto& below = c.hidden[l - 1][t];
        const bool dropped = !c.dropout[l - 1].empty();
        if (dropped) {
          dW.noalias() += dz * below.cwiseProduct(c.dropout[l - 1][t]).transpose();
        } else {
          dW.noalias() += dz * below.transpose();
        }
        to_below[t].noalias() = W.transpose() * dz;
        if (dropped) to_below[t] = to_below[t].cwiseProduct(c.dropout[l - 1][t]);
      }
    }
    if (l > 0) from_above = std::move(to_below);
  }
  return g;
}

/// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8).
template <typename Scalar>
void adam_step(ModelParams<Scalar>& p, std::span<const Scalar> grads, double learning_rate) {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (grads.size() != p.values.size()) throw ValidationError("adam_step: gradient size mismatch");
  const auto n = static_cast<Eigen::Index>(grads.size());
  const Eigen::Map<const Array> g(grads.data(), n);
  if (!g.allFinite()) throw Error("adam_step: non-finite gradient");
  Eigen::Map<Array> theta(p.values.data(), n), m(p.adam_m.data(), n), v(p.adam_v.data(), n);
  ++p.adam_step;
  const double step = static_cast<double>(p.adam_step);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(beta1, step));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(beta2, step));
  m = Scalar(beta1) * m + Scalar(1.0 - beta1) * g;
  v = Scalar(beta2) * v + Scalar(1.0 - beta2) * g.square();
  theta -= Scalar(learning_rate) * (m / c1) / ((v / c2).sqrt() + Scalar(eps));
}

/// Glorot-uniform weights per gate block, zero biases, forget bias 1.
template <typename Scalar>
void initialize(ModelParams<Scalar>& p, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {tag("init")}));
  const std::size_t H = p.config.hidden;
  auto fill = [&](const ParamBlock& b, std::size_t fan_out) {
    auto m = view(p.values, b);
    const double limit = std::sqrt(6.0 / static_cast<double>(b.cols + fan_out));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        m(i, j) = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * limit);
  };
  for (std::size_t l = 0; l < p.config.layers; ++l) {
    fill(p.layout.input_weights(l), H);
    fill(p.layout.recurrent_weights(l), H);
    auto b = view(p.values, p.layout.bias(l));
    b.setZero();
    b.middleRows(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(H)).setConstant(Scalar(1));
  }
  fill(p.layout.output_weights(), p.config.n_classes);
  view(p.values, p.layout.output_bias()).setZero();
  std::fill(p.adam_m.begin(), p.adam_m.end(), Scalar(0));
  std::fill(p.adam_v.begin(), p.adam_v.end(), Scalar(0));
  p.adam_step = 0;
}

/// Inference-mode class probabilities for many windows (C x N).
template <typename Scalar>
Mat<Scalar> predict_probabilities(const ModelParams<Scalar>& p, std::span<const FeatureWindow> windows) {
  Mat<Scalar> out(static_cast<Eigen::Index>(p.config.n_classes), static_cast<Eigen::Index>(windows.size()));
  const std::size_t chunk = std::max<std::size_t>(p.config.batch_size, 1);
  std::vector<const FeatureWindow*> batch;
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    const std::size_t end = std::min(windows.size(), start + chunk);
    batch.clear();
    for (std::size_t k = start; k < end; ++k) batch.push_back(&windows[k]);
    auto cache = forward(p, std::span<const FeatureWindow* const>(batch), false);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = cache.probs;
  }
  return out;
}

template <typename Scalar>
std::vector<std::size_t> predict_classes(const ModelParams<Scalar>& p, std::span<const FeatureWindow> windows) {
  const auto probs = predict_probabilities(p, windows);
  std::vector<std::size_t> out(windows.size());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    Eigen::Index best = 0;
    probs.col(j).maxCoeff(&best);
    out[static_cast<std::size_t>(j)] = static_cast<std::size_t>(best);
  }
  return out;
}

template <typename Activation = StandardActivation, typename Scalar>
Prediction predict(const ModelParams<Scalar>& p, const FeatureWindow& window, bool train_mode = false,
                   Rng* rng = nullptr) {
  const FeatureWindow* one[] = {&window};
  const auto cache = forward<Activation>(p, std::span<const FeatureWindow* const>(one), train_mode, rng);
  Prediction out;
  out.probabilities.resize(p.config.n_classes);
  for (std::size_t k = 0; k < p.config.n_classes; ++k)
    out.probabilities[k] = static_cast<double>(cache.probs(static_cast<Eigen::Index>(k), 0));
  out.argmax = static_cast<std::size_t>(
      std::max_element(out.probabilities.begin(), out.probabilities.end()) - out.probabilities.begin());
  return out;
}

struct TrainingSet {
  std::vector<FeatureWindow> inputs;
  std::vector<std::size_t> targets;
};

/// Mini-batch training: shuffled every epoch, last partial batch kept.
/// Deterministic for a given seed. Per-epoch mean loss is appended to
/// `loss_history` when provided.
template <typename Scalar = float>
ModelParams<Scalar> train(const ModelConfig& cfg, const TrainingSet& data, std::uint64_t seed,
                          FeatureScaling scaling = {}, std::vector<double>* loss_history = nullptr) {
  if (cfg.n_classes == 0) throw ValidationError("train: no classes");
  if (data.inputs.empty()) throw ValidationError("train: empty training set");
  if (data.inputs.size() != data.targets.size()) throw ValidationError("train: inputs/targets mismatch");
  ModelParams<Scalar> p(cfg);
  p.scaling = scaling;
  initialize(p, seed);

  Rng rng(derive_seed(seed, {tag("train")}));
  std::vector<std::size_t> order(data.inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const FeatureWindow*> batch;
  std::vector<std::size_t> targets;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(std::span(order), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      targets.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&data.inputs[order[k]]);
        targets.push_back(data.targets[order[k]]);
      }
      const auto cache = forward(p, std::span<const FeatureWindow* const>(batch), true, &rng);
      const auto grads = backward(p, cache, targets);
      adam_step(p, std::span<const Scalar>(grads.values), cfg.learning_rate);
      epoch_loss += grads.loss * static_cast<double>(end - start);
    }
    if (!p.all_finite()) throw Error("train: parameters diverged");
    if (loss_history) loss_history->push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return p;
}

struct GradientCheckOptions {
  std::size_t samples = 200;
  double step = 1e-5;
  std::size_t batch = 3;
  /// Standard deviation of the Gaussian inputs.
  double input_scale = 1.0;
  /// Standard deviation of the noise added to the initial parameters.
  double parameter_jitter = 0.3;
  BackwardOptions backward;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Checked parameters whose numeric gradient exceeds 1e-8 in magnitude.
  std::size_t informative = 0;
  double loss = 0.0;
};

/// Compares the analytic gradient with central finite differences on
/// randomly chosen parameters of a randomly initialised double-precision
/// model. Relative error is |ga - gn| / max(|ga|, |gn|, 1e-8). Dropout is
/// disabled; inputs are dense Gaussian vectors.
template <typename Activation = StandardActivation>
GradientCheckReport gradient_check_report(ModelConfig cfg, std::uint64_t seed, GradientCheckOptions options = {}) {
  cfg.dropout_rate = 0.0;
  ModelParams<double> p(cfg);
  initialize(p, seed);
  Rng rng(derive_seed(seed, {tag("gradient-check")}));
  for (auto& v : p.values) v += options.parameter_jitter * standard_normal(rng);

  std::vector<FeatureWindow> windows(options.batch);
  std::vector<std::size_t> targets(options.batch);
  for (std::size_t j = 0; j < options.batch; ++j) {
    for (std::size_t t = 0; t < cfg.steps(); ++t) {
      SparseVector step;
      for (std::size_t i = 0; i < cfg.input_dim; ++i)
        step.push(static_cast<std::uint32_t>(i), options.input_scale * standard_normal(rng));
      windows[j].push_back(std::move(step));
    }
    targets[j] = uniform_index(rng, cfg.n_classes);
  }
  std::vector<const FeatureWindow*> batch;
  for (const auto& w : windows) batch.push_back(&w);
  const std::span<const FeatureWindow* const> in(batch);

  const auto analytic = backward<Activation>(p, forward<Activation>(p, in, false), targets, options.backward);
  auto loss_at = [&] { return batch_loss(forward<Activation>(p, in, false), targets); };

  GradientCheckReport report;
  report.loss = analytic.loss;
  const std::size_t n = p.values.size();
  const auto picks = sample_without_replacement(rng, n, std::min(options.samples, n));
  for (std::size_t k : picks) {
    const double saved = p.values[k];
    p.values[k] = saved + options.step;
    const double up = loss_at();
    p.values[k] = saved - options.step;
    const double down = loss_at();
    p.values[k] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double ga = analytic.values[k];
    const double err = std::abs(ga - numeric) / std::max({std::abs(ga), std::abs(numeric), 1e-8});
    report.max_relative_error = std::max(report.max_relative_error, err);
    ++report.checked;
    if (std::abs(numeric) > 1e-8) ++report.informative;
  }
  return report;
}

/// Largest relative gradient error; see gradient_check_report().
template <typename Activation = StandardActivation>
double gradient_check(const ModelConfig& cfg, std::uint64_t seed, GradientCheckOptions options = {}) {
  return gradient_check_report<Activation>(cfg, seed, options).max_relative_error;
}

}  // namespace surglab
