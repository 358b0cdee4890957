#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mgpll/matrix.hpp"
#include "mgpll/rng.hpp"

namespace mgpll {

enum class Activation { Identity, LeakyRelu, Sigmoid, Tanh, Softmax };
enum class Mode { Train, Eval };
enum class StepDirection { Descent, Ascent };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::Identity;
  double leaky_slope = 0.01;  // read only for LeakyRelu
  bool batch_norm = false;
};

struct LayerState {
  Matrix weight;             // in_dim x out_dim
  std::vector<double> bias;  // out_dim
  // Batch-norm affine parameters and running statistics (batch_norm layers only).
  std::vector<double> bn_scale, bn_shift;
  std::vector<double> bn_run_mean, bn_run_var;
};

// One tensor slot per parameter tensor; shared shape for gradients and
// RMSProp accumulators.
struct LayerTensors {
  Matrix weight;
  std::vector<double> bias, bn_scale, bn_shift;
};

struct MlpGrads {
  std::vector<LayerTensors> layers;

  void add_scaled(const MlpGrads& o, double s) {
    if (layers.size() != o.layers.size()) throw InvalidArgument("MlpGrads::add_scaled: layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      auto& a = layers[k];
      const auto& b = o.layers[k];
      for (std::size_t i = 0; i < a.weight.data().size(); ++i) a.weight.data()[i] += s * b.weight.data()[i];
      for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += s * b.bias[i];
      for (std::size_t i = 0; i < a.bn_scale.size(); ++i) a.bn_scale[i] += s * b.bn_scale[i];
      for (std::size_t i = 0; i < a.bn_shift.size(); ++i) a.bn_shift[i] += s * b.bn_shift[i];
    }
  }
  void scale(double s) {
    for (auto& l : layers) {
      for (auto& v : l.weight.data()) v *= s;
      for (auto& v : l.bias) v *= s;
      for (auto& v : l.bn_scale) v *= s;
      for (auto& v : l.bn_shift) v *= s;
    }
  }
};

struct MlpState {
  std::vector<LayerSpec> specs;
  std::vector<LayerState> layers;
  MlpGrads rms_accum;                 // RMSProp accumulator per parameter tensor
  std::uint64_t param_version = 0;    // bumped on any parameter mutation

  int input_dim() const { return specs.empty() ? 0 : specs.front().in_dim; }
  int output_dim() const { return specs.empty() ? 0 : specs.back().out_dim; }
};

inline MlpGrads zeros_like(const MlpState& state) {
  MlpGrads g;
  g.layers.reserve(state.layers.size());
  for (std::size_t k = 0; k < state.layers.size(); ++k) {
    LayerTensors t;
    t.weight = Matrix::zeros(state.layers[k].weight.rows(), state.layers[k].weight.cols());
    t.bias.assign(state.layers[k].bias.size(), 0.0);
    t.bn_scale.assign(state.layers[k].bn_scale.size(), 0.0);
    t.bn_shift.assign(state.layers[k].bn_shift.size(), 0.0);
    g.layers.push_back(std::move(t));
  }
  return g;
}

// Validates the spec chain and initializes parameters: weights uniform in
// +-sqrt(6/(fan_in+fan_out)), biases 0, batch-norm scale 1 / shift 0.
inline MlpState make_mlp(std::vector<LayerSpec> specs, Rng& rng) {
  if (specs.empty()) throw InvalidArgument("make_mlp: no layers");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    if (s.in_dim < 1 || s.out_dim < 1) throw InvalidArgument("make_mlp: non-positive layer dimension");
    if (s.activation == Activation::Softmax && k + 1 != specs.size()) {
      throw InvalidArgument("make_mlp: softmax permitted only as the terminal layer");
    }
    if (s.activation == Activation::LeakyRelu && !(s.leaky_slope > 0.0 && s.leaky_slope < 1.0)) {
      throw InvalidArgument("make_mlp: leaky slope must be in (0,1)");
    }
    if (k > 0 && specs[k - 1].out_dim != s.in_dim) {
      throw InvalidArgument("make_mlp: layer dimensions do not chain");
    }
  }
  MlpState state;
  state.specs = std::move(specs);
  state.layers.reserve(state.specs.size());
  for (const auto& s : state.specs) {
    LayerState l;
    l.weight = Matrix(s.in_dim, s.out_dim);
    const double bound = std::sqrt(6.0 / (s.in_dim + s.out_dim));
    for (auto& w : l.weight.data()) w = rng.uniform(-bound, bound);
    l.bias.assign(s.out_dim, 0.0);
    if (s.batch_norm) {
      l.bn_scale.assign(s.out_dim, 1.0);
      l.bn_shift.assign(s.out_dim, 0.0);
      l.bn_run_mean.assign(s.out_dim, 0.0);
      l.bn_run_var.assign(s.out_dim, 1.0);
    }
    state.layers.push_back(std::move(l));
  }
  state.rms_accum = zeros_like(state);
  state.param_version = 1;
  return state;
}

// Recorded intermediates of one forward pass, sufficient for exact gradients
// of a scalar loss with respect to every parameter and the input batch.
struct Tape {
  Mode mode = Mode::Eval;
  const MlpState* source = nullptr;
  std::uint64_t param_version = 0;
  std::vector<Matrix> acts;                     // acts[0] = input, acts[k+1] = layer k output
  std::vector<Matrix> bn_zhat;                  // normalized pre-activations (batch_norm layers)
  std::vector<std::vector<double>> bn_inv_std;  // the inverse std actually applied
};

namespace detail {

inline void apply_activation(const LayerSpec& spec, Matrix& z) {
  switch (spec.activation) {
    case Activation::Identity:
      return;
    case Activation::LeakyRelu:
      for (auto& v : z.data()) v = v > 0.0 ? v : spec.leaky_slope * v;
      return;
    case Activation::Sigmoid:
      for (auto& v : z.data()) v = 1.0 / (1.0 + std::exp(-v));
      return;
    case Activation::Tanh:
      for (auto& v : z.data()) v = std::tanh(v);
      return;
    case Activation::Softmax:
      for (int i = 0; i < z.rows(); ++i) {
        auto r = z.row(i);
        double m = r[0];
        for (double v : r) m = std::max(m, v);
        double sum = 0.0;
        for (auto& v : r) {
          v = std::exp(v - m);
          sum += v;
        }
        for (auto& v : r) v /= sum;
      }
      return;
  }
}

// dL/d(pre-activation) from dL/d(activation output), using the recorded output.
inline Matrix activation_backward(const LayerSpec& spec, const Matrix& out, const Matrix& grad) {
  Matrix dz = grad;
  switch (spec.activation) {
    case Activation::Identity:
      break;
    case Activation::LeakyRelu:
      // sign(out) == sign(pre-activation) because the slope is positive
      for (std::size_t i = 0; i < dz.data().size(); ++i) {
        if (out.data()[i] <= 0.0) dz.data()[i] *= spec.leaky_slope;
      }
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < dz.data().size(); ++i) {
        const double a = out.data()[i];
        dz.data()[i] *= a * (1.0 - a);
      }
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < dz.data().size(); ++i) {
        const double a = out.data()[i];
        dz.data()[i] *= 1.0 - a * a;
      }
      break;
    case Activation::Softmax:
      for (int i = 0; i < dz.rows(); ++i) {
        auto a = out.row(i);
        auto g = grad.row(i);
        double dot = 0.0;
        for (int j = 0; j < static_cast<int>(a.size()); ++j) dot += g[j] * a[j];
        auto d = dz.row(i);
        for (int j = 0; j < static_cast<int>(a.size()); ++j) d[j] = a[j] * (g[j] - dot);
      }
      break;
  }
  return dz;
}

}  // namespace detail

// Forward pass. Train mode uses batch statistics in batch-norm layers and
// updates the running statistics; Eval mode reads the running statistics and
// leaves them untouched.
inline std::pair<Matrix, Tape> mlp_forward(MlpState& state, const Matrix& batch, Mode mode) {
  if (state.specs.empty()) throw InvalidArgument("mlp_forward: empty network");
  if (batch.cols() != state.input_dim()) throw InvalidArgument("mlp_forward: batch column count does not match input dim");
  if (batch.rows() < 1) throw InvalidArgument("mlp_forward: empty batch");
  ensure_finite(batch, "mlp_forward input");

  Tape tape;
  tape.mode = mode;
  tape.source = &state;
  tape.acts.reserve(state.specs.size() + 1);
  tape.acts.push_back(batch);
  tape.bn_zhat.resize(state.specs.size());
  tape.bn_inv_std.resize(state.specs.size());

  for (std::size_t k = 0; k < state.specs.size(); ++k) {
    const auto& spec = state.specs[k];
    auto& layer = state.layers[k];
    Matrix z = matmul(tape.acts.back(), layer.weight);
    add_row_inplace(z, layer.bias);

    if (spec.batch_norm) {
      const int n = z.rows();
      if (mode == Mode::Train && n < 2) {
        throw InvalidArgument("mlp_forward: Train-mode batch norm requires at least 2 rows");
      }
      std::vector<double> mean(spec.out_dim), var(spec.out_dim);
      if (mode == Mode::Train) {
        for (int j = 0; j < spec.out_dim; ++j) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) s += z(i, j);
          mean[j] = s / n;
        }
        for (int j = 0; j < spec.out_dim; ++j) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) {
            const double d = z(i, j) - mean[j];
            s += d * d;
          }
          var[j] = s / n;  // biased, as used for the normalization itself
        }
        for (int j = 0; j < spec.out_dim; ++j) {
          layer.bn_run_mean[j] = kBatchNormMomentum * layer.bn_run_mean[j] + (1.0 - kBatchNormMomentum) * mean[j];
          layer.bn_run_var[j] = kBatchNormMomentum * layer.bn_run_var[j] + (1.0 - kBatchNormMomentum) * var[j];
        }
      } else {
        mean = layer.bn_run_mean;
        var = layer.bn_run_var;
      }
      std::vector<double> inv_std(spec.out_dim);
      for (int j = 0; j < spec.out_dim; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
      Matrix zhat(z.rows(), z.cols());
      for (int i = 0; i < z.rows(); ++i) {
        for (int j = 0; j < z.cols(); ++j) zhat(i, j) = (z(i, j) - mean[j]) * inv_std[j];
      }
      tape.bn_zhat[k] = zhat;
      tape.bn_inv_std[k] = inv_std;
      for (int i = 0; i < z.rows(); ++i) {
        for (int j = 0; j < z.cols(); ++j) z(i, j) = zhat(i, j) * layer.bn_scale[j] + layer.bn_shift[j];
      }
    }

    detail::apply_activation(spec, z);
    tape.acts.push_back(std::move(z));
  }

  tape.param_version = state.param_version;
  ensure_finite(tape.acts.back(), "mlp_forward output");
  return {tape.acts.back(), std::move(tape)};
}

// Tapeless forward that never mutates the state (running statistics included);
// Train mode still normalizes with batch statistics.
inline Matrix mlp_infer(const MlpState& state, const Matrix& batch, Mode mode) {
  if (state.specs.empty()) throw InvalidArgument("mlp_infer: empty network");
  if (batch.cols() != state.input_dim()) throw InvalidArgument("mlp_infer: batch column count does not match input dim");
  if (batch.rows() < 1) throw InvalidArgument("mlp_infer: empty batch");
  ensure_finite(batch, "mlp_infer input");

  Matrix a = batch;
  for (std::size_t k = 0; k < state.specs.size(); ++k) {
    const auto& spec = state.specs[k];
    const auto& layer = state.layers[k];
    Matrix z = matmul(a, layer.weight);
    add_row_inplace(z, layer.bias);
    if (spec.batch_norm) {
      const int n = z.rows();
      if (mode == Mode::Train && n < 2) {
        throw InvalidArgument("mlp_infer: Train-mode batch norm requires at least 2 rows");
      }
      std::vector<double> mean(spec.out_dim), var(spec.out_dim);
      if (mode == Mode::Train) {
        for (int j = 0; j < spec.out_dim; ++j) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) s += z(i, j);
          mean[j] = s / n;
        }
        for (int j = 0; j < spec.out_dim; ++j) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) {
            const double d = z(i, j) - mean[j];
            s += d * d;
          }
          var[j] = s / n;
        }
      } else {
        mean = layer.bn_run_mean;
        var = layer.bn_run_var;
      }
      for (int j = 0; j < spec.out_dim; ++j) {
        const double inv = 1.0 / std::sqrt(var[j] + kBatchNormEps);
        for (int i = 0; i < n; ++i) {
          z(i, j) = (z(i, j) - mean[j]) * inv * layer.bn_scale[j] + layer.bn_shift[j];
        }
      }
    }
    detail::apply_activation(spec, z);
    a = std::move(z);
  }
  ensure_finite(a, "mlp_infer output");
  return a;
}

// Exact gradients of a scalar loss given dL/d(output). Returns parameter
// gradients mirroring the state's tensors plus dL/d(input batch). The tape
// must come from a forward on this exact state with no parameter mutation in
// between.
inline std::pair<MlpGrads, Matrix> mlp_backward(const MlpState& state, const Tape& tape, const Matrix& output_grad) {
  if (tape.source != &state || tape.param_version != state.param_version) {
    throw InvalidArgument("mlp_backward: stale tape (state mutated since forward)");
  }
  const Matrix& out = tape.acts.back();
  if (!output_grad.same_shape(out)) throw InvalidArgument("mlp_backward: output_grad shape mismatch");

  MlpGrads grads = zeros_like(state);
  Matrix g = output_grad;
  for (int k = static_cast<int>(state.specs.size()) - 1; k >= 0; --k) {
    const auto& spec = state.specs[k];
    const auto& layer = state.layers[k];
    Matrix dz = detail::activation_backward(spec, tape.acts[k + 1], g);

    if (spec.batch_norm) {
      const Matrix& zhat = tape.bn_zhat[k];
      const auto& inv_std = tape.bn_inv_std[k];
      const int n = dz.rows();
      auto& lg = grads.layers[k];
      std::vector<double> sum_d(spec.out_dim, 0.0), sum_dz(spec.out_dim, 0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < spec.out_dim; ++j) {
          lg.bn_shift[j] += dz(i, j);
          lg.bn_scale[j] += dz(i, j) * zhat(i, j);
        }
      }
      Matrix dzhat(n, spec.out_dim);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < spec.out_dim; ++j) {
          dzhat(i, j) = dz(i, j) * layer.bn_scale[j];
          sum_d[j] += dzhat(i, j);
          sum_dz[j] += dzhat(i, j) * zhat(i, j);
        }
      }
      if (tape.mode == Mode::Train) {
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < spec.out_dim; ++j) {
            dz(i, j) = inv_std[j] / n * (n * dzhat(i, j) - sum_d[j] - zhat(i, j) * sum_dz[j]);
          }
        }
      } else {
        // running statistics are constants: the transform is affine
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < spec.out_dim; ++j) dz(i, j) = dzhat(i, j) * inv_std[j];
        }
      }
    }

    grads.layers[k].weight = matmul_at_b(tape.acts[k], dz);
    grads.layers[k].bias = column_sums(dz);
    g = matmul_a_bt(dz, layer.weight);
  }
  return {std::move(grads), std::move(g)};
}

// One RMSProp step: acc = decay*acc + (1-decay)*g^2, then the parameter moves
// by -+ lr*g/sqrt(acc+eps_div) according to direction. Ascent is the critics'
// gradient-ascent step; Ascent with g is bitwise Descent with -g.
inline void rmsprop_step(MlpState& state, const MlpGrads& grads, double lr, double decay, double eps_div,
                         StepDirection direction) {
  if (!(lr > 0.0)) throw InvalidArgument("rmsprop_step: lr must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw InvalidArgument("rmsprop_step: decay must be in (0,1)");
  if (!(eps_div > 0.0)) throw InvalidArgument("rmsprop_step: eps_div must be positive");
  if (grads.layers.size() != state.layers.size()) throw InvalidArgument("rmsprop_step: gradient layer count mismatch");

  const double sign = direction == StepDirection::Ascent ? 1.0 : -1.0;
  auto update = [&](double& param, double& acc, double g) {
    if (!std::isfinite(g)) throw NumericError("rmsprop_step: non-finite gradient");
    acc = decay * acc + (1.0 - decay) * (g * g);
    const double step = lr * g / std::sqrt(acc + eps_div);
    param += sign * step;
  };
  for (std::size_t k = 0; k < state.layers.size(); ++k) {
    auto& l = state.layers[k];
    auto& a = state.rms_accum.layers[k];
    const auto& g = grads.layers[k];
    if (!g.weight.same_shape(l.weight) || g.bias.size() != l.bias.size() ||
        g.bn_scale.size() != l.bn_scale.size() || g.bn_shift.size() != l.bn_shift.size()) {
      throw InvalidArgument("rmsprop_step: gradient tensor shape mismatch");
    }
    for (std::size_t i = 0; i < l.weight.data().size(); ++i) update(l.weight.data()[i], a.weight.data()[i], g.weight.data()[i]);
    for (std::size_t i = 0; i < l.bias.size(); ++i) update(l.bias[i], a.bias[i], g.bias[i]);
    for (std::size_t i = 0; i < l.bn_scale.size(); ++i) update(l.bn_scale[i], a.bn_scale[i], g.bn_scale[i]);
    for (std::size_t i = 0; i < l.bn_shift.size(); ++i) update(l.bn_shift[i], a.bn_shift[i], g.bn_shift[i]);
  }
  state.param_version += 1;
}

// Clamp every weight/bias (and batch-norm affine) entry to [-c, c]. Running
// statistics are not parameters and stay untouched. Idempotent; the version
// is bumped only when a value actually changed.
inline void clip_parameters(MlpState& state, double c) {
  if (!(c > 0.0)) throw InvalidArgument("clip_parameters: c must be positive");
  bool changed = false;
  auto clamp = [&](double& v) {
    const double nv = std::clamp(v, -c, c);
    if (nv != v) {
      v = nv;
      changed = true;
    }
  };
  for (auto& l : state.layers) {
    for (auto& v : l.weight.data()) clamp(v);
    for (auto& v : l.bias) clamp(v);
    for (auto& v : l.bn_scale) clamp(v);
    for (auto& v : l.bn_shift) clamp(v);
  }
  if (changed) state.param_version += 1;
}

inline double max_abs_parameter(const MlpState& state) {
  double m = 0.0;
  for (const auto& l : state.layers) {
    for (double v : l.weight.data()) m = std::max(m, std::fabs(v));
    for (double v : l.bias) m = std::max(m, std::fabs(v));
    for (double v : l.bn_scale) m = std::max(m, std::fabs(v));
    for (double v : l.bn_shift) m = std::max(m, std::fabs(v));
  }
  return m;
}

}  // namespace mgpll
