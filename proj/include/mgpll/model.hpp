#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgpll/losses.hpp"
#include "mgpll/mlp.hpp"
#include "mgpll/rng.hpp"

namespace mgpll {

// Trade-off weights and architecture knobs. alpha/beta/gamma weight the
// feature-level adversarial, generation and auxiliary classification terms;
// clip_c bounds the critics' parameters.
struct MgpllConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double clip_c = 0.01;
  int noise_dim = 16;
  bool label_conditioned_noise = true;  // false: the noise generator sees only eps
  int gen_hidden = 128;
  int pred_hidden = 128;
  int disc_hidden = 64;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  double leaky_slope = 0.01;

  void validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) throw InvalidArgument("MgpllConfig: trade-off weights must be nonnegative");
    if (!(clip_c > 0.0)) throw InvalidArgument("MgpllConfig: clip_c must be positive");
    if (noise_dim < 1) throw InvalidArgument("MgpllConfig: noise_dim must be at least 1");
    if (gen_hidden < 1 || pred_hidden < 1 || disc_hidden < 1) throw InvalidArgument("MgpllConfig: hidden widths must be positive");
  }
};

// The five component networks:
//   noise_gen    maps [label, eps] (or eps alone) to a soft noise-label vector,
//   feat_gen     maps [label, eps] to a feature vector,
//   predictor    maps features to class probabilities,
//   label_critic scores realness of candidate label vectors,
//   feat_critic  scores realness of feature vectors.
struct MgpllModel {
  MlpState noise_gen;
  MlpState feat_gen;
  MlpState predictor;
  MlpState label_critic;
  MlpState feat_critic;
  MgpllConfig config;
  int feature_dim = 0;
  int label_dim = 0;
};

// Builds the networks in a fixed order (noise_gen, feat_gen, predictor,
// label_critic, feat_critic) so a given rng state yields one exact model.
inline MgpllModel make_model(int feature_dim, int label_dim, const MgpllConfig& config, Rng& rng) {
  config.validate();
  if (feature_dim < 1 || label_dim < 2) throw InvalidArgument("make_model: need d >= 1 and L >= 2");
  const int gen_in = config.label_conditioned_noise ? label_dim + config.noise_dim : config.noise_dim;
  const int feat_in = label_dim + config.noise_dim;  // the feature generator is always label-conditioned
  const double s = config.leaky_slope;
  const int gh = config.gen_hidden, ph = config.pred_hidden, dh = config.disc_hidden;

  MgpllModel m;
  m.config = config;
  m.feature_dim = feature_dim;
  m.label_dim = label_dim;
  // four layers, sigmoid output
  m.noise_gen = make_mlp({{gen_in, gh, Activation::LeakyRelu, s},
                          {gh, gh, Activation::LeakyRelu, s},
                          {gh, gh, Activation::LeakyRelu, s},
                          {gh, label_dim, Activation::Sigmoid}},
                         rng);
  // five layers, tanh output, batch norm on the middle three
  m.feat_gen = make_mlp({{feat_in, gh, Activation::LeakyRelu, s},
                         {gh, gh, Activation::LeakyRelu, s, true},
                         {gh, gh, Activation::LeakyRelu, s, true},
                         {gh, gh, Activation::LeakyRelu, s, true},
                         {gh, feature_dim, Activation::Tanh}},
                        rng);
  // three layers, softmax output
  m.predictor = make_mlp({{feature_dim, ph, Activation::LeakyRelu, s},
                          {ph, ph, Activation::LeakyRelu, s},
                          {ph, label_dim, Activation::Softmax}},
                         rng);
  // three-layer critics without output activation
  m.label_critic = make_mlp({{label_dim, dh, Activation::LeakyRelu, s},
                             {dh, dh, Activation::LeakyRelu, s},
                             {dh, 1, Activation::Identity}},
                            rng);
  m.feat_critic = make_mlp({{feature_dim, dh, Activation::LeakyRelu, s},
                            {dh, dh, Activation::LeakyRelu, s},
                            {dh, 1, Activation::Identity}},
                           rng);
  return m;
}

namespace detail {
inline void check_unit_range(const Matrix& m, const char* context) {
  for (double v : m.data()) {
    if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) {
      throw InvalidArgument(std::string(context) + ": entry outside [0,1]");
    }
  }
}
}  // namespace detail

// Label denoising: elementwise max(y - y_n, 0). The clamp covers the
// non-ideal case where a noise bit falls outside the candidate set.
inline std::vector<double> denoise(std::span<const double> y, std::span<const double> y_n) {
  if (y.size() != y_n.size()) throw InvalidArgument("denoise: length mismatch");
  std::vector<double> z(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) z[j] = std::max(y[j] - y_n[j], 0.0);
  return z;
}

inline Matrix denoise(const Matrix& y, const Matrix& y_n) {
  if (!y.same_shape(y_n)) throw InvalidArgument("denoise: shape mismatch");
  detail::check_unit_range(y, "denoise");
  detail::check_unit_range(y_n, "denoise");
  Matrix z(y.rows(), y.cols());
  for (std::size_t i = 0; i < z.data().size(); ++i) {
    z.data()[i] = std::max(y.data()[i] - y_n.data()[i], 0.0);
  }
  return z;
}

// Candidate augmentation: elementwise min(noise + z, 1), composing a
// candidate vector from a true-label vector and generated noise.
inline std::vector<double> augment(std::span<const double> z, std::span<const double> noise) {
  if (z.size() != noise.size()) throw InvalidArgument("augment: length mismatch");
  std::vector<double> y(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) y[j] = std::min(noise[j] + z[j], 1.0);
  return y;
}

inline Matrix augment(const Matrix& z, const Matrix& noise) {
  if (!z.same_shape(noise)) throw InvalidArgument("augment: shape mismatch");
  detail::check_unit_range(z, "augment");
  detail::check_unit_range(noise, "augment");
  Matrix y(z.rows(), z.cols());
  for (std::size_t i = 0; i < y.data().size(); ++i) {
    y.data()[i] = std::min(noise.data()[i] + z.data()[i], 1.0);
  }
  return y;
}

// Priors for the generators: eps ~ uniform on [-1,1]^noise_dim and one-hot
// label vectors z ~ multinomial(label_weights). Draw order: sample_noise
// fills rows left to right; sample_labels makes one categorical draw per row.
struct PriorSampler {
  int label_dim = 0;
  int noise_dim = 0;
  std::vector<double> label_weights;
  Rng rng;

  PriorSampler(int label_dim_, int noise_dim_, std::uint64_t seed)
      : label_dim(label_dim_), noise_dim(noise_dim_), rng(seed) {
    if (label_dim < 2 || noise_dim < 1) throw InvalidArgument("PriorSampler: bad dimensions");
    label_weights.assign(label_dim, 1.0 / label_dim);
  }

  void set_label_weights(std::vector<double> w) {
    if (static_cast<int>(w.size()) != label_dim) throw InvalidArgument("PriorSampler: weight count mismatch");
    double total = 0.0;
    for (double v : w) {
      if (!(v >= 0.0)) throw InvalidArgument("PriorSampler: negative weight");
      total += v;
    }
    if (!(total > 0.0)) throw InvalidArgument("PriorSampler: weights sum to zero");
    for (double& v : w) v /= total;
    label_weights = std::move(w);
  }

  Matrix sample_noise(int rows) {
    Matrix eps(rows, noise_dim);
    for (auto& v : eps.data()) v = rng.uniform(-1.0, 1.0);
    return eps;
  }

  Matrix sample_labels(int rows) {
    Matrix z(rows, label_dim);
    for (int i = 0; i < rows; ++i) z(i, rng.categorical(label_weights)) = 1.0;
    return z;
  }
};

namespace detail {
// Input assembly for the noise generator, honoring the unconditioned variant.
inline Matrix noise_gen_input(const MgpllModel& m, const Matrix& z, const Matrix& eps) {
  if (eps.cols() != m.config.noise_dim) throw InvalidArgument("noise generator: eps width != noise_dim");
  if (!m.config.label_conditioned_noise) return eps;
  if (z.cols() != m.label_dim) throw InvalidArgument("noise generator: label width != L");
  return hcat(z, eps);
}

inline Matrix feat_gen_input(const MgpllModel& m, const Matrix& z, const Matrix& eps) {
  if (eps.cols() != m.config.noise_dim) throw InvalidArgument("feature generator: eps width != noise_dim");
  if (z.cols() != m.label_dim) throw InvalidArgument("feature generator: label width != L");
  return hcat(z, eps);
}
}  // namespace detail

// Soft noise-label vectors from the noise generator; entries in [0,1]. When
// the model is unconditioned, z is ignored entirely.
inline Matrix gen_noise_labels(const MgpllModel& model, const Matrix& z, const Matrix& eps) {
  return mlp_infer(model.noise_gen, detail::noise_gen_input(model, z, eps), Mode::Eval);
}

// Feature vectors from the feature generator; entries in [-1,1]. Train mode
// engages batch-statistics batch norm (requires >= 2 rows).
inline Matrix gen_features(const MgpllModel& model, const Matrix& z, const Matrix& eps, Mode mode) {
  return mlp_infer(model.feat_gen, detail::feat_gen_input(model, z, eps), mode);
}

// Class probabilities from the predictor; rows on the simplex.
inline Matrix predict(const MgpllModel& model, const Matrix& x) {
  return mlp_infer(model.predictor, x, Mode::Eval);
}

inline int predict_label(const MgpllModel& model, std::span<const double> x) {
  Matrix row(1, static_cast<int>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) row(0, j) = x[j];
  const Matrix p = predict(model, row);
  return argmax_row(p.row(0));
}

inline std::vector<int> predict_labels(const MgpllModel& model, const Matrix& x) {
  const Matrix p = predict(model, x);
  std::vector<int> out(p.rows());
  for (int i = 0; i < p.rows(); ++i) out[i] = argmax_row(p.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// Loss terms. Each *_at function takes the stochastic draws explicitly and is
// a pure function of (parameters, batch, draws); the sampler overloads below
// draw and delegate. Gradients are returned per network, ready for descent
// (generators/predictor) or ascent (critics).
// ---------------------------------------------------------------------------

struct ClassificationLoss {
  double value = 0.0;
  MlpGrads predictor_grads;
  MlpGrads noise_gen_grads;
};

// Classification loss: MSE between the predictor's output and the denoised
// target y (-) noise_gen([F(x), eps]). The predictor's appearance inside the
// noise generator's input is treated as a constant (no gradient flows to the
// predictor through its own target); the noise generator still receives the
// full gradient through the denoising composition.
inline ClassificationLoss loss_classification_at(MgpllModel& model, const Matrix& x, const Matrix& y,
                                                 const Matrix& eps) {
  auto [p, tape_f] = mlp_forward(model.predictor, x, Mode::Train);
  auto [noise, tape_n] = mlp_forward(model.noise_gen, detail::noise_gen_input(model, p, eps), Mode::Train);
  const Matrix target = denoise(y, noise);

  ClassificationLoss out;
  out.value = mse(p, target);

  const Matrix dp = mse_grad(p, target);
  // d target / d noise is -1 where y - noise > 0, else 0 (clamp region)
  Matrix dnoise(noise.rows(), noise.cols());
  for (std::size_t i = 0; i < dnoise.data().size(); ++i) {
    const bool active = y.data()[i] - noise.data()[i] > 0.0;
    dnoise.data()[i] = active ? -(target.data()[i] - p.data()[i]) * 2.0 / static_cast<double>(p.data().size()) : 0.0;
  }
  out.noise_gen_grads = mlp_backward(model.noise_gen, tape_n, dnoise).first;
  out.predictor_grads = mlp_backward(model.predictor, tape_f, dp).first;
  return out;
}

struct AdversarialLoss {
  double value = 0.0;       // mean critic(real) - mean critic(generated)
  MlpGrads critic_grads;    // d value / d critic parameters (ascend to train the critic)
  MlpGrads generator_grads; // d value / d generator parameters (descend to train the generator)
};

// Label-level adversarial value: mean D_n(y) - mean D_n(min(G_n(z,eps)+z, 1)).
inline AdversarialLoss loss_adv_label_at(MgpllModel& model, const Matrix& y, const Matrix& z, const Matrix& eps) {
  const int n = y.rows();
  auto [noise, tape_n] = mlp_forward(model.noise_gen, detail::noise_gen_input(model, z, eps), Mode::Train);
  const Matrix fake = augment(z, noise);

  auto [score_real, tape_real] = mlp_forward(model.label_critic, y, Mode::Train);
  auto [score_fake, tape_fake] = mlp_forward(model.label_critic, fake, Mode::Train);

  AdversarialLoss out;
  out.value = mean_all(score_real) - mean_all(score_fake);
  if (!std::isfinite(out.value)) throw NumericError("loss_adv_label: non-finite value");

  const Matrix g_real = Matrix::filled(n, 1, 1.0 / n);
  const Matrix g_fake = Matrix::filled(n, 1, -1.0 / n);
  auto [crit_real, unused] = mlp_backward(model.label_critic, tape_real, g_real);
  auto [crit_fake, dfake] = mlp_backward(model.label_critic, tape_fake, g_fake);
  out.critic_grads = std::move(crit_real);
  out.critic_grads.add_scaled(crit_fake, 1.0);

  // through the augmentation: d fake / d noise = 1 where noise + z < 1
  Matrix dnoise = dfake;
  for (std::size_t i = 0; i < dnoise.data().size(); ++i) {
    if (noise.data()[i] + z.data()[i] >= 1.0) dnoise.data()[i] = 0.0;
  }
  out.generator_grads = mlp_backward(model.noise_gen, tape_n, dnoise).first;
  return out;
}

// Feature-level adversarial value: mean D_x(x) - mean D_x(G_x(z,eps)).
// Returned unscaled; callers apply the alpha trade-off weight.
inline AdversarialLoss loss_adv_feature_at(MgpllModel& model, const Matrix& x, const Matrix& z, const Matrix& eps) {
  const int n = x.rows();
  auto [fake, tape_g] = mlp_forward(model.feat_gen, detail::feat_gen_input(model, z, eps), Mode::Train);
  auto [score_real, tape_real] = mlp_forward(model.feat_critic, x, Mode::Train);
  auto [score_fake, tape_fake] = mlp_forward(model.feat_critic, fake, Mode::Train);

  AdversarialLoss out;
  out.value = mean_all(score_real) - mean_all(score_fake);
  if (!std::isfinite(out.value)) throw NumericError("loss_adv_feature: non-finite value");

  const Matrix g_real = Matrix::filled(n, 1, 1.0 / n);
  const Matrix g_fake = Matrix::filled(n, 1, -1.0 / n);
  auto [crit_real, unused] = mlp_backward(model.feat_critic, tape_real, g_real);
  auto [crit_fake, dfake] = mlp_backward(model.feat_critic, tape_fake, g_fake);
  out.critic_grads = std::move(crit_real);
  out.critic_grads.add_scaled(crit_fake, 1.0);
  out.generator_grads = mlp_backward(model.feat_gen, tape_g, dfake).first;
  return out;
}

struct GenerationLoss {
  double value = 0.0;
  MlpGrads feat_gen_grads;
  MlpGrads noise_gen_grads;
  MlpGrads predictor_grads;
};

// Generation loss: MSE between G_x(z_i, eps2) and x_i, where z_i is the
// denoised label vector y_i (-) G_n(F(x_i), eps1). Gradients flow into the
// feature generator, the noise generator, and the predictor.
inline GenerationLoss loss_generation_at(MgpllModel& model, const Matrix& x, const Matrix& y, const Matrix& eps1,
                                         const Matrix& eps2) {
  auto [p, tape_f] = mlp_forward(model.predictor, x, Mode::Train);
  auto [noise, tape_n] = mlp_forward(model.noise_gen, detail::noise_gen_input(model, p, eps1), Mode::Train);
  const Matrix z = denoise(y, noise);
  auto [regen, tape_g] = mlp_forward(model.feat_gen, detail::feat_gen_input(model, z, eps2), Mode::Train);

  GenerationLoss out;
  out.value = mse(regen, x);

  const Matrix dregen = mse_grad(regen, x);
  auto [gx_grads, dgin] = mlp_backward(model.feat_gen, tape_g, dregen);
  out.feat_gen_grads = std::move(gx_grads);

  Matrix dz = take_columns(dgin, 0, model.label_dim);
  // through the denoising clamp
  Matrix dnoise(dz.rows(), dz.cols());
  for (std::size_t i = 0; i < dnoise.data().size(); ++i) {
    dnoise.data()[i] = y.data()[i] - noise.data()[i] > 0.0 ? -dz.data()[i] : 0.0;
  }
  auto [gn_grads, dnin] = mlp_backward(model.noise_gen, tape_n, dnoise);
  out.noise_gen_grads = std::move(gn_grads);

  if (model.config.label_conditioned_noise) {
    const Matrix dp = take_columns(dnin, 0, model.label_dim);
    out.predictor_grads = mlp_backward(model.predictor, tape_f, dp).first;
  } else {
    out.predictor_grads = zeros_like(model.predictor);
  }
  return out;
}

struct AuxiliaryLoss {
  double value = 0.0;
  MlpGrads predictor_grads;
  MlpGrads feat_gen_grads;
};

// Auxiliary classification loss: cross entropy between F(G_x(z, eps)) and the
// sampled label z. Gradients flow into the predictor and feature generator.
inline AuxiliaryLoss loss_auxiliary_at(MgpllModel& model, const Matrix& z, const Matrix& eps) {
  auto [fake, tape_g] = mlp_forward(model.feat_gen, detail::feat_gen_input(model, z, eps), Mode::Train);
  auto [p, tape_f] = mlp_forward(model.predictor, fake, Mode::Train);

  AuxiliaryLoss out;
  out.value = cross_entropy(p, z);

  const Matrix dp = cross_entropy_grad(p, z);
  auto [f_grads, dfake] = mlp_backward(model.predictor, tape_f, dp);
  out.predictor_grads = std::move(f_grads);
  out.feat_gen_grads = mlp_backward(model.feat_gen, tape_g, dfake).first;
  return out;
}

// Sampler-driven overloads. Draw order is part of the contract (one draw
// block per term, in the argument order shown).
inline ClassificationLoss loss_classification(MgpllModel& model, const Matrix& x, const Matrix& y,
                                              PriorSampler& sampler) {
  return loss_classification_at(model, x, y, sampler.sample_noise(x.rows()));
}

inline AdversarialLoss loss_adv_label(MgpllModel& model, const Matrix& y, PriorSampler& sampler) {
  const Matrix z = sampler.sample_labels(y.rows());
  const Matrix eps = sampler.sample_noise(y.rows());
  return loss_adv_label_at(model, y, z, eps);
}

inline AdversarialLoss loss_adv_feature(MgpllModel& model, const Matrix& x, PriorSampler& sampler) {
  const Matrix z = sampler.sample_labels(x.rows());
  const Matrix eps = sampler.sample_noise(x.rows());
  return loss_adv_feature_at(model, x, z, eps);
}

inline GenerationLoss loss_generation(MgpllModel& model, const Matrix& x, const Matrix& y, PriorSampler& sampler) {
  const Matrix eps1 = sampler.sample_noise(x.rows());
  const Matrix eps2 = sampler.sample_noise(x.rows());
  return loss_generation_at(model, x, y, eps1, eps2);
}

inline AuxiliaryLoss loss_auxiliary(MgpllModel& model, PriorSampler& sampler, int m) {
  if (m < 1) throw InvalidArgument("loss_auxiliary: m must be positive");
  const Matrix z = sampler.sample_labels(m);
  const Matrix eps = sampler.sample_noise(m);
  return loss_auxiliary_at(model, z, eps);
}

// Monitoring scalar: L_c + L^n_adv + alpha*L^x_adv + beta*L_g + gamma*L_c'.
// Evaluates the five terms in that order on the given batch; training uses
// per-term gradient routing, not this scalar's gradient.
inline double total_objective(MgpllModel& model, const Matrix& x, const Matrix& y, PriorSampler& sampler) {
  const auto& cfg = model.config;
  double total = 0.0;
  total += loss_classification(model, x, y, sampler).value;
  total += loss_adv_label(model, y, sampler).value;
  total += cfg.alpha * loss_adv_feature(model, x, sampler).value;
  total += cfg.beta * loss_generation(model, x, y, sampler).value;
  total += cfg.gamma * loss_auxiliary(model, sampler, x.rows()).value;
  if (!std::isfinite(total)) throw NumericError("total_objective: non-finite value");
  return total;
}

}  // namespace mgpll
