#pragma once

// Central finite-difference oracle for gradients. The loss closure re-runs
// the forward value with the current parameter values; only the analytic
// backward path is under test.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mgpll/mlp.hpp"
#include "mgpll/model.hpp"

namespace testsupport {

struct GradCheckResult {
  int checked = 0;
  int failures = 0;
  double worst_rel = 0.0;
  std::string first_failure;

  bool ok() const { return failures == 0 && checked > 0; }
};

struct ParamSlot {
  double* value;
  double analytic;
  std::string label;
};

inline std::vector<ParamSlot> parameter_slots(mgpll::MlpState& net, const mgpll::MlpGrads& grads) {
  std::vector<ParamSlot> slots;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& l = net.layers[k];
    const auto& g = grads.layers[k];
    const std::string prefix = "layer" + std::to_string(k);
    for (std::size_t i = 0; i < l.weight.data().size(); ++i) {
      slots.push_back({&l.weight.data()[i], g.weight.data()[i], prefix + ".w" + std::to_string(i)});
    }
    for (std::size_t i = 0; i < l.bias.size(); ++i) {
      slots.push_back({&l.bias[i], g.bias[i], prefix + ".b" + std::to_string(i)});
    }
    for (std::size_t i = 0; i < l.bn_scale.size(); ++i) {
      slots.push_back({&l.bn_scale[i], g.bn_scale[i], prefix + ".bn_scale" + std::to_string(i)});
    }
    for (std::size_t i = 0; i < l.bn_shift.size(); ++i) {
      slots.push_back({&l.bn_shift[i], g.bn_shift[i], prefix + ".bn_shift" + std::to_string(i)});
    }
  }
  return slots;
}

// Compares every parameter gradient of `net` against (f(w+h) - f(w-h)) / 2h.
// Pass criterion: |a - n| <= tol * max(|a|, |n|), with a small absolute floor
// for gradients that are themselves ~0.
inline GradCheckResult check_network_gradients(mgpll::MlpState& net, const mgpll::MlpGrads& analytic,
                                               const std::function<double()>& loss, double step = 1e-5,
                                               double tol = 1e-4, double abs_floor = 1e-8) {
  GradCheckResult res;
  for (auto& slot : parameter_slots(net, analytic)) {
    const double saved = *slot.value;
    *slot.value = saved + step;
    const double up = loss();
    *slot.value = saved - step;
    const double down = loss();
    *slot.value = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double diff = std::fabs(slot.analytic - numeric);
    const double scale = std::max(std::fabs(slot.analytic), std::fabs(numeric));
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    ++res.checked;
    if (diff > tol * scale && diff > abs_floor) {
      ++res.failures;
      if (res.first_failure.empty()) {
        res.first_failure = slot.label + ": analytic=" + std::to_string(slot.analytic) +
                            " numeric=" + std::to_string(numeric);
      }
    }
    res.worst_rel = std::max(res.worst_rel, scale > 0.0 && diff > abs_floor ? rel : 0.0);
  }
  return res;
}

// Same comparison for dL/d(input batch).
inline GradCheckResult check_input_gradients(mgpll::Matrix& input, const mgpll::Matrix& analytic,
                                             const std::function<double()>& loss, double step = 1e-5,
                                             double tol = 1e-4, double abs_floor = 1e-8) {
  GradCheckResult res;
  for (std::size_t i = 0; i < input.data().size(); ++i) {
    const double saved = input.data()[i];
    input.data()[i] = saved + step;
    const double up = loss();
    input.data()[i] = saved - step;
    const double down = loss();
    input.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.data()[i];
    const double diff = std::fabs(a - numeric);
    const double scale = std::max(std::fabs(a), std::fabs(numeric));
    ++res.checked;
    if (diff > tol * scale && diff > abs_floor) {
      ++res.failures;
      if (res.first_failure.empty()) {
        res.first_failure = "input[" + std::to_string(i) + "]: analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
      }
    }
    res.worst_rel = std::max(res.worst_rel, scale > 0.0 && diff > abs_floor ? diff / scale : 0.0);
  }
  return res;
}

// --- straight-line value closures for the five loss terms -------------------
// These recompute each term with tapeless forwards so the finite-difference
// probe never touches the backward implementation it validates.

// Classification loss value with the target's predictor input frozen at the
// base point (matching the stop-gradient routing contract).
inline double cls_value_frozen_target(mgpll::MgpllModel& m, const mgpll::Matrix& x, const mgpll::Matrix& y,
                                      const mgpll::Matrix& eps, const mgpll::Matrix& p_frozen) {
  using namespace mgpll;
  const Matrix gn_in = m.config.label_conditioned_noise ? hcat(p_frozen, eps) : eps;
  const Matrix noise = mlp_infer(m.noise_gen, gn_in, Mode::Train);
  const Matrix target = denoise(y, noise);
  const Matrix p = mlp_infer(m.predictor, x, Mode::Train);
  return mse(p, target);
}

inline double adv_label_value(mgpll::MgpllModel& m, const mgpll::Matrix& y, const mgpll::Matrix& z,
                              const mgpll::Matrix& eps) {
  using namespace mgpll;
  const Matrix gn_in = m.config.label_conditioned_noise ? hcat(z, eps) : eps;
  const Matrix noise = mlp_infer(m.noise_gen, gn_in, Mode::Train);
  const Matrix fake = augment(z, noise);
  return mean_all(mlp_infer(m.label_critic, y, Mode::Train)) - mean_all(mlp_infer(m.label_critic, fake, Mode::Train));
}

inline double adv_feature_value(mgpll::MgpllModel& m, const mgpll::Matrix& x, const mgpll::Matrix& z,
                                const mgpll::Matrix& eps) {
  using namespace mgpll;
  const Matrix fake = mlp_infer(m.feat_gen, hcat(z, eps), Mode::Train);
  return mean_all(mlp_infer(m.feat_critic, x, Mode::Train)) - mean_all(mlp_infer(m.feat_critic, fake, Mode::Train));
}

inline double generation_value(mgpll::MgpllModel& m, const mgpll::Matrix& x, const mgpll::Matrix& y,
                               const mgpll::Matrix& eps1, const mgpll::Matrix& eps2) {
  using namespace mgpll;
  const Matrix p = mlp_infer(m.predictor, x, Mode::Train);
  const Matrix gn_in = m.config.label_conditioned_noise ? hcat(p, eps1) : eps1;
  const Matrix noise = mlp_infer(m.noise_gen, gn_in, Mode::Train);
  const Matrix z = denoise(y, noise);
  const Matrix regen = mlp_infer(m.feat_gen, hcat(z, eps2), Mode::Train);
  return mse(regen, x);
}

inline double auxiliary_value(mgpll::MgpllModel& m, const mgpll::Matrix& z, const mgpll::Matrix& eps) {
  using namespace mgpll;
  const Matrix fake = mlp_infer(m.feat_gen, hcat(z, eps), Mode::Train);
  return cross_entropy(mlp_infer(m.predictor, fake, Mode::Train), z);
}

}  // namespace testsupport
