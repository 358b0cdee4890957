#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "mgpll/dataset.hpp"
#include "mgpll/detail/text.hpp"
#include "mgpll/model.hpp"

namespace mgpll {

enum class AblationVariant { Full, NoAdvN, NoAdvX, NoGen, NoAux, ClsOnly };

// Which loss terms participate in a training objective. The classification
// loss is part of every variant.
struct TermMask {
  bool cls = true;
  bool adv_label = true;
  bool adv_feature = true;
  bool generation = true;
  bool auxiliary = true;

  int active_count() const {
    return int(cls) + int(adv_label) + int(adv_feature) + int(generation) + int(auxiliary);
  }
  friend bool operator==(const TermMask&, const TermMask&) = default;
};

inline TermMask build_ablation_objective(AblationVariant v) {
  TermMask m;
  switch (v) {
    case AblationVariant::Full:
      break;
    case AblationVariant::NoAdvN:
      m.adv_label = false;
      break;
    case AblationVariant::NoAdvX:
      m.adv_feature = false;
      break;
    case AblationVariant::NoGen:
      m.generation = false;
      break;
    case AblationVariant::NoAux:
      m.auxiliary = false;
      break;
    case AblationVariant::ClsOnly:
      m.adv_label = m.adv_feature = m.generation = m.auxiliary = false;
      break;
  }
  return m;
}

inline const char* variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::Full: return "full";
    case AblationVariant::NoAdvN: return "no-advn";
    case AblationVariant::NoAdvX: return "no-advx";
    case AblationVariant::NoGen: return "no-gen";
    case AblationVariant::NoAux: return "no-aux";
    case AblationVariant::ClsOnly: return "cls";
  }
  return "?";
}

inline std::optional<AblationVariant> parse_variant(std::string_view s) {
  if (s == "full") return AblationVariant::Full;
  if (s == "no-advn") return AblationVariant::NoAdvN;
  if (s == "no-advx") return AblationVariant::NoAdvX;
  if (s == "no-gen") return AblationVariant::NoGen;
  if (s == "no-aux") return AblationVariant::NoAux;
  if (s == "cls") return AblationVariant::ClsOnly;
  return std::nullopt;
}

struct TrainConfig {
  int batch_size = 32;
  int epochs = 200;
  double lr_gen = 5e-5;     // noise generator, feature generator, predictor
  double lr_critic = 5e-5;  // both critics
  int critic_steps = 1;
  double clip_c = 0.01;
  std::vector<double> grid = {0.001, 0.01, 0.1, 1.0, 10.0};
  bool full_grid = false;  // default: coordinate descent over the grid
  std::uint64_t seed = 0;
  bool early_stop = true;
  double early_stop_tol = 1e-5;
  int early_stop_window = 20;

  void validate() const {
    if (batch_size < 2) throw InvalidArgument("TrainConfig: batch_size must be at least 2");
    if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be at least 1");
    if (critic_steps < 1) throw InvalidArgument("TrainConfig: critic_steps must be at least 1");
    if (!(lr_gen > 0.0 && lr_critic > 0.0)) throw InvalidArgument("TrainConfig: learning rates must be positive");
    if (!(clip_c > 0.0)) throw InvalidArgument("TrainConfig: clip_c must be positive");
    if (early_stop && early_stop_window < 1) throw InvalidArgument("TrainConfig: early_stop_window must be positive");
  }
};

// Per-epoch mean loss terms. Adversarial entries hold the critic values
// sampled during the critic phase; the alpha/beta/gamma weights are already
// applied to their columns. Dropped terms log exactly 0.
struct EpochRecord {
  int epoch = 0;
  double loss_cls = 0.0;
  double loss_adv_label = 0.0;
  double loss_adv_feature_weighted = 0.0;
  double loss_gen_weighted = 0.0;
  double loss_aux_weighted = 0.0;
  double total = 0.0;
  double wall_seconds = 0.0;  // in-memory only; excluded from the CSV so logs stay reproducible
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::string checkpoint_ref;  // path of the saved checkpoint, when one was written

  std::string to_csv() const {
    std::string out;
    if (!checkpoint_ref.empty()) out += "# checkpoint: " + checkpoint_ref + "\n";
    out += "epoch,loss_cls,loss_adv_label,loss_adv_feature_weighted,loss_gen_weighted,loss_aux_weighted,total\n";
    for (const auto& e : epochs) {
      out += std::to_string(e.epoch);
      for (double v : {e.loss_cls, e.loss_adv_label, e.loss_adv_feature_weighted, e.loss_gen_weighted,
                       e.loss_aux_weighted, e.total}) {
        out += ',';
        out += detail::format_double(v);
      }
      out += '\n';
    }
    return out;
  }
};

struct TrainResult {
  MgpllModel model;
  TrainLog log;
  std::string sampler_rng_state;
  std::string shuffle_rng_state;
};

namespace detail {

// Shuffled index stream with wraparound: datasets smaller than the batch size
// are re-shuffled and continued, so every batch has exactly m rows.
class BatchSampler {
 public:
  BatchSampler(int n, Rng& rng) : order_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), 0);
    rng_.shuffle(order_);
  }
  void next(int m, std::vector<int>& out) {
    out.clear();
    for (int t = 0; t < m; ++t) {
      if (cursor_ == order_.size()) {
        rng_.shuffle(order_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
  }

 private:
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  Rng& rng_;
};

// P_z refresh: empirical class frequencies of the current denoised-label
// argmaxes over the full training set.
inline void refresh_label_prior(MgpllModel& model, const PlDataset& ds, PriorSampler& sampler) {
  const Matrix p = mlp_infer(model.predictor, ds.features, Mode::Eval);
  const Matrix eps = sampler.sample_noise(ds.size());
  const Matrix noise = mlp_infer(model.noise_gen, noise_gen_input(model, p, eps), Mode::Eval);
  const Matrix z = denoise(ds.candidates, noise);
  std::vector<double> counts(ds.label_count(), 0.0);
  for (int i = 0; i < z.rows(); ++i) counts[argmax_row(z.row(i))] += 1.0;
  sampler.set_label_weights(std::move(counts));
}

inline void check_finite_term(double v, const char* term, int epoch, int iter) {
  if (!std::isfinite(v)) {
    throw NumericError("train: non-finite " + std::string(term) + " at epoch " + std::to_string(epoch) +
                       " iteration " + std::to_string(iter));
  }
}

}  // namespace detail

// Algorithm: per iteration, sample a minibatch plus (eps, z) from the priors;
// ascend both critics on the adversarial values (the feature term scaled by
// alpha) and clip them to [-c, c]; resample eps_bar and descend the
// generators and predictor on the masked objective. The noise generator draws
// reuse eps, the feature generator draws use eps_bar. RNG consumption order
// per run: model init, then per iteration [batch indices | eps | z |
// (extra critic-step eps) | eps_bar], then one full-set eps block per epoch
// for the label-prior refresh.
inline TrainResult train(const PlDataset& ds, AblationVariant variant, const TrainConfig& tcfg,
                         const MgpllConfig& mcfg) {
  tcfg.validate();
  mcfg.validate();
  validate_dataset(ds, "train");
  if (!features_normalized(ds)) {
    throw InvalidArgument("train: dataset features must be normalized to [-1,1] (see normalize_features)");
  }

  const int n = ds.size();
  const int m = tcfg.batch_size;
  const TermMask mask = build_ablation_objective(variant);
  MgpllConfig cfg = mcfg;
  cfg.clip_c = tcfg.clip_c;  // the training-time bound is the one the model records

  Rng master(tcfg.seed);
  MgpllModel model = make_model(ds.feature_dim(), ds.label_count(), cfg, master);
  PriorSampler sampler(ds.label_count(), cfg.noise_dim, master.next());
  Rng shuffle_rng(master.next());
  detail::BatchSampler batches(n, shuffle_rng);

  const int iters_per_epoch = (n + m - 1) / m;
  TrainLog log;
  std::vector<int> idx;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto wall_start = std::chrono::steady_clock::now();
    double sum_cls = 0.0, sum_advn = 0.0, sum_advx = 0.0, sum_gen = 0.0, sum_aux = 0.0;

    for (int iter = 1; iter <= iters_per_epoch; ++iter) {
      try {
      batches.next(m, idx);
      const Matrix x = take_rows(ds.features, idx);
      const Matrix y = take_rows(ds.candidates, idx);
      const Matrix eps = sampler.sample_noise(m);
      const Matrix z = sampler.sample_labels(m);

      // -- critic ascent + clipping --
      double advn_val = 0.0, advx_val = 0.0;
      for (int step = 0; step < tcfg.critic_steps; ++step) {
        const Matrix eps_step = step == 0 ? eps : sampler.sample_noise(m);
        if (mask.adv_label) {
          auto adv = loss_adv_label_at(model, y, z, eps_step);
          if (step == 0) advn_val = adv.value;
          rmsprop_step(model.label_critic, adv.critic_grads, tcfg.lr_critic, cfg.rms_decay, cfg.rms_eps,
                       StepDirection::Ascent);
        }
        if (mask.adv_feature) {
          auto adv = loss_adv_feature_at(model, x, z, eps_step);
          if (step == 0) advx_val = adv.value;
          adv.critic_grads.scale(cfg.alpha);
          rmsprop_step(model.feat_critic, adv.critic_grads, tcfg.lr_critic, cfg.rms_decay, cfg.rms_eps,
                       StepDirection::Ascent);
        }
        clip_parameters(model.label_critic, tcfg.clip_c);
        clip_parameters(model.feat_critic, tcfg.clip_c);
      }
      // always-on invariant: critic parameters never exceed the clip bound
      if (max_abs_parameter(model.label_critic) > tcfg.clip_c || max_abs_parameter(model.feat_critic) > tcfg.clip_c) {
        throw std::logic_error("train: critic parameter exceeds clip bound after clipping");
      }

      // -- generator/predictor descent --
      const Matrix eps_bar = sampler.sample_noise(m);
      auto cls = loss_classification_at(model, x, y, eps);
      double cls_val = cls.value;
      MlpGrads g_pred = std::move(cls.predictor_grads);
      MlpGrads g_noise = std::move(cls.noise_gen_grads);
      MlpGrads g_feat;
      bool feat_gen_touched = false;
      double gen_val = 0.0, aux_val = 0.0;

      if (mask.adv_label) {
        auto adv = loss_adv_label_at(model, y, z, eps);
        g_noise.add_scaled(adv.generator_grads, 1.0);
      }
      if (mask.adv_feature) {
        auto adv = loss_adv_feature_at(model, x, z, eps_bar);
        g_feat = std::move(adv.generator_grads);
        g_feat.scale(cfg.alpha);
        feat_gen_touched = true;
      }
      if (mask.generation) {
        auto gen = loss_generation_at(model, x, y, eps, eps_bar);
        gen_val = gen.value;
        if (!feat_gen_touched) {
          g_feat = zeros_like(model.feat_gen);
          feat_gen_touched = true;
        }
        g_feat.add_scaled(gen.feat_gen_grads, cfg.beta);
        g_noise.add_scaled(gen.noise_gen_grads, cfg.beta);
        g_pred.add_scaled(gen.predictor_grads, cfg.beta);
      }
      if (mask.auxiliary) {
        auto aux = loss_auxiliary_at(model, z, eps_bar);
        aux_val = aux.value;
        if (!feat_gen_touched) {
          g_feat = zeros_like(model.feat_gen);
          feat_gen_touched = true;
        }
        g_feat.add_scaled(aux.feat_gen_grads, cfg.gamma);
        g_pred.add_scaled(aux.predictor_grads, cfg.gamma);
      }

      try {
        rmsprop_step(model.noise_gen, g_noise, tcfg.lr_gen, cfg.rms_decay, cfg.rms_eps, StepDirection::Descent);
        if (feat_gen_touched) {
          rmsprop_step(model.feat_gen, g_feat, tcfg.lr_gen, cfg.rms_decay, cfg.rms_eps, StepDirection::Descent);
        }
        rmsprop_step(model.predictor, g_pred, tcfg.lr_gen, cfg.rms_decay, cfg.rms_eps, StepDirection::Descent);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " iteration " + std::to_string(iter) + ": " +
                           e.what());
      }

      detail::check_finite_term(cls_val, "classification loss", epoch, iter);
      detail::check_finite_term(advn_val, "label adversarial value", epoch, iter);
      detail::check_finite_term(advx_val, "feature adversarial value", epoch, iter);
      detail::check_finite_term(gen_val, "generation loss", epoch, iter);
      detail::check_finite_term(aux_val, "auxiliary loss", epoch, iter);

      sum_cls += cls_val;
      sum_advn += advn_val;
      sum_advx += cfg.alpha * advx_val;
      sum_gen += cfg.beta * gen_val;
      sum_aux += cfg.gamma * aux_val;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_cls = sum_cls / iters_per_epoch;
    rec.loss_adv_label = sum_advn / iters_per_epoch;
    rec.loss_adv_feature_weighted = sum_advx / iters_per_epoch;
    rec.loss_gen_weighted = sum_gen / iters_per_epoch;
    rec.loss_aux_weighted = sum_aux / iters_per_epoch;
    rec.total = rec.loss_cls + rec.loss_adv_label + rec.loss_adv_feature_weighted + rec.loss_gen_weighted +
                rec.loss_aux_weighted;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    log.epochs.push_back(rec);

    detail::refresh_label_prior(model, ds, sampler);

    if (tcfg.early_stop && epoch > tcfg.early_stop_window) {
      const double before = log.epochs[epoch - 1 - tcfg.early_stop_window].loss_cls;
      if (std::fabs(rec.loss_cls - before) < tcfg.early_stop_tol) break;
    }
  }

  return {std::move(model), std::move(log), sampler.rng.state_string(), shuffle_rng.state_string()};
}

struct GridPoint {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double final_loss_cls = 0.0;
};

struct HyperparamSelection {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  std::vector<GridPoint> evaluated;  // every trained grid point, in evaluation order
};

// Picks the (alpha, beta, gamma) grid point whose trained model attains the
// smallest final training classification loss; ties break to the
// lexicographically smallest triple. Full grid trains |grid|^3 points;
// coordinate descent (the default) sweeps one coordinate at a time from the
// smallest grid value, at most 3*|grid| trainings.
inline HyperparamSelection select_hyperparameters(const PlDataset& ds, const TrainConfig& tcfg,
                                                  const MgpllConfig& base) {
  if (tcfg.grid.empty()) throw InvalidArgument("select_hyperparameters: empty grid");
  std::vector<double> grid = tcfg.grid;
  std::sort(grid.begin(), grid.end());

  HyperparamSelection sel;
  if (grid.size() == 1) {
    sel.alpha = sel.beta = sel.gamma = grid[0];
    return sel;  // a singleton grid is forced; no training needed
  }

  std::map<std::tuple<double, double, double>, double> memo;
  auto eval_point = [&](double a, double b, double g) {
    const auto key = std::make_tuple(a, b, g);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    MgpllConfig cfg = base;
    cfg.alpha = a;
    cfg.beta = b;
    cfg.gamma = g;
    const TrainResult r = train(ds, AblationVariant::Full, tcfg, cfg);
    const double lc = r.log.epochs.back().loss_cls;
    memo.emplace(key, lc);
    sel.evaluated.push_back({a, b, g, lc});
    return lc;
  };

  if (tcfg.full_grid) {
    for (double a : grid) {
      for (double b : grid) {
        for (double g : grid) eval_point(a, b, g);
      }
    }
  } else {
    double a = grid[0], b = grid[0], g = grid[0];
    for (int coord = 0; coord < 3; ++coord) {
      double best_v = grid[0];
      double best_lc = std::numeric_limits<double>::infinity();
      for (double v : grid) {
        const double lc = coord == 0 ? eval_point(v, b, g) : coord == 1 ? eval_point(a, v, g) : eval_point(a, b, v);
        if (lc < best_lc) {
          best_lc = lc;
          best_v = v;
        }
      }
      (coord == 0 ? a : coord == 1 ? b : g) = best_v;
    }
  }

  // winner: smallest loss, then lexicographically smallest triple
  const GridPoint* best = nullptr;
  for (const auto& p : sel.evaluated) {
    if (!best || p.final_loss_cls < best->final_loss_cls ||
        (p.final_loss_cls == best->final_loss_cls &&
         std::make_tuple(p.alpha, p.beta, p.gamma) < std::make_tuple(best->alpha, best->beta, best->gamma))) {
      best = &p;
    }
  }
  sel.alpha = best->alpha;
  sel.beta = best->beta;
  sel.gamma = best->gamma;
  return sel;
}

}  // namespace mgpll
