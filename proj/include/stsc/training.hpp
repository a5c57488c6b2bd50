// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stsc/corpus.hpp"
#include "stsc/error.hpp"
#include "stsc/evaluation.hpp"
#include "stsc/model.hpp"
#include "stsc/nn/tensor.hpp"
#include "stsc/random.hpp"

namespace stsc {

struct TrainConfig {
  double lr = 1e-4;
  double eps = 1e-7;
  bool rectify = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  int batch_size = 8;
  int max_epochs = 50;
  int patience = 10;
  int eval_repeats = kDefaultRepeats;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0)) fail(Errc::ConfigInvalid, "lr: must be > 0");
    if (!(eps > 0.0)) fail(Errc::ConfigInvalid, "eps: must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) fail(Errc::ConfigInvalid, "beta1: must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) fail(Errc::ConfigInvalid, "beta2: must be in [0, 1)");
    if (!(focal_alpha > 0.0 && focal_alpha < 1.0))
      fail(Errc::ConfigInvalid, "focal_alpha: must be in (0, 1)");
    if (!(focal_gamma >= 0.0)) fail(Errc::ConfigInvalid, "focal_gamma: must be >= 0");
    if (batch_size < 1) fail(Errc::ConfigInvalid, "batch_size: must be >= 1");
    if (max_epochs < 1) fail(Errc::ConfigInvalid, "max_epochs: must be >= 1");
    if (patience < 1) fail(Errc::ConfigInvalid, "patience: must be >= 1");
    if (eval_repeats < 1) fail(Errc::ConfigInvalid, "eval_repeats: must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"lr", lr},
            {"eps", eps},
            {"rectify", rectify},
            {"beta1", beta1},
            {"beta2", beta2},
            {"focal_alpha", focal_alpha},
            {"focal_gamma", focal_gamma},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"eval_repeats", eval_repeats},
            {"seed", seed}};
  }

  static TrainConfig from_json(const nlohmann::json &j) {
    TrainConfig c;
    auto num = [&](const char *key, double &dst) {
      if (!j.contains(key)) return;
      if (!j.at(key).is_number()) fail(Errc::ConfigInvalid, std::string(key) + ": expected a number");
      dst = j.at(key).get<double>();
    };
    auto integer = [&](const char *key, int &dst) {
      if (!j.contains(key)) return;
      if (!j.at(key).is_number_integer())
        fail(Errc::ConfigInvalid, std::string(key) + ": expected an integer");
      dst = j.at(key).get<int>();
    };
    num("lr", c.lr);
    num("eps", c.eps);
    num("beta1", c.beta1);
    num("beta2", c.beta2);
    num("focal_alpha", c.focal_alpha);
    num("focal_gamma", c.focal_gamma);
    integer("batch_size", c.batch_size);
    integer("max_epochs", c.max_epochs);
    integer("patience", c.patience);
    integer("eval_repeats", c.eval_repeats);
    if (j.contains("rectify")) {
      if (!j.at("rectify").is_boolean()) fail(Errc::ConfigInvalid, "rectify: expected a boolean");
      c.rectify = j.at("rectify").get<bool>();
    }
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
        fail(Errc::ConfigInvalid, "seed: expected a non-negative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Focal loss

inline constexpr double kProbClamp = 1e-7;

struct LossAndGrad {
  double loss = 0.0;
  double d_logit = 0.0;
};

/// Loss on a probability, clamped to [1e-7, 1 - 1e-7] before the log.
inline double focal_loss(double p, int y, double alpha = 0.25, double gamma = 2.0) {
  const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  if (y == 1)
    return -alpha * std::pow(1.0 - pc, gamma) * std::log(pc);
  return -(1.0 - alpha) * std::pow(pc, gamma) * std::log(1.0 - pc);
}

/// Loss and its derivative with respect to the pre-sigmoid logit. Inside the
/// clamped region the loss is constant and the derivative is zero.
inline LossAndGrad focal_loss_logit(double logit, int y, double alpha = 0.25, double gamma = 2.0) {
  const double p = nn::sigmoid(logit);
  LossAndGrad out;
  out.loss = focal_loss(p, y, alpha, gamma);
  if (p < kProbClamp || p > 1.0 - kProbClamp)
    return out;
  if (y == 1) {
    const double q = 1.0 - p;
    out.d_logit = alpha * std::pow(q, gamma) * (gamma * p * std::log(p) - q);
  } else {
    const double q = 1.0 - p;
    out.d_logit = (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * q * std::log(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rectified AdaBelief

/// Rectification degrees of freedom after `t` steps.
inline double adabelief_rho(std::int64_t t, double beta2) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(t));
  return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
}

/// Rectification factor r_t, or 0 while the variance estimate is not yet
/// trusted (rho_t <= 4).
inline double adabelief_rectifier(std::int64_t t, double beta2) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double rho = adabelief_rho(t, beta2);
  if (rho <= 4.0)
    return 0.0;
  return std::sqrt(((rho - 4.0) * (rho - 2.0) * rho_inf) /
                   ((rho_inf - 4.0) * (rho_inf - 2.0) * rho));
}

/// One update of every tensor. Moments live in double; `state` is sized on
/// first use. Nothing is modified when any gradient is non-finite.
template <typename T>
void adabelief_step(const std::vector<nn::Named<T>> &params, const std::vector<nn::Named<T>> &grads,
                    OptimizerState &state, const TrainConfig &cfg) {
  require(params.size() == grads.size(), Errc::ShapeMismatch, "parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].second->size() == grads[i].second->size(), Errc::ShapeMismatch,
            "gradient shape mismatch for " + params[i].first);
    if (!grads[i].second->allFinite())
      fail(Errc::NonFiniteGradient, "non-finite gradient in " + params[i].first);
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.s.clear();
    for (const auto &[_, p] : params) {
      state.m.emplace_back(static_cast<std::size_t>(p->size()), 0.0);
      state.s.emplace_back(static_cast<std::size_t>(p->size()), 0.0);
    }
  }
  state.step += 1;
  const std::int64_t t = state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const double r = cfg.rectify ? adabelief_rectifier(t, cfg.beta2) : 1.0;
  const bool adaptive = !cfg.rectify || r > 0.0;

  for (std::size_t i = 0; i < params.size(); ++i) {
    T *theta = params[i].second->data();
    const T *g = grads[i].second->data();
    auto &m = state.m[i];
    auto &s = state.s[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      const double dev = gj - m[j];
      s[j] = cfg.beta2 * s[j] + (1.0 - cfg.beta2) * dev * dev + cfg.eps;
      const double m_hat = m[j] / bc1;
      double update;
      if (adaptive) {
        const double s_hat = s[j] / bc2;
        update = cfg.lr * r * m_hat / (std::sqrt(s_hat) + cfg.eps);
      } else {
        update = cfg.lr * m_hat;
      }
      theta[j] = static_cast<T>(static_cast<double>(theta[j]) - update);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_pr_auc = 0.0;
  double best_so_far = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;

  std::string to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,val_pr_auc,best_so_far\n";
    char line[128];
    for (const auto &e : epochs) {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                    e.val_pr_auc, e.best_so_far);
      os << line;
    }
    return os.str();
  }
};

struct TrainResult {
  Checkpoint best;
  TrainHistory history;
  std::vector<ScoredSubject> val_scores; // held-out scores of the retained model
};

/// Hash of speaker ids, scores and analysed spectrogram bytes.
inline std::string corpus_fingerprint(const std::vector<SpeakerRecord> &records) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto &r : records) {
    h = detail::fnv1a(r.speaker_id, h);
    h = detail::fnv1a(std::to_string(r.phq8), h);
    for (const auto &rec : r.recordings) {
      h = detail::fnv1a(std::to_string(rec.frames), h);
      h = detail::fnv1a(std::string_view(reinterpret_cast<const char *>(rec.band_major.data()),
                                         rec.band_major.size() * sizeof(float)),
                        h);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename T>
std::vector<ScoredSubject> score_subjects(const Model<T> &model,
                                          const std::vector<const SpeakerRecord *> &subjects,
                                          int repeats, std::uint64_t seed) {
  std::vector<ScoredSubject> out;
  out.reserve(subjects.size());
  for (const auto *sp : subjects) {
    Rng rng(derive_seed(seed, detail::fnv1a(sp->speaker_id)));
    out.push_back({sp->speaker_id, predict_subject(model, *sp, repeats, rng), sp->label, sp->phq8});
  }
  return out;
}

using EpochCallback = std::function<void(const EpochRecord &)>;

/// Train on every fold except `fold`, validate on `fold`, keep the best
/// validation PR-AUC checkpoint, stop after `patience` epochs without
/// improvement.
inline TrainResult train(const ModelConfig &config, const std::vector<SpeakerRecord> &corpus,
                         const FoldPlan &plan, int fold, const TrainConfig &cfg,
                         const EpochCallback &on_epoch = {}) {
  config.validate_shapes();
  cfg.validate();
  require(fold >= 0 && fold < plan.k, Errc::InvalidArgument, "fold index out of range");
  const auto train_set = select_fold(corpus, plan, fold, false);
  const auto val_set = select_fold(corpus, plan, fold, true);
  require(!train_set.empty() && !val_set.empty(), Errc::TooFewSpeakers, "empty fold split");

  const std::uint64_t run_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(fold));
  Model<float> model = init_model<float>(config, run_seed);
  ModelParams<float> grads = model.params.zeros_like();
  OptimizerState opt;

  TrainResult result;
  result.best.meta.seed = cfg.seed;
  result.best.meta.fold = fold;
  result.best.meta.corpus_fingerprint = corpus_fingerprint(corpus);
  double best = -1.0;
  int since_best = 0;
  const int n = config.n_fragments;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng(derive_seed(run_seed, 0x10000 + static_cast<std::uint64_t>(epoch)));
    std::vector<const SpeakerRecord *> order = train_set;
    shuffle_in_place(order, rng);

    double loss_sum = 0.0;
    ForwardCache<float> cache;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      grads.set_zero();
      for (std::size_t b = start; b < stop; ++b) {
        const SpeakerRecord &sp = *order[b];
        std::vector<nn::Mat<float>> inputs;
        inputs.reserve(static_cast<std::size_t>(n));
        for (std::size_t idx : sample_fragment_indices(sp, n, rng))
          inputs.push_back(fragment_input<float>(sp.fragment(sp.fragments[idx])));
        const float logit = forward_logit(model, inputs, nn::Mode::Train, &rng, &cache);
        const auto lg = focal_loss_logit(logit, sp.label, cfg.focal_alpha, cfg.focal_gamma);
        loss_sum += lg.loss;
        backward(model, static_cast<float>(lg.d_logit * scale), cache, grads);
      }
      adabelief_step(model.params.tensors(), grads.tensors(), opt, cfg);
    }

    auto scores = score_subjects(model, val_set, cfg.eval_repeats, derive_seed(run_seed, 0x7A1));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_pr_auc = pr_auc(scores);
    if (rec.val_pr_auc > best) {
      best = rec.val_pr_auc;
      since_best = 0;
      result.history.best_epoch = epoch;
      result.best.model = model;
      result.best.optimizer = opt;
      result.best.meta.epoch = epoch;
      result.best.meta.val_pr_auc = best;
      result.val_scores = std::move(scores);
    } else {
      ++since_best;
    }
    rec.best_so_far = best;
    result.history.epochs.push_back(rec);
    if (on_epoch)
      on_epoch(rec);
    if (since_best >= cfg.patience)
      break;
  }
  return result;
}

} // namespace stsc
