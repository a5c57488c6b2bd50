// SPDX-License-Identifier: Apache-2.0
//
// End to end on a small synthetic cohort: synthesize, split, train one fold,
// score the held-out speakers and cluster encoder features.

#include <cstdio>

#include "stsc/stsc.hpp"

int main() {
  using namespace stsc;

  SynthSpec spec;
  spec.n_speakers = 18;
  spec.seed = 1;
  const auto corpus = synth_records(spec);
  std::printf("%zu speakers, %d depressed\n", corpus.size(), count_depressed(corpus));

  // a small encoder keeps this to a few seconds; the defaults are the full-size model
  ModelConfig model;
  model.encoder = EncoderType::CnnGru;
  model.kernel_size = 5;
  model.n_fragments = 5;
  model.n_filters = 16;
  model.rnn_hidden = 16;
  model.feature_dim = 16;
  model.head_hidden = 16;

  TrainConfig cfg;
  cfg.seed = 1;
  cfg.max_epochs = 15;
  cfg.lr = 1e-2;

  const auto plan = make_folds(corpus, 3, cfg.seed);
  const auto result = train(model, corpus, plan, 0, cfg, [](const EpochRecord &e) {
    std::printf("epoch %2d  loss %.4f  val PR-AUC %.4f\n", e.epoch, e.train_loss, e.val_pr_auc);
  });

  const auto best = best_f1(pr_curve(result.val_scores));
  std::printf("held-out PR-AUC %.4f, best F1 %.3f (P %.3f, R %.3f)\n", pr_auc(result.val_scores), best.f1,
              best.precision, best.recall);

  Rng rng(derive_seed(cfg.seed, 5));
  const auto features = extract_features(result.best, corpus, 200, rng);
  const auto km = kmeans(features.vectors, 3, 10, cfg.seed);
  std::fputs(cluster_composition(km, features.labels, cfg.seed, 10).to_text().c_str(), stdout);
}
