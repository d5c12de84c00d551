#pragma once

#include "xview/bench/matrix.hpp"
#include "xview/datagen/corpus.hpp"
#include "xview/training/trainer.hpp"

namespace xview::bench {

struct AblationTraining {
  datagen::CorpusOptions corpus;
  policy::ModelConfig model = policy::bench_config();
  training::TrainConfig train;
  std::vector<training::Ablation> variants{training::Ablation::bc_only, training::Ablation::bc_vis,
                                           training::Ablation::full};
  std::function<void(training::Ablation, const training::StepMetrics&)> on_step;

  AblationTraining() {
    corpus.seed = 1;
    corpus.episodes = 300;
    train.max_steps = 3000;
  }
};

using AblationModels = std::map<training::Ablation, std::shared_ptr<const policy::Policy<float>>>;

/// Trains one model per variant from the same corpus, initialisation and
/// batch order; only the auxiliary terms differ.
inline AblationModels train_ablation_models(const std::vector<training::TrainingClip>& clips,
                                            const AblationTraining& opt) {
  AblationModels out;
  for (auto a : opt.variants) {
    auto model = std::make_shared<policy::Policy<float>>(opt.model);
    auto cfg = opt.train;
    cfg.ablation = a;
    training::Trainer<float> trainer(*model, clips, cfg);
    trainer.run([&](const training::StepMetrics& m) {
      if (opt.on_step) opt.on_step(a, m);
    });
    out[a] = std::move(model);
  }
  return out;
}

inline AblationModels train_ablation_models(const AblationTraining& opt) {
  const auto clips = training::compact_clips(datagen::generate_corpus(opt.corpus), opt.model);
  return train_ablation_models(clips, opt);
}

}  // namespace xview::bench
