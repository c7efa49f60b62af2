#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fcdx/cohort.hpp"
#include "fcdx/model.hpp"

namespace fcdx {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 8;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float dice_weight = 0.2f;
  std::uint64_t seed = 0;
  std::string scheme = "high";  // "low" keeps confidently-rated records only
  int fold = 0;                 // held-out fold, excluded from training
  std::string resume;           // optional checkpoint to continue from
};

// Flat key=value file, '#' comments. Unknown keys are rejected so typos
// cannot silently fall back to defaults.
TrainConfig parse_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& tc);

struct Adam {
  float lr = 1e-3f, beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  std::int64_t step_count = 0;
  std::vector<Tensor> m, v;

  explicit Adam(const ParamSetT<float>& ps, const TrainConfig& tc);
  void step(ParamSetT<float>& ps);
};

// One fully prepared example: augmented crop, the chosen rater's mask and
// rating, and the stream that will supply its latent draw.
struct TrainExample {
  Tensor image;  // [S,S,S]
  Tensor mask;   // [S,S,S] binary
  int rating = 0;
  RandomStream noise{0};
};

struct BatchStats {
  int batch = 0;
  int refusals = 0;
  int correct = 0;      // argmax rating hits among non-refused
  double ce_sum = 0;    // summed cross-entropy over non-refused
  double dice_sum = 0;  // summed dice loss over the whole batch
  bool redone = false;  // denominator misprediction forced a second pass
};

// Accumulates gradients over the batch and applies one optimizer step.
// Cross-entropy is averaged over the examples that were not refused; the
// dice term is averaged over all of them.
BatchStats train_batch(Model& model, const std::vector<TrainExample>& batch, Adam& opt,
                       float dice_weight);

struct EpochRow {
  int epoch = 0;
  std::int64_t step = 0;  // optimizer steps completed so far
  double total_loss = 0, cls_loss = 0, dice_loss = 0;
  std::int64_t refusals = 0;
  double train_acc = 0;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  std::string final_path, best_path, metrics_path;
};

// Scheme filter: "high" keeps everything; "low" keeps records with at least
// three readings whose mean rating is not exactly 3.
std::vector<NoduleRecord> filter_scheme(const std::vector<NoduleRecord>& records,
                                        const std::string& scheme);

// Full training loop over the non-held-out folds of a manifest. Writes
// metrics.csv plus fold{k}_best / fold{k}_final checkpoints into out_dir.
// Deterministic in (config, manifest bytes).
TrainResult run_training(const std::string& manifest_path, const TrainConfig& tc,
                         const ModelConfig& mc, const std::string& out_dir);

}  // namespace fcdx
