#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fcdx/cohort.hpp"
#include "fcdx/metrics.hpp"
#include "fcdx/model.hpp"

namespace fcdx {

struct InferOptions {
  int n_samples = 10;
  std::uint64_t seed = 0;
  bool want_cam = false;
};

struct InferResult {
  bool refused = false;
  double estimated_volume = 0;
  double p_b = 0, p_m = 0, div = 0;
  std::vector<std::array<float, 5>> logit_rows;  // one per latent draw
  std::vector<std::array<float, 5>> prob_rows;   // full softmax of each row
  Tensor seg_mean;                               // [S,S,S] mean voxel probability
  CloudSelection cloud;
  Tensor cam;  // [S,S,S], defined only when requested
};

// Monte-Carlo diagnosis of one crop: trunk runs once, the heads once per
// latent draw; refusal is decided on the sample-mean segmentation. The
// stream overload lets callers hand each record its own substream.
InferResult run_inference(const Model& model, const Tensor& crop, const InferOptions& opts,
                          RandomStream stream);
InferResult run_inference(const Model& model, const Tensor& crop, const InferOptions& opts);

struct RecordResult {
  std::string id;
  int fold = 0;
  int label = -1;  // 0 benign, 1 malignant, -1 indeterminate consensus
  bool refused = false;
  double p_b = 0, p_m = 0, div = 0, dice = 0;
};

struct FoldReport {
  int fold = -1;  // -1 marks the pooled report
  std::optional<double> auc;
  std::optional<double> accuracy;
  std::optional<double> mean_dice;
  int refusals = 0;
  int evaluated = 0;  // records with a usable consensus label
  Histogram div_hist;
};

struct EvalReport {
  std::vector<FoldReport> folds;
  FoldReport pooled;
  std::vector<RecordResult> rows;
};

struct EvalOptions {
  int n_samples = 10;
  std::uint64_t seed = 0;
};

// Consensus label from the rater ratings: below-3 mean benign, above-3
// malignant, exactly 3 indeterminate (excluded from the metrics).
int consensus_label(const NoduleRecord& rec);

// Scores the records of one fold with an already-loaded model.
std::vector<RecordResult> evaluate_fold_records(const Model& model,
                                                const std::vector<NoduleRecord>& records,
                                                const std::string& data_dir, int fold,
                                                const EvalOptions& opts);

FoldReport summarize_records(const std::vector<RecordResult>& rows, int fold);

// Cross-validated protocol: for each fold, load that fold's checkpoint from
// ckpt_dir (fold{k}_best.dspc, falling back to fold{k}_final.dspc) and score
// the fold's records.
EvalReport evaluate_cohort(const std::string& manifest_path, const std::string& ckpt_dir,
                           const ModelConfig& mc, const EvalOptions& opts);

// report.json plus a per-record CSV next to it (same stem, .csv).
void write_eval_report(const EvalReport& report, const std::string& json_path);

std::string eval_csv_path(const std::string& json_path);

}  // namespace fcdx
