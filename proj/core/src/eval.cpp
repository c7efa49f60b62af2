#include "fcdx/eval.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fcdx {

InferResult run_inference(const Model& model, const Tensor& crop, const InferOptions& opts,
                          RandomStream stream) {
  if (opts.n_samples < 1) throw config_error("n-samples must be positive");
  const int S = model.cfg.input_size;
  Tensor img = crop;
  if (img.ndim() == 3) img = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  auto x = make_const(img);
  auto bb = model.backbone(x, false);
  auto pr = model.prior(x, false);

  InferResult out;
  const std::int64_t voxels = static_cast<std::int64_t>(S) * S * S;
  std::vector<double> seg_acc(static_cast<size_t>(voxels), 0.0);
  std::vector<Tensor> draws;
  draws.reserve(static_cast<size_t>(opts.n_samples));
  for (int j = 0; j < opts.n_samples; ++j) {
    auto f = reparameterize(pr.mu, pr.log_var,
                            stream.child("sample").child(static_cast<std::uint64_t>(j)));
    draws.push_back(f->value);
    auto probs = sigmoid(model.heads.seg(bb.seg_pre, f));
    const float* p = probs->value.data();
    for (std::int64_t i = 0; i < voxels; ++i) seg_acc[static_cast<size_t>(i)] += p[i];
  }
  out.seg_mean = Tensor({S, S, S});
  for (std::int64_t i = 0; i < voxels; ++i)
    out.seg_mean[i] = static_cast<float>(seg_acc[static_cast<size_t>(i)] / opts.n_samples);

  out.cloud = select_predicted(out.seg_mean, model.cfg.cloud_max_points, model.cfg.refusal_volume);
  out.estimated_volume = out.cloud.estimated_volume;
  if (out.cloud.refused) {
    out.refused = true;
    if (opts.want_cam) out.cam = Tensor({S, S, S});
    return out;
  }

  auto cloud = gather_cloud(bb.cls_features, out.cloud);
  auto stacked = model.nsam.stack(cloud);
  auto rep = model.nsam.mlp(global_mean_rows(stacked));
  out.logit_rows.reserve(draws.size());
  out.prob_rows.reserve(draws.size());
  for (const auto& fv : draws) {
    auto logits = model.heads.cls(rep, make_const(fv.clone()));
    std::array<float, 5> row;
    for (int c = 0; c < 5; ++c) row[static_cast<size_t>(c)] = logits->value[c];
    out.logit_rows.push_back(row);
    auto p = softmax5(row);
    std::array<float, 5> pf;
    for (int c = 0; c < 5; ++c) pf[static_cast<size_t>(c)] = static_cast<float>(p[static_cast<size_t>(c)]);
    out.prob_rows.push_back(pf);
  }
  auto agg = aggregate_binary(out.logit_rows);
  out.p_b = agg.p_b;
  out.p_m = agg.p_m;
  out.div = diversity(out.prob_rows);

  if (opts.want_cam) {
    out.cam = Tensor({S, S, S});
    auto reps = model.nsam.mlp_rows(stacked);
    auto lrows = model.heads.cls_rows(reps, make_const(draws[0].clone()));
    for (size_t i = 0; i < out.cloud.indices.size(); ++i) {
      std::array<float, 5> row;
      for (int c = 0; c < 5; ++c)
        row[static_cast<size_t>(c)] = lrows->value[static_cast<std::int64_t>(i) * 5 + c];
      auto p = softmax5(row);
      out.cam[out.cloud.indices[i]] = static_cast<float>(p[3] + p[4]);
    }
  }
  return out;
}

InferResult run_inference(const Model& model, const Tensor& crop, const InferOptions& opts) {
  return run_inference(model, crop, opts, RandomStream(opts.seed));
}

int consensus_label(const NoduleRecord& rec) {
  int sum = 0;
  for (const auto& a : rec.annotations) sum += a.rating;
  int n = static_cast<int>(rec.annotations.size());
  if (sum < 3 * n) return 0;
  if (sum > 3 * n) return 1;
  return -1;
}

std::vector<RecordResult> evaluate_fold_records(const Model& model,
                                                const std::vector<NoduleRecord>& records,
                                                const std::string& data_dir, int fold,
                                                const EvalOptions& opts) {
  std::vector<RecordResult> rows;
  const int S = model.cfg.input_size;
  for (const auto& rec : records) {
    if (rec.fold != fold) continue;
    int label = consensus_label(rec);
    if (label < 0) continue;  // indeterminate consensus: not part of the protocol
    Volume img = read_volume(data_dir + "/" + rec.crop_path);
    if (img.data.ndim() != 3 || img.data.dim(0) != S || img.data.dim(1) != S || img.data.dim(2) != S)
      throw data_error("record " + rec.id + ": crop is " + shape_str(img.data.shape()) +
                       ", expected [" + std::to_string(S) + "]^3");
    RandomStream rrs = RandomStream(opts.seed).child(rec.id);
    InferOptions io;
    io.n_samples = opts.n_samples;
    InferResult r = run_inference(model, img.data, io, rrs.child("infer"));

    RecordResult row;
    row.id = rec.id;
    row.fold = fold;
    row.label = label;
    row.refused = r.refused;
    if (!r.refused) {
      row.p_b = r.p_b;
      row.p_m = r.p_m;
      row.div = r.div;
      int pick = static_cast<int>(
          rrs.child("mask").uniform_int(static_cast<std::uint64_t>(rec.annotations.size())));
      Volume mv = read_volume(data_dir + "/" + rec.annotations[static_cast<size_t>(pick)].mask_path);
      if (!mv.data.same_shape(img.data))
        throw data_error("record " + rec.id + ": mask shape " + shape_str(mv.data.shape()) +
                         " differs from crop");
      Tensor pred({S, S, S});
      for (std::int64_t i = 0; i < pred.numel(); ++i) pred[i] = r.seg_mean[i] >= 0.5f ? 1.0f : 0.0f;
      row.dice = dice_coefficient(pred, mv.data);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

FoldReport summarize_records(const std::vector<RecordResult>& rows, int fold) {
  FoldReport rep;
  rep.fold = fold;
  rep.evaluated = static_cast<int>(rows.size());
  std::vector<std::pair<double, int>> scored;
  std::vector<double> divs;
  std::int64_t correct = 0, kept = 0;
  double dice_sum = 0;
  for (const auto& r : rows) {
    if (r.refused) {
      ++rep.refusals;
      continue;
    }
    ++kept;
    scored.emplace_back(r.p_m, r.label);
    divs.push_back(r.div);
    correct += (r.p_m > 0.5 ? 1 : 0) == r.label;
    dice_sum += r.dice;
  }
  if (kept > 0) {
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(kept);
    rep.mean_dice = dice_sum / static_cast<double>(kept);
    rep.auc = auc_midrank(scored);
  }
  rep.div_hist = div_histogram(divs);
  return rep;
}

EvalReport evaluate_cohort(const std::string& manifest_path, const std::string& ckpt_dir,
                           const ModelConfig& mc, const EvalOptions& opts) {
  auto records = load_manifest(manifest_path);
  const std::string dir = manifest_dir(manifest_path);
  EvalReport report;
  for (int k = 0; k < 5; ++k) {
    std::string best = ckpt_dir + "/fold" + std::to_string(k) + "_best.dspc";
    std::string final_ = ckpt_dir + "/fold" + std::to_string(k) + "_final.dspc";
    std::string path;
    if (std::filesystem::exists(best)) path = best;
    else if (std::filesystem::exists(final_)) path = final_;
    else
      throw config_error("no checkpoint for fold " + std::to_string(k) + " in " + ckpt_dir);
    Model model(mc);
    restore_weights(load_checkpoint(path), model.params);
    auto rows = evaluate_fold_records(model, records, dir, k, opts);
    report.folds.push_back(summarize_records(rows, k));
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  report.pooled = summarize_records(report.rows, -1);
  return report;
}

namespace {

nlohmann::json fold_json(const FoldReport& f) {
  nlohmann::json o;
  o["auc"] = f.auc ? nlohmann::json(*f.auc) : nlohmann::json(nullptr);
  o["accuracy"] = f.accuracy ? nlohmann::json(*f.accuracy) : nlohmann::json(nullptr);
  o["mean_dice"] = f.mean_dice ? nlohmann::json(*f.mean_dice) : nlohmann::json(nullptr);
  o["refusals"] = f.refusals;
  o["evaluated"] = f.evaluated;
  o["div_histogram"] = {{"edges", f.div_hist.edges}, {"counts", f.div_hist.counts}};
  if (f.fold >= 0) o["fold"] = f.fold;
  return o;
}

}  // namespace

std::string eval_csv_path(const std::string& json_path) {
  if (json_path.size() > 5 && json_path.substr(json_path.size() - 5) == ".json")
    return json_path.substr(0, json_path.size() - 5) + ".csv";
  return json_path + ".csv";
}

void write_eval_report(const EvalReport& report, const std::string& json_path) {
  nlohmann::json j;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : report.folds) j["folds"].push_back(fold_json(f));
  j["pooled"] = fold_json(report.pooled);
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw io_error("cannot write " + json_path);
  out << j.dump(2) << "\n";

  std::ofstream csv(eval_csv_path(json_path), std::ios::binary);
  if (!csv) throw io_error("cannot write " + eval_csv_path(json_path));
  csv << "id,p_b,p_m,div,refused,dice\n";
  char buf[256];
  for (const auto& r : report.rows) {
    if (r.refused) {
      csv << r.id << ",,,,1,\n";
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,0,%.6f\n", r.id.c_str(), r.p_b, r.p_m, r.div,
                    r.dice);
      csv << buf;
    }
  }
}

}  // namespace fcdx
