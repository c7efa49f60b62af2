#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fcdx/cohort.hpp"
#include "fcdx/eval.hpp"
#include "fcdx/selftest.hpp"
#include "fcdx/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_run_config(const std::string& dir, const std::string& text) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "run_config.txt", std::ios::binary);
  if (!out) throw fcdx::io_error("cannot write run_config.txt in " + dir);
  out << text;
}

struct GenArgs {
  std::string out;
  int n = 0;
  double ambiguity = 0.0;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& a) {
  fcdx::CohortConfig cc;
  cc.count = a.n;
  cc.ambiguity = a.ambiguity;
  cc.seed = a.seed;
  cc.out_dir = a.out;
  char cfg[256];
  std::snprintf(cfg, sizeof(cfg), "command=gen-cohort\nn=%d\nambiguity=%g\nseed=%llu\n", a.n,
                a.ambiguity, static_cast<unsigned long long>(a.seed));
  write_run_config(a.out, cfg);
  fcdx::CohortSummary s = fcdx::generate_cohort(cc);
  std::cout << "cohort: " << a.n << " records, folds [";
  for (int i = 0; i < 5; ++i) std::cout << (i ? "," : "") << s.fold_counts[static_cast<size_t>(i)];
  std::cout << "], ratings [";
  for (int i = 0; i < 5; ++i) std::cout << (i ? "," : "") << s.rating_hist[static_cast<size_t>(i)];
  std::cout << "], rater disagreement on " << s.disagreement_records << "/" << a.n << " records"
            << std::endl;
  return 0;
}

struct TrainArgs {
  std::string cohort, config, out;
  std::string scheme;
  int fold = -1;
};

int cmd_train(const TrainArgs& a) {
  fcdx::TrainConfig tc = fcdx::parse_train_config(a.config);
  if (!a.scheme.empty()) tc.scheme = a.scheme;
  if (a.fold >= 0) tc.fold = a.fold;
  write_run_config(a.out, "command=train\ncohort=" + a.cohort + "\nconfig=" + a.config + "\n" +
                              fcdx::format_train_config(tc));
  fcdx::ModelConfig mc;
  auto res = fcdx::run_training(a.cohort + "/manifest.jsonl", tc, mc, a.out);
  const auto& last = res.rows.back();
  std::cout << "trained fold " << tc.fold << ": " << last.epoch << " epochs, loss " << last.total_loss
            << ", train_acc " << last.train_acc << "\ncheckpoints: " << res.final_path << ", "
            << res.best_path << std::endl;
  return 0;
}

struct EvalArgs {
  std::string cohort, ckpt_dir, out;
  int n_samples = 10;
};

int cmd_eval(const EvalArgs& a) {
  fcdx::EvalOptions opts;
  opts.n_samples = a.n_samples;
  opts.seed = 0;  // the protocol is fixed-seed by design
  fs::path out_path(a.out);
  std::string out_dir = out_path.has_parent_path() ? out_path.parent_path().string() : ".";
  char cfg[512];
  std::snprintf(cfg, sizeof(cfg), "command=eval\ncohort=%s\nckpt_dir=%s\nn_samples=%d\nseed=%llu\nout=%s\n",
                a.cohort.c_str(), a.ckpt_dir.c_str(), a.n_samples,
                static_cast<unsigned long long>(opts.seed), a.out.c_str());
  write_run_config(out_dir, cfg);
  fcdx::ModelConfig mc;
  auto report = fcdx::evaluate_cohort(a.cohort + "/manifest.jsonl", a.ckpt_dir, mc, opts);
  fcdx::write_eval_report(report, a.out);
  const auto& p = report.pooled;
  std::cout << "eval: " << p.evaluated << " records";
  if (p.auc) std::cout << ", auc " << *p.auc;
  if (p.accuracy) std::cout << ", accuracy " << *p.accuracy;
  if (p.mean_dice) std::cout << ", mean dice " << *p.mean_dice;
  std::cout << ", refusals " << p.refusals << "\nreport: " << a.out << std::endl;
  return 0;
}

struct InferArgs {
  std::string volume, ckpt, cam_out;
  int n_samples = 10;
};

int cmd_infer(const InferArgs& a) {
  fcdx::ModelConfig mc;
  fcdx::Volume vol = fcdx::read_volume(a.volume);
  if (vol.is_mask) throw fcdx::data_error(a.volume + " is a mask volume, expected a normalized crop");
  fcdx::Model model(mc);
  fcdx::restore_weights(fcdx::load_checkpoint(a.ckpt), model.params);
  fcdx::InferOptions opts;
  opts.n_samples = a.n_samples;
  opts.seed = 0;  // inference is deterministic by contract
  opts.want_cam = !a.cam_out.empty();
  fcdx::InferResult r = fcdx::run_inference(model, vol.data, opts);

  json out;
  out["refused"] = r.refused;
  if (!r.refused) {
    out["p_b"] = r.p_b;
    out["p_m"] = r.p_m;
    out["div"] = r.div;
  }
  out["config"] = {{"command", "infer"},
                   {"volume", a.volume},
                   {"ckpt", a.ckpt},
                   {"n_samples", a.n_samples},
                   {"seed", opts.seed}};
  std::cout << out.dump(2) << std::endl;

  if (opts.want_cam) {
    fcdx::Volume cam;
    cam.data = r.cam;
    cam.spacing = vol.spacing;
    cam.is_mask = false;
    fcdx::write_volume(a.cam_out, cam);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probabilistic lung-nodule diagnosis pipeline"};
  app.require_subcommand(1);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-cohort", "synthesize an ambiguous-rater nodule cohort");
  gen->add_option("--out", ga.out, "output directory")->required();
  gen->add_option("--n", ga.n, "number of records")->required()->check(CLI::PositiveNumber);
  gen->add_option("--ambiguity", ga.ambiguity, "rater disagreement level in [0,1]")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", ga.seed, "generator seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train one cross-validation fold");
  train->add_option("--cohort", ta.cohort, "cohort directory")->required();
  train->add_option("--config", ta.config, "key=value training config file")->required();
  train->add_option("--scheme", ta.scheme, "annotation scheme: low or high")
      ->check(CLI::IsMember({"low", "high"}));
  train->add_option("--fold", ta.fold, "held-out fold")->check(CLI::Range(0, 4));
  train->add_option("--out", ta.out, "output directory")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "cross-validated evaluation of trained folds");
  eval->add_option("--cohort", ea.cohort, "cohort directory")->required();
  eval->add_option("--ckpt-dir", ea.ckpt_dir, "directory with per-fold checkpoints")->required();
  eval->add_option("--n-samples", ea.n_samples, "latent draws per record")->check(CLI::PositiveNumber);
  eval->add_option("--out", ea.out, "report JSON path")->required();

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "diagnose a single crop");
  infer->add_option("--volume", ia.volume, "input PRVX crop")->required();
  infer->add_option("--ckpt", ia.ckpt, "checkpoint file")->required();
  infer->add_option("--n-samples", ia.n_samples, "latent draws")->check(CLI::PositiveNumber);
  infer->add_option("--cam-out", ia.cam_out, "write the voxel attribution map here");

  bool perturb = false;
  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant suite");
  selftest->add_flag("--perturb-softmax", perturb, "")->group("");  // test hook, hidden from help

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(ga);
    if (train->parsed()) return cmd_train(ta);
    if (eval->parsed()) return cmd_eval(ea);
    if (infer->parsed()) return cmd_infer(ia);
    if (selftest->parsed()) {
      if (perturb) fcdx::testing::softmax_perturb = 1e-3f;
      return fcdx::run_selftest(std::cout) == 0 ? 0 : 1;
    }
  } catch (const fcdx::io_error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  }
  return 2;
}
