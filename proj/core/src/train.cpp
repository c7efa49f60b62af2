#include "fcdx/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fcdx/losses.hpp"
#include "fcdx/preprocess.hpp"

namespace fcdx {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_num(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v;
  std::string extra;
  if (!(in >> v) || (in >> extra))
    throw config_error("bad value '" + text + "' for " + key);
  return v;
}

}  // namespace

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file " + path);
  TrainConfig tc;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string s = trim(line);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw config_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key == "epochs") tc.epochs = parse_num<int>(key, val);
    else if (key == "batch_size") tc.batch_size = parse_num<int>(key, val);
    else if (key == "lr") tc.lr = parse_num<float>(key, val);
    else if (key == "beta1") tc.beta1 = parse_num<float>(key, val);
    else if (key == "beta2") tc.beta2 = parse_num<float>(key, val);
    else if (key == "adam_eps") tc.adam_eps = parse_num<float>(key, val);
    else if (key == "dice_weight") tc.dice_weight = parse_num<float>(key, val);
    else if (key == "seed") tc.seed = parse_num<std::uint64_t>(key, val);
    else if (key == "scheme") tc.scheme = val;
    else if (key == "fold") tc.fold = parse_num<int>(key, val);
    else if (key == "resume") tc.resume = val;
    else throw config_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return tc;
}

std::string format_train_config(const TrainConfig& tc) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "epochs=%d\nbatch_size=%d\nlr=%g\nbeta1=%g\nbeta2=%g\nadam_eps=%g\n"
                "dice_weight=%g\nseed=%llu\nscheme=%s\nfold=%d\nresume=%s\n",
                tc.epochs, tc.batch_size, static_cast<double>(tc.lr), static_cast<double>(tc.beta1),
                static_cast<double>(tc.beta2), static_cast<double>(tc.adam_eps),
                static_cast<double>(tc.dice_weight), static_cast<unsigned long long>(tc.seed),
                tc.scheme.c_str(), tc.fold, tc.resume.c_str());
  return buf;
}

Adam::Adam(const ParamSetT<float>& ps, const TrainConfig& tc)
    : lr(tc.lr), beta1(tc.beta1), beta2(tc.beta2), eps(tc.adam_eps) {
  if (!(lr > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0))
    throw config_error("optimizer hyperparameters out of range: lr=" + std::to_string(lr) +
                       " beta1=" + std::to_string(beta1) + " beta2=" + std::to_string(beta2) +
                       " eps=" + std::to_string(eps));
  m.reserve(ps.params.size());
  v.reserve(ps.params.size());
  for (const auto& [name, p] : ps.params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
  }
}

void Adam::step(ParamSetT<float>& ps) {
  ++step_count;
  double bc1 = 1.0 - std::pow(static_cast<double>(beta1), static_cast<double>(step_count));
  double bc2 = 1.0 - std::pow(static_cast<double>(beta2), static_cast<double>(step_count));
  for (size_t i = 0; i < ps.params.size(); ++i) {
    auto& p = ps.params[i].second;
    float* w = p->value.data();
    float* mp = m[i].data();
    float* vp = v[i].data();
    const bool has_g = p->grad.defined();
    const float* g = has_g ? p->grad.data() : nullptr;
    for (std::int64_t j = 0; j < p->value.numel(); ++j) {
      double gj = g ? static_cast<double>(g[j]) : 0.0;
      double mj = beta1 * mp[j] + (1.0 - beta1) * gj;
      double vj = beta2 * vp[j] + (1.0 - beta2) * gj * gj;
      mp[j] = static_cast<float>(mj);
      vp[j] = static_cast<float>(vj);
      w[j] -= static_cast<float>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
    }
  }
}

BatchStats train_batch(Model& model, const std::vector<TrainExample>& batch, Adam& opt,
                       float dice_weight) {
  if (batch.empty()) throw contract_error("train_batch: empty batch");
  const int B = static_cast<int>(batch.size());
  const int S = model.cfg.input_size;
  auto bn_snap = snapshot_bn(model.params);

  BatchStats st;
  // The cross-entropy denominator (count of non-refused examples) is only
  // known after the whole batch ran, but gradients are cheapest accumulated
  // example by example. Assume nobody refuses, and rerun the batch with the
  // true denominator in the rare step where that guess was wrong.
  auto run_pass = [&](int ce_denom) {
    model.params.zero_grads();
    st = BatchStats{};
    st.batch = B;
    for (const auto& ex : batch) {
      auto x = make_const(ex.image.reshaped({1, S, S, S}));
      auto bb = model.backbone(x, true);
      auto pr = model.prior(x, true);
      auto f = reparameterize(pr.mu, pr.log_var, ex.noise);
      auto seg_probs = sigmoid(model.heads.seg(bb.seg_pre, f));
      auto dl = dice_loss(seg_probs, ex.mask.reshaped({1, S, S, S}));
      st.dice_sum += static_cast<double>(dl->value.item());
      auto sel = select_predicted(seg_probs->value, model.cfg.cloud_max_points,
                                  model.cfg.refusal_volume);
      VarT<float> total;
      if (sel.refused) {
        ++st.refusals;
        total = scale(dl, dice_weight / B);
      } else {
        auto rep = model.nsam.represent(gather_cloud(bb.cls_features, sel));
        auto logits = model.heads.cls(rep, f);
        auto ce = rating_cross_entropy(logits, ex.rating);
        st.ce_sum += static_cast<double>(ce->value.item());
        int arg = 0;
        for (int c = 1; c < 5; ++c)
          if (logits->value[c] > logits->value[arg]) arg = c;
        st.correct += (arg == ex.rating - 1);
        total = add(scale(ce, 1.0f / static_cast<float>(ce_denom)), scale(dl, dice_weight / B));
      }
      backward(total);
    }
  };

  run_pass(B);
  if (st.refusals > 0 && st.refusals < B) {
    int denom = B - st.refusals;
    restore_bn(model.params, bn_snap);
    run_pass(denom);
    st.redone = true;
  }
  opt.step(model.params);
  return st;
}

std::vector<NoduleRecord> filter_scheme(const std::vector<NoduleRecord>& records,
                                        const std::string& scheme) {
  if (scheme == "high") return records;
  if (scheme != "low") throw config_error("unknown scheme '" + scheme + "' (expected low or high)");
  std::vector<NoduleRecord> out;
  for (const auto& r : records) {
    if (r.annotations.size() < 3) continue;
    int sum = 0;
    for (const auto& a : r.annotations) sum += a.rating;
    if (sum == 3 * static_cast<int>(r.annotations.size())) continue;  // mean rating exactly 3
    out.push_back(r);
  }
  return out;
}

namespace {

void shuffle_indices(std::vector<int>& v, RandomStream rs) {
  for (size_t i = 0; i + 1 < v.size(); ++i) {
    size_t j = i + static_cast<size_t>(rs.uniform_int(static_cast<std::uint64_t>(v.size() - i)));
    std::swap(v[i], v[j]);
  }
}

Tensor meta_scalar(float v) {
  Tensor t({1});
  t[0] = v;
  return t;
}

Checkpoint full_state(const Model& model, const Adam& opt, int epochs_done) {
  Checkpoint ck = snapshot_weights(model.params);
  for (size_t i = 0; i < model.params.params.size(); ++i) {
    ck.put("adam.m." + model.params.params[i].first, opt.m[i].clone());
    ck.put("adam.v." + model.params.params[i].first, opt.v[i].clone());
  }
  ck.put("meta.step", meta_scalar(static_cast<float>(opt.step_count)));
  ck.put("meta.epoch", meta_scalar(static_cast<float>(epochs_done)));
  return ck;
}

void load_full_state(const Checkpoint& ck, Model& model, Adam& opt, int* epochs_done) {
  restore_weights(ck, model.params);
  for (size_t i = 0; i < model.params.params.size(); ++i) {
    const auto& name = model.params.params[i].first;
    const Tensor& cm = ck.get("adam.m." + name);
    const Tensor& cv = ck.get("adam.v." + name);
    if (!cm.same_shape(opt.m[i]) || !cv.same_shape(opt.v[i]))
      throw data_error("optimizer state shape mismatch for " + name);
    std::copy(cm.data(), cm.data() + cm.numel(), opt.m[i].data());
    std::copy(cv.data(), cv.data() + cv.numel(), opt.v[i].data());
  }
  opt.step_count = static_cast<std::int64_t>(ck.get("meta.step")[0]);
  *epochs_done = static_cast<int>(ck.get("meta.epoch")[0]);
}

std::string csv_row(const EpochRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%lld,%.6f,%.6f,%.6f,%lld,%.6f\n", r.epoch,
                static_cast<long long>(r.step), r.total_loss, r.cls_loss, r.dice_loss,
                static_cast<long long>(r.refusals), r.train_acc);
  return buf;
}

}  // namespace

TrainResult run_training(const std::string& manifest_path, const TrainConfig& tc,
                         const ModelConfig& mc, const std::string& out_dir) {
  if (tc.epochs < 1) throw config_error("epochs must be positive");
  if (tc.batch_size < 1) throw config_error("batch_size must be positive");
  if (tc.fold < 0 || tc.fold > 4) throw config_error("fold must be in 0..4");

  auto records = load_manifest(manifest_path);
  const std::string dir = manifest_dir(manifest_path);
  std::vector<NoduleRecord> pool;
  for (const auto& r : records)
    if (r.fold != tc.fold) pool.push_back(r);
  pool = filter_scheme(pool, tc.scheme);
  if (pool.empty())
    throw config_error("no training records left for scheme '" + tc.scheme + "' with fold " +
                       std::to_string(tc.fold) + " held out");

  const int S = mc.input_size;
  struct Loaded {
    Tensor image;
    std::vector<Tensor> masks;
    std::vector<int> ratings;
  };
  std::vector<Loaded> data;
  data.reserve(pool.size());
  for (const auto& r : pool) {
    Loaded ld;
    Volume img = read_volume(dir + "/" + r.crop_path);
    if (img.data.ndim() != 3 || img.data.dim(0) != S || img.data.dim(1) != S || img.data.dim(2) != S)
      throw data_error("record " + r.id + ": crop is " + shape_str(img.data.shape()) + ", expected [" +
                       std::to_string(S) + "]^3");
    ld.image = img.data;
    for (const auto& a : r.annotations) {
      Volume mv = read_volume(dir + "/" + a.mask_path);
      if (!mv.data.same_shape(ld.image))
        throw data_error("record " + r.id + ": mask shape " + shape_str(mv.data.shape()) +
                         " differs from crop");
      ld.masks.push_back(mv.data);
      ld.ratings.push_back(a.rating);
    }
    data.push_back(std::move(ld));
  }

  Model model(mc, tc.seed);
  Adam opt(model.params, tc);
  int epochs_done = 0;
  if (!tc.resume.empty()) load_full_state(load_checkpoint(tc.resume), model, opt, &epochs_done);

  TrainResult result;
  result.metrics_path = out_dir + "/metrics.csv";
  result.final_path = out_dir + "/fold" + std::to_string(tc.fold) + "_final.dspc";
  result.best_path = out_dir + "/fold" + std::to_string(tc.fold) + "_best.dspc";
  std::ofstream csv(result.metrics_path, std::ios::binary);
  if (!csv) throw io_error("cannot write " + result.metrics_path);
  csv << "epoch,step,total_loss,cls_loss,dice_loss,refusals,train_acc\n";

  RandomStream root(tc.seed);
  const int n = static_cast<int>(data.size());
  const int B = std::min(tc.batch_size, n);
  double best_loss = 0;
  bool have_best = false;

  for (int e = epochs_done + 1; e <= tc.epochs; ++e) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    shuffle_indices(order, root.child("shuffle").child(static_cast<std::uint64_t>(e)));

    double ep_total = 0, ep_ce = 0, ep_dice = 0;
    std::int64_t ep_ce_n = 0, ep_dice_n = 0, ep_ref = 0, ep_correct = 0;
    const int steps = (n + B - 1) / B;
    for (int s = 0; s < steps; ++s) {
      std::vector<TrainExample> batch;
      for (int k = s * B; k < std::min((s + 1) * B, n); ++k) {
        const Loaded& ld = data[static_cast<size_t>(order[static_cast<size_t>(k)])];
        RandomStream rs =
            root.child("draw").child(static_cast<std::uint64_t>(e)).child(static_cast<std::uint64_t>(k));
        TrainExample ex;
        int expert = static_cast<int>(
            rs.child("expert").uniform_int(static_cast<std::uint64_t>(ld.ratings.size())));
        ex.image = ld.image.clone();
        ex.mask = ld.masks[static_cast<size_t>(expert)].clone();
        ex.rating = ld.ratings[static_cast<size_t>(expert)];
        std::vector<Tensor*> masks{&ex.mask};
        RandomStream ars = rs.child("augment");
        augment(ex.image, masks, ars);
        ex.noise = rs.child("latent");
        batch.push_back(std::move(ex));
      }
      BatchStats st = train_batch(model, batch, opt, tc.dice_weight);
      int nonref = st.batch - st.refusals;
      double step_total = (nonref > 0 ? st.ce_sum / nonref : 0.0) +
                          static_cast<double>(tc.dice_weight) * st.dice_sum / st.batch;
      ep_total += step_total;
      ep_ce += st.ce_sum;
      ep_ce_n += nonref;
      ep_dice += st.dice_sum;
      ep_dice_n += st.batch;
      ep_ref += st.refusals;
      ep_correct += st.correct;
    }

    EpochRow row;
    row.epoch = e;
    row.step = opt.step_count;
    row.total_loss = ep_total / steps;
    row.cls_loss = ep_ce_n > 0 ? ep_ce / static_cast<double>(ep_ce_n) : 0.0;
    row.dice_loss = ep_dice / static_cast<double>(ep_dice_n);
    row.refusals = ep_ref;
    row.train_acc = ep_ce_n > 0 ? static_cast<double>(ep_correct) / static_cast<double>(ep_ce_n) : 0.0;
    result.rows.push_back(row);
    csv << csv_row(row);
    csv.flush();
    std::cout << "epoch " << e << "/" << tc.epochs << " loss " << row.total_loss << " cls "
              << row.cls_loss << " dice " << row.dice_loss << " acc " << row.train_acc << " refusals "
              << row.refusals << std::endl;

    if (!have_best || row.total_loss < best_loss) {
      best_loss = row.total_loss;
      have_best = true;
      save_checkpoint(result.best_path, full_state(model, opt, e));
    }
  }

  save_checkpoint(result.final_path, full_state(model, opt, tc.epochs));
  return result;
}

}  // namespace fcdx
