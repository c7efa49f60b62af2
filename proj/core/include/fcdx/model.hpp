#pragma once

#include <string>

#include "fcdx/backbone.hpp"
#include "fcdx/checkpoint.hpp"
#include "fcdx/cloud.hpp"
#include "fcdx/nsam.hpp"
#include "fcdx/prior.hpp"

namespace fcdx {

// Output heads conditioned on the latent ambiguity draw f.
template <class T>
struct HeadsT {
  LinearLayerT<T> cls_fc1, cls_fc2;
  Conv3dLayerT<T> seg_out;

  HeadsT() = default;
  HeadsT(ParamSetT<T>& ps, const RandomStream& init, const ModelConfig& cfg)
      : cls_fc1(ps, init, "heads.cls_fc1", cfg.cls_channels + cfg.latent_dim, cfg.mlp_hidden, true),
        cls_fc2(ps, init, "heads.cls_fc2", cfg.mlp_hidden, cfg.num_classes, true),
        seg_out(ps, init, "heads.seg_out", cfg.seg_channels + cfg.latent_dim, 1, 1, true) {}

  // Rating logits from the pooled lesion representation.
  VarT<T> cls(const VarT<T>& rep, const VarT<T>& f) const {
    return cls_fc2(elu(cls_fc1(concat0(rep, f))));
  }
  // Same map applied independently to each cloud row (used for the voxel
  // attribution map).
  VarT<T> cls_rows(const VarT<T>& reps, const VarT<T>& f) const {
    auto z = concat_cols<T>({reps, broadcast_rows(f, reps->value.dim(0))});
    return cls_fc2.rows(elu(cls_fc1.rows(z)));
  }
  // Voxel logits [1,S,S,S] from segmentation features with f tiled across
  // space.
  VarT<T> seg(const VarT<T>& seg_pre, const VarT<T>& f) const {
    int D = seg_pre->value.dim(1), H = seg_pre->value.dim(2), W = seg_pre->value.dim(3);
    return seg_out(concat0(seg_pre, broadcast_channels(f, D, H, W)));
  }
};

template <class T>
struct ModelT {
  ModelConfig cfg;
  ParamSetT<T> params;
  BackboneT<T> backbone;
  PriorNetT<T> prior;
  NsamT<T> nsam;
  HeadsT<T> heads;

  explicit ModelT(const ModelConfig& config, std::uint64_t init_seed = 1) : cfg(config) {
    RandomStream init = RandomStream(init_seed).child("init");
    backbone = BackboneT<T>(params, init, cfg);
    prior = PriorNetT<T>(params, init, cfg);
    nsam = NsamT<T>(params, init, cfg);
    heads = HeadsT<T>(params, init, cfg);
    std::int64_t trunk = params.count_prefix("backbone.");
    std::int64_t side = params.count_prefix("prior.");
    if (side * 100 > trunk * 55)
      throw config_error("ambiguity encoder has " + std::to_string(side) + " parameters, over 55% of the " +
                         std::to_string(trunk) + "-parameter trunk");
  }
};

using Model = ModelT<float>;

// Weights + batch-norm running statistics, in registration order, so the
// serialized form is byte-reproducible.
Checkpoint snapshot_weights(const ParamSetT<float>& ps);

// Restores every model tensor from the checkpoint (shape-checked); entries
// the model does not own (optimizer state, counters) are left alone.
void restore_weights(const Checkpoint& ck, ParamSetT<float>& ps);

// Clone / restore just the batch-norm running statistics (used to rewind a
// mini-batch whose loss denominators were mispredicted).
template <class T>
std::vector<TensorT<T>> snapshot_bn(const ParamSetT<T>& ps) {
  std::vector<TensorT<T>> out;
  out.reserve(ps.bn_states.size() * 2);
  for (const auto& [name, st] : ps.bn_states) {
    out.push_back(st->running_mean.clone());
    out.push_back(st->running_var.clone());
  }
  return out;
}

template <class T>
void restore_bn(ParamSetT<T>& ps, const std::vector<TensorT<T>>& snap) {
  if (snap.size() != ps.bn_states.size() * 2) throw contract_error("restore_bn: snapshot size mismatch");
  size_t i = 0;
  for (auto& [name, st] : ps.bn_states) {
    st->running_mean = snap[i++].clone();
    st->running_var = snap[i++].clone();
  }
}

}  // namespace fcdx
