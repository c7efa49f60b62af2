#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fcdx/ops.hpp"
#include "fcdx/random.hpp"
#include "fcdx/tensor.hpp"

namespace fcdx {

enum class CloudSource { Manual, Predicted };

// Which voxels feed the attention stack. Indices are flat (z-major) offsets
// into the cubic grid; coords are the matching (z,y,x) triples, kept in
// ascending flat order.
struct CloudSelection {
  CloudSource source = CloudSource::Predicted;
  bool refused = false;
  double estimated_volume = 0.0;
  int grid = 0;  // cube edge
  std::vector<std::int64_t> indices;
  std::vector<std::array<int, 3>> coords;
};

// Soft voxel count: sum of all probabilities. Values outside [0,1] break the
// probability contract.
double estimate_volume(const Tensor& seg_probs);

// Pick the voxels the classifier attends to from a predicted probability
// map: refuse below the volume floor, otherwise the floor(v) highest
// probabilities (capped), ties broken toward the earlier voxel.
CloudSelection select_predicted(const Tensor& seg_probs, int max_points = 1024,
                                float refuse_below = 10.0f);

// Selection from a hand-drawn binary mask: all voxels when they fit, else a
// uniform subsample without replacement.
CloudSelection select_manual(const Tensor& mask, RandomStream stream, int max_points = 1024);

// Rows of per-voxel descriptors for the selected sites: [N, C] from
// cls_features [C,S,S,S]. Differentiable back into the feature volume.
template <class T>
VarT<T> gather_cloud(const VarT<T>& cls_features, const CloudSelection& sel) {
  if (sel.refused || sel.indices.empty()) throw contract_error("gather_cloud: empty or refused selection");
  return gather_voxels(cls_features, sel.indices);
}

}  // namespace fcdx
