#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fcdx/model_config.hpp"
#include "fcdx/ops.hpp"
#include "fcdx/params.hpp"

namespace fcdx {

// Self-attention over an unordered set of feature vectors:
//   attn(X') = softmax(X' X'^T / sqrt(c_g)) * elu(X'), softmax per row.
template <class T>
VarT<T> attention(const VarT<T>& xp) {
  if (xp->value.ndim() != 2 || xp->value.dim(0) < 1)
    throw contract_error("attention expects a non-empty [N,c_g] set");
  int cg = xp->value.dim(1);
  auto scores = scale(matmul_nt(xp, xp), static_cast<T>(1.0 / std::sqrt(static_cast<double>(cg))));
  return matmul(softmax(scores, 1), elu(xp));
}

// Multi-head set-attention stack with residual layers, mean pooling and a
// two-layer MLP producing the lesion representation.
template <class T>
struct NsamT {
  int layers = 0, heads = 0, width = 0, head_width = 0;
  std::vector<std::vector<VarT<T>>> w;  // [layer][head], each [c_g x c]
  LinearLayerT<T> fc1, fc2;

  NsamT() = default;
  NsamT(ParamSetT<T>& ps, const RandomStream& init, const ModelConfig& cfg) {
    layers = cfg.nsam_layers;
    heads = cfg.nsam_heads;
    width = cfg.cls_channels;
    if (width % heads != 0)
      throw config_error("attention width " + std::to_string(width) + " not divisible by " +
                         std::to_string(heads) + " heads");
    head_width = width / heads;
    w.resize(static_cast<size_t>(layers));
    for (int l = 0; l < layers; ++l)
      for (int h = 0; h < heads; ++h) {
        std::string name = "nsam.l" + std::to_string(l) + ".h" + std::to_string(h) + ".w";
        w[static_cast<size_t>(l)].push_back(ps.add(name, he_normal<T>({head_width, width}, width, init, name)));
      }
    fc1 = LinearLayerT<T>(ps, init, "nsam.mlp.fc1", width, cfg.mlp_hidden, true);
    fc2 = LinearLayerT<T>(ps, init, "nsam.mlp.fc2", cfg.mlp_hidden, width, true);
  }

  VarT<T> layer(int l, const VarT<T>& x) const {
    std::vector<VarT<T>> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h)
      outs.push_back(attention(linear_rows<T>(x, w[static_cast<size_t>(l)][static_cast<size_t>(h)])));
    return add(concat_cols(outs), x);
  }

  // X [N,c] -> X_L [N,c] after all residual attention layers.
  VarT<T> stack(const VarT<T>& x) const {
    if (x->value.ndim() != 2 || x->value.dim(0) < 1)
      throw contract_error("attention stack expects a non-empty [N,c] cloud");
    if (x->value.dim(1) != width)
      throw dimension_error("attention stack width mismatch: " + shape_str(x->value.shape()));
    VarT<T> h = x;
    for (int l = 0; l < layers; ++l) h = layer(l, h);
    return h;
  }

  VarT<T> mlp(const VarT<T>& v) const { return fc2(elu(fc1(v))); }
  VarT<T> mlp_rows(const VarT<T>& x) const { return fc2.rows(elu(fc1.rows(x))); }

  // Full read-out: stack, mean-pool the set, MLP.
  VarT<T> represent(const VarT<T>& x) const { return mlp(global_mean_rows(stack(x))); }
};

}  // namespace fcdx
