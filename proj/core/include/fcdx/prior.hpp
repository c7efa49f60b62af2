#pragma once

#include <string>
#include <vector>

#include "fcdx/backbone.hpp"

namespace fcdx {

template <class T>
struct PriorOutT {
  VarT<T> mu;       // [latent_dim]
  VarT<T> log_var;  // [latent_dim]
};

// Compact dense encoder predicting a diagonal Gaussian over the latent
// ambiguity vector. Shares the crop input with the trunk but has its own,
// much narrower, parameters.
template <class T>
struct PriorNetT {
  int input_size = 0;
  int latent_dim = 0;

  Conv3dLayerT<T> stem;
  std::vector<DenseLayerUnitT<T>> block1, block2, block3;
  TransitionT<T> trans1, trans2;
  BatchNormLayerT<T> head_bn;
  LinearLayerT<T> fc;

  PriorNetT() = default;
  PriorNetT(ParamSetT<T>& ps, const RandomStream& init, const ModelConfig& cfg) {
    input_size = cfg.input_size;
    latent_dim = cfg.latent_dim;
    int bw = cfg.prior_bottleneck * cfg.prior_growth;
    int c0 = cfg.prior_stem;
    int c1 = c0 + cfg.prior_repeats[0] * cfg.prior_growth;
    if (c1 % cfg.prior_compression != 0)
      throw config_error("prior block1 output " + std::to_string(c1) + " not divisible by compression");
    int t1 = c1 / cfg.prior_compression;
    int c2 = t1 + cfg.prior_repeats[1] * cfg.prior_growth;
    if (c2 % cfg.prior_compression != 0)
      throw config_error("prior block2 output " + std::to_string(c2) + " not divisible by compression");
    int t2 = c2 / cfg.prior_compression;
    int c3 = t2 + cfg.prior_repeats[2] * cfg.prior_growth;

    stem = Conv3dLayerT<T>(ps, init, "prior.stem", 1, c0, 3, false);
    block1 = make_dense_block(ps, init, "prior.b1", c0, cfg.prior_repeats[0], bw, cfg.prior_growth);
    trans1 = TransitionT<T>(ps, init, "prior.t1", c1, t1);
    block2 = make_dense_block(ps, init, "prior.b2", t1, cfg.prior_repeats[1], bw, cfg.prior_growth);
    trans2 = TransitionT<T>(ps, init, "prior.t2", c2, t2);
    block3 = make_dense_block(ps, init, "prior.b3", t2, cfg.prior_repeats[2], bw, cfg.prior_growth);
    head_bn = BatchNormLayerT<T>(ps, "prior.head.bn", c3);
    fc = LinearLayerT<T>(ps, init, "prior.fc", c3, 2 * cfg.latent_dim, true);
  }

  PriorOutT<T> operator()(const VarT<T>& x, bool training) const {
    if (x->value.ndim() != 4 || x->value.dim(0) != 1)
      throw dimension_error("prior expects [1,D,H,W], got " + shape_str(x->value.shape()));
    auto h = run_block(block1, stem(x), training);
    h = run_block(block2, trans1(h, training), training);
    h = run_block(block3, trans2(h, training), training);
    auto pooled = spatial_mean(relu(head_bn(h, training)));
    auto stats = fc(pooled);
    return {slice_vec(stats, 0, latent_dim), slice_vec(stats, latent_dim, latent_dim)};
  }
};

// f = mu + exp(0.5 * log_var) * noise. Gradients flow to mu and log_var; the
// noise is a constant draw.
template <class T>
VarT<T> reparameterize_with(const VarT<T>& mu, const VarT<T>& log_var, TensorT<T> noise) {
  if (!mu->value.same_shape(log_var->value) || !mu->value.same_shape(noise))
    throw dimension_error("reparameterize: mu/log_var/noise shapes differ");
  auto n = make_const(std::move(noise));
  return add(mu, mul(exp_op(scale(log_var, T(0.5))), n));
}

template <class T>
VarT<T> reparameterize(const VarT<T>& mu, const VarT<T>& log_var, RandomStream stream) {
  TensorT<T> noise(mu->value.shape());
  for (std::int64_t i = 0; i < noise.numel(); ++i) noise[i] = static_cast<T>(stream.normal());
  return reparameterize_with(mu, log_var, std::move(noise));
}

}  // namespace fcdx
