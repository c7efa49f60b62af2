#pragma once

#include <array>
#include <string>
#include <vector>

#include "fcdx/model_config.hpp"
#include "fcdx/ops.hpp"
#include "fcdx/params.hpp"

namespace fcdx {

// One densely connected unit: BN -> ReLU -> 1x1x1 bottleneck -> BN -> ReLU ->
// 3x3x3, output concatenated onto the input.
template <class T>
struct DenseLayerUnitT {
  BatchNormLayerT<T> bn1;
  Conv3dLayerT<T> conv1;
  BatchNormLayerT<T> bn2;
  Conv3dLayerT<T> conv2;

  DenseLayerUnitT() = default;
  DenseLayerUnitT(ParamSetT<T>& ps, const RandomStream& init, const std::string& name, int cin,
                  int bottleneck_width, int growth)
      : bn1(ps, name + ".bn1", cin),
        conv1(ps, init, name + ".conv1", cin, bottleneck_width, 1, false),
        bn2(ps, name + ".bn2", bottleneck_width),
        conv2(ps, init, name + ".conv2", bottleneck_width, growth, 3, false) {}

  VarT<T> operator()(const VarT<T>& x, bool training) const {
    auto h = conv1(relu(bn1(x, training)));
    h = conv2(relu(bn2(h, training)));
    return concat0(x, h);
  }
};

template <class T>
std::vector<DenseLayerUnitT<T>> make_dense_block(ParamSetT<T>& ps, const RandomStream& init,
                                                 const std::string& name, int cin, int repeats,
                                                 int bottleneck_width, int growth) {
  std::vector<DenseLayerUnitT<T>> layers;
  layers.reserve(static_cast<size_t>(repeats));
  for (int i = 0; i < repeats; ++i)
    layers.emplace_back(ps, init, name + "." + std::to_string(i), cin + i * growth, bottleneck_width,
                        growth);
  return layers;
}

template <class T>
VarT<T> run_block(const std::vector<DenseLayerUnitT<T>>& block, VarT<T> x, bool training) {
  for (const auto& layer : block) x = layer(x, training);
  return x;
}

// BN -> ReLU -> channel-reducing 1x1x1 -> 2x average pool.
template <class T>
struct TransitionT {
  BatchNormLayerT<T> bn;
  Conv3dLayerT<T> conv;

  TransitionT() = default;
  TransitionT(ParamSetT<T>& ps, const RandomStream& init, const std::string& name, int cin, int cout)
      : bn(ps, name + ".bn", cin), conv(ps, init, name + ".conv", cin, cout, 1, false) {}

  VarT<T> operator()(const VarT<T>& x, bool training) const {
    return avgpool3d(conv(relu(bn(x, training))));
  }
};

template <class T>
struct BackboneOutT {
  VarT<T> cls_features;                  // [cls_channels, S, S, S]
  VarT<T> seg_pre;                       // [seg_channels, S, S, S]
  std::array<VarT<T>, 3> level_features; // block outputs at S, S/2, S/4
};

// Dense trunk with three blocks and two transitions, plus a full-resolution
// voxel-descriptor head and a multi-scale segmentation feature head.
template <class T>
struct BackboneT {
  int input_size = 0;
  std::array<int, 4> channels{};  // stem, block1, block2, block3 outputs

  Conv3dLayerT<T> stem;
  std::vector<DenseLayerUnitT<T>> block1, block2, block3;
  TransitionT<T> trans1, trans2;
  BatchNormLayerT<T> head_bn;
  Conv3dLayerT<T> head_proj;
  std::array<Conv3dLayerT<T>, 3> lateral;
  Conv3dLayerT<T> fuse;

  BackboneT() = default;
  BackboneT(ParamSetT<T>& ps, const RandomStream& init, const ModelConfig& cfg) {
    input_size = cfg.input_size;
    if (cfg.input_size < 8 || cfg.input_size % 4 != 0)
      throw config_error("input_size must be a multiple of 4 and at least 8");
    int bw = cfg.bottleneck * cfg.growth;
    int c0 = cfg.stem_channels;
    int c1 = c0 + cfg.block_repeats[0] * cfg.growth;
    if (c1 % cfg.compression != 0)
      throw config_error("block1 output " + std::to_string(c1) + " not divisible by compression");
    int t1 = c1 / cfg.compression;
    int c2 = t1 + cfg.block_repeats[1] * cfg.growth;
    if (c2 % cfg.compression != 0)
      throw config_error("block2 output " + std::to_string(c2) + " not divisible by compression");
    int t2 = c2 / cfg.compression;
    int c3 = t2 + cfg.block_repeats[2] * cfg.growth;
    channels = {c0, c1, c2, c3};

    stem = Conv3dLayerT<T>(ps, init, "backbone.stem", 1, c0, 3, false);
    block1 = make_dense_block(ps, init, "backbone.b1", c0, cfg.block_repeats[0], bw, cfg.growth);
    trans1 = TransitionT<T>(ps, init, "backbone.t1", c1, t1);
    block2 = make_dense_block(ps, init, "backbone.b2", t1, cfg.block_repeats[1], bw, cfg.growth);
    trans2 = TransitionT<T>(ps, init, "backbone.t2", c2, t2);
    block3 = make_dense_block(ps, init, "backbone.b3", t2, cfg.block_repeats[2], bw, cfg.growth);
    head_bn = BatchNormLayerT<T>(ps, "backbone.head.bn", c3);
    head_proj = Conv3dLayerT<T>(ps, init, "backbone.head.proj", c3, cfg.cls_channels, 1, true);
    const int lat_in[3] = {c1, c2, c3};
    for (int i = 0; i < 3; ++i)
      lateral[i] = Conv3dLayerT<T>(ps, init, "backbone.seg.lat" + std::to_string(i), lat_in[i],
                                   cfg.seg_channels, 1, true);
    fuse = Conv3dLayerT<T>(ps, init, "backbone.seg.fuse", 3 * cfg.seg_channels, cfg.seg_channels, 3, true);
  }

  BackboneOutT<T> operator()(const VarT<T>& x, bool training) const {
    if (x->value.ndim() != 4 || x->value.dim(0) != 1 || x->value.dim(1) != input_size ||
        x->value.dim(2) != input_size || x->value.dim(3) != input_size)
      throw dimension_error("backbone expects [1," + std::to_string(input_size) + "^3], got " +
                            shape_str(x->value.shape()));
    auto l0 = run_block(block1, stem(x), training);
    auto l1 = run_block(block2, trans1(l0, training), training);
    auto l2 = run_block(block3, trans2(l1, training), training);

    auto cls = trilinear_upsample(head_proj(relu(head_bn(l2, training))), 4);

    auto m0 = lateral[0](l0);
    auto m1 = trilinear_upsample(lateral[1](l1), 2);
    auto m2 = trilinear_upsample(lateral[2](l2), 4);
    auto seg_pre = fuse(concat0<T>({m0, m1, m2}));

    return {cls, seg_pre, {l0, l1, l2}};
  }
};

}  // namespace fcdx
