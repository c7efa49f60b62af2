#pragma once

#include <array>
#include <cstdint>

namespace fcdx {

// Hyper-parameters of the full network. The defaults are the desk-scale
// production configuration; tests shrink the widths (keeping the topology)
// so the whole graph fits a 64-bit finite-difference sweep.
struct ModelConfig {
  int input_size = 32;   // cubic crop edge, must be divisible by 4

  // Dense trunk
  int stem_channels = 32;
  std::array<int, 3> block_repeats{3, 8, 4};
  int growth = 32;
  int bottleneck = 4;    // 1x1 bottleneck width = bottleneck * growth
  int compression = 2;   // transition divides channels by this

  // Shared voxel descriptors / attention width
  int cls_channels = 256;
  int seg_channels = 16;

  // Attention stack
  int nsam_layers = 3;
  int nsam_heads = 8;
  int mlp_hidden = 128;

  // Ambiguity encoder
  int latent_dim = 6;
  int prior_stem = 16;
  std::array<int, 3> prior_repeats{2, 4, 2};
  int prior_growth = 16;
  int prior_bottleneck = 4;
  int prior_compression = 2;

  // Feature cloud
  int cloud_max_points = 1024;
  float refusal_volume = 10.0f;

  int num_classes = 5;

  // Narrow configuration used by gradient-check tests: same topology, widths
  // cut until a double-precision finite-difference pass over the full graph
  // is fast.
  static ModelConfig tiny() {
    ModelConfig c;
    c.input_size = 8;
    c.stem_channels = 4;
    c.block_repeats = {1, 1, 1};
    c.growth = 4;
    c.bottleneck = 2;
    c.cls_channels = 16;
    c.seg_channels = 4;
    c.nsam_layers = 2;
    c.nsam_heads = 2;
    c.mlp_hidden = 8;
    c.prior_stem = 2;
    c.prior_repeats = {1, 1, 1};
    c.prior_growth = 2;
    c.prior_bottleneck = 2;
    c.cloud_max_points = 8;
    return c;
  }
};

}  // namespace fcdx
