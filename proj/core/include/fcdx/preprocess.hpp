#pragma once

#include <array>
#include <vector>

#include "fcdx/random.hpp"
#include "fcdx/volume.hpp"

namespace fcdx {

// Clip HU to [-1024, 400] and quantize onto the 256-level [-1, 1) grid:
// I = floor((I_hu + 1024) / 1424 * 255) / 128 - 1.
Volume normalize_hu(const Volume& v);
float normalize_hu_value(float hu);

// Trilinear resample onto a 1mm isotropic grid (nearest-neighbour for masks).
// Output extents are round(extent * spacing) per axis.
Volume resample_isotropic(const Volume& v);

// Cube crop centered at a voxel coordinate; out-of-bounds voxels take
// pad_value (-1 = air for normalized images, 0 for masks). The center must
// lie inside the volume.
Volume crop_centered(const Volume& v, std::array<int, 3> center, int size = 32, float pad_value = -1.0f);

// Grid-exact spatial transforms shared by augmentation. axes: 0=D, 1=H, 2=W.
Tensor rotate90(const Tensor& t, int axis, int quarter_turns);
Tensor flip_axis(const Tensor& t, int axis);
Tensor shift_axis(const Tensor& t, int axis, int offset, float pad_value);

// Training augmentation: one 90-degree-multiple rotation about a random
// axis, a random-axis flip with probability 0.5, and a {-1,0,+1} voxel shift
// along a random axis. The identical transform hits the image and every
// mask; vacated planes pad with -1 (image) / 0 (masks). Draw order is fixed
// so a given stream position always encodes the same transform.
void augment(Tensor& image, std::vector<Tensor*> masks, RandomStream& stream);

}  // namespace fcdx
