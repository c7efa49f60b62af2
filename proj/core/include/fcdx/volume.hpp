#pragma once

#include <array>
#include <string>

#include "fcdx/tensor.hpp"

namespace fcdx {

// One scalar volume on a regular grid. Masks are stored as u8 on disk and
// surfaced as 0/1 floats so the rest of the pipeline stays single-typed.
struct Volume {
  Tensor data;  // [D,H,W], D-major
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
  bool is_mask = false;
};

Volume read_volume(const std::string& path);
void write_volume(const std::string& path, const Volume& v);

}  // namespace fcdx
