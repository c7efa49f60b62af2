#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fcdx/tensor.hpp"

namespace fcdx {

// Ordered name -> tensor container backing the binary model/optimizer state
// file. Order is preserved on round-trip so files are byte-reproducible.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> entries;

  void put(std::string name, Tensor t);
  const Tensor* find(std::string_view name) const;
  const Tensor& get(std::string_view name) const;  // data_error if absent
  bool has(std::string_view name) const { return find(name) != nullptr; }
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fcdx
