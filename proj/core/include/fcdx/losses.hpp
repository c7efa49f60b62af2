#pragma once

#include <string>

#include "fcdx/nn_ops.hpp"

namespace fcdx {

// Five-way cross-entropy against a 1..5 malignancy rating.
template <class T>
VarT<T> rating_cross_entropy(const VarT<T>& logits, int rating) {
  if (logits->value.ndim() != 1 || logits->value.dim(0) != 5)
    throw dimension_error("rating_cross_entropy expects 5 logits, got " + shape_str(logits->value.shape()));
  if (rating < 1 || rating > 5) throw data_error("rating " + std::to_string(rating) + " outside 1..5");
  return cross_entropy_logits(logits, rating - 1);
}

}  // namespace fcdx
