#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "fcdx/tensor.hpp"

namespace fcdx {

std::array<double, 5> softmax5(const std::array<float, 5>& logits);

// Collapse per-sample rating logits to binary probabilities: drop the
// indeterminate middle class, renormalize (1,2,4,5) per row, then average.
// p_b + p_m == 1 by construction.
struct BinaryAggregate {
  double p_b = 0, p_m = 0;
};
BinaryAggregate aggregate_binary(const std::vector<std::array<float, 5>>& logit_rows);

// Mean over classes of the population std of per-sample probabilities.
// Summation is done in a canonical (sorted) order, so any row permutation
// gives bit-identical output.
double diversity(const std::vector<std::array<float, 5>>& prob_rows);

// Overlap of two binary masks; both empty counts as perfect agreement.
double dice_coefficient(const Tensor& a, const Tensor& b);

// Rank-based AUC with midranks for ties. Empty when only one class is
// present.
std::optional<double> auc_midrank(const std::vector<std::pair<double, int>>& scored);

struct Histogram {
  std::vector<double> edges;  // bin_count + 1 edges
  std::vector<int> counts;
};

// Fixed-range histogram for per-record diversity values: 50 bins of width
// 0.005 covering [0, 0.25], overflow clamped into the last bin.
Histogram div_histogram(const std::vector<double>& values);

}  // namespace fcdx
