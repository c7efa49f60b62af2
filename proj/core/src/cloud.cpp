#include "fcdx/cloud.hpp"

#include <algorithm>
#include <cmath>

#include "fcdx/common.hpp"

namespace fcdx {
namespace {

int cube_edge(const Tensor& t) {
  // Accept [S,S,S] or a leading singleton [1,S,S,S].
  const auto& s = t.shape();
  if (s.size() == 4 && s[0] == 1 && s[1] == s[2] && s[2] == s[3]) return s[1];
  if (s.size() == 3 && s[0] == s[1] && s[1] == s[2]) return s[0];
  throw dimension_error("expected a cubic volume, got " + shape_str(s));
}

std::array<int, 3> unflatten(std::int64_t idx, int s) {
  int x = static_cast<int>(idx % s);
  int y = static_cast<int>((idx / s) % s);
  int z = static_cast<int>(idx / (static_cast<std::int64_t>(s) * s));
  return {z, y, x};
}

void finalize(CloudSelection& sel, std::vector<std::int64_t> picked, int s) {
  std::sort(picked.begin(), picked.end());
  sel.indices = std::move(picked);
  sel.coords.reserve(sel.indices.size());
  for (auto idx : sel.indices) sel.coords.push_back(unflatten(idx, s));
}

}  // namespace

double estimate_volume(const Tensor& seg_probs) {
  double v = 0;
  for (std::int64_t i = 0; i < seg_probs.numel(); ++i) {
    float p = seg_probs[i];
    if (!(p >= 0.0f && p <= 1.0f))
      throw contract_error("estimate_volume: value " + std::to_string(p) + " outside [0,1]");
    v += p;
  }
  return v;
}

CloudSelection select_predicted(const Tensor& seg_probs, int max_points, float refuse_below) {
  CloudSelection sel;
  sel.source = CloudSource::Predicted;
  sel.grid = cube_edge(seg_probs);
  sel.estimated_volume = estimate_volume(seg_probs);
  if (sel.estimated_volume < refuse_below) {
    sel.refused = true;
    return sel;
  }
  std::int64_t n = seg_probs.numel();
  int k = static_cast<int>(std::min<double>(std::floor(sel.estimated_volume), max_points));
  std::vector<std::int64_t> order(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  // Highest probability first; equal probabilities keep grid order, so the
  // pick is a total order and independent of the sort algorithm.
  std::nth_element(order.begin(), order.begin() + k, order.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     float pa = seg_probs[a], pb = seg_probs[b];
                     return pa > pb || (pa == pb && a < b);
                   });
  order.resize(static_cast<size_t>(k));
  finalize(sel, std::move(order), sel.grid);
  return sel;
}

CloudSelection select_manual(const Tensor& mask, RandomStream stream, int max_points) {
  CloudSelection sel;
  sel.source = CloudSource::Manual;
  sel.grid = cube_edge(mask);
  std::vector<std::int64_t> on;
  for (std::int64_t i = 0; i < mask.numel(); ++i) {
    float v = mask[i];
    if (v != 0.0f && v != 1.0f)
      throw contract_error("select_manual: mask value " + std::to_string(v) + " is not 0/1");
    if (v == 1.0f) on.push_back(i);
  }
  if (on.empty()) throw contract_error("select_manual: empty mask");
  sel.estimated_volume = static_cast<double>(on.size());
  if (static_cast<int>(on.size()) > max_points) {
    // Partial Fisher-Yates: the first max_points entries become a uniform
    // sample without replacement.
    for (int i = 0; i < max_points; ++i) {
      auto j = i + static_cast<std::int64_t>(stream.uniform_int(static_cast<std::uint64_t>(on.size() - i)));
      std::swap(on[static_cast<size_t>(i)], on[static_cast<size_t>(j)]);
    }
    on.resize(static_cast<size_t>(max_points));
  }
  finalize(sel, std::move(on), sel.grid);
  return sel;
}

}  // namespace fcdx
