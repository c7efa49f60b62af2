#include "fcdx/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fcdx/common.hpp"

namespace fcdx {

std::array<double, 5> softmax5(const std::array<float, 5>& logits) {
  double m = logits[0];
  for (int i = 1; i < 5; ++i) m = std::max(m, static_cast<double>(logits[i]));
  std::array<double, 5> p{};
  double z = 0;
  for (int i = 0; i < 5; ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

BinaryAggregate aggregate_binary(const std::vector<std::array<float, 5>>& logit_rows) {
  if (logit_rows.empty()) throw contract_error("aggregate_binary: no rows");
  static constexpr int kept[4] = {0, 1, 3, 4};
  double pb = 0, pm = 0;
  for (const auto& row : logit_rows) {
    double m = row[kept[0]];
    for (int i = 1; i < 4; ++i) m = std::max(m, static_cast<double>(row[kept[i]]));
    double e[4], z = 0;
    for (int i = 0; i < 4; ++i) {
      e[i] = std::exp(static_cast<double>(row[kept[i]]) - m);
      z += e[i];
    }
    pb += (e[0] + e[1]) / z;
    pm += (e[2] + e[3]) / z;
  }
  double n = static_cast<double>(logit_rows.size());
  return {pb / n, pm / n};
}

double diversity(const std::vector<std::array<float, 5>>& prob_rows) {
  if (prob_rows.empty()) throw contract_error("diversity: no rows");
  size_t n = prob_rows.size();
  double acc = 0;
  std::vector<double> col(n);
  for (int c = 0; c < 5; ++c) {
    for (size_t j = 0; j < n; ++j) col[j] = prob_rows[j][c];
    std::sort(col.begin(), col.end());
    double mean = 0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> dev(n);
    for (size_t j = 0; j < n; ++j) dev[j] = (col[j] - mean) * (col[j] - mean);
    std::sort(dev.begin(), dev.end());
    double var = 0;
    for (double v : dev) var += v;
    acc += std::sqrt(var / static_cast<double>(n));
  }
  return acc / 5.0;
}

double dice_coefficient(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw dimension_error("dice_coefficient: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::int64_t inter = 0, sa = 0, sb = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    bool va = a[i] != 0.0f, vb = b[i] != 0.0f;
    inter += va && vb;
    sa += va;
    sb += vb;
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

std::optional<double> auc_midrank(const std::vector<std::pair<double, int>>& scored) {
  std::int64_t pos = 0, neg = 0;
  for (const auto& [s, y] : scored) (y ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::pair<double, int>> v(scored);
  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum_pos = 0;
  size_t i = 0;
  while (i < v.size()) {
    size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    // 1-based midrank shared by the tie group [i, j)
    double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (v[k].second) rank_sum_pos += mid;
    i = j;
  }
  double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

Histogram div_histogram(const std::vector<double>& values) {
  constexpr int bins = 50;
  constexpr double width = 0.005;
  Histogram h;
  h.edges.resize(bins + 1);
  for (int i = 0; i <= bins; ++i) h.edges[i] = i * width;
  h.counts.assign(bins, 0);
  for (double v : values) {
    int b = static_cast<int>(v / width);
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    ++h.counts[b];
  }
  return h;
}

}  // namespace fcdx
