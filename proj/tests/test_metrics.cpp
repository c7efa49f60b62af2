#include <doctest.h>

#include <fcdx/metrics.hpp>
#include <fcdx/random.hpp>
#include <fcdx/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace fcdx;

namespace {

// Pair-counting AUC: P(pos scores above neg), ties worth half.
double auc_pairs(const std::vector<std::pair<double, int>>& scored) {
  double wins = 0;
  std::int64_t pairs = 0;
  for (const auto& [sp, lp] : scored) {
    if (lp != 1) continue;
    for (const auto& [sn, ln] : scored) {
      if (ln != 0) continue;
      ++pairs;
      if (sp > sn) wins += 1.0;
      else if (sp == sn) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("softmax5 normalizes and orders correctly") {
  auto p = softmax5({1.0f, 2.0f, 3.0f, 4.0f, 5.0f});
  double sum = 0;
  for (double v : p) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 1; i < 5; ++i) CHECK(p[static_cast<size_t>(i)] > p[static_cast<size_t>(i - 1)]);
  CHECK(p[4] / p[3] == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
}

TEST_CASE("binary aggregation drops the middle class and renormalizes") {
  // logits (10,0,0,0,0): kept classes (1,2,4,5) -> softmax over (10,0,0,0)
  // p_b = (e^10 + 1) / (e^10 + 3)
  BinaryAggregate ag = aggregate_binary({{10.0f, 0.0f, 0.0f, 0.0f, 0.0f}});
  double want = (std::exp(10.0) + 1.0) / (std::exp(10.0) + 3.0);
  CHECK(ag.p_b == doctest::Approx(want).epsilon(1e-12));
  CHECK(ag.p_b + ag.p_m == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("middle-class logit never influences the aggregate") {
  std::array<float, 5> a = {1.0f, -2.0f, 0.0f, 3.0f, 0.5f};
  std::array<float, 5> b = a;
  b[2] = 50.0f;
  auto ra = aggregate_binary({a});
  auto rb = aggregate_binary({b});
  CHECK(ra.p_b == doctest::Approx(rb.p_b).epsilon(1e-12));
}

TEST_CASE("aggregate averages rows") {
  // one row all-benign, one all-malignant, fully saturated -> 0.5 / 0.5
  auto r = aggregate_binary({{60.0f, 0.0f, 0.0f, -60.0f, -60.0f},
                             {-60.0f, -60.0f, 0.0f, 0.0f, 60.0f}});
  CHECK(r.p_b == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.p_m == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("diversity equals an independent two-pass std") {
  RandomStream rs(61);
  std::vector<std::array<float, 5>> rows;
  for (int i = 0; i < 13; ++i) {
    std::array<float, 5> r;
    float z = 0;
    for (auto& v : r) {
      v = static_cast<float>(rs.uniform()) + 0.01f;
      z += v;
    }
    for (auto& v : r) v /= z;
    rows.push_back(r);
  }
  double want = 0;
  for (int c = 0; c < 5; ++c) {
    double mu = 0;
    for (const auto& r : rows) mu += r[static_cast<size_t>(c)];
    mu /= static_cast<double>(rows.size());
    double var = 0;
    for (const auto& r : rows) {
      double d = r[static_cast<size_t>(c)] - mu;
      var += d * d;
    }
    want += std::sqrt(var / static_cast<double>(rows.size()));
  }
  want /= 5.0;
  CHECK(diversity(rows) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("diversity is exactly order invariant") {
  RandomStream rs(67);
  std::vector<std::array<float, 5>> rows;
  for (int i = 0; i < 9; ++i) {
    std::array<float, 5> r;
    for (auto& v : r) v = static_cast<float>(rs.uniform());
    rows.push_back(r);
  }
  double base = diversity(rows);
  for (int rep = 0; rep < 20; ++rep) {
    auto shuffled = rows;
    for (size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rs.uniform_int(static_cast<std::uint32_t>(i))]);
    CHECK(diversity(shuffled) == base);  // bitwise
  }
  CHECK(diversity({rows[0]}) == 0.0);
}

TEST_CASE("dice closed forms") {
  Tensor a({2, 2, 2}), b({2, 2, 2});
  CHECK(dice_coefficient(a, b) == doctest::Approx(1.0));  // both empty
  a.data()[0] = 1.0f;
  CHECK(dice_coefficient(a, b) == doctest::Approx(0.0));
  b.data()[0] = 1.0f;
  CHECK(dice_coefficient(a, b) == doctest::Approx(1.0));
  b.data()[1] = 1.0f;  // |A|=1 |B|=2 |A∩B|=1 -> 2/3
  CHECK(dice_coefficient(a, b) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("auc hand values") {
  // perfect separation
  CHECK(auc_midrank({{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}}).value() == doctest::Approx(1.0));
  // perfect inversion
  CHECK(auc_midrank({{0.1, 1}, {0.9, 0}}).value() == doctest::Approx(0.0));
  // one crossing pair out of four -> 0.75
  CHECK(auc_midrank({{0.9, 1}, {0.3, 1}, {0.5, 0}, {0.1, 0}}).value() == doctest::Approx(0.75));
  // all tied -> 0.5
  CHECK(auc_midrank({{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}}).value() == doctest::Approx(0.5));
  // single class -> undefined
  CHECK_FALSE(auc_midrank({{0.5, 1}, {0.4, 1}}).has_value());
  CHECK_FALSE(auc_midrank({}).has_value());
}

TEST_CASE("auc equals pair counting exactly, ties included") {
  RandomStream rs(73);
  for (int rep = 0; rep < 30; ++rep) {
    int n = 2 + static_cast<int>(rs.uniform_int(48));
    std::vector<std::pair<double, int>> scored;
    bool seen[2] = {false, false};
    for (int i = 0; i < n; ++i) {
      // score grid of 0.05 steps forces plenty of exact ties
      double s = static_cast<double>(rs.uniform_int(21)) * 0.05;
      int label = static_cast<int>(rs.uniform_int(2));
      seen[label] = true;
      scored.emplace_back(s, label);
    }
    if (!seen[0] || !seen[1]) {
      CHECK_FALSE(auc_midrank(scored).has_value());
      continue;
    }
    auto got = auc_midrank(scored);
    REQUIRE(got.has_value());
    CHECK(got.value() == auc_pairs(scored));  // exact, both are ratios of half-integers
  }
}

TEST_CASE("div histogram bins and clamps") {
  Histogram h = div_histogram({0.0, 0.0049, 0.005, 0.2499, 0.25, 5.0});
  REQUIRE(h.counts.size() == 50);
  REQUIRE(h.edges.size() == 51);
  CHECK(h.edges.front() == doctest::Approx(0.0));
  CHECK(h.edges.back() == doctest::Approx(0.25));
  CHECK(h.counts[0] == 2);   // 0.0 and 0.0049
  CHECK(h.counts[1] == 1);   // 0.005 lands in the second bin
  CHECK(h.counts[49] == 3);  // 0.2499 plus the two clamped values
  int total = 0;
  for (int c : h.counts) total += c;
  CHECK(total == 6);
}

}  // TEST_SUITE
