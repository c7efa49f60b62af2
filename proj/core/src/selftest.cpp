#include "fcdx/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fcdx/cloud.hpp"
#include "fcdx/losses.hpp"
#include "fcdx/metrics.hpp"
#include "fcdx/nsam.hpp"
#include "fcdx/prior.hpp"

namespace fcdx {
namespace {

using DVar = VarT<double>;
using DTensor = TensorT<double>;

struct Harness {
  std::ostream& out;
  int failures = 0;

  void check(const std::string& name, bool ok, const std::string& detail = "") {
    if (ok) {
      out << "PASS " << name << "\n";
    } else {
      out << "FAIL " << name << (detail.empty() ? "" : " (" + detail + ")") << "\n";
      ++failures;
    }
  }
};

DTensor randn(std::vector<int> shape, RandomStream& rs, double scale = 1.0, double offset = 0.0) {
  DTensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rs.normal() * scale + offset;
  return t;
}

// Values kept away from zero so kinked ops (relu) stay locally linear around
// the probe.
DTensor randn_off_zero(std::vector<int> shape, RandomStream& rs, double margin = 0.2) {
  DTensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    double n = rs.normal();
    t[i] = (n >= 0 ? 1.0 : -1.0) * (margin + std::abs(n));
  }
  return t;
}

// Scalarize an arbitrary output with fixed random weights.
DVar wsum(const DVar& y, RandomStream rs) {
  DTensor w(y->value.shape());
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = rs.normal();
  return sum(mul(y, make_const(std::move(w))));
}

// Central finite differences against the analytic gradient on random probes.
double fd_worst(const std::function<DVar()>& build, const std::vector<DVar>& leaves, RandomStream rs,
                int probes = 20) {
  for (const auto& l : leaves) zero_grad(l);
  backward(build());
  const double h = 1e-5;
  double worst = 0;
  for (const auto& leaf : leaves) {
    for (int p = 0; p < probes; ++p) {
      std::int64_t idx =
          static_cast<std::int64_t>(rs.uniform_int(static_cast<std::uint64_t>(leaf->value.numel())));
      double x0 = leaf->value[idx];
      leaf->value[idx] = x0 + h;
      double lp = build()->value.item();
      leaf->value[idx] = x0 - h;
      double lm = build()->value.item();
      leaf->value[idx] = x0;
      double fd = (lp - lm) / (2 * h);
      double an = leaf->grad.defined() ? leaf->grad[idx] : 0.0;
      double denom = std::max(std::max(std::abs(fd), std::abs(an)), 1e-3);
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

void grad_case(Harness& h, const std::string& name, const std::function<DVar()>& build,
               const std::vector<DVar>& leaves, RandomStream rs) {
  double w = fd_worst(build, leaves, rs);
  char detail[64];
  std::snprintf(detail, sizeof(detail), "worst rel err %.3g", w);
  h.check("grad/" + name, w <= 1e-4, detail);
}

void gradient_checks(Harness& h) {
  RandomStream rs(0xfeed);

  {
    auto a = make_param(randn({3, 4}, rs));
    auto b = make_param(randn({3, 4}, rs));
    auto build = [=] { return wsum(mul(add(a, b), sub(a, scale(b, 0.7))), RandomStream(11)); };
    grad_case(h, "arith", build, {a, b}, rs.child("p1"));
  }
  {
    auto a = make_param(randn({2, 5}, rs, 0.5));
    auto build = [=] { return wsum(exp_op(a), RandomStream(12)); };
    grad_case(h, "exp", build, {a}, rs.child("p2"));
  }
  {
    auto a = make_param(randn_off_zero({4, 5}, rs));
    auto build = [=] { return wsum(relu(a), RandomStream(13)); };
    grad_case(h, "relu", build, {a}, rs.child("p3"));
  }
  {
    auto a = make_param(randn_off_zero({4, 5}, rs));
    auto build = [=] { return wsum(elu(a), RandomStream(14)); };
    grad_case(h, "elu", build, {a}, rs.child("p4"));
  }
  {
    auto a = make_param(randn({4, 5}, rs));
    auto build = [=] { return wsum(sigmoid(a), RandomStream(15)); };
    grad_case(h, "sigmoid", build, {a}, rs.child("p5"));
  }
  {
    auto a = make_param(randn({3, 6}, rs));
    auto build = [=] {
      return add(wsum(softmax(a, 1), RandomStream(16)), wsum(softmax(a, 0), RandomStream(17)));
    };
    grad_case(h, "softmax", build, {a}, rs.child("p6"));
  }
  {
    auto a = make_param(randn({3, 4}, rs));
    auto b = make_param(randn({4, 5}, rs));
    auto build = [=] { return wsum(matmul(a, b), RandomStream(18)); };
    grad_case(h, "matmul", build, {a, b}, rs.child("p7"));
  }
  {
    auto a = make_param(randn({3, 4}, rs));
    auto b = make_param(randn({6, 4}, rs));
    auto build = [=] { return wsum(matmul_nt(a, b), RandomStream(19)); };
    grad_case(h, "matmul_nt", build, {a, b}, rs.child("p8"));
  }
  {
    auto x = make_param(randn({7}, rs));
    auto w = make_param(randn({4, 7}, rs));
    auto b = make_param(randn({4}, rs));
    auto build = [=] { return wsum(linear(x, w, b), RandomStream(20)); };
    grad_case(h, "linear", build, {x, w, b}, rs.child("p9"));
  }
  {
    auto x = make_param(randn({5, 7}, rs));
    auto w = make_param(randn({4, 7}, rs));
    auto b = make_param(randn({4}, rs));
    auto build = [=] { return wsum(linear_rows(x, w, b), RandomStream(21)); };
    grad_case(h, "linear_rows", build, {x, w, b}, rs.child("p10"));
    auto build2 = [=] { return wsum(linear_rows<double>(x, w), RandomStream(22)); };
    grad_case(h, "linear_rows_nobias", build2, {x, w}, rs.child("p11"));
  }
  {
    auto x = make_param(randn({2, 4, 4, 4}, rs));
    auto w = make_param(randn({3, 2, 3, 3, 3}, rs, 0.3));
    auto b = make_param(randn({3}, rs));
    auto build = [=] { return wsum(conv3d(x, w, b), RandomStream(23)); };
    grad_case(h, "conv3d_k3", build, {x, w, b}, rs.child("p12"));
  }
  {
    auto x = make_param(randn({3, 4, 4, 4}, rs));
    auto w = make_param(randn({2, 3, 1, 1, 1}, rs));
    auto build = [=] { return wsum(conv3d<double>(x, w), RandomStream(24)); };
    grad_case(h, "conv3d_k1", build, {x, w}, rs.child("p13"));
  }
  {
    auto x = make_param(randn({3, 4, 4, 4}, rs));
    auto g = make_param(randn({3}, rs, 0.3, 1.0));
    auto be = make_param(randn({3}, rs, 0.3));
    auto state = std::make_shared<BNStateT<double>>(3);
    auto build = [=] { return wsum(batchnorm(x, g, be, *state, true), RandomStream(25)); };
    grad_case(h, "batchnorm", build, {x, g, be}, rs.child("p14"));
  }
  {
    auto x = make_param(randn({2, 4, 4, 4}, rs));
    auto build = [=] { return wsum(avgpool3d(x), RandomStream(26)); };
    grad_case(h, "avgpool", build, {x}, rs.child("p15"));
  }
  {
    auto x = make_param(randn({2, 3, 3, 3}, rs));
    auto build = [=] { return wsum(trilinear_upsample(x, 2), RandomStream(27)); };
    grad_case(h, "upsample", build, {x}, rs.child("p16"));
  }
  {
    auto a = make_param(randn({2, 3, 3, 3}, rs));
    auto b = make_param(randn({1, 3, 3, 3}, rs));
    auto build = [=] { return wsum(concat0(a, b), RandomStream(28)); };
    grad_case(h, "concat0", build, {a, b}, rs.child("p17"));
  }
  {
    auto a = make_param(randn({4, 3}, rs));
    auto b = make_param(randn({4, 2}, rs));
    auto build = [=] { return wsum(concat_cols<double>({a, b}), RandomStream(29)); };
    grad_case(h, "concat_cols", build, {a, b}, rs.child("p18"));
  }
  {
    auto f = make_param(randn({3}, rs));
    auto build = [=] { return wsum(broadcast_channels(f, 2, 2, 2), RandomStream(30)); };
    grad_case(h, "broadcast_channels", build, {f}, rs.child("p19"));
  }
  {
    auto f = make_param(randn({4}, rs));
    auto build = [=] { return wsum(broadcast_rows(f, 5), RandomStream(31)); };
    grad_case(h, "broadcast_rows", build, {f}, rs.child("p20"));
  }
  {
    auto f = make_param(randn({10}, rs));
    auto build = [=] { return wsum(slice_vec(f, 2, 4), RandomStream(32)); };
    grad_case(h, "slice_vec", build, {f}, rs.child("p21"));
  }
  {
    auto x = make_param(randn({3, 3, 3, 3}, rs));
    std::vector<std::int64_t> idx{0, 5, 26, 13};
    auto build = [=] { return wsum(gather_voxels(x, idx), RandomStream(33)); };
    grad_case(h, "gather_voxels", build, {x}, rs.child("p22"));
  }
  {
    auto x = make_param(randn({6, 4}, rs));
    auto build = [=] { return wsum(global_mean_rows(x), RandomStream(34)); };
    grad_case(h, "global_mean_rows", build, {x}, rs.child("p23"));
  }
  {
    auto x = make_param(randn({3, 2, 2, 2}, rs));
    auto build = [=] { return wsum(spatial_mean(x), RandomStream(35)); };
    grad_case(h, "spatial_mean", build, {x}, rs.child("p24"));
  }
  {
    auto logits = make_param(randn({5}, rs));
    auto build = [=] { return rating_cross_entropy(logits, 4); };
    grad_case(h, "cross_entropy", build, {logits}, rs.child("p25"));
  }
  {
    auto pre = make_param(randn({1, 4, 4, 4}, rs));
    DTensor mask({1, 4, 4, 4});
    RandomStream mrs(77);
    for (std::int64_t i = 0; i < mask.numel(); ++i) mask[i] = mrs.uniform() < 0.4 ? 1.0 : 0.0;
    auto build = [=] { return dice_loss(sigmoid(pre), mask); };
    grad_case(h, "dice_loss", build, {pre}, rs.child("p26"));
  }
  {
    auto mu = make_param(randn({6}, rs));
    auto lv = make_param(randn({6}, rs, 0.5));
    DTensor noise = randn({6}, rs);
    auto build = [=] { return wsum(reparameterize_with(mu, lv, noise.clone()), RandomStream(36)); };
    grad_case(h, "reparameterize", build, {mu, lv}, rs.child("p27"));
  }
  {
    auto x = make_param(randn({5, 4}, rs));
    auto build = [=] { return wsum(attention(x), RandomStream(37)); };
    grad_case(h, "attention", build, {x}, rs.child("p28"));
  }
}

void softmax_checks(Harness& h) {
  RandomStream rs(4242);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    TensorT<float> x({7});
    for (int i = 0; i < 7; ++i) x[i] = static_cast<float>(rs.normal() * 4);
    auto y = softmax(make_const(std::move(x)), 0);
    double s = 0;
    for (int i = 0; i < 7; ++i) s += y->value[i];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  char d[64];
  std::snprintf(d, sizeof(d), "worst |sum-1| = %.3g", worst);
  h.check("softmax/rows_sum_to_one", worst <= 1e-6, d);
}

void attention_checks(Harness& h) {
  RandomStream rs(0xa77e);
  // Row-stochastic attention weights.
  {
    auto x = make_const(randn({6, 4}, rs));
    auto scores = scale(matmul_nt(x, x), 0.5);
    auto a = softmax(scores, 1);
    double worst = 0;
    for (int i = 0; i < 6; ++i) {
      double s = 0;
      for (int j = 0; j < 6; ++j) s += a->value[i * 6 + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
    h.check("attention/row_stochastic", worst <= 1e-6);
  }
  // Permuting the set permutes the outputs and leaves the pooled mean alone.
  {
    DTensor x = randn({7, 4}, rs);
    std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};
    DTensor px({7, 4});
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 4; ++j) px[i * 4 + j] = x[perm[static_cast<size_t>(i)] * 4 + j];
    auto y = attention(make_const(x.clone()));
    auto py = attention(make_const(px.clone()));
    double worst = 0;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 4; ++j)
        worst = std::max(worst,
                         std::abs(py->value[i * 4 + j] - y->value[perm[static_cast<size_t>(i)] * 4 + j]));
    h.check("attention/permutation_equivariant", worst <= 1e-9);

    auto m = global_mean_rows(y);
    auto pm = global_mean_rows(py);
    double dm = 0;
    for (int j = 0; j < 4; ++j) dm = std::max(dm, std::abs(m->value[j] - pm->value[j]));
    h.check("attention/pooled_invariant", dm <= 1e-9);
  }
}

void reparam_checks(Harness& h) {
  RandomStream rs(0x5eed);
  DTensor mu = randn({6}, rs);
  DTensor lv = randn({6}, rs, 0.4);
  // Zero noise: output is exactly the mean.
  {
    auto f = reparameterize_with(make_const(mu.clone()), make_const(lv.clone()), DTensor({6}));
    bool same = true;
    for (int i = 0; i < 6; ++i) same = same && f->value[i] == mu[i];
    h.check("reparam/zero_noise_is_mu", same);
  }
  // Collapsed variance: every draw equals the mean.
  {
    auto f = reparameterize(make_const(mu.clone()), make_const(DTensor::full({6}, -80.0)),
                            RandomStream(9));
    double worst = 0;
    for (int i = 0; i < 6; ++i) worst = std::max(worst, std::abs(f->value[i] - mu[i]));
    h.check("reparam/collapsed_variance", worst <= 1e-7);
  }
  // Monte-Carlo moments.
  {
    DTensor m2({2});
    m2[0] = 0.3;
    m2[1] = -0.7;
    DTensor l2({2});
    l2[0] = 2.0 * std::log(0.5);
    l2[1] = 2.0 * std::log(0.2);
    const int n = 20000;
    double s0 = 0, s1 = 0, q0 = 0, q1 = 0;
    RandomStream draw(31337);
    for (int j = 0; j < n; ++j) {
      auto f = reparameterize(make_const(m2.clone()), make_const(l2.clone()),
                              draw.child(static_cast<std::uint64_t>(j)));
      s0 += f->value[0];
      s1 += f->value[1];
      q0 += f->value[0] * f->value[0];
      q1 += f->value[1] * f->value[1];
    }
    double mean0 = s0 / n, mean1 = s1 / n;
    double sd0 = std::sqrt(q0 / n - mean0 * mean0), sd1 = std::sqrt(q1 / n - mean1 * mean1);
    bool ok = std::abs(mean0 - 0.3) < 0.05 && std::abs(mean1 + 0.7) < 0.05 &&
              std::abs(sd0 - 0.5) < 0.05 && std::abs(sd1 - 0.2) < 0.05;
    char d[128];
    std::snprintf(d, sizeof(d), "mean (%.3f, %.3f) sd (%.3f, %.3f)", mean0, mean1, sd0, sd1);
    h.check("reparam/monte_carlo_moments", ok, d);
  }
}

void aggregation_checks(Harness& h) {
  RandomStream rs(0x2484);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::array<float, 5>> rows(1 + t % 7);
    for (auto& r : rows)
      for (auto& v : r) v = static_cast<float>(rs.normal() * 5);
    auto agg = aggregate_binary(rows);
    worst = std::max(worst, std::abs(agg.p_b + agg.p_m - 1.0));
  }
  h.check("aggregate/sums_to_one", worst <= 1e-6);

  {
    std::vector<std::array<float, 5>> one{{10, 0, 0, 0, 0}};
    auto agg = aggregate_binary(one);
    double expect = (std::exp(10.0) + 1.0) / (std::exp(10.0) + 3.0);
    h.check("aggregate/hand_value", std::abs(agg.p_b - expect) <= 1e-9 &&
                                        std::abs(agg.p_b - 0.99996) <= 1e-4);
  }
  {
    std::vector<std::array<float, 5>> rows{{10, 0, 0, 0, 0}, {0, 0, 0, 0, 10}};
    auto agg = aggregate_binary(rows);
    h.check("aggregate/extreme_average",
            std::abs(agg.p_b - 0.5) <= 1e-4 && std::abs(agg.p_m - 0.5) <= 1e-4);
  }

  // Diversity against an independent two-pass reference, plus exact order
  // invariance.
  {
    std::vector<std::array<float, 5>> rows(17);
    for (auto& r : rows) {
      double z = 0;
      for (auto& v : r) {
        v = static_cast<float>(std::exp(rs.normal()));
        z += v;
      }
      for (auto& v : r) v = static_cast<float>(v / z);
    }
    double ref = 0;
    for (int c = 0; c < 5; ++c) {
      double mean = 0;
      for (const auto& r : rows) mean += r[static_cast<size_t>(c)];
      mean /= static_cast<double>(rows.size());
      double var = 0;
      for (const auto& r : rows) {
        double d = r[static_cast<size_t>(c)] - mean;
        var += d * d;
      }
      ref += std::sqrt(var / static_cast<double>(rows.size()));
    }
    ref /= 5.0;
    double got = diversity(rows);
    h.check("diversity/two_pass_reference", std::abs(got - ref) <= 1e-9);

    auto shuffled = rows;
    RandomStream prs(5);
    for (size_t i = 0; i + 1 < shuffled.size(); ++i) {
      size_t j = i + static_cast<size_t>(prs.uniform_int(static_cast<std::uint64_t>(shuffled.size() - i)));
      std::swap(shuffled[i], shuffled[j]);
    }
    h.check("diversity/order_invariant", diversity(shuffled) == got);
    h.check("diversity/single_row_zero", diversity({rows[0]}) == 0.0);
  }
}

void refusal_checks(Harness& h) {
  {
    Tensor p = Tensor::full({8, 8, 8}, 0.5f);
    h.check("cloud/volume_soft_sum", estimate_volume(p) == 256.0);
  }
  {
    Tensor p({8, 8, 8});
    for (int i = 0; i < 27; ++i) p[i * 3] = 1.0f;
    auto sel = select_predicted(p, 1024, 10.0f);
    h.check("cloud/mask_27_keeps_27", !sel.refused && sel.indices.size() == 27);
  }
  {
    Tensor p({8, 8, 8});
    for (int i = 0; i < 19; ++i) p[i * 5] = 0.5f;  // soft volume exactly 9.5
    auto sel = select_predicted(p, 1024, 10.0f);
    h.check("cloud/volume_9_5_refuses", sel.refused && sel.estimated_volume == 9.5);
  }
}

}  // namespace

int run_selftest(std::ostream& out) {
  Harness h{out};
  gradient_checks(h);
  softmax_checks(h);
  attention_checks(h);
  reparam_checks(h);
  aggregation_checks(h);
  refusal_checks(h);
  out << (h.failures == 0 ? "selftest: all checks passed\n"
                          : "selftest: " + std::to_string(h.failures) + " check(s) failed\n");
  return h.failures;
}

}  // namespace fcdx
