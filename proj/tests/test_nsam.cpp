#include <doctest.h>

#include <fcdx/autodiff.hpp>
#include <fcdx/nsam.hpp>
#include <fcdx/ops.hpp>
#include <fcdx/params.hpp>
#include <fcdx/random.hpp>

#include <cmath>
#include <vector>

using namespace fcdx;

namespace {

Tensor randnf(const std::vector<int>& shape, RandomStream& rs) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rs.normal());
  return t;
}

double elu_ref(double v) { return v > 0 ? v : std::expm1(v); }

// Direct double-precision restatement of one attention layer: per head,
// project rows, score, row-softmax, mix elu'd projections, then concatenate
// heads and add the skip. Shares nothing with the graph ops.
std::vector<std::vector<double>> layer_oracle(const Tensor& x,
                                              const std::vector<VarT<float>>& heads_w) {
  int N = x.dim(0), c = x.dim(1);
  int H = static_cast<int>(heads_w.size());
  int cg = heads_w[0]->value.dim(0);
  std::vector<std::vector<double>> out(static_cast<size_t>(N), std::vector<double>(static_cast<size_t>(c)));
  for (int h = 0; h < H; ++h) {
    const Tensor& w = heads_w[static_cast<size_t>(h)]->value;
    std::vector<std::vector<double>> xp(static_cast<size_t>(N), std::vector<double>(static_cast<size_t>(cg)));
    for (int i = 0; i < N; ++i)
      for (int g = 0; g < cg; ++g) {
        double acc = 0;
        for (int k = 0; k < c; ++k) acc += static_cast<double>(x.data()[i * c + k]) * w.data()[g * c + k];
        xp[static_cast<size_t>(i)][static_cast<size_t>(g)] = acc;
      }
    double inv = 1.0 / std::sqrt(static_cast<double>(cg));
    for (int i = 0; i < N; ++i) {
      std::vector<double> s(static_cast<size_t>(N));
      double mx = -1e300;
      for (int j = 0; j < N; ++j) {
        double acc = 0;
        for (int g = 0; g < cg; ++g) acc += xp[static_cast<size_t>(i)][static_cast<size_t>(g)] * xp[static_cast<size_t>(j)][static_cast<size_t>(g)];
        s[static_cast<size_t>(j)] = acc * inv;
        mx = std::max(mx, s[static_cast<size_t>(j)]);
      }
      double z = 0;
      for (double& v : s) {
        v = std::exp(v - mx);
        z += v;
      }
      for (int g = 0; g < cg; ++g) {
        double acc = 0;
        for (int j = 0; j < N; ++j)
          acc += (s[static_cast<size_t>(j)] / z) * elu_ref(xp[static_cast<size_t>(j)][static_cast<size_t>(g)]);
        out[static_cast<size_t>(i)][static_cast<size_t>(h * cg + g)] = acc;
      }
    }
  }
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < c; ++k) out[static_cast<size_t>(i)][static_cast<size_t>(k)] += x.data()[i * c + k];
  return out;
}

NsamT<float> make_nsam(ParamSetT<float>& ps, int width, int layers, int heads, int hidden,
                       std::uint64_t seed) {
  ModelConfig cfg;
  cfg.cls_channels = width;
  cfg.nsam_layers = layers;
  cfg.nsam_heads = heads;
  cfg.mlp_hidden = hidden;
  RandomStream init(seed);
  return NsamT<float>(ps, init, cfg);
}

}  // namespace

TEST_SUITE("nsam") {

TEST_CASE("single-head attention hand computation, N=2, c_g=1") {
  // x' = [[1],[2]]; scores/sqrt(1) = [[1,2],[2,4]];
  // row softmax: [s(1,2)], mix elu(x') = x' (positive)
  auto xp = make_const(Tensor::from({2, 1}, {1.0f, 2.0f}));
  auto y = attention(xp);
  double a0 = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0));
  double a1 = std::exp(2.0) / (std::exp(1.0) + std::exp(2.0));
  double b0 = std::exp(2.0) / (std::exp(2.0) + std::exp(4.0));
  double b1 = std::exp(4.0) / (std::exp(2.0) + std::exp(4.0));
  CHECK(y->value.data()[0] == doctest::Approx(a0 * 1.0 + a1 * 2.0).epsilon(1e-6));
  CHECK(y->value.data()[1] == doctest::Approx(b0 * 1.0 + b1 * 2.0).epsilon(1e-6));
}

TEST_CASE("attention weights are row-stochastic even for wild inputs") {
  RandomStream rs(21);
  Tensor x = randnf({9, 4}, rs);
  for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] *= 30.0f;
  // recover the weights by attending identity-like probes is awkward; instead
  // check through the public op: softmax of scores is internal, so verify the
  // output is a convex combination by bounding with min/max of elu(x') columns
  auto xp = make_const(x);
  auto y = attention(xp);
  for (int g = 0; g < 4; ++g) {
    float lo = 1e30f, hi = -1e30f;
    for (int j = 0; j < 9; ++j) {
      float v = static_cast<float>(elu_ref(x.data()[j * 4 + g]));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (int i = 0; i < 9; ++i) {
      CHECK(y->value.data()[i * 4 + g] >= lo - 1e-4f);
      CHECK(y->value.data()[i * 4 + g] <= hi + 1e-4f);
    }
  }
}

TEST_CASE("layer equals the per-head oracle on N in {1,2,5,17}") {
  ParamSetT<float> ps;
  auto nsam = make_nsam(ps, 12, 2, 3, 8, 77);
  RandomStream rs(23);
  for (int N : {1, 2, 5, 17}) {
    Tensor x = randnf({N, 12}, rs);
    auto y = nsam.layer(0, make_const(x));
    auto ref = layer_oracle(x, nsam.w[0]);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < 12; ++k) {
        double got = y->value.data()[i * 12 + k];
        double want = ref[static_cast<size_t>(i)][static_cast<size_t>(k)];
        CHECK(got == doctest::Approx(want).epsilon(5e-5));
      }
  }
}

TEST_CASE("represent is invariant to row permutation") {
  ParamSetT<float> ps;
  auto nsam = make_nsam(ps, 8, 2, 2, 6, 31);
  RandomStream rs(29);
  Tensor x = randnf({6, 8}, rs);
  Tensor xp({6, 8});
  int perm[6] = {3, 0, 5, 1, 4, 2};
  for (int i = 0; i < 6; ++i)
    for (int k = 0; k < 8; ++k) xp.data()[i * 8 + k] = x.data()[perm[i] * 8 + k];
  auto r1 = nsam.represent(make_const(x));
  auto r2 = nsam.represent(make_const(xp));
  for (int k = 0; k < 8; ++k)
    CHECK(r1->value.data()[k] == doctest::Approx(r2->value.data()[k]).epsilon(1e-4));
}

TEST_CASE("layer is equivariant to row permutation") {
  ParamSetT<float> ps;
  auto nsam = make_nsam(ps, 8, 1, 2, 6, 37);
  RandomStream rs(41);
  Tensor x = randnf({5, 8}, rs);
  Tensor xp({5, 8});
  int perm[5] = {4, 2, 0, 3, 1};
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 8; ++k) xp.data()[i * 8 + k] = x.data()[perm[i] * 8 + k];
  auto y = nsam.layer(0, make_const(x));
  auto ypm = nsam.layer(0, make_const(xp));
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 8; ++k)
      CHECK(ypm->value.data()[i * 8 + k] ==
            doctest::Approx(y->value.data()[perm[i] * 8 + k]).epsilon(1e-5));
}

TEST_CASE("width must divide evenly into heads") {
  ParamSetT<float> ps;
  ModelConfig cfg;
  cfg.cls_channels = 10;
  cfg.nsam_heads = 4;
  RandomStream init(1);
  CHECK_THROWS_AS(NsamT<float>(ps, init, cfg), config_error);
}

TEST_CASE("stack rejects width mismatch and non-matrix input") {
  ParamSetT<float> ps;
  auto nsam = make_nsam(ps, 8, 1, 2, 6, 43);
  CHECK_THROWS_AS((void)nsam.stack(make_const(Tensor({3, 7}))), dimension_error);
  CHECK_THROWS_AS((void)nsam.stack(make_const(Tensor({8}))), contract_error);
}

TEST_CASE("mlp and mlp_rows agree row-wise") {
  ParamSetT<float> ps;
  auto nsam = make_nsam(ps, 8, 1, 2, 6, 47);
  RandomStream rs(53);
  Tensor x = randnf({3, 8}, rs);
  auto rows = nsam.mlp_rows(make_const(x));
  for (int i = 0; i < 3; ++i) {
    Tensor xi({8});
    for (int k = 0; k < 8; ++k) xi.data()[k] = x.data()[i * 8 + k];
    auto yi = nsam.mlp(make_const(xi));
    for (int k = 0; k < 8; ++k)
      CHECK(rows->value.data()[i * 8 + k] == doctest::Approx(yi->value.data()[k]).epsilon(1e-5));
  }
}

}  // TEST_SUITE
