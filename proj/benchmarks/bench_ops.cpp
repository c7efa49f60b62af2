#include <benchmark/benchmark.h>

#include <fcdx/autodiff.hpp>
#include <fcdx/gemm.hpp>
#include <fcdx/nn_ops.hpp>
#include <fcdx/nsam.hpp>
#include <fcdx/ops.hpp>
#include <fcdx/random.hpp>
#include <fcdx/tensor.hpp>

#include <vector>

namespace {

using fcdx::RandomStream;
using fcdx::Tensor;

Tensor randn(const std::vector<int>& shape, RandomStream& rs) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rs.normal());
  return t;
}

// Dense hot shape from the widest dense block: 1x1 bottleneck conv,
// 128 output channels contracting 160 inputs over a 32^3 grid.
void BM_GemmNN_Dense(benchmark::State& state) {
  const int M = 128, K = 160, N = 32 * 32 * 32;
  RandomStream rs(1);
  Tensor A = randn({M, K}, rs), B = randn({K, N}, rs), C({M, N});
  for (auto _ : state) {
    C.fill(0.0f);
    fcdx::gemm_nn(C.data(), N, M, K, A.data(), K, 1, B.data(), N, 1, N, 0);
    benchmark::DoNotOptimize(C.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * M * K * N * state.iterations(),
                                                 benchmark::Counter::kIsRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmNN_Dense)->Unit(benchmark::kMillisecond);

// Grouped variant matching one tap of the padded-slab 3x3x3 scheme at 32^3:
// rows of 32 valid voxels inside a 34-wide padded slab.
void BM_GemmNN_Grouped(benchmark::State& state) {
  const int M = 32, K = 128;
  const int ngroups = 32 * 32, glen = 32;
  const std::ptrdiff_t bgs = 34;
  RandomStream rs(2);
  Tensor A = randn({M, K}, rs), B = randn({K, ngroups * 34 + 8}, rs), C({M, ngroups * glen});
  for (auto _ : state) {
    C.fill(0.0f);
    fcdx::gemm_nn(C.data(), ngroups * glen, M, K, A.data(), K, 1, B.data(), ngroups * 34 + 8,
                  ngroups, glen, bgs);
    benchmark::DoNotOptimize(C.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * M * K * ngroups * glen * state.iterations(),
                         benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmNN_Grouped)->Unit(benchmark::kMillisecond);

void BM_GemmNT(benchmark::State& state) {
  // Weight-gradient shape: [128 x 160] = g[128 x 32768] * x[160 x 32768]^T.
  const int M = 128, N = 160, V = 32 * 32 * 32;
  RandomStream rs(3);
  Tensor A = randn({M, V}, rs), B = randn({N, V}, rs), C({M, N});
  for (auto _ : state) {
    C.fill(0.0f);
    fcdx::gemm_nt(C.data(), N, 1, M, N, A.data(), V, B.data(), V, 1, V, 0, 0);
    benchmark::DoNotOptimize(C.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * M * N * V * state.iterations(),
                                                 benchmark::Counter::kIsRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_GemmNT)->Unit(benchmark::kMillisecond);

// 3x3x3 convolution as used by the widest dense-unit: 128 -> 32 channels at 32^3.
void BM_Conv3dForward(benchmark::State& state) {
  RandomStream rs(4);
  Tensor xt = randn({128, 32, 32, 32}, rs);
  Tensor wt = randn({32, 128, 3, 3, 3}, rs);
  for (float* p = wt.data(); p != wt.data() + wt.numel(); ++p) *p *= 0.01f;
  for (auto _ : state) {
    auto x = fcdx::make_const(xt);
    auto w = fcdx::make_const(wt);
    auto y = fcdx::conv3d(x, w);
    benchmark::DoNotOptimize(y->value.data());
  }
  double flops = 2.0 * 32 * 128 * 27 * 32 * 32 * 32;
  state.counters["GFLOP/s"] = benchmark::Counter(flops * state.iterations(),
                                                 benchmark::Counter::kIsRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv3dForward)->Unit(benchmark::kMillisecond);

void BM_Conv3dTrainStep(benchmark::State& state) {
  RandomStream rs(5);
  Tensor xt = randn({128, 32, 32, 32}, rs);
  Tensor wt = randn({32, 128, 3, 3, 3}, rs);
  for (float* p = wt.data(); p != wt.data() + wt.numel(); ++p) *p *= 0.01f;
  for (auto _ : state) {
    auto x = fcdx::make_param(xt);
    auto w = fcdx::make_param(wt);
    auto y = fcdx::conv3d(x, w);
    auto loss = fcdx::sum(y);
    fcdx::backward(loss);
    benchmark::DoNotOptimize(w->grad.data());
    x->grad = Tensor();
    w->grad = Tensor();
  }
  // forward + input-gradient + weight-gradient
  double flops = 3.0 * 2.0 * 32 * 128 * 27 * 32 * 32 * 32;
  state.counters["GFLOP/s"] = benchmark::Counter(flops * state.iterations(),
                                                 benchmark::Counter::kIsRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv3dTrainStep)->Unit(benchmark::kMillisecond);

// One self-attention stack pass over a 512-point cloud at the deployed width.
void BM_NsamRepresent(benchmark::State& state) {
  fcdx::ModelConfig cfg;  // width 256, 3 layers, 8 heads
  RandomStream init(6);
  fcdx::ParamSetT<float> ps;
  fcdx::NsamT<float> nsam(ps, init, cfg);
  RandomStream rs(7);
  Tensor xt = randn({512, cfg.cls_channels}, rs);
  for (auto _ : state) {
    auto x = fcdx::make_const(xt);
    auto rep = nsam.represent(x);
    benchmark::DoNotOptimize(rep->value.data());
  }
}
BENCHMARK(BM_NsamRepresent)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
