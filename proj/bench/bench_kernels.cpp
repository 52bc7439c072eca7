// OpenMP kernels against the serial reference on the shapes of the default network.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "eegadapt/kernels.hpp"

namespace k = eegadapt::kernels;

namespace {

struct Layer {
  std::size_t in, out, time;
};

// Blocks of the default network on 8-channel, 256-sample trials.
constexpr Layer kLayers[] = {{8, 24, 256}, {24, 48, 128}, {48, 96, 64}};
constexpr std::size_t kKernel = 7;

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

struct ConvData {
  k::ConvDims d;
  std::size_t batch, time;
  std::vector<double> x, w, b, y, dy, dx, dw, db;
  ConvData(const Layer& l, std::size_t batch_)
      : d{l.in, l.out, kKernel},
        batch(batch_),
        time(l.time),
        x(random_vec(batch * l.in * l.time, 1)),
        w(random_vec(l.out * l.in * kKernel, 2)),
        b(random_vec(l.out, 3)),
        y(batch * l.out * l.time),
        dy(random_vec(batch * l.out * l.time, 4)),
        dx(x.size()),
        dw(w.size()),
        db(l.out) {}
};

template <bool Ref>
void BM_ConvForward(benchmark::State& st) {
  ConvData c(kLayers[st.range(0)], static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) {
    if constexpr (Ref)
      k::reference::conv1d_forward(c.x, c.batch, c.time, c.d, c.w, c.b, c.y);
    else
      k::conv1d_forward(c.x, c.batch, c.time, c.d, c.w, c.b, c.y);
    benchmark::DoNotOptimize(c.y.data());
  }
}

template <bool Ref>
void BM_ConvBackwardInput(benchmark::State& st) {
  ConvData c(kLayers[st.range(0)], static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) {
    if constexpr (Ref)
      k::reference::conv1d_backward_input(c.dy, c.batch, c.time, c.d, c.w, c.dx);
    else
      k::conv1d_backward_input(c.dy, c.batch, c.time, c.d, c.w, c.dx);
    benchmark::DoNotOptimize(c.dx.data());
  }
}

template <bool Ref>
void BM_ConvBackwardWeights(benchmark::State& st) {
  ConvData c(kLayers[st.range(0)], static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) {
    if constexpr (Ref)
      k::reference::conv1d_backward_weights(c.dy, c.x, c.batch, c.time, c.d, c.dw, c.db);
    else
      k::conv1d_backward_weights(c.dy, c.x, c.batch, c.time, c.d, c.dw, c.db);
    benchmark::DoNotOptimize(c.dw.data());
  }
}

template <bool Ref>
void BM_BatchNorm(benchmark::State& st) {
  const Layer& l = kLayers[st.range(0)];
  const k::Shape3 s{static_cast<std::size_t>(st.range(1)), l.out, l.time};
  auto x = random_vec(s.size(), 5);
  auto dy = random_vec(s.size(), 6);
  std::vector<double> mean(l.out), var(l.out), gamma(l.out, 1.0), beta(l.out, 0.0);
  std::vector<double> xhat(s.size()), y(s.size()), dx(s.size()), dg(l.out), dbt(l.out);
  for (auto _ : st) {
    if constexpr (Ref) {
      k::reference::channel_moments(x, s, mean, var);
      k::reference::batchnorm_forward(x, s, mean, var, gamma, beta, 1e-5, xhat, y);
      k::reference::batchnorm_backward(dy, xhat, s, var, gamma, 1e-5, dx, dg, dbt);
    } else {
      k::channel_moments(x, s, mean, var);
      k::batchnorm_forward(x, s, mean, var, gamma, beta, 1e-5, xhat, y);
      k::batchnorm_backward(dy, xhat, s, var, gamma, 1e-5, dx, dg, dbt);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Ref>
void BM_MaxPool(benchmark::State& st) {
  const Layer& l = kLayers[st.range(0)];
  const k::Shape3 s{static_cast<std::size_t>(st.range(1)), l.out, l.time};
  auto x = random_vec(s.size(), 7);
  std::vector<double> y(s.size() / 2), dx(s.size());
  std::vector<std::uint32_t> arg(y.size());
  for (auto _ : st) {
    if constexpr (Ref) {
      k::reference::maxpool_forward(x, s, 2, y, arg);
      k::reference::maxpool_backward(y, arg, dx);
    } else {
      k::maxpool_forward(x, s, 2, y, arg);
      k::maxpool_backward(y, arg, dx);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  for (int layer = 0; layer < 3; ++layer)
    for (int batch : {1, 32, 100}) b->Args({layer, batch});
  b->ArgNames({"layer", "batch"});
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Apply(shapes);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/openmp")->Apply(shapes);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("conv_backward_input/reference")->Apply(shapes);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("conv_backward_input/openmp")->Apply(shapes);
BENCHMARK(BM_ConvBackwardWeights<true>)->Name("conv_backward_weights/reference")->Apply(shapes);
BENCHMARK(BM_ConvBackwardWeights<false>)->Name("conv_backward_weights/openmp")->Apply(shapes);
BENCHMARK(BM_BatchNorm<true>)->Name("batchnorm/reference")->Apply(shapes);
BENCHMARK(BM_BatchNorm<false>)->Name("batchnorm/openmp")->Apply(shapes);
BENCHMARK(BM_MaxPool<true>)->Name("maxpool/reference")->Apply(shapes);
BENCHMARK(BM_MaxPool<false>)->Name("maxpool/openmp")->Apply(shapes);

BENCHMARK_MAIN();
