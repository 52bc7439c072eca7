#include "eegadapt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <type_traits>
#include <vector>

namespace eegadapt::kernels {

namespace {

// Eight doubles; lowered to whatever vector width the target has.
using v8 = double __attribute__((vector_size(64)));

inline v8 load8(const double* p) {
  v8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store8(double* p, v8 v) { std::memcpy(p, &v, sizeof v); }
inline v8 splat(double s) { return v8{s, s, s, s, s, s, s, s}; }

// Copies [rows][time] into [rows][time + 2·pad] with zeros on both sides.
std::vector<double> zero_padded(std::span<const double> x, std::size_t rows, std::size_t time,
                                std::size_t pad) {
  const std::size_t W = time + 2 * pad;
  std::vector<double> out(rows * W, 0.0);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < static_cast<long>(rows); ++r)
    std::copy_n(x.data() + static_cast<std::size_t>(r) * time, time,
                out.data() + static_cast<std::size_t>(r) * W + pad);
  return out;
}

// NJ output rows of a correlation over zero-padded input rows of width W:
//   out[j][t] = init[j] + Σ_c Σ_k wp[(c·K + k)·NJ + j] · in[c][t + off[k]]
// The terms of every element are added in (c, k) order, as in the reference loops.
// Samples go through register tiles of 32 and 8, the remainder is scalar.
template <int NJ>
struct Corr {
  const double* in;
  std::size_t C, W, K;
  const long* off;
  const double* wp;  // packed [c][k][NJ]
  const double* init;
  double* out[NJ];

  template <int NV>
  void tile(std::size_t t0) const {
    v8 acc[NJ][NV];
#pragma GCC unroll 4
    for (int j = 0; j < NJ; ++j)
#pragma GCC unroll 4
      for (int u = 0; u < NV; ++u) acc[j][u] = splat(init[j]);
    for (std::size_t c = 0; c < C; ++c) {
      const double* row = in + c * W + t0;
      const double* wc = wp + c * K * NJ;
      for (std::size_t k = 0; k < K; ++k) {
        v8 x[NV];
#pragma GCC unroll 4
        for (int u = 0; u < NV; ++u) x[u] = load8(row + off[k] + 8 * u);
#pragma GCC unroll 4
        for (int j = 0; j < NJ; ++j) {
          const v8 wj = splat(wc[k * NJ + static_cast<std::size_t>(j)]);
#pragma GCC unroll 4
          for (int u = 0; u < NV; ++u) acc[j][u] += wj * x[u];
        }
      }
    }
    for (int j = 0; j < NJ; ++j)
      for (int u = 0; u < NV; ++u) store8(out[j] + t0 + 8 * u, acc[j][u]);
  }

  void scalar(std::size_t t) const {
    for (int j = 0; j < NJ; ++j) {
      double acc = init[j];
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k)
          acc += wp[(c * K + k) * NJ + static_cast<std::size_t>(j)] *
                 in[c * W + static_cast<std::size_t>(static_cast<long>(t) + off[k])];
      out[j][t] = acc;
    }
  }

  void run(std::size_t T) const {
    std::size_t t = 0;
    for (; t + 32 <= T; t += 32) tile<4>(t);
    for (; t + 8 <= T; t += 8) tile<1>(t);
    for (; t < T; ++t) scalar(t);
  }
};

constexpr std::size_t kBlock = 4;

// Rows [r0, r0 + n) of a correlation, n <= kBlock. `weight(r, c, k)` gives the tap.
template <class Weight>
void correlate_rows(const double* in, std::size_t C, std::size_t W, std::size_t K, const long* off,
                    std::size_t T, std::size_t r0, std::size_t n, const double* init, double* out,
                    Weight weight) {
  auto go = [&](auto nj) {
    constexpr int NJ = decltype(nj)::value;
    std::vector<double> wp(C * K * NJ);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k)
        for (int j = 0; j < NJ; ++j) wp[(c * K + k) * NJ + static_cast<std::size_t>(j)] = weight(r0 + static_cast<std::size_t>(j), c, k);
    Corr<NJ> corr{in, C, W, K, off, wp.data(), init + r0, {}};
    for (int j = 0; j < NJ; ++j) corr.out[j] = out + (r0 + static_cast<std::size_t>(j)) * T;
    corr.run(T);
  };
  switch (n) {
    case 4: go(std::integral_constant<int, 4>{}); break;
    case 3: go(std::integral_constant<int, 3>{}); break;
    case 2: go(std::integral_constant<int, 2>{}); break;
    default: go(std::integral_constant<int, 1>{}); break;
  }
}

}  // namespace

void conv1d_forward(std::span<const double> x, std::size_t batch, std::size_t time, ConvDims d,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y) {
  const std::size_t I = d.in_channels, O = d.out_channels, K = d.kernel, pad = K / 2;
  const std::size_t W = time + 2 * pad;
  const std::vector<double> xp = zero_padded(x, batch * I, time, pad);
  std::vector<long> off(K);
  for (std::size_t k = 0; k < K; ++k) off[k] = static_cast<long>(k);

  const std::size_t blocks = (O + kBlock - 1) / kBlock;
  const long jobs = static_cast<long>(batch * blocks);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / blocks;
    const std::size_t o0 = (static_cast<std::size_t>(job) % blocks) * kBlock;
    correlate_rows(xp.data() + b * I * W, I, W, K, off.data(), time, o0, std::min(kBlock, O - o0),
                   bias.data(), y.data() + b * O * time,
                   [&](std::size_t o, std::size_t i, std::size_t k) { return w[(o * I + i) * K + k]; });
  }
}

void conv1d_backward_input(std::span<const double> dy, std::size_t batch, std::size_t time,
                           ConvDims d, std::span<const double> w, std::span<double> dx) {
  const std::size_t I = d.in_channels, O = d.out_channels, K = d.kernel, pad = K / 2;
  const std::size_t W = time + 2 * pad;
  // dx[i][s] = Σ_o Σ_k w[o][i][k] · dy[o][s - k + pad], i.e. padded index s + 2·pad - k.
  const std::vector<double> gp = zero_padded(dy, batch * O, time, pad);
  std::vector<long> off(K);
  for (std::size_t k = 0; k < K; ++k) off[k] = static_cast<long>(2 * pad - k);
  const std::vector<double> zeros(I, 0.0);

  const std::size_t blocks = (I + kBlock - 1) / kBlock;
  const long jobs = static_cast<long>(batch * blocks);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / blocks;
    const std::size_t i0 = (static_cast<std::size_t>(job) % blocks) * kBlock;
    correlate_rows(gp.data() + b * O * W, O, W, K, off.data(), time, i0, std::min(kBlock, I - i0),
                   zeros.data(), dx.data() + b * I * time,
                   [&](std::size_t i, std::size_t o, std::size_t k) { return w[(o * I + i) * K + k]; });
  }
}

namespace {

// dw[o][i][k] for eight consecutive o and every tap of input channel i. Each entry sums
// dy·x over (b, t) in that order, padding included, like the reference.
template <int K>
void weight_grad_tile(const double* dy_t, const double* xp, std::size_t batch, std::size_t time,
                      std::size_t I, std::size_t O, std::size_t i, std::size_t o0, double* dw) {
  const std::size_t W = time + 2 * (K / 2);
  v8 acc[K];
#pragma GCC unroll 9
  for (int k = 0; k < K; ++k) acc[k] = splat(0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xi = xp + (b * I + i) * W;
    const double* rows = dy_t + b * time * O + o0;
    for (std::size_t t = 0; t < time; ++t) {
      const v8 g = load8(rows + t * O);
#pragma GCC unroll 9
      for (int k = 0; k < K; ++k) acc[k] += g * splat(xi[t + static_cast<std::size_t>(k)]);
    }
  }
  for (int k = 0; k < K; ++k)
    for (std::size_t e = 0; e < 8; ++e) dw[((o0 + e) * I + i) * K + static_cast<std::size_t>(k)] = acc[k][e];
}

}  // namespace

void conv1d_backward_weights(std::span<const double> dy, std::span<const double> x,
                             std::size_t batch, std::size_t time, ConvDims d,
                             std::span<double> dw, std::span<double> dbias) {
  const std::size_t I = d.in_channels, O = d.out_channels, K = d.kernel, pad = K / 2;
  const std::size_t W = time + 2 * pad;
  const std::vector<double> xp = zero_padded(x, batch * I, time, pad);

  // dy as [b][t][o] so vectors run over output channels.
  std::vector<double> dy_t(batch * time * O);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < static_cast<long>(batch); ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t t = 0; t < time; ++t)
        dy_t[(static_cast<std::size_t>(b) * time + t) * O + o] =
            dy[(static_cast<std::size_t>(b) * O + o) * time + t];

  // Groups of eight output channels use the tiles for the common kernel sizes.
  std::size_t tiled = 0;
  auto tiles = [&](auto kc) {
    constexpr int KC = decltype(kc)::value;
    const std::size_t chunks = O / 8;
    const long jobs = static_cast<long>(I * chunks);
#pragma omp parallel for schedule(static)
    for (long job = 0; job < jobs; ++job) {
      const std::size_t i = static_cast<std::size_t>(job) / chunks;
      const std::size_t c = static_cast<std::size_t>(job) % chunks;
      weight_grad_tile<KC>(dy_t.data(), xp.data(), batch, time, I, O, i, 8 * c, dw.data());
    }
    tiled = chunks * 8;
  };
  switch (K) {
    case 3: tiles(std::integral_constant<int, 3>{}); break;
    case 5: tiles(std::integral_constant<int, 5>{}); break;
    case 7: tiles(std::integral_constant<int, 7>{}); break;
    case 9: tiles(std::integral_constant<int, 9>{}); break;
    default: break;
  }

  if (tiled < O) {
    const long jobs = static_cast<long>(I * K);
#pragma omp parallel for schedule(static)
    for (long job = 0; job < jobs; ++job) {
      const std::size_t i = static_cast<std::size_t>(job) / K;
      const std::size_t k = static_cast<std::size_t>(job) % K;
      for (std::size_t o = tiled; o < O; ++o) {
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* xi = xp.data() + (b * I + i) * W + k;
          const double* g = dy.data() + (b * O + o) * time;
          for (std::size_t t = 0; t < time; ++t) acc += g[t] * xi[t];
        }
        dw[(o * I + i) * K + k] = acc;
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (long oo = 0; oo < static_cast<long>(O); ++oo) {
    const std::size_t o = static_cast<std::size_t>(oo);
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* g = dy.data() + (b * O + o) * time;
      for (std::size_t t = 0; t < time; ++t) acc += g[t];
    }
    dbias[o] = acc;
  }
}

void channel_moments(std::span<const double> x, Shape3 s, std::span<double> mean,
                     std::span<double> var) {
  const double count = static_cast<double>(s.batch * s.time);
#pragma omp parallel for schedule(static)
  for (long cc = 0; cc < static_cast<long>(s.channels); ++cc) {
    const std::size_t c = static_cast<std::size_t>(cc);
    double sum = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      const double* p = x.data() + (b * s.channels + c) * s.time;
      for (std::size_t t = 0; t < s.time; ++t) sum += p[t];
    }
    const double mu = sum / count;
    double sq = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      const double* p = x.data() + (b * s.channels + c) * s.time;
      for (std::size_t t = 0; t < s.time; ++t) {
        const double dev = p[t] - mu;
        sq += dev * dev;
      }
    }
    mean[c] = mu;
    var[c] = sq / count;
  }
}

void batchnorm_forward(std::span<const double> x, Shape3 s, std::span<const double> mean,
                       std::span<const double> var, std::span<const double> gamma,
                       std::span<const double> beta, double eps, std::span<double> xhat,
                       std::span<double> y) {
  const long rows = static_cast<long>(s.batch * s.channels);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(r) % s.channels;
    const double inv_std = 1.0 / std::sqrt(var[c] + eps);
    const double mu = mean[c];
    const double g = gamma[c];
    const double be = beta[c];
    const std::size_t base = static_cast<std::size_t>(r) * s.time;
    for (std::size_t t = 0; t < s.time; ++t) {
      const double h = (x[base + t] - mu) * inv_std;
      xhat[base + t] = h;
      y[base + t] = g * h + be;
    }
  }
}

void batchnorm_backward(std::span<const double> dy, std::span<const double> xhat, Shape3 s,
                        std::span<const double> var, std::span<const double> gamma, double eps,
                        std::span<double> dx, std::span<double> dgamma,
                        std::span<double> dbeta) {
  const double count = static_cast<double>(s.batch * s.time);
#pragma omp parallel for schedule(static)
  for (long cc = 0; cc < static_cast<long>(s.channels); ++cc) {
    const std::size_t c = static_cast<std::size_t>(cc);
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      const std::size_t base = (b * s.channels + c) * s.time;
      for (std::size_t t = 0; t < s.time; ++t) {
        sum_dy += dy[base + t];
        sum_dy_xhat += dy[base + t] * xhat[base + t];
      }
    }
    dgamma[c] = sum_dy_xhat;
    dbeta[c] = sum_dy;
    const double scale = gamma[c] / std::sqrt(var[c] + eps);
    const double mean_dy = sum_dy / count;
    const double mean_dy_xhat = sum_dy_xhat / count;
    for (std::size_t b = 0; b < s.batch; ++b) {
      const std::size_t base = (b * s.channels + c) * s.time;
      for (std::size_t t = 0; t < s.time; ++t)
        dx[base + t] = scale * (dy[base + t] - mean_dy - xhat[base + t] * mean_dy_xhat);
    }
  }
}

void maxpool_forward(std::span<const double> x, Shape3 s, std::size_t stride,
                     std::span<double> y, std::span<std::uint32_t> argmax) {
  const std::size_t out_t = s.time / stride;
  const long rows = static_cast<long>(s.batch * s.channels);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t in_base = static_cast<std::size_t>(r) * s.time;
    const std::size_t out_base = static_cast<std::size_t>(r) * out_t;
    for (std::size_t j = 0; j < out_t; ++j) {
      std::size_t best = in_base + j * stride;
      for (std::size_t q = 1; q < stride; ++q)
        if (x[in_base + j * stride + q] > x[best]) best = in_base + j * stride + q;
      y[out_base + j] = x[best];
      argmax[out_base + j] = static_cast<std::uint32_t>(best);
    }
  }
}

void maxpool_backward(std::span<const double> dy, std::span<const std::uint32_t> argmax,
                      std::span<double> dx) {
  // Pooling windows do not overlap, so each input receives at most one gradient.
  std::fill(dx.begin(), dx.end(), 0.0);
  const long n = static_cast<long>(dy.size());
#pragma omp parallel for schedule(static)
  for (long j = 0; j < n; ++j) dx[argmax[static_cast<std::size_t>(j)]] += dy[static_cast<std::size_t>(j)];
}

}  // namespace eegadapt::kernels
