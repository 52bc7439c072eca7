// Serial reference kernels. Straight loops over the definitions; the OpenMP kernels
// must reproduce these results bit for bit. Taps that fall into the zero padding
// contribute an explicit w·0 term, so even the sign of an exact zero is defined.

#include <cmath>

#include "eegadapt/kernels.hpp"

namespace eegadapt::kernels::reference {

void conv1d_forward(std::span<const double> x, std::size_t batch, std::size_t time, ConvDims d,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long T = static_cast<long>(time);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      for (long t = 0; t < T; ++t) {
        double acc = bias[o];
        for (std::size_t i = 0; i < d.in_channels; ++i) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const long src = t + static_cast<long>(k) - pad;
            const double xv =
                src < 0 || src >= T ? 0.0 : x[(b * d.in_channels + i) * time + static_cast<std::size_t>(src)];
            acc += w[(o * d.in_channels + i) * d.kernel + k] * xv;
          }
        }
        y[(b * d.out_channels + o) * time + static_cast<std::size_t>(t)] = acc;
      }
    }
  }
}

void conv1d_backward_input(std::span<const double> dy, std::size_t batch, std::size_t time,
                           ConvDims d, std::span<const double> w, std::span<double> dx) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long T = static_cast<long>(time);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      for (long s = 0; s < T; ++s) {
        double acc = 0.0;
        for (std::size_t o = 0; o < d.out_channels; ++o) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const long t = s - static_cast<long>(k) + pad;
            const double g =
                t < 0 || t >= T ? 0.0 : dy[(b * d.out_channels + o) * time + static_cast<std::size_t>(t)];
            acc += w[(o * d.in_channels + i) * d.kernel + k] * g;
          }
        }
        dx[(b * d.in_channels + i) * time + static_cast<std::size_t>(s)] = acc;
      }
    }
  }
}

void conv1d_backward_weights(std::span<const double> dy, std::span<const double> x,
                             std::size_t batch, std::size_t time, ConvDims d,
                             std::span<double> dw, std::span<double> dbias) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long T = static_cast<long>(time);
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      for (std::size_t k = 0; k < d.kernel; ++k) {
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          for (long t = 0; t < T; ++t) {
            const long src = t + static_cast<long>(k) - pad;
            const double xv =
                src < 0 || src >= T ? 0.0 : x[(b * d.in_channels + i) * time + static_cast<std::size_t>(src)];
            acc += dy[(b * d.out_channels + o) * time + static_cast<std::size_t>(t)] * xv;
          }
        }
        dw[(o * d.in_channels + i) * d.kernel + k] = acc;
      }
    }
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < time; ++t) acc += dy[(b * d.out_channels + o) * time + t];
    dbias[o] = acc;
  }
}

void channel_moments(std::span<const double> x, Shape3 s, std::span<double> mean,
                     std::span<double> var) {
  const double count = static_cast<double>(s.batch * s.time);
  for (std::size_t c = 0; c < s.channels; ++c) {
    double sum = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b)
      for (std::size_t t = 0; t < s.time; ++t) sum += x[(b * s.channels + c) * s.time + t];
    const double mu = sum / count;
    double sq = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < s.time; ++t) {
        const double dev = x[(b * s.channels + c) * s.time + t] - mu;
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
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double inv_std = 1.0 / std::sqrt(var[c] + eps);
      for (std::size_t t = 0; t < s.time; ++t) {
        const std::size_t idx = (b * s.channels + c) * s.time + t;
        xhat[idx] = (x[idx] - mean[c]) * inv_std;
        y[idx] = gamma[c] * xhat[idx] + beta[c];
      }
    }
  }
}

void batchnorm_backward(std::span<const double> dy, std::span<const double> xhat, Shape3 s,
                        std::span<const double> var, std::span<const double> gamma, double eps,
                        std::span<double> dx, std::span<double> dgamma,
                        std::span<double> dbeta) {
  const double count = static_cast<double>(s.batch * s.time);
  for (std::size_t c = 0; c < s.channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < s.time; ++t) {
        const std::size_t idx = (b * s.channels + c) * s.time + t;
        sum_dy += dy[idx];
        sum_dy_xhat += dy[idx] * xhat[idx];
      }
    }
    dgamma[c] = sum_dy_xhat;
    dbeta[c] = sum_dy;
    const double scale = gamma[c] / std::sqrt(var[c] + eps);
    const double mean_dy = sum_dy / count;
    const double mean_dy_xhat = sum_dy_xhat / count;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t t = 0; t < s.time; ++t) {
        const std::size_t idx = (b * s.channels + c) * s.time + t;
        dx[idx] = scale * (dy[idx] - mean_dy - xhat[idx] * mean_dy_xhat);
      }
    }
  }
}

void maxpool_forward(std::span<const double> x, Shape3 s, std::size_t stride,
                     std::span<double> y, std::span<std::uint32_t> argmax) {
  const std::size_t out_t = s.time / stride;
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      const std::size_t in_base = (b * s.channels + c) * s.time;
      const std::size_t out_base = (b * s.channels + c) * out_t;
      for (std::size_t j = 0; j < out_t; ++j) {
        std::size_t best = in_base + j * stride;
        for (std::size_t q = 1; q < stride; ++q)
          if (x[in_base + j * stride + q] > x[best]) best = in_base + j * stride + q;
        y[out_base + j] = x[best];
        argmax[out_base + j] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void maxpool_backward(std::span<const double> dy, std::span<const std::uint32_t> argmax,
                      std::span<double> dx) {
  for (auto& v : dx) v = 0.0;
  for (std::size_t j = 0; j < dy.size(); ++j) dx[argmax[j]] += dy[j];
}

}  // namespace eegadapt::kernels::reference
