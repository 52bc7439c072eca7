#pragma once

// Data-parallel kernels of the convolutional backbone.
//
// Activations are packed [batch][channel][time]. Every kernel exists twice: the
// OpenMP version in `eegadapt::kernels` and a plain serial version in
// `eegadapt::kernels::reference`. Both accumulate each output element in the same
// order, so their results are bitwise identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace eegadapt::kernels {

struct Shape3 {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t time = 0;
  std::size_t size() const { return batch * channels * time; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct ConvDims {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;  // odd, zero padding kernel/2 on both sides
};

// y[b,o,t] = bias[o] + sum_i sum_k w[o,i,k] x[b,i,t+k-pad]
void conv1d_forward(std::span<const double> x, std::size_t batch, std::size_t time,
                    ConvDims d, std::span<const double> w, std::span<const double> bias,
                    std::span<double> y);
// dx[b,i,s] = sum_o sum_k w[o,i,k] dy[b,o,s-k+pad]
void conv1d_backward_input(std::span<const double> dy, std::size_t batch, std::size_t time,
                           ConvDims d, std::span<const double> w, std::span<double> dx);
// dw[o,i,k] = sum_b sum_t dy[b,o,t] x[b,i,t+k-pad];  dbias[o] = sum_b sum_t dy[b,o,t]
void conv1d_backward_weights(std::span<const double> dy, std::span<const double> x,
                             std::size_t batch, std::size_t time, ConvDims d,
                             std::span<double> dw, std::span<double> dbias);
// Per-channel mean and population variance over batch and time jointly.
void channel_moments(std::span<const double> x, Shape3 s, std::span<double> mean,
                     std::span<double> var);
// xhat = (x-mean)/sqrt(var+eps), y = gamma*xhat + beta
void batchnorm_forward(std::span<const double> x, Shape3 s, std::span<const double> mean,
                       std::span<const double> var, std::span<const double> gamma,
                       std::span<const double> beta, double eps, std::span<double> xhat,
                       std::span<double> y);
// Backward through batch statistics (mean and var depend on x).
void batchnorm_backward(std::span<const double> dy, std::span<const double> xhat, Shape3 s,
                        std::span<const double> var, std::span<const double> gamma,
                        double eps, std::span<double> dx, std::span<double> dgamma,
                        std::span<double> dbeta);
// Non-overlapping max pooling with window == stride; trailing remainder dropped.
// Ties resolve to the earliest sample. argmax holds absolute input offsets.
void maxpool_forward(std::span<const double> x, Shape3 s, std::size_t stride,
                     std::span<double> y, std::span<std::uint32_t> argmax);
void maxpool_backward(std::span<const double> dy, std::span<const std::uint32_t> argmax,
                      std::span<double> dx);

namespace reference {

void conv1d_forward(std::span<const double> x, std::size_t batch, std::size_t time,
                    ConvDims d, std::span<const double> w, std::span<const double> bias,
                    std::span<double> y);
void conv1d_backward_input(std::span<const double> dy, std::size_t batch, std::size_t time,
                           ConvDims d, std::span<const double> w, std::span<double> dx);
void conv1d_backward_weights(std::span<const double> dy, std::span<const double> x,
                             std::size_t batch, std::size_t time, ConvDims d,
                             std::span<double> dw, std::span<double> dbias);
void channel_moments(std::span<const double> x, Shape3 s, std::span<double> mean,
                     std::span<double> var);
void batchnorm_forward(std::span<const double> x, Shape3 s, std::span<const double> mean,
                       std::span<const double> var, std::span<const double> gamma,
                       std::span<const double> beta, double eps, std::span<double> xhat,
                       std::span<double> y);
void batchnorm_backward(std::span<const double> dy, std::span<const double> xhat, Shape3 s,
                        std::span<const double> var, std::span<const double> gamma,
                        double eps, std::span<double> dx, std::span<double> dgamma,
                        std::span<double> dbeta);
void maxpool_forward(std::span<const double> x, Shape3 s, std::size_t stride,
                     std::span<double> y, std::span<std::uint32_t> argmax);
void maxpool_backward(std::span<const double> dy, std::span<const std::uint32_t> argmax,
                      std::span<double> dx);

}  // namespace reference

}  // namespace eegadapt::kernels
