#include "eegadapt/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "eegadapt/error.hpp"

namespace eegadapt {

NetworkSpec NetworkSpec::desk_default(std::size_t in_channels, std::size_t num_classes) {
  NetworkSpec s;
  s.in_channels = in_channels;
  s.num_classes = num_classes;
  s.blocks = {{24, 7, 2}, {48, 7, 2}, {96, 7, 2}};
  s.bn_eps = 1e-5;
  return s;
}

NetworkSpec NetworkSpec::tiny(std::size_t in_channels, std::size_t num_classes) {
  NetworkSpec s;
  s.in_channels = in_channels;
  s.num_classes = num_classes;
  s.blocks = {{6, 5, 2}, {8, 3, 2}};
  s.bn_eps = 1e-5;
  return s;
}

void NetworkSpec::validate() const {
  if (in_channels < 1) throw InvalidArgument("network spec: in_channels must be >= 1");
  if (num_classes < 2) throw InvalidArgument("network spec: num_classes must be >= 2");
  if (blocks.empty()) throw InvalidArgument("network spec: at least one block is required");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string where = "network spec block " + std::to_string(i) + ": ";
    if (b.out_channels < 1) throw InvalidArgument(where + "out_channels must be >= 1");
    if (b.kernel_size < 1 || b.kernel_size % 2 == 0)
      throw InvalidArgument(where + "kernel_size must be odd and >= 1");
    if (b.pool_stride < 1) throw InvalidArgument(where + "pool_stride must be >= 1");
  }
  if (!(bn_eps > 0.0) || !std::isfinite(bn_eps))
    throw InvalidArgument("network spec: bn_eps must be positive");
}

std::size_t NetworkSpec::min_samples() const {
  std::size_t n = 1;
  for (const auto& b : blocks) n *= b.pool_stride;
  return n;
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  std::size_t cin = in_channels;
  for (const auto& b : blocks) {
    n += b.out_channels * cin * b.kernel_size + b.out_channels;  // conv
    n += 2 * b.out_channels;                                      // γ, β
    cin = b.out_channels;
  }
  n += num_classes * cin + num_classes;
  return n;
}

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_vec(std::vector<double>& v) {
  for (auto& x : v) x = to_f32(x);
}

}  // namespace

WeightStore WeightStore::zeros_like(const NetworkSpec& spec) {
  spec.validate();
  WeightStore w;
  std::size_t cin = spec.in_channels;
  for (const auto& b : spec.blocks) {
    BlockWeights bw;
    bw.conv_weight.assign(b.out_channels * cin * b.kernel_size, 0.0);
    bw.conv_bias.assign(b.out_channels, 0.0);
    bw.bn_gamma.assign(b.out_channels, 0.0);
    bw.bn_beta.assign(b.out_channels, 0.0);
    bw.bn_running_mean.assign(b.out_channels, 0.0);
    bw.bn_running_var.assign(b.out_channels, 0.0);
    w.blocks.push_back(std::move(bw));
    cin = b.out_channels;
  }
  w.classifier_weight.assign(spec.num_classes * cin, 0.0);
  w.classifier_bias.assign(spec.num_classes, 0.0);
  return w;
}

WeightStore WeightStore::initialize(const NetworkSpec& spec, std::uint64_t seed) {
  WeightStore w = zeros_like(spec);
  std::mt19937_64 rng(seed);
  std::size_t cin = spec.in_channels;
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    const auto& b = spec.blocks[l];
    auto& bw = w.blocks[l];
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(cin * b.kernel_size)));
    for (auto& v : bw.conv_weight) v = he(rng);
    std::fill(bw.bn_gamma.begin(), bw.bn_gamma.end(), 1.0);
    std::fill(bw.bn_running_var.begin(), bw.bn_running_var.end(), 1.0);
    cin = b.out_channels;
  }
  std::normal_distribution<double> glorot(0.0, std::sqrt(1.0 / static_cast<double>(cin)));
  for (auto& v : w.classifier_weight) v = glorot(rng);
  w.round_to_f32();
  return w;
}

void WeightStore::validate(const NetworkSpec& spec) const {
  spec.validate();
  auto check = [](const std::vector<double>& v, std::size_t n, const std::string& name) {
    if (v.size() != n) {
      throw InvalidArgument("weights: " + name + " has " + std::to_string(v.size()) +
                            " values, expected " + std::to_string(n));
    }
    for (double x : v)
      if (!std::isfinite(x)) throw InvalidArgument("weights: " + name + " is not finite");
  };
  if (blocks.size() != spec.blocks.size()) {
    throw InvalidArgument("weights: " + std::to_string(blocks.size()) + " blocks, spec has " +
                          std::to_string(spec.blocks.size()));
  }
  std::size_t cin = spec.in_channels;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = spec.blocks[l];
    const auto& bw = blocks[l];
    const std::string p = "block" + std::to_string(l) + ".";
    check(bw.conv_weight, b.out_channels * cin * b.kernel_size, p + "conv_weight");
    check(bw.conv_bias, b.out_channels, p + "conv_bias");
    check(bw.bn_gamma, b.out_channels, p + "bn_gamma");
    check(bw.bn_beta, b.out_channels, p + "bn_beta");
    check(bw.bn_running_mean, b.out_channels, p + "bn_running_mean");
    check(bw.bn_running_var, b.out_channels, p + "bn_running_var");
    for (double v : bw.bn_running_var)
      if (v < 0.0) throw InvalidArgument("weights: " + p + "bn_running_var is negative");
    cin = b.out_channels;
  }
  check(classifier_weight, spec.num_classes * cin, "classifier_weight");
  check(classifier_bias, spec.num_classes, "classifier_bias");
  if (calibration_whitener && calibration_whitener->dim() != spec.in_channels) {
    throw InvalidArgument("weights: calibration whitener is " +
                          std::to_string(calibration_whitener->dim()) + "x" +
                          std::to_string(calibration_whitener->dim()) + ", expected " +
                          std::to_string(spec.in_channels) + " channels");
  }
}

std::vector<std::span<double>> WeightStore::learnable() {
  std::vector<std::span<double>> out;
  for (auto& b : blocks) {
    out.emplace_back(b.conv_weight);
    out.emplace_back(b.conv_bias);
    out.emplace_back(b.bn_gamma);
    out.emplace_back(b.bn_beta);
  }
  out.emplace_back(classifier_weight);
  out.emplace_back(classifier_bias);
  return out;
}

std::vector<std::span<const double>> WeightStore::learnable() const {
  std::vector<std::span<const double>> out;
  for (const auto& b : blocks) {
    out.emplace_back(b.conv_weight);
    out.emplace_back(b.conv_bias);
    out.emplace_back(b.bn_gamma);
    out.emplace_back(b.bn_beta);
  }
  out.emplace_back(classifier_weight);
  out.emplace_back(classifier_bias);
  return out;
}

void WeightStore::round_to_f32() {
  for (auto& b : blocks) {
    round_vec(b.conv_weight);
    round_vec(b.conv_bias);
    round_vec(b.bn_gamma);
    round_vec(b.bn_beta);
    round_vec(b.bn_running_mean);
    round_vec(b.bn_running_var);
  }
  round_vec(classifier_weight);
  round_vec(classifier_bias);
  if (calibration_whitener) {
    SymMatrix& w = *calibration_whitener;
    for (std::size_t i = 0; i < w.dim(); ++i)
      for (std::size_t j = i; j < w.dim(); ++j) w.set(i, j, to_f32(w(i, j)));
  }
}

BnStatSet stored_stats(const WeightStore& weights) {
  BnStatSet s;
  s.provenance = StatProvenance::stored;
  for (const auto& b : weights.blocks) s.layers.push_back({b.bn_running_mean, b.bn_running_var});
  return s;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = p.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      out[k] = std::exp(in[k] - m);
      z += out[k];
    }
    for (auto& v : out) v /= z;
  }
  return p;
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

namespace {

std::size_t check_batch(const NetworkSpec& spec, std::span<const Matrix> batch) {
  if (batch.empty()) throw InvalidArgument("forward: empty batch");
  const std::size_t T = batch.front().cols();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].rows() != spec.in_channels) {
      throw InvalidArgument("forward: trial " + std::to_string(b) + " has " +
                            std::to_string(batch[b].rows()) + " channels, network expects " +
                            std::to_string(spec.in_channels));
    }
    if (batch[b].cols() != T) {
      throw InvalidArgument("forward: trial " + std::to_string(b) + " has " +
                            std::to_string(batch[b].cols()) + " samples, batch uses " +
                            std::to_string(T));
    }
  }
  if (T < spec.min_samples()) {
    throw InvalidArgument("forward: " + std::to_string(T) + " samples, network needs at least " +
                          std::to_string(spec.min_samples()));
  }
  return T;
}

void require_finite(std::span<const double> v, std::size_t layer) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericalFailure("forward: non-finite activation in layer " + std::to_string(layer));
    }
  }
}

// Activation buffers are a few MB and are freed every step. With glibc's default
// thresholds each one becomes a fresh mmap and pays its page faults again.
void keep_heap_warm() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

ForwardTrace forward_traced(const NetworkSpec& spec, const WeightStore& weights,
                            std::span<const Matrix> batch, BnSelection bn) {
  keep_heap_warm();
  spec.validate();
  const std::size_t T = check_batch(spec, batch);
  const std::size_t N = batch.size();
  weights.validate(spec);
  if (bn.mode == BnMode::provided) {
    if (bn.provided == nullptr || bn.provided->layers.size() != spec.blocks.size())
      throw InvalidArgument("forward: provided BN statistics do not match the network spec");
    for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
      const auto& ls = bn.provided->layers[l];
      if (ls.mean.size() != spec.blocks[l].out_channels ||
          ls.var.size() != spec.blocks[l].out_channels)
        throw InvalidArgument("forward: provided BN statistics for layer " + std::to_string(l) +
                              " have the wrong size");
    }
  }

  ForwardTrace tr;
  tr.input_shape = {N, spec.in_channels, T};
  tr.input.resize(tr.input_shape.size());
  for (std::size_t b = 0; b < N; ++b) {
    auto v = batch[b].values();
    std::copy(v.begin(), v.end(), tr.input.begin() + static_cast<long>(b * spec.in_channels * T));
  }
  require_finite(tr.input, 0);

  tr.result.stats.provenance =
      bn.mode == BnMode::batch ? StatProvenance::recomputed
      : bn.mode == BnMode::provided ? bn.provided->provenance
                                    : StatProvenance::stored;

  const std::vector<double>* in = &tr.input;
  kernels::Shape3 in_shape = tr.input_shape;
  tr.blocks.resize(spec.blocks.size());
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    const auto& bs = spec.blocks[l];
    const auto& bw = weights.blocks[l];
    auto& bt = tr.blocks[l];
    const kernels::ConvDims dims{in_shape.channels, bs.out_channels, bs.kernel_size};
    bt.in_shape = in_shape;
    bt.conv_shape = {N, bs.out_channels, in_shape.time};
    bt.conv_out.resize(bt.conv_shape.size());
    kernels::conv1d_forward(*in, N, in_shape.time, dims, bw.conv_weight, bw.conv_bias,
                            bt.conv_out);

    BnLayerStats used;
    switch (bn.mode) {
      case BnMode::batch:
        used.mean.resize(bs.out_channels);
        used.var.resize(bs.out_channels);
        kernels::channel_moments(bt.conv_out, bt.conv_shape, used.mean, used.var);
        break;
      case BnMode::stored:
        used = {bw.bn_running_mean, bw.bn_running_var};
        break;
      case BnMode::provided:
        used = bn.provided->layers[l];
        break;
    }
    bt.xhat.resize(bt.conv_shape.size());
    bt.activated.resize(bt.conv_shape.size());
    kernels::batchnorm_forward(bt.conv_out, bt.conv_shape, used.mean, used.var, bw.bn_gamma,
                               bw.bn_beta, spec.bn_eps, bt.xhat, bt.activated);
    // Checked before the ReLU, which would map NaN to zero.
    require_finite(bt.activated, l + 1);
    for (auto& v : bt.activated) v = v > 0.0 ? v : 0.0;

    const kernels::Shape3 pooled_shape{N, bs.out_channels, in_shape.time / bs.pool_stride};
    bt.pooled.resize(pooled_shape.size());
    bt.argmax.resize(pooled_shape.size());
    kernels::maxpool_forward(bt.activated, bt.conv_shape, bs.pool_stride, bt.pooled, bt.argmax);

    tr.result.stats.layers.push_back(std::move(used));
    in = &bt.pooled;
    in_shape = pooled_shape;
  }

  const std::size_t F = in_shape.channels;
  const std::size_t K = spec.num_classes;
  tr.features = Matrix(N, F);
  for (std::size_t b = 0; b < N; ++b) {
    for (std::size_t c = 0; c < F; ++c) {
      const double* p = in->data() + (b * F + c) * in_shape.time;
      double s = 0.0;
      for (std::size_t t = 0; t < in_shape.time; ++t) s += p[t];
      tr.features(b, c) = s / static_cast<double>(in_shape.time);
    }
  }
  tr.result.logits = Matrix(N, K);
  for (std::size_t b = 0; b < N; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = weights.classifier_bias[k];
      for (std::size_t c = 0; c < F; ++c) s += weights.classifier_weight[k * F + c] * tr.features(b, c);
      tr.result.logits(b, k) = s;
    }
  }
  require_finite(tr.result.logits.values(), spec.blocks.size() + 1);
  tr.result.probs = softmax_rows(tr.result.logits);
  return tr;
}

ForwardResult forward(const NetworkSpec& spec, const WeightStore& weights,
                      std::span<const Matrix> batch, BnSelection bn) {
  return std::move(forward_traced(spec, weights, batch, bn).result);
}

}  // namespace eegadapt
