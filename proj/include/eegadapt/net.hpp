#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegadapt/kernels.hpp"
#include "eegadapt/matrix.hpp"

namespace eegadapt {

struct BlockSpec {
  std::size_t out_channels = 0;
  std::size_t kernel_size = 0;  // odd
  std::size_t pool_stride = 1;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

// conv → batch norm → ReLU → max pool, repeated per block, then global average pooling
// over time and one affine classifier.
struct NetworkSpec {
  std::size_t in_channels = 0;
  std::size_t num_classes = 0;
  std::vector<BlockSpec> blocks;
  double bn_eps = 1e-5;

  // Three blocks of 24/48/96 channels, kernel 7, pool stride 2.
  static NetworkSpec desk_default(std::size_t in_channels, std::size_t num_classes);
  // Two blocks (6 channels kernel 5, 8 channels kernel 3, stride 2) for gradient checks.
  static NetworkSpec tiny(std::size_t in_channels, std::size_t num_classes);

  void validate() const;
  std::size_t feature_dim() const { return blocks.back().out_channels; }
  // Shortest input that leaves at least one sample after every pooling stage.
  std::size_t min_samples() const;
  std::size_t parameter_count() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct BlockWeights {
  std::vector<double> conv_weight;  // out × in × kernel
  std::vector<double> conv_bias;    // out
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  std::vector<double> bn_running_mean;
  std::vector<double> bn_running_var;
  friend bool operator==(const BlockWeights&, const BlockWeights&) = default;
};

struct WeightStore {
  std::vector<BlockWeights> blocks;
  std::vector<double> classifier_weight;  // num_classes × feature_dim
  std::vector<double> classifier_bias;    // num_classes
  // Alignment whitener of the training/calibration domain, used by online inference.
  std::optional<SymMatrix> calibration_whitener;

  // He-initialised convolutions, unit BN gains, zero biases, running stats (0, 1).
  // Values are rounded to f32 so the store survives a weight file bit-exactly.
  static WeightStore initialize(const NetworkSpec& spec, std::uint64_t seed);
  // All zeros with the spec's shapes (running variance included).
  static WeightStore zeros_like(const NetworkSpec& spec);

  // Shape, finiteness and σ²_run ≥ 0 checks; throws InvalidArgument.
  void validate(const NetworkSpec& spec) const;

  // Learnable tensors in declaration order: per block conv weight, conv bias, γ, β;
  // then classifier weight and bias.
  std::vector<std::span<double>> learnable();
  std::vector<std::span<const double>> learnable() const;

  void round_to_f32();

  friend bool operator==(const WeightStore&, const WeightStore&) = default;
};

enum class StatProvenance { stored, recomputed };

struct BnLayerStats {
  std::vector<double> mean;
  std::vector<double> var;
  friend bool operator==(const BnLayerStats&, const BnLayerStats&) = default;
};

struct BnStatSet {
  std::vector<BnLayerStats> layers;
  StatProvenance provenance = StatProvenance::stored;
  friend bool operator==(const BnStatSet&, const BnStatSet&) = default;
};

BnStatSet stored_stats(const WeightStore& weights);

// Where batch-norm layers take (μ, σ²) from.
enum class BnMode { stored, batch, provided };

struct BnSelection {
  BnMode mode = BnMode::stored;
  const BnStatSet* provided = nullptr;

  static BnSelection stored() { return {BnMode::stored, nullptr}; }
  static BnSelection batch() { return {BnMode::batch, nullptr}; }
  static BnSelection use(const BnStatSet& s) { return {BnMode::provided, &s}; }
};

struct ForwardResult {
  Matrix logits;  // batch × K
  Matrix probs;   // batch × K, rows on the simplex
  BnStatSet stats;
};

// Every intermediate of a forward pass, kept for backpropagation.
struct BlockTrace {
  kernels::Shape3 in_shape;
  kernels::Shape3 conv_shape;
  std::vector<double> conv_out;
  std::vector<double> xhat;
  std::vector<double> activated;  // after ReLU
  std::vector<double> pooled;
  std::vector<std::uint32_t> argmax;
};

struct ForwardTrace {
  std::vector<double> input;  // packed [batch][channel][time]
  kernels::Shape3 input_shape;
  std::vector<BlockTrace> blocks;
  Matrix features;  // batch × feature_dim
  ForwardResult result;
};

ForwardTrace forward_traced(const NetworkSpec& spec, const WeightStore& weights,
                            std::span<const Matrix> batch, BnSelection bn);

ForwardResult forward(const NetworkSpec& spec, const WeightStore& weights,
                      std::span<const Matrix> batch, BnSelection bn);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> row);

// Weight file: "EEGW", u32 version, u32 header length, UTF-8 JSON header describing the
// spec, then every tensor as little-endian f32 in declaration order.
inline constexpr std::uint32_t kWeightFileVersion = 1;

void save_weights(const NetworkSpec& spec, const WeightStore& weights,
                  const std::filesystem::path& path);

struct LoadedNetwork {
  NetworkSpec spec;
  WeightStore weights;
};

LoadedNetwork load_weights(const std::filesystem::path& path);

// In-memory variants used by the file functions.
std::vector<std::uint8_t> encode_weights(const NetworkSpec& spec, const WeightStore& weights);
LoadedNetwork decode_weights(std::span<const std::uint8_t> bytes);

}  // namespace eegadapt
