#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eegadapt/net.hpp"
#include "eegadapt/trial.hpp"

namespace eegadapt {

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int epochs = 30;
  std::size_t batch_size = 32;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;
  double fine_tune_lr_scale = 0.1;

  void validate() const;
};

// Labelled trials. `aligned` records that each subject/session was Euclidean-aligned
// before training; the trainer refuses unaligned sets.
struct TrainingSet {
  std::vector<Trial> trials;
  bool aligned = false;
};

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy over the batch
  WeightStore gradient;  // running statistics are left at zero
  BnStatSet batch_stats;
  Matrix probs;
};

// Batch-mode forward pass, softmax cross-entropy and full backpropagation, including
// the dependence of the batch-norm statistics on every input.
LossGradient loss_and_gradient(const NetworkSpec& spec, const WeightStore& weights,
                               std::span<const Matrix> batch, std::span<const int> labels);

struct TrainLog {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean step loss of each epoch
};

// Mini-batch SGD with momentum. BN layers normalise with batch statistics and their
// running estimates follow an exponential moving average with `bn_momentum`.
// The returned weights are rounded to f32.
WeightStore train(const NetworkSpec& spec, const WeightStore& init, const TrainingSet& data,
                  const TrainConfig& cfg, TrainLog* log = nullptr);
WeightStore train(const NetworkSpec& spec, std::uint64_t init_seed, const TrainingSet& data,
                  const TrainConfig& cfg, TrainLog* log = nullptr);

// Same as train() with the learning rate scaled by cfg.fine_tune_lr_scale.
WeightStore fine_tune(const NetworkSpec& spec, const WeightStore& weights,
                      const TrainingSet& data, const TrainConfig& cfg, TrainLog* log = nullptr);

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;
  std::vector<TensorCheck> tensors;
};

// Compares analytic gradients with central differences (step 1e-4) on a random sample of
// at least `samples` parameters, covering every learnable tensor. Parameters whose
// perturbation flips a ReLU or a max-pool selection are not differentiable at that scale
// and are replaced by another draw. The error of one parameter is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckReport grad_check_report(const NetworkSpec& spec, const WeightStore& weights,
                                  std::span<const Matrix> batch, std::span<const int> labels,
                                  std::uint64_t seed = 0, std::size_t samples = 200);

double grad_check(const NetworkSpec& spec, const WeightStore& weights,
                  std::span<const Matrix> batch, std::span<const int> labels,
                  std::uint64_t seed = 0);

// Fraction of trials whose argmax under batch-mode BN over the whole set matches the label.
double batch_accuracy(const NetworkSpec& spec, const WeightStore& weights,
                      std::span<const Trial> trials);

}  // namespace eegadapt
