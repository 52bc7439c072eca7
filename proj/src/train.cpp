#include "eegadapt/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "eegadapt/error.hpp"
#include "eegadapt/kernels.hpp"

namespace eegadapt {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw InvalidArgument("train config: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw InvalidArgument("train config: momentum must be in [0, 1)");
  if (epochs < 0) throw InvalidArgument("train config: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
    throw InvalidArgument("train config: bn_momentum must be in (0, 1]");
  if (!(fine_tune_lr_scale > 0.0 && fine_tune_lr_scale <= 1.0))
    throw InvalidArgument("train config: fine_tune_lr_scale must be in (0, 1]");
}

LossGradient loss_and_gradient(const NetworkSpec& spec, const WeightStore& weights,
                               std::span<const Matrix> batch, std::span<const int> labels) {
  if (labels.size() != batch.size())
    throw InvalidArgument("loss_and_gradient: label count differs from batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes)
      throw InvalidArgument("loss_and_gradient: label " + std::to_string(y) + " out of range");

  ForwardTrace tr = forward_traced(spec, weights, batch, BnSelection::batch());
  const std::size_t N = batch.size();
  const std::size_t K = spec.num_classes;
  const std::size_t F = spec.feature_dim();
  const Matrix& probs = tr.result.probs;

  LossGradient out;
  out.gradient = WeightStore::zeros_like(spec);
  double loss = 0.0;
  Matrix dlogits(N, K);
  for (std::size_t b = 0; b < N; ++b) {
    const auto y = static_cast<std::size_t>(labels[b]);
    loss -= std::log(std::max(probs(b, y), 1e-300));
    for (std::size_t k = 0; k < K; ++k)
      dlogits(b, k) = (probs(b, k) - (k == y ? 1.0 : 0.0)) / static_cast<double>(N);
  }
  out.loss = loss / static_cast<double>(N);

  auto& g = out.gradient;
  Matrix dfeat(N, F);
  for (std::size_t k = 0; k < K; ++k) {
    double db = 0.0;
    for (std::size_t b = 0; b < N; ++b) db += dlogits(b, k);
    g.classifier_bias[k] = db;
    for (std::size_t c = 0; c < F; ++c) {
      double dw = 0.0;
      for (std::size_t b = 0; b < N; ++b) dw += dlogits(b, k) * tr.features(b, c);
      g.classifier_weight[k * F + c] = dw;
    }
  }
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t c = 0; c < F; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += weights.classifier_weight[k * F + c] * dlogits(b, k);
      dfeat(b, c) = s;
    }

  // Gradient w.r.t. the last pooled activation: global average pooling spreads evenly.
  const auto& last = tr.blocks.back();
  const std::size_t last_t = last.pooled.size() / (N * F);
  std::vector<double> dpooled(last.pooled.size());
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t c = 0; c < F; ++c)
      for (std::size_t t = 0; t < last_t; ++t)
        dpooled[(b * F + c) * last_t + t] = dfeat(b, c) / static_cast<double>(last_t);

  for (std::size_t li = spec.blocks.size(); li-- > 0;) {
    const auto& bs = spec.blocks[li];
    const auto& bt = tr.blocks[li];
    const auto& bw = weights.blocks[li];
    auto& bg = g.blocks[li];

    std::vector<double> dact(bt.conv_shape.size());
    kernels::maxpool_backward(dpooled, bt.argmax, dact);
    for (std::size_t i = 0; i < dact.size(); ++i)
      if (!(bt.activated[i] > 0.0)) dact[i] = 0.0;

    std::vector<double> dconv(bt.conv_shape.size());
    kernels::batchnorm_backward(dact, bt.xhat, bt.conv_shape, tr.result.stats.layers[li].var,
                                bw.bn_gamma, spec.bn_eps, dconv, bg.bn_gamma, bg.bn_beta);

    const std::vector<double>& x = li == 0 ? tr.input : tr.blocks[li - 1].pooled;
    const kernels::ConvDims dims{bt.in_shape.channels, bs.out_channels, bs.kernel_size};
    kernels::conv1d_backward_weights(dconv, x, N, bt.in_shape.time, dims, bg.conv_weight,
                                     bg.conv_bias);
    if (li > 0) {
      dpooled.assign(bt.in_shape.size(), 0.0);
      kernels::conv1d_backward_input(dconv, N, bt.in_shape.time, dims, bw.conv_weight, dpooled);
    }
  }

  out.batch_stats = std::move(tr.result.stats);
  out.probs = tr.result.probs;
  return out;
}

namespace {

void check_training_set(const NetworkSpec& spec, const TrainingSet& data) {
  if (!data.aligned)
    throw InvalidArgument("train: training set is not marked as Euclidean-aligned");
  if (data.trials.empty()) throw InvalidArgument("train: empty training set");
  std::vector<std::size_t> per_class(spec.num_classes, 0);
  for (const auto& t : data.trials) {
    if (!t.label) throw InvalidArgument("train: unlabeled trial in training set");
    if (*t.label < 0 || static_cast<std::size_t>(*t.label) >= spec.num_classes)
      throw InvalidArgument("train: label " + std::to_string(*t.label) + " out of range");
    ++per_class[static_cast<std::size_t>(*t.label)];
  }
  for (std::size_t k = 0; k < per_class.size(); ++k)
    if (per_class[k] == 0)
      throw InvalidArgument("train: class " + std::to_string(k) + " has no trials");
}

bool all_finite(const WeightStore& w) {
  const auto finite = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  for (auto t : w.learnable())
    if (!finite(t)) return false;
  for (const auto& b : w.blocks)
    if (!finite(b.bn_running_mean) || !finite(b.bn_running_var)) return false;
  return true;
}

WeightStore run_sgd(const NetworkSpec& spec, const WeightStore& init, const TrainingSet& data,
                    const TrainConfig& cfg, double lr, TrainLog* log) {
  cfg.validate();
  init.validate(spec);
  check_training_set(spec, data);
  if (cfg.epochs == 0) return init;

  WeightStore w = init;
  WeightStore velocity = WeightStore::zeros_like(spec);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.trials.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Matrix> batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(data.trials[order[i]].data);
        labels.push_back(*data.trials[order[i]].label);
      }
      LossGradient lg = loss_and_gradient(spec, w, batch, labels);
      if (!std::isfinite(lg.loss) || lg.loss > 1e6) {
        throw NumericalFailure("train: loss diverged at epoch " + std::to_string(epoch) +
                                   " (loss " + std::to_string(lg.loss) + ")",
                               lg.loss);
      }
      auto params = w.learnable();
      auto vel = velocity.learnable();
      auto grads = static_cast<const WeightStore&>(lg.gradient).learnable();
      for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
          vel[p][i] = cfg.momentum * vel[p][i] + grads[p][i];
          params[p][i] -= lr * vel[p][i];
        }
      }
      const double m = cfg.bn_momentum;
      for (std::size_t l = 0; l < w.blocks.size(); ++l) {
        auto& bw = w.blocks[l];
        const auto& st = lg.batch_stats.layers[l];
        for (std::size_t c = 0; c < bw.bn_running_mean.size(); ++c) {
          bw.bn_running_mean[c] = (1.0 - m) * bw.bn_running_mean[c] + m * st.mean[c];
          bw.bn_running_var[c] = (1.0 - m) * bw.bn_running_var[c] + m * st.var[c];
        }
      }
      if (!all_finite(w)) {
        throw NumericalFailure("train: parameters became non-finite at epoch " +
                                   std::to_string(epoch),
                               lg.loss);
      }
      if (log) log->step_losses.push_back(lg.loss);
      epoch_loss += lg.loss;
      ++steps;
    }
    if (log) log->epoch_losses.push_back(epoch_loss / static_cast<double>(steps));
  }
  w.round_to_f32();
  return w;
}

}  // namespace

WeightStore train(const NetworkSpec& spec, const WeightStore& init, const TrainingSet& data,
                  const TrainConfig& cfg, TrainLog* log) {
  return run_sgd(spec, init, data, cfg, cfg.learning_rate, log);
}

WeightStore train(const NetworkSpec& spec, std::uint64_t init_seed, const TrainingSet& data,
                  const TrainConfig& cfg, TrainLog* log) {
  return train(spec, WeightStore::initialize(spec, init_seed), data, cfg, log);
}

WeightStore fine_tune(const NetworkSpec& spec, const WeightStore& weights,
                      const TrainingSet& data, const TrainConfig& cfg, TrainLog* log) {
  return run_sgd(spec, weights, data, cfg, cfg.learning_rate * cfg.fine_tune_lr_scale, log);
}

namespace {

std::vector<char> kink_signature(const ForwardTrace& tr) {
  std::vector<char> sig;
  for (const auto& b : tr.blocks) {
    for (double v : b.activated) sig.push_back(v > 0.0 ? 1 : 0);
    for (std::uint32_t a : b.argmax) {
      for (int s = 0; s < 4; ++s) sig.push_back(static_cast<char>((a >> (8 * s)) & 0xff));
    }
  }
  return sig;
}

double batch_loss(const ForwardTrace& tr, std::span<const int> labels) {
  double loss = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b)
    loss -= std::log(std::max(tr.result.probs(b, static_cast<std::size_t>(labels[b])), 1e-300));
  return loss / static_cast<double>(labels.size());
}

std::vector<std::string> tensor_names(const NetworkSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    names.push_back(p + "conv_weight");
    names.push_back(p + "conv_bias");
    names.push_back(p + "bn_gamma");
    names.push_back(p + "bn_beta");
  }
  names.push_back("classifier_weight");
  names.push_back("classifier_bias");
  return names;
}

}  // namespace

GradCheckReport grad_check_report(const NetworkSpec& spec, const WeightStore& weights,
                                  std::span<const Matrix> batch, std::span<const int> labels,
                                  std::uint64_t seed, std::size_t samples) {
  constexpr double kStep = 1e-4;
  // Finite-difference round-off is about 1e-12 here; gradients that vanish exactly
  // (conv bias ahead of batch-statistic normalisation) are compared against this floor.
  constexpr double kFloor = 1e-6;
  const LossGradient analytic = loss_and_gradient(spec, weights, batch, labels);
  const auto grads = analytic.gradient.learnable();
  const auto names = tensor_names(spec);
  const std::vector<char> base_sig =
      kink_signature(forward_traced(spec, weights, batch, BnSelection::batch()));

  // Candidate (tensor, index) pairs: a share of the sample proportional to tensor size,
  // at least 4 per tensor (or all of it).
  std::size_t total = 0;
  for (const auto& t : grads) total += t.size();
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> pools(grads.size());
  for (std::size_t p = 0; p < grads.size(); ++p) {
    pools[p].resize(grads[p].size());
    std::iota(pools[p].begin(), pools[p].end(), 0);
    std::shuffle(pools[p].begin(), pools[p].end(), rng);
  }

  GradCheckReport rep;
  WeightStore probe = weights;
  auto params = probe.learnable();
  for (std::size_t p = 0; p < grads.size(); ++p) {
    TensorCheck tc;
    tc.name = names[p];
    const std::size_t quota = std::min(
        grads[p].size(),
        std::max<std::size_t>(4, (samples * grads[p].size() + total - 1) / total));
    std::size_t next = 0;
    while (tc.checked < quota && next < pools[p].size()) {
      const std::size_t i = pools[p][next++];
      const double orig = params[p][i];
      params[p][i] = orig + kStep;
      const ForwardTrace plus = forward_traced(spec, probe, batch, BnSelection::batch());
      params[p][i] = orig - kStep;
      const ForwardTrace minus = forward_traced(spec, probe, batch, BnSelection::batch());
      params[p][i] = orig;
      if (kink_signature(plus) != base_sig || kink_signature(minus) != base_sig) {
        ++rep.skipped_at_kinks;
        continue;
      }
      const double numeric = (batch_loss(plus, labels) - batch_loss(minus, labels)) / (2 * kStep);
      const double a = grads[p][i];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor});
      tc.max_relative_error = std::max(tc.max_relative_error, err);
      ++tc.checked;
    }
    rep.checked += tc.checked;
    rep.max_relative_error = std::max(rep.max_relative_error, tc.max_relative_error);
    rep.tensors.push_back(std::move(tc));
  }
  return rep;
}

double grad_check(const NetworkSpec& spec, const WeightStore& weights,
                  std::span<const Matrix> batch, std::span<const int> labels, std::uint64_t seed) {
  return grad_check_report(spec, weights, batch, labels, seed).max_relative_error;
}

double batch_accuracy(const NetworkSpec& spec, const WeightStore& weights,
                      std::span<const Trial> trials) {
  if (trials.empty()) throw InvalidArgument("batch_accuracy: no trials");
  std::vector<Matrix> batch;
  for (const auto& t : trials) batch.push_back(t.data);
  const ForwardResult r = forward(spec, weights, batch, BnSelection::batch());
  std::size_t correct = 0;
  for (std::size_t b = 0; b < trials.size(); ++b)
    if (trials[b].label && static_cast<int>(argmax(r.probs.row(b))) == *trials[b].label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

}  // namespace eegadapt
