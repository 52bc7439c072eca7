#include "eegadapt/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "eegadapt/error.hpp"
#include "eegadapt/linalg.hpp"

namespace eegadapt {

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad butterworth_highpass(double cutoff_hz, double fs) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / fs);
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k * k);
  return {norm, -2.0 * norm, norm, 2.0 * (k * k - 1.0) * norm,
          (1.0 - std::numbers::sqrt2 * k + k * k) * norm};
}

// Transposed direct form II, starting from the steady state for a constant input x[0].
void filter_in_place(const Biquad& f, std::vector<double>& x) {
  const double dc_gain = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);
  double z1 = (dc_gain - f.b0) * x.front();
  double z2 = (f.b2 - f.a2 * dc_gain) * x.front();
  for (auto& v : x) {
    const double in = v;
    const double out = f.b0 * in + z1;
    z1 = f.b1 * in - f.a1 * out + z2;
    z2 = f.b2 * in - f.a2 * out;
    v = out;
  }
}

// Sample i of `row` with odd reflection about both ends.
double reflected(std::span<const double> row, long i) {
  const long n = static_cast<long>(row.size());
  if (n == 1) return row[0];
  if (i < 0) {
    const long j = std::min(-i, n - 1);
    return 2.0 * row[0] - row[static_cast<std::size_t>(j)];
  }
  if (i >= n) {
    const long j = std::max(2 * (n - 1) - i, 0L);
    return 2.0 * row[static_cast<std::size_t>(n - 1)] - row[static_cast<std::size_t>(j)];
  }
  return row[static_cast<std::size_t>(i)];
}

}  // namespace

Matrix highpass(const Matrix& data, double cutoff_hz, double fs) {
  if (!(fs > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) {
    throw InvalidArgument("highpass: cutoff " + std::to_string(cutoff_hz) +
                          " Hz must lie in (0, fs/2) for fs = " + std::to_string(fs));
  }
  constexpr long kOrder = 2;
  const Biquad f = butterworth_highpass(cutoff_hz, fs);
  const long T = static_cast<long>(data.cols());
  const long pad = std::min(3 * kOrder, T - 1);
  Matrix out(data.rows(), data.cols());
  std::vector<double> buf(static_cast<std::size_t>(T + 2 * pad));
  for (std::size_t c = 0; c < data.rows(); ++c) {
    auto row = data.row(c);
    for (long i = -pad; i < T + pad; ++i) buf[static_cast<std::size_t>(i + pad)] = reflected(row, i);
    filter_in_place(f, buf);
    std::reverse(buf.begin(), buf.end());
    filter_in_place(f, buf);
    std::reverse(buf.begin(), buf.end());
    auto dst = out.row(c);
    for (long i = 0; i < T; ++i) dst[static_cast<std::size_t>(i)] = buf[static_cast<std::size_t>(i + pad)];
  }
  return out;
}

Trial highpass(const Trial& trial, double cutoff_hz, double fs) {
  Trial t = trial;
  t.data = highpass(trial.data, cutoff_hz, fs);
  return t;
}

Matrix resample(const Matrix& data, double fs_in, double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0) || fs_out > fs_in)
    throw InvalidArgument("resample: need 0 < fs_out <= fs_in");
  if (fs_out == fs_in) return data;

  // fs_out/fs_in = up/down with down <= 64.
  const double ratio = fs_out / fs_in;
  long up = 0;
  long down = 0;
  for (long q = 1; q <= 64; ++q) {
    const double p = ratio * static_cast<double>(q);
    if (std::abs(p - std::round(p)) < 1e-9 * std::max(1.0, p)) {
      up = std::lround(p);
      down = q;
      break;
    }
  }
  if (down == 0) {
    throw InvalidArgument("resample: " + std::to_string(fs_in) + " -> " + std::to_string(fs_out) +
                          " Hz is not a rational ratio with denominator <= 64");
  }
  const long g = std::gcd(up, down);
  up /= g;
  down /= g;

  // Windowed sinc at the upsampled rate, odd length so the delay is an integer.
  constexpr long kTapsPerPhase = 64;
  const long half = kTapsPerPhase * up / 2;
  const long len = 2 * half + 1;
  const double fc = 0.45 * fs_out / (fs_in * static_cast<double>(up));  // cycles per sample
  std::vector<double> h(static_cast<std::size_t>(len));
  double sum = 0.0;
  for (long k = 0; k < len; ++k) {
    const double n = static_cast<double>(k - half);
    const double sinc = n == 0.0 ? 2.0 * fc
                                 : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
    const double window =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len - 1));
    h[static_cast<std::size_t>(k)] = sinc * window;
    sum += h[static_cast<std::size_t>(k)];
  }
  for (auto& v : h) v *= static_cast<double>(up) / sum;

  const long T = static_cast<long>(data.cols());
  const long out_T = T * up / down;
  if (out_T < 1) throw InvalidArgument("resample: output would be empty");
  Matrix out(data.rows(), static_cast<std::size_t>(out_T));
  for (std::size_t c = 0; c < data.rows(); ++c) {
    auto row = data.row(c);
    auto dst = out.row(c);
    for (long m = 0; m < out_T; ++m) {
      // Upsampled index of output sample m is m·down; tap k reads index m·down + half - k.
      const long centre = m * down + half;
      double acc = 0.0;
      // Only indices divisible by `up` carry samples.
      long k0 = centre % up;
      for (long k = k0; k < len; k += up) {
        const long n = centre - k;
        acc += h[static_cast<std::size_t>(k)] * reflected(row, n / up);
      }
      dst[static_cast<std::size_t>(m)] = acc;
    }
  }
  return out;
}

Trial resample(const Trial& trial, double fs_in, double fs_out) {
  Trial t = trial;
  t.data = resample(trial.data, fs_in, fs_out);
  return t;
}

void SynthConfig::validate() const {
  if (num_subjects < 1 || sessions_per_subject < 1 || trials_per_session < 1 || channels < 1 ||
      samples < 1)
    throw InvalidArgument("synth config: all counts must be >= 1");
  if (num_classes < 2) throw InvalidArgument("synth config: num_classes must be >= 2");
  if (trials_per_session % num_classes != 0)
    throw InvalidArgument("synth config: trials_per_session must be divisible by num_classes");
  if (!(fs > 0.0)) throw InvalidArgument("synth config: fs must be positive");
  if (!(subject_mixing_scale >= 0.0) || !(subject_gain_drift >= 0.0) || subject_gain_drift >= 1.0 ||
      !(noise_std >= 0.0))
    throw InvalidArgument("synth config: scales must be non-negative and drift < 1");
  if (class_source_covariances.empty()) {
    if (channels < 2 * num_classes)
      throw InvalidArgument("synth config: default class covariances need channels >= 2·classes");
    if (!(class_inflation > 0.0)) throw InvalidArgument("synth config: class_inflation must be > 0");
  } else {
    if (class_source_covariances.size() != static_cast<std::size_t>(num_classes))
      throw InvalidArgument("synth config: one source covariance per class is required");
    for (const auto& s : class_source_covariances) {
      if (s.dim() != static_cast<std::size_t>(channels))
        throw InvalidArgument("synth config: source covariance has the wrong dimension");
      if (!(sym_eig(s).values.front() > 0.0))
        throw InvalidArgument("synth config: source covariance is not positive definite");
    }
  }
}

std::vector<SymMatrix> SynthConfig::source_covariances() const {
  if (!class_source_covariances.empty()) return class_source_covariances;
  std::vector<SymMatrix> out;
  for (int c = 0; c < num_classes; ++c) {
    SymMatrix s = SymMatrix::identity(static_cast<std::size_t>(channels));
    s.set(static_cast<std::size_t>(2 * c), static_cast<std::size_t>(2 * c), class_inflation);
    s.set(static_cast<std::size_t>(2 * c + 1), static_cast<std::size_t>(2 * c + 1), class_inflation);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b = 0) {
  return mix(mix(mix(mix(seed) ^ tag) ^ a) ^ b);
}

Matrix cholesky(const SymMatrix& s) {
  const std::size_t n = s.dim();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = s(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw InvalidArgument("synth config: source covariance is not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return l;
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Matrix subject_mixing(const SynthConfig& cfg, int subject) {
  const auto C = static_cast<std::size_t>(cfg.channels);
  std::mt19937_64 rng(stream_seed(cfg.seed, 1, static_cast<std::uint64_t>(subject)));
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(C)));
  Matrix a = Matrix::identity(C);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) a(i, j) += cfg.subject_mixing_scale * g(rng);
  return a;
}

double session_gain(const SynthConfig& cfg, int subject, int session) {
  std::mt19937_64 rng(stream_seed(cfg.seed, 2, static_cast<std::uint64_t>(subject),
                                  static_cast<std::uint64_t>(session)));
  std::uniform_real_distribution<double> u(1.0 - cfg.subject_gain_drift, 1.0 + cfg.subject_gain_drift);
  return u(rng);
}

std::vector<Session> generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto C = static_cast<std::size_t>(cfg.channels);
  const auto T = static_cast<std::size_t>(cfg.samples);
  std::vector<Matrix> chol;
  for (const auto& s : cfg.source_covariances()) chol.push_back(cholesky(s));

  std::vector<Session> out;
  for (int s = 0; s < cfg.num_subjects; ++s) {
    const Matrix a = subject_mixing(cfg, s);
    for (int k = 0; k < cfg.sessions_per_subject; ++k) {
      Session ses;
      ses.subject_id = s;
      ses.session_id = k;
      ses.fs = cfg.fs;
      ses.num_classes = cfg.num_classes;
      const double g = session_gain(cfg, s, k);
      std::mt19937_64 rng(stream_seed(cfg.seed, 3, static_cast<std::uint64_t>(s),
                                      static_cast<std::uint64_t>(k)));
      std::vector<int> labels;
      for (int i = 0; i < cfg.trials_per_session; ++i) labels.push_back(i % cfg.num_classes);
      std::shuffle(labels.begin(), labels.end(), rng);

      std::normal_distribution<double> normal(0.0, 1.0);
      // Mixed source covariance factor per class: g·A_s·L_c.
      std::vector<Matrix> factor;
      for (const auto& l : chol) factor.push_back(g * (a * l));
      for (int i = 0; i < cfg.trials_per_session; ++i) {
        Trial t;
        t.subject_id = s;
        t.session_id = k;
        t.index_in_session = i;
        t.label = labels[static_cast<std::size_t>(i)];
        Matrix z(C, T);
        for (auto& v : z.values()) v = normal(rng);
        t.data = factor[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] * z;
        for (auto& v : t.data.values()) v = to_f32(v + cfg.noise_std * normal(rng));
        ses.trials.push_back(std::move(t));
      }
      out.push_back(std::move(ses));
    }
  }
  return out;
}

}  // namespace eegadapt
