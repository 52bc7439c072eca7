#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "eegadapt/adapt.hpp"
#include "eegadapt/align.hpp"
#include "eegadapt/error.hpp"
#include "support.hpp"

using namespace eegadapt;
using namespace testing;

namespace {

constexpr std::size_t kC = 4;
constexpr std::size_t kT = 24;

struct Fixture {
  NetworkSpec spec = NetworkSpec::tiny(kC, 3);
  WeightStore weights = perturbed_weights(spec, 7);
};

std::vector<double> row_of(const Matrix& m, std::size_t r) {
  auto s = m.row(r);
  return {s.begin(), s.end()};
}

// Aligns `trials` with their own mean covariance, batch-statistic forward pass.
Matrix probs_over(const Fixture& f, const std::vector<Trial>& trials) {
  std::vector<Matrix> batch;
  for (const auto& t : align_batch(trials)) batch.push_back(t.data);
  return forward(f.spec, f.weights, batch, BnSelection::batch()).probs;
}

std::vector<std::vector<double>> random_simplex_rows(std::mt19937_64& rng, std::size_t n,
                                                     std::size_t k, double sharpness) {
  std::normal_distribution<double> nd(0.0, sharpness);
  std::vector<std::vector<double>> rows(n, std::vector<double>(k));
  for (auto& r : rows) {
    double z = 0;
    for (auto& v : r) z += v = std::exp(nd(rng));
    for (auto& v : r) v /= z;
  }
  return rows;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

// Lloyd iterations from the simplex vertices; empty clusters stay put.
std::vector<std::size_t> hard_kmeans(const std::vector<std::vector<double>>& rows, int iters) {
  const std::size_t k = rows.front().size();
  std::vector<std::vector<double>> c(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) c[i][i] = 1.0;
  auto assign = [&] {
    std::vector<std::size_t> a;
    for (const auto& r : rows) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (sqdist(r, c[j]) < sqdist(r, c[best])) best = j;
      a.push_back(best);
    }
    return a;
  };
  for (int it = 0; it < iters; ++it) {
    const auto a = assign();
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> sum(k, 0.0);
      std::size_t n = 0;
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (a[i] == j) {
          ++n;
          for (std::size_t q = 0; q < k; ++q) sum[q] += rows[i][q];
        }
      if (n == 0) continue;
      for (std::size_t q = 0; q < k; ++q) c[j][q] = sum[q] / static_cast<double>(n);
    }
  }
  return assign();
}

}  // namespace

TEST_CASE("mode names") {
  for (Mode m : {Mode::online, Mode::adaptive, Mode::offline}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mode("batch"), InvalidArgument);
}

TEST_CASE("start_session rejects bad policies and buffers") {
  Fixture f;
  std::mt19937_64 rng(1);
  AdaptPolicy p;
  p.use_buffer = true;
  p.buffer_size = 3;
  CHECK_THROWS_AS(start_session(f.spec, f.weights, p, random_trials(rng, 2, kC, kT)), InvalidArgument);
  CHECK_THROWS_AS(start_session(f.spec, f.weights, p, random_trials(rng, 3, kC + 1, kT)),
                  InvalidArgument);
  CHECK_NOTHROW(start_session(f.spec, f.weights, p, random_trials(rng, 3, kC, kT)));
  p.buffer_size = 0;
  CHECK_THROWS_AS(start_session(f.spec, f.weights, p, {}), InvalidArgument);

  AdaptPolicy q;
  q.use_soft_kmeans = true;
  q.soft_kmeans_beta = 0.0;
  CHECK_THROWS_AS(start_session(f.spec, f.weights, q, {}), InvalidArgument);
  q.soft_kmeans_beta = 5.0;
  q.soft_kmeans_iters = -1;
  CHECK_THROWS_AS(start_session(f.spec, f.weights, q, {}), InvalidArgument);
}

TEST_CASE("classify_next errors") {
  Fixture f;
  std::mt19937_64 rng(2);
  const auto trials = random_trials(rng, 2, kC, kT);

  AdaptPolicy off;
  off.mode = Mode::offline;
  auto s = start_session(f.spec, f.weights, off, {});
  CHECK_THROWS_AS(s.classify_next(trials[0]), InvalidMode);

  auto a = start_session(f.spec, f.weights, AdaptPolicy{}, {});
  CHECK_THROWS_AS(a.classify_next(random_trials(rng, 1, kC + 2, kT)[0]), InvalidArgument);
  Trial bad = trials[0];
  bad.data(1, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(a.classify_next(bad), InvalidArgument);
  CHECK(a.history().empty());
  CHECK_NOTHROW(a.classify_next(trials[1]));
  CHECK(a.history().size() == 1);

  CHECK_THROWS_AS(classify_offline(f.spec, f.weights, {}, AdaptPolicy{}), InvalidArgument);
}

TEST_CASE("adaptive final trial equals offline classification bitwise") {
  Fixture f;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    std::mt19937_64 rng(seed);
    const auto trials = random_trials(rng, uniform_size(rng, 1, 30), kC, kT, uniform_real(rng, 0.1, 10));
    auto s = start_session(f.spec, f.weights, AdaptPolicy{}, {});
    Prediction last;
    for (const auto& t : trials) last = s.classify_next(t);
    const auto off = classify_offline(f.spec, f.weights, trials, AdaptPolicy{});
    CHECK(last.probs == off.back().probs);
    CHECK(last.predicted_class == off.back().predicted_class);
    CHECK(s.align_state().count() == trials.size());
  }
}

TEST_CASE("each adaptive step equals offline classification of the prefix") {
  Fixture f;
  std::mt19937_64 rng(3);
  const auto trials = random_trials(rng, 12, kC, kT);
  auto s = start_session(f.spec, f.weights, AdaptPolicy{}, {});
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto p = s.classify_next(trials[i]);
    const std::vector<Trial> prefix(trials.begin(), trials.begin() + static_cast<std::ptrdiff_t>(i + 1));
    CHECK(p.probs == row_of(probs_over(f, prefix), i));
  }
  // A single trial: the first adaptive prediction is offline over that trial alone.
  const auto single = classify_offline(f.spec, f.weights, std::span(trials.data(), 1), AdaptPolicy{});
  CHECK(single.front().probs == s.prob_rows().front());
}

TEST_CASE("offline classification is permutation-equivariant and duplication-invariant") {
  Fixture f;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 50);
    const auto trials = random_trials(rng, uniform_size(rng, 2, 25), kC, kT);
    const auto base = classify_offline(f.spec, f.weights, trials, AdaptPolicy{});

    std::vector<std::size_t> perm(trials.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Trial> shuffled;
    for (auto i : perm) shuffled.push_back(trials[i]);
    const auto p = classify_offline(f.spec, f.weights, shuffled, AdaptPolicy{});
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p[i].probs[k] - base[perm[i]].probs[k]) < 1e-9);

    // Every trial twice: same mean covariance, same BN moments.
    std::vector<Trial> doubled = trials;
    doubled.insert(doubled.end(), trials.begin(), trials.end());
    const auto d = classify_offline(f.spec, f.weights, doubled, AdaptPolicy{});
    for (std::size_t i = 0; i < trials.size(); ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(std::abs(d[i].probs[k] - base[i].probs[k]) < 1e-9);
        CHECK(std::abs(d[i + trials.size()].probs[k] - base[i].probs[k]) < 1e-9);
      }
  }
}

TEST_CASE("warm-up buffer joins the statistics up to the warm-up length only") {
  Fixture f;
  std::mt19937_64 rng(4);
  const auto buffer = random_trials(rng, 5, kC, kT, 2.0);
  const auto trials = random_trials(rng, 9, kC, kT);
  AdaptPolicy p;
  p.use_buffer = true;
  p.buffer_size = 5;
  p.warmup_trials = 4;
  auto s = start_session(f.spec, f.weights, p, buffer);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto pred = s.classify_next(trials[i]);
    std::vector<Trial> members;
    if (i + 1 <= p.warmup_trials) members = buffer;
    members.insert(members.end(), trials.begin(), trials.begin() + static_cast<std::ptrdiff_t>(i + 1));
    CHECK(pred.probs == row_of(probs_over(f, members), members.size() - 1));
    CHECK(s.align_state().count() == members.size());
  }

  // After the warm-up the buffer has no effect at all.
  auto plain = start_session(f.spec, f.weights, AdaptPolicy{}, {});
  for (const auto& t : trials) plain.classify_next(t);
  for (std::size_t i = p.warmup_trials; i < trials.size(); ++i)
    CHECK(plain.prob_rows()[i] == s.prob_rows()[i]);
}

TEST_CASE("alignment ablations") {
  Fixture f;
  std::mt19937_64 rng(5);
  const auto buffer = random_trials(rng, 3, kC, kT);
  const auto trials = random_trials(rng, 4, kC, kT);

  AdaptPolicy p;
  p.include_current_in_alignment = false;
  auto s = start_session(f.spec, f.weights, p, {});
  s.classify_next(trials[0]);
  CHECK(s.align_state().count() == 1);  // alone, it aligns itself
  s.classify_next(trials[1]);
  CHECK(s.align_state().count() == 1);
  AlignmentState first;
  first.accumulate(trials[0]);
  CHECK(s.align_state().cov_sum().matrix() == first.cov_sum().matrix());

  AdaptPolicy q;
  q.use_buffer = true;
  q.buffer_size = 3;
  q.buffer_in_alignment = false;
  auto b = start_session(f.spec, f.weights, q, buffer);
  b.classify_next(trials[0]);
  CHECK(b.align_state().count() == 1);
  b.classify_next(trials[1]);
  CHECK(b.align_state().count() == 2);
}

TEST_CASE("online mode uses the calibration whitener and stored statistics") {
  Fixture f;
  std::mt19937_64 rng(6);
  const auto trials = random_trials(rng, 6, kC, kT);
  AlignmentState cal;
  for (const auto& t : random_trials(rng, 10, kC, kT)) cal.accumulate(t);
  f.weights.calibration_whitener = cal.whitener();

  AdaptPolicy p;
  p.mode = Mode::online;
  auto s = start_session(f.spec, f.weights, p, {});
  auto r = start_session(f.spec, f.weights, p, {});
  for (const auto& t : trials) s.classify_next(t);
  for (auto it = trials.rbegin(); it != trials.rend(); ++it) r.classify_next(*it);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Matrix x = f.weights.calibration_whitener->matrix() * trials[i].data;
    const auto ref = forward(f.spec, f.weights, std::span(&x, 1), BnSelection::stored());
    CHECK(s.prob_rows()[i] == row_of(ref.probs, 0));
    CHECK(r.prob_rows()[trials.size() - 1 - i] == s.prob_rows()[i]);  // history plays no role
  }

  f.weights.calibration_whitener.reset();
  auto raw = start_session(f.spec, f.weights, p, {});
  const auto ref = forward(f.spec, f.weights, std::span(&trials[0].data, 1), BnSelection::stored());
  CHECK(raw.classify_next(trials[0]).probs == row_of(ref.probs, 0));
}

TEST_CASE("sessions are deterministic") {
  Fixture f;
  std::mt19937_64 rng(7);
  const auto trials = random_trials(rng, 10, kC, kT);
  AdaptPolicy p;
  p.use_soft_kmeans = true;
  auto a = start_session(f.spec, f.weights, p, {});
  auto b = start_session(f.spec, f.weights, p, {});
  for (const auto& t : trials) {
    a.classify_next(t);
    b.classify_next(t);
  }
  CHECK(a.prob_rows() == b.prob_rows());
  CHECK(a.predictions() == b.predictions());
}

TEST_CASE("soft k-means examples") {
  const std::vector<std::vector<double>> vertices = {{1, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
  CHECK(soft_kmeans_decide(vertices, 5.0, 10) == std::vector<std::size_t>{0, 2, 1, 0});
  CHECK(soft_kmeans_decide({}, 5.0, 10).empty());

  // Two symmetric rows around the midpoint: centroids stay balanced.
  const std::vector<std::vector<double>> pair = {{0.7, 0.3}, {0.3, 0.7}};
  CHECK(soft_kmeans_decide(pair, 5.0, 10) == std::vector<std::size_t>{0, 1});

  // Ten confident class-0 rows pull centroid 0; the uncertain rows are decided
  // by the nearest final centroid rather than by their own argmax.
  std::vector<std::vector<double>> crowd(10, {0.9, 0.1});
  crowd.push_back({0.45, 0.55});
  const auto d = soft_kmeans_decide(crowd, 5.0, 10);
  CHECK(d.size() == 11);
  for (std::size_t i = 0; i < 10; ++i) CHECK(d[i] == 0);

  using Rows = std::vector<std::vector<double>>;
  CHECK_THROWS_AS(soft_kmeans_decide(Rows{{0.5, 0.4}}, 5.0, 1), InvalidArgument);
  CHECK_THROWS_AS(soft_kmeans_decide(Rows{{1.2, -0.2}}, 5.0, 1), InvalidArgument);
  CHECK_THROWS_AS(soft_kmeans_decide(Rows{{0.5, 0.5}, {1.0}}, 5.0, 1), InvalidArgument);
  CHECK_THROWS_AS(soft_kmeans_decide(Rows{{1.0}}, 5.0, 1), InvalidArgument);
  CHECK_THROWS_AS(soft_kmeans_decide(pair, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(soft_kmeans_decide(pair, 5.0, -1), InvalidArgument);
}

TEST_CASE("soft k-means properties") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t k = uniform_size(rng, 2, 5);
    const auto rows = random_simplex_rows(rng, uniform_size(rng, 1, 40), k, uniform_real(rng, 0.2, 3.0));

    // No iterations: nearest vertex, which is the argmax.
    const auto zero = soft_kmeans_decide(rows, 5.0, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(zero[i] == argmax(rows[i]));

    // Very large beta turns the soft assignment into Lloyd's algorithm.
    CHECK(soft_kmeans_decide(rows, 1e9, 10) == hard_kmeans(rows, 10));

    // Decisions follow the rows under a permutation.
    std::vector<std::size_t> perm(rows.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> shuffled;
    for (auto i : perm) shuffled.push_back(rows[i]);
    const auto base = soft_kmeans_decide(rows, 5.0, 10);
    const auto moved = soft_kmeans_decide(shuffled, 5.0, 10);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) agree += moved[i] == base[perm[i]];
    CHECK(agree == perm.size());
  }
}
