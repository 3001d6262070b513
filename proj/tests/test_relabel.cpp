#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfp/error.hpp"
#include "pfp/relabel.hpp"
#include "pfp/rng.hpp"
#include "support/testutil.hpp"

using namespace pfp;

namespace {

AdjustmentProblem collapsed_2x2() {
  AdjustmentProblem p;
  p.predictions.cols = 2;
  p.predictions.data = {0.9, 0.1, 0.5, 0.5};
  p.target_marginal = {0.5, 0.5};
  p.settings = {10.0, 100000, 1e-9};
  return p;
}

double row_l1(const PredictionMatrix& m, std::size_t i,
              const std::vector<double>& want) {
  double acc = 0.0;
  for (std::size_t j = 0; j < m.cols; ++j)
    acc += std::fabs(m.at(i, j) - want[j]);
  return acc;
}

double cross_entropy_vs_predictions(const AdjustmentProblem& p,
                                    const PredictionMatrix& adjusted) {
  double ce = 0.0;
  for (std::size_t i = 0; i < adjusted.rows(); ++i)
    for (std::size_t j = 0; j < adjusted.cols; ++j)
      ce -= adjusted.at(i, j) *
            std::log(std::max(p.predictions.at(i, j), 1e-12));
  return ce / static_cast<double>(adjusted.rows());
}

}  // namespace

TEST_CASE("single-row problem is forced to the target") {
  AdjustmentProblem p;
  p.predictions.cols = 5;
  p.predictions.data = {0.7, 0.1, 0.1, 0.05, 0.05};
  p.target_marginal = {0.2, 0.2, 0.2, 0.2, 0.2};
  p.settings = {10.0, 1000, 1e-9};
  const AdjustedAssignment res = sinkhorn_adjust(p);
  CHECK(res.converged);
  for (int j = 0; j < 5; ++j)
    CHECK(res.adjusted.at(0, j) == doctest::Approx(0.2).epsilon(1e-10));
}

TEST_CASE("rows equal to the target are a fixed point") {
  const std::vector<double> target = {0.4, 0.3, 0.15, 0.1, 0.05};
  AdjustmentProblem p;
  p.predictions.cols = 5;
  for (int i = 0; i < 6; ++i)
    p.predictions.data.insert(p.predictions.data.end(), target.begin(),
                              target.end());
  p.target_marginal = target;
  p.settings = {10.0, 1000, 1e-9};
  const AdjustedAssignment res = sinkhorn_adjust(p);
  CHECK(res.converged);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(row_l1(res.adjusted, i, target) < 1e-11);
}

// Expected values computed with oracle_exact_small (projected gradient to
// 1e-10 scaled stationarity) before the scaling solver was written. The
// 2x2 equal-marginal polytope has one degree of freedom, so the optimum is
// also available in closed form: with plans [[x, .5-x], [.5-x, x]],
// ln(x/(.5-x)) = (lambda/2)(C01+C10-C00-C11) = 5 ln(45) gives
// 0.5 - x = 0.5/59050, i.e. adjusted off-diagonal 2(0.5-x) = 1.6934801e-5.
TEST_CASE("collapsed 2x2 instance matches the frozen oracle solution") {
  const AdjustmentProblem p = collapsed_2x2();

  const AdjustedAssignment oracle = oracle_exact_small(p);
  CHECK(oracle.converged);
  CHECK(oracle.adjusted.at(0, 0) == doctest::Approx(0.999983065199).epsilon(1e-9));
  CHECK(oracle.adjusted.at(0, 1) == doctest::Approx(0.000016934801).epsilon(1e-6));
  CHECK(oracle.adjusted.at(1, 0) == doctest::Approx(0.000016934801).epsilon(1e-6));
  CHECK(entropic_objective(p, oracle.adjusted) ==
        doctest::Approx(0.229937436558).epsilon(1e-9));

  const AdjustedAssignment sk = sinkhorn_adjust(p);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::fabs(sk.adjusted.at(i, j) - oracle.adjusted.at(i, j)) < 1e-5);
  CHECK(std::fabs(entropic_objective(p, sk.adjusted) -
                  entropic_objective(p, oracle.adjusted)) < 1e-5);
}

TEST_CASE("oracle agrees with sinkhorn on random tiny instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t k = 2 + rng.below(2);
    AdjustmentProblem p;
    p.predictions = testutil::random_predictions(rng, n, k, 0.05);
    p.target_marginal = testutil::random_simplex(rng, k, 0.05);
    p.settings = {10.0, 200000, 1e-10};

    const AdjustedAssignment oracle = oracle_exact_small(p);
    const AdjustedAssignment sk = sinkhorn_adjust(p);
    const double obj_oracle = entropic_objective(p, oracle.adjusted);
    const double obj_sk = entropic_objective(p, sk.adjusted);
    CHECK(obj_oracle <= obj_sk + 1e-5);
    CHECK(obj_oracle >= obj_sk - 1e-5);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j)
        CHECK(std::fabs(sk.adjusted.at(i, j) - oracle.adjusted.at(i, j)) <
              1e-5);
  }
}

TEST_CASE("oracle rejects instances beyond its size limit") {
  AdjustmentProblem p;
  p.predictions = PredictionMatrix::zeros(5, 3);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) p.predictions.row(i)[j] = 1.0 / 3;
  p.target_marginal = {0.3, 0.3, 0.4};
  CHECK_THROWS_AS(oracle_exact_small(p), SizeLimitExceeded);

  Rng rng(5);
  AdjustmentProblem wide;
  wide.predictions = testutil::random_predictions(rng, 2, 5);
  wide.target_marginal = testutil::random_simplex(rng, 5);
  CHECK_THROWS_AS(oracle_exact_small(wide), SizeLimitExceeded);
}

TEST_CASE("row stochasticity and marginal attainment on random instances") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    AdjustmentProblem p;
    p.predictions = testutil::random_predictions(rng, 200, 5);
    p.target_marginal = testutil::random_simplex(rng, 5);
    p.settings = {10.0, 10000, 1e-6};
    const AdjustedAssignment res = sinkhorn_adjust(p);
    CHECK(res.converged);
    for (std::size_t i = 0; i < 200; ++i) {
      double s = 0.0;
      for (int j = 0; j < 5; ++j) s += res.adjusted.at(i, j);
      CHECK(std::fabs(s - 1.0) < 1e-8);
    }
    CHECK(testutil::l1_distance(res.achieved_marginal, p.target_marginal) <=
          1e-6);
  }
}

TEST_CASE("recorded marginal error never increases across sweeps") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    AdjustmentProblem p;
    p.predictions = testutil::random_predictions(rng, 100, 5);
    p.target_marginal = testutil::random_simplex(rng, 5);
    p.settings = {10.0, 10000, 1e-10};
    const AdjustedAssignment res = sinkhorn_adjust(p);
    REQUIRE(res.error_trace.size() > 1);
    for (std::size_t i = 1; i < res.error_trace.size(); ++i)
      CHECK(res.error_trace[i] <= res.error_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("larger lambda tracks the predictions more closely") {
  Rng rng(17);
  AdjustmentProblem p;
  p.predictions = testutil::random_predictions(rng, 50, 5);
  p.target_marginal = testutil::random_simplex(rng, 5);
  double previous = 1e300;
  for (double lambda : {1.0, 5.0, 10.0, 50.0}) {
    p.settings = {lambda, 20000, 1e-9};
    const AdjustedAssignment res = sinkhorn_adjust(p);
    const double ce = cross_entropy_vs_predictions(p, res.adjusted);
    CHECK(ce < previous);
    previous = ce;
  }
}

TEST_CASE("log-domain path agrees with plain scaling") {
  // lambda = 50 runs stabilized; re-solving the same instance at 49.99
  // stays on the plain path and must land on the same solution.
  Rng rng(23);
  AdjustmentProblem p;
  p.predictions = testutil::random_predictions(rng, 40, 5, 0.05);
  p.target_marginal = testutil::random_simplex(rng, 5, 0.05);
  p.settings = {50.0, 50000, 1e-9};
  const AdjustedAssignment logdom = sinkhorn_adjust(p);
  p.settings.lambda = 49.999999;
  const AdjustedAssignment plain = sinkhorn_adjust(p);
  for (std::size_t i = 0; i < 40; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(logdom.adjusted.at(i, j) ==
            doctest::Approx(plain.adjusted.at(i, j)).epsilon(1e-4));
}

TEST_CASE("permuting rows permutes the solution identically") {
  Rng rng(41);
  AdjustmentProblem p;
  p.predictions = testutil::random_predictions(rng, 30, 5);
  p.target_marginal = testutil::random_simplex(rng, 5);
  p.settings = {10.0, 10000, 1e-8};
  const AdjustedAssignment base = sinkhorn_adjust(p);

  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  AdjustmentProblem q = p;
  for (std::size_t i = 0; i < 30; ++i)
    std::copy(p.predictions.row(perm[i]), p.predictions.row(perm[i]) + 5,
              q.predictions.row(i));
  const AdjustedAssignment permuted = sinkhorn_adjust(q);
  for (std::size_t i = 0; i < 30; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(permuted.adjusted.at(i, j) ==
            doctest::Approx(base.adjusted.at(perm[i], j)).epsilon(1e-9));
}

TEST_CASE("degenerate target without support is rejected") {
  AdjustmentProblem p;
  p.predictions.cols = 3;
  p.predictions.data = {1.0, 0.0, 0.0, 0.5, 0.5, 0.0};
  p.target_marginal = {0.0, 0.0, 1.0};
  p.settings = {10.0, 100, 1e-6};
  CHECK_THROWS_AS(sinkhorn_adjust(p), DegenerateTarget);
}

TEST_CASE("invalid shapes and empty input are rejected") {
  AdjustmentProblem p;
  p.predictions.cols = 5;
  p.target_marginal = {0.2, 0.2, 0.2, 0.2, 0.2};
  CHECK_THROWS_AS(sinkhorn_adjust(p), EmptyInput);

  p.predictions.data = {0.2, 0.2, 0.2, 0.2, 0.2};
  p.target_marginal = {0.5, 0.5};
  CHECK_THROWS_AS(sinkhorn_adjust(p), ShapeMismatch);
}

TEST_CASE("adjust_all_domains solves each domain against its own target") {
  Rng rng(55);
  std::array<PredictionMatrix, kDomainCount> predictions;
  FeatureDistribution seed;
  for (int d = 0; d < kDomainCount; ++d) {
    predictions[d] = testutil::random_predictions(rng, 120, 5);
    const auto t = testutil::random_simplex(rng, 5);
    std::copy(t.begin(), t.end(), seed.probs[d].begin());
  }
  const auto res =
      adjust_all_domains(predictions, seed, {10.0, 10000, 1e-7});
  for (int d = 0; d < kDomainCount; ++d) {
    const std::vector<double> target(seed.probs[d].begin(),
                                     seed.probs[d].end());
    CHECK(testutil::l1_distance(res[d].achieved_marginal, target) <= 1e-7);
  }
}

TEST_CASE("adjust_all_domains is deterministic and fails fast with domain") {
  Rng rng(56);
  std::array<PredictionMatrix, kDomainCount> predictions;
  FeatureDistribution seed;
  const PredictionMatrix shared = testutil::random_predictions(rng, 20, 5);
  for (int d = 0; d < kDomainCount; ++d) {
    predictions[d] = shared;
    seed.probs[d] = {0.2, 0.2, 0.2, 0.2, 0.2};
  }
  const auto a = adjust_all_domains(predictions, seed, {10.0, 1000, 1e-8});
  const auto b = adjust_all_domains(predictions, seed, {10.0, 1000, 1e-8});
  for (int d = 0; d < kDomainCount; ++d) {
    CHECK(a[d].adjusted.data == b[d].adjusted.data);
    // Five copies of the same problem give five copies of the same result.
    CHECK(a[d].adjusted.data == a[0].adjusted.data);
    CHECK(a[d].iterations_used == a[0].iterations_used);
  }

  // Break the Tone domain only; the error must name it.
  predictions[1] = PredictionMatrix::zeros(20, 5);
  for (std::size_t i = 0; i < 20; ++i) predictions[1].row(i)[0] = 1.0;
  seed.probs[1] = {0.0, 0.0, 0.0, 0.0, 1.0};
  try {
    adjust_all_domains(predictions, seed, {10.0, 1000, 1e-8});
    FAIL("expected a domain-tagged error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("Tone") != std::string::npos);
  }
}

TEST_CASE("sample_assignments draws the adjusted categoricals") {
  std::array<AdjustedAssignment, kDomainCount> adjusted;

  SUBCASE("one-hot rows are deterministic regardless of seed") {
    for (int d = 0; d < kDomainCount; ++d) {
      adjusted[d].adjusted = PredictionMatrix::zeros(10, 5);
      for (std::size_t i = 0; i < 10; ++i)
        adjusted[d].adjusted.row(i)[(i + d) % 5] = 1.0;
    }
    const auto a = sample_assignments(adjusted, 1);
    const auto b = sample_assignments(adjusted, 999);
    CHECK(a == b);
    for (std::size_t i = 0; i < 10; ++i)
      CHECK(a[i].entries[0] == static_cast<int>(i % 5));
  }

  SUBCASE("frequencies follow the rows") {
    for (int d = 0; d < kDomainCount; ++d) {
      adjusted[d].adjusted = PredictionMatrix::zeros(10000, 5);
      for (std::size_t i = 0; i < 10000; ++i) {
        adjusted[d].adjusted.row(i)[0] = 0.5;
        adjusted[d].adjusted.row(i)[1] = 0.5;
      }
    }
    const auto sample = sample_assignments(adjusted, 7);
    std::array<int, 5> counts{};
    for (const FeatureVector& fv : sample) ++counts[fv[Domain::Style]];
    CHECK(std::fabs(counts[0] / 10000.0 - 0.5) < 0.02);
    CHECK(std::fabs(counts[1] / 10000.0 - 0.5) < 0.02);
    CHECK(counts[2] == 0);
    CHECK(counts[3] == 0);
    CHECK(counts[4] == 0);
  }

  SUBCASE("same seed reproduces the sequence") {
    Rng rng(3);
    for (int d = 0; d < kDomainCount; ++d) {
      adjusted[d].adjusted = testutil::random_predictions(rng, 50, 5);
    }
    CHECK(sample_assignments(adjusted, 42) == sample_assignments(adjusted, 42));
  }
}
