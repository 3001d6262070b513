#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "pfp/taxonomy.hpp"

namespace pfp {

// Row-stochastic matrix of per-instruction classifier probabilities.
// Rows are instructions, columns sub-features.
struct PredictionMatrix {
  std::size_t cols = kSubFeatureCount;
  std::vector<double> data;  // row-major, rows() x cols

  std::size_t rows() const { return cols == 0 ? 0 : data.size() / cols; }
  double* row(std::size_t n) { return data.data() + n * cols; }
  const double* row(std::size_t n) const { return data.data() + n * cols; }
  double at(std::size_t n, std::size_t j) const { return data[n * cols + j]; }

  static PredictionMatrix zeros(std::size_t rows, std::size_t cols);
  bool row_stochastic(double tol = 1e-9) const;
};

struct SolverSettings {
  double lambda = 10.0;     // entropic regularization weight
  int max_iterations = 100; // scaling sweeps
  double tolerance = 1e-6;  // L1 marginal tolerance
};

// One per-domain marginal-constrained adjustment instance.
struct AdjustmentProblem {
  PredictionMatrix predictions;
  std::vector<double> target_marginal;  // length predictions.cols, sums to 1
  SolverSettings settings;
};

struct AdjustedAssignment {
  PredictionMatrix adjusted;             // rows renormalized to sum 1
  std::vector<double> achieved_marginal; // column sums of the transport plan
  int iterations_used = 0;
  bool converged = false;
  std::vector<double> error_trace;       // max marginal L1 error per sweep
};

// Entropy-regularized transport solve via alternating Sinkhorn scaling.
// Kernel K = exp(-lambda * C) with C = -log(clamped predictions); row
// marginals uniform 1/N, column marginals the target. Log-domain
// stabilization is used for lambda >= 50 and as an automatic fallback when
// plain scaling leaves the finite range. Throws DegenerateTarget on
// infeasible support, NonFinite if even the stabilized path degenerates.
AdjustedAssignment sinkhorn_adjust(const AdjustmentProblem& problem);

// Independent per-domain solves against the seed distribution; fails fast
// with the offending domain named in the error message.
std::array<AdjustedAssignment, kDomainCount> adjust_all_domains(
    const std::array<PredictionMatrix, kDomainCount>& predictions,
    const FeatureDistribution& seed_distribution,
    const SolverSettings& settings);

// One sub-feature per domain per instruction, drawn independently from the
// adjusted row categoricals. Reproducible for a fixed seed.
std::vector<FeatureVector> sample_assignments(
    const std::array<AdjustedAssignment, kDomainCount>& adjusted,
    std::uint64_t rng_seed);

// High-precision projected-gradient solution of the same objective,
// restricted to tiny instances (N <= 4, K <= 3). Lives here as a reference
// implementation for tests; throws SizeLimitExceeded beyond those bounds.
AdjustedAssignment oracle_exact_small(const AdjustmentProblem& problem);

// Entropic objective <T, C> + (1/lambda) sum T (log T - 1) of an assignment
// from either solver, where T recovers the transport plan as rows / N.
double entropic_objective(const AdjustmentProblem& problem,
                          const PredictionMatrix& assignment);

namespace detail {

// Validated, clamped and renormalized copy of an adjustment problem; the
// single preprocessing step shared by the solver, the oracle and the
// objective so that all three see the identical cost matrix.
struct PreparedProblem {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> probs;   // row-major, clamped + row-renormalized
  std::vector<double> target;  // clamped + renormalized
  SolverSettings settings;
};

PreparedProblem prepare(const AdjustmentProblem& problem);

}  // namespace detail

}  // namespace pfp
