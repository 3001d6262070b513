#include "pfp/relabel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pfp/error.hpp"
#include "pfp/kernels.hpp"
#include "pfp/rng.hpp"

namespace pfp {

namespace {

constexpr double kProbClamp = 1e-12;

// Log-domain scaling is mandatory from this lambda upward.
constexpr double kLogDomainLambda = 50.0;

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// log(sum_j exp(x_j)) over a small contiguous range.
double log_sum_exp(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, x[j]);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += std::exp(x[j] - m);
  return m + std::log(acc);
}

struct ScalingResult {
  std::vector<double> adjusted;  // row-major, rows renormalized
  std::vector<double> achieved_marginal;
  int iterations_used = 0;
  bool converged = false;
  std::vector<double> error_trace;
  bool finite = true;  // plain-domain scaling stayed in range
};

// Plain-domain alternating scaling on K = probs^lambda, column-major.
ScalingResult run_plain(const detail::PreparedProblem& prep) {
  const std::size_t n = prep.rows;
  const std::size_t k = prep.cols;
  const double row_mass = 1.0 / static_cast<double>(n);
  const auto& kr = kernels::ops();

  // Column-major kernel so the per-iteration loops run down columns.
  std::vector<std::vector<double>> kcol(k, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      kcol[j][i] = std::exp(prep.settings.lambda * std::log(prep.probs[i * k + j]));

  std::vector<double> v(k, 1.0);
  std::vector<double> u(n, 0.0);
  std::vector<double> denom(n, 0.0);  // (K v)_i under the current v
  std::vector<double> colsum(k, 0.0);

  ScalingResult res;
  kr.scale(denom.data(), kcol[0].data(), v[0], n);
  for (std::size_t j = 1; j < k; ++j)
    kr.axpy(denom.data(), kcol[j].data(), v[j], n);

  for (int iter = 0; iter < prep.settings.max_iterations; ++iter) {
    kr.recip_scale(u.data(), denom.data(), row_mass, n);

    double col_err = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double s = kr.dot(kcol[j].data(), u.data(), n);
      v[j] = prep.target[j] / s;
      col_err += std::fabs(v[j] * s - prep.target[j]);
    }

    kr.scale(denom.data(), kcol[0].data(), v[0], n);
    for (std::size_t j = 1; j < k; ++j)
      kr.axpy(denom.data(), kcol[j].data(), v[j], n);

    const double row_err = kr.l1_residual(u.data(), denom.data(), row_mass, n);
    const double err = std::max(row_err, col_err);
    res.iterations_used = iter + 1;

    if (!std::isfinite(err) || !all_finite(u) || !all_finite(v)) {
      res.finite = false;
      return res;
    }
    res.error_trace.push_back(err);
    if (err <= prep.settings.tolerance) {
      res.converged = true;
      break;
    }
  }

  res.adjusted.resize(n * k);
  for (std::size_t j = 0; j < k; ++j) {
    colsum[j] = v[j] * kr.dot(kcol[j].data(), u.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      res.adjusted[i * k + j] = kcol[j][i] * v[j] / denom[i];
  }
  res.achieved_marginal = colsum;
  return res;
}

// Log-domain scaling on potentials f (rows) and g (columns).
ScalingResult run_log_domain(const detail::PreparedProblem& prep) {
  const std::size_t n = prep.rows;
  const std::size_t k = prep.cols;
  const double log_row_mass = -std::log(static_cast<double>(n));

  std::vector<double> logk(n * k);
  for (std::size_t i = 0; i < n * k; ++i)
    logk[i] = prep.settings.lambda * std::log(prep.probs[i]);

  std::vector<double> f(n, 0.0), g(k, 0.0), h(n), m(k), shifted(n);
  std::vector<double> row_buf(k);

  auto row_lse = [&](std::size_t i) {
    const double* row = logk.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) row_buf[j] = row[j] + g[j];
    return log_sum_exp(row_buf.data(), k);
  };

  for (std::size_t i = 0; i < n; ++i) h[i] = row_lse(i);

  ScalingResult res;
  for (int iter = 0; iter < prep.settings.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) f[i] = log_row_mass - h[i];

    double col_err = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < n; ++i) shifted[i] = logk[i * k + j] + f[i];
      m[j] = log_sum_exp(shifted.data(), n);
      g[j] = std::log(prep.target[j]) - m[j];
      col_err += std::fabs(std::exp(g[j] + m[j]) - prep.target[j]);
    }

    double row_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = row_lse(i);
      row_err += std::fabs(std::exp(f[i] + h[i]) - 1.0 / static_cast<double>(n));
    }

    const double err = std::max(row_err, col_err);
    res.iterations_used = iter + 1;
    if (!std::isfinite(err) || !all_finite(f) || !all_finite(g))
      throw NonFinite("sinkhorn_adjust: stabilized scaling left finite range");
    res.error_trace.push_back(err);
    if (err <= prep.settings.tolerance) {
      res.converged = true;
      break;
    }
  }

  res.adjusted.resize(n * k);
  res.achieved_marginal.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      res.adjusted[i * k + j] = std::exp(logk[i * k + j] + g[j] - h[i]);
      res.achieved_marginal[j] += std::exp(logk[i * k + j] + f[i] + g[j]);
    }
  return res;
}

void renormalize_rows(std::vector<double>& data, std::size_t n,
                      std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += data[i * k + j];
    for (std::size_t j = 0; j < k; ++j) data[i * k + j] /= s;
  }
}

AdjustedAssignment finish(const detail::PreparedProblem& prep,
                          ScalingResult&& res) {
  renormalize_rows(res.adjusted, prep.rows, prep.cols);
  AdjustedAssignment out;
  out.adjusted.cols = prep.cols;
  out.adjusted.data = std::move(res.adjusted);
  out.achieved_marginal = std::move(res.achieved_marginal);
  out.iterations_used = res.iterations_used;
  out.converged = res.converged;
  out.error_trace = std::move(res.error_trace);
  return out;
}

}  // namespace

PredictionMatrix PredictionMatrix::zeros(std::size_t rows, std::size_t cols) {
  PredictionMatrix m;
  m.cols = cols;
  m.data.assign(rows * cols, 0.0);
  return m;
}

bool PredictionMatrix::row_stochastic(double tol) const {
  for (std::size_t i = 0; i < rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = at(i, j);
      if (!(v >= 0.0) || !std::isfinite(v)) return false;
      s += v;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

namespace detail {

PreparedProblem prepare(const AdjustmentProblem& problem) {
  const std::size_t n = problem.predictions.rows();
  const std::size_t k = problem.predictions.cols;
  if (n == 0) throw EmptyInput("sinkhorn_adjust: no prediction rows");
  if (k == 0 || problem.target_marginal.size() != k)
    throw ShapeMismatch("sinkhorn_adjust: target length " +
                        std::to_string(problem.target_marginal.size()) +
                        " does not match " + std::to_string(k) + " columns");
  if (!problem.predictions.row_stochastic(1e-9))
    throw Error("sinkhorn_adjust: predictions are not row-stochastic");

  double tsum = 0.0;
  for (double t : problem.target_marginal) {
    if (!(t >= 0.0) || !std::isfinite(t))
      throw Error("sinkhorn_adjust: invalid target marginal entry");
    tsum += t;
  }
  if (std::abs(tsum - 1.0) > 1e-9)
    throw Error("sinkhorn_adjust: target marginal does not sum to 1");
  if (problem.settings.lambda <= 0.0 || problem.settings.max_iterations <= 0 ||
      problem.settings.tolerance <= 0.0)
    throw Error("sinkhorn_adjust: invalid solver settings");

  // Infeasible support: all of the mass is demanded by a column whose
  // predictions are uniformly at (or below) the clamp floor.
  for (std::size_t j = 0; j < k; ++j) {
    if (problem.target_marginal[j] >= 1.0 - 1e-9) {
      double col_max = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        col_max = std::max(col_max, problem.predictions.at(i, j));
      if (col_max <= kProbClamp)
        throw DegenerateTarget(
            "sinkhorn_adjust: target places all mass on column " +
            std::to_string(j) + " with no prediction support");
    }
  }

  PreparedProblem prep;
  prep.rows = n;
  prep.cols = k;
  prep.settings = problem.settings;
  prep.probs.resize(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::max(problem.predictions.at(i, j), kProbClamp);
      prep.probs[i * k + j] = p;
      s += p;
    }
    for (std::size_t j = 0; j < k; ++j) prep.probs[i * k + j] /= s;
  }
  prep.target.resize(k);
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    prep.target[j] = std::max(problem.target_marginal[j], kProbClamp);
    s += prep.target[j];
  }
  for (std::size_t j = 0; j < k; ++j) prep.target[j] /= s;
  return prep;
}

}  // namespace detail

AdjustedAssignment sinkhorn_adjust(const AdjustmentProblem& problem) {
  const detail::PreparedProblem prep = detail::prepare(problem);
  if (prep.settings.lambda < kLogDomainLambda) {
    ScalingResult res = run_plain(prep);
    if (res.finite) return finish(prep, std::move(res));
    // Plain scaling left the finite range; redo with stabilization.
  }
  return finish(prep, run_log_domain(prep));
}

std::array<AdjustedAssignment, kDomainCount> adjust_all_domains(
    const std::array<PredictionMatrix, kDomainCount>& predictions,
    const FeatureDistribution& seed_distribution,
    const SolverSettings& settings) {
  const std::size_t n = predictions[0].rows();
  for (const auto& m : predictions)
    if (m.rows() != n)
      throw ShapeMismatch("adjust_all_domains: domains disagree on row count");

  std::array<AdjustedAssignment, kDomainCount> out;
  for (int d = 0; d < kDomainCount; ++d) {
    AdjustmentProblem problem;
    problem.predictions = predictions[d];
    const auto& t = seed_distribution.probs[d];
    problem.target_marginal.assign(t.begin(), t.end());
    problem.settings = settings;
    try {
      out[d] = sinkhorn_adjust(problem);
    } catch (const Error& e) {
      throw Error("domain " +
                  std::string(domain_key(static_cast<Domain>(d))) + ": " +
                  e.what());
    }
  }
  return out;
}

std::vector<FeatureVector> sample_assignments(
    const std::array<AdjustedAssignment, kDomainCount>& adjusted,
    std::uint64_t rng_seed) {
  const std::size_t n = adjusted[0].adjusted.rows();
  for (const auto& a : adjusted) {
    if (a.adjusted.rows() != n)
      throw ShapeMismatch("sample_assignments: domains disagree on row count");
    if (a.adjusted.cols != kSubFeatureCount)
      throw ShapeMismatch("sample_assignments: expected 5 sub-feature columns");
  }

  Rng rng(rng_seed);
  std::vector<FeatureVector> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < kDomainCount; ++d) {
      const double* row = adjusted[d].adjusted.row(i);
      out[i].entries[d] =
          rng.categorical(std::span<const double>(row, kSubFeatureCount));
    }
  }
  return out;
}

double entropic_objective(const AdjustmentProblem& problem,
                          const PredictionMatrix& assignment) {
  const detail::PreparedProblem prep = detail::prepare(problem);
  if (assignment.rows() != prep.rows || assignment.cols != prep.cols)
    throw ShapeMismatch("entropic_objective: assignment shape mismatch");
  const double row_mass = 1.0 / static_cast<double>(prep.rows);
  double obj = 0.0;
  for (std::size_t i = 0; i < prep.rows; ++i) {
    for (std::size_t j = 0; j < prep.cols; ++j) {
      const double t = assignment.at(i, j) * row_mass;
      if (t <= 0.0) continue;  // lim t->0 of both terms is 0
      const double cost = -std::log(prep.probs[i * prep.cols + j]);
      obj += t * cost + (t * (std::log(t) - 1.0)) / prep.settings.lambda;
    }
  }
  return obj;
}

}  // namespace pfp
