// Reference solver for tiny adjustment problems, independent of the
// scaling-based solver it is used to check: diagonally scaled projected
// gradient descent on the entropic transport objective. The scaling is the
// inverse Hessian of the entropy term, the projection onto the marginal
// constraints is taken in the induced metric (a small dense solve), and a
// fraction-to-boundary rule plus Armijo backtracking keep iterates strictly
// feasible while the objective decreases monotonically.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pfp/error.hpp"
#include "pfp/relabel.hpp"

namespace pfp {

namespace {

constexpr std::size_t kMaxOracleRows = 4;
constexpr std::size_t kMaxOracleCols = 3;
constexpr double kLogFloor = 1e-300;  // keeps log(T) defined
constexpr double kStationarityTol = 1e-10;
constexpr int kMaxOuterIterations = 100000;

struct Shape {
  std::size_t n, k;
};

double objective(const std::vector<double>& t, const std::vector<double>& cost,
                 double lambda) {
  double obj = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::max(t[i], kLogFloor);
    obj += v * cost[i] + (v * (std::log(v) - 1.0)) / lambda;
  }
  return obj;
}

void gradient(const std::vector<double>& t, const std::vector<double>& cost,
              double lambda, std::vector<double>& grad) {
  for (std::size_t i = 0; i < t.size(); ++i)
    grad[i] = cost[i] + std::log(std::max(t[i], kLogFloor)) / lambda;
}

// Euclidean projection of g onto the tangent space {X1 = 0, X^T 1 = 0};
// its largest entry vanishes exactly at an interior optimum.
double tangent_residual(const std::vector<double>& g, const Shape& s) {
  std::vector<double> d = g;
  std::vector<double> rho(s.n, 0.0), gamma(s.k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t j = 0; j < s.k; ++j) {
      rho[i] -= d[i * s.k + j];
      gamma[j] -= d[i * s.k + j];
      total -= d[i * s.k + j];
    }
  const double a_sum = total / (2.0 * static_cast<double>(s.k));
  const double b_sum = total / (2.0 * static_cast<double>(s.n));
  double res = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    const double a = (rho[i] - b_sum) / static_cast<double>(s.k);
    for (std::size_t j = 0; j < s.k; ++j) {
      const double b = (gamma[j] - a_sum) / static_cast<double>(s.n);
      res = std::max(res, std::fabs(d[i * s.k + j] + a + b));
    }
  }
  return res;
}

// Gaussian elimination with partial pivoting; fine at dimension <= 6.
bool solve_dense(std::vector<std::vector<double>>& m, std::vector<double>& rhs) {
  const std::size_t dim = rhs.size();
  for (std::size_t col = 0; col < dim; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < dim; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[pivot][col])) pivot = r;
    if (std::fabs(m[pivot][col]) < 1e-300) return false;
    std::swap(m[col], m[pivot]);
    std::swap(rhs[col], rhs[pivot]);
    for (std::size_t r = 0; r < dim; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (std::size_t c = col; c < dim; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  for (std::size_t i = 0; i < dim; ++i) rhs[i] /= m[i][i];
  return true;
}

// Correction D (a (+) b) restoring the marginals of `raw` in the metric
// weighted by 1/D; gauge fixed by b_0 = 0. Writes the projected direction
// delta = raw_step + D (a (+) b).
bool metric_project(const std::vector<double>& step,
                    const std::vector<double>& scale, const Shape& s,
                    std::vector<double>& delta) {
  std::vector<double> rho(s.n, 0.0), gamma(s.k, 0.0);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t j = 0; j < s.k; ++j) {
      rho[i] -= step[i * s.k + j];
      gamma[j] -= step[i * s.k + j];
    }

  const std::size_t dim = s.n + s.k - 1;  // unknowns a_0..a_{n-1}, b_1..b_{k-1}
  std::vector<std::vector<double>> m(dim, std::vector<double>(dim, 0.0));
  std::vector<double> rhs(dim, 0.0);
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = 0; j < s.k; ++j) {
      const double d = scale[i * s.k + j];
      m[i][i] += d;
      if (j >= 1) m[i][s.n + j - 1] += d;
    }
    rhs[i] = rho[i];
  }
  for (std::size_t j = 1; j < s.k; ++j) {
    for (std::size_t i = 0; i < s.n; ++i) {
      const double d = scale[i * s.k + j];
      m[s.n + j - 1][i] += d;
      m[s.n + j - 1][s.n + j - 1] += d;
    }
    rhs[s.n + j - 1] = gamma[j];
  }
  if (!solve_dense(m, rhs)) return false;

  delta.resize(step.size());
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t j = 0; j < s.k; ++j) {
      const double b = j >= 1 ? rhs[s.n + j - 1] : 0.0;
      delta[i * s.k + j] = step[i * s.k + j] + scale[i * s.k + j] * (rhs[i] + b);
    }
  return true;
}

}  // namespace

AdjustedAssignment oracle_exact_small(const AdjustmentProblem& problem) {
  const detail::PreparedProblem prep = detail::prepare(problem);
  if (prep.rows > kMaxOracleRows || prep.cols > kMaxOracleCols)
    throw SizeLimitExceeded("oracle_exact_small: instance " +
                            std::to_string(prep.rows) + "x" +
                            std::to_string(prep.cols) + " exceeds 4x3");

  const Shape shape{prep.rows, prep.cols};
  const double lambda = prep.settings.lambda;
  const std::size_t total = prep.rows * prep.cols;

  std::vector<double> cost(total);
  for (std::size_t i = 0; i < total; ++i) cost[i] = -std::log(prep.probs[i]);

  const std::vector<double> row_sums(prep.rows,
                                     1.0 / static_cast<double>(prep.rows));
  const std::vector<double>& col_sums = prep.target;

  double grad_scale = 1.0;
  for (double c : cost) grad_scale = std::max(grad_scale, std::fabs(c));

  // Independent coupling: feasible and strictly positive.
  std::vector<double> t(total);
  for (std::size_t i = 0; i < prep.rows; ++i)
    for (std::size_t j = 0; j < prep.cols; ++j)
      t[i * prep.cols + j] = row_sums[i] * col_sums[j];

  std::vector<double> grad(total), scale(total), step(total), delta(total),
      trial(total);
  double obj = objective(t, cost, lambda);

  AdjustedAssignment out;
  int iter = 0;
  for (; iter < kMaxOuterIterations; ++iter) {
    gradient(t, cost, lambda, grad);
    if (tangent_residual(grad, shape) <= kStationarityTol * grad_scale) {
      out.converged = true;
      break;
    }

    // Inverse-Hessian scaling of the entropy term; step then projection in
    // the same metric. delta keeps every row and column sum unchanged.
    for (std::size_t i = 0; i < total; ++i) {
      scale[i] = lambda * std::max(t[i], kLogFloor);
      step[i] = -scale[i] * grad[i];
    }
    if (!metric_project(step, scale, shape, delta)) break;

    // Fraction to boundary, then monotone backtracking.
    double eta = 1.0;
    for (std::size_t i = 0; i < total; ++i)
      if (delta[i] < 0.0) eta = std::min(eta, 0.95 * t[i] / -delta[i]);
    bool accepted = false;
    for (int halving = 0; halving < 60 && !accepted; ++halving) {
      for (std::size_t i = 0; i < total; ++i)
        trial[i] = t[i] + eta * delta[i];
      const double trial_obj = objective(trial, cost, lambda);
      if (trial_obj <= obj) {
        t.swap(trial);
        obj = trial_obj;
        accepted = true;
      } else {
        eta *= 0.5;
      }
    }
    if (!accepted) break;  // objective at floating-point resolution
  }

  out.iterations_used = iter;
  out.adjusted.cols = prep.cols;
  out.adjusted.data.resize(total);
  out.achieved_marginal.assign(prep.cols, 0.0);
  double final_err = 0.0;
  for (std::size_t i = 0; i < prep.rows; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < prep.cols; ++j) rs += t[i * prep.cols + j];
    final_err += std::fabs(rs - row_sums[i]);
    for (std::size_t j = 0; j < prep.cols; ++j) {
      out.adjusted.data[i * prep.cols + j] = t[i * prep.cols + j] / rs;
      out.achieved_marginal[j] += t[i * prep.cols + j];
    }
  }
  for (std::size_t j = 0; j < prep.cols; ++j)
    final_err = std::max(
        final_err, std::fabs(out.achieved_marginal[j] - col_sums[j]));
  out.error_trace.push_back(final_err);
  return out;
}

}  // namespace pfp
