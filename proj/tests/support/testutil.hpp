#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pfp/relabel.hpp"
#include "pfp/rng.hpp"
#include "pfp/taxonomy.hpp"

namespace testutil {

// Regularized upper incomplete gamma Q(a, x), via series/continued fraction.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // Lower series, Q = 1 - P.
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Continued fraction (Lentz).
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

// p-value of a chi-square goodness-of-fit statistic.
inline double chi_square_pvalue(double stat, int dof) {
  return gamma_q(dof / 2.0, stat / 2.0);
}

// Random stochastic vector from unnormalized uniforms (entries >= floor).
inline std::vector<double> random_simplex(pfp::Rng& rng, std::size_t k,
                                          double floor = 0.02) {
  std::vector<double> v(k);
  double sum = 0.0;
  for (double& x : v) {
    x = floor + rng.uniform01();
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

inline pfp::PredictionMatrix random_predictions(pfp::Rng& rng, std::size_t n,
                                                std::size_t k,
                                                double floor = 0.02) {
  pfp::PredictionMatrix m = pfp::PredictionMatrix::zeros(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = random_simplex(rng, k, floor);
    std::copy(row.begin(), row.end(), m.row(i));
  }
  return m;
}

inline double l1_distance(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc;
}

// Scratch directory under the system temp root, wiped on construction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("pfp-test-" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::filesystem::path golden_dir() {
  return std::filesystem::path(PFP_GOLDEN_DIR);
}

}  // namespace testutil
