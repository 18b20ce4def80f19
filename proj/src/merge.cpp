#include "mage/merge.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mage {

Preference::Preference(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.size() < 2) {
    throw std::invalid_argument("Preference: need at least 2 objectives, got " +
                                std::to_string(weights_.size()));
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("Preference: weights must be finite and non-negative");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "Preference: weights sum to " << sum << ", expected 1";
    throw std::invalid_argument(msg.str());
  }
}

double MergeCoefficients::sum() const { return std::accumulate(lambda.begin(), lambda.end(), 0.0); }

WeightMatrix WeightMatrix::circulant(std::size_t n, double beta) {
  if (n < 2) throw std::invalid_argument("weight matrix: need n >= 2");
  const double lower = 1.0 / static_cast<double>(n);
  if (!(beta > lower) || !(beta <= 1.0)) {
    std::ostringstream msg;
    msg << "weight matrix: beta=" << beta << " outside (" << lower << ", 1]";
    throw std::invalid_argument(msg.str());
  }
  const double off = (1.0 - beta) / static_cast<double>(n - 1);
  std::vector<double> entries(n * n, off);
  for (std::size_t i = 0; i < n; ++i) entries[i * n + i] = beta;
  return WeightMatrix(n, std::move(entries), beta);
}

WeightMatrix WeightMatrix::from_columns(const std::vector<std::vector<double>>& columns) {
  const std::size_t n = columns.size();
  if (n < 2) throw std::invalid_argument("weight matrix: need n >= 2");
  std::vector<double> entries;
  entries.reserve(n * n);
  for (std::size_t c = 0; c < n; ++c) {
    if (columns[c].size() != n) throw std::invalid_argument("weight matrix: matrix is not square");
    double sum = 0.0;
    for (double v : columns[c]) {
      if (!std::isfinite(v)) throw std::invalid_argument("weight matrix: non-finite entry");
      sum += v;
      entries.push_back(v);
    }
    if (std::abs(sum - 1.0) > kColumnSumTolerance) {
      throw std::invalid_argument("weight matrix: column " + std::to_string(c) +
                                  " does not sum to 1");
    }
  }
  return WeightMatrix(n, std::move(entries), std::nullopt);
}

std::vector<double> WeightMatrix::column(std::size_t col) const {
  return {entries_.begin() + static_cast<std::ptrdiff_t>(col * n_),
          entries_.begin() + static_cast<std::ptrdiff_t>((col + 1) * n_)};
}

std::vector<double> WeightMatrix::multiply(std::span<const double> x) const {
  if (x.size() != n_) throw std::invalid_argument("weight matrix: dimension mismatch");
  std::vector<double> out(n_, 0.0);
  for (std::size_t c = 0; c < n_; ++c) {
    for (std::size_t r = 0; r < n_; ++r) out[r] += (*this)(r, c) * x[c];
  }
  return out;
}

double WeightMatrix::smallest_eigenvalue() const {
  if (beta_) {
    // Eigenvalues of the circulant: 1 (all-ones vector) and beta - off with multiplicity n-1.
    const double off = (1.0 - *beta_) / static_cast<double>(n_ - 1);
    const double other = *beta_ - off;
    return std::abs(other) < 1.0 ? other : 1.0;
  }
  Eigen::Map<const Eigen::MatrixXd> m(entries_.data(), static_cast<Eigen::Index>(n_),
                                      static_cast<Eigen::Index>(n_));
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  const auto& values = solver.eigenvalues();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (std::abs(values[i]) < std::abs(values[best])) best = i;
  }
  return values[best].real();
}

WeightMatrix build_weight_matrix(std::size_t n, double beta) { return WeightMatrix::circulant(n, beta); }

MergeCoefficients solve_coefficients(const WeightMatrix& b, const Preference& mu) {
  const std::size_t n = b.size();
  if (mu.size() != n) {
    throw std::invalid_argument("solve_coefficients: preference has " + std::to_string(mu.size()) +
                                " entries, matrix is " + std::to_string(n) + "x" +
                                std::to_string(n));
  }
  const double eig = b.smallest_eigenvalue();
  if (std::abs(eig) < WeightMatrix::kSingularEigenvalue) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "solve_coefficients: weight matrix is singular (eigenvalue " << eig << ")";
    throw SingularMatrixError(eig, msg.str());
  }

  MergeCoefficients out;
  out.lambda.resize(n);
  if (const auto beta = b.beta()) {
    // B = a I + c 11^T with a + n c = 1, so B^-1 mu = (mu - c * sum(mu)) / a.
    const double c = (1.0 - *beta) / static_cast<double>(n - 1);
    const double a = *beta - c;
    double total = 0.0;
    for (double m : mu.weights()) total += m;
    for (std::size_t i = 0; i < n; ++i) out.lambda[i] = (mu[i] - c * total) / a;
    return out;
  }

  Eigen::MatrixXd dense(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = b(r, c);
    }
  }
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = mu[i];
  const Eigen::VectorXd x = dense.fullPivLu().solve(rhs);
  for (std::size_t i = 0; i < n; ++i) out.lambda[i] = x(static_cast<Eigen::Index>(i));
  return out;
}

ParamVector merge_params(std::span<const ParamVector> models, const MergeCoefficients& lambda) {
  require_merge_compatible(models);
  if (models.size() != lambda.size()) {
    throw std::invalid_argument("merge_params: " + std::to_string(models.size()) +
                                " models but " + std::to_string(lambda.size()) + " coefficients");
  }
  std::vector<std::span<const double>> rows;
  rows.reserve(models.size());
  for (const auto& m : models) rows.push_back(m.values());
  return ParamVector(models[0].shape(), weighted_sum(rows, lambda.lambda));
}

ParamVector extrapolate(const ParamVector& theta_hat, const ParamVector& theta_sft, double alpha) {
  if (!theta_hat.merge_compatible(theta_sft)) {
    throw std::invalid_argument("extrapolate: shape mismatch (" + theta_hat.shape().to_string() +
                                " vs " + theta_sft.shape().to_string() + ")");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("extrapolate: alpha must be finite and >= 0");
  }
  if (alpha == 0.0) return theta_hat;
  std::vector<double> out(theta_hat.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = theta_hat[i] + alpha * (theta_hat[i] - theta_sft[i]);
  }
  return ParamVector(theta_hat.shape(), std::move(out));
}

double select_beta(std::span<const double> candidates, std::size_t objective_count,
                   const BetaEvaluator& evaluate) {
  if (candidates.empty()) throw std::invalid_argument("select_beta: empty candidate set");
  const double lower = 1.0 / static_cast<double>(objective_count);
  std::vector<double> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  for (double b : sorted) {
    if (!(b > lower) || !(b < 1.0)) {
      std::ostringstream msg;
      msg << "select_beta: candidate " << b << " outside (" << lower << ", 1)";
      throw std::invalid_argument(msg.str());
    }
  }
  double best = sorted.front();
  double best_score = evaluate(best);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double score = evaluate(sorted[i]);
    if (score > best_score) {
      best = sorted[i];
      best_score = score;
    }
  }
  return best;
}

}  // namespace mage
