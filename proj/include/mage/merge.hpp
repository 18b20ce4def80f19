#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mage/param_vector.hpp"

namespace mage {

// A user preference over n >= 2 objectives: non-negative, summing to one.
class Preference {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit Preference(std::vector<double> weights);

  std::size_t size() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }
  double operator[](std::size_t i) const { return weights_[i]; }

  friend bool operator==(const Preference&, const Preference&) = default;

 private:
  std::vector<double> weights_;
};

// Merging coefficients solved from a preference. Entries may be negative.
struct MergeCoefficients {
  std::vector<double> lambda;

  std::size_t size() const { return lambda.size(); }
  double sum() const;
};

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(double eigenvalue, const std::string& what)
      : std::runtime_error(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const { return eigenvalue_; }

 private:
  double eigenvalue_;
};

// n×n column-stochastic reward-combination matrix. Column i is the
// combination weight w_i used to train backbone model i.
class WeightMatrix {
 public:
  static constexpr double kColumnSumTolerance = 1e-12;
  static constexpr double kSingularEigenvalue = 1e-10;

  // Symmetric circulant form: beta on the diagonal, (1-beta)/(n-1) elsewhere.
  static WeightMatrix circulant(std::size_t n, double beta);
  // Arbitrary column-stochastic matrix (used by the analytic oracle).
  static WeightMatrix from_columns(const std::vector<std::vector<double>>& columns);

  std::size_t size() const { return n_; }
  double operator()(std::size_t row, std::size_t col) const { return entries_[col * n_ + row]; }
  std::vector<double> column(std::size_t col) const;
  std::vector<double> multiply(std::span<const double> x) const;

  // Set only for the circulant form.
  std::optional<double> beta() const { return beta_; }

  // Eigenvalue of smallest magnitude (real part for the general case).
  double smallest_eigenvalue() const;

 private:
  WeightMatrix(std::size_t n, std::vector<double> column_major, std::optional<double> beta)
      : n_(n), entries_(std::move(column_major)), beta_(beta) {}

  std::size_t n_ = 0;
  std::vector<double> entries_;
  std::optional<double> beta_;
};

// Rejects beta <= 1/n or beta > 1.
WeightMatrix build_weight_matrix(std::size_t n, double beta);

// lambda = B^-1 mu. Throws SingularMatrixError when B is (numerically) singular.
MergeCoefficients solve_coefficients(const WeightMatrix& b, const Preference& mu);

ParamVector merge_params(std::span<const ParamVector> models, const MergeCoefficients& lambda);

// (1 + alpha) * theta_hat - alpha * theta_sft
ParamVector extrapolate(const ParamVector& theta_hat, const ParamVector& theta_sft, double alpha);

using BetaEvaluator = std::function<double(double beta)>;

// Candidate with the largest evaluated hypervolume; ties go to the smaller beta.
double select_beta(std::span<const double> candidates, std::size_t objective_count,
                   const BetaEvaluator& evaluate);

}  // namespace mage
