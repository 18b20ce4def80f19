#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mage/merge.hpp"
#include "mage/param_vector.hpp"

namespace mage {

// r(x) = peak_value - Σ_j curvature_j (x_j - peak_j)^2
struct QuadReward {
  ParamVector peak;
  std::vector<double> curvature;
  double peak_value = 0.0;

  QuadReward(ParamVector peak_point, std::vector<double> curvature_per_dim, double value_at_peak = 0.0);
  static QuadReward isotropic(ParamVector peak_point, double k, double value_at_peak = 0.0);

  double operator()(std::span<const double> x) const;
  std::size_t dimension() const { return peak.size(); }
};

// Argmax of Σ_i weights_i r_i; a per-dimension curvature-weighted mean of the peaks.
// `weights` need not lie on the simplex (backbone columns of an arbitrary B are accepted).
ParamVector exact_optimum(std::span<const QuadReward> rewards, std::span<const double> weights);

// Σ_i mu_i * peak_i
ParamVector soup_solution(std::span<const QuadReward> rewards, const Preference& mu);

struct BoneSolution {
  std::vector<ParamVector> backbones;
  MergeCoefficients lambda;
  ParamVector merged;
};

BoneSolution bone_solution(std::span<const QuadReward> rewards, const WeightMatrix& b,
                           const Preference& mu);

struct ErrorPair {
  double bone = 0.0;
  double soup = 0.0;
  bool degenerate = false;  // k1 == k2: both errors vanish identically
};

// Squared distances to the exact optimum for the two-objective isotropic case,
// with preference (mu, 1 - mu) and B = [[beta, 1-beta], [1-beta, beta]].
ErrorPair closed_form_errors(double k1, double k2, double beta, double mu, double peak_distance);

// Interval of mu on which bone merging is guaranteed to beat soup merging.
std::pair<double, double> theorem_interval(double beta);

struct OracleReport {
  double k1 = 0.0;
  double k2 = 0.0;
  double beta = 0.0;
  double grid_step = 0.0;
  std::vector<double> mu_grid;
  std::vector<double> bone_closed;
  std::vector<double> soup_closed;
  std::vector<double> bone_brute;
  std::vector<double> soup_brute;
  std::pair<double, double> interval{0.0, 0.0};
  std::size_t points_checked = 0;        // grid points strictly inside the interval
  double max_formula_discrepancy = 0.0;  // closed form vs brute force, over the whole grid
  // Widest grid range around mu = 1/2 on which bone strictly beats soup.
  double observed_lo = 0.0;
  double observed_hi = 0.0;
  bool degenerate = false;
  bool passed = false;
  std::optional<double> offending_mu;
  std::string failure;
};

inline constexpr double kFormulaTolerance = 1e-9;

// Checks the closed-form errors against brute force on a mu grid, and the
// strict superiority of bone merging inside theorem_interval(beta).
OracleReport verify_theorem(double k1, double k2, double beta, double grid_step);

std::string format_oracle_report(const OracleReport& report);

// The worked two-dimensional example: peaks (1,1) and (3,-1), curvatures (1,1) and (1,4).
std::vector<QuadReward> worked_example_rewards();

}  // namespace mage
