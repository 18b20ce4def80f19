#include "mage/quad_oracle.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mage {
namespace {

ShapeTag point_shape_for(std::size_t dim) { return ShapeTag{"point", {dim}}; }

void require_same_dimension(std::span<const QuadReward> rewards) {
  if (rewards.empty()) throw std::invalid_argument("quad oracle: no rewards given");
  for (const auto& r : rewards) {
    if (r.dimension() != rewards[0].dimension()) {
      throw std::invalid_argument("quad oracle: reward dimensions differ");
    }
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

QuadReward::QuadReward(ParamVector peak_point, std::vector<double> curvature_per_dim,
                       double value_at_peak)
    : peak(std::move(peak_point)), curvature(std::move(curvature_per_dim)), peak_value(value_at_peak) {
  if (curvature.size() != peak.size()) {
    throw std::invalid_argument("QuadReward: curvature length must match peak dimension");
  }
  for (double k : curvature) {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("QuadReward: curvature must be > 0");
  }
}

QuadReward QuadReward::isotropic(ParamVector peak_point, double k, double value_at_peak) {
  std::vector<double> curv(peak_point.size(), k);
  return QuadReward(std::move(peak_point), std::move(curv), value_at_peak);
}

double QuadReward::operator()(std::span<const double> x) const {
  if (x.size() != peak.size()) throw std::invalid_argument("QuadReward: dimension mismatch");
  double v = peak_value;
  for (std::size_t j = 0; j < x.size(); ++j) v -= curvature[j] * (x[j] - peak[j]) * (x[j] - peak[j]);
  return v;
}

ParamVector exact_optimum(std::span<const QuadReward> rewards, std::span<const double> weights) {
  require_same_dimension(rewards);
  if (weights.size() != rewards.size()) {
    throw std::invalid_argument("exact_optimum: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(rewards.size()) + " rewards");
  }
  const std::size_t dim = rewards[0].dimension();
  std::vector<double> out(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      num += weights[i] * rewards[i].curvature[j] * rewards[i].peak[j];
      den += weights[i] * rewards[i].curvature[j];
    }
    if (den == 0.0) {
      throw std::invalid_argument("exact_optimum: zero total curvature in dimension " +
                                  std::to_string(j));
    }
    out[j] = num / den;
  }
  return ParamVector(point_shape_for(dim), std::move(out));
}

ParamVector soup_solution(std::span<const QuadReward> rewards, const Preference& mu) {
  require_same_dimension(rewards);
  if (mu.size() != rewards.size()) throw std::invalid_argument("soup_solution: dimension mismatch");
  std::vector<ParamVector> peaks;
  for (const auto& r : rewards) {
    peaks.emplace_back(point_shape_for(r.dimension()),
                       std::vector<double>(r.peak.values().begin(), r.peak.values().end()));
  }
  return merge_params(peaks, MergeCoefficients{{mu.weights().begin(), mu.weights().end()}});
}

BoneSolution bone_solution(std::span<const QuadReward> rewards, const WeightMatrix& b,
                           const Preference& mu) {
  require_same_dimension(rewards);
  if (b.size() != rewards.size()) throw std::invalid_argument("bone_solution: matrix size mismatch");
  BoneSolution out;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto column = b.column(i);
    out.backbones.push_back(exact_optimum(rewards, column));
  }
  out.lambda = solve_coefficients(b, mu);
  out.merged = merge_params(out.backbones, out.lambda);
  return out;
}

ErrorPair closed_form_errors(double k1, double k2, double beta, double mu, double peak_distance) {
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("closed_form_errors: curvatures must be > 0");
  if (!(beta > 0.5) || !(beta <= 1.0)) throw std::invalid_argument("closed_form_errors: beta outside (1/2, 1]");
  if (!(mu >= 0.0) || !(mu <= 1.0)) throw std::invalid_argument("closed_form_errors: mu outside [0, 1]");
  ErrorPair out;
  if (k1 == k2) {
    out.degenerate = true;
    return out;
  }
  const double d2 = peak_distance * peak_distance;
  const double test_den = mu * k1 + (1.0 - mu) * k2;
  const double bone_den =
      test_den * (beta * k1 + (1.0 - beta) * k2) * ((1.0 - beta) * k1 + beta * k2);
  const double bone_root = k1 * k2 * (k1 - k2) * (beta - mu) * (beta + mu - 1.0) / bone_den;
  const double soup_root = (k1 - k2) * (1.0 - mu) * mu / test_den;
  out.bone = bone_root * bone_root * d2;
  out.soup = soup_root * soup_root * d2;
  return out;
}

std::pair<double, double> theorem_interval(double beta) {
  if (!(beta > 0.5) || !(beta < 1.0)) throw std::invalid_argument("theorem_interval: beta outside (1/2, 1)");
  const double len = std::sqrt(2.0 * beta * beta - 2.0 * beta + 1.0);
  return {(1.0 - len) / 2.0, (1.0 + len) / 2.0};
}

std::vector<QuadReward> worked_example_rewards() {
  const ShapeTag tag{"point", {2}};
  return {QuadReward(ParamVector(tag, {1.0, 1.0}), {1.0, 1.0}),
          QuadReward(ParamVector(tag, {3.0, -1.0}), {1.0, 4.0})};
}

OracleReport verify_theorem(double k1, double k2, double beta, double grid_step) {
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("verify_theorem: curvatures must be > 0");
  if (!(grid_step > 0.0)) throw std::invalid_argument("verify_theorem: grid_step must be > 0");

  OracleReport report;
  report.k1 = k1;
  report.k2 = k2;
  report.beta = beta;
  report.grid_step = grid_step;
  report.interval = theorem_interval(beta);

  const ShapeTag tag{"point", {2}};
  const ParamVector peak1(tag, {1.0, 1.0});
  const ParamVector peak2(tag, {3.0, -1.0});
  const double distance = std::sqrt(squared_distance(peak1.values(), peak2.values()));
  const std::vector<QuadReward> rewards{QuadReward::isotropic(peak1, k1), QuadReward::isotropic(peak2, k2)};
  const WeightMatrix b = build_weight_matrix(2, beta);

  report.degenerate = (k1 == k2);
  const auto steps = static_cast<std::size_t>(std::floor(1.0 / grid_step + 1e-9));
  bool ok = true;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double mu = std::min(1.0, static_cast<double>(i) * grid_step);
    const Preference pref({mu, 1.0 - mu});
    const ErrorPair closed = closed_form_errors(k1, k2, beta, mu, distance);
    const std::vector<double> w{mu, 1.0 - mu};
    const ParamVector optimum = exact_optimum(rewards, w);
    const double bone = squared_distance(bone_solution(rewards, b, pref).merged.values(), optimum.values());
    const double soup = squared_distance(soup_solution(rewards, pref).values(), optimum.values());

    report.mu_grid.push_back(mu);
    report.bone_closed.push_back(closed.bone);
    report.soup_closed.push_back(closed.soup);
    report.bone_brute.push_back(bone);
    report.soup_brute.push_back(soup);
    const double discrepancy = std::max(std::abs(closed.bone - bone), std::abs(closed.soup - soup));
    report.max_formula_discrepancy = std::max(report.max_formula_discrepancy, discrepancy);
    if (discrepancy > kFormulaTolerance && ok) {
      ok = false;
      report.offending_mu = mu;
      std::ostringstream msg;
      msg << "closed form and brute force disagree by " << discrepancy << " at mu=" << mu;
      report.failure = msg.str();
    }

    const bool inside = mu > report.interval.first && mu < report.interval.second;
    if (!inside) continue;
    ++report.points_checked;
    if (!(closed.bone < closed.soup) && ok) {
      ok = false;
      report.offending_mu = mu;
      std::ostringstream msg;
      msg << (report.degenerate ? "degenerate curvatures (k1 == k2): both errors vanish"
                                : "bone error not below soup error")
          << " at mu=" << mu;
      report.failure = msg.str();
    }
  }

  // Observed range: walk outward from the grid point nearest 1/2.
  if (!report.mu_grid.empty()) {
    std::size_t centre = 0;
    for (std::size_t i = 0; i < report.mu_grid.size(); ++i) {
      if (std::abs(report.mu_grid[i] - 0.5) < std::abs(report.mu_grid[centre] - 0.5)) centre = i;
    }
    auto wins = [&](std::size_t i) { return report.bone_closed[i] < report.soup_closed[i]; };
    if (wins(centre)) {
      std::size_t lo = centre;
      std::size_t hi = centre;
      while (lo > 0 && wins(lo - 1)) --lo;
      while (hi + 1 < report.mu_grid.size() && wins(hi + 1)) ++hi;
      report.observed_lo = report.mu_grid[lo];
      report.observed_hi = report.mu_grid[hi];
    }
  }
  report.passed = ok;
  return report;
}

std::string format_oracle_report(const OracleReport& r) {
  std::ostringstream out;
  out << std::setprecision(9);
  out << "k1=" << r.k1 << " k2=" << r.k2 << " beta=" << r.beta << " step=" << r.grid_step << "\n";
  out << "  interval=(" << r.interval.first << ", " << r.interval.second
      << ") length=" << (r.interval.second - r.interval.first) << "\n";
  out << "  points_checked=" << r.points_checked << " max_formula_discrepancy=" << r.max_formula_discrepancy
      << "\n";
  out << "  observed_bone_wins=[" << r.observed_lo << ", " << r.observed_hi << "]\n";
  out << "  status=" << (r.passed ? "PASS" : "FAIL");
  if (r.degenerate) out << " (degenerate)";
  if (!r.failure.empty()) out << " " << r.failure;
  out << "\n";
  return out.str();
}

}  // namespace mage
