#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "mage/quad_oracle.hpp"

using namespace mage;

namespace {

ParamVector point(std::vector<double> v) {
  const std::size_t n = v.size();
  return ParamVector(ShapeTag{"point", {n}}, std::move(v));
}

void check_near(const ParamVector& got, std::vector<double> want, double tol = 1e-9) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) < tol);
}

// One-dimensional picture of the two-objective isotropic case: peak 1 at 0,
// peak 2 at d. Every optimum lies on the segment, at a curvature-weighted mean.
double optimum_on_segment(double k1, double k2, double w1, double d) {
  return (1.0 - w1) * k2 * d / (w1 * k1 + (1.0 - w1) * k2);
}

struct SegmentErrors {
  double bone;
  double soup;
};

SegmentErrors segment_errors(double k1, double k2, double beta, double mu, double d) {
  const double target = optimum_on_segment(k1, k2, mu, d);
  const double b1 = optimum_on_segment(k1, k2, beta, d);
  const double b2 = optimum_on_segment(k1, k2, 1.0 - beta, d);
  const double l1 = (beta + mu - 1.0) / (2.0 * beta - 1.0);
  const double merged = l1 * b1 + (1.0 - l1) * b2;
  const double soup = (1.0 - mu) * d;
  return {(merged - target) * (merged - target), (soup - target) * (soup - target)};
}

double g(std::span<const QuadReward> rewards, std::span<const double> mu, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) s += mu[i] * rewards[i](x);
  return s;
}

}  // namespace

TEST_CASE("worked example values") {
  const auto start = std::chrono::steady_clock::now();
  const auto ex = worked_example_rewards();
  const Preference half({0.5, 0.5});
  check_near(exact_optimum(ex, half.weights()), {2.0, -0.6});
  check_near(soup_solution(ex, half), {2.0, 0.0});
  const auto bone = bone_solution(ex, WeightMatrix::from_columns({{0.4, 0.6}, {0.6, 0.4}}), half);
  REQUIRE(bone.backbones.size() == 2);
  check_near(bone.backbones[0], {2.2, -5.0 / 7.0});
  check_near(bone.backbones[1], {1.8, -5.0 / 11.0});
  check_near(bone.merged, {2.0, -45.0 / 77.0});
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(std::chrono::duration<double>(elapsed).count() < 1e-3);

  // mu equal to the first column picks the first backbone
  const auto first = bone_solution(ex, WeightMatrix::from_columns({{0.4, 0.6}, {0.6, 0.4}}), Preference({0.4, 0.6}));
  check_near(first.merged, {2.2, -5.0 / 7.0});
}

TEST_CASE("exact and soup solutions on simple cases") {
  const auto ex = worked_example_rewards();
  const std::vector<double> e1{1.0, 0.0};
  check_near(exact_optimum(ex, e1), {1.0, 1.0});
  check_near(soup_solution(ex, Preference({0.0, 1.0})), {3.0, -1.0});

  const std::vector<QuadReward> same{QuadReward::isotropic(point({0, 0}), 2.0),
                                     QuadReward::isotropic(point({4, 2}), 2.0)};
  const Preference q({0.25, 0.75});
  check_near(soup_solution(same, q), {3.0, 1.5});
  check_near(exact_optimum(same, q.weights()), {3.0, 1.5});

  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(exact_optimum(same, zero), std::invalid_argument);
  CHECK_THROWS_AS(QuadReward::isotropic(point({0, 0}), 0.0), std::invalid_argument);
}

TEST_CASE("identity matrix reduces bone to soup") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> k(0.2, 5.0);
  for (int draw = 0; draw < 200; ++draw) {
    const std::vector<QuadReward> rewards{QuadReward(point({u(gen), u(gen)}), {k(gen), k(gen)}),
                                          QuadReward(point({u(gen), u(gen)}), {k(gen), k(gen)})};
    const double m = std::uniform_real_distribution<double>()(gen);
    const Preference mu({m, 1.0 - m});
    const auto bone = bone_solution(rewards, build_weight_matrix(2, 1.0), mu);
    const auto soup = soup_solution(rewards, mu);
    for (std::size_t j = 0; j < 2; ++j) REQUIRE(bone.merged[j] == doctest::Approx(soup[j]).epsilon(1e-12));
  }
}

TEST_CASE("closed form errors") {
  const auto e = closed_form_errors(1.0, 2.0, 0.7, 0.5, 1.0);
  CHECK(e.soup == doctest::Approx(1.0 / 36.0).epsilon(1e-12));
  CHECK(closed_form_errors(1.0, 2.0, 0.7, 0.7, 1.0).bone == 0.0);
  CHECK(closed_form_errors(1.0, 2.0, 0.7, 0.3, 1.0).bone == doctest::Approx(0.0));
  CHECK(closed_form_errors(1.0, 2.0, 0.7, 0.5, 3.0).soup == doctest::Approx(9.0 / 36.0).epsilon(1e-12));

  const auto d = closed_form_errors(2.0, 2.0, 0.7, 0.3, 1.0);
  CHECK(d.degenerate);
  CHECK(d.bone == 0.0);
  CHECK(d.soup == 0.0);

  CHECK_THROWS_AS(closed_form_errors(1.0, 2.0, 0.5, 0.3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(closed_form_errors(-1.0, 2.0, 0.7, 0.3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(closed_form_errors(1.0, 2.0, 0.7, 1.3, 1.0), std::invalid_argument);
}

TEST_CASE("closed form errors against the segment oracle, random draws") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> k(0.1, 10.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int draw = 0; draw < 1000; ++draw) {
    const double k1 = k(gen);
    double k2 = k(gen);
    if (k1 == k2) k2 += 0.5;
    const double beta = 0.5 + 0.005 + 0.495 * unit(gen);
    const double mu = unit(gen);
    const double d = 0.1 + 3.0 * unit(gen);
    const auto closed = closed_form_errors(k1, k2, beta, mu, d);
    const auto oracle = segment_errors(k1, k2, beta, mu, d);
    REQUIRE(std::abs(closed.bone - oracle.bone) < 1e-9);
    REQUIRE(std::abs(closed.soup - oracle.soup) < 1e-9);

    // the same quantities through the vector code path, on a random direction
    const double angle = 6.283185307179586 * unit(gen);
    const std::vector<double> p1{unit(gen), unit(gen)};
    const std::vector<double> p2{p1[0] + d * std::cos(angle), p1[1] + d * std::sin(angle)};
    const std::vector<QuadReward> rewards{QuadReward::isotropic(point(p1), k1), QuadReward::isotropic(point(p2), k2)};
    const Preference pref({mu, 1.0 - mu});
    const auto opt = exact_optimum(rewards, pref.weights());
    const auto bone = bone_solution(rewards, build_weight_matrix(2, beta), pref).merged;
    double eb = 0.0;
    for (std::size_t j = 0; j < 2; ++j) eb += (bone[j] - opt[j]) * (bone[j] - opt[j]);
    REQUIRE(std::abs(eb - oracle.bone) < 1e-9);
  }
}

TEST_CASE("exact optimum maximises the weighted reward on random probes") {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> k(0.2, 5.0);
  for (int draw = 0; draw < 300; ++draw) {
    const std::vector<QuadReward> rewards{QuadReward(point({u(gen), u(gen), u(gen)}), {k(gen), k(gen), k(gen)}),
                                          QuadReward(point({u(gen), u(gen), u(gen)}), {k(gen), k(gen), k(gen)}),
                                          QuadReward(point({u(gen), u(gen), u(gen)}), {k(gen), k(gen), k(gen)})};
    std::vector<double> mu{std::abs(u(gen)) + 0.01, std::abs(u(gen)), std::abs(u(gen))};
    const double s = mu[0] + mu[1] + mu[2];
    for (auto& m : mu) m /= s;
    const auto opt = exact_optimum(rewards, mu);
    const double best = g(rewards, mu, opt.values());
    for (int probe = 0; probe < 20; ++probe) {
      const std::vector<double> x{opt[0] + 0.3 * u(gen), opt[1] + 0.3 * u(gen), opt[2] + 0.3 * u(gen)};
      REQUIRE(g(rewards, mu, x) <= best + 1e-12);
    }
  }
}

TEST_CASE("theorem interval") {
  const auto near_half = theorem_interval(0.5 + 1e-9);
  CHECK(near_half.second - near_half.first == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-8));
  const auto six = theorem_interval(0.6);
  CHECK(six.first == doctest::Approx(0.13945).epsilon(1e-4));
  CHECK(six.second == doctest::Approx(0.86055).epsilon(1e-4));
  CHECK(six.second - six.first == doctest::Approx(std::sqrt(0.52)).epsilon(1e-12));
  const auto near_one = theorem_interval(1.0 - 1e-12);
  CHECK(near_one.first == doctest::Approx(0.0));
  CHECK(near_one.second == doctest::Approx(1.0));
  for (double beta = 0.51; beta < 1.0; beta += 0.01) {
    const auto iv = theorem_interval(beta);
    CHECK(iv.first + iv.second == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(iv.second - iv.first >= std::sqrt(2.0) / 2.0);
  }
  CHECK_THROWS_AS(theorem_interval(0.5), std::invalid_argument);
  CHECK_THROWS_AS(theorem_interval(1.0), std::invalid_argument);
}

TEST_CASE("verify theorem") {
  const auto r = verify_theorem(1.0, 3.0, 0.7, 0.01);
  CHECK(r.passed);
  CHECK_FALSE(r.degenerate);
  CHECK(r.points_checked > 0);
  CHECK(r.max_formula_discrepancy < 1e-9);
  CHECK(r.observed_lo <= r.interval.first + 0.01);
  CHECK(r.observed_hi >= r.interval.second - 0.01);

  const auto flat = verify_theorem(2.0, 2.0, 0.7, 0.01);
  CHECK(flat.degenerate);
  CHECK_FALSE(flat.passed);
  for (std::size_t i = 0; i < flat.mu_grid.size(); ++i) {
    CHECK(flat.bone_closed[i] == 0.0);
    CHECK(flat.soup_closed[i] == 0.0);
  }

  const auto six = verify_theorem(1.0, 2.0, 0.6, 0.05);
  CHECK(six.passed);
  // mu = 0.05 lies outside (0.139, 0.861) and is not asserted on
  std::size_t inside = 0;
  for (double mu : six.mu_grid) inside += (mu > six.interval.first && mu < six.interval.second) ? 1 : 0;
  CHECK(inside == six.points_checked);
  CHECK(six.points_checked == 15);

  for (double beta : {0.55, 0.65, 0.75, 0.85, 0.95}) {
    for (auto [k1, k2] : {std::pair{1.0, 2.0}, std::pair{1.0, 4.0}, std::pair{3.0, 5.0}, std::pair{0.2, 9.0}}) {
      const auto report = verify_theorem(k1, k2, beta, 0.01);
      CHECK_MESSAGE(report.passed, report.failure);
    }
  }
  CHECK_FALSE(format_oracle_report(r).empty());
}
