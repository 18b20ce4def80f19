#pragma once

#include <span>
#include <string>
#include <vector>

namespace mage {

// One evaluated system: the preference it was built for and the mean test
// reward it achieved on each objective.
struct FrontPoint {
  std::vector<double> preference;
  std::vector<double> rewards;
  std::string method;
  int seed = 0;
};

// Points in preference-sweep order.
using FrontSet = std::vector<FrontPoint>;

// Non-dominated subset under maximisation. Exact duplicates are kept.
FrontSet pareto_front(const FrontSet& points);

bool dominates(std::span<const double> a, std::span<const double> b);

// Exact volume of the union of boxes [reference, point]; supports 2 and 3
// objectives. Points not strictly above the reference in every coordinate
// contribute nothing.
double hypervolume(const std::vector<std::vector<double>>& points, std::span<const double> reference);
double hypervolume(const FrontSet& front, std::span<const double> reference);

double inner_product(std::span<const double> mu, std::span<const double> rewards);
// Mean of preference·reward over the front.
double mean_inner_product(const FrontSet& front);

// Mean squared distance between reward vectors of consecutive preferences.
double sparsity(const FrontSet& front);

// Standard deviation of nearest-neighbour distances.
double spacing(const FrontSet& front);

// Fraction of ordered pairs whose per-objective reward ordering matches the
// preference ordering on every objective. A zero sign only matches a zero sign.
double controllability(const std::vector<std::vector<double>>& preferences,
                       const std::vector<std::vector<double>>& rewards);
double controllability(const FrontSet& front);

// Componentwise minimum over all points, minus `margin`.
std::vector<double> reference_point(std::span<const FrontSet> fronts, double margin = 0.01);

}  // namespace mage
