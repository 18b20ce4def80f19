#include "mage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mage {
namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

// Sweep over points sorted by x descending; each point adds the strip between
// its y and the best y seen so far.
double hypervolume_2d(std::vector<std::vector<double>> pts, double ref_x, double ref_y) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a[0] != b[0] ? a[0] > b[0] : a[1] > b[1];
  });
  double volume = 0.0;
  double covered_y = ref_y;
  for (const auto& p : pts) {
    if (p[1] > covered_y) {
      volume += (p[0] - ref_x) * (p[1] - covered_y);
      covered_y = p[1];
    }
  }
  return volume;
}

double hypervolume_3d(const std::vector<std::vector<double>>& pts, std::span<const double> ref) {
  std::vector<double> levels;
  for (const auto& p : pts) levels.push_back(p[2]);
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double volume = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double top = levels[i];
    const double bottom = i + 1 < levels.size() ? levels[i + 1] : ref[2];
    std::vector<std::vector<double>> slice;
    for (const auto& p : pts) {
      if (p[2] >= top) slice.push_back({p[0], p[1]});
    }
    volume += hypervolume_2d(std::move(slice), ref[0], ref[1]) * (top - bottom);
  }
  return volume;
}

void require_front(const FrontSet& front, std::size_t min_points, const char* who) {
  if (front.size() < min_points) {
    throw std::invalid_argument(std::string(who) + ": need at least " + std::to_string(min_points) +
                                " points, got " + std::to_string(front.size()));
  }
  for (const auto& p : front) {
    if (p.rewards.size() != front[0].rewards.size()) {
      throw std::invalid_argument(std::string(who) + ": points differ in dimension");
    }
  }
}

}  // namespace

bool dominates(std::span<const double> a, std::span<const double> b) {
  bool strictly = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] < b[k]) return false;
    if (a[k] > b[k]) strictly = true;
  }
  return strictly;
}

FrontSet pareto_front(const FrontSet& points) {
  FrontSet out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      dominated = j != i && dominates(points[j].rewards, points[i].rewards);
    }
    if (!dominated) out.push_back(points[i]);
  }
  return out;
}

double hypervolume(const std::vector<std::vector<double>>& points, std::span<const double> reference) {
  const std::size_t dim = reference.size();
  if (dim != 2 && dim != 3) {
    throw std::invalid_argument("hypervolume: only 2 or 3 objectives are supported, got " +
                                std::to_string(dim));
  }
  std::vector<std::vector<double>> above;
  for (const auto& p : points) {
    if (p.size() != dim) {
      throw std::invalid_argument("hypervolume: point has " + std::to_string(p.size()) +
                                  " coordinates, reference has " + std::to_string(dim));
    }
    bool inside = true;
    for (std::size_t k = 0; k < dim; ++k) inside = inside && p[k] > reference[k];
    if (inside) above.push_back(p);
  }
  if (above.empty()) return 0.0;
  return dim == 2 ? hypervolume_2d(std::move(above), reference[0], reference[1])
                  : hypervolume_3d(above, reference);
}

double hypervolume(const FrontSet& front, std::span<const double> reference) {
  std::vector<std::vector<double>> pts;
  pts.reserve(front.size());
  for (const auto& p : front) pts.push_back(p.rewards);
  return hypervolume(pts, reference);
}

double inner_product(std::span<const double> mu, std::span<const double> rewards) {
  if (mu.size() != rewards.size()) {
    throw std::invalid_argument("inner_product: dimension mismatch (" + std::to_string(mu.size()) +
                                " vs " + std::to_string(rewards.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu[i] * rewards[i];
  return s;
}

double mean_inner_product(const FrontSet& front) {
  require_front(front, 1, "inner_product");
  double s = 0.0;
  for (const auto& p : front) s += inner_product(p.preference, p.rewards);
  return s / static_cast<double>(front.size());
}

double sparsity(const FrontSet& front) {
  require_front(front, 2, "sparsity");
  double s = 0.0;
  for (std::size_t i = 1; i < front.size(); ++i) {
    const double d = distance(front[i].rewards, front[i - 1].rewards);
    s += d * d;
  }
  return s / static_cast<double>(front.size() - 1);
}

double spacing(const FrontSet& front) {
  require_front(front, 2, "spacing");
  const std::size_t n = front.size();
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) nearest[i] = std::min(nearest[i], distance(front[i].rewards, front[j].rewards));
    }
  }
  double mean = 0.0;
  for (double d : nearest) mean += d;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double d : nearest) var += (d - mean) * (d - mean);
  return std::sqrt(var / static_cast<double>(n));
}

double controllability(const std::vector<std::vector<double>>& preferences,
                       const std::vector<std::vector<double>>& rewards) {
  if (preferences.size() != rewards.size()) {
    throw std::invalid_argument("controllability: " + std::to_string(preferences.size()) +
                                " preferences but " + std::to_string(rewards.size()) + " outputs");
  }
  const std::size_t n = preferences.size();
  if (n < 2) throw std::invalid_argument("controllability: need at least 2 outputs");
  std::size_t agreeing = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (preferences[i].size() != rewards[i].size() || preferences[j].size() != rewards[j].size()) {
        throw std::invalid_argument("controllability: preference and reward dimensions differ");
      }
      bool all = true;
      for (std::size_t k = 0; k < preferences[i].size() && all; ++k) {
        all = sign(preferences[i][k] - preferences[j][k]) == sign(rewards[i][k] - rewards[j][k]);
      }
      agreeing += all ? 1 : 0;
    }
  }
  return static_cast<double>(agreeing) / static_cast<double>(n * (n - 1));
}

double controllability(const FrontSet& front) {
  std::vector<std::vector<double>> prefs;
  std::vector<std::vector<double>> rewards;
  for (const auto& p : front) {
    prefs.push_back(p.preference);
    rewards.push_back(p.rewards);
  }
  return controllability(prefs, rewards);
}

std::vector<double> reference_point(std::span<const FrontSet> fronts, double margin) {
  std::vector<double> ref;
  for (const auto& front : fronts) {
    for (const auto& p : front) {
      if (ref.empty()) ref.assign(p.rewards.size(), std::numeric_limits<double>::infinity());
      if (p.rewards.size() != ref.size()) throw std::invalid_argument("reference_point: dimension mismatch");
      for (std::size_t k = 0; k < ref.size(); ++k) ref[k] = std::min(ref[k], p.rewards[k]);
    }
  }
  if (ref.empty()) throw std::invalid_argument("reference_point: no points");
  for (double& r : ref) r -= margin;
  return ref;
}

}  // namespace mage
