#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mage {

// Identifies the model kind a flat parameter vector was produced from.
// Two vectors can be merged only when their shape tags compare equal.
struct ShapeTag {
  std::string kind;
  std::vector<std::size_t> dims;

  std::size_t element_count() const;
  std::string to_string() const;  // e.g. "policy[16x9x8]"

  friend bool operator==(const ShapeTag&, const ShapeTag&) = default;
};

class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(ShapeTag shape, std::vector<double> values);

  const ShapeTag& shape() const { return shape_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool merge_compatible(const ParamVector& other) const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  ShapeTag shape_;
  std::vector<double> values_;
};

// Throws std::invalid_argument unless every vector shares one shape and length.
void require_merge_compatible(std::span<const ParamVector> models);

// Σ weights[i] * rows[i]; zero weights are skipped.
// Shared by parameter merging and prediction ensembling.
std::vector<double> weighted_sum(std::span<const std::span<const double>> rows,
                                 std::span<const double> weights);

}  // namespace mage
