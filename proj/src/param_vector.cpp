#include "mage/param_vector.hpp"

#include <cmath>
#include <stdexcept>

namespace mage {

std::size_t ShapeTag::element_count() const {
  std::size_t count = 1;
  for (std::size_t d : dims) count *= d;
  return dims.empty() ? 0 : count;
}

std::string ShapeTag::to_string() const {
  std::string out = kind + "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

ParamVector::ParamVector(ShapeTag shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (!shape_.dims.empty() && shape_.element_count() != values_.size()) {
    throw std::invalid_argument("ParamVector: shape " + shape_.to_string() + " expects " +
                                std::to_string(shape_.element_count()) + " values, got " +
                                std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw std::invalid_argument("ParamVector: non-finite entry at index " + std::to_string(i));
    }
  }
}

bool ParamVector::merge_compatible(const ParamVector& other) const {
  return shape_ == other.shape_ && values_.size() == other.values_.size();
}

void require_merge_compatible(std::span<const ParamVector> models) {
  if (models.empty()) throw std::invalid_argument("merge: no models given");
  for (std::size_t i = 1; i < models.size(); ++i) {
    if (!models[0].merge_compatible(models[i])) {
      throw std::invalid_argument("merge: shape mismatch between model 0 (" +
                                  models[0].shape().to_string() + ", len " +
                                  std::to_string(models[0].size()) + ") and model " +
                                  std::to_string(i) + " (" + models[i].shape().to_string() +
                                  ", len " + std::to_string(models[i].size()) + ")");
    }
  }
}

std::vector<double> weighted_sum(std::span<const std::span<const double>> rows,
                                 std::span<const double> weights) {
  if (rows.size() != weights.size()) {
    throw std::invalid_argument("weighted_sum: " + std::to_string(rows.size()) + " rows but " +
                                std::to_string(weights.size()) + " weights");
  }
  if (rows.empty()) throw std::invalid_argument("weighted_sum: empty input");
  const std::size_t len = rows[0].size();
  for (const auto& r : rows) {
    if (r.size() != len) throw std::invalid_argument("weighted_sum: length mismatch");
  }

  std::vector<double> out(len, 0.0);
  bool first = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    if (first) {
      for (std::size_t j = 0; j < len; ++j) out[j] = w * rows[i][j];
      first = false;
    } else {
      for (std::size_t j = 0; j < len; ++j) out[j] += w * rows[i][j];
    }
  }
  return out;
}

}  // namespace mage
