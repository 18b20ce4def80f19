#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mage/merge.hpp"
#include "mage/param_vector.hpp"
#include "mage/toy_world.hpp"

namespace mage {

// Per-token guidance for one context, indexed by candidate token.
using GuidanceScores = std::vector<double>;

// Value table over (prompt, previous token or start) x next token. One lookup
// returns the value of every candidate token.
class ExplicitValueModel {
 public:
  static constexpr const char* kKind = "explicit_value";
  static constexpr double kPrior = 0.5;

  ExplicitValueModel(std::size_t prompt_count, std::size_t vocab_size);
  static ExplicitValueModel for_task(const ToyTask& task) { return {task.prompt_count(), task.vocab_size()}; }
  static ExplicitValueModel from_params(const ParamVector& params);
  ParamVector to_params() const;

  std::size_t prompt_count() const { return prompts_; }
  std::size_t vocab_size() const { return vocab_; }
  std::size_t row_index(const Context& ctx) const;
  std::span<const double> row(const Context& ctx) const;
  std::span<double> row(const Context& ctx);
  std::span<const double> table() const { return table_; }

  friend bool operator==(const ExplicitValueModel&, const ExplicitValueModel&) = default;

 private:
  std::size_t prompts_;
  std::size_t vocab_;
  std::vector<double> table_;
};

struct ValueTrainingConfig {
  std::size_t trajectories = 6000;
  double learning_rate_floor = 0.002;  // per-entry step is max(floor, 1/visits)
  std::size_t report_every = 500;      // trajectories per loss-curve entry
  std::uint64_t seed = 0;
};

struct ExplicitValueFit {
  ExplicitValueModel model;
  std::vector<double> loss_curve;  // mean per-token squared-error loss over each reporting window
  std::vector<std::size_t> visits;
};

// SGD on sum_t 0.5 * (V(ctx_t)[y_t] - r_k)^2 over trajectories drawn from the sampler.
ExplicitValueFit train_explicit_value(const ToyTask& task, std::size_t objective, const TabularPolicy& sampler,
                                      const ValueTrainingConfig& config);

// Every objective fitted on the same sampled trajectories.
std::vector<ExplicitValueFit> train_explicit_values(const ToyTask& task, const TabularPolicy& sampler,
                                                    const ValueTrainingConfig& config);

// Rows of contexts outside the table fall back to the prior.
GuidanceScores explicit_scores(const ExplicitValueModel& model, const Context& ctx);

// log pi*(.|ctx) - log pi_ref(.|ctx).
class ImplicitValueModel {
 public:
  ImplicitValueModel(TabularPolicy tuned, TabularPolicy reference);

  const TabularPolicy& tuned() const { return tuned_; }
  const TabularPolicy& reference() const { return reference_; }

 private:
  TabularPolicy tuned_;
  TabularPolicy reference_;
};

GuidanceScores implicit_scores(const ImplicitValueModel& model, const Context& ctx);

enum class ValueMergeKind { linear, bone };

struct ValueMergeStrategy {
  ValueMergeKind kind = ValueMergeKind::linear;
  std::optional<WeightMatrix> b;  // required for bone
  double alpha = 0.0;             // extrapolation, bone only
  std::optional<ParamVector> reference;  // extrapolation anchor, bone only

  static ValueMergeStrategy linear() { return {}; }
  static ValueMergeStrategy bone(WeightMatrix matrix) { return {ValueMergeKind::bone, std::move(matrix), 0.0, {}}; }
};

// Linear: sum mu_i theta_i. Bone: lambda = B^-1 mu, then optional extrapolation.
// Bone merging of explicit value tables is rejected.
ParamVector merge_value_models(std::span<const ParamVector> models, const Preference& mu,
                               const ValueMergeStrategy& strategy);

// sum mu_i * scores_i
GuidanceScores ensemble_scores(std::span<const GuidanceScores> score_vectors, std::span<const double> mu);

}  // namespace mage
