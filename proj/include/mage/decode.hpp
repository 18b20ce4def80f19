#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "mage/toy_world.hpp"
#include "mage/value_models.hpp"

namespace mage {

enum class GuidanceKind { none, explicit_value, implicit_value };

// Source of per-token guidance scores. Several members of one kind are
// combined by prediction ensembling with the given weights.
class Guidance {
 public:
  static Guidance none() { return Guidance(); }
  static Guidance from_explicit(ExplicitValueModel model);
  static Guidance from_implicit(ImplicitValueModel model);
  static Guidance ensemble(std::vector<ExplicitValueModel> models, std::vector<double> weights);
  static Guidance ensemble(std::vector<ImplicitValueModel> models, std::vector<double> weights);

  GuidanceKind kind() const { return kind_; }
  std::size_t member_count() const;
  GuidanceScores scores(const Context& ctx, std::size_t vocab_size) const;

 private:
  GuidanceKind kind_ = GuidanceKind::none;
  std::shared_ptr<const std::vector<ExplicitValueModel>> explicit_;
  std::shared_ptr<const std::vector<ImplicitValueModel>> implicit_;
  std::vector<double> weights_;
};

struct GuidanceConfig {
  double gamma = 1.0;
};

struct BeamConfig {
  std::size_t width = 1;      // b
  std::size_t expansion = 1;  // c
  std::size_t interval = 1;   // l
};

// argmax_y probs[y] * exp(gamma * scores[y]); ties go to the lowest index.
Token guided_next_token(std::span<const double> base_probs, std::span<const double> scores, double gamma);

Sequence greedy_decode(const TabularPolicy& policy, const ToyTask& task, std::size_t prompt);
Sequence guided_decode(const TabularPolicy& policy, const Guidance& guidance, const ToyTask& task,
                       std::size_t prompt, double gamma);

// Keeps `width` partial sequences scored by sum of log p + gamma * score.
// Every `interval` steps each beam branches into its top `expansion` guided
// candidates; in between each beam extends with its guided argmax.
Sequence beam_guided_decode(const TabularPolicy& policy, const Guidance& guidance, const ToyTask& task,
                            std::size_t prompt, double gamma, const BeamConfig& beam);

// Greedy on sum_i mu_i * pi_i(y | ctx).
Sequence logit_ensemble_decode(std::span<const TabularPolicy> policies, std::span<const double> mu,
                               const ToyTask& task, std::size_t prompt);

}  // namespace mage
