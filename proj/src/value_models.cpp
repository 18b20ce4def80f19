#include "mage/value_models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mage {

ExplicitValueModel::ExplicitValueModel(std::size_t prompt_count, std::size_t vocab_size)
    : prompts_(prompt_count), vocab_(vocab_size), table_(prompt_count * (vocab_size + 1) * vocab_size, kPrior) {
  if (prompts_ == 0 || vocab_ == 0) throw std::invalid_argument("ExplicitValueModel: empty shape");
}

ExplicitValueModel ExplicitValueModel::from_params(const ParamVector& params) {
  const auto& shape = params.shape();
  if (shape.kind != kKind || shape.dims.size() != 3 || shape.dims[1] != shape.dims[2] + 1) {
    throw std::invalid_argument("ExplicitValueModel: cannot restore from " + shape.to_string());
  }
  ExplicitValueModel m(shape.dims[0], shape.dims[2]);
  std::copy(params.values().begin(), params.values().end(), m.table_.begin());
  return m;
}

ParamVector ExplicitValueModel::to_params() const {
  return ParamVector(ShapeTag{kKind, {prompts_, vocab_ + 1, vocab_}}, table_);
}

std::size_t ExplicitValueModel::row_index(const Context& ctx) const {
  if (ctx.prompt >= prompts_) throw std::out_of_range("ExplicitValueModel: prompt out of range");
  if (ctx.previous < kStartToken || (ctx.previous >= 0 && static_cast<std::size_t>(ctx.previous) >= vocab_)) {
    throw std::out_of_range("ExplicitValueModel: previous token out of range");
  }
  const std::size_t prev = ctx.previous == kStartToken ? vocab_ : static_cast<std::size_t>(ctx.previous);
  return ctx.prompt * (vocab_ + 1) + prev;
}

std::span<const double> ExplicitValueModel::row(const Context& ctx) const {
  return std::span<const double>(table_).subspan(row_index(ctx) * vocab_, vocab_);
}

std::span<double> ExplicitValueModel::row(const Context& ctx) {
  return std::span<double>(table_).subspan(row_index(ctx) * vocab_, vocab_);
}

std::vector<ExplicitValueFit> train_explicit_values(const ToyTask& task, const TabularPolicy& sampler,
                                                    const ValueTrainingConfig& config) {
  if (!sampler.compatible_with(task)) {
    throw std::invalid_argument("train_explicit_value: sampler shape does not match task " + task.name());
  }
  if (config.trajectories == 0) throw std::invalid_argument("train_explicit_value: no trajectories");
  const std::size_t k_count = task.objective_count();
  const std::size_t v = task.vocab_size();
  std::vector<ExplicitValueFit> fits;
  for (std::size_t k = 0; k < k_count; ++k) {
    fits.push_back({ExplicitValueModel::for_task(task), {}, {}});
  }
  const std::size_t slot_count = task.prompt_count() * (v + 1) * v;
  std::vector<std::vector<double>> values(k_count, std::vector<double>(slot_count, ExplicitValueModel::kPrior));
  std::vector<std::size_t> visits(slot_count, 0);
  std::vector<double> window_loss(k_count, 0.0);
  std::size_t window_tokens = 0;
  const std::size_t report_every = std::max<std::size_t>(1, config.report_every);

  Rng rng(config.seed);
  std::vector<std::size_t> slots(task.horizon());
  for (std::size_t n = 0; n < config.trajectories; ++n) {
    const std::size_t prompt = n % task.prompt_count();
    const Sequence seq = sample_sequence(sampler, task, prompt, rng);
    const auto rewards = terminal_rewards(task, prompt, seq);
    Context ctx{prompt, kStartToken};
    for (std::size_t t = 0; t < seq.size(); ++t) {
      slots[t] = sampler.row_index(ctx) * v + static_cast<std::size_t>(seq[t]);
      ctx.previous = seq[t];
    }
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const std::size_t slot = slots[t];
      ++visits[slot];
      const double step = std::max(config.learning_rate_floor, 1.0 / static_cast<double>(visits[slot]));
      for (std::size_t k = 0; k < k_count; ++k) {
        const double err = values[k][slot] - rewards[k];
        window_loss[k] += 0.5 * err * err;
        values[k][slot] -= step * err;
      }
      ++window_tokens;
    }
    if ((n + 1) % report_every == 0 || n + 1 == config.trajectories) {
      for (std::size_t k = 0; k < k_count; ++k) {
        fits[k].loss_curve.push_back(window_loss[k] / static_cast<double>(window_tokens));
        window_loss[k] = 0.0;
      }
      window_tokens = 0;
    }
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    const ShapeTag tag{ExplicitValueModel::kKind, {task.prompt_count(), v + 1, v}};
    fits[k].model = ExplicitValueModel::from_params(ParamVector(tag, std::move(values[k])));
    fits[k].visits = visits;
  }
  return fits;
}

ExplicitValueFit train_explicit_value(const ToyTask& task, std::size_t objective, const TabularPolicy& sampler,
                                      const ValueTrainingConfig& config) {
  if (objective >= task.objective_count()) {
    throw std::invalid_argument("train_explicit_value: objective index " + std::to_string(objective) +
                                " out of range");
  }
  auto fits = train_explicit_values(task, sampler, config);
  return std::move(fits[objective]);
}

GuidanceScores explicit_scores(const ExplicitValueModel& model, const Context& ctx) {
  if (ctx.prompt >= model.prompt_count()) return GuidanceScores(model.vocab_size(), ExplicitValueModel::kPrior);
  const auto r = model.row(ctx);
  return GuidanceScores(r.begin(), r.end());
}

ImplicitValueModel::ImplicitValueModel(TabularPolicy tuned, TabularPolicy reference)
    : tuned_(std::move(tuned)), reference_(std::move(reference)) {
  if (tuned_.prompt_count() != reference_.prompt_count() || tuned_.vocab_size() != reference_.vocab_size()) {
    throw std::invalid_argument("ImplicitValueModel: tuned and reference policies differ in shape");
  }
}

GuidanceScores implicit_scores(const ImplicitValueModel& model, const Context& ctx) {
  const auto lp = model.tuned().log_probabilities(ctx);
  const auto lq = model.reference().log_probabilities(ctx);
  GuidanceScores out(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) out[i] = lp[i] - lq[i];
  return out;
}

ParamVector merge_value_models(std::span<const ParamVector> models, const Preference& mu,
                               const ValueMergeStrategy& strategy) {
  require_merge_compatible(models);
  if (models.size() != mu.size()) {
    throw std::invalid_argument("merge_value_models: " + std::to_string(models.size()) + " models for a " +
                                std::to_string(mu.size()) + "-objective preference");
  }
  if (strategy.kind == ValueMergeKind::linear) {
    return merge_params(models, MergeCoefficients{{mu.weights().begin(), mu.weights().end()}});
  }
  if (models[0].shape().kind == ExplicitValueModel::kKind) {
    throw std::invalid_argument("merge_value_models: bone merging applies to implicit (policy) models only");
  }
  if (!strategy.b) throw std::invalid_argument("merge_value_models: bone strategy needs a weight matrix");
  const ParamVector merged = merge_params(models, solve_coefficients(*strategy.b, mu));
  if (strategy.alpha == 0.0) return merged;
  if (!strategy.reference) throw std::invalid_argument("merge_value_models: extrapolation needs a reference");
  return extrapolate(merged, *strategy.reference, strategy.alpha);
}

GuidanceScores ensemble_scores(std::span<const GuidanceScores> score_vectors, std::span<const double> mu) {
  if (score_vectors.empty()) throw std::invalid_argument("ensemble_scores: no score vectors");
  if (score_vectors.size() != mu.size()) {
    throw std::invalid_argument("ensemble_scores: " + std::to_string(score_vectors.size()) +
                                " score vectors for " + std::to_string(mu.size()) + " weights");
  }
  std::vector<std::span<const double>> rows;
  for (const auto& s : score_vectors) {
    if (s.size() != score_vectors[0].size()) throw std::invalid_argument("ensemble_scores: length mismatch");
    rows.emplace_back(s);
  }
  return weighted_sum(rows, mu);
}

}  // namespace mage
