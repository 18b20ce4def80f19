#include "mage/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mage {
namespace {

void require_decodable(const TabularPolicy& policy, const ToyTask& task, std::size_t prompt, const char* who) {
  if (!policy.compatible_with(task)) {
    throw std::invalid_argument(std::string(who) + ": policy shape does not match task " + task.name());
  }
  if (prompt >= task.prompt_count()) throw std::invalid_argument(std::string(who) + ": unknown prompt");
}

std::vector<double> guided_weights(std::span<const double> probs, std::span<const double> scores, double gamma) {
  std::vector<double> w(probs.size());
  for (std::size_t y = 0; y < probs.size(); ++y) w[y] = probs[y] * std::exp(gamma * scores[y]);
  return w;
}

// Indices of the `count` largest weights, ties by lowest index.
std::vector<std::size_t> top_indices(const std::vector<double>& w, std::size_t count) {
  std::vector<std::size_t> idx(w.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

}  // namespace

Guidance Guidance::from_explicit(ExplicitValueModel model) {
  return ensemble(std::vector<ExplicitValueModel>{std::move(model)}, {1.0});
}

Guidance Guidance::from_implicit(ImplicitValueModel model) {
  return ensemble(std::vector<ImplicitValueModel>{std::move(model)}, {1.0});
}

Guidance Guidance::ensemble(std::vector<ExplicitValueModel> models, std::vector<double> weights) {
  if (models.empty() || models.size() != weights.size()) {
    throw std::invalid_argument("Guidance: need one weight per value model");
  }
  Guidance g;
  g.kind_ = GuidanceKind::explicit_value;
  g.explicit_ = std::make_shared<const std::vector<ExplicitValueModel>>(std::move(models));
  g.weights_ = std::move(weights);
  return g;
}

Guidance Guidance::ensemble(std::vector<ImplicitValueModel> models, std::vector<double> weights) {
  if (models.empty() || models.size() != weights.size()) {
    throw std::invalid_argument("Guidance: need one weight per value model");
  }
  Guidance g;
  g.kind_ = GuidanceKind::implicit_value;
  g.implicit_ = std::make_shared<const std::vector<ImplicitValueModel>>(std::move(models));
  g.weights_ = std::move(weights);
  return g;
}

std::size_t Guidance::member_count() const { return weights_.size(); }

GuidanceScores Guidance::scores(const Context& ctx, std::size_t vocab_size) const {
  std::vector<GuidanceScores> parts;
  switch (kind_) {
    case GuidanceKind::none:
      return GuidanceScores(vocab_size, 0.0);
    case GuidanceKind::explicit_value:
      for (const auto& m : *explicit_) parts.push_back(explicit_scores(m, ctx));
      break;
    case GuidanceKind::implicit_value:
      for (const auto& m : *implicit_) parts.push_back(implicit_scores(m, ctx));
      break;
  }
  if (parts.size() == 1 && weights_[0] == 1.0) return std::move(parts[0]);
  return ensemble_scores(parts, weights_);
}

Token guided_next_token(std::span<const double> base_probs, std::span<const double> scores, double gamma) {
  if (base_probs.size() != scores.size()) {
    throw std::invalid_argument("guided_next_token: " + std::to_string(base_probs.size()) +
                                " probabilities but " + std::to_string(scores.size()) + " scores");
  }
  if (base_probs.empty()) throw std::invalid_argument("guided_next_token: empty distribution");
  if (!std::isfinite(gamma)) throw std::invalid_argument("guided_next_token: gamma must be finite");
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("guided_next_token: non-finite guidance score");
  }
  const auto w = guided_weights(base_probs, scores, gamma);
  std::size_t best = 0;
  for (std::size_t y = 1; y < w.size(); ++y) {
    if (w[y] > w[best]) best = y;
  }
  return static_cast<Token>(best);
}

Sequence greedy_decode(const TabularPolicy& policy, const ToyTask& task, std::size_t prompt) {
  return guided_decode(policy, Guidance::none(), task, prompt, 0.0);
}

Sequence guided_decode(const TabularPolicy& policy, const Guidance& guidance, const ToyTask& task,
                       std::size_t prompt, double gamma) {
  require_decodable(policy, task, prompt, "guided_decode");
  Sequence seq;
  seq.reserve(task.horizon());
  Context ctx{prompt, kStartToken};
  for (std::size_t t = 0; t < task.horizon(); ++t) {
    const Token y = guided_next_token(policy.probabilities(ctx), guidance.scores(ctx, task.vocab_size()), gamma);
    seq.push_back(y);
    ctx.previous = y;
  }
  return seq;
}

Sequence beam_guided_decode(const TabularPolicy& policy, const Guidance& guidance, const ToyTask& task,
                            std::size_t prompt, double gamma, const BeamConfig& beam) {
  if (beam.width == 0 || beam.expansion == 0 || beam.interval == 0) {
    throw std::invalid_argument("beam_guided_decode: width, expansion and interval must be >= 1");
  }
  require_decodable(policy, task, prompt, "beam_guided_decode");

  struct Beam {
    Sequence tokens;
    double score = 0.0;
  };
  std::vector<Beam> beams{Beam{}};
  for (std::size_t t = 0; t < task.horizon(); ++t) {
    const std::size_t branch = t % beam.interval == 0 ? beam.expansion : 1;
    std::vector<Beam> next;
    for (const auto& b : beams) {
      const Context ctx{prompt, b.tokens.empty() ? kStartToken : b.tokens.back()};
      const auto probs = policy.probabilities(ctx);
      const auto scores = guidance.scores(ctx, task.vocab_size());
      if (branch == 1) {
        const Token y = guided_next_token(probs, scores, gamma);
        const auto i = static_cast<std::size_t>(y);
        Beam nb{b.tokens, b.score + std::log(probs[i]) + gamma * scores[i]};
        nb.tokens.push_back(y);
        next.push_back(std::move(nb));
        continue;
      }
      for (std::size_t i : top_indices(guided_weights(probs, scores, gamma), branch)) {
        Beam nb{b.tokens, b.score + std::log(probs[i]) + gamma * scores[i]};
        nb.tokens.push_back(static_cast<Token>(i));
        next.push_back(std::move(nb));
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) { return a.score > b.score; });
    if (next.size() > beam.width) next.resize(beam.width);
    beams = std::move(next);
  }
  return beams.front().tokens;
}

Sequence logit_ensemble_decode(std::span<const TabularPolicy> policies, std::span<const double> mu,
                               const ToyTask& task, std::size_t prompt) {
  if (policies.empty() || policies.size() != mu.size()) {
    throw std::invalid_argument("logit_ensemble_decode: need one weight per policy");
  }
  for (const auto& p : policies) require_decodable(p, task, prompt, "logit_ensemble_decode");
  Sequence seq;
  seq.reserve(task.horizon());
  Context ctx{prompt, kStartToken};
  const GuidanceScores zeros(task.vocab_size(), 0.0);
  for (std::size_t t = 0; t < task.horizon(); ++t) {
    std::vector<std::vector<double>> probs;
    std::vector<std::span<const double>> rows;
    for (const auto& p : policies) probs.push_back(p.probabilities(ctx));
    for (const auto& p : probs) rows.emplace_back(p);
    const Token y = guided_next_token(weighted_sum(rows, mu), zeros, 0.0);
    seq.push_back(y);
    ctx.previous = y;
  }
  return seq;
}

}  // namespace mage
