#include "mage/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mage {

ToyTask::ToyTask(std::string name, std::size_t vocab_size, std::size_t horizon, std::size_t prompt_count,
                 std::vector<std::uint32_t> token_classes, std::vector<Objective> objectives)
    : name_(std::move(name)),
      vocab_size_(vocab_size),
      horizon_(horizon),
      prompt_count_(prompt_count),
      token_classes_(std::move(token_classes)),
      objectives_(std::move(objectives)) {
  if (vocab_size_ < 4) throw std::invalid_argument("ToyTask: vocab_size must be >= 4");
  if (horizon_ < 2) throw std::invalid_argument("ToyTask: horizon must be >= 2");
  if (prompt_count_ < 1) throw std::invalid_argument("ToyTask: need at least one prompt");
  if (objectives_.size() < 2) throw std::invalid_argument("ToyTask: need at least two objectives");
  if (token_classes_.size() != vocab_size_) {
    throw std::invalid_argument("ToyTask: token class table must cover the vocabulary");
  }
  for (const auto& o : objectives_) {
    if (o.kind == ObjectiveKind::class_fraction && o.token_class >= 32) {
      throw std::invalid_argument("ToyTask: class index out of range for objective " + o.name);
    }
  }
}

ToyTask ToyTask::ab_conflict(std::size_t objective_count, std::size_t prompt_count) {
  if (objective_count != 2 && objective_count != 3) {
    throw std::invalid_argument("ab-conflict: objective_count must be 2 or 3");
  }
  std::vector<std::uint32_t> classes(8);
  for (std::size_t t = 0; t < 8; ++t) classes[t] = t < 4 ? 0b01u : 0b10u;
  std::vector<Objective> objectives{{"class_a", ObjectiveKind::class_fraction, 0},
                                    {"class_b", ObjectiveKind::class_fraction, 1}};
  if (objective_count == 3) objectives.push_back({"diversity", ObjectiveKind::diversity, 0});
  return ToyTask("ab-conflict", 8, 8, prompt_count, std::move(classes), std::move(objectives));
}

bool ToyTask::in_class(Token token, unsigned token_class) const {
  return (token_classes_.at(static_cast<std::size_t>(token)) >> token_class) & 1u;
}

double terminal_reward(const ToyTask& task, std::size_t objective, std::size_t prompt,
                       std::span<const Token> sequence) {
  if (objective >= task.objective_count()) {
    throw std::invalid_argument("terminal_reward: objective index " + std::to_string(objective) +
                                " out of range (task has " + std::to_string(task.objective_count()) + ")");
  }
  if (prompt >= task.prompt_count()) throw std::invalid_argument("terminal_reward: unknown prompt");
  if (sequence.size() != task.horizon()) {
    throw std::invalid_argument("terminal_reward: sequence length " + std::to_string(sequence.size()) +
                                " != horizon " + std::to_string(task.horizon()));
  }
  for (Token t : sequence) {
    if (t < 0 || static_cast<std::size_t>(t) >= task.vocab_size()) {
      throw std::invalid_argument("terminal_reward: token outside vocabulary");
    }
  }
  const Objective& o = task.objectives()[objective];
  const auto n = static_cast<double>(sequence.size());
  if (o.kind == ObjectiveKind::class_fraction) {
    const auto hits = std::count_if(sequence.begin(), sequence.end(),
                                    [&](Token t) { return task.in_class(t, o.token_class); });
    return static_cast<double>(hits) / n;
  }
  std::vector<bool> seen(task.vocab_size(), false);
  std::size_t distinct = 0;
  for (Token t : sequence) {
    if (!seen[static_cast<std::size_t>(t)]) {
      seen[static_cast<std::size_t>(t)] = true;
      ++distinct;
    }
  }
  return static_cast<double>(distinct) / n;
}

std::vector<double> terminal_rewards(const ToyTask& task, std::size_t prompt, std::span<const Token> sequence) {
  std::vector<double> out(task.objective_count());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = terminal_reward(task, k, prompt, sequence);
  return out;
}

double backbone_reward(std::span<const double> w, std::span<const double> reward_values) {
  if (w.size() != reward_values.size()) {
    throw std::invalid_argument("backbone_reward: " + std::to_string(w.size()) + " weights for " +
                                std::to_string(reward_values.size()) + " rewards");
  }
  double h = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) h += w[i] * reward_values[i];
  return h;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) {
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - top);
  const double log_norm = top + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

TabularPolicy::TabularPolicy(std::size_t prompt_count, std::size_t vocab_size)
    : prompts_(prompt_count), vocab_(vocab_size), table_(prompt_count * (vocab_size + 1) * vocab_size, 0.0) {
  if (prompts_ == 0 || vocab_ == 0) throw std::invalid_argument("TabularPolicy: empty shape");
}

TabularPolicy TabularPolicy::from_params(const ParamVector& params) {
  const auto& shape = params.shape();
  if (shape.kind != kKind || shape.dims.size() != 3 || shape.dims[1] != shape.dims[2] + 1) {
    throw std::invalid_argument("TabularPolicy: cannot restore from " + shape.to_string());
  }
  TabularPolicy p(shape.dims[0], shape.dims[2]);
  std::copy(params.values().begin(), params.values().end(), p.table_.begin());
  return p;
}

ParamVector TabularPolicy::to_params() const {
  return ParamVector(ShapeTag{kKind, {prompts_, vocab_ + 1, vocab_}}, table_);
}

std::size_t TabularPolicy::row_index(const Context& ctx) const {
  if (ctx.prompt >= prompts_) throw std::out_of_range("TabularPolicy: prompt out of range");
  if (ctx.previous < kStartToken || (ctx.previous >= 0 && static_cast<std::size_t>(ctx.previous) >= vocab_)) {
    throw std::out_of_range("TabularPolicy: previous token out of range");
  }
  const std::size_t prev = ctx.previous == kStartToken ? vocab_ : static_cast<std::size_t>(ctx.previous);
  return ctx.prompt * (vocab_ + 1) + prev;
}

std::span<const double> TabularPolicy::logits(const Context& ctx) const {
  return std::span<const double>(table_).subspan(row_index(ctx) * vocab_, vocab_);
}

std::span<double> TabularPolicy::logits(const Context& ctx) {
  return std::span<double>(table_).subspan(row_index(ctx) * vocab_, vocab_);
}

double TabularPolicy::max_abs_logit() const {
  double m = 0.0;
  for (double z : table_) m = std::max(m, std::abs(z));
  return m;
}

bool TabularPolicy::compatible_with(const ToyTask& task) const {
  return prompts_ == task.prompt_count() && vocab_ == task.vocab_size();
}

std::vector<Context> all_contexts(std::size_t prompt_count, std::size_t vocab_size) {
  std::vector<Context> out;
  out.reserve(prompt_count * (vocab_size + 1));
  for (std::size_t p = 0; p < prompt_count; ++p) {
    for (std::size_t t = 0; t < vocab_size; ++t) out.push_back({p, static_cast<Token>(t)});
    out.push_back({p, kStartToken});
  }
  return out;
}

namespace {

Token draw(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return static_cast<Token>(i);
  }
  // u landed in the rounding gap above the last partial sum.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<Token>(i);
  }
  return 0;
}

void require_compatible(const TabularPolicy& policy, const ToyTask& task, const char* who) {
  if (!policy.compatible_with(task)) {
    throw std::invalid_argument(std::string(who) + ": policy shape does not match task " + task.name());
  }
}

double row_kl(std::span<const double> p_logits, std::span<const double> q_logits) {
  const auto lp = log_softmax(p_logits);
  const auto lq = log_softmax(q_logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return kl;
}

}  // namespace

Sequence sample_sequence(const TabularPolicy& policy, const ToyTask& task, std::size_t prompt, Rng& rng) {
  require_compatible(policy, task, "sample_sequence");
  if (prompt >= task.prompt_count()) throw std::invalid_argument("sample_sequence: unknown prompt");
  Sequence seq;
  seq.reserve(task.horizon());
  Context ctx{prompt, kStartToken};
  for (std::size_t t = 0; t < task.horizon(); ++t) {
    const Token next = draw(policy.probabilities(ctx), rng);
    seq.push_back(next);
    ctx.previous = next;
  }
  return seq;
}

double max_row_kl(const TabularPolicy& p, const TabularPolicy& q) {
  if (p.prompt_count() != q.prompt_count() || p.vocab_size() != q.vocab_size()) {
    throw std::invalid_argument("max_row_kl: policy shapes differ");
  }
  double worst = 0.0;
  for (const auto& ctx : all_contexts(p.prompt_count(), p.vocab_size())) {
    worst = std::max(worst, row_kl(p.logits(ctx), q.logits(ctx)));
  }
  return worst;
}

std::vector<double> expected_rewards(const TabularPolicy& policy, const ToyTask& task,
                                     std::size_t samples_per_prompt, std::uint64_t seed) {
  require_compatible(policy, task, "expected_rewards");
  const std::size_t v = task.vocab_size();
  std::vector<double> out(task.objective_count(), 0.0);
  Rng rng(seed);
  for (std::size_t p = 0; p < task.prompt_count(); ++p) {
    // Exact token marginals per step.
    std::vector<std::vector<double>> marginals;
    std::vector<double> current = policy.probabilities({p, kStartToken});
    marginals.push_back(current);
    for (std::size_t t = 1; t < task.horizon(); ++t) {
      std::vector<double> next(v, 0.0);
      for (std::size_t prev = 0; prev < v; ++prev) {
        if (current[prev] == 0.0) continue;
        const auto row = policy.probabilities({p, static_cast<Token>(prev)});
        for (std::size_t y = 0; y < v; ++y) next[y] += current[prev] * row[y];
      }
      current = std::move(next);
      marginals.push_back(current);
    }
    bool needs_sampling = false;
    for (std::size_t k = 0; k < task.objective_count(); ++k) {
      const Objective& o = task.objectives()[k];
      if (o.kind != ObjectiveKind::class_fraction) {
        needs_sampling = true;
        continue;
      }
      double hits = 0.0;
      for (const auto& m : marginals) {
        for (std::size_t y = 0; y < v; ++y) {
          if (task.in_class(static_cast<Token>(y), o.token_class)) hits += m[y];
        }
      }
      out[k] += hits / static_cast<double>(task.horizon());
    }
    if (!needs_sampling) continue;
    std::vector<double> sums(task.objective_count(), 0.0);
    for (std::size_t s = 0; s < samples_per_prompt; ++s) {
      const auto seq = sample_sequence(policy, task, p, rng);
      for (std::size_t k = 0; k < task.objective_count(); ++k) {
        if (task.objectives()[k].kind != ObjectiveKind::class_fraction) sums[k] += terminal_reward(task, k, p, seq);
      }
    }
    for (std::size_t k = 0; k < task.objective_count(); ++k) {
      if (task.objectives()[k].kind != ObjectiveKind::class_fraction) {
        out[k] += sums[k] / static_cast<double>(samples_per_prompt);
      }
    }
  }
  for (double& r : out) r /= static_cast<double>(task.prompt_count());
  return out;
}

std::vector<Demo> make_balanced_demos(const ToyTask& task, std::size_t per_prompt, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Demo> demos;
  demos.reserve(per_prompt * task.prompt_count());
  for (std::size_t p = 0; p < task.prompt_count(); ++p) {
    std::size_t accepted = 0;
    while (accepted < per_prompt) {
      Sequence seq(task.horizon());
      std::size_t a_count = 0;
      for (auto& t : seq) {
        t = static_cast<Token>(rng.below(task.vocab_size()));
        a_count += task.in_class(t, 0) ? 1 : 0;
      }
      const double frac = static_cast<double>(a_count) / static_cast<double>(task.horizon());
      if (frac < 0.4 || frac > 0.6) continue;
      demos.push_back({p, std::move(seq)});
      ++accepted;
    }
  }
  return demos;
}

SftFit train_sft(const ToyTask& task, std::span<const Demo> demos, const SftConfig& config) {
  if (demos.empty()) throw std::invalid_argument("train_sft: empty demo set");
  const std::size_t v = task.vocab_size();
  TabularPolicy policy = TabularPolicy::uniform(task);

  // Empirical next-token counts per row; the objective decouples across rows.
  std::vector<double> counts(policy.table().size(), 0.0);
  std::vector<double> row_totals(policy.context_count(), 0.0);
  double total_tokens = 0.0;
  for (const auto& d : demos) {
    if (d.tokens.size() != task.horizon() || d.prompt >= task.prompt_count()) {
      throw std::invalid_argument("train_sft: demo does not fit the task");
    }
    Context ctx{d.prompt, kStartToken};
    for (Token t : d.tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= v) throw std::invalid_argument("train_sft: token out of range");
      const std::size_t row = policy.row_index(ctx);
      counts[row * v + static_cast<std::size_t>(t)] += 1.0;
      row_totals[row] += 1.0;
      total_tokens += 1.0;
      ctx.previous = t;
    }
  }

  auto nll = [&]() {
    double s = 0.0;
    for (std::size_t row = 0; row < row_totals.size(); ++row) {
      if (row_totals[row] == 0.0) continue;
      const auto lp = log_softmax(std::span<const double>(policy.table()).subspan(row * v, v));
      for (std::size_t y = 0; y < v; ++y) s -= counts[row * v + y] * lp[y];
    }
    return s / total_tokens;
  };

  SftFit fit{policy, {}};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    fit.epoch_nll.push_back(nll());
    for (std::size_t row = 0; row < row_totals.size(); ++row) {
      if (row_totals[row] == 0.0) continue;
      auto z = policy.table().subspan(row * v, v);
      const auto p = softmax(z);
      for (std::size_t y = 0; y < v; ++y) {
        const double target = counts[row * v + y] / row_totals[row];
        z[y] -= config.learning_rate * (p[y] - target);
      }
    }
  }
  fit.epoch_nll.push_back(nll());
  fit.policy = std::move(policy);
  return fit;
}

PolicyFit train_policy(const TabularPolicy& reference, const ToyTask& task, std::span<const double> w,
                       const TrainingConfig& config) {
  require_compatible(reference, task, "train_policy");
  if (w.size() != task.objective_count()) {
    throw std::invalid_argument("train_policy: combination weight has " + std::to_string(w.size()) +
                                " entries, task has " + std::to_string(task.objective_count()) + " objectives");
  }
  if (!(config.kl_coefficient >= 0.0)) throw std::invalid_argument("train_policy: eta must be >= 0");
  if (config.batch_size == 0) throw std::invalid_argument("train_policy: batch_size must be > 0");

  const std::size_t v = task.vocab_size();
  const std::size_t horizon = task.horizon();
  const double eta = config.kl_coefficient;
  // damped step, same stationary point
  const double step = config.learning_rate / (1.0 + config.learning_rate * eta);

  TabularPolicy policy = reference;
  Rng rng(config.seed);
  PolicyFit fit{policy, {}};
  fit.curve.reserve(config.episodes);
  std::vector<double> grad(policy.table().size(), 0.0);
  std::vector<std::size_t> rows(horizon);
  std::vector<double> log_ratio(horizon);
  std::vector<std::vector<double>> step_probs(horizon);
  double baseline = 0.0;
  bool baseline_ready = false;
  std::size_t prompt_cursor = 0;

  for (std::size_t episode = 0; episode < config.episodes; ++episode) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_reward = 0.0;
    double batch_kl = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t prompt = prompt_cursor;
      prompt_cursor = (prompt_cursor + 1) % task.prompt_count();

      Sequence seq;
      seq.reserve(horizon);
      Context ctx{prompt, kStartToken};
      for (std::size_t t = 0; t < horizon; ++t) {
        rows[t] = policy.row_index(ctx);
        const auto lp = policy.log_probabilities(ctx);
        const auto lq = reference.log_probabilities(ctx);
        step_probs[t] = softmax(policy.logits(ctx));
        const Token y = draw(step_probs[t], rng);
        log_ratio[t] = lp[static_cast<std::size_t>(y)] - lq[static_cast<std::size_t>(y)];
        seq.push_back(y);
        ctx.previous = y;
      }
      const double h = backbone_reward(w, terminal_rewards(task, prompt, seq));
      batch_reward += h;

      const double centred = config.baseline && baseline_ready ? h - baseline : h;
      double kl_to_go = 0.0;
      for (std::size_t t = horizon; t-- > 0;) {
        kl_to_go += log_ratio[t];
        const double advantage = centred - eta * kl_to_go;
        double* g = &grad[rows[t] * v];
        for (std::size_t y = 0; y < v; ++y) g[y] -= advantage * step_probs[t][y];
        g[static_cast<std::size_t>(seq[t])] += advantage;
      }
      batch_kl += kl_to_go;
    }

    const double scale = step / static_cast<double>(config.batch_size);
    auto table = policy.table();
    for (std::size_t i = 0; i < table.size(); ++i) table[i] += scale * grad[i];
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (!(std::abs(table[i]) <= kMaxLogit)) {
        std::ostringstream msg;
        msg << "train_policy: logit " << table[i] << " at row " << i / v << ", token " << i % v
            << " exceeded " << kMaxLogit << " after episode " << episode
            << " (lower the learning rate or raise eta)";
        throw DivergenceError(msg.str());
      }
    }

    const double mean_reward = batch_reward / static_cast<double>(config.batch_size);
    fit.curve.push_back({mean_reward, batch_kl / static_cast<double>(config.batch_size)});
    baseline = baseline_ready ? 0.9 * baseline + 0.1 * mean_reward : mean_reward;
    baseline_ready = true;
  }
  fit.policy = std::move(policy);
  return fit;
}

}  // namespace mage
