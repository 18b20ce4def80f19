#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mage/param_vector.hpp"

namespace mage {

using Token = int;
using Sequence = std::vector<Token>;
inline constexpr Token kStartToken = -1;

// Decoding state: the prompt and the previously emitted token (or the start marker).
struct Context {
  std::size_t prompt = 0;
  Token previous = kStartToken;
};

enum class ObjectiveKind { class_fraction, diversity };

struct Objective {
  std::string name;
  ObjectiveKind kind = ObjectiveKind::class_fraction;
  unsigned token_class = 0;  // used by class_fraction
};

// Finite-vocabulary generation task with terminal rewards in [0, 1].
class ToyTask {
 public:
  ToyTask(std::string name, std::size_t vocab_size, std::size_t horizon, std::size_t prompt_count,
          std::vector<std::uint32_t> token_classes, std::vector<Objective> objectives);

  // "ab-conflict": V=8, T=8, tokens 0-3 are class A, 4-7 class B.
  // Objectives: A fraction, B fraction and, when objective_count == 3, diversity.
  static ToyTask ab_conflict(std::size_t objective_count = 2, std::size_t prompt_count = 16);

  const std::string& name() const { return name_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t prompt_count() const { return prompt_count_; }
  std::size_t objective_count() const { return objectives_.size(); }
  const std::vector<Objective>& objectives() const { return objectives_; }
  bool in_class(Token token, unsigned token_class) const;

 private:
  std::string name_;
  std::size_t vocab_size_;
  std::size_t horizon_;
  std::size_t prompt_count_;
  std::vector<std::uint32_t> token_classes_;  // bitmask of classes per token
  std::vector<Objective> objectives_;
};

double terminal_reward(const ToyTask& task, std::size_t objective, std::size_t prompt,
                       std::span<const Token> sequence);
std::vector<double> terminal_rewards(const ToyTask& task, std::size_t prompt, std::span<const Token> sequence);

// w·r, the combined reward a backbone model is trained on.
double backbone_reward(std::span<const double> w, std::span<const double> reward_values);

// Portable draws on top of mt19937_64 (whose output sequence is fixed by the standard).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1) with 53 random bits
  std::size_t below(std::size_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

// Logit table over (prompt, previous token or start) x next token.
class TabularPolicy {
 public:
  static constexpr const char* kKind = "policy";

  TabularPolicy(std::size_t prompt_count, std::size_t vocab_size);
  static TabularPolicy uniform(const ToyTask& task) { return {task.prompt_count(), task.vocab_size()}; }
  static TabularPolicy from_params(const ParamVector& params);
  ParamVector to_params() const;

  std::size_t prompt_count() const { return prompts_; }
  std::size_t vocab_size() const { return vocab_; }
  std::size_t context_count() const { return prompts_ * (vocab_ + 1); }
  std::size_t row_index(const Context& ctx) const;

  std::span<const double> logits(const Context& ctx) const;
  std::span<double> logits(const Context& ctx);
  std::span<const double> table() const { return table_; }
  std::span<double> table() { return table_; }

  std::vector<double> probabilities(const Context& ctx) const { return softmax(logits(ctx)); }
  std::vector<double> log_probabilities(const Context& ctx) const { return log_softmax(logits(ctx)); }
  double max_abs_logit() const;
  bool compatible_with(const ToyTask& task) const;

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  std::size_t prompts_;
  std::size_t vocab_;
  std::vector<double> table_;
};

// Every context, prompt-major, start marker last within a prompt.
std::vector<Context> all_contexts(std::size_t prompt_count, std::size_t vocab_size);

Sequence sample_sequence(const TabularPolicy& policy, const ToyTask& task, std::size_t prompt, Rng& rng);

// Largest KL(p || q) over all rows.
double max_row_kl(const TabularPolicy& p, const TabularPolicy& q);

// Mean reward per objective over all prompts: class fractions are computed
// exactly by propagating the token marginals, other objectives by sampling.
std::vector<double> expected_rewards(const TabularPolicy& policy, const ToyTask& task,
                                     std::size_t samples_per_prompt = 2000, std::uint64_t seed = 1);

struct Demo {
  std::size_t prompt = 0;
  Sequence tokens;
};

// Uniform random sequences whose class-A fraction lies in [0.4, 0.6].
std::vector<Demo> make_balanced_demos(const ToyTask& task, std::size_t per_prompt, std::uint64_t seed);

struct SftConfig {
  std::size_t epochs = 300;
  double learning_rate = 1.0;
};

struct SftFit {
  TabularPolicy policy;
  std::vector<double> epoch_nll;  // mean per-token NLL before each epoch's update, then final
};

// Maximum likelihood by full-batch gradient descent on each row's mean cross-entropy.
SftFit train_sft(const ToyTask& task, std::span<const Demo> demos, const SftConfig& config);

struct TrainingConfig {
  double kl_coefficient = 0.05;  // eta
  double learning_rate = 2.0;
  std::size_t episodes = 1500;  // gradient updates
  std::size_t batch_size = 64;  // sampled responses per update
  std::uint64_t seed = 0;
  bool baseline = true;
};

struct TrainingStep {
  double mean_reward = 0.0;  // mean combined reward w·r over the batch
  double mean_kl = 0.0;      // mean sampled sequence log-ratio against the reference
};

struct PolicyFit {
  TabularPolicy policy;
  std::vector<TrainingStep> curve;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxLogit = 50.0;

// REINFORCE on E[w·r - eta * log(pi/pi_sft)] starting from the reference policy.
PolicyFit train_policy(const TabularPolicy& reference, const ToyTask& task, std::span<const double> w,
                       const TrainingConfig& config);

}  // namespace mage
