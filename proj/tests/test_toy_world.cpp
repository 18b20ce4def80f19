#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mage/toy_world.hpp"

using namespace mage;

namespace {

// vocab {a0, a1, b0, b1}, horizon 3
ToyTask three_step_task() {
  return ToyTask("three-step", 4, 3, 1, {0b01, 0b01, 0b10, 0b10},
                 {{"class_a", ObjectiveKind::class_fraction, 0}, {"class_b", ObjectiveKind::class_fraction, 1}});
}

double sequence_probability(const TabularPolicy& policy, std::size_t prompt, const Sequence& seq) {
  double p = 1.0;
  Context ctx{prompt, kStartToken};
  for (Token t : seq) {
    p *= policy.probabilities(ctx)[static_cast<std::size_t>(t)];
    ctx.previous = t;
  }
  return p;
}

const TabularPolicy& shared_sft() {
  static const TabularPolicy sft = [] {
    const ToyTask task = ToyTask::ab_conflict(2, 4);
    const auto demos = make_balanced_demos(task, 256, 3);
    return train_sft(task, demos, SftConfig{}).policy;
  }();
  return sft;
}

}  // namespace

TEST_CASE("terminal reward") {
  const ToyTask task = three_step_task();
  const Sequence aab{0, 1, 2};
  CHECK(terminal_reward(task, 0, 0, aab) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(terminal_reward(task, 1, 0, aab) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Sequence all_a{1, 0, 1};
  CHECK(terminal_reward(task, 0, 0, all_a) == 1.0);
  CHECK(terminal_reward(task, 1, 0, all_a) == 0.0);

  CHECK_THROWS_AS(terminal_reward(task, 2, 0, aab), std::invalid_argument);
  const Sequence short_seq{0, 1};
  CHECK_THROWS_AS(terminal_reward(task, 0, 0, short_seq), std::invalid_argument);
  const Sequence bad_token{0, 1, 9};
  CHECK_THROWS_AS(terminal_reward(task, 0, 0, bad_token), std::invalid_argument);
}

TEST_CASE("diversity objective") {
  const ToyTask task = ToyTask::ab_conflict(3, 1);
  const Sequence distinct{0, 1, 2, 3, 4, 5, 6, 7};
  const Sequence repeat{3, 3, 3, 3, 3, 3, 3, 3};
  CHECK(terminal_reward(task, 2, 0, distinct) == 1.0);
  CHECK(terminal_reward(task, 2, 0, repeat) == 0.125);
}

TEST_CASE("terminal reward stays in [0, 1] on random sequences") {
  for (std::size_t objectives : {2u, 3u}) {
    const ToyTask task = ToyTask::ab_conflict(objectives, 3);
    Rng rng(5);
    for (int draw = 0; draw < 10000; ++draw) {
      Sequence seq(task.horizon());
      for (auto& t : seq) t = static_cast<Token>(rng.below(task.vocab_size()));
      const std::size_t prompt = static_cast<std::size_t>(draw) % task.prompt_count();
      const auto r = terminal_rewards(task, prompt, seq);
      for (double x : r) REQUIRE((x >= 0.0 && x <= 1.0));
      REQUIRE(r == terminal_rewards(task, prompt, seq));
      REQUIRE(r[0] + r[1] == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("backbone reward") {
  const std::vector<double> w{0.6, 0.4}, r{1.0, 0.0}, e1{1.0, 0.0}, r2{0.3, 0.9}, half{0.5, 0.5}, ones{1.0, 1.0};
  CHECK(backbone_reward(w, r) == 0.6);
  CHECK(backbone_reward(e1, r2) == 0.3);
  CHECK(backbone_reward(half, ones) == 1.0);
  const std::vector<double> three{1, 2, 3};
  CHECK_THROWS_AS(backbone_reward(w, three), std::invalid_argument);
}

TEST_CASE("task validation") {
  const std::vector<Objective> two{{"a", ObjectiveKind::class_fraction, 0}, {"b", ObjectiveKind::class_fraction, 1}};
  CHECK_THROWS_AS(ToyTask("t", 3, 3, 1, {1, 1, 2}, two), std::invalid_argument);
  CHECK_THROWS_AS(ToyTask("t", 4, 1, 1, {1, 1, 2, 2}, two), std::invalid_argument);
  CHECK_THROWS_AS(ToyTask("t", 4, 3, 0, {1, 1, 2, 2}, two), std::invalid_argument);
  CHECK_THROWS_AS(ToyTask("t", 4, 3, 1, {1, 1, 2, 2}, {two[0]}), std::invalid_argument);
  CHECK_THROWS_AS(ToyTask("t", 4, 3, 1, {1, 1, 2}, two), std::invalid_argument);
  CHECK_THROWS_AS(ToyTask::ab_conflict(4), std::invalid_argument);
}

TEST_CASE("policy flattens and restores bit-exactly") {
  const ToyTask task = ToyTask::ab_conflict(2, 3);
  TabularPolicy p = TabularPolicy::uniform(task);
  Rng rng(1);
  for (auto& z : p.table()) z = rng.uniform() * 6.0 - 3.0 + 1e-17;
  const auto params = p.to_params();
  CHECK(params.shape().kind == "policy");
  CHECK(params.shape().dims == std::vector<std::size_t>{3, 9, 8});
  CHECK(TabularPolicy::from_params(params) == p);
  CHECK_THROWS_AS(TabularPolicy::from_params(ParamVector(ShapeTag{"explicit_value", {3, 9, 8}},
                                                         std::vector<double>(216, 0.0))),
                  std::invalid_argument);

  for (const auto& ctx : all_contexts(3, 8)) {
    const auto probs = p.probabilities(ctx);
    CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(all_contexts(3, 8).size() == p.context_count());
  CHECK_THROWS_AS(p.logits(Context{3, kStartToken}), std::out_of_range);
  CHECK_THROWS_AS(p.logits(Context{0, 8}), std::out_of_range);
}

TEST_CASE("sampling: uniform rows give uniform token frequencies") {
  const ToyTask task = ToyTask::ab_conflict(2, 1);
  const TabularPolicy p = TabularPolicy::uniform(task);
  Rng rng(2024);
  std::vector<double> counts(8, 0.0);
  const std::size_t draws = 100000 / task.horizon();
  for (std::size_t i = 0; i < draws; ++i) {
    for (Token t : sample_sequence(p, task, 0, rng)) counts[static_cast<std::size_t>(t)] += 1.0;
  }
  const double n = static_cast<double>(draws * task.horizon());
  const double expected = n / 8.0;
  const double sigma = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
  for (double c : counts) CHECK(std::abs(c - expected) < 3.0 * sigma);
}

TEST_CASE("sampling: a saturated logit is always emitted") {
  const ToyTask task = ToyTask::ab_conflict(2, 1);
  TabularPolicy p = TabularPolicy::uniform(task);
  for (const auto& ctx : all_contexts(1, 8)) p.logits(ctx)[5] = 30.0;
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    for (Token t : sample_sequence(p, task, 0, rng)) REQUIRE(t == 5);
  }
}

TEST_CASE("sampling: same seed, same sequence") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  Rng a(42), b(42);
  for (int i = 0; i < 20; ++i) REQUIRE(sample_sequence(shared_sft(), task, 1, a) == sample_sequence(shared_sft(), task, 1, b));
}

TEST_CASE("golden sample, seed 42, uniform policy on the built-in task") {
  const ToyTask task = ToyTask::ab_conflict();
  Rng rng(42);
  const Sequence seq = sample_sequence(TabularPolicy::uniform(task), task, 0, rng);
  CHECK(seq == Sequence{6, 5, 6, 1, 7, 0, 4, 2});
}

TEST_CASE("balanced demos") {
  const ToyTask task = ToyTask::ab_conflict(2, 3);
  const auto demos = make_balanced_demos(task, 50, 1);
  CHECK(demos.size() == 150);
  for (const auto& d : demos) {
    const double a = terminal_reward(task, 0, d.prompt, d.tokens);
    REQUIRE((a >= 0.4 && a <= 0.6));
  }
}

TEST_CASE("sft on uniform demos stays near uniform") {
  const ToyTask task = ToyTask::ab_conflict(2, 2);
  std::vector<Demo> demos;
  Rng rng(77);
  for (std::size_t p = 0; p < 2; ++p) {
    for (int i = 0; i < 4000; ++i) {
      Sequence s(task.horizon());
      for (auto& t : s) t = static_cast<Token>(rng.below(8));
      demos.push_back({p, s});
    }
  }
  const auto fit = train_sft(task, demos, SftConfig{});
  CHECK(max_row_kl(fit.policy, TabularPolicy::uniform(task)) < 0.05);
  for (std::size_t i = 1; i < fit.epoch_nll.size(); ++i) REQUIRE(fit.epoch_nll[i] <= fit.epoch_nll[i - 1] + 1e-12);
}

TEST_CASE("sft on a single repeated demo") {
  const ToyTask task = ToyTask::ab_conflict(2, 1);
  const Sequence target{0, 5, 2, 7, 1, 4, 3, 6};
  const std::vector<Demo> demos(20, Demo{0, target});
  const auto fit = train_sft(task, demos, SftConfig{});
  CHECK(sequence_probability(fit.policy, 0, target) > 0.9);
  for (std::size_t i = 1; i < fit.epoch_nll.size(); ++i) REQUIRE(fit.epoch_nll[i] <= fit.epoch_nll[i - 1] + 1e-12);

  const auto again = train_sft(task, demos, SftConfig{});
  CHECK(again.policy == fit.policy);
  CHECK_THROWS_AS(train_sft(task, std::vector<Demo>{}, SftConfig{}), std::invalid_argument);
}

TEST_CASE("huge eta keeps the policy at the reference") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  TrainingConfig config;
  config.kl_coefficient = 1e3;
  config.episodes = 300;
  config.seed = 4;
  const std::vector<double> w{1.0, 0.0};
  const auto fit = train_policy(shared_sft(), task, w, config);
  CHECK(max_row_kl(fit.policy, shared_sft()) < 0.01);
}

TEST_CASE("training on one objective raises it") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  TrainingConfig config;
  config.episodes = 400;
  config.seed = 1;
  const std::vector<double> e1{1.0, 0.0};
  const auto fit = train_policy(shared_sft(), task, e1, config);
  const double before = expected_rewards(shared_sft(), task)[0];
  const double after = expected_rewards(fit.policy, task)[0];
  CHECK(after >= before + 0.1);
  CHECK(fit.curve.size() == 400);
  for (const auto& ctx : all_contexts(task.prompt_count(), task.vocab_size())) {
    const auto probs = fit.policy.probabilities(ctx);
    REQUIRE(std::accumulate(probs.begin(), probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("training on a mixed weight raises the combined reward") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  TrainingConfig config;
  config.episodes = 400;
  config.seed = 2;
  const std::vector<double> w{0.7, 0.3};
  const auto fit = train_policy(shared_sft(), task, w, config);
  CHECK(backbone_reward(w, expected_rewards(fit.policy, task)) > backbone_reward(w, expected_rewards(shared_sft(), task)));
}

TEST_CASE("without a KL penalty reward improves over training") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  TrainingConfig config;
  config.kl_coefficient = 0.0;
  config.learning_rate = 0.5;
  config.episodes = 400;
  config.seed = 3;
  const std::vector<double> e2{0.0, 1.0};
  const auto fit = train_policy(shared_sft(), task, e2, config);
  const std::size_t tenth = fit.curve.size() / 10;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < tenth; ++i) {
    first += fit.curve[i].mean_reward;
    last += fit.curve[fit.curve.size() - 1 - i].mean_reward;
  }
  CHECK(last >= first);
}

TEST_CASE("training is a function of its seed") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  TrainingConfig config;
  config.episodes = 50;
  config.seed = 8;
  const std::vector<double> w{0.6, 0.4};
  const auto a = train_policy(shared_sft(), task, w, config);
  const auto b = train_policy(shared_sft(), task, w, config);
  CHECK(a.policy == b.policy);
  config.seed = 9;
  CHECK_FALSE(train_policy(shared_sft(), task, w, config).policy == a.policy);
}

TEST_CASE("divergent training aborts") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  TrainingConfig config;
  config.kl_coefficient = 0.0;
  config.learning_rate = 1e4;
  config.episodes = 200;
  const std::vector<double> e1{1.0, 0.0};
  CHECK_THROWS_AS(train_policy(shared_sft(), task, e1, config), DivergenceError);
  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(train_policy(shared_sft(), task, bad, TrainingConfig{}), std::invalid_argument);
}

TEST_CASE("expected class rewards match Monte Carlo") {
  const ToyTask task = ToyTask::ab_conflict(2, 4);
  const auto exact = expected_rewards(shared_sft(), task);
  Rng rng(6);
  double a = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const std::size_t prompt = static_cast<std::size_t>(i) % task.prompt_count();
    a += terminal_reward(task, 0, prompt, sample_sequence(shared_sft(), task, prompt, rng));
  }
  CHECK(std::abs(a / n - exact[0]) < 0.01);
  CHECK(exact[0] + exact[1] == doctest::Approx(1.0));
}
