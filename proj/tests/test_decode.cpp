#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mage/decode.hpp"

using namespace mage;

namespace {

const ToyTask& builtin() {
  static const ToyTask task = ToyTask::ab_conflict(2, 4);
  return task;
}

const TabularPolicy& shared_sft() {
  static const TabularPolicy sft =
      train_sft(builtin(), make_balanced_demos(builtin(), 256, 3), SftConfig{}).policy;
  return sft;
}

const std::vector<ExplicitValueModel>& shared_values() {
  static const std::vector<ExplicitValueModel> values = [] {
    ValueTrainingConfig config;
    config.trajectories = 2000;
    config.seed = 11;
    std::vector<ExplicitValueModel> out;
    for (auto& fit : train_explicit_values(builtin(), shared_sft(), config)) out.push_back(fit.model);
    return out;
  }();
  return values;
}

TabularPolicy random_policy(const ToyTask& task, std::mt19937_64& gen, double scale = 2.0) {
  std::normal_distribution<double> normal(0.0, scale);
  TabularPolicy p = TabularPolicy::uniform(task);
  for (auto& z : p.table()) z = normal(gen);
  return p;
}

ExplicitValueModel random_values(const ToyTask& task, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> table(task.prompt_count() * (task.vocab_size() + 1) * task.vocab_size());
  for (auto& x : table) x = u(gen);
  return ExplicitValueModel::from_params(ParamVector(
      ShapeTag{ExplicitValueModel::kKind, {task.prompt_count(), task.vocab_size() + 1, task.vocab_size()}}, table));
}

// vocab 4, horizon 2, only token 1 is class A
ToyTask trap_task() {
  return ToyTask("trap", 4, 2, 1, {0b10, 0b01, 0b10, 0b10},
                 {{"class_a", ObjectiveKind::class_fraction, 0}, {"rest", ObjectiveKind::class_fraction, 1}});
}

TabularPolicy trap_policy(const ToyTask& task) {
  TabularPolicy p = TabularPolicy::uniform(task);
  auto start = p.logits({0, kStartToken});
  start[0] = std::log(0.6);
  start[1] = std::log(0.4);
  start[2] = -60.0;
  start[3] = -60.0;
  // row after 0 stays uniform
  auto after_one = p.logits({0, 1});
  after_one[0] = std::log(0.1 / 3.0);
  after_one[1] = std::log(0.9);
  after_one[2] = std::log(0.1 / 3.0);
  after_one[3] = std::log(0.1 / 3.0);
  return p;
}

double path_score(const TabularPolicy& policy, const Guidance& guidance, const ToyTask& task, std::size_t prompt,
                  const Sequence& seq, double gamma) {
  double s = 0.0;
  Context ctx{prompt, kStartToken};
  for (Token t : seq) {
    const auto lp = policy.log_probabilities(ctx);
    const auto g = guidance.scores(ctx, task.vocab_size());
    s += lp[static_cast<std::size_t>(t)] + gamma * g[static_cast<std::size_t>(t)];
    ctx.previous = t;
  }
  return s;
}

}  // namespace

TEST_CASE("guided next token") {
  const std::vector<double> probs{0.6, 0.4};
  const std::vector<double> zero{0.0, 0.0}, lift{0.0, 1.0}, flat{3.0, 3.0};
  CHECK(guided_next_token(probs, zero, 0.0) == 0);
  CHECK(guided_next_token(probs, lift, 0.0) == 0);
  CHECK(guided_next_token(probs, lift, std::log(2.0)) == 1);
  for (double gamma : {0.0, 0.5, 2.0, 10.0}) CHECK(guided_next_token(probs, flat, gamma) == 0);
  // ties go to the lowest index
  const std::vector<double> even{0.25, 0.25, 0.25, 0.25}, four_zero(4, 0.0);
  CHECK(guided_next_token(even, four_zero, 1.0) == 0);

  const std::vector<double> three{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(guided_next_token(probs, three, 1.0), std::invalid_argument);
  const std::vector<double> bad{0.0, NAN};
  CHECK_THROWS_AS(guided_next_token(probs, bad, 1.0), std::invalid_argument);
  const std::vector<double> inf{0.0, INFINITY};
  CHECK_THROWS_AS(guided_next_token(probs, inf, 1.0), std::invalid_argument);
}

TEST_CASE("no guidance or zero gamma is greedy decoding") {
  std::mt19937_64 gen(100);
  const ToyTask& task = builtin();
  for (int draw = 0; draw < 100; ++draw) {
    const TabularPolicy policy = random_policy(task, gen);
    const std::size_t prompt = static_cast<std::size_t>(draw) % task.prompt_count();
    const Sequence greedy = greedy_decode(policy, task, prompt);
    // independent greedy: per-step argmax of raw logits
    Sequence manual;
    Context ctx{prompt, kStartToken};
    for (std::size_t t = 0; t < task.horizon(); ++t) {
      const auto z = policy.logits(ctx);
      Token best = 0;
      for (std::size_t y = 1; y < z.size(); ++y) {
        if (z[y] > z[static_cast<std::size_t>(best)]) best = static_cast<Token>(y);
      }
      manual.push_back(best);
      ctx.previous = best;
    }
    REQUIRE(greedy == manual);
    const Guidance g = Guidance::from_explicit(random_values(task, gen));
    REQUIRE(guided_decode(policy, g, task, prompt, 0.0) == greedy);
    REQUIRE(guided_decode(policy, Guidance::none(), task, prompt, 7.5) == greedy);
  }
}

TEST_CASE("adding a constant to every score leaves guided decoding unchanged") {
  std::mt19937_64 gen(55);
  const ToyTask& task = builtin();
  for (int draw = 0; draw < 100; ++draw) {
    const TabularPolicy policy = random_policy(task, gen);
    const ExplicitValueModel values = random_values(task, gen);
    std::vector<double> shifted(values.table().begin(), values.table().end());
    for (auto& x : shifted) x += 0.375;
    const auto moved = ExplicitValueModel::from_params(ParamVector(values.to_params().shape(), shifted));
    const std::size_t prompt = static_cast<std::size_t>(draw) % task.prompt_count();
    REQUIRE(guided_decode(policy, Guidance::from_explicit(values), task, prompt, 2.0) ==
            guided_decode(policy, Guidance::from_explicit(moved), task, prompt, 2.0));
  }
}

TEST_CASE("beam with width, expansion and interval one is guided decoding") {
  std::mt19937_64 gen(77);
  const ToyTask& task = builtin();
  for (int draw = 0; draw < 100; ++draw) {
    const TabularPolicy policy = random_policy(task, gen);
    const Guidance g = Guidance::from_explicit(random_values(task, gen));
    const double gamma = 0.5 * static_cast<double>(draw % 7);
    const std::size_t prompt = static_cast<std::size_t>(draw) % task.prompt_count();
    REQUIRE(beam_guided_decode(policy, g, task, prompt, gamma, BeamConfig{1, 1, 1}) ==
            guided_decode(policy, g, task, prompt, gamma));
    // expansion alone cannot change a width-one beam's argmax path
    REQUIRE(beam_guided_decode(policy, g, task, prompt, gamma, BeamConfig{1, 1, 3}) ==
            guided_decode(policy, g, task, prompt, gamma));
  }
}

TEST_CASE("beam escapes a greedy trap") {
  const ToyTask task = trap_task();
  const TabularPolicy policy = trap_policy(task);
  const Sequence greedy = greedy_decode(policy, task, 0);
  CHECK(greedy == Sequence{0, 0});
  CHECK(terminal_reward(task, 0, 0, greedy) == 0.0);
  const Sequence beam = beam_guided_decode(policy, Guidance::none(), task, 0, 0.0, BeamConfig{2, 2, 1});
  CHECK(beam == Sequence{1, 1});
  CHECK(terminal_reward(task, 0, 0, beam) == 1.0);
}

TEST_CASE("a full-width beam finds the exhaustive optimum") {
  const ToyTask task("small", 4, 3, 2, {0b01, 0b01, 0b10, 0b10},
                     {{"a", ObjectiveKind::class_fraction, 0}, {"b", ObjectiveKind::class_fraction, 1}});
  std::mt19937_64 gen(3);
  for (int draw = 0; draw < 100; ++draw) {
    const TabularPolicy policy = random_policy(task, gen, 1.5);
    const Guidance g = Guidance::from_explicit(random_values(task, gen));
    const double gamma = 0.25 * static_cast<double>(draw % 9);
    const std::size_t prompt = static_cast<std::size_t>(draw) % 2;
    Sequence best;
    double best_score = -INFINITY;
    for (int code = 0; code < 64; ++code) {
      const Sequence seq{code / 16, (code / 4) % 4, code % 4};
      const double s = path_score(policy, g, task, prompt, seq, gamma);
      if (s > best_score) {
        best_score = s;
        best = seq;
      }
    }
    const Sequence beam = beam_guided_decode(policy, g, task, prompt, gamma, BeamConfig{64, 4, 1});
    REQUIRE(beam == best);
    // a narrow beam never scores above the optimum
    const Sequence narrow = beam_guided_decode(policy, g, task, prompt, gamma, BeamConfig{2, 2, 2});
    REQUIRE(path_score(policy, g, task, prompt, narrow, gamma) <= best_score + 1e-12);
  }
}

TEST_CASE("beam config validation") {
  const ToyTask& task = builtin();
  CHECK_THROWS_AS(beam_guided_decode(shared_sft(), Guidance::none(), task, 0, 1.0, BeamConfig{0, 1, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(beam_guided_decode(shared_sft(), Guidance::none(), task, 0, 1.0, BeamConfig{1, 0, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(beam_guided_decode(shared_sft(), Guidance::none(), task, 0, 1.0, BeamConfig{1, 1, 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(guided_decode(shared_sft(), Guidance::none(), task, 9, 1.0), std::invalid_argument);
}

TEST_CASE("logit ensemble") {
  const ToyTask task("one-step", 4, 2, 1, {1, 1, 2, 2},
                     {{"a", ObjectiveKind::class_fraction, 0}, {"b", ObjectiveKind::class_fraction, 1}});
  TabularPolicy p1 = TabularPolicy::uniform(task), p2 = TabularPolicy::uniform(task);
  auto r1 = p1.logits({0, kStartToken});
  auto r2 = p2.logits({0, kStartToken});
  r1[0] = std::log(0.6);
  r1[1] = std::log(0.4);
  r1[2] = r1[3] = -60.0;
  r2[0] = std::log(0.2);
  r2[1] = std::log(0.8);
  r2[2] = r2[3] = -60.0;
  const std::vector<TabularPolicy> both{p1, p2};
  const std::vector<double> half{0.5, 0.5};
  CHECK(logit_ensemble_decode(both, half, task, 0)[0] == 1);
  CHECK(greedy_decode(p1, task, 0)[0] == 0);

  std::mt19937_64 gen(12);
  for (int draw = 0; draw < 50; ++draw) {
    const TabularPolicy p = random_policy(builtin(), gen);
    const std::vector<TabularPolicy> single{p};
    const std::vector<double> unit{1.0};
    REQUIRE(logit_ensemble_decode(single, unit, builtin(), 0) == greedy_decode(p, builtin(), 0));
    const std::vector<TabularPolicy> twins{p, p};
    const std::vector<double> split{0.3, 0.7};
    REQUIRE(logit_ensemble_decode(twins, split, builtin(), 1) == greedy_decode(p, builtin(), 1));
  }
  CHECK_THROWS_AS(logit_ensemble_decode(both, std::vector<double>{1.0}, task, 0), std::invalid_argument);
}

TEST_CASE("ensemble guidance is the weighted sum of member scores") {
  std::mt19937_64 gen(4);
  const ToyTask& task = builtin();
  const ExplicitValueModel a = random_values(task, gen), b = random_values(task, gen);
  const Guidance g = Guidance::ensemble(std::vector<ExplicitValueModel>{a, b}, {0.25, 0.75});
  CHECK(g.member_count() == 2);
  CHECK(g.kind() == GuidanceKind::explicit_value);
  const Context ctx{2, 3};
  const auto s = g.scores(ctx, 8);
  for (std::size_t y = 0; y < 8; ++y) {
    CHECK(s[y] == doctest::Approx(0.25 * a.row(ctx)[y] + 0.75 * b.row(ctx)[y]).epsilon(1e-15));
  }
  CHECK(Guidance::none().scores(ctx, 8) == GuidanceScores(8, 0.0));
  CHECK_THROWS_AS(Guidance::ensemble(std::vector<ExplicitValueModel>{a}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("stronger objective guidance raises that objective") {
  const ToyTask& task = builtin();
  for (std::size_t k = 0; k < 2; ++k) {
    const Guidance g = Guidance::from_explicit(shared_values()[k]);
    double at_zero = 0.0, at_one = 0.0;
    for (std::size_t p = 0; p < task.prompt_count(); ++p) {
      at_zero += terminal_reward(task, k, p, guided_decode(shared_sft(), g, task, p, 0.0));
      at_one += terminal_reward(task, k, p, guided_decode(shared_sft(), g, task, p, 1.0));
    }
    CHECK(at_one >= at_zero);
  }
}

TEST_CASE("decoding is repeatable") {
  const ToyTask& task = builtin();
  const Guidance g = Guidance::from_explicit(shared_values()[0]);
  const Sequence a = beam_guided_decode(shared_sft(), g, task, 1, 1.0, BeamConfig{2, 2, 2});
  for (int i = 0; i < 5; ++i) CHECK(beam_guided_decode(shared_sft(), g, task, 1, 1.0, BeamConfig{2, 2, 2}) == a);
}

TEST_CASE("golden decodes from fixed-seed models") {
  const ToyTask& task = builtin();
  const Guidance g = Guidance::from_explicit(shared_values()[0]);
  CHECK(guided_decode(shared_sft(), g, task, 0, 1.0) == Sequence{3, 5, 3, 5, 3, 5, 3, 5});
  CHECK(beam_guided_decode(shared_sft(), g, task, 0, 1.0, BeamConfig{2, 2, 2}) == Sequence{3, 5, 3, 5, 3, 5, 3, 5});
}
