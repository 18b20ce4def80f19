#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mage/checkpoint.hpp"
#include "mage/decode.hpp"
#include "mage/merge.hpp"
#include "mage/metrics.hpp"
#include "mage/toy_world.hpp"
#include "mage/value_models.hpp"

namespace mage {

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> names{"rewarded_soup", "bone_soup", "mage_e",        "mage_e_m",
                                              "mage_i",        "mage_i_m",  "logit_ensemble"};
  return names;
}

struct ExperimentConfig {
  std::string task = "ab-conflict";
  std::size_t objective_count = 2;
  std::size_t prompt_count = 80;
  std::size_t validation_prompts = 16;  // the first prompts; the rest are test prompts
  std::size_t demos_per_prompt = 256;
  std::size_t sft_epochs = 300;
  double sft_learning_rate = 1.0;

  std::vector<double> beta_candidates{0.8, 0.7, 0.6};
  double beta_search_fraction = 0.2;
  std::vector<double> alpha_candidates{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  double eta = 0.05;
  double learning_rate = 2.0;
  std::size_t episodes = 1500;
  std::size_t batch_size = 64;

  std::vector<double> gamma_candidates{0.1, 0.2, 1.0, 3.0, 5.0};
  std::size_t value_trajectories = 9600;
  double value_learning_rate_floor = 0.002;

  std::vector<std::int64_t> seeds{0};
  std::vector<std::vector<double>> preference_grid;  // empty: default grid for objective_count
  std::vector<std::string> methods = all_methods();

  bool train_missing = true;
  std::string checkpoint_dir;  // empty: keep everything in memory

  ToyTask make_task() const;
  std::vector<std::vector<double>> grid() const;
  void validate() const;
};

// 11 points (i/10, 1 - i/10) for two objectives; the step-0.2 simplex lattice for three.
std::vector<std::vector<double>> default_preference_grid(std::size_t objective_count);

// Flat "key=value" lines; lists are comma separated, grid points separated by ';'.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);
// FNV-1a 64 over the fields that affect results (not checkpoint_dir / train_missing), as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

// Seed for a trained artifact. Independent of beta: a backbone trained on the
// basis weight e_i is the rewarded-soup expert i.
std::uint64_t derive_seed(std::int64_t seed, const std::string& artifact, std::size_t index);

// Trained models for one seed, loaded from or saved to checkpoint_dir when set.
class ArtifactStore {
 public:
  ArtifactStore(const ExperimentConfig& config, std::int64_t seed);

  const ExperimentConfig& config() const { return config_; }
  const ToyTask& task() const { return task_; }
  std::int64_t seed() const { return seed_; }

  const TabularPolicy& sft();
  // Policy trained on combination weight w for `episodes` updates.
  const TabularPolicy& policy(const std::vector<double>& w, std::size_t index, std::size_t episodes);
  const TabularPolicy& expert(std::size_t objective);
  std::vector<TabularPolicy> backbones(const WeightMatrix& b);
  std::vector<TabularPolicy> short_run_backbones(const WeightMatrix& b);
  const std::vector<ExplicitValueModel>& explicit_values();

 private:
  std::filesystem::path path_for(const std::string& name) const;
  std::optional<ParamVector> try_load(const std::string& name, const std::string& kind) const;
  void store(const std::string& name, const ParamVector& params) const;

  ExperimentConfig config_;
  ToyTask task_;
  std::int64_t seed_;
  std::string digest_;
  std::optional<TabularPolicy> sft_;
  std::map<std::string, TabularPolicy> policies_;
  std::optional<std::vector<ExplicitValueModel>> values_;
};

// Mean reward per objective of greedy decodes over prompts [first, last).
using Decoder = std::function<Sequence(std::size_t prompt)>;
std::vector<double> mean_rewards(const ToyTask& task, std::size_t first, std::size_t last, const Decoder& decode);

// Everything a method needs to decode for a preference.
struct MethodInputs {
  const ToyTask* task = nullptr;
  const TabularPolicy* sft = nullptr;
  std::vector<TabularPolicy> experts;
  std::vector<TabularPolicy> backbones;
  std::optional<WeightMatrix> b;
  std::vector<ExplicitValueModel> values;
  double alpha = 0.0;
};

// Bone-soup model for mu: merge with lambda = B^-1 mu, then extrapolate by alpha.
TabularPolicy bone_policy(const MethodInputs& in, const Preference& mu);
Decoder make_decoder(const std::string& method, const MethodInputs& in, const Preference& mu, double gamma);

struct SeedSelection {
  std::int64_t seed = 0;
  double beta = 0.0;
  std::map<double, double> beta_scores;  // short-run validation hypervolume per candidate
  double alpha = 0.0;
  std::map<std::string, double> gamma;  // per guided method
};

struct SweepResult {
  std::vector<FrontSet> fronts;  // one per (method, seed), methods in config order
  std::vector<SeedSelection> selections;
  std::string config_digest;
  std::size_t test_prompts = 0;
};

// Runs every configured method over the preference grid for every seed.
SweepResult run_sweep(const ExperimentConfig& config);

// Header method,seed,mu_1..mu_n,r_1..r_n; rows sorted by (method, preference, seed); 9 significant digits.
std::string front_csv(const std::vector<FrontSet>& fronts);
void emit_front_csv(const std::vector<FrontSet>& fronts, const std::filesystem::path& path);
std::vector<FrontSet> parse_front_csv(const std::string& text);
std::vector<FrontSet> read_front_csv(const std::filesystem::path& path);

struct ReportContext {
  std::string config_digest;
  std::size_t test_prompts = 0;
  std::vector<SeedSelection> selections;
};

struct MetricRow {
  std::string method;
  int seed = 0;
  double hypervolume = 0.0;
  double inner_product = 0.0;
  double sparsity = 0.0;
  double spacing = 0.0;
  std::size_t front_length = 0;
  double controllability = 0.0;
};

// Metrics per (method, seed) front against one shared reference point.
std::vector<MetricRow> metric_rows(const std::vector<FrontSet>& fronts, std::vector<double>* reference = nullptr);
std::string format_report(const std::vector<FrontSet>& fronts, const ReportContext& context);
void emit_report(const std::vector<FrontSet>& fronts, const ReportContext& context,
                 const std::filesystem::path& path);

// Writes front.csv, then builds report.txt from the file just written.
void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& out_dir);

// Reward of guided decoding with a lambda-interpolated pair of value models.
struct LmcCurve {
  std::string kind;  // "explicit" or "implicit"
  double gamma = 0.0;
  std::vector<double> lambdas;
  std::vector<std::vector<double>> rewards;  // per lambda, per objective
};

// Base model is the SFT policy. Explicit: the two objective value tables.
// Implicit: the two single-objective experts against the SFT reference.
LmcCurve lmc_curve(ArtifactStore& store, const std::string& kind, double gamma, const std::vector<double>& lambdas);

}  // namespace mage
