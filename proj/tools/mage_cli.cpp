#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mage/checkpoint.hpp"
#include "mage/decode.hpp"
#include "mage/experiment.hpp"
#include "mage/quad_oracle.hpp"

namespace fs = std::filesystem;
using namespace mage;

namespace {

struct Overrides {
  std::string config_path;
  std::string task;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> gamma;
  std::vector<std::int64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "key=value experiment config");
  cmd->add_option("--task", o.task, "task name (ab-conflict)");
  cmd->add_option("--beta", o.beta, "beta value(s)")->delimiter(',');
  cmd->add_option("--alpha", o.alpha, "extrapolation value(s)")->delimiter(',');
  cmd->add_option("--gamma", o.gamma, "guidance strength value(s)")->delimiter(',');
  cmd->add_option("--seed", o.seed, "seed(s)")->delimiter(',');
  cmd->add_option("--out", o.out, "output directory or file");
}

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (!o.task.empty()) c.task = o.task;
  if (!o.beta.empty()) c.beta_candidates = o.beta;
  if (!o.alpha.empty()) c.alpha_candidates = o.alpha;
  if (!o.gamma.empty()) c.gamma_candidates = o.gamma;
  if (!o.seed.empty()) c.seeds = o.seed;
  c.validate();
  return c;
}

int run_oracle(const Overrides& o, double k1, double k2, double step) {
  std::ostringstream out;
  const auto ex = worked_example_rewards();
  const Preference half({0.5, 0.5});
  const auto b = WeightMatrix::from_columns({{0.4, 0.6}, {0.6, 0.4}});
  const auto bone = bone_solution(ex, b, half);
  auto point = [](const ParamVector& p) {
    std::ostringstream s;
    s.precision(9);
    s << "(" << p[0] << ", " << p[1] << ")";
    return s.str();
  };
  out << "worked example\n";
  out << "  optimum=" << point(exact_optimum(ex, half.weights())) << " soup=" << point(soup_solution(ex, half))
      << "\n  backbones=" << point(bone.backbones[0]) << " " << point(bone.backbones[1])
      << " merged=" << point(bone.merged) << "\n";

  std::vector<double> betas = o.beta;
  if (betas.empty()) {
    for (int i = 0; i < 9; ++i) betas.push_back(0.55 + 0.05 * i);
  }
  std::vector<std::pair<double, double>> curvatures;
  if (k1 > 0.0 && k2 > 0.0) {
    curvatures.emplace_back(k1, k2);
  } else {
    curvatures = {{1, 2}, {1, 4}, {3, 5}};
  }
  bool ok = true;
  for (double beta : betas) {
    for (const auto& [a, c] : curvatures) {
      const auto report = verify_theorem(a, c, beta, step);
      ok = ok && report.passed;
      out << format_oracle_report(report);
    }
  }
  out << (ok ? "oracle: all checks passed\n" : "oracle: FAILED\n");
  if (o.out.empty()) {
    std::cout << out.str();
  } else {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    std::ofstream(o.out) << out.str();
    std::cout << (ok ? "oracle: all checks passed" : "oracle: FAILED") << " (report in " << o.out << ")\n";
  }
  return ok ? 0 : 1;
}

int run_train(const Overrides& o, const std::string& what) {
  ExperimentConfig c = resolve_config(o);
  if (!o.out.empty()) c.checkpoint_dir = o.out;
  if (c.checkpoint_dir.empty()) throw std::invalid_argument("train: give --out or checkpoint_dir in the config");
  c.train_missing = true;
  for (const auto seed : c.seeds) {
    ArtifactStore store(c, seed);
    if (what == "sft") {
      store.sft();
    } else if (what == "backbones") {
      for (std::size_t k = 0; k < c.objective_count; ++k) store.expert(k);
      for (double beta : c.beta_candidates) store.backbones(build_weight_matrix(c.objective_count, beta));
    } else if (what == "values") {
      store.explicit_values();
    } else {
      throw std::invalid_argument("train: expected sft, backbones or values, got '" + what + "'");
    }
    std::cout << "trained " << what << " for seed " << seed << " into "
              << (fs::path(c.checkpoint_dir) / ("seed" + std::to_string(seed))).string() << "\n";
  }
  return 0;
}

int run_merge(const Overrides& o, const std::vector<std::string>& models, const std::vector<double>& mu,
              const std::string& sft_path) {
  if (o.out.empty()) throw std::invalid_argument("merge: --out is required");
  std::vector<Checkpoint> loaded;
  std::vector<ParamVector> params;
  for (const auto& m : models) {
    loaded.push_back(load_checkpoint(m));
    params.push_back(loaded.back().params);
  }
  const Preference pref(mu);
  ValueMergeStrategy strategy = ValueMergeStrategy::linear();
  if (!o.beta.empty()) {
    strategy = ValueMergeStrategy::bone(build_weight_matrix(models.size(), o.beta[0]));
    if (!o.alpha.empty() && o.alpha[0] != 0.0) {
      if (sft_path.empty()) throw std::invalid_argument("merge: extrapolation needs --sft");
      strategy.alpha = o.alpha[0];
      strategy.reference = load_checkpoint(sft_path).params;
    }
  }
  const ParamVector merged = merge_value_models(params, pref, strategy);
  save_checkpoint(Checkpoint{merged, loaded.front().provenance}, o.out);
  std::cout << "wrote " << merged.shape().to_string() << " to " << o.out << "\n";
  return 0;
}

int run_decode(const Overrides& o, const std::string& model_path, const std::vector<std::string>& values,
               const std::vector<std::string>& implicit, const std::string& sft_path, std::vector<double> mu,
               const std::vector<std::size_t>& beam) {
  ExperimentConfig c = resolve_config(o);
  const ToyTask task = c.make_task();
  const TabularPolicy policy = TabularPolicy::from_params(load_checkpoint(model_path, TabularPolicy::kKind).params);
  if (!policy.compatible_with(task)) throw std::invalid_argument("decode: model does not match the task");
  const std::size_t members = values.size() + implicit.size();
  if (members > 0 && mu.empty()) mu.assign(members, 1.0 / static_cast<double>(members));
  if (members > 0 && mu.size() != members) throw std::invalid_argument("decode: --mu needs one weight per guide");
  if (!values.empty() && !implicit.empty()) throw std::invalid_argument("decode: mix of explicit and implicit guides");

  Guidance guidance = Guidance::none();
  if (!values.empty()) {
    std::vector<ExplicitValueModel> ms;
    for (const auto& v : values) {
      ms.push_back(ExplicitValueModel::from_params(load_checkpoint(v, ExplicitValueModel::kKind).params));
    }
    guidance = Guidance::ensemble(std::move(ms), mu);
  } else if (!implicit.empty()) {
    if (sft_path.empty()) throw std::invalid_argument("decode: implicit guidance needs --sft");
    const auto ref = TabularPolicy::from_params(load_checkpoint(sft_path, TabularPolicy::kKind).params);
    std::vector<ImplicitValueModel> ms;
    for (const auto& v : implicit) {
      ms.emplace_back(TabularPolicy::from_params(load_checkpoint(v, TabularPolicy::kKind).params), ref);
    }
    guidance = Guidance::ensemble(std::move(ms), mu);
  }
  const double gamma = o.gamma.empty() ? 0.0 : o.gamma[0];
  std::optional<BeamConfig> bc;
  if (!beam.empty()) {
    if (beam.size() != 3) throw std::invalid_argument("decode: --beam expects b,c,l");
    bc = BeamConfig{beam[0], beam[1], beam[2]};
  }
  std::vector<double> sum(task.objective_count(), 0.0);
  for (std::size_t p = 0; p < task.prompt_count(); ++p) {
    const Sequence seq = bc ? beam_guided_decode(policy, guidance, task, p, gamma, *bc)
                            : guided_decode(policy, guidance, task, p, gamma);
    const auto r = terminal_rewards(task, p, seq);
    std::cout << "prompt " << p << ":";
    for (Token t : seq) std::cout << " " << t;
    std::cout << " |";
    for (std::size_t k = 0; k < r.size(); ++k) {
      std::cout << " r" << k + 1 << "=" << r[k];
      sum[k] += r[k];
    }
    std::cout << "\n";
  }
  std::cout << "mean:";
  for (double s : sum) std::cout << " " << s / static_cast<double>(task.prompt_count());
  std::cout << "\n";
  return 0;
}

int run_sweep_cmd(const Overrides& o) {
  const ExperimentConfig c = resolve_config(o);
  const fs::path out = o.out.empty() ? fs::path("sweep_out") : fs::path(o.out);
  const SweepResult result = run_sweep(c);
  write_sweep_outputs(result, out);
  std::cout << "wrote " << (out / "front.csv").string() << " and " << (out / "report.txt").string() << "\n";
  return 0;
}

int run_report(const Overrides& o, const std::string& front) {
  const auto fronts = read_front_csv(front);
  const std::string text = format_report(fronts, ReportContext{});
  if (o.out.empty()) {
    std::cout << text;
  } else {
    emit_report(fronts, ReportContext{}, o.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bone Soup merging, value-model merging and guided decoding on a toy task"};
  app.require_subcommand(1);

  Overrides oracle_o, train_o, merge_o, decode_o, sweep_o, report_o;

  auto* oracle = app.add_subcommand("oracle", "check the quadratic-reward oracle");
  add_common(oracle, oracle_o);
  double k1 = 0.0, k2 = 0.0, step = 0.005;
  oracle->add_option("--k1", k1, "curvature of reward 1");
  oracle->add_option("--k2", k2, "curvature of reward 2");
  oracle->add_option("--step", step, "mu grid step");

  auto* train = app.add_subcommand("train", "train sft | backbones | values into checkpoints");
  add_common(train, train_o);
  std::string what;
  train->add_option("what", what, "sft, backbones or values")->required();

  auto* merge = app.add_subcommand("merge", "merge checkpoints for a preference");
  add_common(merge, merge_o);
  std::vector<std::string> merge_models;
  std::vector<double> merge_mu;
  std::string merge_sft;
  merge->add_option("--model", merge_models, "checkpoint (repeat per objective)")->required();
  merge->add_option("--mu", merge_mu, "preference weights")->delimiter(',')->required();
  merge->add_option("--sft", merge_sft, "reference checkpoint for extrapolation");

  auto* decode = app.add_subcommand("decode", "greedy or guided decoding of every prompt");
  add_common(decode, decode_o);
  std::string decode_model, decode_sft;
  std::vector<std::string> decode_values, decode_implicit;
  std::vector<double> decode_mu;
  std::vector<std::size_t> decode_beam;
  decode->add_option("--model", decode_model, "policy checkpoint")->required();
  decode->add_option("--value", decode_values, "explicit value checkpoint (repeatable)");
  decode->add_option("--implicit", decode_implicit, "tuned policy checkpoint for implicit guidance (repeatable)");
  decode->add_option("--sft", decode_sft, "reference policy checkpoint for implicit guidance");
  decode->add_option("--mu", decode_mu, "ensemble weights over guides")->delimiter(',');
  decode->add_option("--beam", decode_beam, "beam width, expansion, interval")->delimiter(',');

  auto* sweep = app.add_subcommand("sweep", "run every method over the preference grid");
  add_common(sweep, sweep_o);

  auto* report = app.add_subcommand("report", "metric table from a front csv");
  add_common(report, report_o);
  std::string report_front;
  report->add_option("--front", report_front, "front csv")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (oracle->parsed()) return run_oracle(oracle_o, k1, k2, step);
    if (train->parsed()) return run_train(train_o, what);
    if (merge->parsed()) return run_merge(merge_o, merge_models, merge_mu, merge_sft);
    if (decode->parsed()) {
      return run_decode(decode_o, decode_model, decode_values, decode_implicit, decode_sft, decode_mu, decode_beam);
    }
    if (sweep->parsed()) return run_sweep_cmd(sweep_o);
    if (report->parsed()) return run_report(report_o, report_front);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
