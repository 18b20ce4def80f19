#include "mage/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mage {
namespace {

std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects true or false, got '" + text + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_double(key, part));
  return out;
}

std::string join(const std::vector<double>& xs, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += fmt(xs[i]);
  }
  return out;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void lattice(std::size_t n, int steps, int remaining, std::vector<int>& cur, std::vector<std::vector<double>>& out) {
  if (cur.size() + 1 == n) {
    cur.push_back(remaining);
    std::vector<double> p;
    for (int c : cur) p.push_back(static_cast<double>(c) / steps);
    out.push_back(p);
    cur.pop_back();
    return;
  }
  for (int c = 0; c <= remaining; ++c) {
    cur.push_back(c);
    lattice(n, steps, remaining - c, cur, out);
    cur.pop_back();
  }
}

// Runs body(i) for i in [0, count) on a few threads; each call owns slot i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

bool is_guided(const std::string& method) { return method.rfind("mage_", 0) == 0; }

FrontSet sweep_front(const std::string& method, const MethodInputs& in, const std::vector<std::vector<double>>& grid,
                     double gamma, std::size_t first, std::size_t last, std::int64_t seed) {
  FrontSet front(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const Preference mu(grid[i]);
    const Decoder decode = make_decoder(method, in, mu, gamma);
    front[i] = FrontPoint{grid[i], mean_rewards(*in.task, first, last, decode), method, static_cast<int>(seed)};
  });
  return front;
}

// Index of the largest score; ties go to the earliest (smallest) candidate.
std::size_t best_by_hypervolume(const std::vector<FrontSet>& fronts, std::vector<double>* scores = nullptr) {
  const auto ref = reference_point(fronts);
  std::size_t best = 0;
  double best_hv = -1.0;
  for (std::size_t i = 0; i < fronts.size(); ++i) {
    const double hv = hypervolume(fronts[i], ref);
    if (scores) scores->push_back(hv);
    if (hv > best_hv) {
      best_hv = hv;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::vector<std::vector<double>> default_preference_grid(std::size_t objective_count) {
  if (objective_count == 2) {
    std::vector<std::vector<double>> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back({i / 10.0, 1.0 - i / 10.0});
    return grid;
  }
  if (objective_count < 2) throw std::invalid_argument("default_preference_grid: need >= 2 objectives");
  std::vector<std::vector<double>> grid;
  std::vector<int> cur;
  lattice(objective_count, 5, 5, cur, grid);
  return grid;
}

ToyTask ExperimentConfig::make_task() const {
  if (task != "ab-conflict") throw std::invalid_argument("config: unknown task '" + task + "'");
  return ToyTask::ab_conflict(objective_count, prompt_count);
}

std::vector<std::vector<double>> ExperimentConfig::grid() const {
  auto g = preference_grid.empty() ? default_preference_grid(objective_count) : preference_grid;
  std::sort(g.begin(), g.end());
  return g;
}

void ExperimentConfig::validate() const {
  make_task();
  if (validation_prompts == 0 || validation_prompts >= prompt_count) {
    throw std::invalid_argument("config: validation_prompts must leave at least one test prompt");
  }
  if (demos_per_prompt == 0) throw std::invalid_argument("config: demos_per_prompt must be > 0");
  if (beta_candidates.empty()) throw std::invalid_argument("config: beta_candidates is empty");
  if (alpha_candidates.empty()) throw std::invalid_argument("config: alpha_candidates is empty");
  if (gamma_candidates.empty()) throw std::invalid_argument("config: gamma_candidates is empty");
  if (seeds.empty()) throw std::invalid_argument("config: seeds is empty");
  if (methods.empty()) throw std::invalid_argument("config: methods is empty");
  for (double b : beta_candidates) build_weight_matrix(objective_count, b);
  for (double a : alpha_candidates) {
    if (!(a >= 0.0)) throw std::invalid_argument("config: alpha candidates must be >= 0");
  }
  for (double g : gamma_candidates) {
    if (!(g >= 0.0)) throw std::invalid_argument("config: gamma candidates must be >= 0");
  }
  if (!(eta >= 0.0)) throw std::invalid_argument("config: eta must be >= 0");
  if (!(beta_search_fraction > 0.0 && beta_search_fraction <= 1.0)) {
    throw std::invalid_argument("config: beta_search_fraction must lie in (0, 1]");
  }
  for (const auto& p : grid()) {
    if (p.size() != objective_count) {
      throw std::invalid_argument("config: preference point has " + std::to_string(p.size()) + " entries");
    }
    (void)Preference(p);
  }
  for (const auto& m : methods) {
    if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end()) {
      throw std::invalid_argument("config: unknown method '" + m + "'");
    }
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw std::invalid_argument("config: duplicate key '" + key + "'");
    if (key == "task") {
      c.task = value;
    } else if (key == "objective_count") {
      c.objective_count = parse_int<std::size_t>(key, value);
    } else if (key == "prompt_count") {
      c.prompt_count = parse_int<std::size_t>(key, value);
    } else if (key == "validation_prompts") {
      c.validation_prompts = parse_int<std::size_t>(key, value);
    } else if (key == "demos_per_prompt") {
      c.demos_per_prompt = parse_int<std::size_t>(key, value);
    } else if (key == "sft_epochs") {
      c.sft_epochs = parse_int<std::size_t>(key, value);
    } else if (key == "sft_learning_rate") {
      c.sft_learning_rate = parse_double(key, value);
    } else if (key == "beta_candidates") {
      c.beta_candidates = parse_doubles(key, value);
    } else if (key == "beta_search_fraction") {
      c.beta_search_fraction = parse_double(key, value);
    } else if (key == "alpha_candidates") {
      c.alpha_candidates = parse_doubles(key, value);
    } else if (key == "eta") {
      c.eta = parse_double(key, value);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_double(key, value);
    } else if (key == "episodes") {
      c.episodes = parse_int<std::size_t>(key, value);
    } else if (key == "batch_size") {
      c.batch_size = parse_int<std::size_t>(key, value);
    } else if (key == "gamma_candidates") {
      c.gamma_candidates = parse_doubles(key, value);
    } else if (key == "value_trajectories") {
      c.value_trajectories = parse_int<std::size_t>(key, value);
    } else if (key == "value_learning_rate_floor") {
      c.value_learning_rate_floor = parse_double(key, value);
    } else if (key == "seeds") {
      c.seeds.clear();
      for (const auto& s : split(value, ',')) c.seeds.push_back(parse_int<std::int64_t>(key, s));
    } else if (key == "preference_grid") {
      c.preference_grid.clear();
      if (value != "default") {
        for (const auto& point : split(value, ';')) c.preference_grid.push_back(parse_doubles(key, point));
      }
    } else if (key == "methods") {
      c.methods = split(value, ',');
    } else if (key == "train_missing") {
      c.train_missing = parse_bool(key, value);
    } else if (key == "checkpoint_dir") {
      c.checkpoint_dir = value;
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

std::string semantic_fields(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "task=" << c.task << "\n";
  out << "objective_count=" << c.objective_count << "\n";
  out << "prompt_count=" << c.prompt_count << "\n";
  out << "validation_prompts=" << c.validation_prompts << "\n";
  out << "demos_per_prompt=" << c.demos_per_prompt << "\n";
  out << "sft_epochs=" << c.sft_epochs << "\n";
  out << "sft_learning_rate=" << fmt(c.sft_learning_rate) << "\n";
  out << "beta_candidates=" << join(c.beta_candidates) << "\n";
  out << "beta_search_fraction=" << fmt(c.beta_search_fraction) << "\n";
  out << "alpha_candidates=" << join(c.alpha_candidates) << "\n";
  out << "eta=" << fmt(c.eta) << "\n";
  out << "learning_rate=" << fmt(c.learning_rate) << "\n";
  out << "episodes=" << c.episodes << "\n";
  out << "batch_size=" << c.batch_size << "\n";
  out << "gamma_candidates=" << join(c.gamma_candidates) << "\n";
  out << "value_trajectories=" << c.value_trajectories << "\n";
  out << "value_learning_rate_floor=" << fmt(c.value_learning_rate_floor) << "\n";
  out << "seeds=";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
  out << "\n";
  out << "preference_grid=";
  const auto g = c.grid();
  for (std::size_t i = 0; i < g.size(); ++i) out << (i ? ";" : "") << join(g[i]);
  out << "\n";
  out << "methods=";
  for (std::size_t i = 0; i < c.methods.size(); ++i) out << (i ? "," : "") << c.methods[i];
  out << "\n";
  return out.str();
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  std::string out = semantic_fields(c);
  out += "train_missing=" + std::string(c.train_missing ? "true" : "false") + "\n";
  out += "checkpoint_dir=" + c.checkpoint_dir + "\n";
  return out;
}

std::string config_digest(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(semantic_fields(config))));
  return buf;
}

std::uint64_t derive_seed(std::int64_t seed, const std::string& artifact, std::size_t index) {
  return splitmix(splitmix(static_cast<std::uint64_t>(seed)) ^ fnv1a(artifact) ^ splitmix(index + 1));
}

ArtifactStore::ArtifactStore(const ExperimentConfig& config, std::int64_t seed)
    : config_(config), task_(config.make_task()), seed_(seed), digest_(config_digest(config)) {}

std::filesystem::path ArtifactStore::path_for(const std::string& name) const {
  return std::filesystem::path(config_.checkpoint_dir) / ("seed" + std::to_string(seed_)) / (name + ".ckpt");
}

std::optional<ParamVector> ArtifactStore::try_load(const std::string& name, const std::string& kind) const {
  if (config_.checkpoint_dir.empty()) return std::nullopt;
  const auto path = path_for(name);
  if (!std::filesystem::exists(path)) {
    if (!config_.train_missing) {
      throw std::runtime_error("missing checkpoint " + path.string() + " and training is disabled");
    }
    return std::nullopt;
  }
  Checkpoint ckpt = load_checkpoint(path, kind);
  if (ckpt.provenance.task != task_.name() || ckpt.provenance.seed != seed_) {
    throw CheckpointError(path.string() + ": trained for task '" + ckpt.provenance.task + "' seed " +
                          std::to_string(ckpt.provenance.seed) + ", not '" + task_.name() + "' seed " +
                          std::to_string(seed_));
  }
  return std::move(ckpt.params);
}

void ArtifactStore::store(const std::string& name, const ParamVector& params) const {
  if (config_.checkpoint_dir.empty()) return;
  save_checkpoint(Checkpoint{params, {task_.name(), seed_, digest_}}, path_for(name));
}

const TabularPolicy& ArtifactStore::sft() {
  if (sft_) return *sft_;
  if (auto p = try_load("sft", TabularPolicy::kKind)) {
    sft_ = TabularPolicy::from_params(*p);
  } else {
    const auto demos = make_balanced_demos(task_, config_.demos_per_prompt, derive_seed(seed_, "demos", 0));
    sft_ = train_sft(task_, demos, SftConfig{config_.sft_epochs, config_.sft_learning_rate}).policy;
    store("sft", sft_->to_params());
  }
  if (!sft_->compatible_with(task_)) throw CheckpointError("sft checkpoint does not match the task shape");
  return *sft_;
}

const TabularPolicy& ArtifactStore::policy(const std::vector<double>& w, std::size_t index, std::size_t episodes) {
  std::string name = "policy_i" + std::to_string(index) + "_e" + std::to_string(episodes) + "_w";
  for (std::size_t k = 0; k < w.size(); ++k) name += (k ? "-" : "") + fmt(w[k]);
  if (auto it = policies_.find(name); it != policies_.end()) return it->second;
  const TabularPolicy& reference = sft();
  std::optional<TabularPolicy> trained;
  if (auto p = try_load(name, TabularPolicy::kKind)) {
    trained = TabularPolicy::from_params(*p);
    if (!trained->compatible_with(task_)) throw CheckpointError(name + " does not match the task shape");
  } else {
    TrainingConfig tc;
    tc.kl_coefficient = config_.eta;
    tc.learning_rate = config_.learning_rate;
    tc.episodes = episodes;
    tc.batch_size = config_.batch_size;
    tc.seed = derive_seed(seed_, "backbone", index);
    trained = train_policy(reference, task_, w, tc).policy;
    store(name, trained->to_params());
  }
  return policies_.emplace(name, std::move(*trained)).first->second;
}

const TabularPolicy& ArtifactStore::expert(std::size_t objective) {
  std::vector<double> w(task_.objective_count(), 0.0);
  w.at(objective) = 1.0;
  return policy(w, objective, config_.episodes);
}

std::vector<TabularPolicy> ArtifactStore::backbones(const WeightMatrix& b) {
  std::vector<TabularPolicy> out;
  for (std::size_t i = 0; i < b.size(); ++i) out.push_back(policy(b.column(i), i, config_.episodes));
  return out;
}

std::vector<TabularPolicy> ArtifactStore::short_run_backbones(const WeightMatrix& b) {
  const auto episodes = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config_.beta_search_fraction * static_cast<double>(config_.episodes))));
  std::vector<TabularPolicy> out;
  for (std::size_t i = 0; i < b.size(); ++i) out.push_back(policy(b.column(i), i, episodes));
  return out;
}

const std::vector<ExplicitValueModel>& ArtifactStore::explicit_values() {
  if (values_) return *values_;
  std::vector<ExplicitValueModel> models;
  bool complete = true;
  for (std::size_t k = 0; k < task_.objective_count() && complete; ++k) {
    auto p = try_load("value_" + std::to_string(k), ExplicitValueModel::kKind);
    if (!p) {
      complete = false;
      break;
    }
    models.push_back(ExplicitValueModel::from_params(*p));
  }
  if (!complete) {
    models.clear();
    ValueTrainingConfig vc;
    vc.trajectories = config_.value_trajectories;
    vc.learning_rate_floor = config_.value_learning_rate_floor;
    vc.seed = derive_seed(seed_, "values", 0);
    for (auto& fit : train_explicit_values(task_, sft(), vc)) models.push_back(std::move(fit.model));
    for (std::size_t k = 0; k < models.size(); ++k) store("value_" + std::to_string(k), models[k].to_params());
  }
  values_ = std::move(models);
  return *values_;
}

std::vector<double> mean_rewards(const ToyTask& task, std::size_t first, std::size_t last, const Decoder& decode) {
  if (first >= last || last > task.prompt_count()) throw std::invalid_argument("mean_rewards: bad prompt range");
  std::vector<double> sum(task.objective_count(), 0.0);
  for (std::size_t p = first; p < last; ++p) {
    const auto r = terminal_rewards(task, p, decode(p));
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += r[k];
  }
  for (double& s : sum) s /= static_cast<double>(last - first);
  return sum;
}

namespace {

std::vector<ParamVector> params_of(const std::vector<TabularPolicy>& policies) {
  std::vector<ParamVector> out;
  for (const auto& p : policies) out.push_back(p.to_params());
  return out;
}

std::vector<ParamVector> params_of(const std::vector<ExplicitValueModel>& models) {
  std::vector<ParamVector> out;
  for (const auto& m : models) out.push_back(m.to_params());
  return out;
}

}  // namespace

TabularPolicy bone_policy(const MethodInputs& in, const Preference& mu) {
  if (!in.b) throw std::invalid_argument("bone_policy: no weight matrix");
  const ParamVector merged = merge_params(params_of(in.backbones), solve_coefficients(*in.b, mu));
  if (in.alpha == 0.0) return TabularPolicy::from_params(merged);
  return TabularPolicy::from_params(extrapolate(merged, in.sft->to_params(), in.alpha));
}

Decoder make_decoder(const std::string& method, const MethodInputs& in, const Preference& mu, double gamma) {
  const ToyTask* task = in.task;
  if (method == "rewarded_soup") {
    auto policy = std::make_shared<TabularPolicy>(TabularPolicy::from_params(
        merge_params(params_of(in.experts), MergeCoefficients{{mu.weights().begin(), mu.weights().end()}})));
    return [policy, task](std::size_t p) { return greedy_decode(*policy, *task, p); };
  }
  if (method == "logit_ensemble") {
    auto experts = std::make_shared<std::vector<TabularPolicy>>(in.experts);
    std::vector<double> w(mu.weights().begin(), mu.weights().end());
    return [experts, w, task](std::size_t p) { return logit_ensemble_decode(*experts, w, *task, p); };
  }
  auto base = std::make_shared<TabularPolicy>(bone_policy(in, mu));
  if (method == "bone_soup") {
    return [base, task](std::size_t p) { return greedy_decode(*base, *task, p); };
  }
  std::vector<double> weights(mu.weights().begin(), mu.weights().end());
  Guidance guidance;
  if (method == "mage_e") {
    guidance = Guidance::ensemble(in.values, weights);
  } else if (method == "mage_e_m") {
    guidance = Guidance::from_explicit(
        ExplicitValueModel::from_params(merge_value_models(params_of(in.values), mu, ValueMergeStrategy::linear())));
  } else if (method == "mage_i") {
    std::vector<ImplicitValueModel> members;
    for (const auto& bb : in.backbones) members.emplace_back(bb, *in.sft);
    guidance = Guidance::ensemble(std::move(members), solve_coefficients(*in.b, mu).lambda);
  } else if (method == "mage_i_m") {
    const ParamVector merged =
        merge_value_models(params_of(in.backbones), mu, ValueMergeStrategy::bone(*in.b));
    guidance = Guidance::from_implicit(ImplicitValueModel(TabularPolicy::from_params(merged), *in.sft));
  } else {
    throw std::invalid_argument("unknown method '" + method + "'");
  }
  return [base, guidance, task, gamma](std::size_t p) { return guided_decode(*base, guidance, *task, p, gamma); };
}

SweepResult run_sweep(const ExperimentConfig& config) {
  config.validate();
  SweepResult result;
  result.config_digest = config_digest(config);
  const auto grid = config.grid();
  const std::size_t n = config.objective_count;
  const std::size_t val_last = config.validation_prompts;
  const std::size_t test_first = config.validation_prompts;
  const std::size_t test_last = config.prompt_count;
  result.test_prompts = test_last - test_first;

  auto wants = [&](const std::string& m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };
  const bool needs_bone = std::any_of(config.methods.begin(), config.methods.end(), [](const std::string& m) {
    return m != "rewarded_soup" && m != "logit_ensemble";
  });

  std::vector<std::vector<FrontSet>> per_seed;
  for (const std::int64_t seed : config.seeds) {
    ArtifactStore store(config, seed);
    const ToyTask& task = store.task();
    SeedSelection sel;
    sel.seed = seed;

    MethodInputs in;
    in.task = &task;
    in.sft = &store.sft();
    if (wants("rewarded_soup") || wants("logit_ensemble")) {
      for (std::size_t k = 0; k < n; ++k) in.experts.push_back(store.expert(k));
    }

    if (needs_bone) {
      if (config.beta_candidates.size() == 1) {
        sel.beta = config.beta_candidates[0];
      } else {
        std::vector<FrontSet> fronts;
        for (double beta : config.beta_candidates) {
          MethodInputs shortrun = in;
          shortrun.b = build_weight_matrix(n, beta);
          shortrun.backbones = store.short_run_backbones(*shortrun.b);
          shortrun.alpha = 0.0;
          fronts.push_back(sweep_front("bone_soup", shortrun, grid, 0.0, 0, val_last, seed));
        }
        const auto ref = reference_point(fronts);
        for (std::size_t i = 0; i < fronts.size(); ++i) {
          sel.beta_scores[config.beta_candidates[i]] = hypervolume(fronts[i], ref);
        }
        sel.beta = select_beta(config.beta_candidates, n, [&](double beta) { return sel.beta_scores.at(beta); });
      }
      in.b = build_weight_matrix(n, sel.beta);
      in.backbones = store.backbones(*in.b);

      std::vector<double> alphas = config.alpha_candidates;
      std::sort(alphas.begin(), alphas.end());
      if (alphas.size() == 1) {
        sel.alpha = alphas[0];
      } else {
        std::vector<FrontSet> fronts;
        for (double a : alphas) {
          MethodInputs trial = in;
          trial.alpha = a;
          fronts.push_back(sweep_front("bone_soup", trial, grid, 0.0, 0, val_last, seed));
        }
        sel.alpha = alphas[best_by_hypervolume(fronts)];
      }
      in.alpha = sel.alpha;
    }
    if (wants("mage_e") || wants("mage_e_m")) in.values = store.explicit_values();

    std::vector<double> gammas = config.gamma_candidates;
    std::sort(gammas.begin(), gammas.end());
    std::vector<FrontSet> fronts;
    for (const auto& method : config.methods) {
      double gamma = 0.0;
      if (is_guided(method)) {
        if (gammas.size() == 1) {
          gamma = gammas[0];
        } else {
          std::vector<FrontSet> trial;
          for (double g : gammas) trial.push_back(sweep_front(method, in, grid, g, 0, val_last, seed));
          gamma = gammas[best_by_hypervolume(trial)];
        }
        sel.gamma[method] = gamma;
      }
      fronts.push_back(sweep_front(method, in, grid, gamma, test_first, test_last, seed));
    }
    result.selections.push_back(sel);
    per_seed.push_back(std::move(fronts));
  }
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    for (auto& fronts : per_seed) result.fronts.push_back(std::move(fronts[m]));
  }
  return result;
}

std::string front_csv(const std::vector<FrontSet>& fronts) {
  std::vector<const FrontPoint*> rows;
  std::size_t n = 0;
  for (const auto& f : fronts) {
    for (const auto& p : f) {
      if (n == 0) n = p.rewards.size();
      if (p.rewards.size() != n || p.preference.size() != n) {
        throw std::invalid_argument("front_csv: points differ in objective count");
      }
      rows.push_back(&p);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const FrontPoint* a, const FrontPoint* b) {
    if (a->method != b->method) return a->method < b->method;
    if (a->preference != b->preference) return a->preference < b->preference;
    return a->seed < b->seed;
  });
  std::string out = "method,seed";
  const std::size_t cols = n == 0 ? 2 : n;
  for (std::size_t k = 1; k <= cols; ++k) out += ",mu_" + std::to_string(k);
  for (std::size_t k = 1; k <= cols; ++k) out += ",r_" + std::to_string(k);
  out += "\n";
  char buf[64];
  for (const auto* p : rows) {
    out += p->method + "," + std::to_string(p->seed);
    for (double x : p->preference) {
      std::snprintf(buf, sizeof buf, ",%.9g", x);
      out += buf;
    }
    for (double x : p->rewards) {
      std::snprintf(buf, sizeof buf, ",%.9g", x);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void emit_front_csv(const std::vector<FrontSet>& fronts, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << front_csv(fronts);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<FrontSet> parse_front_csv(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw std::invalid_argument("front csv: missing header");
  const auto cols = split(header, ',');
  if (cols.size() < 6 || cols[0] != "method" || cols[1] != "seed" || (cols.size() - 2) % 2 != 0) {
    throw std::invalid_argument("front csv: unexpected header '" + header + "'");
  }
  const std::size_t n = (cols.size() - 2) / 2;
  std::vector<FrontSet> fronts;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != cols.size()) {
      throw std::invalid_argument("front csv line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(cols.size()) + " fields, got " + std::to_string(f.size()));
    }
    FrontPoint p;
    p.method = f[0];
    p.seed = parse_int<int>("seed", f[1]);
    for (std::size_t k = 0; k < n; ++k) p.preference.push_back(parse_double("mu", f[2 + k]));
    for (std::size_t k = 0; k < n; ++k) p.rewards.push_back(parse_double("r", f[2 + n + k]));
    const auto key = std::make_pair(p.method, p.seed);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, fronts.size()).first;
      fronts.emplace_back();
    }
    fronts[it->second].push_back(std::move(p));
  }
  std::vector<FrontSet> ordered;
  for (const auto& [key, i] : index) ordered.push_back(std::move(fronts[i]));
  return ordered;
}

std::vector<FrontSet> read_front_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open front csv " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_front_csv(buf.str());
}

std::vector<MetricRow> metric_rows(const std::vector<FrontSet>& fronts, std::vector<double>* reference) {
  std::vector<FrontSet> nonempty;
  for (const auto& f : fronts) {
    if (!f.empty()) nonempty.push_back(f);
  }
  if (nonempty.empty()) throw std::invalid_argument("report: no front points");
  const auto ref = reference_point(nonempty);
  if (reference) *reference = ref;
  std::vector<MetricRow> rows;
  for (const auto& f : nonempty) {
    MetricRow r;
    r.method = f[0].method;
    r.seed = f[0].seed;
    r.hypervolume = hypervolume(f, ref);
    r.inner_product = mean_inner_product(f);
    r.front_length = pareto_front(f).size();
    if (f.size() >= 2) {
      r.sparsity = sparsity(f);
      r.spacing = spacing(f);
      r.controllability = controllability(f);
    }
    rows.push_back(r);
  }
  return rows;
}

std::string format_report(const std::vector<FrontSet>& fronts, const ReportContext& context) {
  std::vector<double> ref;
  const auto rows = metric_rows(fronts, &ref);
  std::size_t grid_points = 0;
  for (const auto& f : fronts) grid_points = std::max(grid_points, f.size());

  std::ostringstream out;
  char buf[256];
  out << "mage sweep report\n";
  out << "config_digest: " << (context.config_digest.empty() ? "-" : context.config_digest) << "\n";
  out << "test_prompts: ";
  if (context.test_prompts) {
    out << context.test_prompts << " (each reward is the mean over all test prompts)\n";
  } else {
    out << "- (rewards as recorded in the front file)\n";
  }
  out << "preference_points: " << grid_points
      << " (endpoints included; a 10-point protocol would drop one of them)\n";
  out << "reference_point:";
  for (double r : ref) {
    std::snprintf(buf, sizeof buf, " %.6f", r);
    out << buf;
  }
  out << " (componentwise minimum over all fronts minus 0.01)\n";
  for (const auto& s : context.selections) {
    out << "selection seed=" << s.seed << ": beta=" << fmt(s.beta);
    if (!s.beta_scores.empty()) {
      out << " (short-run HV";
      for (const auto& [b, hv] : s.beta_scores) {
        std::snprintf(buf, sizeof buf, " %s:%.6f", fmt(b).c_str(), hv);
        out << buf;
      }
      out << ")";
    }
    out << " alpha=" << fmt(s.alpha);
    for (const auto& [m, g] : s.gamma) out << " gamma[" << m << "]=" << fmt(g);
    out << "\n";
  }
  out << "\n";
  std::snprintf(buf, sizeof buf, "%-16s %5s %10s %10s %10s %10s %6s %8s\n", "method", "seed", "HV", "IP", "Spar",
                "Spac", "Front", "Ctrl");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %5d %10.6f %10.6f %10.6f %10.6f %6zu %8.4f\n", r.method.c_str(), r.seed,
                  r.hypervolume, r.inner_product, r.sparsity, r.spacing, r.front_length, r.controllability);
    out << buf;
  }
  return out.str();
}

void emit_report(const std::vector<FrontSet>& fronts, const ReportContext& context,
                 const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_report(fronts, context);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto csv = out_dir / "front.csv";
  emit_front_csv(result.fronts, csv);
  emit_report(read_front_csv(csv), ReportContext{result.config_digest, result.test_prompts, result.selections},
              out_dir / "report.txt");
}

LmcCurve lmc_curve(ArtifactStore& store, const std::string& kind, double gamma, const std::vector<double>& lambdas) {
  const ToyTask& task = store.task();
  if (task.objective_count() != 2) throw std::invalid_argument("lmc_curve: defined for two objectives");
  const auto& cfg = store.config();
  const TabularPolicy& sft = store.sft();
  std::vector<ParamVector> endpoints;
  if (kind == "explicit") {
    endpoints = params_of(store.explicit_values());
  } else if (kind == "implicit") {
    endpoints = {store.expert(0).to_params(), store.expert(1).to_params()};
  } else {
    throw std::invalid_argument("lmc_curve: kind must be explicit or implicit");
  }
  LmcCurve curve{kind, gamma, lambdas, {}};
  for (double lambda : lambdas) {
    const Preference mu({lambda, 1.0 - lambda});
    const ParamVector merged = merge_value_models(endpoints, mu, ValueMergeStrategy::linear());
    const Guidance g = kind == "explicit"
                           ? Guidance::from_explicit(ExplicitValueModel::from_params(merged))
                           : Guidance::from_implicit(ImplicitValueModel(TabularPolicy::from_params(merged), sft));
    curve.rewards.push_back(mean_rewards(task, cfg.validation_prompts, cfg.prompt_count, [&](std::size_t p) {
      return guided_decode(sft, g, task, p, gamma);
    }));
  }
  return curve;
}

}  // namespace mage
