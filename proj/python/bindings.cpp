#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mage/decode.hpp"
#include "mage/experiment.hpp"
#include "mage/merge.hpp"
#include "mage/metrics.hpp"
#include "mage/quad_oracle.hpp"

namespace py = pybind11;
using namespace mage;

namespace {

std::vector<std::vector<double>> matrix_rows(const WeightMatrix& b) {
  std::vector<std::vector<double>> rows(b.size(), std::vector<double>(b.size()));
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (std::size_t c = 0; c < b.size(); ++c) rows[r][c] = b(r, c);
  }
  return rows;
}

ParamVector as_params(const std::vector<double>& v) { return ParamVector(ShapeTag{"vector", {v.size()}}, v); }

std::vector<double> as_list(const ParamVector& p) { return {p.values().begin(), p.values().end()}; }

FrontSet as_front(const std::vector<std::vector<double>>& prefs, const std::vector<std::vector<double>>& rewards) {
  if (prefs.size() != rewards.size()) throw std::invalid_argument("need one preference per reward vector");
  FrontSet f;
  for (std::size_t i = 0; i < prefs.size(); ++i) f.push_back({prefs[i], rewards[i], "", 0});
  return f;
}

FrontSet as_front(const std::vector<std::vector<double>>& rewards) {
  FrontSet f;
  for (const auto& r : rewards) f.push_back({std::vector<double>(r.size(), 0.0), r, "", 0});
  return f;
}

}  // namespace

PYBIND11_MODULE(_mage, m) {
  m.doc() = "Bone Soup merging, value-model merging and guided decoding on a toy generation task.";

  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  m.def(
      "build_weight_matrix", [](std::size_t n, double beta) { return matrix_rows(build_weight_matrix(n, beta)); },
      py::arg("n"), py::arg("beta"), "Circulant combination matrix as a list of rows.");
  m.def(
      "solve_coefficients",
      [](std::size_t n, double beta, const std::vector<double>& mu) {
        return solve_coefficients(build_weight_matrix(n, beta), Preference(mu)).lambda;
      },
      py::arg("n"), py::arg("beta"), py::arg("mu"));
  m.def(
      "solve_coefficients_columns",
      [](const std::vector<std::vector<double>>& columns, const std::vector<double>& mu) {
        return solve_coefficients(WeightMatrix::from_columns(columns), Preference(mu)).lambda;
      },
      py::arg("columns"), py::arg("mu"));
  m.def(
      "merge_params",
      [](const std::vector<std::vector<double>>& models, const std::vector<double>& lambda) {
        std::vector<ParamVector> ps;
        for (const auto& v : models) ps.push_back(as_params(v));
        return as_list(merge_params(ps, MergeCoefficients{lambda}));
      },
      py::arg("models"), py::arg("lambda_"));
  m.def(
      "extrapolate",
      [](const std::vector<double>& theta_hat, const std::vector<double>& theta_sft, double alpha) {
        return as_list(extrapolate(as_params(theta_hat), as_params(theta_sft), alpha));
      },
      py::arg("theta_hat"), py::arg("theta_sft"), py::arg("alpha"));

  m.def("worked_example", [] {
    const auto ex = worked_example_rewards();
    const Preference half({0.5, 0.5});
    const auto bone = bone_solution(ex, WeightMatrix::from_columns({{0.4, 0.6}, {0.6, 0.4}}), half);
    py::dict d;
    d["optimum"] = as_list(exact_optimum(ex, half.weights()));
    d["soup"] = as_list(soup_solution(ex, half));
    d["backbones"] = std::vector<std::vector<double>>{as_list(bone.backbones[0]), as_list(bone.backbones[1])};
    d["merged"] = as_list(bone.merged);
    return d;
  });
  m.def(
      "closed_form_errors",
      [](double k1, double k2, double beta, double mu, double distance) {
        const auto e = closed_form_errors(k1, k2, beta, mu, distance);
        return py::make_tuple(e.bone, e.soup);
      },
      py::arg("k1"), py::arg("k2"), py::arg("beta"), py::arg("mu"), py::arg("peak_distance") = 1.0);
  m.def("theorem_interval", &theorem_interval, py::arg("beta"));
  m.def(
      "verify_theorem",
      [](double k1, double k2, double beta, double step) {
        const auto r = verify_theorem(k1, k2, beta, step);
        py::dict d;
        d["passed"] = r.passed;
        d["degenerate"] = r.degenerate;
        d["points_checked"] = r.points_checked;
        d["max_formula_discrepancy"] = r.max_formula_discrepancy;
        d["interval"] = r.interval;
        d["failure"] = r.failure;
        return d;
      },
      py::arg("k1"), py::arg("k2"), py::arg("beta"), py::arg("grid_step") = 0.01);

  m.def(
      "hypervolume",
      [](const std::vector<std::vector<double>>& points, const std::vector<double>& reference) {
        return hypervolume(points, reference);
      },
      py::arg("points"), py::arg("reference"));
  m.def(
      "controllability",
      [](const std::vector<std::vector<double>>& prefs, const std::vector<std::vector<double>>& rewards) {
        return controllability(prefs, rewards);
      },
      py::arg("preferences"), py::arg("rewards"));
  m.def(
      "sparsity", [](const std::vector<std::vector<double>>& rewards) { return sparsity(as_front(rewards)); },
      py::arg("rewards"));
  m.def(
      "spacing", [](const std::vector<std::vector<double>>& rewards) { return spacing(as_front(rewards)); },
      py::arg("rewards"));
  m.def(
      "inner_product",
      [](const std::vector<std::vector<double>>& prefs, const std::vector<std::vector<double>>& rewards) {
        return mean_inner_product(as_front(prefs, rewards));
      },
      py::arg("preferences"), py::arg("rewards"));
  m.def(
      "pareto_front",
      [](const std::vector<std::vector<double>>& rewards) {
        std::vector<std::vector<double>> out;
        for (const auto& p : pareto_front(as_front(rewards))) out.push_back(p.rewards);
        return out;
      },
      py::arg("rewards"));

  m.def(
      "guided_next_token",
      [](const std::vector<double>& probs, const std::vector<double>& scores, double gamma) {
        return guided_next_token(probs, scores, gamma);
      },
      py::arg("probs"), py::arg("scores"), py::arg("gamma"));

  m.def(
      "run_sweep",
      [](const std::string& config_text) {
        const ExperimentConfig config = parse_config(config_text);
        SweepResult result;
        {
          py::gil_scoped_release release;
          result = run_sweep(config);
        }
        const std::string csv = front_csv(result.fronts);
        const auto reread = parse_front_csv(csv);
        py::dict d;
        d["csv"] = csv;
        d["report"] = format_report(reread, ReportContext{result.config_digest, result.test_prompts, result.selections});
        d["config_digest"] = result.config_digest;
        py::list rows;
        for (const auto& r : metric_rows(reread)) {
          py::dict row;
          row["method"] = r.method;
          row["seed"] = r.seed;
          row["hypervolume"] = r.hypervolume;
          row["inner_product"] = r.inner_product;
          row["sparsity"] = r.sparsity;
          row["spacing"] = r.spacing;
          row["front_length"] = r.front_length;
          row["controllability"] = r.controllability;
          rows.append(row);
        }
        d["metrics"] = rows;
        return d;
      },
      py::arg("config_text") = "", "Run a preference sweep from key=value config text.");
  m.def("config_digest", [](const std::string& text) { return config_digest(parse_config(text)); },
        py::arg("config_text") = "");
}
