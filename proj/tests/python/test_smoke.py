import math

import pytest

import mage


def test_weight_matrix_and_coefficients():
    rows = mage.build_weight_matrix(2, 0.6)
    assert rows[0] == pytest.approx([0.6, 0.4])
    assert rows[1] == pytest.approx([0.4, 0.6])
    lam = mage.solve_coefficients(2, 0.75, [1.0, 0.0])
    assert lam == pytest.approx([1.5, -0.5])
    assert mage.solve_coefficients(3, 1.0, [0.2, 0.3, 0.5]) == [0.2, 0.3, 0.5]
    with pytest.raises(ValueError):
        mage.build_weight_matrix(2, 0.5)


def test_singular_matrix_is_a_value_error():
    with pytest.raises(mage.SingularMatrixError):
        mage.solve_coefficients_columns([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5])


def test_merge_and_extrapolate():
    assert mage.merge_params([[1, 1], [3, -1]], [0.5, 0.5]) == [2, 0]
    assert mage.merge_params([[2, 0], [0, 2]], [1.5, -0.5]) == [3, -1]
    assert mage.extrapolate([2, 2], [1, 1], 1.0) == [3, 3]
    with pytest.raises(ValueError):
        mage.merge_params([[1, 2], [1, 2, 3]], [0.5, 0.5])


def test_oracle():
    ex = mage.worked_example()
    assert ex["optimum"] == pytest.approx([2.0, -0.6], abs=1e-12)
    assert ex["merged"] == pytest.approx([2.0, -45 / 77], abs=1e-12)
    bone, soup = mage.closed_form_errors(1.0, 2.0, 0.7, 0.5)
    assert soup == pytest.approx(1 / 36)
    lo, hi = mage.theorem_interval(0.6)
    assert hi - lo == pytest.approx(math.sqrt(0.52))
    assert mage.verify_theorem(1.0, 3.0, 0.7)["passed"]


def test_metrics():
    assert mage.hypervolume([[2, 1], [1, 2]], [0, 0]) == pytest.approx(3.0)
    assert mage.controllability([[0.8, 0.2], [0.2, 0.8]], [[1, 0], [0, 1]]) == 1.0
    assert mage.sparsity([[0, 0], [1, 1]]) == pytest.approx(2.0)
    assert mage.spacing([[0, 0], [1, 0], [3, 0]]) == pytest.approx(math.sqrt(2 / 9))
    assert mage.inner_product([[0.5, 0.5]], [[2, 4]]) == 3.0
    assert len(mage.pareto_front([[1, 1], [0.5, 0.5]])) == 1


def test_guided_next_token():
    assert mage.guided_next_token([0.6, 0.4], [0.0, 1.0], 0.0) == 0
    assert mage.guided_next_token([0.6, 0.4], [0.0, 1.0], math.log(2.0)) == 1


def test_small_sweep_is_deterministic():
    config = "\n".join(
        [
            "prompt_count=6",
            "validation_prompts=2",
            "demos_per_prompt=32",
            "episodes=60",
            "beta_candidates=0.8",
            "alpha_candidates=0",
            "gamma_candidates=1",
            "value_trajectories=600",
            "methods=rewarded_soup,bone_soup,mage_e_m",
        ]
    )
    first = mage.run_sweep(config)
    second = mage.run_sweep(config)
    assert first["csv"] == second["csv"]
    assert first["report"] == second["report"]
    assert first["config_digest"] == mage.config_digest(config)
    assert first["csv"].count("\n") == 1 + 3 * 11
    methods = {row["method"] for row in first["metrics"]}
    assert methods == {"rewarded_soup", "bone_soup", "mage_e_m"}
    with pytest.raises(ValueError):
        mage.run_sweep("bogus_key=1")
