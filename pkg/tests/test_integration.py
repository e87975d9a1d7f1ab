"""End-to-end agreement between the solver, the recursion, simulation and the shipped models"""

import numpy as np
import pytest

from riskctmc.backward_solver import kolmogorov_reference, semigroup_check, solve_ode
from riskctmc.config import SolverConfig
from riskctmc.discrete_approx import REFERENCE_REFINEMENT, convergence_study, dp_recursion
from riskctmc.markov_core import simulate_costs
from riskctmc.model_io import load_model
from riskctmc.risk_mappings import RiskMappingSpec

from conftest import EXPECTATION_VALUE

MODELS = ["two_state_avar.json", "four_state.json", "two_piece.json"]


def test_monte_carlo_agrees_with_solver_and_recursion(two_state):
    values = solve_ode(two_state, RiskMappingSpec.expectation(), SolverConfig(steps=1000))
    summary = simulate_costs(two_state, 0, samples=100_000, seed=7)
    assert abs(summary.mean - values.values[0, 0]) <= 3 * summary.stderr
    dp = dp_recursion(two_state, RiskMappingSpec.expectation(), 1000)
    assert abs(summary.mean - dp.values[0, 0]) <= 3 * summary.stderr
    assert values.values[0, 0] == pytest.approx(EXPECTATION_VALUE, abs=1e-6)


def test_monte_carlo_with_running_cost_and_pieces(configs_dir):
    model, _ = load_model(configs_dir / "two_piece.json")
    reference = kolmogorov_reference(model)
    summary = simulate_costs(model, 1, samples=20_000, seed=11)
    assert abs(summary.mean - reference[1]) <= 4 * summary.stderr
    dp = dp_recursion(model, RiskMappingSpec.expectation(), 2000)
    assert abs(summary.mean - dp.values[0, 1]) <= 4 * summary.stderr
    assert dp.values[0, 1] == pytest.approx(reference[1], abs=5e-3)


@pytest.mark.parametrize("name", MODELS)
@pytest.mark.parametrize("risk_neutral", [False, True], ids=["file_mapping", "expectation"])
def test_dp_converges_on_shipped_models(configs_dir, name, risk_neutral):
    model, spec = load_model(configs_dir / name)
    if risk_neutral:
        spec = RiskMappingSpec.expectation()
    ladder = [10, 20, 40, 80, 160]
    reference = solve_ode(model, spec, SolverConfig(steps=REFERENCE_REFINEMENT * ladder[-1]))
    report = convergence_study(model, spec, ladder, reference)
    assert report.is_decreasing(), report.errors
    assert report.errors[-1] < report.errors[0] / 8
    if name.startswith("two_state"):
        assert report.errors[-1] <= 1e-3


@pytest.mark.parametrize("name", MODELS)
def test_semigroup_on_shipped_models(configs_dir, name):
    model, spec = load_model(configs_dir / name)
    assert semigroup_check(model, spec, SolverConfig(steps=2000), 0.3, 0.7) <= 1e-6


def test_risk_averse_values_dominate_on_shipped_models(configs_dir):
    for name in MODELS:
        model, spec = load_model(configs_dir / name)
        averse = solve_ode(model, spec, SolverConfig(steps=400)).values
        neutral = solve_ode(model, RiskMappingSpec.expectation(), SolverConfig(steps=400)).values
        assert np.all(averse >= neutral - 1e-9), name
        assert np.max(np.abs(averse)) <= model.value_bound() + 1e-6
