"""
Discrete-time dynamic programming approximation of the risk evaluation.

On the uniform grid t_i = i T / N the chain is observed only at the nodes, and

    v_i(x) = eps c_{t_i}(x) + sigma(x, Q_{t_i, t_{i+1}}(.|x), v_{i+1}),    v_N = f.

The piecewise-linear interpolant of v_i converges to the solution of the backward
equation as N grows; convergence_study measures that along an N ladder.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple
import logging
import math
import time

import numpy as np

from riskctmc.backward_solver import ValueFunction, NODE_TOL
from riskctmc.errors import ConfigurationError, DomainError
from riskctmc.markov_core import MarkovModel, transition_matrix
from riskctmc.risk_mappings import ProbMeasure, RiskMappingSpec, sigma_eval

logger = logging.getLogger(__name__)

REFERENCE_REFINEMENT = 8


@dataclass(frozen=True, eq=False)
class DPResult:
    """values[i, x] = v^N at times[i]; times are uniform with step T/N"""
    N: int
    times: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> float:
        return float(self.times[-1] - self.times[0]) / self.N

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def interpolate(self, t: float) -> np.ndarray:
        """Linear interpolation between the bracketing nodes; exact at nodes"""
        return interpolate(self, t)

    def lipschitz_estimate(self) -> float:
        """max_i ||v_{i+1} - v_i||_inf / eps, the slope bound of the interpolant"""
        return float(np.max(np.abs(np.diff(self.values, axis=0)))) / self.step

    def rows(self):
        for i, t in enumerate(self.times):
            for x in range(self.n):
                yield float(t), x, float(self.values[i, x])


def interpolate(result: DPResult, t: float) -> np.ndarray:
    T = float(result.times[-1])
    if not -NODE_TOL <= t <= T * (1 + NODE_TOL):
        raise DomainError(f"t={t} outside [0, {T}]")
    t = min(max(t, 0.0), T)
    i = min(int(t / result.step), result.N - 1)
    left, right = result.times[i], result.times[i + 1]
    weight = (t - left) / (right - left)
    return (1.0 - weight) * result.values[i] + weight * result.values[i + 1]


def dp_recursion(model: MarkovModel, spec: RiskMappingSpec, N: int) -> DPResult:
    """Backward recursion with one-step transition matrices Q_{t_i, t_{i+1}}"""
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    spec.validate_for(model.n)

    start = time.time()
    T = model.horizon
    times = np.linspace(0.0, T, N + 1)
    eps = T / N
    values = np.empty((N + 1, model.n))
    values[N] = model.cost.terminal

    # steps that stay inside one generator piece share the same matrix
    cache: Dict[Tuple[int, float], np.ndarray] = {}
    for i in range(N - 1, -1, -1):
        a, b = float(times[i]), float(times[i + 1])
        segments = model.schedule.segments(a, b)
        if len(segments) == 1:
            key = (model.schedule.piece_index(a), round(b - a, 14))
            if key not in cache:
                cache[key] = transition_matrix(model.schedule, a, b).matrix
            Q = cache[key]
        else:
            Q = transition_matrix(model.schedule, a, b).matrix

        rate = model.cost.rate(a)
        nxt = values[i + 1]
        for x in range(model.n):
            row = Q[x] / Q[x].sum()
            values[i, x] = eps * rate[x] + sigma_eval(spec, x, ProbMeasure(row), nxt)

    logger.debug(f"DP recursion {spec.describe()} N={N} in {time.time() - start:.2f}s")
    return DPResult(N, times, values)


@dataclass
class ConvergenceReport:
    """Sup-norm errors of the DP interpolant against a reference solution"""
    ladder: List[int]
    errors: List[float] = field(default_factory=list)
    orders: List[float] = field(default_factory=list)
    lipschitz: List[float] = field(default_factory=list)

    def rows(self):
        for N, error, order in zip(self.ladder, self.errors, self.orders):
            yield N, error, order

    def is_decreasing(self, allowance: float = 0.1) -> bool:
        """Errors decrease along the ladder; one step may grow by less than allowance (relative)"""
        bumps = 0
        for previous, current in zip(self.errors[:-1], self.errors[1:]):
            if current < previous:
                continue
            if current > previous * (1.0 + allowance):
                return False
            bumps += 1
        return bumps <= 1


def _empirical_orders(ladder: Sequence[int], errors: Sequence[float]) -> List[float]:
    orders = [float("nan")]
    for (n0, e0), (n1, e1) in zip(zip(ladder[:-1], errors[:-1]), zip(ladder[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            orders.append(math.log(e0 / e1) / math.log(n1 / n0))
        else:
            orders.append(float("nan"))
    return orders


def convergence_study(
    model: MarkovModel,
    spec: RiskMappingSpec,
    ladder: Sequence[int],
    reference: ValueFunction,
) -> ConvergenceReport:
    """sup over reference nodes and states of |interpolated v^N - v| for each N"""
    ladder = [int(N) for N in ladder]
    if not ladder or any(N < 1 for N in ladder):
        raise ConfigurationError(f"ladder must hold positive step counts, got {ladder}")
    if any(b <= a for a, b in zip(ladder[:-1], ladder[1:])):
        raise ConfigurationError(f"ladder must be strictly increasing, got {ladder}")
    if len(reference.grid) - 1 < REFERENCE_REFINEMENT * ladder[-1]:
        logger.warning(
            f"Reference has {len(reference.grid) - 1} steps, fewer than "
            f"{REFERENCE_REFINEMENT}x the largest ladder entry {ladder[-1]}"
        )

    report = ConvergenceReport(ladder)
    nodes = reference.grid.nodes
    for N in ladder:
        dp = dp_recursion(model, spec, N)
        approx = np.column_stack([np.interp(nodes, dp.times, dp.values[:, x]) for x in range(model.n)])
        error = float(np.max(np.abs(approx - reference.values)))
        report.errors.append(error)
        report.lipschitz.append(dp.lipschitz_estimate())
        logger.info(f"N={N}: sup error {error:.6g}")

    report.orders = _empirical_orders(ladder, report.errors)
    return report
