"""
Risk multigenerators and their support functions.

For a direction K in the tangent cone at I, the multigenerator at state x is a
convex set of signed measures D(.|x). The backward equation only needs its support
function s(v) = max over D of sum_y v(y) D(y|x); closed forms are given for the
expectation, AVaR and first-order semideviation mappings, together with a vertex
enumeration oracle and a finite-difference check of the semi-derivative.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union
import itertools
import logging

import numpy as np
from numpy.typing import ArrayLike

from riskctmc.errors import ConfigurationError, DomainError, OracleScaleError, StructuralError
from riskctmc.markov_core import SignedKernel, hausdorff_distance, ROW_SUM_TOL
from riskctmc.risk_mappings import (
    ORACLE_MAX_STATES,
    ProbMeasure,
    RiskMappingSpec,
    RiskVariant,
    sigma_eval,
)

logger = logging.getLogger(__name__)

FD_FINAL_TOL = 1e-4
FD_NOISE_FLOOR = 1e-8

Direction = Union[SignedKernel, ArrayLike]


def direction_row(K: Direction, x: int) -> np.ndarray:
    """Row x of a kernel, or the signed measure itself when K is already a row"""
    matrix = K.matrix if isinstance(K, SignedKernel) else np.asarray(K, dtype=float)
    if matrix.ndim == 2:
        matrix = matrix[x]
    if matrix.ndim != 1:
        raise StructuralError(f"direction must be a kernel or a signed measure, got shape {matrix.shape}")
    return matrix


def check_direction(x: int, row: np.ndarray) -> None:
    """Row-local tangent cone: K(x|x) <= 0, K(y|x) >= 0 for y != x, zero sum"""
    if not 0 <= x < row.size:
        raise StructuralError(f"state {x} outside 0..{row.size - 1}")
    off = np.delete(row, x)
    tol = ROW_SUM_TOL * row.size * float(np.max(np.abs(row), initial=0.0))
    if row[x] > 0 or np.any(off < 0) or abs(row.sum()) > tol:
        raise DomainError(f"direction {row.tolist()} is not in the tangent cone at state {x}")


def max_step_row(x: int, row: np.ndarray) -> float:
    """Largest eps with delta_x + eps K(.|x) a probability measure"""
    check_direction(x, row)
    return float("inf") if row[x] == 0 else 1.0 / abs(row[x])


@dataclass(frozen=True, eq=False)
class MultigeneratorQuery:
    """One support-function evaluation: mapping, state, direction row and values"""
    spec: RiskMappingSpec
    x: int
    K: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        row = direction_row(self.K, self.x)
        values = np.asarray(self.v, dtype=float)
        if values.shape != row.shape:
            raise StructuralError(f"direction has {row.size} states but v has shape {values.shape}")
        check_direction(self.x, row)
        self.spec.validate_for(row.size)
        object.__setattr__(self, "K", row)
        object.__setattr__(self, "v", values)

    @property
    def gaps(self) -> np.ndarray:
        """v(y) - v(x) with the diagonal entry zeroed"""
        gaps = self.v - self.v[self.x]
        gaps[self.x] = 0.0
        return gaps

    @property
    def rates(self) -> np.ndarray:
        """Off-diagonal part of the direction"""
        rates = self.K.copy()
        rates[self.x] = 0.0
        return rates


def _query(spec, x, K, v) -> MultigeneratorQuery:
    return MultigeneratorQuery(spec, x, K, v)


def support_expectation(x: int, K: Direction, v: ArrayLike) -> float:
    """s(v) = sum_{y != x} K(y|x) (v(y) - v(x)), the action of K on v"""
    query = _query(RiskMappingSpec.expectation(), x, K, v)
    return float(query.rates @ query.gaps)


def support_avar(spec: RiskMappingSpec, x: int, K: Direction, v: ArrayLike) -> float:
    """s(v) = (1/alpha(x)) sum_{y != x} K(y|x) (v(y) - v(x))_+"""
    if spec.variant is not RiskVariant.AVAR:
        raise ConfigurationError(f"support_avar needs an AVaR mapping, got {spec.describe()}")
    query = _query(spec, x, K, v)
    return float(query.rates @ np.maximum(query.gaps, 0.0)) / spec.alpha_at(x)


def support_semidev_p1(spec: RiskMappingSpec, x: int, K: Direction, v: ArrayLike) -> float:
    """
    s(v) = g + kappa(x) [ sum_{y != x} K(y|x) (v(y) - v(x))_+ + (-g)_+ ]

    with g = sum_{y != x} K(y|x)(v(y) - v(x)). The objective is linear in Phi: Phi(y|x)
    carries K(y|x)(v(y) - v(x)) and Phi(x|x) carries -g, each maximized over [0, kappa].
    """
    if spec.variant is not RiskVariant.SEMIDEVIATION:
        raise ConfigurationError(f"support_semidev_p1 needs a semideviation mapping, got {spec.describe()}")
    if spec.p != 1.0:
        raise ConfigurationError(
            f"no closed-form multigenerator for semideviation of order p={spec.p:g}; "
            "use the discrete-time recursion instead"
        )
    query = _query(spec, x, K, v)
    weighted = query.rates * query.gaps
    drift = float(weighted.sum())
    kappa = spec.kappa_at(x)
    return drift + kappa * (float(np.maximum(weighted, 0.0).sum()) + max(-drift, 0.0))


def support_function(spec: RiskMappingSpec, x: int, K: Direction, v: ArrayLike) -> float:
    """Closed-form support function for any mapping that has one"""
    if spec.variant is RiskVariant.EXPECTATION:
        return support_expectation(x, K, v)
    if spec.variant is RiskVariant.AVAR:
        return support_avar(spec, x, K, v)
    if spec.variant is RiskVariant.SEMIDEVIATION:
        return support_semidev_p1(spec, x, K, v)
    raise ConfigurationError(
        f"{spec.describe()} mapping is not semi-differentiable; it has no risk multigenerator"
    )


def _per_state(spec: RiskMappingSpec, values: Optional[np.ndarray], n: int) -> np.ndarray:
    if values is None:
        raise ConfigurationError(f"{spec.describe()} is missing a per-state parameter")
    return np.broadcast_to(values, (n,)) if values.size == 1 else values


def support_all(spec: RiskMappingSpec, G: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    support_function for every state at once, with K(.|x) = G[x].

    G is assumed to be a valid generator; solve_ode checks the schedule once up front.
    """
    n = v.size
    weighted = G * (v[np.newaxis, :] - v[:, np.newaxis])
    np.fill_diagonal(weighted, 0.0)
    drift = weighted.sum(axis=1)
    if spec.variant is RiskVariant.EXPECTATION:
        return drift
    if spec.variant is RiskVariant.AVAR:
        return np.maximum(weighted, 0.0).sum(axis=1) / _per_state(spec, spec.alpha, n)
    if spec.has_multigenerator:
        kappa = _per_state(spec, spec.kappa, n)
        return drift + kappa * (np.maximum(weighted, 0.0).sum(axis=1) + np.maximum(-drift, 0.0))
    raise ConfigurationError(
        f"{spec.describe()} mapping is not semi-differentiable; it has no risk multigenerator"
    )


def support_lipschitz(spec: RiskMappingSpec, x: int, K: Direction) -> float:
    """Largest total-variation mass of a multigenerator element; Lipschitz constant of s in sup norm"""
    row = direction_row(K, x)
    check_direction(x, row)
    exit_rate = abs(float(row[x]))
    if spec.variant is RiskVariant.EXPECTATION:
        return 2.0 * exit_rate
    if spec.variant is RiskVariant.AVAR:
        return 2.0 * exit_rate / spec.alpha_at(x)
    if spec.has_multigenerator:
        return 2.0 * (1.0 + spec.kappa_at(x)) * exit_rate
    raise ConfigurationError(f"{spec.describe()} mapping has no risk multigenerator")


def multigenerator_vertices(spec: RiskMappingSpec, x: int, K: Direction) -> List[np.ndarray]:
    """
    Finite set whose convex hull is the multigenerator at x.

    AVaR: every corner of the box 0 <= D(y|x) <= K(y|x)/alpha(x), y != x, closed by
    the balancing diagonal. Semideviation (p = 1): the image of every corner of
    Phi in {0, kappa(x)}^n.
    """
    row = direction_row(K, x)
    check_direction(x, row)
    n = row.size
    if n > ORACLE_MAX_STATES:
        raise OracleScaleError(f"vertex enumeration supports at most {ORACLE_MAX_STATES} states, got {n}")

    if spec.variant is RiskVariant.EXPECTATION:
        return [row.copy()]

    others = [y for y in range(n) if y != x]
    vertices = []
    if spec.variant is RiskVariant.AVAR:
        caps = row / spec.alpha_at(x)
        for pattern in itertools.product((False, True), repeat=n - 1):
            D = np.zeros(n)
            for y, on in zip(others, pattern):
                if on:
                    D[y] = caps[y]
            D[x] = -D[others].sum()
            vertices.append(D)
        return vertices

    if spec.has_multigenerator:
        kappa = spec.kappa_at(x)
        for corner in itertools.product((0.0, kappa), repeat=n):
            phi = np.array(corner)
            D = row * (1.0 + phi - phi[x])
            D[x] = row[x] - float(row @ phi)
            vertices.append(D)
        return vertices

    raise ConfigurationError(f"{spec.describe()} mapping has no risk multigenerator")


def support_bruteforce(spec: RiskMappingSpec, x: int, K: Direction, v: ArrayLike) -> float:
    """Support function by maximizing over multigenerator_vertices"""
    values = np.asarray(v, dtype=float)
    return max(float(values @ D) for D in multigenerator_vertices(spec, x, K))


def avar_quotient_vertices(spec: RiskMappingSpec, x: int, K: Direction, eps: float) -> List[np.ndarray]:
    """
    Vertices of (A(x, delta_x + eps K) - delta_x) / eps for the AVaR dual set.

    A vertex of {mu in simplex : mu <= cap} has every coordinate but one at 0 or at
    its cap, the remaining one fixed by the unit sum.
    """
    if spec.variant is not RiskVariant.AVAR:
        raise ConfigurationError(f"quotient vertices are computed for AVaR only, got {spec.describe()}")
    row = direction_row(K, x)
    if eps <= 0 or eps > max_step_row(x, row):
        raise DomainError(f"eps={eps} outside (0, {max_step_row(x, row)}]")
    n = row.size
    if n > ORACLE_MAX_STATES:
        raise OracleScaleError(f"vertex enumeration supports at most {ORACLE_MAX_STATES} states, got {n}")

    base = np.zeros(n)
    base[x] = 1.0
    caps = (base + eps * row) / spec.alpha_at(x)
    vertices = []
    for pivot in range(n):
        rest = [y for y in range(n) if y != pivot]
        for pattern in itertools.product((False, True), repeat=n - 1):
            mu = np.zeros(n)
            for y, on in zip(rest, pattern):
                if on:
                    mu[y] = caps[y]
            mu[pivot] = 1.0 - mu.sum()
            if -1e-12 <= mu[pivot] <= caps[pivot] + 1e-12:
                vertices.append((mu - base) / eps)
    return vertices


def avar_quotient_distance(spec: RiskMappingSpec, x: int, K: Direction, eps: float) -> float:
    """Pompeiu-Hausdorff distance between quotient and multigenerator vertex sets"""
    return hausdorff_distance(
        avar_quotient_vertices(spec, x, K, eps), multigenerator_vertices(spec, x, K)
    )


# ---------------------------------------------------------------------------
# Finite-difference check of the semi-derivative
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FDRow:
    epsilon: float
    quotient: float
    target: float
    abs_error: float


@dataclass
class FDCheckReport:
    """
    Quotients [sigma(x, delta_x + eps K, v) - v(x)] / eps along a ladder.

    With a closed-form support function the error is measured against it; otherwise
    target is NaN and abs_error is the change from the previous quotient.
    """
    spec: str
    x: int
    rows: List[FDRow] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def final_error(self) -> float:
        return self.rows[-1].abs_error if self.rows else float("nan")


def _judge(errors: Sequence[float], scale: float, final_tol: float):
    finite = [e for e in errors if np.isfinite(e)]
    if not finite:
        return False, "no error measurements"
    floor = FD_NOISE_FLOOR * max(1.0, scale)
    for previous, current in zip(finite[:-1], finite[1:]):
        if current > max(previous, floor):
            return False, f"error grew from {previous:.3g} to {current:.3g}"
    if finite[-1] > final_tol:
        return False, f"final error {finite[-1]:.3g} exceeds {final_tol:g}"
    return True, "errors non-increasing"


def semi_derivative_fd_check(
    spec: RiskMappingSpec,
    x: int,
    K: Direction,
    v: ArrayLike,
    eps_ladder: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5),
    final_tol: float = FD_FINAL_TOL,
) -> FDCheckReport:
    """Finite-difference check that the quotients converge to the support function"""
    row = direction_row(K, x)
    values = np.asarray(v, dtype=float)
    limit = max_step_row(x, row)
    ladder = sorted((float(e) for e in eps_ladder), reverse=True)
    for eps in ladder:
        if eps <= 0 or eps > limit:
            raise DomainError(f"eps={eps} outside (0, {limit:g}]; delta_x + eps K is not a probability measure")

    target = support_function(spec, x, row, values) if spec.has_multigenerator else float("nan")
    base = np.zeros(row.size)
    base[x] = 1.0

    report = FDCheckReport(spec=spec.describe(), x=x)
    previous = float("nan")
    for eps in ladder:
        weights = np.clip(base + eps * row, 0.0, None)
        measure = ProbMeasure(weights / weights.sum())
        quotient = (sigma_eval(spec, x, measure, values) - values[x]) / eps
        if np.isfinite(target):
            error = abs(quotient - target)
        else:
            error = abs(quotient - previous) if np.isfinite(previous) else float("nan")
        report.rows.append(FDRow(eps, quotient, target, error))
        previous = quotient

    scale = abs(target) if np.isfinite(target) else 1.0
    report.converged, report.reason = _judge([r.abs_error for r in report.rows], scale, final_tol)
    level = logging.DEBUG if report.converged else logging.INFO
    logger.log(level, f"FD check {report.spec} at state {x}: {report.reason}")
    return report
