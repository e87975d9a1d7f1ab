"""
Coherent transition risk mappings sigma(x, m, v).

Four families: expectation, Average Value at Risk, mean-semideviation of order p,
and the worst-case mapping. Each has a primal evaluation, a dual-set membership test
and a brute-force maximization of the dual representation used as an oracle.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union
import itertools
import logging

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize

from riskctmc.errors import ConfigurationError, OracleScaleError, StructuralError

logger = logging.getLogger(__name__)

ALPHA_MIN = 1e-6
ALPHA_MAX = 1.0 - 1e-6
MEASURE_TOL = 1e-10
ORACLE_MAX_STATES = 6


class RiskVariant(Enum):
    """Families of transition risk mappings"""
    EXPECTATION = "expectation"
    AVAR = "avar"
    SEMIDEVIATION = "semideviation"
    WORST_CASE = "worst_case"


@dataclass(frozen=True, eq=False)
class RiskMappingSpec:
    """
    Which mapping is applied at each state.

    alpha (AVaR) and kappa (semideviation) are per-state vectors; a scalar is kept as a
    length-one vector and broadcast to every state.
    """
    variant: RiskVariant
    alpha: Optional[np.ndarray] = None
    kappa: Optional[np.ndarray] = None
    p: float = 1.0

    def __post_init__(self):
        variant = RiskVariant(self.variant)
        object.__setattr__(self, "variant", variant)

        if variant is RiskVariant.AVAR:
            if self.alpha is None:
                raise ConfigurationError("AVaR mapping needs alpha")
            alpha = np.atleast_1d(np.array(self.alpha, dtype=float))
            if alpha.ndim != 1 or alpha.size == 0:
                raise ConfigurationError("alpha must be a scalar or a per-state vector")
            if np.any(~np.isfinite(alpha)) or np.any(alpha < ALPHA_MIN) or np.any(alpha > ALPHA_MAX):
                raise ConfigurationError(
                    f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha.tolist()}"
                )
            alpha.flags.writeable = False
            object.__setattr__(self, "alpha", alpha)

        if variant is RiskVariant.SEMIDEVIATION:
            if self.kappa is None:
                raise ConfigurationError("semideviation mapping needs kappa")
            kappa = np.atleast_1d(np.array(self.kappa, dtype=float))
            if kappa.ndim != 1 or kappa.size == 0:
                raise ConfigurationError("kappa must be a scalar or a per-state vector")
            if np.any(~np.isfinite(kappa)) or np.any(kappa < 0) or np.any(kappa > 1):
                raise ConfigurationError(f"kappa must lie in [0, 1], got {kappa.tolist()}")
            if not np.isfinite(self.p) or self.p < 1:
                raise ConfigurationError(f"semideviation order p must be >= 1, got {self.p}")
            kappa.flags.writeable = False
            object.__setattr__(self, "kappa", kappa)
            object.__setattr__(self, "p", float(self.p))

    @classmethod
    def expectation(cls) -> "RiskMappingSpec":
        return cls(RiskVariant.EXPECTATION)

    @classmethod
    def avar(cls, alpha: Union[float, ArrayLike]) -> "RiskMappingSpec":
        return cls(RiskVariant.AVAR, alpha=alpha)

    @classmethod
    def semideviation(cls, kappa: Union[float, ArrayLike], p: float = 1.0) -> "RiskMappingSpec":
        return cls(RiskVariant.SEMIDEVIATION, kappa=kappa, p=p)

    @classmethod
    def worst_case(cls) -> "RiskMappingSpec":
        return cls(RiskVariant.WORST_CASE)

    def validate_for(self, n: int) -> None:
        """Per-state parameter vectors must match the state count"""
        for name, values in (("alpha", self.alpha), ("kappa", self.kappa)):
            if values is not None and values.size not in (1, n):
                raise ConfigurationError(f"{name} has {values.size} entries but the model has {n} states")

    def alpha_at(self, x: int) -> float:
        if self.alpha is None:
            raise ConfigurationError(f"{self.variant.value} mapping has no alpha")
        return float(self.alpha[0] if self.alpha.size == 1 else self.alpha[x])

    def kappa_at(self, x: int) -> float:
        if self.kappa is None:
            raise ConfigurationError(f"{self.variant.value} mapping has no kappa")
        return float(self.kappa[0] if self.kappa.size == 1 else self.kappa[x])

    @property
    def dual_exponent(self) -> float:
        """q with 1/p + 1/q = 1"""
        return float("inf") if self.p == 1.0 else self.p / (self.p - 1.0)

    @property
    def has_multigenerator(self) -> bool:
        """True when a closed-form risk multigenerator support function exists"""
        if self.variant in (RiskVariant.EXPECTATION, RiskVariant.AVAR):
            return True
        return self.variant is RiskVariant.SEMIDEVIATION and self.p == 1.0

    def describe(self) -> str:
        if self.variant is RiskVariant.AVAR:
            return f"avar(alpha={self.alpha.tolist()})"
        if self.variant is RiskVariant.SEMIDEVIATION:
            return f"semideviation(kappa={self.kappa.tolist()}, p={self.p:g})"
        return self.variant.value


@dataclass(frozen=True, eq=False)
class ProbMeasure:
    """Probability vector over the states"""
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise StructuralError(f"probability measure must be a non-empty vector, got shape {weights.shape}")
        if np.any(weights < -MEASURE_TOL) or abs(weights.sum() - 1.0) > MEASURE_TOL:
            raise StructuralError("weights must be nonnegative and sum to 1")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dirac(cls, x: int, n: int) -> "ProbMeasure":
        weights = np.zeros(n)
        weights[x] = 1.0
        return cls(weights)

    @property
    def n(self) -> int:
        return self.weights.size


MeasureLike = Union[ProbMeasure, ArrayLike]


def _weights(measure: MeasureLike) -> np.ndarray:
    if isinstance(measure, ProbMeasure):
        return measure.weights
    return ProbMeasure(measure).weights


def _prepare(spec: RiskMappingSpec, x: int, m: MeasureLike, v: ArrayLike):
    weights = _weights(m)
    values = np.asarray(v, dtype=float)
    if values.shape != weights.shape:
        raise StructuralError(f"measure has {weights.size} states but v has shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise StructuralError("v must be finite")
    if not 0 <= x < weights.size:
        raise StructuralError(f"state {x} outside 0..{weights.size - 1}")
    spec.validate_for(weights.size)
    return weights, values


# ---------------------------------------------------------------------------
# Primal evaluation
# ---------------------------------------------------------------------------

def _avar_value(weights: np.ndarray, values: np.ndarray, alpha: float) -> float:
    """min over eta of eta + (1/alpha) E(v - eta)_+, scanning eta over the values of v"""
    etas = np.unique(values)
    excess = np.maximum(values[np.newaxis, :] - etas[:, np.newaxis], 0.0)
    objective = etas + (excess @ weights) / alpha
    return float(np.min(objective))


def _semideviation_value(weights: np.ndarray, values: np.ndarray, kappa: float, p: float) -> float:
    mean = float(weights @ values)
    upper = np.maximum(values - mean, 0.0)
    if p == 1.0:
        deviation = float(weights @ upper)
    else:
        deviation = float(weights @ upper ** p) ** (1.0 / p)
    return mean + kappa * deviation


def sigma_eval(spec: RiskMappingSpec, x: int, m: MeasureLike, v: ArrayLike) -> float:
    """Primal value of sigma(x, m, v)"""
    weights, values = _prepare(spec, x, m, v)

    if spec.variant is RiskVariant.EXPECTATION:
        return float(weights @ values)
    if spec.variant is RiskVariant.AVAR:
        return _avar_value(weights, values, spec.alpha_at(x))
    if spec.variant is RiskVariant.SEMIDEVIATION:
        return _semideviation_value(weights, values, spec.kappa_at(x), spec.p)
    return float(np.max(values[weights > 0]))


# ---------------------------------------------------------------------------
# Dual side
# ---------------------------------------------------------------------------

def _weighted_norm(phi: np.ndarray, weights: np.ndarray, q: float) -> float:
    """||phi||_q in L_q(m); the sup norm is taken over the support of m"""
    support = weights > 0
    if not np.any(support):
        return 0.0
    if np.isinf(q):
        return float(np.max(np.abs(phi[support])))
    return float(weights[support] @ np.abs(phi[support]) ** q) ** (1.0 / q)


def dual_feasible(spec: RiskMappingSpec, x: int, m: MeasureLike, mu: MeasureLike, tol: float = MEASURE_TOL) -> bool:
    """
    Membership of mu in the dual set A(x, m).

    For the semideviation set the density h = mu/m fixes phi up to an additive
    constant; the smallest nonnegative choice phi = h - min h also minimizes the
    norm, so feasibility reduces to ||h - min h||_q <= kappa(x).
    """
    weights = _weights(m)
    target = _weights(mu)
    if weights.shape != target.shape:
        raise StructuralError("m and mu must live on the same state space")
    spec.validate_for(weights.size)

    outside = weights <= 0
    if np.any(target[outside] > tol):
        return False

    if spec.variant is RiskVariant.EXPECTATION:
        return bool(np.all(np.abs(target - weights) <= tol))
    if spec.variant is RiskVariant.AVAR:
        return bool(np.all(target <= weights / spec.alpha_at(x) + tol))
    if spec.variant is RiskVariant.WORST_CASE:
        return True

    support = ~outside
    density = target[support] / weights[support]
    phi = np.zeros_like(weights)
    phi[support] = density - density.min()
    norm = _weighted_norm(phi, weights, spec.dual_exponent)
    return norm <= spec.kappa_at(x) + 1e-9


def avar_dual_maximizer(spec: RiskMappingSpec, x: int, m: MeasureLike, v: ArrayLike) -> np.ndarray:
    """Greedy optimum of the AVaR dual: fill m(y)/alpha(x) in decreasing order of v"""
    if spec.variant is not RiskVariant.AVAR:
        raise ConfigurationError(f"greedy dual fill needs an AVaR mapping, got {spec.describe()}")
    weights, values = _prepare(spec, x, m, v)
    alpha = spec.alpha_at(x)
    mu = np.zeros_like(weights)
    remaining = 1.0
    # stable sort keeps ties in state order
    for y in np.argsort(-values, kind="stable"):
        share = min(weights[y] / alpha, remaining)
        mu[y] = share
        remaining -= share
        if remaining <= 0:
            break
    return mu


def _semideviation_vertex_max(weights: np.ndarray, values: np.ndarray, kappa: float) -> float:
    best = -np.inf
    for corner in itertools.product((0.0, kappa), repeat=weights.size):
        phi = np.array(corner)
        mu = weights * (1.0 + phi - phi @ weights)
        best = max(best, float(values @ mu))
    return best


def _semideviation_numeric_max(
    weights: np.ndarray, values: np.ndarray, kappa: float, p: float, starts: int = 8
) -> float:
    """Multistart SLSQP over {phi >= 0, ||phi||_q <= kappa}; a lower bound on the true max"""
    mean = float(weights @ values)
    if kappa == 0.0:
        return mean
    q = p / (p - 1.0)
    gain = weights * (values - mean)
    constraint = {"type": "ineq", "fun": lambda phi: kappa ** q - weights @ np.abs(phi) ** q}
    rng = np.random.default_rng(0)

    best = 0.0
    for _ in range(starts):
        start = rng.uniform(0.0, 1.0, size=weights.size)
        scale = _weighted_norm(start, weights, q)
        if scale > 0:
            start *= 0.5 * kappa / scale
        result = minimize(
            lambda phi: -(gain @ phi),
            start,
            jac=lambda phi: -gain,
            method="SLSQP",
            bounds=[(0.0, None)] * weights.size,
            constraints=[constraint],
            options={"ftol": 1e-12, "maxiter": 500},
        )
        phi = np.maximum(result.x, 0.0)
        norm = _weighted_norm(phi, weights, q)
        if norm > kappa:
            phi *= kappa / norm
        best = max(best, float(gain @ phi))
    return mean + best


def oracle_is_exact(spec: RiskMappingSpec) -> bool:
    """The brute-force dual oracle is exact except for semideviation with p > 1"""
    return not (spec.variant is RiskVariant.SEMIDEVIATION and spec.p > 1.0)


def dual_support_bruteforce(spec: RiskMappingSpec, x: int, m: MeasureLike, v: ArrayLike) -> float:
    """
    max over mu in A(x, m) of sum_y v(y) mu(y), computed without the primal formula.

    Semideviation with p > 1 is solved numerically and is only a lower bound up to the
    optimizer tolerance; see oracle_is_exact.
    """
    weights, values = _prepare(spec, x, m, v)
    if weights.size > ORACLE_MAX_STATES:
        raise OracleScaleError(
            f"brute-force dual oracle supports at most {ORACLE_MAX_STATES} states, got {weights.size}"
        )

    if spec.variant is RiskVariant.EXPECTATION:
        return float(weights @ values)
    if spec.variant is RiskVariant.AVAR:
        return float(values @ avar_dual_maximizer(spec, x, weights, values))
    if spec.variant is RiskVariant.WORST_CASE:
        return float(np.max(values[weights > 0]))
    if spec.p == 1.0:
        return _semideviation_vertex_max(weights, values, spec.kappa_at(x))
    logger.debug(f"Numeric dual maximization for {spec.describe()} (approximate)")
    return _semideviation_numeric_max(weights, values, spec.kappa_at(x), spec.p)


# ---------------------------------------------------------------------------
# Coherence axioms
# ---------------------------------------------------------------------------

AXIOMS = ("normalization", "monotonicity", "translation", "homogeneity", "convexity")


@dataclass
class CoherenceReport:
    """Outcome of a randomized coherence check for one (spec, x, m)"""
    spec: str
    samples: int
    checks: dict = field(default_factory=lambda: {axiom: 0 for axiom in AXIOMS})
    failures: dict = field(default_factory=lambda: {axiom: 0 for axiom in AXIOMS})
    counterexample: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return not any(self.failures.values())

    def record(self, axiom: str, ok: bool, **details) -> None:
        self.checks[axiom] += 1
        if not ok:
            self.failures[axiom] += 1
            if self.counterexample is None:
                self.counterexample = {"axiom": axiom, **details}


def _close(a: float, b: float, rel: float) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def _below(a: float, b: float, rel: float) -> bool:
    return a <= b + rel * max(1.0, abs(a), abs(b))


def coherence_check(
    spec: RiskMappingSpec,
    x: int,
    m: MeasureLike,
    samples: int = 1000,
    seed: Optional[int] = None,
    rel_tol: float = 1e-9,
) -> CoherenceReport:
    """Randomized test of monotonicity, translation, positive homogeneity and convexity"""
    weights = _weights(m)
    n = weights.size
    rng = np.random.default_rng(seed)
    report = CoherenceReport(spec=spec.describe(), samples=samples)

    def sigma(values):
        return sigma_eval(spec, x, weights, values)

    zero = sigma(np.zeros(n))
    report.record("normalization", _close(zero, 0.0, rel_tol), value=zero)

    for _ in range(samples):
        v = rng.normal(0.0, 1.0, size=n)
        w = rng.normal(0.0, 1.0, size=n)
        sv, sw = sigma(v), sigma(w)

        upper = v + np.abs(rng.normal(0.0, 1.0, size=n))
        s_upper = sigma(upper)
        report.record("monotonicity", _below(sv, s_upper, rel_tol), v=v.tolist(), w=upper.tolist())

        shift = rng.normal(0.0, 5.0)
        s_shift = sigma(v + shift)
        report.record("translation", _close(s_shift, sv + shift, rel_tol), v=v.tolist(), a=shift)

        gamma = rng.uniform(0.0, 5.0)
        s_scaled = sigma(gamma * v)
        report.record("homogeneity", _close(s_scaled, gamma * sv, rel_tol), v=v.tolist(), gamma=gamma)

        lam = rng.uniform(0.0, 1.0)
        s_mix = sigma(lam * v + (1.0 - lam) * w)
        report.record(
            "convexity", _below(s_mix, lam * sv + (1.0 - lam) * sw, rel_tol),
            v=v.tolist(), w=w.tolist(), lam=lam,
        )

    if report.passed:
        logger.debug(f"Coherence check passed for {report.spec} ({samples} samples)")
    else:
        logger.warning(f"Coherence check failed for {report.spec}: {report.counterexample}")
    return report
