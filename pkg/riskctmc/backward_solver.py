"""
Backward solver for the generalized Kolmogorov system

    dv_t(x)/dt = -c_t(x) - s_t(x, v_t),    v_T = f,

where s_t(x, .) is the support function of the risk multigenerator in the direction
of the generator piece active at t. With the expectation mapping this is the
classical backward Kolmogorov equation, and kolmogorov_reference gives its exact
solution through matrix exponentials.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional
import logging
import time

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from riskctmc.config import SolverConfig
from riskctmc.errors import ConfigurationError, DomainError, StructuralError
from riskctmc.markov_core import MarkovModel, GeneratorSchedule, validate_generator
from riskctmc.multigenerators import support_all
from riskctmc.risk_mappings import RiskMappingSpec

logger = logging.getLogger(__name__)

NODE_TOL = 1e-12
SIMPSON_INTERVALS = 128


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """
    Strictly increasing time nodes.

    uniform is True when the nodes are exactly start + i * step; otherwise forced
    nodes (generator breakpoints, requested times) were merged into the uniform grid.
    """
    nodes: np.ndarray
    uniform: bool
    step: float

    @classmethod
    def build(
        cls,
        schedule: GeneratorSchedule,
        steps: int,
        start: float = 0.0,
        end: Optional[float] = None,
        extra: Iterable[float] = (),
    ) -> "TimeGrid":
        """Uniform N-step grid on [start, end] with breakpoints and extra times added as nodes"""
        end = schedule.horizon if end is None else float(end)
        if steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {steps}")
        if not 0.0 <= start < end <= schedule.horizon:
            raise DomainError(f"[{start}, {end}] is not a sub-interval of [0, {schedule.horizon}]")

        uniform = np.linspace(start, end, steps + 1)
        forced = [start, end]
        forced += [float(b) for b in schedule.breakpoints if start < b < end]
        forced += [float(e) for e in extra if start < e < end]
        forced_arr = np.unique(np.array(forced))

        tol = NODE_TOL * max(1.0, end)
        near_forced = np.min(np.abs(uniform[:, np.newaxis] - forced_arr[np.newaxis, :]), axis=1) <= tol
        nodes = np.union1d(uniform[~near_forced], forced_arr)
        return cls(nodes, nodes.size == steps + 1, (end - start) / steps)

    @property
    def start(self) -> float:
        return float(self.nodes[0])

    @property
    def end(self) -> float:
        return float(self.nodes[-1])

    def __len__(self) -> int:
        return int(self.nodes.size)

    def index_of(self, t: float) -> int:
        """Index of the node equal to t"""
        k = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[k] - t) > NODE_TOL * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not a grid node")
        return k


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """v_t(x) at every grid node: values[i, x] is the value at nodes[i]"""
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[0] != len(self.grid):
            raise StructuralError(f"{len(self.grid)} nodes but {self.values.shape[0]} value rows")

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def at(self, t: float) -> np.ndarray:
        """v_t by linear interpolation between nodes"""
        if not self.grid.start - NODE_TOL <= t <= self.grid.end + NODE_TOL:
            raise DomainError(f"t={t} outside [{self.grid.start}, {self.grid.end}]")
        return np.array([np.interp(t, self.grid.nodes, self.values[:, x]) for x in range(self.n)])

    def initial(self) -> np.ndarray:
        return self.values[0].copy()

    def check_bound(self, bound: float, tol: float = 1e-6) -> bool:
        """All entries finite and within T||c|| + ||f|| (plus tol)"""
        return bool(np.all(np.isfinite(self.values)) and np.max(np.abs(self.values)) <= bound + tol)

    def rows(self):
        """(t, state, value) in time-major order"""
        for i, t in enumerate(self.grid.nodes):
            for x in range(self.n):
                yield float(t), x, float(self.values[i, x])


def _check_supported(model: MarkovModel, spec: RiskMappingSpec) -> None:
    if not spec.has_multigenerator:
        raise ConfigurationError(
            f"{spec.describe()} has no closed-form multigenerator; "
            "use the discrete-time recursion (dp) for this mapping"
        )
    spec.validate_for(model.n)
    violations = validate_generator(model.schedule, model.n)
    if violations:
        raise DomainError(f"generator is invalid: {violations[0]}")


def _integrate(
    model: MarkovModel,
    spec: RiskMappingSpec,
    grid: TimeGrid,
    terminal: np.ndarray,
    scheme: str,
) -> np.ndarray:
    """March from grid.end back to grid.start; returns the value rows for every node"""
    cost = model.cost
    values = np.empty((len(grid), model.n))
    values[-1] = terminal

    def drift(t: float, G: np.ndarray, v: np.ndarray) -> np.ndarray:
        # time runs backward, so this is -dv/dt
        return cost.rate(t) + support_all(spec, G, v)

    for i in range(len(grid) - 1, 0, -1):
        a, b = float(grid.nodes[i - 1]), float(grid.nodes[i])
        h = b - a
        G = model.schedule.generator_at(0.5 * (a + b))
        v = values[i]
        if scheme == "euler":
            values[i - 1] = v + h * drift(b, G, v)
        else:
            mid = b - 0.5 * h
            k1 = drift(b, G, v)
            k2 = drift(mid, G, v + 0.5 * h * k1)
            k3 = drift(mid, G, v + 0.5 * h * k2)
            k4 = drift(a, G, v + h * k3)
            values[i - 1] = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return values


def solve_ode(
    model: MarkovModel,
    spec: RiskMappingSpec,
    config: Optional[SolverConfig] = None,
    extra_nodes: Iterable[float] = (),
) -> ValueFunction:
    """Integrate backward from v_T = f on the uniform grid plus generator breakpoints"""
    config = config or SolverConfig()
    _check_supported(model, spec)

    start = time.time()
    grid = TimeGrid.build(model.schedule, config.steps, extra=extra_nodes)
    values = _integrate(model, spec, grid, model.cost.terminal, config.scheme)
    result = ValueFunction(grid, values)

    logger.info(
        f"Solved {spec.describe()} with {config.scheme} on {len(grid) - 1} steps "
        f"in {time.time() - start:.2f}s"
    )
    if not result.check_bound(model.value_bound()):
        logger.warning(f"Values exceed the a-priori bound {model.value_bound():.6g}")
    return result


def kolmogorov_reference(model: MarkovModel, t: float = 0.0) -> np.ndarray:
    """
    Risk-neutral value Q_{t,T} f + int_t^T Q_{t,tau} c_tau dtau.

    The integrand is smooth between generator breakpoints and cost knots, so each
    such segment gets composite Simpson with transition matrices marched by one
    matrix exponential per segment.
    """
    T = model.horizon
    if not 0.0 <= t <= T:
        raise DomainError(f"t={t} outside [0, {T}]")

    knots = {t, T}
    knots.update(float(b) for b in model.schedule.breakpoints if t < b < T)
    knots.update(float(c) for c in model.cost.times if t < c < T)
    knots = sorted(knots)

    Q = np.eye(model.n)
    running = np.zeros(model.n)
    for a, b in zip(knots[:-1], knots[1:]):
        G = model.schedule.generator_at(0.5 * (a + b))
        taus = np.linspace(a, b, SIMPSON_INTERVALS + 1)
        step = expm((taus[1] - taus[0]) * G)
        samples = np.empty((taus.size, model.n))
        current = Q
        for k, tau in enumerate(taus):
            if k:
                current = current @ step
            samples[k] = current @ model.cost.rate(tau)
        running += simpson(samples, x=taus, axis=0)
        Q = Q @ expm((b - a) * G)
    return Q @ model.cost.terminal + running


def semigroup_check(
    model: MarkovModel,
    spec: RiskMappingSpec,
    config: Optional[SolverConfig] = None,
    t: float = 0.0,
    r: Optional[float] = None,
) -> float:
    """max_x |v_t(x) - w_t(x)| where w restarts the backward equation on [t, r] from v_r"""
    config = config or SolverConfig()
    r = model.horizon if r is None else r
    if not 0.0 <= t <= r <= model.horizon:
        raise DomainError(f"need 0 <= t <= r <= T, got t={t}, r={r}, T={model.horizon}")
    if t == r:
        return 0.0

    full = solve_ode(model, spec, config, extra_nodes=(t, r))
    v_r = full.values[full.grid.index_of(r)]
    v_t = full.values[full.grid.index_of(t)]

    grid = TimeGrid.build(model.schedule, config.steps, start=t, end=r)
    restart = _integrate(model, spec, grid, v_r, config.scheme)
    gap = float(np.max(np.abs(v_t - restart[0])))
    logger.info(f"Semigroup check on [{t}, {r}]: {gap:.3g}")
    return gap


def delta_bound(
    model: MarkovModel,
    spec: RiskMappingSpec,
    config: SolverConfig,
    t: float,
    r: float,
) -> float:
    """L p K_c lambda^(1/p) / (p + 1) * (r - t)^((p + 1)/p), the short-interval error bound"""
    if config.lipschitz is None:
        raise ConfigurationError("delta_bound needs a Lipschitz constant (--lipschitz)")
    if not 0.0 <= t <= r <= model.horizon:
        raise DomainError(f"need 0 <= t <= r <= T, got t={t}, r={r}")

    p = config.p_order
    k_c = model.cost.spread()
    lam = model.schedule.max_off_diagonal_rate()
    bound = config.lipschitz * p * k_c * lam ** (1.0 / p) / (p + 1.0) * (r - t) ** ((p + 1.0) / p)
    logger.debug(f"delta_bound for {spec.describe()}: K_c={k_c:.6g} lambda={lam:.6g} -> {bound:.6g}")
    return float(bound)


def self_errors(
    model: MarkovModel, spec: RiskMappingSpec, scheme: str, steps: List[int]
) -> List[float]:
    """||v^(N) - v^(2N)|| at t = 0 for each N, the step-halving self-error"""
    errors = []
    for n_steps in steps:
        coarse = solve_ode(model, spec, SolverConfig(scheme=scheme, steps=n_steps))
        fine = solve_ode(model, spec, SolverConfig(scheme=scheme, steps=2 * n_steps))
        errors.append(float(np.max(np.abs(coarse.initial() - fine.initial()))))
    return errors
