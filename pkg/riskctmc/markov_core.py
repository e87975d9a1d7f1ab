"""
Finite-state continuous-time Markov chains.
State space, piecewise-constant generator schedules, transition kernels, signed-kernel
calculus (norm, distances, tangent cone at the identity) and path simulation.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import trapezoid
from scipy.linalg import expm

from riskctmc.errors import DomainError, StructuralError

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
STOCHASTIC_TOL = 1e-10

Seed = Union[None, int, np.random.Generator]


def _frozen_array(values: ArrayLike, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise StructuralError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _row_sum_tolerance(matrix: np.ndarray) -> float:
    """1e-12 scaled by the state count and the largest entry"""
    if matrix.size == 0:
        return 0.0
    return ROW_SUM_TOL * matrix.shape[0] * float(np.max(np.abs(matrix)))


@dataclass(frozen=True)
class StateSpace:
    """Ordered, distinct state labels"""
    labels: Tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise StructuralError("state space needs at least one state")
        if len(set(labels)) != len(labels):
            raise StructuralError(f"state labels must be distinct: {list(labels)}")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: Union[str, int]) -> int:
        """Resolve a label (or an in-range integer index) to a state index"""
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            if 0 <= label < self.n:
                return int(label)
            raise DomainError(f"state index {label} outside 0..{self.n - 1}")
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise DomainError(f"unknown state {label!r}; known states: {list(self.labels)}")


@dataclass(frozen=True, eq=False)
class SignedKernel:
    """Signed finite kernel K(y|x); row = source x, column = target y"""
    matrix: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.matrix, 2, "kernel")
        if arr.shape[0] != arr.shape[1]:
            raise StructuralError(f"kernel must be square, got shape {arr.shape}")
        object.__setattr__(self, "matrix", arr)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def row(self, x: int) -> np.ndarray:
        return self.matrix[x]

    def __add__(self, other: "SignedKernel") -> "SignedKernel":
        return SignedKernel(self.matrix + _as_matrix(other))

    def __sub__(self, other: "SignedKernel") -> "SignedKernel":
        return SignedKernel(self.matrix - _as_matrix(other))

    def scaled(self, factor: float) -> "SignedKernel":
        return SignedKernel(factor * self.matrix)

    @classmethod
    def identity(cls, n: int) -> "SignedKernel":
        return cls(np.eye(n))


KernelLike = Union[SignedKernel, ArrayLike]


def _as_matrix(kernel: KernelLike) -> np.ndarray:
    if isinstance(kernel, SignedKernel):
        return kernel.matrix
    return SignedKernel(kernel).matrix


def is_stochastic(matrix: ArrayLike, tol: float = STOCHASTIC_TOL) -> bool:
    """Entries in [0,1] and unit row sums, both within tol"""
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        return False
    if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
        return False
    return bool(np.all(np.abs(arr.sum(axis=1) - 1.0) <= tol))


@dataclass(frozen=True, eq=False)
class StochasticKernel(SignedKernel):
    """Stochastic kernel Q(y|x): every row is a probability measure"""

    def __post_init__(self):
        super().__post_init__()
        if not is_stochastic(self.matrix):
            raise DomainError("matrix is not a stochastic kernel (rows must be probability vectors)")

    def apply(self, values: ArrayLike) -> np.ndarray:
        """(Qv)(x) = sum_y Q(y|x) v(y)"""
        return self.matrix @ np.asarray(values, dtype=float)


@dataclass(frozen=True)
class GeneratorViolation:
    """One broken generator rule; column is None for row-level rules"""
    piece: int
    row: int
    column: Optional[int]
    rule: str
    value: float

    def __str__(self) -> str:
        where = f"piece {self.piece}, row {self.row}"
        if self.column is not None:
            where += f", column {self.column}"
        return f"{where}: {self.rule} (value {self.value:.6g})"


@dataclass(frozen=True, eq=False)
class GeneratorSchedule:
    """
    Piecewise-constant generator t -> G_t.

    breakpoints are 0 = t_0 < t_1 < ... < t_m = T and pieces[k] is active on
    [t_k, t_{k+1}). The last piece is also active at T.
    """
    breakpoints: np.ndarray
    pieces: Tuple[np.ndarray, ...]

    def __post_init__(self):
        breaks = _frozen_array(self.breakpoints, 1, "breakpoints")
        if breaks.size < 2:
            raise StructuralError("schedule needs at least one piece")
        if breaks[0] != 0.0:
            raise StructuralError(f"first breakpoint must be 0, got {breaks[0]}")
        if np.any(np.diff(breaks) <= 0):
            raise StructuralError("breakpoints must be strictly increasing")
        pieces = tuple(_frozen_array(piece, 2, "generator piece") for piece in self.pieces)
        if len(pieces) != breaks.size - 1:
            raise StructuralError(
                f"{breaks.size - 1} intervals but {len(pieces)} generator pieces"
            )
        n = pieces[0].shape[0]
        for k, piece in enumerate(pieces):
            if piece.shape != (n, n):
                raise StructuralError(f"piece {k} has shape {piece.shape}, expected {(n, n)}")
        object.__setattr__(self, "breakpoints", breaks)
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def constant(cls, matrix: ArrayLike, horizon: float) -> "GeneratorSchedule":
        return cls(np.array([0.0, float(horizon)]), (np.asarray(matrix, dtype=float),))

    @classmethod
    def from_pieces(cls, pieces: Sequence[Tuple[float, ArrayLike]]) -> "GeneratorSchedule":
        """Build from (until, matrix) pairs; the last `until` is the horizon"""
        breaks = [0.0] + [float(until) for until, _ in pieces]
        return cls(np.array(breaks), tuple(np.asarray(m, dtype=float) for _, m in pieces))

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n(self) -> int:
        return self.pieces[0].shape[0]

    def piece_index(self, t: float) -> int:
        """Index of the piece active at t (right-continuous; T maps to the last piece)"""
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(k, 0), len(self.pieces) - 1)

    def generator_at(self, t: float) -> np.ndarray:
        return self.pieces[self.piece_index(t)]

    def segments(self, t: float, r: float) -> List[Tuple[float, float, np.ndarray]]:
        """Split [t, r] at breakpoints into (start, end, piece) triples"""
        cuts = [t] + [float(b) for b in self.breakpoints if t < b < r] + [r]
        return [
            (a, b, self.pieces[self.piece_index(a)])
            for a, b in zip(cuts[:-1], cuts[1:])
            if b > a
        ]

    def max_off_diagonal_rate(self) -> float:
        """lambda = max over pieces and x != y of G(y|x), floored at 0"""
        best = 0.0
        for piece in self.pieces:
            off = piece - np.diag(np.diag(piece))
            best = max(best, float(np.max(off)))
        return best


def validate_generator(
    schedule: GeneratorSchedule, n_states: Optional[int] = None
) -> List[GeneratorViolation]:
    """
    Check every piece against the generator rules.

    Returns an empty list when all pieces are valid generators. A dimension mismatch
    against n_states is a structural problem and raises instead.
    """
    if n_states is not None and schedule.n != n_states:
        raise StructuralError(
            f"generator is {schedule.n}x{schedule.n} but the state space has {n_states} states"
        )

    violations: List[GeneratorViolation] = []
    for k, piece in enumerate(schedule.pieces):
        if not np.all(np.isfinite(piece)):
            for x, y in zip(*np.nonzero(~np.isfinite(piece))):
                violations.append(GeneratorViolation(k, int(x), int(y), "entry must be finite", float(piece[x, y])))
            continue
        tol = _row_sum_tolerance(piece)
        for x in range(piece.shape[0]):
            for y in range(piece.shape[1]):
                if y != x and piece[x, y] < 0:
                    violations.append(
                        GeneratorViolation(k, x, y, "off-diagonal rate must be >= 0", float(piece[x, y]))
                    )
            row_sum = float(piece[x].sum())
            if abs(row_sum) > tol:
                violations.append(GeneratorViolation(k, x, None, "row must sum to 0", row_sum))

    if violations:
        logger.debug(f"Generator validation found {len(violations)} violations")
    return violations


def transition_matrix(schedule: GeneratorSchedule, t: float, r: float) -> StochasticKernel:
    """Q_{t,r} as the time-ordered product of exp((b - a) G) over the pieces covering [t, r]"""
    if t > r:
        raise DomainError(f"transition_matrix needs t <= r, got t={t}, r={r}")
    if t < 0 or r > schedule.horizon:
        raise DomainError(f"[{t}, {r}] is outside the horizon [0, {schedule.horizon}]")

    result = np.eye(schedule.n)
    for a, b, piece in schedule.segments(t, r):
        result = result @ expm((b - a) * piece)
    # expm may leave entries of order -1e-17
    np.clip(result, 0.0, 1.0, out=result)
    return StochasticKernel(result)


def generator_fd_errors(schedule: GeneratorSchedule, t: float, taus: Sequence[float]) -> List[float]:
    """max |(Q_{t,t+tau} - I)/tau - G_t| for each tau"""
    G = schedule.generator_at(t)
    identity = np.eye(schedule.n)
    errors = []
    for tau in taus:
        Q = transition_matrix(schedule, t, t + tau).matrix
        errors.append(float(np.max(np.abs((Q - identity) / tau - G))))
    return errors


# ---------------------------------------------------------------------------
# Signed-kernel calculus
# ---------------------------------------------------------------------------

def _rows(kernel: KernelLike) -> np.ndarray:
    """Kernel as a 2-D array; a single signed measure becomes a one-row kernel"""
    if isinstance(kernel, SignedKernel):
        return kernel.matrix
    return np.atleast_2d(np.asarray(kernel, dtype=float))


def kernel_norm(kernel: KernelLike) -> float:
    """sup over |phi| <= 1 and x of sum_y phi(y) K(y|x), i.e. the largest absolute row sum"""
    matrix = _rows(kernel)
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(matrix).sum(axis=1)))


def kernel_distance(first: KernelLike, second: KernelLike) -> float:
    return kernel_norm(_rows(first) - _rows(second))


def point_set_distance(kernel: KernelLike, kernels: Sequence[KernelLike]) -> float:
    """d(K, B) = inf over M in B of ||K - M||; +inf for the empty set"""
    if not kernels:
        return float("inf")
    return min(kernel_distance(kernel, other) for other in kernels)


def hausdorff_distance(first: Sequence[KernelLike], second: Sequence[KernelLike]) -> float:
    """Pompeiu-Hausdorff distance between two finite sets of kernels"""
    if not first and not second:
        return 0.0
    if not first or not second:
        return float("inf")
    one_way = max(point_set_distance(k, second) for k in first)
    other_way = max(point_set_distance(k, first) for k in second)
    return max(one_way, other_way)


@dataclass(frozen=True)
class TangentConeResult:
    """Membership verdict plus the first violated condition, if any"""
    member: bool
    condition: Optional[str] = None
    row: Optional[int] = None
    column: Optional[int] = None

    def __bool__(self) -> bool:
        return self.member


def tangent_cone_membership(kernel: KernelLike) -> TangentConeResult:
    """
    Tangent cone to the stochastic kernels at the identity.

    Conditions, checked in order per row:
      (i)   K(x|x) <= 0
      (ii)  K(y|x) >= 0 for y != x
      (iii) sum_y K(y|x) = 0
    """
    matrix = _as_matrix(kernel)
    tol = _row_sum_tolerance(matrix)
    for x in range(matrix.shape[0]):
        if matrix[x, x] > 0:
            return TangentConeResult(False, "(i) diagonal must be <= 0", x, x)
        for y in range(matrix.shape[1]):
            if y != x and matrix[x, y] < 0:
                return TangentConeResult(False, "(ii) off-diagonal must be >= 0", x, y)
        if abs(matrix[x].sum()) > tol:
            return TangentConeResult(False, "(iii) row must sum to 0", x, None)
    return TangentConeResult(True)


def max_step(kernel: KernelLike) -> float:
    """Largest tau with I + tau K stochastic: (max_x |K(x|x)|)^-1, +inf for K = 0"""
    matrix = _as_matrix(kernel)
    verdict = tangent_cone_membership(matrix)
    if not verdict:
        raise DomainError(f"kernel is not in the tangent cone at I: {verdict.condition} (row {verdict.row})")
    largest = float(np.max(np.abs(np.diag(matrix)))) if matrix.size else 0.0
    if largest == 0.0:
        return float("inf")
    return 1.0 / largest


# ---------------------------------------------------------------------------
# Costs and the model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CostSpec:
    """
    Running cost rate c_t(x), piecewise-linear in t between the declared times,
    and terminal cost f(x).
    """
    times: np.ndarray
    values: np.ndarray
    terminal: np.ndarray

    def __post_init__(self):
        times = _frozen_array(self.times, 1, "cost times")
        values = _frozen_array(self.values, 2, "cost values")
        terminal = _frozen_array(self.terminal, 1, "terminal cost")
        if times.size < 1:
            raise StructuralError("running cost needs at least one time point")
        if np.any(np.diff(times) <= 0):
            raise StructuralError("cost times must be strictly increasing")
        if values.shape[0] != times.size:
            raise StructuralError(f"{times.size} cost times but {values.shape[0]} value rows")
        if values.shape[1] != terminal.size:
            raise StructuralError(
                f"running cost has {values.shape[1]} states, terminal cost has {terminal.size}"
            )
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(terminal))):
            raise StructuralError("cost values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "terminal", terminal)

    @classmethod
    def constant(cls, rate: ArrayLike, terminal: ArrayLike) -> "CostSpec":
        rate = np.asarray(rate, dtype=float)
        return cls(np.array([0.0]), rate[np.newaxis, :], np.asarray(terminal, dtype=float))

    @property
    def n(self) -> int:
        return self.terminal.size

    def rate(self, t: float) -> np.ndarray:
        """c_t(.) by linear interpolation, held constant outside the declared times"""
        if self.times.size == 1:
            return self.values[0].copy()
        return np.array([np.interp(t, self.times, self.values[:, x]) for x in range(self.n)])

    def integrate(self, x: int, a: float, b: float) -> float:
        """Exact integral of c_tau(x) over [a, b]"""
        if b <= a:
            return 0.0
        inner = self.times[(self.times > a) & (self.times < b)]
        knots = np.concatenate(([a], inner, [b]))
        heights = np.interp(knots, self.times, self.values[:, x])
        return float(trapezoid(heights, knots))

    def integrate_all(self, a: float, b: float) -> np.ndarray:
        return np.array([self.integrate(x, a, b) for x in range(self.n)])

    def sup_norm(self) -> float:
        """max over declared times and states of |c|; exact for piecewise-linear c"""
        return float(np.max(np.abs(self.values)))

    def spread(self) -> float:
        """K_c = max over x, y, tau of |c_tau(y) - c_tau(x)|"""
        return float(np.max(self.values.max(axis=1) - self.values.min(axis=1)))

    def validate_horizon(self, horizon: float) -> None:
        if self.times.size > 1 and (self.times[0] > 0 or self.times[-1] < horizon):
            raise StructuralError(
                f"cost times [{self.times[0]}, {self.times[-1]}] must cover [0, {horizon}]"
            )


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """States, generator schedule and costs of one evaluation problem"""
    states: StateSpace
    schedule: GeneratorSchedule
    cost: CostSpec

    def __post_init__(self):
        n = self.states.n
        if self.schedule.n != n:
            raise StructuralError(f"generator has {self.schedule.n} states, state space has {n}")
        if self.cost.n != n:
            raise StructuralError(f"cost has {self.cost.n} states, state space has {n}")
        self.cost.validate_horizon(self.schedule.horizon)

    @property
    def n(self) -> int:
        return self.states.n

    @property
    def horizon(self) -> float:
        return self.schedule.horizon

    def value_bound(self) -> float:
        """T ||c|| + ||f||, the a-priori bound on any coherent evaluation"""
        return self.horizon * self.cost.sup_norm() + float(np.max(np.abs(self.cost.terminal)))


def random_model(
    n: int,
    seed: Seed = None,
    horizon: float = 1.0,
    rate_scale: float = 1.0,
    cost_points: int = 5,
    pieces: int = 1,
) -> MarkovModel:
    """Random valid model: uniform rates, piecewise-linear costs in [0,1], terminal in [0,1]"""
    rng = np.random.default_rng(seed)
    generators = []
    for _ in range(pieces):
        G = rng.uniform(0.0, rate_scale, size=(n, n))
        np.fill_diagonal(G, 0.0)
        np.fill_diagonal(G, -G.sum(axis=1))
        generators.append(G)
    breaks = np.linspace(0.0, horizon, pieces + 1)
    times = np.linspace(0.0, horizon, cost_points)
    return MarkovModel(
        states=StateSpace(tuple(f"s{i}" for i in range(n))),
        schedule=GeneratorSchedule(breaks, tuple(generators)),
        cost=CostSpec(times, rng.uniform(0.0, 1.0, size=(cost_points, n)), rng.uniform(0.0, 1.0, size=n)),
    )


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathSample:
    """One path on [start, end]: states[k] is held from jump_times[k-1] (or start)"""
    start: float
    end: float
    initial_state: int
    jump_times: Tuple[float, ...] = ()
    states: Tuple[int, ...] = ()
    running_cost: float = 0.0

    def __post_init__(self):
        if not self.states:
            object.__setattr__(self, "states", (self.initial_state,))
        if len(self.states) != len(self.jump_times) + 1:
            raise StructuralError("a path visits exactly one more state than it has jumps")
        if self.states[0] != self.initial_state:
            raise StructuralError("first visited state must be the initial state")
        times = np.asarray(self.jump_times, dtype=float)
        if times.size and (np.any(np.diff(times) <= 0) or times[0] < self.start or times[-1] > self.end):
            raise StructuralError("jump times must be strictly increasing within [start, end]")

    @property
    def final_state(self) -> int:
        return self.states[-1]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


def simulate_path(
    schedule: GeneratorSchedule,
    cost: CostSpec,
    t: float,
    r: float,
    xi: int,
    seed: Seed = None,
) -> PathSample:
    """
    Sample X on [t, r] from X_t = xi.

    Each generator piece is uniformized at its largest exit rate: candidate events
    arrive as a Poisson stream at that rate and each is accepted with probability
    exit(x)/rate, then the target is drawn from the off-diagonal row. The running
    cost is the exact integral of the interpolated c along the path.
    """
    if t > r or t < 0 or r > schedule.horizon:
        raise DomainError(f"[{t}, {r}] is not a sub-interval of [0, {schedule.horizon}]")
    if not 0 <= xi < schedule.n:
        raise DomainError(f"initial state {xi} outside 0..{schedule.n - 1}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    state = int(xi)
    jump_times: List[float] = []
    states: List[int] = [state]
    total = 0.0
    held_since = t

    for a, b, piece in schedule.segments(t, r):
        exit_rates = -np.diag(piece)
        bound = float(np.max(exit_rates))
        if bound <= 0:
            continue
        now = a
        while True:
            now += rng.exponential(1.0 / bound)
            if now >= b:
                break
            if rng.random() * bound >= exit_rates[state]:
                continue
            weights = np.clip(piece[state], 0.0, None)
            weights[state] = 0.0
            target = int(rng.choice(schedule.n, p=weights / weights.sum()))
            total += cost.integrate(state, held_since, now)
            held_since = now
            jump_times.append(now)
            states.append(target)
            state = target

    total += cost.integrate(state, held_since, r)
    return PathSample(t, r, int(xi), tuple(jump_times), tuple(states), total)


@dataclass(frozen=True)
class MonteCarloSummary:
    """Total path costs (running + terminal) with their sample mean and standard error"""
    costs: np.ndarray = field(repr=False)
    mean: float
    stderr: float

    @property
    def samples(self) -> int:
        return int(self.costs.size)


def simulate_costs(model: MarkovModel, x: int, samples: int, seed: Seed = None, t: float = 0.0) -> MonteCarloSummary:
    """Monte Carlo estimate of the risk-neutral value v_t(x)"""
    if samples < 1:
        raise DomainError(f"sample count must be positive, got {samples}")
    rng = np.random.default_rng(seed)
    costs = np.empty(samples)
    for i in range(samples):
        path = simulate_path(model.schedule, model.cost, t, model.horizon, x, rng)
        costs[i] = path.running_cost + model.cost.terminal[path.final_state]
    stderr = float(costs.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("nan")
    logger.info(f"Simulated {samples} paths from state {x}: mean={costs.mean():.6g} stderr={stderr:.3g}")
    return MonteCarloSummary(costs, float(costs.mean()), stderr)
