"""
Property-check suites run by `riskctmc check`.
Each suite moves through PENDING → RUNNING → PASSED/FAILED (or SKIPPED) inside a
CheckRun, which collects verdicts and produces the summary.
"""

from enum import Enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple
import time
import logging

import numpy as np

from riskctmc.config import CheckConfig
from riskctmc.errors import RiskCtmcError
from riskctmc.markov_core import MarkovModel, transition_matrix
from riskctmc.multigenerators import (
    FDCheckReport,
    semi_derivative_fd_check,
    support_bruteforce,
    support_function,
)
from riskctmc.risk_mappings import (
    ORACLE_MAX_STATES,
    RiskMappingSpec,
    coherence_check,
    dual_support_bruteforce,
    oracle_is_exact,
    sigma_eval,
)

logger = logging.getLogger(__name__)

CONSISTENCY_TOL = 1e-12


class SuiteState(Enum):
    """Lifecycle of one suite"""
    PENDING = "pending"
    RUNNING = "running"
    PASSED = "passed"
    FAILED = "failed"
    SKIPPED = "skipped"


_TRANSITIONS = {
    SuiteState.PENDING: {SuiteState.RUNNING, SuiteState.SKIPPED},
    SuiteState.RUNNING: {SuiteState.PASSED, SuiteState.FAILED, SuiteState.SKIPPED},
    SuiteState.PASSED: set(),  # Terminal state
    SuiteState.FAILED: set(),  # Terminal state
    SuiteState.SKIPPED: set(),  # Terminal state
}


@dataclass
class SuiteResult:
    name: str
    state: SuiteState = SuiteState.PENDING
    checks: int = 0
    detail: str = ""
    elapsed: float = 0.0

    def transition(self, new_state: SuiteState) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise RiskCtmcError(f"Invalid transition: {self.state.value} → {new_state.value}")
        logger.debug(f"[{self.name}] {self.state.value} → {new_state.value}")
        self.state = new_state

    @property
    def passed(self) -> bool:
        return self.state is not SuiteState.FAILED


class SuiteSkipped(Exception):
    """Raised by a suite that does not apply to the model or mapping"""


@dataclass
class SuiteOutcome:
    ok: bool
    checks: int
    detail: str


@dataclass
class CheckRun:
    """
    Runs suites in order and keeps their results.
    A suite that raises a riskctmc error is recorded as FAILED with the message.
    """
    model: MarkovModel
    spec: RiskMappingSpec
    config: CheckConfig = field(default_factory=CheckConfig)
    results: List[SuiteResult] = field(default_factory=list)
    fd_reports: List[FDCheckReport] = field(default_factory=list)
    start_time: float = field(default_factory=time.time)

    def run(self, name: str, suite: Callable[["CheckRun"], SuiteOutcome]) -> SuiteResult:
        result = SuiteResult(name)
        self.results.append(result)
        result.transition(SuiteState.RUNNING)
        started = time.time()
        try:
            outcome = suite(self)
        except SuiteSkipped as e:
            result.detail = str(e)
            result.transition(SuiteState.SKIPPED)
        except RiskCtmcError as e:
            result.detail = str(e)
            result.transition(SuiteState.FAILED)
        else:
            result.checks = outcome.checks
            result.detail = outcome.detail
            result.transition(SuiteState.PASSED if outcome.ok else SuiteState.FAILED)
        result.elapsed = time.time() - started
        logger.info(f"Suite {name}: {result.state.value} ({result.checks} checks, {result.elapsed:.2f}s)")
        return result

    def run_all(self) -> List[SuiteResult]:
        for name, suite in SUITES:
            self.run(name, suite)
        return self.results

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def rng(self, offset: int) -> np.random.Generator:
        seed = None if self.config.seed is None else self.config.seed + offset
        return np.random.default_rng(seed)

    def get_summary(self) -> Dict[str, object]:
        elapsed = time.time() - self.start_time
        ran = [r for r in self.results if r.state is not SuiteState.SKIPPED]
        pass_rate = 0.0
        if ran:
            pass_rate = sum(r.state is SuiteState.PASSED for r in ran) / len(ran) * 100
        return {
            "spec": self.spec.describe(),
            "suites": len(self.results),
            "skipped": len(self.results) - len(ran),
            "pass_rate": f"{pass_rate:.1f}%",
            "elapsed_time": f"{elapsed:.2f}s",
            "passed": self.passed,
        }

    def rows(self):
        for r in self.results:
            yield r.name, r.state.value, r.checks, r.detail

    def fd_rows(self):
        for report in self.fd_reports:
            for row in report.rows:
                yield report.x, row.epsilon, row.quotient, row.target, row.abs_error


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------

def _short_step_rows(run: CheckRun) -> np.ndarray:
    """Rows of Q_{0,h} with h = T/10, the measures the one-step checks use"""
    Q = transition_matrix(run.model.schedule, 0.0, run.model.horizon / 10.0).matrix
    return Q / Q.sum(axis=1, keepdims=True)


def coherence_suite(run: CheckRun) -> SuiteOutcome:
    rows = _short_step_rows(run)
    checks, failed = 0, []
    for x in range(run.model.n):
        report = coherence_check(run.spec, x, rows[x], samples=run.config.samples, seed=run.config.seed)
        checks += sum(report.checks.values())
        if not report.passed:
            failed.append(f"state {x}: {report.counterexample['axiom']}")
    return SuiteOutcome(not failed, checks, "; ".join(failed) or "no counterexamples")


def state_consistency_suite(run: CheckRun) -> SuiteOutcome:
    n = run.model.n
    rng = run.rng(1)
    worst = 0.0
    for _ in range(run.config.samples):
        v = rng.normal(0.0, 1.0, size=n)
        x = int(rng.integers(n))
        dirac = np.zeros(n)
        dirac[x] = 1.0
        worst = max(worst, abs(sigma_eval(run.spec, x, dirac, v) - v[x]))
    return SuiteOutcome(worst <= CONSISTENCY_TOL, run.config.samples, f"max |sigma(x, delta_x, v) - v(x)| = {worst:.3g}")


def primal_dual_suite(run: CheckRun) -> SuiteOutcome:
    n = run.model.n
    if n > ORACLE_MAX_STATES:
        raise SuiteSkipped(f"dual oracle needs at most {ORACLE_MAX_STATES} states")
    rng = run.rng(2)
    exact = oracle_is_exact(run.spec)
    samples = run.config.samples if exact else min(run.config.samples, 50)
    worst = 0.0
    for _ in range(samples):
        m = rng.dirichlet(np.ones(n))
        v = rng.normal(0.0, 1.0, size=n)
        x = int(rng.integers(n))
        primal = sigma_eval(run.spec, x, m, v)
        dual = dual_support_bruteforce(run.spec, x, m, v)
        gap = abs(primal - dual) if exact else max(dual - primal, 0.0)
        worst = max(worst, gap)
    kind = "|primal - dual|" if exact else "dual excess over primal"
    return SuiteOutcome(worst <= run.config.tolerance, samples, f"max {kind} = {worst:.3g}")


def _random_direction(rng: np.random.Generator, n: int) -> np.ndarray:
    K = rng.uniform(0.0, 2.0, size=(n, n))
    np.fill_diagonal(K, 0.0)
    np.fill_diagonal(K, -K.sum(axis=1))
    return K


def multigenerator_suite(run: CheckRun) -> SuiteOutcome:
    n = run.model.n
    if not run.spec.has_multigenerator:
        raise SuiteSkipped(f"{run.spec.describe()} has no closed-form multigenerator")
    if n > ORACLE_MAX_STATES:
        raise SuiteSkipped(f"vertex oracle needs at most {ORACLE_MAX_STATES} states")
    rng = run.rng(3)
    directions = list(run.model.schedule.pieces)
    worst = 0.0
    checks = 0
    for k in range(run.config.samples):
        K = directions[k] if k < len(directions) else _random_direction(rng, n)
        v = rng.normal(0.0, 1.0, size=n)
        x = int(rng.integers(n))
        closed = support_function(run.spec, x, K, v)
        brute = support_bruteforce(run.spec, x, K, v)
        worst = max(worst, abs(closed - brute) / max(1.0, abs(brute)))
        checks += 1
    return SuiteOutcome(worst <= 1e-10, checks, f"max relative gap to vertex oracle = {worst:.3g}")


def _fd_direction(row: np.ndarray, x: int) -> np.ndarray:
    """Generator row rescaled to unit exit rate; the semi-derivative is positively homogeneous"""
    exit_rate = abs(float(row[x]))
    return row if exit_rate == 0 else row / exit_rate


def semi_derivative_suite(run: CheckRun) -> SuiteOutcome:
    G = run.model.schedule.generator_at(0.0)
    rng = run.rng(4)
    ladder = run.config.eps_ladder
    expect_limit = run.spec.has_multigenerator
    mismatched: List[Tuple[int, str]] = []
    run.fd_reports.clear()
    for x in range(run.model.n):
        K = _fd_direction(G[x], x)
        # v(x) strictly lowest so every mapping sees upside from x
        v = rng.uniform(0.0, 1.0, size=run.model.n)
        v[x] = -1.0
        report = semi_derivative_fd_check(run.spec, x, K, v, ladder)
        run.fd_reports.append(report)
        if report.converged != expect_limit and G[x, x] != 0:
            mismatched.append((x, report.reason))
    verdict = "quotients converge" if expect_limit else "quotients diverge (not semi-differentiable)"
    detail = "; ".join(f"state {x}: {reason}" for x, reason in mismatched) or verdict
    return SuiteOutcome(not mismatched, run.model.n * len(ladder), detail)


SUITES: List[Tuple[str, Callable[[CheckRun], SuiteOutcome]]] = [
    ("coherence", coherence_suite),
    ("state_consistency", state_consistency_suite),
    ("primal_dual", primal_dual_suite),
    ("multigenerator", multigenerator_suite),
    ("semi_derivative", semi_derivative_suite),
]


def run_checks(model: MarkovModel, spec: RiskMappingSpec, config: Optional[CheckConfig] = None) -> CheckRun:
    """Run every suite against the model's risk mapping"""
    run = CheckRun(model, spec, config or CheckConfig())
    run.run_all()
    return run
