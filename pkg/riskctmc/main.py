"""
CLI entry point for riskctmc.
Usage: python -m riskctmc <command> --model configs/two_state.json [options]
"""

import sys
import argparse
import logging
from typing import List, Optional, Sequence

from riskctmc import __version__
from riskctmc.backward_solver import delta_bound, solve_ode
from riskctmc.config import CheckConfig, RiskCtmcConfig, SolverConfig, SimulationConfig, load_config
from riskctmc.discrete_approx import convergence_study, dp_recursion, REFERENCE_REFINEMENT
from riskctmc.errors import ConfigurationError, RiskCtmcError
from riskctmc.markov_core import simulate_costs, validate_generator
from riskctmc.model_io import load_model
from riskctmc.suites import run_checks
from riskctmc.utils import Colors, console, convergence_table, print_banner, suite_table, write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 4

DEFAULT_LADDER = (10, 20, 40, 80, 160)


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    """Parse command-line arguments"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="Path to the model JSON file")
    common.add_argument("--out", help="Output CSV path")
    common.add_argument("--config", help="Path to a riskctmc JSON config (defaults come from .env)")
    common.add_argument("--seed", type=int, help="Random seed for simulation and checks")
    common.add_argument("--verbose", action="store_true", help="Enable debug logging")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--scheme", choices=("euler", "rk4"), help="Time-stepping scheme (default: rk4)")
    solver.add_argument("--steps", type=int, help="Number of time steps N")

    parser = argparse.ArgumentParser(
        description="riskctmc - time-consistent risk evaluation on continuous-time Markov chains",
        epilog="Examples:\n"
               "  python -m riskctmc validate --model configs/two_state.json\n"
               "  python -m riskctmc solve --model configs/two_state_avar.json --out values.csv\n"
               "  python -m riskctmc converge --model configs/two_piece.json --ladder 10,20,40,80,160",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"riskctmc {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("validate", parents=[common], help="Check the generator and print violations")

    solve = commands.add_parser("solve", parents=[common, solver], help="Solve the backward equation")
    solve.add_argument("--lipschitz", type=float, help="Lipschitz constant L for the short-interval bound")
    solve.add_argument("--p-order", type=float, help="Order p for the short-interval bound (default 1)")

    commands.add_parser("dp", parents=[common, solver], help="Run the discrete-time recursion")

    converge = commands.add_parser("converge", parents=[common, solver], help="DP convergence study")
    converge.add_argument("--ladder", type=_int_list, help="Comma-separated step counts (default 10,20,40,80,160)")

    simulate = commands.add_parser("simulate", parents=[common], help="Monte Carlo path costs")
    simulate.add_argument("--samples", type=int, help="Number of simulated paths")
    simulate.add_argument("--state", default="0", help="Initial state label or index (default 0)")

    check = commands.add_parser("check", parents=[common], help="Run the property-check suites")
    check.add_argument("--samples", type=int, help="Random instances per suite")
    check.add_argument("--eps", type=_float_list, help="Comma-separated epsilon ladder")
    check.add_argument("--fd-out", help="CSV path for the finite-difference quotients")

    return parser


def _given(value, default):
    """Command-line value when one was passed (0 included), else the configured one"""
    return default if value is None else value


def _configure(args: argparse.Namespace) -> RiskCtmcConfig:
    """Load config and apply command-line overrides"""
    config = load_config(args.config)
    if args.verbose:
        config.log_level = "DEBUG"

    solver = config.solver
    config.solver = SolverConfig(
        scheme=_given(getattr(args, "scheme", None), solver.scheme),
        steps=_given(getattr(args, "steps", None), solver.steps),
        lipschitz=_given(getattr(args, "lipschitz", None), solver.lipschitz),
        p_order=_given(getattr(args, "p_order", None), solver.p_order),
    )
    if args.seed is not None:
        config.simulation.seed = args.seed
        config.check.seed = args.seed
    samples = getattr(args, "samples", None)
    if args.command == "simulate" and samples is not None:
        config.simulation = SimulationConfig(samples=samples, seed=config.simulation.seed)
    if args.command == "check":
        config.check = CheckConfig(
            samples=_given(samples, config.check.samples),
            seed=config.check.seed,
            eps_ladder=_given(args.eps, config.check.eps_ladder),
            tolerance=config.check.tolerance,
        )
    return config


def _out(args: argparse.Namespace, default: str) -> str:
    return args.out or default


def _labelled(model, rows):
    """(t, state index, value) rows with the state written as its label"""
    for t, x, value in rows:
        yield t, model.states.labels[x], value


def cmd_validate(args, config) -> int:
    model, spec = load_model(args.model)
    violations = validate_generator(model.schedule, model.n)
    print(Colors.info(f"{model.n} states, horizon {model.horizon:g}, "
                      f"{len(model.schedule.pieces)} generator piece(s), {spec.describe()}"))
    if violations:
        for violation in violations:
            print(Colors.error(str(violation)))
        return EXIT_VALIDATION
    print(Colors.success("Generator is valid"))
    return EXIT_OK


def cmd_solve(args, config) -> int:
    model, spec = load_model(args.model)
    values = solve_ode(model, spec, config.solver)
    count = write_csv(
        _out(args, "values.csv"), ("t", "state", "value"),
        _labelled(model, values.rows()), config.output.float_format,
    )
    if config.solver.lipschitz is not None:
        step = model.horizon / config.solver.steps
        bound = delta_bound(model, spec, config.solver, 0.0, step)
        logger.info(f"Short-interval error bound over one step of {step:g}: {bound:.6g}")
        print(Colors.info(f"Delta bound (one step): {bound:.6g}"))
    print(Colors.success(f"Wrote {count} rows to {_out(args, 'values.csv')}"))
    return EXIT_OK


def cmd_dp(args, config) -> int:
    model, spec = load_model(args.model)
    result = dp_recursion(model, spec, config.solver.steps)
    count = write_csv(
        _out(args, "dp.csv"), ("t", "state", "value"),
        _labelled(model, result.rows()), config.output.float_format,
    )
    print(Colors.success(f"Wrote {count} rows to {_out(args, 'dp.csv')}"))
    return EXIT_OK


def cmd_converge(args, config) -> int:
    model, spec = load_model(args.model)
    if not spec.has_multigenerator:
        raise ConfigurationError(
            f"converge needs a backward-equation reference; {spec.describe()} has no multigenerator"
        )
    ladder = _given(args.ladder, list(DEFAULT_LADDER))
    reference_steps = max(config.solver.steps, REFERENCE_REFINEMENT * max(ladder, default=0))
    reference = solve_ode(model, spec, SolverConfig(scheme=config.solver.scheme, steps=reference_steps))
    report = convergence_study(model, spec, ladder, reference)
    write_csv(
        _out(args, "convergence.csv"), ("N", "sup_error", "empirical_order"),
        report.rows(), config.output.float_format,
    )
    console.print(convergence_table(report.ladder, report.errors, report.orders))
    return EXIT_OK


def cmd_simulate(args, config) -> int:
    model, spec = load_model(args.model)
    label = args.state
    if label not in model.states.labels and label.isdigit():
        label = int(label)
    state = model.states.index(label)
    summary = simulate_costs(model, state, config.simulation.samples, config.simulation.seed)

    def rows():
        total = 0.0
        for i, cost in enumerate(summary.costs, 1):
            total += float(cost)
            yield i, float(cost), total / i

    write_csv(_out(args, "paths.csv"), ("path", "total_cost", "running_mean"), rows(), config.output.float_format)
    print(Colors.info(f"mean={summary.mean:.6g} stderr={summary.stderr:.3g} over {summary.samples} paths"))
    return EXIT_OK


def cmd_check(args, config) -> int:
    model, spec = load_model(args.model)
    run = run_checks(model, spec, config.check)
    write_csv(_out(args, "checks.csv"), ("suite", "status", "checks", "detail"), run.rows(), config.output.float_format)
    if args.fd_out:
        write_csv(
            args.fd_out, ("state", "epsilon", "quotient", "target", "abs_error"),
            run.fd_rows(), config.output.float_format,
        )
    console.print(suite_table(run.results))
    summary = run.get_summary()
    message = f"Pass rate {summary['pass_rate']} in {summary['elapsed_time']}"
    print(Colors.success(message) if run.passed else Colors.error(message))
    return EXIT_OK if run.passed else EXIT_VALIDATION


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "dp": cmd_dp,
    "converge": cmd_converge,
    "simulate": cmd_simulate,
    "check": cmd_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit status"""
    args = build_parser().parse_args(argv)

    try:
        config = _configure(args)
        config.setup_logging()
    except RiskCtmcError as e:
        print(Colors.error(str(e)))
        return e.exit_code

    if args.verbose:
        print_banner()

    try:
        return COMMANDS[args.command](args, config)
    except RiskCtmcError as e:
        logger.debug("Command failed", exc_info=True)
        print(Colors.error(f"{type(e).__name__}: {e}"))
        return e.exit_code
    except KeyboardInterrupt:
        print(f"\n{Colors.warning('Interrupted')}")
        return 130
    except Exception as e:
        logger.debug("Unexpected failure", exc_info=True)
        print(Colors.error(f"Fatal error: {e}"))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
