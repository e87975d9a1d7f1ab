"""
Utility functions for CLI colors, tables and CSV artifacts.
"""

import csv
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

from colorama import Fore, Style, init as colorama_init
from rich.console import Console
from rich.table import Table

colorama_init()

console = Console()


class Colors:
    """Terminal color helpers"""
    BLUE = Fore.BLUE
    CYAN = Fore.CYAN
    GREEN = Fore.GREEN
    YELLOW = Fore.YELLOW
    RED = Fore.RED
    END = Style.RESET_ALL
    BOLD = Style.BRIGHT

    @staticmethod
    def success(msg: str) -> str:
        return f"{Colors.GREEN}✓ {msg}{Colors.END}"

    @staticmethod
    def warning(msg: str) -> str:
        return f"{Colors.YELLOW}⚠ {msg}{Colors.END}"

    @staticmethod
    def error(msg: str) -> str:
        return f"{Colors.RED}✗ {msg}{Colors.END}"

    @staticmethod
    def info(msg: str) -> str:
        return f"{Colors.CYAN}ℹ {msg}{Colors.END}"

    @staticmethod
    def progress(msg: str) -> str:
        return f"{Colors.BLUE}→ {msg}{Colors.END}"

    @staticmethod
    def bold(msg: str) -> str:
        return f"{Colors.BOLD}{msg}{Colors.END}"


def print_banner():
    """Print riskctmc banner"""
    banner = f"""{Colors.BOLD}{Colors.CYAN}
╔══════════════════════════════════════════════════════════╗
║     riskctmc - risk evaluation on continuous-time chains ║
╚══════════════════════════════════════════════════════════╝
{Colors.END}"""
    print(banner)


def format_number(value: Any, float_format: str = ".12g") -> str:
    """Fixed formatting for CSV cells; NaN is written as 'nan'"""
    if isinstance(value, float):
        return format(value, float_format)
    return str(value)


def write_csv(
    path: Union[str, Path],
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    float_format: str = ".12g",
) -> int:
    """Write rows under a fixed header; returns the number of data rows"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(cell, float_format) for cell in row])
            count += 1
    return count


def read_csv(path: Union[str, Path]) -> List[dict]:
    """Rows of a CSV artifact as dicts of strings"""
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def convergence_table(ladder: Sequence[int], errors: Sequence[float], orders: Sequence[float]) -> Table:
    table = Table(title="DP convergence against the backward solver")
    table.add_column("N", justify="right")
    table.add_column("sup error", justify="right")
    table.add_column("order", justify="right")
    for N, error, order in zip(ladder, errors, orders):
        table.add_row(str(N), f"{error:.3e}", "-" if order != order else f"{order:.2f}")
    return table


def suite_table(results: Sequence[Any]) -> Table:
    """One row per suite result (name, status, checks, detail)"""
    table = Table(title="Property suites")
    table.add_column("suite")
    table.add_column("status")
    table.add_column("checks", justify="right")
    table.add_column("detail")
    for result in results:
        color = "green" if result.passed else "red"
        table.add_row(result.name, f"[{color}]{result.state.value}[/{color}]", str(result.checks), result.detail)
    return table
