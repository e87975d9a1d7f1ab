"""
Configuration management for riskctmc.
Centralizes solver, simulation, check and output settings.
"""

import os
from dataclasses import dataclass, field, asdict
from typing import Optional, Tuple
import json
import logging
from pathlib import Path

from dotenv import load_dotenv

from riskctmc.errors import ConfigurationError

SCHEMES = ("euler", "rk4")


@dataclass
class SolverConfig:
    """Backward ODE solver configuration"""
    scheme: str = "rk4"
    steps: int = 1000
    lipschitz: Optional[float] = None  # only used by delta_bound
    p_order: float = 1.0

    def __post_init__(self):
        self.scheme = self.scheme.lower()
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"steps must be a positive integer, got {self.steps}")
        self.steps = int(self.steps)
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ConfigurationError(f"lipschitz constant must be > 0, got {self.lipschitz}")
        if not self.p_order >= 1:
            raise ConfigurationError(f"p_order must be >= 1, got {self.p_order}")


@dataclass
class SimulationConfig:
    """Monte Carlo path simulation"""
    samples: int = 10000
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigurationError(f"samples must be positive, got {self.samples}")


@dataclass
class CheckConfig:
    """Property-check suites"""
    samples: int = 1000
    seed: Optional[int] = 0
    eps_ladder: Tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5)
    tolerance: float = 1e-8

    def __post_init__(self):
        self.eps_ladder = tuple(float(e) for e in self.eps_ladder)
        if self.samples < 1:
            raise ConfigurationError(f"samples must be positive, got {self.samples}")
        if not self.eps_ladder or any(e <= 0 for e in self.eps_ladder):
            raise ConfigurationError(f"epsilon ladder must be non-empty and positive, got {self.eps_ladder}")


@dataclass
class OutputConfig:
    """CSV artifact formatting"""
    float_format: str = ".12g"


@dataclass
class RiskCtmcConfig:
    """Complete riskctmc configuration"""
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    @classmethod
    def from_file(cls, config_path: str = "riskctmc.json") -> 'RiskCtmcConfig':
        """Load configuration from JSON file; a missing file yields (and saves) the defaults"""
        path = Path(config_path)

        if not path.exists():
            config = cls.default()
            config.save(config_path)
            return config

        with open(path, 'r') as f:
            data = json.load(f)

        try:
            return cls(
                solver=SolverConfig(**data.get('solver', {})),
                simulation=SimulationConfig(**data.get('simulation', {})),
                check=CheckConfig(**data.get('check', {})),
                output=OutputConfig(**data.get('output', {})),
                log_level=data.get('log_level', 'INFO'),
                log_file=data.get('log_file'),
            )
        except TypeError as e:
            raise ConfigurationError(f"{config_path}: {e}") from e

    @classmethod
    def default(cls) -> 'RiskCtmcConfig':
        return cls()

    @classmethod
    def from_env(cls, env_file: Optional[str] = None) -> 'RiskCtmcConfig':
        """Defaults overridden by RISKCTMC_* variables (read from .env when present)"""
        load_dotenv(env_file)
        config = cls.default()

        if os.getenv("RISKCTMC_LOG_LEVEL"):
            config.log_level = os.environ["RISKCTMC_LOG_LEVEL"].upper()
        if os.getenv("RISKCTMC_LOG_FILE"):
            config.log_file = os.environ["RISKCTMC_LOG_FILE"]

        try:
            if os.getenv("RISKCTMC_SCHEME") or os.getenv("RISKCTMC_STEPS"):
                config.solver = SolverConfig(
                    scheme=os.getenv("RISKCTMC_SCHEME", config.solver.scheme),
                    steps=int(os.getenv("RISKCTMC_STEPS", config.solver.steps)),
                )
            if os.getenv("RISKCTMC_SEED"):
                seed = int(os.environ["RISKCTMC_SEED"])
                config.simulation.seed = seed
                config.check.seed = seed
        except ValueError as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"bad RISKCTMC_* environment value: {e}") from e
        return config

    def save(self, config_path: str = "riskctmc.json") -> None:
        """Save configuration to JSON file"""
        data = asdict(self)
        data['check']['eps_ladder'] = list(self.check.eps_ladder)

        with open(config_path, 'w') as f:
            json.dump(data, f, indent=2)

    def setup_logging(self) -> None:
        """Configure logging based on settings"""
        level = getattr(logging, self.log_level.upper(), None)
        if not isinstance(level, int):
            raise ConfigurationError(f"unknown log level {self.log_level!r}")

        handlers = []
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        handlers.append(console_handler)

        if self.log_file:
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setLevel(logging.DEBUG)  # Always log everything to file
            file_handler.setFormatter(formatter)
            handlers.append(file_handler)

        logging.basicConfig(level=logging.DEBUG, handlers=handlers, force=True)


def load_config(config_path: Optional[str] = None) -> RiskCtmcConfig:
    """Load configuration from file, or from the environment when no file is given"""
    if config_path is None:
        return RiskCtmcConfig.from_env()
    return RiskCtmcConfig.from_file(config_path)
