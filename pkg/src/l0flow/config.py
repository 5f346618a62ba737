"""Experiment configuration: a flat record covering every subcommand.

Configs round-trip through JSON (``parse(emit(c)) == c``); the CLI merges a
config file with explicit flag overrides before validation.  Fields that a
given experiment does not use stay None.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .coupling import TimeSchedule
from .flows import make_flow
from .geometry import ConfigError, MetricFamily
from .solver import SolverOptions

__all__ = ["ExperimentConfig"]

EXPERIMENTS = (
    "distance",
    "geodesic",
    "transport",
    "couple",
    "verify-sm",
    "verify-mono",
    "invariants",
)

_STOCHASTIC = ("couple", "verify-sm", "verify-mono")


@dataclass
class ExperimentConfig:
    experiment: str
    model: str
    d: int = 2
    T: float | None = None
    L: float | None = None
    # window / schedule
    tp: float | None = None
    tq: float | None = None
    t1_prime: float | None = None
    t1_dprime: float | None = None
    S: float | None = None
    epsilon: float | None = None
    # points and velocities, in model coordinates
    p: list[float] | None = None
    q: list[float] | None = None
    v0: list[float] | None = None
    # solver
    method: str = "auto"
    n_grid: int = 128
    n_starts: int = 8
    # ensemble / statistics
    n_paths: int | None = None
    master_seed: int | None = None
    n_points: int | None = None
    n_checkpoints: int = 10
    n_boot: int = 200
    phi: list[str] = field(default_factory=lambda: ["identity"])
    combined: bool = False
    # execution
    threads: int | None = None
    backend: str | None = None
    seed: int | None = None
    quick: bool = False
    # outputs
    out_csv: str | None = None
    out_json: str | None = None

    # ---- construction ----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as err:
            raise ConfigError(str(err)) from None
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"malformed config JSON: {err}") from None
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # ---- validation and builders ------------------------------------------

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.model not in ("torus", "sphere"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.experiment in _STOCHASTIC and self.master_seed is None:
            raise ConfigError(f"{self.experiment} needs a master_seed")
        if self.experiment in _STOCHASTIC:
            for name in ("t1_prime", "t1_dprime", "S", "epsilon"):
                if getattr(self, name) is None:
                    raise ConfigError(f"{self.experiment} needs schedule field {name}")
        if self.experiment in ("distance", "geodesic", "transport"):
            if self.tp is None or self.tq is None:
                raise ConfigError(f"{self.experiment} needs --tp and --tq")

    def horizon(self) -> float:
        if self.T is not None:
            return self.T
        if self.model == "torus":
            # the static flow accepts any horizon covering the queried times
            times = [x for x in (self.tq, self.t1_dprime, 1.0) if x is not None]
            return max(times)
        raise ConfigError("sphere experiments need an explicit horizon T")

    def make_fam(self) -> MetricFamily:
        return make_flow(self.model, self.d, self.horizon(), L=self.L)

    def make_schedule(self) -> TimeSchedule:
        return TimeSchedule(self.t1_prime, self.t1_dprime, self.S, self.epsilon)

    def make_solver_opts(self) -> SolverOptions:
        return SolverOptions(
            method=self.method, n_grid=self.n_grid, n_starts=self.n_starts
        )
