"""The coupled geodesic random walk.

Two walkers (X, Y) live at reversed times ``tau'(s) = t1' - s`` and
``tau''(s) = t1'' - s``.  Each step draws one ball-uniform increment, maps
it through the deterministic frame at X, displaces X by the frozen-time
exponential, transports the displacement along the minimizing space-time
curve to Y, and displaces Y likewise.  The tracked scalar is the pair cost
``Lambda_s`` at the current reversed times, whose supermartingale property
is the statistical claim under test.

Walk grids use ``s_n = (n eps^2) ^ S`` with a scaled final partial step.
Each trajectory owns an RNG stream derived from (master_seed, stream_id),
and all its increments are drawn in one batch before stepping, so every
backend consumes the identical randomness and ensembles are reproducible
independently of worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .geometry import (
    ConfigError,
    MetricFamily,
    Point,
    SolverError,
    TangentVec,
)
from .solver import SolverOptions, l0_distance
from .transport import spacetime_transport

__all__ = [
    "TimeSchedule",
    "CouplingPath",
    "RngStream",
    "sample_ball",
    "coupling_step",
    "run_coupling",
    "run_ensemble",
    "resolve_threads",
]

# reference-path solves happen on short windows; a coarse curve grid keeps
# them affordable while staying well inside the step tolerances
_REFERENCE_GRID = 32


@dataclass(frozen=True)
class TimeSchedule:
    """Reversed-time bookkeeping of a coupled walk.

    ``t1_prime < t1_dprime`` are the terminal times; the walk runs in the
    reversed time ``s`` from 0 to ``S`` with step scale ``epsilon``
    (``s_n = (n eps^2) ^ S``, final partial step scaled down).
    """

    t1_prime: float
    t1_dprime: float
    S: float
    epsilon: float

    def __post_init__(self):
        if self.t1_dprime <= self.t1_prime:
            raise ConfigError("need t1_prime < t1_dprime")
        if self.S < 0:
            raise ConfigError("walk horizon S must be non-negative")
        if self.epsilon <= 0:
            raise ConfigError("step scale epsilon must be positive")
        if self.S - self.t1_prime > 1e-12:
            raise ConfigError("tau'(S) = t1_prime - S leaves the flow window")

    def validate_for(self, fam: MetricFamily):
        fam.check_time(self.t1_prime)
        fam.check_time(self.t1_dprime)
        fam.check_time(self.t1_prime - self.S)
        fam.check_time(self.t1_dprime - self.S)

    def tau_prime(self, s: float) -> float:
        return self.t1_prime - s

    def tau_dprime(self, s: float) -> float:
        return self.t1_dprime - s

    @property
    def n_steps(self) -> int:
        if self.S == 0.0:
            return 0
        e2 = self.epsilon * self.epsilon
        return int(math.ceil(self.S / e2 - 1e-12))

    def s_grid(self) -> np.ndarray:
        e2 = self.epsilon * self.epsilon
        grid = np.minimum(np.arange(self.n_steps + 1) * e2, self.S)
        grid[-1] = self.S
        return grid


@dataclass(frozen=True)
class RngStream:
    """Seed bookkeeping for one trajectory.

    Identical ``(master_seed, stream_id)`` reproduce identical draws no
    matter how trajectories are distributed over workers.
    """

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(eq=False)
class CouplingPath:
    """One realized trajectory of the coupled walk.

    ``s``, ``Lambda`` and ``mult_hits`` always cover the full grid;
    position arrays are kept only when the path was run with full
    recording.  ``ok`` is False when a step aborted the trajectory, with
    the reason in ``failure`` and arrays truncated at the last good step.
    """

    schedule: TimeSchedule
    s: np.ndarray
    Lambda: np.ndarray
    mult_hits: np.ndarray
    X: np.ndarray | None = None
    Y: np.ndarray | None = None
    ok: bool = True
    failure: str | None = None

    @property
    def n_steps(self) -> int:
        return self.s.size - 1

    @property
    def total_mult_hits(self) -> int:
        return int(np.sum(self.mult_hits))


def sample_ball(stream, d: int, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the closed unit d-ball.

    Normal direction times a ``U^(1/d)`` radius.  ``stream`` is an
    RngStream or a live Generator; with an RngStream a fresh generator is
    created, so repeated calls repeat the draw.
    """
    if d < 2:
        raise ConfigError("ball dimension must be >= 2")
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    m = 1 if size is None else int(size)
    z = rng.standard_normal((m, d))
    norms = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)
    r = rng.random(m) ** (1.0 / d)
    out = z / norms * r[:, None]
    return out[0] if size is None else out


def _step_scale(d: int, eps: float, h: float) -> float:
    # full step (h = eps^2) displaces by sqrt(2) * eps * sqrt(d+2) * |lam|
    return math.sqrt(2.0 * (d + 2)) * h / eps


def coupling_step(
    fam: MetricFamily,
    schedule: TimeSchedule,
    s: float,
    X: Point,
    Y: Point,
    lam: np.ndarray,
    h: float | None = None,
    opts: SolverOptions | None = None,
):
    """Advance one coupled step from reversed time ``s`` (reference path).

    Returns ``(X_next, Y_next, diagnostics)``.  The fast ensemble driver
    uses the model-specialized kernels instead; this operation composes the
    public geometry ops and is their cross-check.
    """
    t_p = schedule.tau_prime(s)
    t_pp = schedule.tau_dprime(s)
    if h is None:
        h = min(schedule.epsilon**2, schedule.S - s)
    if h <= 0:
        raise ConfigError("step starts at or beyond the walk horizon")
    opts = opts or SolverOptions(n_grid=_REFERENCE_GRID)

    geo = l0_distance(fam, t_p, t_pp, X, Y, opts)
    if not geo.converged:
        raise SolverError(
            f"pair geodesic failed at s={s:.6g} (residual {geo.residual:.3g})"
        )
    frame = fam.frame(t_p, X)
    scale = _step_scale(fam.d, schedule.epsilon, h)
    v_out = scale * (np.asarray(lam, dtype=float) @ frame)
    v_in = spacetime_transport(fam, geo, TangentVec(X, v_out))
    x_next = fam.exp(t_p, TangentVec(X, v_out))
    y_next = fam.exp(t_pp, TangentVec(Y, v_in.components))
    diag = {
        "multiplicity_flag": geo.multiplicity_flag,
        "residual": geo.residual,
        "v0": geo.v0.components,
    }
    return x_next, y_next, diag


def _reference_path(fam, schedule, m_lo, m_hi, lam, opts=None):
    """Step loop built from the public ops; slow, for validation runs."""
    s_grid = schedule.s_grid()
    n = s_grid.size - 1
    X = np.empty((n + 1, fam.ncoords))
    Y = np.empty((n + 1, fam.ncoords))
    Lam = np.empty(n + 1)
    mult = np.zeros(n + 1, dtype=np.int64)
    opts = opts or SolverOptions(n_grid=_REFERENCE_GRID)

    x_pt, y_pt = m_lo, m_hi
    warm = None
    for k in range(n + 1):
        s = s_grid[k]
        probe = l0_distance(
            fam, schedule.tau_prime(s), schedule.tau_dprime(s), x_pt, y_pt, opts
        )
        X[k] = x_pt.coords
        Y[k] = y_pt.coords
        Lam[k] = probe.action
        mult[k] = 1 if probe.multiplicity_flag else 0
        if k == n:
            break
        h = s_grid[k + 1] - s
        step_opts = opts if warm is None else replace(opts, warm_v0=warm)
        x_pt, y_pt, diag = coupling_step(
            fam, schedule, s, x_pt, y_pt, lam[k], h=h, opts=step_opts
        )
        if diag["multiplicity_flag"]:
            mult[k] = 1
        warm = diag["v0"]
    return X, Y, Lam, mult


def _kernel_args(fam, schedule):
    if fam.model_id == "torus":
        return (fam.L, schedule.t1_prime, schedule.t1_dprime, schedule.epsilon)
    if fam.model_id == "sphere":
        return (fam.d, schedule.t1_prime, schedule.t1_dprime, schedule.epsilon)
    raise ConfigError(f"no walk kernel for model {fam.model_id!r}")


def run_coupling(
    fam: MetricFamily,
    schedule: TimeSchedule,
    m_lo: Point,
    m_hi: Point,
    stream: RngStream,
    backend: str | None = None,
    record: str = "full",
    opts: SolverOptions | None = None,
) -> CouplingPath:
    """Run one coupled trajectory.

    ``backend`` is a kernel backend name or ``"reference"`` for the slow
    composed-ops loop; ``record`` is ``"full"`` (keep positions) or
    ``"lambda"`` (keep only the tracked cost).
    """
    schedule.validate_for(fam)
    fam.check_point(m_lo)
    fam.check_point(m_hi)
    if record not in ("full", "lambda"):
        raise ConfigError(f"unknown record mode {record!r}")
    s_grid = schedule.s_grid()
    lam = sample_ball(stream, fam.d, size=schedule.n_steps)
    lam = lam.reshape(schedule.n_steps, fam.d)

    try:
        if backend == "reference":
            X, Y, Lam, mult = _reference_path(fam, schedule, m_lo, m_hi, lam, opts)
        else:
            fn = kernels.path_function(fam.model_id, backend)
            X, Y, Lam, mult = fn(
                *_kernel_args(fam, schedule), s_grid, m_lo.coords, m_hi.coords, lam
            )
    except SolverError as err:
        return CouplingPath(
            schedule,
            s_grid[:1],
            np.full(1, np.nan),
            np.zeros(1, dtype=np.int64),
            ok=False,
            failure=str(err),
        )
    keep = record == "full"
    return CouplingPath(
        schedule,
        s_grid,
        Lam,
        mult,
        X=X if keep else None,
        Y=Y if keep else None,
    )


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit argument, then L0FLOW_THREADS, then cores."""
    if threads is not None:
        n = int(threads)
    else:
        env = os.environ.get("L0FLOW_THREADS")
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def run_ensemble(
    fam: MetricFamily,
    schedule: TimeSchedule,
    initial_pairs,
    master_seed: int,
    n_paths: int,
    threads: int | None = None,
    backend: str | None = None,
    record: str = "lambda",
) -> list[CouplingPath]:
    """Run ``n_paths`` independent trajectories.

    ``initial_pairs`` is one ``(m', m'')`` pair shared by every path or a
    sequence of per-path pairs.  Trajectory ``i`` uses stream id ``i``;
    results are merged in stream order, so output does not depend on the
    worker count.  Raises SolverError if any trajectory aborted.
    """
    if n_paths < 1:
        raise ConfigError("need n_paths >= 1")
    pairs = initial_pairs
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], Point):
        pairs = [pairs] * n_paths
    pairs = list(pairs)
    if len(pairs) == 1:
        pairs = pairs * n_paths
    if len(pairs) != n_paths:
        raise ConfigError("need one initial pair, or one per path")

    def one(i: int) -> CouplingPath:
        m_lo, m_hi = pairs[i]
        return run_coupling(
            fam,
            schedule,
            m_lo,
            m_hi,
            RngStream(master_seed, i),
            backend=backend,
            record=record,
        )

    n_workers = resolve_threads(threads)
    if n_workers == 1:
        paths = [one(i) for i in range(n_paths)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            paths = list(pool.map(one, range(n_paths)))

    failed = [i for i, p in enumerate(paths) if not p.ok]
    if failed:
        head = ", ".join(str(i) for i in failed[:5])
        raise SolverError(
            f"{len(failed)} of {n_paths} trajectories aborted (first: {head}); "
            f"reason[{failed[0]}]: {paths[failed[0]].failure}"
        )
    return paths
