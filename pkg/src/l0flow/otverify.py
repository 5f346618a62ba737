"""Statistical verification: assignment-based transport costs, the
supermartingale hypothesis test, and the cost-monotonicity experiment.

Empirical measures are uniform over n points, so optimal couplings are
permutations and the transport cost is an exact assignment solve.  The
tests are one-sided: the theory fixes only signs (non-positive drift of the
pair cost, non-increasing optimal cost), so acceptance is expressed through
confidence bounds computed from the runs themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import norm

from .coupling import CouplingPath, TimeSchedule, run_ensemble
from .geometry import ConfigError, MetricFamily, Point
from .solver import SolverOptions, l0_distance

__all__ = [
    "TransportPlan",
    "PhiSpec",
    "l0_cost_matrix",
    "optimal_assignment",
    "initial_plan_pairs",
    "sample_marginals",
    "supermartingale_test",
    "monotonicity_experiment",
]

# RNG stream keys outside the uint32 range of trajectory ids
_BOOT_KEY = 2**32
MU1_KEY = 2**32 + 1
MU2_KEY = 2**32 + 2
Z99 = float(norm.ppf(0.99))


def _keyed_rng(master_seed: int, key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(key,)))
    )


def sample_marginals(fam, n: int, master_seed: int):
    """Two independent uniform n-point clouds, seeded off the master seed
    on streams disjoint from every trajectory stream."""
    g1 = _keyed_rng(master_seed, MU1_KEY)
    g2 = _keyed_rng(master_seed, MU2_KEY)
    xs = np.array([fam.random_point(g1).coords for _ in range(n)])
    ys = np.array([fam.random_point(g2).coords for _ in range(n)])
    return xs, ys


@dataclass(frozen=True)
class TransportPlan:
    """An optimal matching between two n-point empirical measures."""

    n: int
    assignment: np.ndarray
    cost: float

    def __post_init__(self):
        perm = np.asarray(self.assignment)
        if sorted(perm.tolist()) != list(range(self.n)):
            raise ConfigError("assignment must be a permutation of 0..n-1")


@dataclass(frozen=True)
class PhiSpec:
    """A concave non-decreasing rescaling of the cost."""

    kind: str
    cap: float | None = None

    @classmethod
    def identity(cls) -> "PhiSpec":
        return cls("identity")

    @classmethod
    def capped(cls, c: float) -> "PhiSpec":
        return cls("capped", float(c))

    @classmethod
    def exp_saturating(cls) -> "PhiSpec":
        return cls("exp_saturating")

    @property
    def label(self) -> str:
        if self.kind == "capped":
            return f"capped({self.cap:g})"
        return self.kind

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "capped":
            return np.minimum(x, self.cap)
        if self.kind == "exp_saturating":
            return 1.0 - np.exp(-x)
        raise ConfigError(f"unknown phi kind {self.kind!r}")


def _coords_stack(fam, pts) -> np.ndarray:
    if isinstance(pts, np.ndarray) and pts.ndim == 2:
        return pts
    return np.array([fam.check_point(p) for p in pts])


def l0_cost_matrix(
    fam: MetricFamily,
    t_lo: float,
    t_hi: float,
    xs,
    ys,
    phi: PhiSpec | None = None,
    opts: SolverOptions | None = None,
) -> np.ndarray:
    """Matrix of ``phi(cost(x_i, y_j))`` over two point sets.

    Uses the model's closed form when available, the generic solver
    otherwise (failures report the offending entry).
    """
    phi = phi or PhiSpec.identity()
    xs = _coords_stack(fam, xs)
    ys = _coords_stack(fam, ys)
    raw = None
    if opts is None or opts.method == "auto":
        raw = fam.pairwise_l0(t_lo, t_hi, xs, ys)
    if raw is None:
        raw = np.empty((xs.shape[0], ys.shape[0]))
        for i, xc in enumerate(xs):
            for j, yc in enumerate(ys):
                res = l0_distance(
                    fam,
                    t_lo,
                    t_hi,
                    Point(fam.model_id, xc),
                    Point(fam.model_id, yc),
                    opts,
                )
                if not res.converged:
                    raise ConfigError(
                        f"cost solve failed at entry ({i}, {j}); "
                        f"residual {res.residual:.3g}"
                    )
                raw[i, j] = res.action
    return phi.apply(raw)


def optimal_assignment(cost_matrix: np.ndarray) -> TransportPlan:
    """Exact minimum-mean matching over permutations."""
    mat = np.asarray(cost_matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError("cost matrix must be square")
    if not np.all(np.isfinite(mat)):
        raise ConfigError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(mat)
    perm = np.empty(mat.shape[0], dtype=np.int64)
    perm[rows] = cols
    cost = float(mat[rows, cols].mean())
    return TransportPlan(mat.shape[0], perm, cost)


def initial_plan_pairs(
    fam: MetricFamily,
    schedule: TimeSchedule,
    xs,
    ys,
    phi: PhiSpec | None = None,
) -> tuple[list[tuple[Point, Point]], TransportPlan]:
    """Optimally match two point clouds at s = 0 and return the paired
    starting configuration for the coupled ensemble."""
    mat = l0_cost_matrix(fam, schedule.t1_prime, schedule.t1_dprime, xs, ys, phi)
    plan = optimal_assignment(mat)
    xs = _coords_stack(fam, xs)
    ys = _coords_stack(fam, ys)
    pairs = [
        (Point(fam.model_id, xs[i]), Point(fam.model_id, ys[plan.assignment[i]]))
        for i in range(plan.n)
    ]
    return pairs, plan


# ---- supermartingale test ----------------------------------------------------


def _one_sided_stats(mean: float, se: float) -> tuple[float, float]:
    """(z score, one-sided p-value) of H0: drift <= 0, degeneracy-safe."""
    if se == 0.0:
        return (0.0, 1.0) if mean <= 0.0 else (math.inf, 0.0)
    z = mean / se
    return z, float(norm.sf(z))


def supermartingale_test(paths: list[CouplingPath], alpha: float = 0.01) -> dict:
    """One-sided test of non-positive drift of the tracked cost.

    Pools all one-step increments; the pooled standard error comes from the
    per-path increment sums, which are independent across paths.  Also
    reports per-step statistics and the fractions of steps whose 99%
    confidence interval lies strictly below or above zero.
    """
    if len(paths) < 100:
        raise ConfigError("supermartingale test needs at least 100 paths")
    s0 = paths[0].s
    for p in paths[1:]:
        if p.s.shape != s0.shape or not np.array_equal(p.s, s0):
            raise ConfigError("paths must share one schedule")
    lam = np.array([p.Lambda for p in paths])
    inc = np.diff(lam, axis=1)
    n_paths, n_steps = inc.shape
    if n_steps < 1:
        raise ConfigError("paths have no steps to test")

    step_mean = inc.mean(axis=0)
    step_se = inc.std(axis=0, ddof=1) / math.sqrt(n_paths)
    path_sums = inc.sum(axis=1)
    pooled_mean = float(path_sums.mean() / n_steps)
    pooled_se = float(path_sums.std(ddof=1) / (math.sqrt(n_paths) * n_steps))
    z, p_value = _one_sided_stats(pooled_mean, pooled_se)
    z_alpha = float(norm.ppf(1.0 - alpha))
    upper_cb = pooled_mean + z_alpha * pooled_se

    with np.errstate(invalid="ignore"):
        upper_steps = step_mean + Z99 * step_se
        lower_steps = step_mean - Z99 * step_se
    return {
        "n_paths": n_paths,
        "n_steps": n_steps,
        "alpha": alpha,
        "pooled": {
            "mean_increment": pooled_mean,
            "se": pooled_se,
            "z": z,
            "p_value": p_value,
            "upper_cb": float(upper_cb),
        },
        "per_step": {
            "s": s0[1:].tolist(),
            "mean": step_mean.tolist(),
            "se": step_se.tolist(),
        },
        "frac_steps_upper_below_zero": float(np.mean(upper_steps < 0.0)),
        "frac_steps_lower_above_zero": float(np.mean(lower_steps > 0.0)),
        "total_mult_hits": int(sum(p.total_mult_hits for p in paths)),
        "supermartingale_consistent": bool(upper_cb <= 0.0),
    }


# ---- monotonicity experiment -------------------------------------------------


def _checkpoint_indices(n_steps: int, n_checkpoints: int) -> np.ndarray:
    idx = np.unique(np.round(np.linspace(0, n_steps, n_checkpoints)).astype(int))
    return idx


def monotonicity_experiment(
    fam: MetricFamily,
    schedule: TimeSchedule,
    mu0_pairs: list[tuple[Point, Point]],
    phi: PhiSpec,
    master_seed: int,
    n_checkpoints: int = 10,
    n_boot: int = 200,
    threads: int | None = None,
    backend: str | None = None,
) -> dict:
    """Track the optimal transport cost between the evolving empirical
    marginals of a coupled ensemble started from an optimal plan.

    At each checkpoint the cost matrix is rebuilt from the closed form and
    re-solved; uncertainty comes from a paired bootstrap over trajectories
    (one index draw per replicate, reused across checkpoints, so increment
    standard errors respect the within-path correlation).  A checkpoint is
    flagged when the cost increased by more than two increment standard
    errors.
    """
    n = len(mu0_pairs)
    if n < 2:
        raise ConfigError("need at least 2 initial pairs")
    paths = run_ensemble(
        fam,
        schedule,
        mu0_pairs,
        master_seed,
        n,
        threads=threads,
        backend=backend,
        record="full",
    )
    n_steps = paths[0].n_steps
    marks = _checkpoint_indices(n_steps, n_checkpoints)
    boot_rng = _keyed_rng(master_seed, _BOOT_KEY)
    boot_idx = boot_rng.integers(0, n, size=(n_boot, n))

    s_vals, costs, boot_costs = [], [], []
    for k in marks:
        s = float(paths[0].s[k])
        xs = np.array([p.X[k] for p in paths])
        ys = np.array([p.Y[k] for p in paths])
        mat = l0_cost_matrix(
            fam, schedule.tau_prime(s), schedule.tau_dprime(s), xs, ys, phi
        )
        costs.append(optimal_assignment(mat).cost)
        reps = np.empty(n_boot)
        for b in range(n_boot):
            idx = boot_idx[b]
            reps[b] = optimal_assignment(mat[np.ix_(idx, idx)]).cost
        boot_costs.append(reps)
        s_vals.append(s)

    costs = np.asarray(costs)
    boot = np.column_stack(boot_costs)
    stderr = boot.std(axis=0, ddof=1)
    inc = np.diff(costs)
    inc_se = np.diff(boot, axis=1).std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inc_in_se = np.where(
            inc_se > 0.0, inc / inc_se, np.where(inc > 0.0, np.inf, -np.inf)
        )
    flags = [False] + [bool(inc[j] > 2.0 * inc_se[j]) for j in range(inc.size)]
    max_inc = float(np.max(inc_in_se)) if inc.size else -math.inf
    return {
        "phi": phi.label,
        "n_pairs": n,
        "n_boot": n_boot,
        "s": s_vals,
        "cost": costs.tolist(),
        "stderr": stderr.tolist(),
        "increment_se": inc_se.tolist(),
        "flag": flags,
        "max_increment_in_se": max_inc,
        "violation": bool(any(flags)),
    }
