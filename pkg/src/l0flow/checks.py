"""Runnable property suite over a model flow.

Each check draws its own samples from the supplied generator, verifies one
contract (flow equation, comparison estimates, cost bounds, transport
isometry, ball normalization), and returns a small report dict.  The CLI
surfaces the suite as a subcommand; the test suite reuses the same
functions with pinned seeds.
"""

from __future__ import annotations

import math

import numpy as np

from .coupling import sample_ball
from .geometry import MetricFamily, Point, TangentVec
from .solver import l0_distance
from .transport import transport_matrix

__all__ = [
    "check_flow_equation",
    "check_metric_comparison",
    "check_distance_comparison",
    "check_curvature_identities",
    "check_exp_dist_consistency",
    "check_ball_moments",
    "check_transport_isometry",
    "check_cost_bounds",
    "run_invariant_suite",
]


def _report(name: str, worst: float, tol: float, detail: str = "") -> dict:
    return {
        "name": name,
        "passed": bool(worst <= tol),
        "max_violation": float(worst),
        "tolerance": float(tol),
        "detail": detail,
    }


def _random_tangent(fam, rng, p: Point) -> TangentVec:
    comps = rng.standard_normal(fam.ncoords)
    return TangentVec(p, fam.project_to_tangent(p.coords, comps))


def _random_window(fam, rng, min_gap=0.05):
    while True:
        lo, hi = np.sort(rng.uniform(0.0, fam.T, size=2))
        if hi - lo >= min_gap * fam.T:
            return float(lo), float(hi)


def check_flow_equation(fam: MetricFamily, rng, n=100, h=1e-4, tol=1e-6) -> dict:
    """Central difference of g(t)(v, v) in t against -2 Ric(v, v)."""
    worst = 0.0
    for _ in range(n):
        t = rng.uniform(h, fam.T - h)
        p = fam.random_point(rng)
        v = _random_tangent(fam, rng, p)
        fd = (fam.inner(t + h, v, v) - fam.inner(t - h, v, v)) / (2.0 * h)
        ric = fam.ricci(t, v)
        worst = max(worst, abs(fd + 2.0 * fam.inner(t, ric, v)))
    return _report("flow_equation", worst, tol)


def check_metric_comparison(fam: MetricFamily, rng, n=50, tol=1e-12) -> dict:
    """|v|^2_{g(t)} <= e^{2 K_minus (t-s)} |v|^2_{g(s)} for s <= t."""
    worst = -math.inf
    for _ in range(n):
        s, t = _random_window(fam, rng, min_gap=0.0)
        p = fam.random_point(rng)
        v = _random_tangent(fam, rng, p)
        bound = math.exp(2.0 * fam.bounds.k_minus * (t - s)) * fam.inner(s, v, v)
        worst = max(worst, fam.inner(t, v, v) - bound)
    return _report("metric_comparison", worst, tol)


def check_distance_comparison(fam: MetricFamily, rng, n=50, tol=1e-12) -> dict:
    """rho_{g(t)} <= e^{K_minus (t-s)} rho_{g(s)} for s <= t."""
    worst = -math.inf
    for _ in range(n):
        s, t = _random_window(fam, rng, min_gap=0.0)
        p, q = fam.random_point(rng), fam.random_point(rng)
        bound = math.exp(fam.bounds.k_minus * (t - s)) * fam.dist(s, p, q)
        worst = max(worst, fam.dist(t, p, q) - bound)
    return _report("distance_comparison", worst, tol)


def check_curvature_identities(fam: MetricFamily, rng, n=20, tol=1e-5) -> dict:
    """Spatial constancy of R (so the contracted Bianchi identity is a
    statement about zeros) and the trace evolution dR/dt = Delta R + 2|Ric|^2
    with Delta R = 0 on these homogeneous models."""
    worst = 0.0
    h = 1e-5
    for _ in range(n):
        t = rng.uniform(h, fam.T - h)
        p = fam.random_point(rng)
        worst = max(
            worst, float(np.max(np.abs(fam.grad_scalar_curvature(t, p).components)))
        )
        # finite-difference R along a spatial direction: must vanish
        v = _random_tangent(fam, rng, p)
        q = fam.exp(t, TangentVec(p, 1e-4 * v.components))
        worst = max(
            worst,
            abs(fam.scalar_curvature(t, q) - fam.scalar_curvature(t, p)) / 1e-4,
        )
        rdot = (
            fam.scalar_curvature(t + h, p) - fam.scalar_curvature(t - h, p)
        ) / (2.0 * h)
        frame = fam.frame(t, p)
        ric_sq = 0.0
        for row in frame:
            rv = fam.ricci(t, TangentVec(p, row))
            ric_sq += fam.inner(t, rv, rv)
        worst = max(worst, abs(rdot - 2.0 * ric_sq) / max(1.0, abs(rdot)))
    return _report("curvature_identities", worst, tol)


def check_exp_dist_consistency(fam: MetricFamily, rng, n=50, tol=1e-9) -> dict:
    """dist(p, exp(v)) = |v|_{g(t)} below the injectivity radius."""
    worst = 0.0
    for _ in range(n):
        t = rng.uniform(0.0, fam.T)
        p = fam.random_point(rng)
        v = _random_tangent(fam, rng, p)
        norm = math.sqrt(fam.inner(t, v, v))
        if norm == 0.0:
            continue
        target = rng.uniform(0.05, 0.95) * fam.injectivity_radius(t)
        w = TangentVec(p, v.components * (target / norm))
        q = fam.exp(t, w)
        worst = max(worst, abs(fam.dist(t, p, q) - target))
    return _report("exp_dist_consistency", worst, tol)


def check_ball_moments(rng, d: int, n=10**6) -> dict:
    """Mean zero and (d+2) * second moment = identity, within 3 MC
    standard errors entrywise."""
    lam = sample_ball(rng, d, size=n)
    worst = -math.inf
    mean = lam.mean(axis=0)
    mean_se = lam.std(axis=0, ddof=1) / math.sqrt(n)
    worst = max(worst, float(np.max(np.abs(mean) - 3.0 * mean_se)))
    prod = (d + 2) * lam[:, :, None] * lam[:, None, :]
    second = prod.mean(axis=0)
    second_se = prod.std(axis=0, ddof=1) / math.sqrt(n)
    dev = np.abs(second - np.eye(d)) - 3.0 * second_se
    worst = max(worst, float(np.max(dev)))
    radii = np.linalg.norm(lam, axis=1)
    worst = max(worst, float(radii.max()) - 1.0)
    return _report("ball_moments", worst, 0.0, detail=f"{n} draws, d={d}")


def check_transport_isometry(fam: MetricFamily, rng, n=50, tol=1e-8) -> dict:
    """Norm preservation and frame-matrix orthogonality along solved pairs."""
    worst = 0.0
    for _ in range(n):
        t_lo, t_hi = _random_window(fam, rng)
        p, q = fam.random_point(rng), fam.random_point(rng)
        res = l0_distance(fam, t_lo, t_hi, p, q)
        if res.multiplicity_flag:
            continue
        tm = transport_matrix(fam, res)
        worst = max(worst, tm.orthogonality_defect)
        v = _random_tangent(fam, rng, p)
        coeffs = np.array([
            fam.inner(t_lo, TangentVec(p, f), v) for f in fam.frame(t_lo, p)
        ])
        norm_in = float(np.linalg.norm(coeffs))
        norm_out = float(np.linalg.norm(tm.apply(coeffs)))
        worst = max(worst, abs(norm_out - norm_in))
    return _report("transport_isometry", worst, tol)


def check_cost_bounds(fam: MetricFamily, rng, n=200, tol=1e-9) -> dict:
    """Lower bound, frozen-metric upper bound (K_minus -> 0 form), and the
    mean-value speed bound, on random windows and pairs."""
    km = fam.bounds.k_minus
    kp = fam.bounds.k_plus
    worst = -math.inf
    for _ in range(n):
        t_lo, t_hi = _random_window(fam, rng)
        dt = t_hi - t_lo
        p, q = fam.random_point(rng), fam.random_point(rng)
        res = l0_distance(fam, t_lo, t_hi, p, q)
        value = res.action
        rho_hi = fam.dist(t_hi, p, q)
        lower = 0.5 * math.exp(-km * dt) * rho_hi**2 / dt - 0.5 * fam.d * km * dt
        worst = max(worst, lower - value)
        worst = max(worst, -0.5 * fam.d * km * fam.T - value)
        rho_lo = fam.dist(t_lo, p, q)
        upper = rho_lo**2 / (2.0 * dt) + 0.5 * fam.d * kp * dt
        worst = max(worst, value - upper)
        speeds = [
            0.5 * fam.inner(0.5 * (ta + tb), v, v)
            for ta, tb, v in zip(
                res.curve.t_grid[:-1], res.curve.t_grid[1:], res.curve.velocities
            )
        ]
        worst = max(worst, min(speeds) - (value / dt + 0.5 * fam.d * km))
    return _report("cost_bounds", worst, tol, detail=f"{n} pairs")


def run_invariant_suite(fam: MetricFamily, seed: int, quick: bool = False) -> list[dict]:
    """The full battery with one generator; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    scale = 0.2 if quick else 1.0

    def k(n):
        return max(8, int(n * scale))

    return [
        check_flow_equation(fam, rng, n=k(100)),
        check_metric_comparison(fam, rng, n=k(50)),
        check_distance_comparison(fam, rng, n=k(50)),
        check_curvature_identities(fam, rng, n=k(20)),
        check_exp_dist_consistency(fam, rng, n=k(50)),
        check_ball_moments(rng, fam.d, n=k(10**6)),
        check_transport_isometry(fam, rng, n=k(50)),
        check_cost_bounds(fam, rng, n=k(200)),
    ]
