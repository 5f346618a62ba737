"""Generic machinery for the cost functional

    (1/2) * integral of ( |gamma_dot(t)|^2_{g(t)} + R_{g(t)}(gamma(t)) ) dt

over space-time curves: action quadrature, the critical-curve initial value
problem, the two-point boundary solver, derivative formulas, and the
finite-difference probe of the contracted Hessian inequality.

The boundary solver works in two stages.  Stage 1 minimizes the discretized
action over curves with fixed endpoints (projected gradient descent with
Barzilai-Borwein steps and a backtracking line search), starting from the
frozen-time geodesic interpolant.  Stage 2 refines the initial velocity by a
damped Newton shooting solve, multi-started over deterministic rotations of
the Stage-1 seed so that distinct minimizers of equal cost are detected.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .curves import L0GeodesicResult, SpaceTimeCurve, uniform_grid
from .geometry import (
    ConfigError,
    MetricFamily,
    MultiplicityError,
    Point,
    TangentVec,
)

__all__ = [
    "SolverOptions",
    "l0_action",
    "l0_geodesic_ivp",
    "l0_exp",
    "l0_distance",
    "l0_spatial_gradients",
    "l0_time_partials",
    "nonpos_hessian_probe",
]


@dataclass
class SolverOptions:
    """Tunables of the two-point solver.

    ``method`` is ``"auto"`` (use the model's closed form when it has one)
    or ``"generic"`` (always run the two-stage solve).  ``warm_v0`` skips
    Stage 1 and shoots once from the given initial-velocity components.
    """

    method: str = "auto"
    n_grid: int = 128
    n_starts: int = 8
    tol_action: float = 1e-6
    tol_sep: float = 1e-3
    shoot_tol: float = 1e-9
    shoot_max_iter: int = 40
    stage1_max_iter: int = 300
    stage1_gtol: float = 1e-7
    fd_step: float = 1e-6
    hess_eps: float = 1e-3
    warm_v0: np.ndarray | None = None


_DEFAULT_OPTS = SolverOptions()


def l0_action(fam: MetricFamily, curve: SpaceTimeCurve) -> float:
    """Composite-midpoint quadrature of the action along ``curve``."""
    return fam.discrete_action(curve.t_grid, curve.coords)


# ---- initial value problem -------------------------------------------------


def _integrate(fam, t_grid, y0, v0, store=False):
    """Classical fourth-order integration of y' = v, v' = acceleration,
    with the state retracted to the model after every step."""
    y = np.array(y0, dtype=float)
    v = np.array(v0, dtype=float)
    out = None
    if store:
        out = np.empty((t_grid.size, y.size))
        out[0] = y
    acc = fam.l0_acceleration
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(t_grid.size - 1):
            t = t_grid[j]
            h = t_grid[j + 1] - t
            k1y = v
            k1v = acc(t, y, v)
            k2y = v + 0.5 * h * k1v
            k2v = acc(t + 0.5 * h, y + 0.5 * h * k1y, k2y)
            k3y = v + 0.5 * h * k2v
            k3v = acc(t + 0.5 * h, y + 0.5 * h * k2y, k3y)
            k4y = v + h * k3v
            k4v = acc(t + h, y + h * k3y, k4y)
            y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            y = fam.project_to_manifold(y)
            v = fam.project_to_tangent(y, v)
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(v))):
                # wild shooting seeds can blow up; signal with NaNs
                y = np.full_like(y, np.nan)
                v = np.full_like(v, np.nan)
                if store:
                    out[j + 1 :] = np.nan
                break
            if store:
                out[j + 1] = y
    return y, v, out


def l0_geodesic_ivp(
    fam: MetricFamily,
    t_lo: float,
    t_hi: float,
    m_lo: Point,
    v0: TangentVec,
    n_grid: int = _DEFAULT_OPTS.n_grid,
) -> SpaceTimeCurve:
    """Integrate the critical-curve equation forward from ``(t_lo, m_lo)``."""
    fam.check_point(m_lo)
    t_grid = uniform_grid(fam.check_time(t_lo), fam.check_time(t_hi), n_grid)
    _, _, coords = _integrate(fam, t_grid, m_lo.coords, v0.components, store=True)
    return SpaceTimeCurve(fam, t_grid, coords)


def l0_exp(
    fam: MetricFamily,
    t_lo: float,
    t_hi: float,
    m_lo: Point,
    v0: TangentVec,
    n_grid: int = _DEFAULT_OPTS.n_grid,
) -> Point:
    """Endpoint of the critical curve with initial velocity ``v0``."""
    curve = l0_geodesic_ivp(fam, t_lo, t_hi, m_lo, v0, n_grid)
    return curve.point(curve.n_segments)


# ---- stage 1: direct minimization -----------------------------------------


def _node_diff(fam, a, b):
    d = b - a
    return fam.min_image(d) if hasattr(fam, "min_image") else d


def _minimize_action(fam, t_grid, coords, max_iter, gtol):
    """Projected gradient descent with BB steps on the interior nodes."""
    x = coords.copy()
    value, grad = fam.discrete_action(t_grid, x, with_grad=True)
    alpha = 0.25 * float(np.min(np.diff(t_grid)))
    prev_step = None
    prev_grad = None
    for _ in range(max_iter):
        gsq = float(np.sum(grad * grad))
        if np.sqrt(gsq) <= gtol:
            break
        if prev_step is not None:
            sy = float(np.sum(prev_step * (grad - prev_grad)))
            ss = float(np.sum(prev_step * prev_step))
            if sy > 1e-300:
                alpha = min(max(ss / sy, 1e-10), 1e3)
        accepted = False
        for _ in range(30):
            cand = x.copy()
            cand[1:-1] = fam.project_to_manifold(x[1:-1] - alpha * grad)
            new_value, new_grad = fam.discrete_action(t_grid, cand, with_grad=True)
            if new_value <= value - 1e-4 * alpha * gsq:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        prev_step = _node_diff(fam, x[1:-1], cand[1:-1])
        prev_grad = grad
        x, value, grad = cand, new_value, new_grad
    return x, value


# ---- stage 2: shooting -----------------------------------------------------


def _rotate_in_plane(vec, i, j, angle):
    out = vec.copy()
    c, s = np.cos(angle), np.sin(angle)
    out[i] = c * vec[i] - s * vec[j]
    out[j] = s * vec[i] + c * vec[j]
    return out


def _start_coefficients(seed, n_starts, d):
    """The seed plus deterministic rotations of it in coordinate planes."""
    starts = [seed]
    planes = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for k in range(1, n_starts):
        i, j = planes[(k - 1) % len(planes)]
        starts.append(_rotate_in_plane(seed, i, j, 2.0 * np.pi * k / n_starts))
    unique = []
    for s in starts:
        if not any(np.max(np.abs(s - u)) < 1e-12 for u in unique):
            unique.append(s)
    return unique


@dataclass
class _Candidate:
    coeffs: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    coords: np.ndarray
    action: float
    residual: float
    converged: bool


def _shoot(fam, t_grid, p_coords, q_point, frame_lo, coeffs, opts):
    """Damped Newton on the endpoint mismatch, Jacobian by differences."""
    t_hi = t_grid[-1]
    q_coords = q_point.coords

    def endpoint(cf):
        y, v, _ = _integrate(fam, t_grid, p_coords, cf @ frame_lo, store=False)
        if not np.all(np.isfinite(y)):
            return np.full(fam.d, np.inf), y, v
        return fam.chart_residual(t_hi, q_coords, y), y, v

    cf = np.asarray(coeffs, dtype=float)
    res, y_end, _ = endpoint(cf)
    rnorm = float(np.linalg.norm(res))
    d = cf.size
    for _ in range(opts.shoot_max_iter):
        if not np.isfinite(rnorm) or rnorm < 1e-12:
            break
        delta = opts.fd_step * max(1.0, float(np.max(np.abs(cf))))
        jac = np.empty((d, d))
        for k in range(d):
            fwd = cf.copy()
            bwd = cf.copy()
            fwd[k] += delta
            bwd[k] -= delta
            jac[:, k] = (endpoint(fwd)[0] - endpoint(bwd)[0]) / (2.0 * delta)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        improved = False
        for _ in range(10):
            trial = cf + alpha * step
            t_res, t_y, _ = endpoint(trial)
            t_norm = float(np.linalg.norm(t_res))
            if t_norm < rnorm * (1.0 - 0.25 * alpha):
                cf, res, y_end, rnorm = trial, t_res, t_y, t_norm
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
    # a vanishing chart residual can also mean the antipodal point on the
    # sphere; measure the true endpoint mismatch to rule that out
    if np.all(np.isfinite(y_end)):
        mismatch = fam.dist(t_hi, Point(fam.model_id, y_end), q_point)
    else:
        mismatch = float("inf")
    converged = mismatch <= opts.shoot_tol
    v0 = cf @ frame_lo
    y_fin, v_fin, coords = _integrate(fam, t_grid, p_coords, v0, store=True)
    if np.all(np.isfinite(coords)):
        action = fam.discrete_action(t_grid, coords)
    else:
        action = float("inf")
    return _Candidate(cf, v0, v_fin, coords, action, mismatch, converged)


def _exact_result(fam, t_lo, t_hi, m_lo, m_hi, exact, n_grid):
    value, v0c, v1c, flagged = exact
    coords = fam.exact_curve(t_lo, t_hi, m_lo, m_hi, n_grid)
    curve = SpaceTimeCurve(fam, uniform_grid(t_lo, t_hi, n_grid), coords)
    return L0GeodesicResult(
        curve=curve,
        v0=TangentVec(m_lo, v0c),
        v1=TangentVec(m_hi, v1c),
        action=float(value),
        multiplicity_flag=bool(flagged),
        residual=0.0,
        converged=True,
    )


def l0_distance(
    fam: MetricFamily,
    t_lo: float,
    t_hi: float,
    m_lo: Point,
    m_hi: Point,
    opts: SolverOptions | None = None,
) -> L0GeodesicResult:
    """Minimize the action over curves from ``(t_lo, m_lo)`` to
    ``(t_hi, m_hi)`` and return the minimizer with diagnostics.

    With multiple converged minimizers the lowest action wins; near-ties
    (within ``tol_action``, velocities separated by more than ``tol_sep``
    in ``g(t_lo)`` norm) raise the multiplicity flag, and exact ties are
    broken lexicographically on the initial velocity components.
    """
    opts = opts or _DEFAULT_OPTS
    t_lo = fam.check_time(t_lo)
    t_hi = fam.check_time(t_hi)
    if t_hi <= t_lo:
        raise ConfigError("need t_lo < t_hi")
    p_coords = fam.check_point(m_lo)
    fam.check_point(m_hi)

    if opts.method == "auto":
        exact = fam.exact_l0(t_lo, t_hi, m_lo, m_hi)
        if exact is not None:
            return _exact_result(fam, t_lo, t_hi, m_lo, m_hi, exact, opts.n_grid)
    elif opts.method != "generic":
        raise ConfigError(f"unknown solver method {opts.method!r}")

    t_grid = uniform_grid(t_lo, t_hi, opts.n_grid)
    frame_lo = fam.frame(t_lo, m_lo)

    if opts.warm_v0 is not None:
        v_seed = fam.project_to_tangent(p_coords, np.asarray(opts.warm_v0, float))
        seeds = [np.array([
            fam.inner(t_lo, TangentVec(m_lo, f), TangentVec(m_lo, v_seed))
            for f in frame_lo
        ])]
    else:
        init = fam.geodesic_interpolant(t_lo, m_lo, m_hi, opts.n_grid)
        coords_min, _ = _minimize_action(
            fam, t_grid, init, opts.stage1_max_iter, opts.stage1_gtol
        )
        _, vels = fam.segment_velocities(t_grid, coords_min)
        v_seed = fam.project_to_tangent(p_coords, vels[0])
        seed = np.array([
            fam.inner(t_lo, TangentVec(m_lo, f), TangentVec(m_lo, v_seed))
            for f in frame_lo
        ])
        seeds = _start_coefficients(seed, opts.n_starts, fam.d)

    candidates = [
        _shoot(fam, t_grid, p_coords, m_hi, frame_lo, cf, opts) for cf in seeds
    ]
    if opts.warm_v0 is not None and not any(c.converged for c in candidates):
        # cold restart with the full multi-start procedure
        return l0_distance(fam, t_lo, t_hi, m_lo, m_hi, replace(opts, warm_v0=None))

    converged = [c for c in candidates if c.converged]
    if converged:
        pool = converged
    else:
        # nothing converged: a short blown-off curve can undercut the true
        # action, so rank by endpoint mismatch instead
        best_res = min(c.residual for c in candidates)
        pool = [c for c in candidates if c.residual <= best_res * (1.0 + 1e-9)]
    best_action = min(c.action for c in pool)
    tol_a = opts.tol_action * (1.0 + abs(best_action))
    ties = [c for c in pool if c.action <= best_action + tol_a]
    ties.sort(key=lambda c: tuple(c.v0))
    best = ties[0]

    def g_sep(a, b):
        dv = a - b
        return np.sqrt(fam.inner(t_lo, TangentVec(m_lo, dv), TangentVec(m_lo, dv)))

    flagged = any(g_sep(c.v0, best.v0) > opts.tol_sep for c in ties[1:])

    curve = SpaceTimeCurve(fam, t_grid, best.coords)
    m_end = curve.point(curve.n_segments)
    return L0GeodesicResult(
        curve=curve,
        v0=TangentVec(m_lo, best.v0),
        v1=TangentVec(m_end, best.v1),
        action=float(best.action),
        multiplicity_flag=bool(flagged),
        residual=float(best.residual),
        converged=bool(best.converged),
    )


# ---- derivative formulas ---------------------------------------------------


def _require_clean(result: L0GeodesicResult):
    if result.multiplicity_flag:
        raise MultiplicityError(
            "derivatives are undefined at a pair with non-unique minimizer"
        )
    if not result.converged:
        raise ConfigError("solve did not converge; derivatives unreliable")


def l0_spatial_gradients(
    fam: MetricFamily, result: L0GeodesicResult
) -> tuple[TangentVec, TangentVec]:
    """Gradients of the cost in its endpoints: ``(-gamma_dot(t'),
    +gamma_dot(t''))`` read off the solved minimizer."""
    _require_clean(result)
    return (
        TangentVec(result.m_lo, -result.v0.components),
        TangentVec(result.m_hi, result.v1.components.copy()),
    )


def l0_time_partials(fam: MetricFamily, result: L0GeodesicResult) -> tuple[float, float]:
    """Partial derivatives of the cost in the window endpoints:
    ``(+1/2 (|gamma_dot(t')|^2 - R), -1/2 (|gamma_dot(t'')|^2 - R))``."""
    _require_clean(result)
    t_lo, t_hi = result.t_lo, result.t_hi
    speed_lo = fam.inner(t_lo, result.v0, result.v0)
    speed_hi = fam.inner(t_hi, result.v1, result.v1)
    r_lo = fam.scalar_curvature(t_lo, result.m_lo)
    r_hi = fam.scalar_curvature(t_hi, result.m_hi)
    return 0.5 * (speed_lo - r_lo), -0.5 * (speed_hi - r_hi)


# ---- contracted Hessian probe ----------------------------------------------


def nonpos_hessian_probe(
    fam: MetricFamily,
    t_lo: float,
    t_hi: float,
    m_lo: Point,
    m_hi: Point,
    opts: SolverOptions | None = None,
) -> tuple[float, float]:
    """Probe the contracted endpoint Hessian inequality.

    Returns ``(lhs, rhs)``: ``lhs`` sums second central differences of the
    cost along joint perturbations ``(exp(eps u_i), exp(eps P u_i))`` over a
    ``g(t_lo)``-orthonormal frame ``u_i`` with ``P`` the space-time
    transport, Richardson-extrapolated once; ``rhs`` is the sum of the time
    partials.  The claim under test is ``lhs <= rhs``.
    """
    from .transport import spacetime_transport

    opts = opts or _DEFAULT_OPTS
    base = l0_distance(fam, t_lo, t_hi, m_lo, m_hi, opts)
    _require_clean(base)
    rhs = sum(l0_time_partials(fam, base))

    frame_lo = fam.frame(t_lo, m_lo)
    moved = [
        spacetime_transport(fam, base, TangentVec(m_lo, f)).components
        for f in frame_lo
    ]

    # nearby pairs: warm-start from the base minimizer (cold restart inside
    # l0_distance guards against a wrong basin)
    warm = replace(opts, warm_v0=base.v0.components)

    def value(u_comps, w_comps, eps):
        p_eps = fam.exp(t_lo, TangentVec(m_lo, eps * u_comps))
        q_eps = fam.exp(t_hi, TangentVec(m_hi, eps * w_comps))
        return l0_distance(fam, t_lo, t_hi, p_eps, q_eps, warm).action

    f0 = base.action
    eps = opts.hess_eps
    lhs = 0.0
    for u, w in zip(frame_lo, moved):
        def second_diff(e):
            return (value(u, w, e) - 2.0 * f0 + value(u, w, -e)) / (e * e)

        coarse = second_diff(eps)
        fine = second_diff(0.5 * eps)
        lhs += (4.0 * fine - coarse) / 3.0
    return float(lhs), float(rhs)
