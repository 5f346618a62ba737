"""Concrete model flows and their closed-form cost oracles.

Two exact Ricci flows are provided:

* the static flat torus ``(R/L)^d`` (``Ric = 0``, so ``g(t) = g(0)``), and
* the shrinking round sphere ``g(t) = a(t) g_std`` with
  ``a(t) = 1 - 2(d-1)t``, defined while ``a`` stays positive.

Both admit closed forms for every quantity the generic machinery computes
numerically (minimizing curves, costs, transport), which is what makes them
usable as ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ConfigError,
    FlowBounds,
    MetricFamily,
    Point,
    TangentVec,
)

__all__ = [
    "TorusFlow",
    "SphereFlow",
    "SphereL0Oracle",
    "make_flow",
    "torus_l0_distance",
    "sphere_l0_distance",
]

# threshold below which a candidate frame direction counts as degenerate
_FRAME_TOL = 1e-6
# cos(ell) below this means the pair is treated as antipodal (cut pair)
_ANTIPODAL_COS = -1.0 + 1e-12


def _as_coords(p) -> np.ndarray:
    return p.coords if isinstance(p, Point) else np.asarray(p, dtype=float)


def _theta_over_sin(theta: np.ndarray) -> np.ndarray:
    """theta / sin(theta), stable at 0."""
    theta = np.asarray(theta, dtype=float)
    small = theta < 1e-6
    safe = np.where(small, 1.0, theta)
    return np.where(small, 1.0 + theta * theta / 6.0, safe / np.sin(safe))


class TorusFlow(MetricFamily):
    """Flat torus of side ``L``: the static (trivial) Ricci flow."""

    model_id = "torus"

    def __init__(self, d: int, L: float, T: float):
        if d < 2:
            raise ConfigError("model dimension must be >= 2")
        if L <= 0:
            raise ConfigError("torus side length must be positive")
        if T <= 0:
            raise ConfigError("flow horizon must be positive")
        self.d = int(d)
        self.L = float(L)
        self.T = float(T)
        self.bounds = FlowBounds(0.0, 0.0, 0.0)

    @property
    def ncoords(self) -> int:
        return self.d

    def point(self, coords) -> Point:
        c = np.asarray(coords, dtype=float)
        if c.shape != (self.d,):
            raise ConfigError(f"torus point needs {self.d} coordinates")
        return Point(self.model_id, np.mod(c, self.L))

    def random_point(self, rng: np.random.Generator) -> Point:
        return Point(self.model_id, rng.random(self.d) * self.L)

    def min_image(self, delta: np.ndarray) -> np.ndarray:
        """Representative of ``delta`` mod L with all entries in [-L/2, L/2)."""
        return np.mod(delta + 0.5 * self.L, self.L) - 0.5 * self.L

    # -- metric and curvature --

    def inner(self, t, u: TangentVec, v: TangentVec) -> float:
        self.check_time(t)
        if u.base is not v.base and not np.array_equal(
            u.base.coords, v.base.coords
        ):
            raise ConfigError("inner product needs a common base point")
        return float(np.dot(u.components, v.components))

    def scalar_curvature(self, t, p: Point) -> float:
        self.check_time(t)
        self.check_point(p)
        return 0.0

    def grad_scalar_curvature(self, t, p: Point) -> TangentVec:
        self.check_time(t)
        return TangentVec(p, np.zeros(self.d))

    def ricci(self, t, v: TangentVec) -> TangentVec:
        self.check_time(t)
        return TangentVec(v.base, np.zeros(self.d))

    # -- frozen-time geometry --

    def exp(self, t, v: TangentVec) -> Point:
        self.check_time(t)
        return Point(self.model_id, np.mod(v.base.coords + v.components, self.L))

    def dist(self, t, p: Point, q: Point) -> float:
        self.check_time(t)
        delta = self.min_image(self.check_point(q) - self.check_point(p))
        return float(np.linalg.norm(delta))

    def frame(self, t, p: Point) -> np.ndarray:
        self.check_time(t)
        self.check_point(p)
        return np.eye(self.d)

    def injectivity_radius(self, t) -> float:
        return 0.5 * self.L

    # -- generic-solver ingredients --

    def l0_acceleration(self, t, y, v):
        return np.zeros_like(v)

    def transport_rate(self, t, y, v, w):
        return np.zeros_like(w)

    def project_to_manifold(self, coords):
        return np.mod(coords, self.L)

    def project_to_tangent(self, coords, vec):
        return vec

    def discrete_action(self, t_grid, coords, with_grad=False):
        h = np.diff(t_grid)
        delta = self.min_image(np.diff(coords, axis=0))
        seg = np.einsum("ij,ij->i", delta, delta) / h
        value = 0.5 * float(np.sum(seg))
        if not with_grad:
            return value
        grad = delta[:-1] / h[:-1, None] - delta[1:] / h[1:, None]
        return value, grad

    def segment_velocities(self, t_grid, coords):
        h = np.diff(t_grid)
        delta = self.min_image(np.diff(coords, axis=0))
        mids = np.mod(coords[:-1] + 0.5 * delta, self.L)
        return mids, delta / h[:, None]

    def geodesic_interpolant(self, t, p: Point, q: Point, n_grid: int):
        self.check_time(t)
        delta = self.min_image(self.check_point(q) - self.check_point(p))
        s = np.linspace(0.0, 1.0, n_grid + 1)[:, None]
        return np.mod(p.coords[None, :] + s * delta[None, :], self.L)

    def chart_residual(self, t, q_coords, y):
        return self.min_image(y - q_coords)

    # -- closed forms --

    def exact_l0(self, t_lo, t_hi, p: Point, q: Point):
        dt = t_hi - t_lo
        if dt <= 0:
            raise ConfigError("need t_lo < t_hi")
        delta = self.min_image(self.check_point(q) - self.check_point(p))
        value = float(np.dot(delta, delta)) / (2.0 * dt)
        v0 = delta / dt
        # ties between wrap images make the minimizer non-unique
        flagged = bool(np.any(np.abs(np.abs(delta) - 0.5 * self.L) < 1e-9 * self.L))
        return value, v0, v0.copy(), flagged

    def exact_curve(self, t_lo, t_hi, p: Point, q: Point, n_grid: int):
        delta = self.min_image(self.check_point(q) - self.check_point(p))
        s = np.linspace(0.0, 1.0, n_grid + 1)[:, None]
        return np.mod(p.coords[None, :] + s * delta[None, :], self.L)

    def exact_transport_matrix(self, t_lo, t_hi, p: Point, q: Point):
        return np.eye(self.d)

    def pairwise_l0(self, t_lo, t_hi, xs, ys):
        dt = t_hi - t_lo
        if dt <= 0:
            raise ConfigError("need t_lo < t_hi")
        diff = self.min_image(ys[None, :, :] - xs[:, None, :])
        return np.einsum("ijk,ijk->ij", diff, diff) / (2.0 * dt)


@dataclass(frozen=True)
class SphereL0Oracle:
    """Closed-form window data for the shrinking round sphere.

    ``A`` is the conformal time integral over the window,

        A = int_{t'}^{t''} dt / a(t) = ln(a(t') / a(t'')) / (2(d-1)),

    in terms of which the cost of a pair at standard angle ``ell`` is
    ``ell^2 / (2A) + d(d-1) A / 2`` (constant ``a(t) u_dot`` speed law).
    """

    d: int
    t_prime: float
    t_dprime: float
    A: float

    @classmethod
    def for_window(cls, d: int, t_prime: float, t_dprime: float) -> "SphereL0Oracle":
        if d < 2:
            raise ConfigError("model dimension must be >= 2")
        if t_dprime <= t_prime:
            raise ConfigError("need t_prime < t_dprime")
        a_lo = 1.0 - 2.0 * (d - 1) * t_prime
        a_hi = 1.0 - 2.0 * (d - 1) * t_dprime
        if a_hi <= 0.0 or t_prime < 0.0:
            raise ConfigError("window leaves the sphere flow's lifespan")
        A = math.log(a_lo / a_hi) / (2.0 * (d - 1))
        return cls(d, float(t_prime), float(t_dprime), A)

    def value(self, ell: float) -> float:
        return ell * ell / (2.0 * self.A) + 0.5 * self.d * (self.d - 1) * self.A

    def speed(self, t: float) -> float:
        """``u_dot(t)`` per unit standard angle ``ell`` (multiply by ell)."""
        a = 1.0 - 2.0 * (self.d - 1) * t
        return 1.0 / (self.A * a)


class SphereFlow(MetricFamily):
    """Shrinking round sphere ``g(t) = (1 - 2(d-1)t) g_std``."""

    model_id = "sphere"

    def __init__(self, d: int, T: float):
        if d < 2:
            raise ConfigError("model dimension must be >= 2")
        if T <= 0:
            raise ConfigError("flow horizon must be positive")
        if T >= 1.0 / (2.0 * (d - 1)):
            raise ConfigError(
                f"sphere flow collapses at t = {1.0 / (2.0 * (d - 1))}; "
                f"need T below that"
            )
        self.d = int(d)
        self.T = float(T)
        self.bounds = FlowBounds(0.0, (d - 1) / self.conformal_factor(T), 0.0)

    @property
    def ncoords(self) -> int:
        return self.d + 1

    def conformal_factor(self, t) -> float:
        return 1.0 - 2.0 * (self.d - 1) * t

    def point(self, coords) -> Point:
        c = np.asarray(coords, dtype=float)
        if c.shape != (self.d + 1,):
            raise ConfigError(f"sphere point needs {self.d + 1} ambient coordinates")
        n = np.linalg.norm(c)
        if n < 1e-12:
            raise ConfigError("cannot normalize a near-zero sphere coordinate vector")
        return Point(self.model_id, c / n)

    def random_point(self, rng: np.random.Generator) -> Point:
        while True:
            c = rng.standard_normal(self.d + 1)
            n = np.linalg.norm(c)
            if n > 1e-8:
                return Point(self.model_id, c / n)

    # -- metric and curvature --

    def inner(self, t, u: TangentVec, v: TangentVec) -> float:
        t = self.check_time(t)
        if u.base is not v.base and not np.array_equal(
            u.base.coords, v.base.coords
        ):
            raise ConfigError("inner product needs a common base point")
        return self.conformal_factor(t) * float(np.dot(u.components, v.components))

    def scalar_curvature(self, t, p: Point) -> float:
        t = self.check_time(t)
        self.check_point(p)
        return self.d * (self.d - 1) / self.conformal_factor(t)

    def grad_scalar_curvature(self, t, p: Point) -> TangentVec:
        self.check_time(t)
        return TangentVec(p, np.zeros(self.d + 1))

    def ricci(self, t, v: TangentVec) -> TangentVec:
        t = self.check_time(t)
        lam = (self.d - 1) / self.conformal_factor(t)
        return TangentVec(v.base, lam * v.components)

    # -- frozen-time geometry --

    def exp(self, t, v: TangentVec) -> Point:
        self.check_time(t)
        p = v.base.coords
        # the Levi-Civita connection ignores constant conformal scaling,
        # so the great-circle formula in standard arc length applies at all t
        theta = float(np.linalg.norm(v.components))
        if theta == 0.0:
            return Point(self.model_id, p.copy())
        out = math.cos(theta) * p + math.sin(theta) * (v.components / theta)
        return Point(self.model_id, out / np.linalg.norm(out))

    def dist(self, t, p: Point, q: Point) -> float:
        t = self.check_time(t)
        u = self.check_point(p)
        v = self.check_point(q)
        u = u / np.linalg.norm(u)
        v = v / np.linalg.norm(v)
        # atan2 of chord lengths keeps full precision where acos of the
        # dot product loses half the digits (nearly equal or antipodal)
        angle = 2.0 * math.atan2(np.linalg.norm(u - v), np.linalg.norm(u + v))
        return math.sqrt(self.conformal_factor(t)) * angle

    def frame(self, t, p: Point) -> np.ndarray:
        t = self.check_time(t)
        base = self.check_point(p)
        rows = []
        for k in range(self.d + 1):
            cand = -base[k] * base
            cand[k] += 1.0
            for r in rows:
                cand -= np.dot(cand, r) * r
            n = np.linalg.norm(cand)
            if n < _FRAME_TOL:
                continue
            rows.append(cand / n)
            if len(rows) == self.d:
                break
        return np.asarray(rows) / math.sqrt(self.conformal_factor(t))

    def injectivity_radius(self, t) -> float:
        return math.pi * math.sqrt(self.conformal_factor(self.check_time(t)))

    # -- generic-solver ingredients --

    def l0_acceleration(self, t, y, v):
        # ambient form of  nabla_v v = (1/2) grad R + 2 Ric(v,.)#  on |y| = 1
        lam = (self.d - 1) / self.conformal_factor(t)
        return -np.dot(v, v) * y + 2.0 * lam * v

    def transport_rate(self, t, y, v, w):
        lam = (self.d - 1) / self.conformal_factor(t)
        if w.ndim == 2:
            return lam * w - np.outer(w @ v, y)
        return lam * w - np.dot(w, v) * y

    def project_to_manifold(self, coords):
        coords = np.asarray(coords, dtype=float)
        norms = np.linalg.norm(coords, axis=-1, keepdims=True)
        return coords / norms

    def project_to_tangent(self, coords, vec):
        return vec - np.sum(vec * coords, axis=-1, keepdims=True) * coords

    def discrete_action(self, t_grid, coords, with_grad=False):
        h = np.diff(t_grid)
        t_mid = 0.5 * (t_grid[:-1] + t_grid[1:])
        a_mid = 1.0 - 2.0 * (self.d - 1) * t_mid
        dots = np.clip(np.einsum("ij,ij->i", coords[:-1], coords[1:]), -1.0, 1.0)
        theta = np.arccos(dots)
        kinetic = a_mid * theta * theta / (2.0 * h)
        curv = 0.5 * h * self.d * (self.d - 1) / a_mid
        value = float(np.sum(kinetic + curv))
        if not with_grad:
            return value
        coef = (a_mid / h) * _theta_over_sin(theta)
        fwd = coef[:, None] * (coords[1:] - dots[:, None] * coords[:-1])
        bwd = coef[:, None] * (coords[:-1] - dots[:, None] * coords[1:])
        grad = -fwd[1:] - bwd[:-1]
        grad = self.project_to_tangent(coords[1:-1], grad)
        return value, grad

    def segment_velocities(self, t_grid, coords):
        h = np.diff(t_grid)
        chord = np.diff(coords, axis=0)
        mid_raw = coords[:-1] + coords[1:]
        mid_norm = np.linalg.norm(mid_raw, axis=1)
        if np.any(mid_norm < 1e-8):
            raise ConfigError("consecutive grid points are (near-)antipodal")
        mids = mid_raw / mid_norm[:, None]
        dots = np.clip(np.einsum("ij,ij->i", coords[:-1], coords[1:]), -1.0, 1.0)
        theta = np.arccos(dots)
        chord_norm = np.linalg.norm(chord, axis=1)
        # chord is exactly tangent at the midpoint; rescale to arc rate
        scale = np.where(chord_norm > 0.0, theta / np.maximum(chord_norm, 1e-300), 0.0)
        return mids, chord * (scale / h)[:, None]

    def geodesic_interpolant(self, t, p: Point, q: Point, n_grid: int):
        self.check_time(t)
        pc, qc = self.check_point(p), self.check_point(q)
        _, ell, e1, _ = self._chord_basis(pc, qc)
        u = np.linspace(0.0, ell, n_grid + 1)
        pts = np.cos(u)[:, None] * pc[None, :] + np.sin(u)[:, None] * e1[None, :]
        return self.project_to_manifold(pts)

    def chart_residual(self, t, q_coords, y):
        return self.frame(t, Point(self.model_id, q_coords)) @ (y - q_coords)

    # -- closed forms --

    def _chord_basis(self, p: np.ndarray, q: np.ndarray):
        """(cos ell, ell, unit tangent at p toward q, antipodal flag).

        At an antipodal pair the direction is ambiguous; the first frame
        vector at p is the deterministic choice.
        """
        c = float(np.clip(np.dot(p, q), -1.0, 1.0))
        ell = 2.0 * math.atan2(np.linalg.norm(p - q), np.linalg.norm(p + q))
        flagged = c <= _ANTIPODAL_COS
        if ell < 1e-14:
            return c, ell, np.zeros_like(p), False
        if flagged:
            e1 = self.frame(0.0, Point(self.model_id, p))[0]
            e1 = e1 / np.linalg.norm(e1)
        else:
            e1 = (q - c * p) / math.sin(ell)
        return c, ell, e1, flagged

    def exact_l0(self, t_lo, t_hi, p: Point, q: Point):
        oracle = SphereL0Oracle.for_window(self.d, t_lo, t_hi)
        pc, qc = self.check_point(p), self.check_point(q)
        c, ell, e1, flagged = self._chord_basis(pc, qc)
        value = oracle.value(ell)
        v0 = ell * oracle.speed(t_lo) * e1
        e_out = -math.sin(ell) * pc + math.cos(ell) * e1
        v1 = ell * oracle.speed(t_hi) * e_out
        return value, v0, v1, flagged

    def exact_curve(self, t_lo, t_hi, p: Point, q: Point, n_grid: int):
        oracle = SphereL0Oracle.for_window(self.d, t_lo, t_hi)
        pc, qc = self.check_point(p), self.check_point(q)
        _, ell, e1, _ = self._chord_basis(pc, qc)
        t = np.linspace(t_lo, t_hi, n_grid + 1)
        a = 1.0 - 2.0 * (self.d - 1) * t
        u = ell * np.log(a[0] / a) / (2.0 * (self.d - 1) * oracle.A)
        pts = np.cos(u)[:, None] * pc[None, :] + np.sin(u)[:, None] * e1[None, :]
        return self.project_to_manifold(pts)

    def exact_transport_matrix(self, t_lo, t_hi, p: Point, q: Point):
        pc, qc = self.check_point(p), self.check_point(q)
        c, ell, e1, _ = self._chord_basis(pc, qc)
        a_lo = self.conformal_factor(t_lo)
        a_hi = self.conformal_factor(t_hi)
        scal = math.sqrt(a_lo / a_hi)
        f_lo = self.frame(t_lo, p)
        f_hi = self.frame(t_hi, q)
        e_out = -math.sin(ell) * pc + math.cos(ell) * e1
        mat = np.empty((self.d, self.d))
        for j in range(self.d):
            v = f_lo[j]
            alpha = np.dot(v, e1)
            perp = v - alpha * e1
            moved = scal * (alpha * e_out + perp)
            mat[:, j] = a_hi * (f_hi @ moved)
        return mat

    def transport_closed_form(self, t_lo, t_hi, p: Point, q: Point, comps):
        """Transport raw ambient components from p to q along the
        minimizing great circle: standard parallel transport times the
        conformal norm correction."""
        pc, qc = self.check_point(p), self.check_point(q)
        c, ell, e1, _ = self._chord_basis(pc, qc)
        scal = math.sqrt(self.conformal_factor(t_lo) / self.conformal_factor(t_hi))
        if ell < 1e-14:
            return scal * np.asarray(comps, dtype=float)
        alpha = np.dot(comps, e1)
        perp = comps - alpha * e1
        e_out = -math.sin(ell) * pc + math.cos(ell) * e1
        return scal * (alpha * e_out + perp)

    def pairwise_l0(self, t_lo, t_hi, xs, ys):
        oracle = SphereL0Oracle.for_window(self.d, t_lo, t_hi)
        ell = np.arccos(np.clip(xs @ ys.T, -1.0, 1.0))
        return ell * ell / (2.0 * oracle.A) + 0.5 * self.d * (self.d - 1) * oracle.A


def torus_l0_distance(L, d, t_lo, t_hi, p, q) -> float:
    """Exact flat-torus cost: squared min-image distance over ``2(t''-t')``."""
    fam = TorusFlow(d, L, max(t_hi, 1.0))
    value, _, _, _ = fam.exact_l0(
        t_lo, t_hi, fam.point(_as_coords(p)), fam.point(_as_coords(q))
    )
    return value

def sphere_l0_distance(d, t_lo, t_hi, p, q) -> float:
    """Exact shrinking-sphere cost ``ell^2/(2A) + d(d-1)A/2``."""
    oracle = SphereL0Oracle.for_window(d, t_lo, t_hi)
    pc = _as_coords(p)
    qc = _as_coords(q)
    pc = pc / np.linalg.norm(pc)
    qc = qc / np.linalg.norm(qc)
    ell = 2.0 * math.atan2(
        float(np.linalg.norm(pc - qc)), float(np.linalg.norm(pc + qc))
    )
    return oracle.value(ell)


def make_flow(model: str, d: int, T: float, L: float | None = None) -> MetricFamily:
    """Build a model flow from its name and parameters, with validation."""
    if model == "torus":
        if L is None:
            raise ConfigError("torus flow needs a side length L")
        return TorusFlow(d, L, T)
    if model == "sphere":
        if L is not None:
            raise ConfigError("sphere flow takes no side length")
        return SphereFlow(d, T)
    raise ConfigError(f"unknown model {model!r}")
