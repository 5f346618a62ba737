"""Core types for time-dependent model geometries.

A :class:`MetricFamily` is a smooth family of metrics ``g(t)`` on a fixed
manifold, evolving by the Ricci flow ``dg/dt = -2 Ric(g(t))`` on a horizon
``[0, T]``.  Points are represented in model coordinates (torus: fundamental
domain coordinates, sphere: unit vectors in the ambient space), tangent
vectors by their coordinate components at a base point.

Everything downstream (action quadrature, geodesic solvers, transport,
coupling) talks to the flow exclusively through this interface plus the
optional closed-form hooks that concrete models may provide.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Point",
    "TangentVec",
    "FlowBounds",
    "MetricFamily",
    "L0FlowError",
    "ConfigError",
    "SolverError",
    "MultiplicityError",
    "metric_inner",
    "scalar_curvature",
    "grad_scalar_curvature",
    "ricci",
    "exp_map",
    "dist",
]


class L0FlowError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(L0FlowError):
    """Invalid configuration or out-of-range arguments."""


class SolverError(L0FlowError):
    """A solver failed to converge to the requested tolerance."""


class MultiplicityError(L0FlowError):
    """Operation undefined at a pair with non-unique minimizing geodesic."""


@dataclass(frozen=True, eq=False)
class Point:
    """A point on a model manifold, in that model's coordinates."""

    model_id: str
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


@dataclass(frozen=True, eq=False)
class TangentVec:
    """A tangent vector, stored as coordinate components at ``base``."""

    base: Point
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "components", np.asarray(self.components, dtype=float)
        )


@dataclass(frozen=True)
class FlowBounds:
    """Curvature control constants for a flow on ``[0, T]``.

    ``k_minus`` bounds ``Ric >= -k_minus g``, ``k_plus`` bounds
    ``Ric <= k_plus g`` uniformly on the horizon, and ``c_grad`` bounds
    ``|grad R|`` in the evolving metric.
    """

    k_minus: float
    k_plus: float
    c_grad: float

    def __post_init__(self):
        if self.k_minus < 0 or self.k_plus < 0 or self.c_grad < 0:
            raise ConfigError("flow bounds must be non-negative")


class MetricFamily(ABC):
    """A Ricci flow ``g(t)``, ``t`` in ``[0, T]``, on a model manifold.

    Concrete families expose the metric, curvature, and the constituents the
    generic machinery needs (orthonormal frames, geodesic acceleration, the
    transport rate).  Models with closed-form minimizers additionally
    implement the ``exact_*`` hooks; ``None`` signals "no closed form".
    """

    model_id: str
    d: int
    T: float
    bounds: FlowBounds

    # ---- validation -----------------------------------------------------

    def check_time(self, t: float) -> float:
        t = float(t)
        if not 0.0 <= t <= self.T + 1e-12:
            raise ConfigError(
                f"time {t} outside flow horizon [0, {self.T}]"
            )
        return min(t, self.T)

    def check_point(self, p: Point) -> np.ndarray:
        if p.model_id != self.model_id:
            raise ConfigError(
                f"point from model {p.model_id!r} used with {self.model_id!r}"
            )
        return p.coords

    # ---- constructors ---------------------------------------------------

    @abstractmethod
    def point(self, coords) -> Point:
        """Build a point from raw coordinates (normalising as needed)."""

    def tangent(self, p: Point, components) -> TangentVec:
        self.check_point(p)
        return TangentVec(p, np.asarray(components, dtype=float))

    @abstractmethod
    def random_point(self, rng: np.random.Generator) -> Point:
        """Draw a point uniformly w.r.t. the model's symmetric measure."""

    # ---- metric and curvature -------------------------------------------

    @abstractmethod
    def inner(self, t: float, u: TangentVec, v: TangentVec) -> float:
        """``g(t)(u, v)`` at the common base point."""

    @abstractmethod
    def scalar_curvature(self, t: float, p: Point) -> float:
        """Scalar curvature ``R(t, p)`` of ``g(t)``."""

    @abstractmethod
    def grad_scalar_curvature(self, t: float, p: Point) -> TangentVec:
        """Gradient of ``R(t, .)`` w.r.t. ``g(t)``, as a tangent vector."""

    @abstractmethod
    def ricci(self, t: float, v: TangentVec) -> TangentVec:
        """The endomorphism ``Ric(v, .)^sharp`` w.r.t. ``g(t)``."""

    # ---- spatial geometry at frozen t -----------------------------------

    @abstractmethod
    def exp(self, t: float, v: TangentVec) -> Point:
        """Exponential map of ``g(t)`` at ``v.base``."""

    @abstractmethod
    def dist(self, t: float, p: Point, q: Point) -> float:
        """Geodesic distance w.r.t. ``g(t)``."""

    @abstractmethod
    def frame(self, t: float, p: Point) -> np.ndarray:
        """Deterministic ``g(t)``-orthonormal frame at ``p``.

        Returns a ``(d, ncoords)`` array whose rows are the frame vectors'
        coordinate components.  The construction is Gram-Schmidt over a
        fixed candidate list, so equal inputs give identical frames.
        """

    # ---- ingredients of the generic solvers ------------------------------

    @abstractmethod
    def l0_acceleration(self, t: float, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Coordinate acceleration of the curve equation

        ``nabla_{v} v = (1/2) grad R + 2 Ric(v, .)^sharp``

        i.e. ``y'' = -Gamma(y)(v, v) + rhs`` in model coordinates.
        """

    @abstractmethod
    def transport_rate(
        self, t: float, y: np.ndarray, v: np.ndarray, w: np.ndarray
    ) -> np.ndarray:
        """Coordinate derivative ``dW/dt`` of the transport equation

        ``nabla_{v} W = Ric(W, .)^sharp``

        for ``W`` along a curve through ``y`` with velocity ``v``.
        """

    @abstractmethod
    def project_to_manifold(self, coords: np.ndarray) -> np.ndarray:
        """Retract raw coordinates back onto the model (rows or single)."""

    @abstractmethod
    def project_to_tangent(self, coords: np.ndarray, vec: np.ndarray) -> np.ndarray:
        """Project ambient components onto the tangent space at ``coords``."""

    @abstractmethod
    def discrete_action(
        self, t_grid: np.ndarray, coords: np.ndarray, with_grad: bool = False
    ):
        """Midpoint-rule value of the half-energy-plus-curvature functional
        on a broken geodesic through ``coords`` (rows), optionally with its
        Riemannian gradient w.r.t. the interior rows.
        """

    @abstractmethod
    def segment_velocities(self, t_grid: np.ndarray, coords: np.ndarray):
        """Midpoint bases and velocity components of each curve segment.

        Segment ``j`` is represented by the geodesic midpoint of its two
        nodes and the velocity of the connecting geodesic there (arc length
        over time step), as ``(mid_coords (N, nc), vel_comps (N, nc))``.
        """

    @abstractmethod
    def geodesic_interpolant(
        self, t: float, p: Point, q: Point, n_grid: int
    ) -> np.ndarray:
        """Constant-speed ``g(t)``-geodesic from ``p`` to ``q`` sampled at
        ``n_grid + 1`` uniform parameters, as coordinate rows."""

    @abstractmethod
    def chart_residual(
        self, t: float, q_coords: np.ndarray, y: np.ndarray
    ) -> np.ndarray:
        """d-dimensional mismatch between ``y`` and the target ``q_coords``
        in a chart centered at the target; zero iff they coincide locally."""

    # ---- optional closed forms -------------------------------------------

    def exact_l0(self, t_lo: float, t_hi: float, p: Point, q: Point):
        """Closed-form minimizer data ``(value, v0_comps, v1_comps, flag)``
        or ``None`` when the model has no closed form."""
        return None

    def exact_curve(
        self, t_lo: float, t_hi: float, p: Point, q: Point, n_grid: int
    ) -> np.ndarray | None:
        """Coordinates of the closed-form minimizing curve on a uniform
        grid, or ``None``."""
        return None

    def exact_transport_matrix(
        self, t_lo: float, t_hi: float, p: Point, q: Point
    ) -> np.ndarray | None:
        """Closed-form space-time transport in coordinates, or ``None``."""
        return None

    def pairwise_l0(
        self, t_lo: float, t_hi: float, xs: np.ndarray, ys: np.ndarray
    ) -> np.ndarray | None:
        """Closed-form cost matrix between coordinate row-stacks, or
        ``None``."""
        return None


# ---- functional wrappers (the stable public surface) ----------------------


def metric_inner(fam: MetricFamily, t: float, u: TangentVec, v: TangentVec) -> float:
    return fam.inner(t, u, v)


def scalar_curvature(fam: MetricFamily, t: float, p: Point) -> float:
    return fam.scalar_curvature(t, p)


def grad_scalar_curvature(fam: MetricFamily, t: float, p: Point) -> TangentVec:
    return fam.grad_scalar_curvature(t, p)


def ricci(fam: MetricFamily, t: float, v: TangentVec) -> TangentVec:
    return fam.ricci(t, v)


def exp_map(fam: MetricFamily, t: float, v: TangentVec) -> Point:
    return fam.exp(t, v)


def dist(fam: MetricFamily, t: float, p: Point, q: Point) -> float:
    return fam.dist(t, p, q)
