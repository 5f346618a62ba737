"""Discretized space-time curves and solver result containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ConfigError, MetricFamily, Point, TangentVec

__all__ = ["SpaceTimeCurve", "L0GeodesicResult", "uniform_grid"]

MIN_SEGMENTS = 8


def uniform_grid(t_lo: float, t_hi: float, n: int) -> np.ndarray:
    if t_hi <= t_lo:
        raise ConfigError("need t_lo < t_hi")
    return np.linspace(float(t_lo), float(t_hi), int(n) + 1)


@dataclass(eq=False)
class SpaceTimeCurve:
    """A curve ``t -> gamma(t)`` sampled on a time grid.

    ``coords`` holds one coordinate row per grid time.  Treat instances as
    immutable: downstream results keep references to them.
    """

    fam: MetricFamily
    t_grid: np.ndarray
    coords: np.ndarray
    _segments: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.coords = np.asarray(self.coords, dtype=float)
        if self.t_grid.ndim != 1 or self.coords.shape[0] != self.t_grid.size:
            raise ConfigError("need one coordinate row per grid time")
        if self.n_segments < MIN_SEGMENTS:
            raise ConfigError(f"curve needs at least {MIN_SEGMENTS} segments")
        if np.any(np.diff(self.t_grid) <= 0.0):
            raise ConfigError("time grid must be strictly increasing")
        self.fam.check_time(self.t_grid[0])
        self.fam.check_time(self.t_grid[-1])

    @property
    def n_segments(self) -> int:
        return self.t_grid.size - 1

    @property
    def t_lo(self) -> float:
        return float(self.t_grid[0])

    @property
    def t_hi(self) -> float:
        return float(self.t_grid[-1])

    def point(self, i: int) -> Point:
        return Point(self.fam.model_id, self.coords[i].copy())

    @property
    def points(self) -> list[Point]:
        return [self.point(i) for i in range(self.t_grid.size)]

    def _segment_data(self):
        if self._segments is None:
            mids, vels = self.fam.segment_velocities(self.t_grid, self.coords)
            self._segments = (mids, vels)
        return self._segments

    @property
    def velocities(self) -> list[TangentVec]:
        """Midpoint-rule velocities, one TangentVec per segment."""
        mids, vels = self._segment_data()
        return [
            TangentVec(Point(self.fam.model_id, mids[j]), vels[j])
            for j in range(self.n_segments)
        ]


@dataclass(eq=False)
class L0GeodesicResult:
    """Output of a two-point minimization: the curve, its endpoint
    velocities, the cost value, and solve diagnostics.

    ``multiplicity_flag`` marks pairs where distinct minimizers with equal
    cost were found (the numerical shadow of a cut pair); ``residual`` is
    the boundary mismatch of the final shooting solve in coordinates.
    """

    curve: SpaceTimeCurve
    v0: TangentVec
    v1: TangentVec
    action: float
    multiplicity_flag: bool
    residual: float
    converged: bool = True

    @property
    def t_lo(self) -> float:
        return self.curve.t_lo

    @property
    def t_hi(self) -> float:
        return self.curve.t_hi

    @property
    def m_lo(self) -> Point:
        return self.curve.point(0)

    @property
    def m_hi(self) -> Point:
        return self.curve.point(self.curve.n_segments)
