"""Space-time parallel transport along minimizing curves.

Along a solved minimizer ``gamma`` the transport of ``V`` is defined by

    nabla_{gamma_dot(t)} V(t) = Ric_{g(t)}(V(t), .)^sharp ,

which compensates the metric's own decay so that ``|V(t)|_{g(t)}`` is
constant: the map from ``(T_{m'}M, g(t'))`` to ``(T_{m''}M, g(t''))`` is a
linear isometry.  The integration re-runs the curve's initial value problem
and carries the transported vectors along, fourth order in the step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import L0GeodesicResult
from .geometry import ConfigError, MetricFamily, Point, TangentVec

__all__ = ["TransportMap", "spacetime_transport", "transport_matrix"]


@dataclass(eq=False)
class TransportMap:
    """Frame representation of the transport along one minimizer.

    ``matrix[:, j]`` holds the coefficients, in the deterministic frame at
    the target, of the transported j-th frame vector of the source.
    """

    source_time: float
    source_point: Point
    target_time: float
    target_point: Point
    matrix: np.ndarray

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(coeffs, dtype=float)

    @property
    def orthogonality_defect(self) -> float:
        d = self.matrix.shape[0]
        return float(
            np.max(np.abs(self.matrix.T @ self.matrix - np.eye(d)))
        )


def _check_transport_input(result: L0GeodesicResult, v: TangentVec):
    if not result.converged:
        raise ConfigError("transport needs a converged minimizer")
    if not np.allclose(v.base.coords, result.m_lo.coords, atol=1e-10):
        raise ConfigError("vector must be based at the curve's start point")


def _transport_rows(fam: MetricFamily, result: L0GeodesicResult, rows: np.ndarray):
    """Integrate the transport equation for a stack of row vectors."""
    t_grid = result.curve.t_grid
    y = result.m_lo.coords.copy()
    v = result.v0.components.copy()
    w = rows.copy()
    acc = fam.l0_acceleration
    rate = fam.transport_rate
    for j in range(t_grid.size - 1):
        t = t_grid[j]
        h = t_grid[j + 1] - t
        k1y, k1v = v, acc(t, y, v)
        k1w = rate(t, y, v, w)
        y2, v2, w2 = y + 0.5 * h * k1y, v + 0.5 * h * k1v, w + 0.5 * h * k1w
        k2y, k2v = v2, acc(t + 0.5 * h, y2, v2)
        k2w = rate(t + 0.5 * h, y2, v2, w2)
        y3, v3, w3 = y + 0.5 * h * k2y, v + 0.5 * h * k2v, w + 0.5 * h * k2w
        k3y, k3v = v3, acc(t + 0.5 * h, y3, v3)
        k3w = rate(t + 0.5 * h, y3, v3, w3)
        y4, v4, w4 = y + h * k3y, v + h * k3v, w + h * k3w
        k4y, k4v = v4, acc(t + h, y4, v4)
        k4w = rate(t + h, y4, v4, w4)
        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        w = w + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        y = fam.project_to_manifold(y)
        v = fam.project_to_tangent(y, v)
        w = fam.project_to_tangent(y[None, :], w) if w.ndim == 2 else w
    return y, w


def spacetime_transport(
    fam: MetricFamily, result: L0GeodesicResult, v: TangentVec
) -> TangentVec:
    """Transport ``v`` from the start to the end of the solved minimizer.

    The output is based at ``result.m_hi`` so it composes directly with the
    frame and inner product there.
    """
    _check_transport_input(result, v)
    _, rows = _transport_rows(fam, result, v.components[None, :])
    out = fam.project_to_tangent(result.m_hi.coords, rows[0])
    return TangentVec(result.m_hi, out)


def transport_matrix(fam: MetricFamily, result: L0GeodesicResult) -> TransportMap:
    """Transport the deterministic source frame and express it in the
    deterministic target frame."""
    if not result.converged:
        raise ConfigError("transport needs a converged minimizer")
    t_lo, t_hi = result.t_lo, result.t_hi
    m_lo, m_hi = result.m_lo, result.m_hi
    frame_lo = fam.frame(t_lo, m_lo)
    frame_hi = fam.frame(t_hi, m_hi)
    _, rows = _transport_rows(fam, result, frame_lo)
    d = fam.d
    mat = np.empty((d, d))
    for j in range(d):
        moved = TangentVec(m_hi, rows[j])
        for i in range(d):
            mat[i, j] = fam.inner(t_hi, TangentVec(m_hi, frame_hi[i]), moved)
    return TransportMap(t_lo, m_lo, t_hi, m_hi, mat)
