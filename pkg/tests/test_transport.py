"""Space-time parallel transport along solved minimizers.

The ODE integration is checked against the closed-form transport (standard
parallel transport times the conformal norm correction on the sphere, the
identity on the static torus) and against the structural facts that define
the map: linearity, isometry, and tangency at the target.
"""

from dataclasses import replace

import numpy as np
import pytest

from l0flow import (
    ConfigError,
    TangentVec,
    l0_distance,
    spacetime_transport,
    transport_matrix,
)
from conftest import g_norm


def test_torus_transport_matrix_is_exactly_identity(torus2):
    res = l0_distance(torus2, 0.1, 0.7, torus2.point([0.2, 0.3]), torus2.point([0.6, 0.8]))
    tm = transport_matrix(torus2, res)
    assert np.array_equal(tm.matrix, np.eye(2))
    assert tm.orthogonality_defect == 0.0


def test_torus_transport_keeps_components(torus3):
    p, q = torus3.point([0.1, 0.2, 0.3]), torus3.point([1.1, 0.4, 1.9])
    res = l0_distance(torus3, 0.0, 1.0, p, q)
    v = TangentVec(res.m_lo, [0.5, -1.0, 0.25])
    out = spacetime_transport(torus3, res, v)
    assert out.components == pytest.approx([0.5, -1.0, 0.25], abs=1e-14)
    assert np.array_equal(out.base.coords, res.m_hi.coords)


@pytest.mark.parametrize("seed", [3, 7, 11])
def test_sphere_transport_matches_closed_form(sphere2, seed):
    rng = np.random.default_rng(seed)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    res = l0_distance(sphere2, 0.02, 0.15, p, q)
    tm = transport_matrix(sphere2, res)
    want = sphere2.exact_transport_matrix(0.02, 0.15, p, q)
    assert np.max(np.abs(tm.matrix - want)) < 1e-8


def test_sphere_transport_matches_closed_form_d3(sphere3):
    rng = np.random.default_rng(5)
    p, q = sphere3.random_point(rng), sphere3.random_point(rng)
    res = l0_distance(sphere3, 0.01, 0.11, p, q)
    tm = transport_matrix(sphere3, res)
    want = sphere3.exact_transport_matrix(0.01, 0.11, p, q)
    assert np.max(np.abs(tm.matrix - want)) < 1e-8


def test_transport_is_an_isometry(sphere3):
    rng = np.random.default_rng(8)
    p, q = sphere3.random_point(rng), sphere3.random_point(rng)
    res = l0_distance(sphere3, 0.03, 0.2, p, q)
    tm = transport_matrix(sphere3, res)
    assert tm.orthogonality_defect < 1e-8
    v = TangentVec(res.m_lo, sphere3.project_to_tangent(res.m_lo.coords, rng.normal(size=4)))
    out = spacetime_transport(sphere3, res, v)
    assert g_norm(sphere3, 0.2, out) == pytest.approx(g_norm(sphere3, 0.03, v), rel=1e-9)


def test_transport_is_linear(sphere2):
    rng = np.random.default_rng(9)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    res = l0_distance(sphere2, 0.02, 0.18, p, q)
    proj = lambda z: sphere2.project_to_tangent(res.m_lo.coords, z)
    u = proj(rng.normal(size=3))
    w = proj(rng.normal(size=3))
    lhs = spacetime_transport(
        sphere2, res, TangentVec(res.m_lo, 2.0 * u - 0.5 * w)
    ).components
    tu = spacetime_transport(sphere2, res, TangentVec(res.m_lo, u)).components
    tw = spacetime_transport(sphere2, res, TangentVec(res.m_lo, w)).components
    assert lhs == pytest.approx(2.0 * tu - 0.5 * tw, abs=1e-12)


def test_transported_vector_is_tangent_at_target(sphere2):
    rng = np.random.default_rng(10)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    res = l0_distance(sphere2, 0.02, 0.15, p, q)
    v = TangentVec(res.m_lo, sphere2.project_to_tangent(res.m_lo.coords, rng.normal(size=3)))
    out = spacetime_transport(sphere2, res, v)
    assert abs(np.dot(out.components, out.base.coords)) < 1e-12


def test_transport_refuses_unconverged_result(sphere2):
    rng = np.random.default_rng(12)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    res = replace(l0_distance(sphere2, 0.02, 0.15, p, q), converged=False)
    with pytest.raises(ConfigError):
        transport_matrix(sphere2, res)
    with pytest.raises(ConfigError):
        spacetime_transport(sphere2, res, TangentVec(res.m_lo, [0.0, 1.0, 0.0]))


def test_transport_refuses_vector_based_elsewhere(sphere2):
    rng = np.random.default_rng(13)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    res = l0_distance(sphere2, 0.02, 0.15, p, q)
    stray = sphere2.random_point(rng)
    v = TangentVec(stray, sphere2.project_to_tangent(stray.coords, [0.3, 0.1, -0.2]))
    with pytest.raises(ConfigError):
        spacetime_transport(sphere2, res, v)


def test_transport_matrix_roundtrip_applies_frame_coefficients(sphere2):
    # applying the matrix to a coefficient vector agrees with transporting
    # the corresponding tangent vector and reading it back in the frame
    rng = np.random.default_rng(14)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    res = l0_distance(sphere2, 0.02, 0.15, p, q)
    tm = transport_matrix(sphere2, res)
    frame_lo = sphere2.frame(0.02, res.m_lo)
    frame_hi = sphere2.frame(0.15, res.m_hi)
    coeffs = np.array([0.7, -1.2])
    v = TangentVec(res.m_lo, coeffs @ frame_lo)
    out = spacetime_transport(sphere2, res, v)
    read_back = np.array([
        sphere2.inner(0.15, TangentVec(res.m_hi, f), out) for f in frame_hi
    ])
    assert tm.apply(coeffs) == pytest.approx(read_back, abs=1e-10)
