"""Walk-kernel backends: selection rules and arithmetic agreement.

The compiled and NumPy kernels must be interchangeable to rounding noise,
and both must agree with the slow reference loop that composes the public
geometry ops (solve, transport, exponential) instead of model-specialized
formulas.
"""

import numpy as np
import pytest

from l0flow import (
    ConfigError,
    RngStream,
    SolverOptions,
    TimeSchedule,
    run_coupling,
    sample_ball,
    sphere_l0_distance,
    torus_l0_distance,
)
from l0flow import kernels

HAVE_COMPILED = "compiled" in kernels.available_backends()
needs_compiled = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled extension not built"
)


# ---- backend selection -----------------------------------------------------------


def test_python_backend_always_available():
    assert "python" in kernels.available_backends()


def test_compiled_preferred_when_present():
    if HAVE_COMPILED:
        assert kernels.available_backends()[0] == "compiled"
        assert kernels.default_backend() == "compiled"
    else:
        assert kernels.default_backend() == "python"


def test_env_var_forces_backend(monkeypatch):
    monkeypatch.setenv("L0FLOW_KERNEL", "python")
    assert kernels.default_backend() == "python"
    monkeypatch.setenv("L0FLOW_KERNEL", "fortran")
    with pytest.raises(ConfigError):
        kernels.default_backend()


def test_forcing_missing_compiled_backend_raises(monkeypatch):
    monkeypatch.setitem(kernels._MODULES, "compiled", None)
    with pytest.raises(ConfigError):
        kernels.path_function("torus", "compiled")
    monkeypatch.setenv("L0FLOW_KERNEL", "compiled")
    with pytest.raises(ConfigError):
        kernels.default_backend()


def test_unknown_model_or_backend_raises():
    with pytest.raises(ConfigError):
        kernels.path_function("klein", "python")
    with pytest.raises(ConfigError):
        kernels.path_function("torus", "mystery")


# ---- backend agreement -----------------------------------------------------------


def _walk_inputs(d, n_steps, seed):
    rng = np.random.default_rng(seed)
    s_grid = np.linspace(0.0, n_steps * 4e-4, n_steps + 1)
    lam = sample_ball(rng, d, size=n_steps)
    return s_grid, lam


@needs_compiled
def test_torus_backends_agree_exactly():
    f_c = kernels.path_function("torus", "compiled")
    f_p = kernels.path_function("torus", "python")
    s_grid, lam = _walk_inputs(3, 200, 1)
    x0 = np.array([0.1, 0.9, 0.4])
    y0 = np.array([0.3, 0.2, 0.8])
    out_c = f_c(1.0, 0.3, 0.4, 0.02, s_grid, x0, y0, lam)
    out_p = f_p(1.0, 0.3, 0.4, 0.02, s_grid, x0, y0, lam)
    for a, b in zip(out_c, out_p):
        assert np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))) < 1e-13


@needs_compiled
@pytest.mark.parametrize("d", [2, 3])
def test_sphere_backends_agree(d):
    f_c = kernels.path_function("sphere", "compiled")
    f_p = kernels.path_function("sphere", "python")
    s_grid, lam = _walk_inputs(d, 300, 2 + d)
    rng = np.random.default_rng(40 + d)
    x0 = rng.normal(size=d + 1)
    y0 = rng.normal(size=d + 1)
    Xc, Yc, Lc, mc = f_c(d, 0.18, 0.19, 0.02, s_grid, x0.copy(), y0.copy(), lam)
    Xp, Yp, Lp, mp = f_p(d, 0.18, 0.19, 0.02, s_grid, x0.copy(), y0.copy(), lam)
    assert np.max(np.abs(Xc - Xp)) < 1e-12
    assert np.max(np.abs(Yc - Yp)) < 1e-12
    assert np.max(np.abs(Lc - Lp)) < 1e-10
    assert np.array_equal(mc, mp)


def test_kernel_agrees_with_reference_loop(sphere2):
    schedule = TimeSchedule(0.18, 0.19, S=0.004, epsilon=0.02)
    rng = np.random.default_rng(50)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    stream = RngStream(77, 0)
    fast = run_coupling(sphere2, schedule, p, q, stream, backend="python")
    slow = run_coupling(
        sphere2, schedule, p, q, stream,
        backend="reference", opts=SolverOptions(n_grid=256),
    )
    assert np.max(np.abs(fast.X - slow.X)) < 1e-8
    assert np.max(np.abs(fast.Y - slow.Y)) < 1e-8
    assert np.max(np.abs(fast.Lambda - slow.Lambda)) < 1e-8


def test_torus_kernel_agrees_with_reference_loop(torus2):
    schedule = TimeSchedule(0.3, 0.5, S=0.004, epsilon=0.02)
    p, q = torus2.point([0.15, 0.85]), torus2.point([0.4, 0.1])
    stream = RngStream(78, 0)
    fast = run_coupling(torus2, schedule, p, q, stream, backend="python")
    slow = run_coupling(torus2, schedule, p, q, stream, backend="reference")
    assert np.max(np.abs(fast.X - slow.X)) < 1e-10
    assert np.max(np.abs(fast.Lambda - slow.Lambda)) < 1e-10


# ---- recorded quantities ---------------------------------------------------------


def test_sphere_lambda_matches_closed_form_along_path(sphere3):
    schedule = TimeSchedule(0.1, 0.12, S=0.05, epsilon=0.05)
    rng = np.random.default_rng(60)
    p, q = sphere3.random_point(rng), sphere3.random_point(rng)
    path = run_coupling(sphere3, schedule, p, q, RngStream(61, 0))
    for k, s in enumerate(path.s):
        want = sphere_l0_distance(
            3, schedule.tau_prime(s), schedule.tau_dprime(s), path.X[k], path.Y[k]
        )
        assert path.Lambda[k] == pytest.approx(want, rel=1e-12)


def test_torus_lambda_matches_closed_form_along_path(torus3):
    schedule = TimeSchedule(0.2, 0.7, S=0.02, epsilon=0.04)
    p, q = torus3.point([0.1, 1.7, 0.4]), torus3.point([0.9, 0.2, 1.2])
    path = run_coupling(torus3, schedule, p, q, RngStream(62, 0))
    for k in range(path.s.size):
        want = torus_l0_distance(
            2.0, 3,
            schedule.tau_prime(path.s[k]), schedule.tau_dprime(path.s[k]),
            path.X[k], path.Y[k],
        )
        assert path.Lambda[k] == pytest.approx(want, rel=1e-12)


def test_torus_walk_moves_both_walkers_in_parallel(torus2):
    # the transported increment equals the original one on the flat torus,
    # so the min-image difference Y - X never changes
    schedule = TimeSchedule(0.3, 0.6, S=0.01, epsilon=0.02)
    p, q = torus2.point([0.1, 0.2]), torus2.point([0.35, 0.9])
    path = run_coupling(torus2, schedule, p, q, RngStream(63, 0))
    deltas = torus2.min_image(path.Y - path.X)
    assert np.max(np.abs(deltas - deltas[0])) < 1e-12
    assert np.max(np.abs(path.Lambda - path.Lambda[0])) < 1e-12


def test_antipodal_start_is_flagged():
    f_p = kernels.path_function("sphere", "python")
    s_grid = np.array([0.0, 4e-4])
    lam = np.zeros((1, 2))
    x0 = np.array([1.0, 0.0, 0.0])
    X, Y, Lam, mult = f_p(2, 0.18, 0.19, 0.02, s_grid, x0, -x0, lam)
    assert mult[0] == 1
