"""Walk scheduling, RNG streams, single steps, and ensemble determinism."""

import numpy as np
import pytest

from l0flow import (
    ConfigError,
    Point,
    RngStream,
    SolverError,
    TimeSchedule,
    coupling_step,
    run_coupling,
    run_ensemble,
    sample_ball,
)
from l0flow import coupling
from l0flow.coupling import resolve_threads


# ---- schedules -------------------------------------------------------------------


def test_schedule_grid_exact_multiple():
    sched = TimeSchedule(0.3, 0.4, S=0.04, epsilon=0.2)
    assert sched.n_steps == 1
    assert np.array_equal(sched.s_grid(), [0.0, 0.04])


def test_schedule_grid_partial_final_step():
    sched = TimeSchedule(0.3, 0.4, S=0.05, epsilon=0.2)
    assert sched.n_steps == 2
    assert sched.s_grid() == pytest.approx([0.0, 0.04, 0.05], abs=1e-15)


def test_schedule_zero_horizon():
    sched = TimeSchedule(0.3, 0.4, S=0.0, epsilon=0.1)
    assert sched.n_steps == 0
    assert np.array_equal(sched.s_grid(), [0.0])


def test_schedule_reversed_times():
    sched = TimeSchedule(0.3, 0.45, S=0.1, epsilon=0.1)
    assert sched.tau_prime(0.1) == pytest.approx(0.2)
    assert sched.tau_dprime(0.1) == pytest.approx(0.35)


@pytest.mark.parametrize(
    "args",
    [
        (0.4, 0.3, 0.1, 0.1),   # times out of order
        (0.3, 0.3, 0.1, 0.1),   # degenerate window
        (0.3, 0.4, -0.1, 0.1),  # negative horizon
        (0.3, 0.4, 0.1, 0.0),   # zero step scale
        (0.3, 0.4, 0.35, 0.1),  # walk exits the flow domain at s = S
    ],
)
def test_schedule_validation(args):
    with pytest.raises(ConfigError):
        TimeSchedule(*args)


def test_schedule_validate_for_flow_horizon(sphere2):
    sched = TimeSchedule(0.18, 0.25, S=0.1, epsilon=0.1)
    with pytest.raises(ConfigError):
        sched.validate_for(sphere2)


# ---- randomness ------------------------------------------------------------------


def test_rng_stream_is_reproducible():
    a = RngStream(123, 7).generator().standard_normal(5)
    b = RngStream(123, 7).generator().standard_normal(5)
    c = RngStream(123, 8).generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_ball_shapes_and_support():
    draws = sample_ball(RngStream(9), 3, size=1000)
    assert draws.shape == (1000, 3)
    assert np.max(np.linalg.norm(draws, axis=1)) <= 1.0
    single = sample_ball(RngStream(9), 3)
    assert single.shape == (3,)
    assert np.array_equal(single, sample_ball(RngStream(9), 3))


def test_sample_ball_rejects_low_dimension():
    with pytest.raises(ConfigError):
        sample_ball(RngStream(1), 1)


def test_sample_ball_second_moment():
    # the ball-uniform law is scaled so that (d+2) E[lam lam^T] = I
    d = 3
    draws = sample_ball(RngStream(10), d, size=200_000)
    second = (d + 2) * (draws.T @ draws) / draws.shape[0]
    assert np.max(np.abs(second - np.eye(d))) < 0.01


# ---- single steps ----------------------------------------------------------------


def test_torus_step_displaces_both_walkers_equally(torus2):
    sched = TimeSchedule(0.3, 0.6, S=0.01, epsilon=0.1)
    X, Y = torus2.point([0.2, 0.8]), torus2.point([0.5, 0.1])
    lam = np.array([0.3, -0.2])
    x2, y2, diag = coupling_step(torus2, sched, 0.0, X, Y, lam)
    dx = torus2.min_image(x2.coords - X.coords)
    dy = torus2.min_image(y2.coords - Y.coords)
    assert dx == pytest.approx(dy, abs=1e-12)
    scale = np.sqrt(2.0 * 4) * sched.epsilon
    assert dx == pytest.approx(scale * lam, abs=1e-12)
    assert not diag["multiplicity_flag"]


def test_step_at_horizon_raises(torus2):
    sched = TimeSchedule(0.3, 0.6, S=0.01, epsilon=0.1)
    X, Y = torus2.point([0.2, 0.8]), torus2.point([0.5, 0.1])
    with pytest.raises(ConfigError):
        coupling_step(torus2, sched, 0.01, X, Y, np.array([0.1, 0.0]))


def test_sphere_step_preserves_increment_norm(sphere2):
    # the transported inbound increment has the same g-norm as the outbound
    sched = TimeSchedule(0.15, 0.18, S=0.01, epsilon=0.1)
    rng = np.random.default_rng(31)
    X, Y = sphere2.random_point(rng), sphere2.random_point(rng)
    lam = sample_ball(rng, 2)
    x2, y2, _ = coupling_step(sphere2, sched, 0.0, X, Y, lam)
    ell_out = sphere2.dist(0.15, X, x2)
    ell_in = sphere2.dist(0.18, Y, y2)
    assert ell_in == pytest.approx(ell_out, rel=1e-6)


# ---- whole trajectories ----------------------------------------------------------


def test_run_coupling_record_modes(sphere2):
    sched = TimeSchedule(0.18, 0.19, S=0.002, epsilon=0.02)
    rng = np.random.default_rng(33)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    full = run_coupling(sphere2, sched, p, q, RngStream(34, 0), record="full")
    slim = run_coupling(sphere2, sched, p, q, RngStream(34, 0), record="lambda")
    assert full.X.shape == (sched.n_steps + 1, 3)
    assert slim.X is None and slim.Y is None
    assert np.array_equal(full.Lambda, slim.Lambda)
    assert full.ok and slim.ok
    with pytest.raises(ConfigError):
        run_coupling(sphere2, sched, p, q, RngStream(34, 0), record="bogus")


def test_run_coupling_is_reproducible(sphere2):
    sched = TimeSchedule(0.18, 0.19, S=0.002, epsilon=0.02)
    rng = np.random.default_rng(35)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    a = run_coupling(sphere2, sched, p, q, RngStream(36, 4))
    b = run_coupling(sphere2, sched, p, q, RngStream(36, 4))
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.Lambda, b.Lambda)


def test_run_coupling_reports_aborted_trajectory(torus2, monkeypatch):
    def boom(*args, **kwargs):
        raise SolverError("no geodesic today")

    monkeypatch.setattr(coupling, "l0_distance", boom)
    sched = TimeSchedule(0.3, 0.6, S=0.01, epsilon=0.1)
    p, q = torus2.point([0.1, 0.1]), torus2.point([0.4, 0.2])
    path = run_coupling(torus2, sched, p, q, RngStream(37, 0), backend="reference")
    assert not path.ok
    assert "no geodesic" in path.failure
    assert np.isnan(path.Lambda).all()


def test_run_ensemble_matches_per_stream_runs(torus2):
    sched = TimeSchedule(0.3, 0.6, S=0.02, epsilon=0.05)
    p, q = torus2.point([0.1, 0.1]), torus2.point([0.4, 0.2])
    paths = run_ensemble(torus2, sched, (p, q), master_seed=40, n_paths=5, threads=1)
    for i, path in enumerate(paths):
        solo = run_coupling(torus2, sched, p, q, RngStream(40, i), record="lambda")
        assert np.array_equal(path.Lambda, solo.Lambda)


def test_run_ensemble_is_worker_count_invariant(sphere2):
    sched = TimeSchedule(0.18, 0.19, S=0.004, epsilon=0.02)
    rng = np.random.default_rng(41)
    p, q = sphere2.random_point(rng), sphere2.random_point(rng)
    ref = run_ensemble(sphere2, sched, (p, q), master_seed=42, n_paths=12, threads=1)
    par = run_ensemble(sphere2, sched, (p, q), master_seed=42, n_paths=12, threads=3)
    for a, b in zip(ref, par):
        assert np.array_equal(a.Lambda, b.Lambda)


def test_run_ensemble_per_path_pairs(torus2):
    sched = TimeSchedule(0.3, 0.6, S=0.01, epsilon=0.05)
    pairs = [
        (torus2.point([0.1 * i, 0.0]), torus2.point([0.0, 0.1 * i])) for i in range(4)
    ]
    paths = run_ensemble(torus2, sched, pairs, master_seed=43, n_paths=4, threads=1)
    for (m_lo, m_hi), path in zip(pairs, paths):
        want = torus2.exact_l0(sched.t1_prime, sched.t1_dprime, m_lo, m_hi)[0]
        assert path.Lambda[0] == pytest.approx(want, rel=1e-12)


def test_run_ensemble_pair_count_validation(torus2):
    sched = TimeSchedule(0.3, 0.6, S=0.01, epsilon=0.05)
    pairs = [(torus2.point([0.1, 0.0]), torus2.point([0.0, 0.1]))] * 3
    with pytest.raises(ConfigError):
        run_ensemble(torus2, sched, pairs, master_seed=1, n_paths=4, threads=1)
    with pytest.raises(ConfigError):
        run_ensemble(torus2, sched, pairs, master_seed=1, n_paths=0, threads=1)


def test_run_ensemble_surfaces_failures(torus2, monkeypatch):
    def boom(*args, **kwargs):
        raise SolverError("nope")

    monkeypatch.setattr(coupling, "l0_distance", boom)
    sched = TimeSchedule(0.3, 0.6, S=0.01, epsilon=0.1)
    p, q = torus2.point([0.1, 0.1]), torus2.point([0.4, 0.2])
    with pytest.raises(SolverError, match="aborted"):
        run_ensemble(
            torus2, sched, (p, q), master_seed=44, n_paths=3, threads=1,
            backend="reference",
        )


# ---- worker resolution -----------------------------------------------------------


def test_resolve_threads_precedence(monkeypatch):
    assert resolve_threads(4) == 4
    monkeypatch.setenv("L0FLOW_THREADS", "6")
    assert resolve_threads() == 6
    assert resolve_threads(2) == 2
    monkeypatch.delenv("L0FLOW_THREADS")
    assert resolve_threads() >= 1


def test_resolve_threads_rejects_nonpositive():
    with pytest.raises(ConfigError):
        resolve_threads(0)
