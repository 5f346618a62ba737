"""Command-line entry point.

Subcommands: distance, geodesic, transport, couple, verify-sm,
verify-mono, invariants.  A JSON config (--config) provides defaults and
explicit flags override it.  Exit codes: 0 success, 1 solver failure,
2 configuration error, 3 verification violation.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .checks import run_invariant_suite
from .config import ExperimentConfig
from .coupling import run_ensemble
from .geometry import ConfigError, L0FlowError, SolverError, TangentVec
from .otverify import (
    PhiSpec,
    initial_plan_pairs,
    monotonicity_experiment,
    sample_marginals,
    supermartingale_test,
)
from .report import emit_report, fmt
from .solver import l0_distance, l0_geodesic_ivp
from .transport import transport_matrix

__all__ = ["run_cli", "main"]


def _coords(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad coordinate list {text!r}") from None


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file; flags override it")
    sub.add_argument("--model", choices=("torus", "sphere"))
    sub.add_argument("--d", type=int)
    sub.add_argument("--T", type=float, dest="T")
    sub.add_argument("--L", type=float, dest="L")
    sub.add_argument("--out-csv", dest="out_csv")
    sub.add_argument("--out-json", dest="out_json")
    sub.add_argument("--threads", type=int)
    sub.add_argument("--backend", choices=("compiled", "python", "reference"))


def _add_window(sub):
    sub.add_argument("--tp", type=float, help="window start time t'")
    sub.add_argument("--tq", type=float, help="window end time t''")
    sub.add_argument("--p", type=_coords, help="comma-separated coordinates")
    sub.add_argument("--q", type=_coords)
    sub.add_argument("--method", choices=("auto", "generic"))
    sub.add_argument("--n-grid", type=int, dest="n_grid")
    sub.add_argument("--n-starts", type=int, dest="n_starts")


def _add_schedule(sub):
    sub.add_argument("--t1p", type=float, dest="t1_prime")
    sub.add_argument("--t1pp", type=float, dest="t1_dprime")
    sub.add_argument("--S", type=float, dest="S")
    sub.add_argument("--epsilon", "--eps", type=float, dest="epsilon")
    sub.add_argument("--n-paths", type=int, dest="n_paths")
    sub.add_argument("--master-seed", type=int, dest="master_seed")
    sub.add_argument("--p", type=_coords)
    sub.add_argument("--q", type=_coords)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l0flow",
        description="Cost geometry and coupled random walks on exact model "
        "Ricci flows",
    )
    subs = parser.add_subparsers(dest="experiment", required=True)

    sp = subs.add_parser("distance", help="two-point cost solve")
    _add_common(sp)
    _add_window(sp)

    sp = subs.add_parser("geodesic", help="integrate a critical curve")
    _add_common(sp)
    _add_window(sp)
    sp.add_argument("--v0", type=_coords, help="initial velocity components")

    sp = subs.add_parser("transport", help="transport a frame along a pair solve")
    _add_common(sp)
    _add_window(sp)

    sp = subs.add_parser("couple", help="run coupled trajectories")
    _add_common(sp)
    _add_schedule(sp)
    sp.add_argument("--combined", action="store_true", default=None,
                    help="one long-format CSV instead of one file per path")

    sp = subs.add_parser("verify-sm", help="supermartingale test on an ensemble")
    _add_common(sp)
    _add_schedule(sp)

    sp = subs.add_parser("verify-mono", help="transport-cost monotonicity")
    _add_common(sp)
    _add_schedule(sp)
    sp.add_argument("--n-points", type=int, dest="n_points")
    sp.add_argument("--n-checkpoints", type=int, dest="n_checkpoints")
    sp.add_argument("--n-boot", type=int, dest="n_boot")
    sp.add_argument("--phi", action="append",
                    help="identity | capped[:c] | exp_saturating (repeatable)")

    sp = subs.add_parser("invariants", help="run the property suite")
    _add_common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--quick", action="store_true", default=None)
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"malformed config JSON: {err}") from None
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("config", "experiment") and v is not None
    }
    data.update(overrides)
    data["experiment"] = args.experiment
    return ExperimentConfig.from_dict(data)


# ---- subcommands -------------------------------------------------------------


def _point_pair(cfg, fam):
    if cfg.p is not None and cfg.q is not None:
        return fam.point(np.array(cfg.p)), fam.point(np.array(cfg.q))
    if cfg.master_seed is None:
        raise ConfigError("give --p/--q or a master_seed to sample them")
    xs, ys = sample_marginals(fam, 1, cfg.master_seed)
    return fam.point(xs[0]), fam.point(ys[0])


def _cmd_distance(cfg: ExperimentConfig) -> int:
    fam = cfg.make_fam()
    if cfg.p is None or cfg.q is None:
        raise ConfigError("distance needs --p and --q")
    res = l0_distance(
        fam, cfg.tp, cfg.tq, fam.point(np.array(cfg.p)), fam.point(np.array(cfg.q)),
        cfg.make_solver_opts(),
    )
    payload = {
        "action": res.action,
        "v0": res.v0.components.tolist(),
        "v1": res.v1.components.tolist(),
        "residual": res.residual,
        "multiplicity_flag": res.multiplicity_flag,
        "converged": res.converged,
    }
    emit_report({"json": payload}, {"json": cfg.out_json})
    print(
        f"l0 {fmt(res.action)} flag={int(res.multiplicity_flag)} "
        f"residual={fmt(res.residual)}"
    )
    return 0 if res.converged else 1


def _cmd_geodesic(cfg: ExperimentConfig) -> int:
    fam = cfg.make_fam()
    if cfg.p is None or cfg.v0 is None:
        raise ConfigError("geodesic needs --p and --v0")
    m_lo = fam.point(np.array(cfg.p))
    curve = l0_geodesic_ivp(
        fam, cfg.tp, cfg.tq, m_lo, TangentVec(m_lo, np.array(cfg.v0)), cfg.n_grid
    )
    rows = [
        [t] + list(c) for t, c in zip(curve.t_grid, curve.coords)
    ]
    header = ["t"] + [f"x{i}" for i in range(fam.ncoords)]
    emit_report({"csv": (header, rows)}, {"csv": cfg.out_csv})
    end = curve.coords[-1]
    print("endpoint " + ",".join(fmt(float(c)) for c in end))
    return 0


def _cmd_transport(cfg: ExperimentConfig) -> int:
    fam = cfg.make_fam()
    if cfg.p is None or cfg.q is None:
        raise ConfigError("transport needs --p and --q")
    res = l0_distance(
        fam, cfg.tp, cfg.tq, fam.point(np.array(cfg.p)), fam.point(np.array(cfg.q)),
        cfg.make_solver_opts(),
    )
    if not res.converged:
        print(f"pair solve failed, residual {fmt(res.residual)}", file=sys.stderr)
        return 1
    tm = transport_matrix(fam, res)
    payload = {
        "matrix": tm.matrix.tolist(),
        "orthogonality_defect": tm.orthogonality_defect,
        "action": res.action,
        "multiplicity_flag": res.multiplicity_flag,
    }
    emit_report({"json": payload}, {"json": cfg.out_json})
    print(f"transport defect {fmt(tm.orthogonality_defect)}")
    return 0


def _path_rows(path, with_id=None):
    rows = []
    for k in range(path.s.size):
        row = [] if with_id is None else [with_id]
        row.append(float(path.s[k]))
        row.extend(float(v) for v in path.X[k])
        row.extend(float(v) for v in path.Y[k])
        row.append(float(path.Lambda[k]))
        row.append(int(path.mult_hits[k]))
        rows.append(row)
    return rows


def _cmd_couple(cfg: ExperimentConfig) -> int:
    fam = cfg.make_fam()
    schedule = cfg.make_schedule()
    pair = _point_pair(cfg, fam)
    n_paths = cfg.n_paths or 1
    paths = run_ensemble(
        fam, schedule, pair, cfg.master_seed, n_paths,
        threads=cfg.threads, backend=cfg.backend, record="full",
    )
    nc = fam.ncoords
    base = (
        ["s"]
        + [f"X{i}" for i in range(nc)]
        + [f"Y{i}" for i in range(nc)]
        + ["Lambda", "multiplicity_hit"]
    )
    if cfg.out_csv:
        if n_paths == 1:
            emit_report({"csv": (base, _path_rows(paths[0]))}, {"csv": cfg.out_csv})
        elif cfg.combined:
            rows = []
            for i, p in enumerate(paths):
                rows.extend(_path_rows(p, with_id=i))
            emit_report({"csv": (["path"] + base, rows)}, {"csv": cfg.out_csv})
        else:
            stem, dot, ext = cfg.out_csv.rpartition(".")
            if not dot:
                stem, ext = cfg.out_csv, "csv"
            for i, p in enumerate(paths):
                emit_report(
                    {"csv": (base, _path_rows(p))},
                    {"csv": f"{stem}_{i:04d}.{ext}"},
                )
    final = np.array([p.Lambda[-1] for p in paths])
    drift = np.array([p.Lambda[-1] - p.Lambda[0] for p in paths])
    summary = {
        "n_paths": n_paths,
        "n_steps": paths[0].n_steps,
        "final_lambda_mean": float(final.mean()),
        "pathwise_drift_mean": float(drift.mean()),
        "total_mult_hits": int(sum(p.total_mult_hits for p in paths)),
    }
    emit_report({"json": summary}, {"json": cfg.out_json})
    print(
        f"couple paths={n_paths} steps={summary['n_steps']} "
        f"drift_mean={fmt(summary['pathwise_drift_mean'])}"
    )
    return 0


def _cmd_verify_sm(cfg: ExperimentConfig) -> int:
    fam = cfg.make_fam()
    schedule = cfg.make_schedule()
    pair = _point_pair(cfg, fam)
    n_paths = cfg.n_paths or 1000
    paths = run_ensemble(
        fam, schedule, pair, cfg.master_seed, n_paths,
        threads=cfg.threads, backend=cfg.backend, record="lambda",
    )
    rep = supermartingale_test(paths)
    per = rep["per_step"]
    rows = list(zip(per["s"], per["mean"], per["se"]))
    emit_report(
        {"csv": (["s", "mean_increment", "se"], rows), "json": rep},
        {"csv": cfg.out_csv, "json": cfg.out_json},
    )
    pooled = rep["pooled"]
    print(
        f"verify-sm mean={fmt(pooled['mean_increment'])} "
        f"upper_cb={fmt(pooled['upper_cb'])} p={fmt(pooled['p_value'])} "
        f"consistent={int(rep['supermartingale_consistent'])}"
    )
    return 0 if rep["supermartingale_consistent"] else 3


def _parse_phi(text: str, default_cap: float) -> PhiSpec:
    if text == "identity":
        return PhiSpec.identity()
    if text == "exp_saturating":
        return PhiSpec.exp_saturating()
    if text == "capped":
        return PhiSpec.capped(default_cap)
    if text.startswith("capped:"):
        try:
            return PhiSpec.capped(float(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad capped spec {text!r}") from None
    raise ConfigError(f"unknown phi {text!r}")


def _cmd_verify_mono(cfg: ExperimentConfig) -> int:
    fam = cfg.make_fam()
    schedule = cfg.make_schedule()
    n = cfg.n_points or 64
    xs, ys = sample_marginals(fam, n, cfg.master_seed)
    reports = []
    rows = []
    for text in cfg.phi:
        # the default cap saturates at the raw initial optimal cost
        raw_pairs, raw_plan = initial_plan_pairs(fam, schedule, xs, ys)
        phi = _parse_phi(text, default_cap=raw_plan.cost)
        if phi.kind == "identity":
            pairs = raw_pairs
        else:
            pairs, _ = initial_plan_pairs(fam, schedule, xs, ys, phi)
        rep = monotonicity_experiment(
            fam, schedule, pairs, phi, cfg.master_seed,
            n_checkpoints=cfg.n_checkpoints, n_boot=cfg.n_boot,
            threads=cfg.threads, backend=cfg.backend,
        )
        reports.append(rep)
        for j in range(len(rep["s"])):
            rows.append(
                (rep["phi"], rep["s"][j], rep["cost"][j], rep["stderr"][j],
                 int(rep["flag"][j]))
            )
    emit_report(
        {"csv": (["phi", "s", "cost", "stderr", "flag"], rows), "json": reports},
        {"csv": cfg.out_csv, "json": cfg.out_json},
    )
    worst = max(rep["max_increment_in_se"] for rep in reports)
    bad = any(rep["violation"] for rep in reports)
    print(f"verify-mono phis={len(reports)} max_increment_in_se={fmt(worst)} "
          f"violation={int(bad)}")
    return 3 if bad else 0


def _cmd_invariants(cfg: ExperimentConfig) -> int:
    fam = cfg.make_fam()
    reports = run_invariant_suite(fam, cfg.seed or 0, quick=bool(cfg.quick))
    for rep in reports:
        tag = "PASS" if rep["passed"] else "FAIL"
        print(
            f"{tag} {rep['name']} max_violation={fmt(rep['max_violation'])} "
            f"tol={fmt(rep['tolerance'])}"
        )
    emit_report({"json": reports}, {"json": cfg.out_json})
    failed = [r["name"] for r in reports if not r["passed"]]
    print(f"invariants {len(reports) - len(failed)}/{len(reports)} passed")
    return 3 if failed else 0


_DISPATCH = {
    "distance": _cmd_distance,
    "geodesic": _cmd_geodesic,
    "transport": _cmd_transport,
    "couple": _cmd_couple,
    "verify-sm": _cmd_verify_sm,
    "verify-mono": _cmd_verify_mono,
    "invariants": _cmd_invariants,
}


def run_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        cfg = _config_from_args(args)
        return _DISPATCH[cfg.experiment](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2
    except L0FlowError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())
