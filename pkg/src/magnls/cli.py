"""Command-line front end: ``magnls <command> --config run.ini``.

Exit codes: 0 ok, 2 invalid configuration, 3 solver divergence (or CFL
failure), 4 blowup or shock, 5 boundary leakage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import scipy
import scipy.fft as sfft

from . import __version__
from .config import RunConfig, load_config
from .diagnostics import mixed_norm
from .errors import MagnlsError, RunAborted
from .field import Grid, l2_norm, spectral_gradient, write_snapshot
from .potential import audit_assumption1
from .propagator import solve, trajectory_distance
from . import wkb

log = logging.getLogger("magnls")

INSTABILITY_COLUMNS = ("b", "delta", "init_gap", "t_sep", "t_sep_times_b", "max_separation")
COMPARE_COLUMNS = ("b", "discrepancy", "n_direct", "steps_direct", "n_wkb", "steps_wkb")


# ---------------------------------------------------------------- output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


class Run:
    """Output directory plus the metadata that accompanies every command."""

    def __init__(self, cfg: RunConfig, args, command: str):
        self.cfg = cfg
        self.command = command
        out = args.output_dir or cfg["output"]["dir"]
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        grid = cfg.grid()
        nl = cfg.nonlinearity()
        self.meta = {
            "command": command,
            "config": cfg.as_dict(),
            "config_text": cfg.source,
            "seed": args.seed,
            "versions": {"magnls": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "grid": {"dim": grid.dim, "n": grid.n, "length": grid.length, "spacing": grid.spacing},
            "conventions": {
                "equation": "i u_t = (i grad - bA)^2 u + sign * b^gamma * u g(|u|^2)",
                "sign": nl.sign,
                "gamma": nl.gamma,
                "focusing": nl.sign == -1,
                "energy": "E = 1/2 ||(i grad - bA)u||^2 + sign * b^gamma * G(u), same b^gamma for G_m",
                "ledger": "energy_law_residual = E(t) - E(0) + int_0^t b Re<dA/dt u, (i grad - bA)u> ds",
            },
            "status": "running",
        }
        try:
            audit = audit_assumption1(cfg.potential(), grid,
                                      (cfg["potential"]["audit_t0"], cfg["potential"]["audit_t1"]),
                                      bound=cfg["potential"]["audit_bound"])
            self.meta["potential_audit"] = audit.as_dict()
        except MagnlsError as exc:
            self.meta["potential_audit"] = {"error": str(exc)}

    def path(self, name) -> Path:
        return self.dir / name

    def finish(self, status="ok", **extra):
        self.meta["status"] = status
        self.meta.update(extra)
        write_json(self.path("metadata.json"), self.meta)


def _snapshots(run: Run, times, fields, b, **extra):
    d = run.path("snapshots")
    d.mkdir(exist_ok=True)
    for i, (t, f) in enumerate(zip(times, fields)):
        write_snapshot(d / f"snap_{i:05d}.bin", f, t, b, index=i, **extra)


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: RunConfig, args) -> int:
    run = Run(cfg, args, "solve")
    scfg = cfg.solver(keep_snapshots=cfg["output"]["snapshots"])
    u0 = cfg.initial_field()
    try:
        res = solve(u0, cfg.potential(), cfg.nonlinearity(), scfg)
    except RunAborted as exc:
        _write_solve(run, exc.result, scfg)
        run.finish(exc.reason, reason=str(exc), last_time=exc.time)
        raise
    except MagnlsError as exc:
        if getattr(exc, "result", None) is not None:
            _write_solve(run, exc.result, scfg)
        run.finish("solver-divergence", reason=str(exc))
        raise
    _write_solve(run, res, scfg)
    run.finish("ok", last_time=res.time)
    return 0


def _write_solve(run: Run, res, scfg):
    if res is None:
        return
    res.series.to_csv(run.path("diagnostics.csv"))
    run.meta["solver_stats"] = res.solver_stats
    run.meta["steps"] = res.steps
    run.meta["series_meta"] = res.series.meta
    if scfg.keep_snapshots and len(res.trajectory):
        _snapshots(run, res.trajectory.times, res.trajectory.fields, scfg.b)
        run.meta["strichartz_proxy"] = {"L_inf_L2": mixed_norm(res.trajectory, math.inf, 2.0)}


def _wkb_config(cfg: RunConfig, b: float, grid: Grid | None = None) -> wkb.WKBConfig:
    grid = grid or cfg.grid()
    w = cfg["wkb"]
    S = cfg.phase_function()(*grid.coords())
    grad_S = cfg.phase_gradient()(*grid.coords())
    return wkb.WKBConfig(b=b, t_end=w["t_end"], a0=cfg.initial_field(grid), S=S, grad_S=grad_S, dt=w["dt"],
                         cfl=w["cfl"], dealiasing=w["dealiasing"], shock_ceiling=w["shock_ceiling"],
                         leakage_tol=cfg["solver"]["initial_leakage_tol"])


def cmd_wkb(cfg: RunConfig, args) -> int:
    run = Run(cfg, args, "wkb")
    b = cfg["solver"]["b"]
    wcfg = _wkb_config(cfg, b)
    pot, nl = cfg.potential(), cfg.nonlinearity()
    grid = cfg.grid()
    try:
        traj = wkb.wkb_solve(wcfg, pot, nl)
        status, err = "ok", None
    except RunAborted as exc:
        traj, status, err = exc.result, exc.reason, exc
    rec = wkb.reconstruct(traj, wcfg.S, b, pot, wcfg.grad_S)
    rows = []
    sp_grad = [max(float(np.max(np.abs(d))) for c in st.v for d in spectral_gradient(c, grid))
               for st in traj.states]
    for i, (t, st) in enumerate(zip(traj.times, traj.states)):
        rows.append({"index": i, "rescaled_time": t, "time": t / b, "mass": l2_norm(st.alpha, grid),
                     "max_abs": float(np.abs(st.alpha).max()), "max_grad_v": sp_grad[i],
                     "reconstruction_defect": rec.defects[i]})
    write_rows(run.path("wkb.csv"), ("index", "rescaled_time", "time", "mass", "max_abs", "max_grad_v",
                                     "reconstruction_defect"), rows)
    rng = np.random.default_rng(args.seed)
    pts = rng.choice(grid.size, size=min(grid.size, cfg["wkb"]["symmetrizer_samples"]), replace=False)
    run.meta["symmetrizer"] = [wkb.symmetrizer_check(traj.states[-1], nl, j, pts) for j in range(grid.dim)]
    run.meta["wkb_steps"] = traj.steps
    run.meta["wkb_dt"] = traj.dt
    if cfg["output"]["snapshots"]:
        d = run.path("snapshots")
        d.mkdir(exist_ok=True)
        for i, (t, f) in enumerate(zip(rec.times, rec.fields)):
            write_snapshot(d / f"snap_{i:05d}.bin", f, t, b, index=i, h=1.0 / b, rescaled_time=traj.times[i])
    if err is not None:
        run.finish(status, reason=str(err), last_time=err.time)
        raise err
    run.finish("ok")
    return 0


def _b_list(cfg, args):
    if args.b_list:
        try:
            return [float(p) for p in args.b_list.split(",") if p.strip()]
        except ValueError as exc:
            raise MagnlsError(f"bad --b-list: {exc}") from exc
    return list(cfg["wkb"]["b_list"])


def _pow2_at_least(n):
    return 1 << max(3, math.ceil(math.log2(max(n, 8))))


def cmd_compare(cfg: RunConfig, args) -> int:
    run = Run(cfg, args, "compare")
    grid = cfg.grid()
    w = cfg["wkb"]
    per_b = w["direct_points_per_b"]
    direct = (lambda b: Grid(grid.dim, _pow2_at_least(per_b * b), grid.length)) if per_b > 0 else grid
    pot, nl = cfg.potential(), cfg.nonlinearity()
    rows = []
    try:
        for b in _b_list(cfg, args):
            r = wkb.compare_to_direct(_wkb_config(cfg, b), pot, nl, [b], direct, cfg.amplitude_function(),
                                      cfg.phase_function(), phase_per_step=w["phase_per_step"], wkb_grid=grid,
                                      cn_tolerance=cfg["solver"]["cn_tolerance"],
                                      grad_S_func=cfg.phase_gradient())[0]
            rows.append(r.__dict__)
            write_rows(run.path("compare.csv"), COMPARE_COLUMNS, rows)
    except MagnlsError as exc:
        write_rows(run.path("compare.csv"), COMPARE_COLUMNS, rows)
        run.finish("failed", reason=str(exc))
        raise
    run.finish("ok", summary={"max_discrepancy": max(r["discrepancy"] for r in rows)})
    return 0


def cmd_instability(cfg: RunConfig, args) -> int:
    run = Run(cfg, args, "instability")
    grid = cfg.grid()
    w = cfg["wkb"]
    S = cfg.phase_function()(*grid.coords())
    expo = w["delta_exponent"]
    rows = []
    try:
        for b in _b_list(cfg, args):
            r = wkb.instability_experiment(grid, cfg.initial_field(), S, cfg.potential(), cfg.nonlinearity(), [b],
                                           t_rescaled=w["instability_t_end"], delta_rule=lambda bb: bb**expo,
                                           threshold=w["threshold"], steps=w["instability_steps"],
                                           samples=w["instability_samples"],
                                           cn_tolerance=cfg["solver"]["cn_tolerance"],
                                           leakage_tol=cfg["solver"]["initial_leakage_tol"])[0]
            rows.append({c: getattr(r, c) for c in INSTABILITY_COLUMNS})
            write_rows(run.path("instability.csv"), INSTABILITY_COLUMNS, rows)
    except MagnlsError as exc:
        write_rows(run.path("instability.csv"), INSTABILITY_COLUMNS, rows)
        run.finish("failed", reason=str(exc))
        raise
    run.finish("ok", summary={"all_separated": all(math.isfinite(r["t_sep"]) for r in rows),
                              "max_t_sep_times_b": max(r["t_sep_times_b"] for r in rows)})
    return 0


def _orders(xs, errs):
    out = []
    for (x0, e0), (x1, e1) in zip(zip(xs, errs), zip(xs[1:], errs[1:])):
        out.append(math.log(e0 / e1) / math.log(x1 / x0) if e0 > 0 and e1 > 0 else float("nan"))
    return out


def cmd_convergence(cfg: RunConfig, args) -> int:
    run = Run(cfg, args, "convergence")
    pot, nl = cfg.potential(), cfg.nonlinearity()
    u0 = cfg.initial_field()
    mode = args.mode
    rows = []
    summary = {"mode": mode}
    name = f"convergence_{mode}.csv"
    try:
        if mode == "truncated":
            cols = ("m", "sup_error", "max_abs_reference")
            ref = solve(u0, pot, nl, cfg.solver(ladder="none"))
            peak = max(float(np.abs(f.values).max()) for f in ref.trajectory.fields)
            for m in cfg["sweep"]["m_list"]:
                r = solve(u0, pot, nl, cfg.solver(ladder="truncated", m=m))
                rows.append({"m": m, "sup_error": trajectory_distance(r.trajectory, ref.trajectory),
                             "max_abs_reference": peak})
                write_rows(run.path(name), cols, rows)
            errs = [r["sup_error"] for r in rows]
            summary["non_increasing"] = all(b <= a for a, b in zip(errs, errs[1:]))
        elif mode == "piecewise":
            cols = ("n", "sup_error", "max_ledger_residual", "window_remainder")
            ref = solve(u0, pot, nl, cfg.solver(ladder="none"))
            for n in cfg["sweep"]["n_list"]:
                r = solve(u0, pot, nl, cfg.solver(ladder="piecewise_A", n_pieces=n))
                rows.append({"n": n, "sup_error": trajectory_distance(r.trajectory, ref.trajectory),
                             "max_ledger_residual": float(np.abs(r.series.column("energy_law_residual")).max()),
                             "window_remainder": r.series.meta.get("window_remainder", 0.0)})
                write_rows(run.path(name), cols, rows)
            summary["orders"] = _orders([r["n"] for r in rows], [r["sup_error"] for r in rows])
        elif mode == "resolution":
            cols = ("dt", "self_error", "max_energy_law_residual", "mass_drift")
            base = cfg["solver"]["dt"]
            levels = cfg["sweep"]["dt_levels"]
            results = []
            for lev in range(levels + 1):
                dt = base / 2**lev
                stride = cfg["solver"]["snapshot_stride"] * 2**lev
                results.append((dt, solve(u0, pot, nl, cfg.solver(dt=dt, snapshot_stride=stride))))
            for (dt, r), (_, fine) in zip(results, results[1:]):
                mass = r.series.column("mass")
                rows.append({"dt": dt, "self_error": l2_norm(r.final.values - fine.final.values, u0.grid),
                             "max_energy_law_residual": float(np.abs(r.series.column("energy_law_residual")).max()),
                             "mass_drift": float(abs(mass[-1] - mass[0]) / mass[0]) if mass[0] > 0 else 0.0})
                write_rows(run.path(name), cols, rows)
            summary["orders"] = _orders([1.0 / r["dt"] for r in rows], [r["self_error"] for r in rows])
        else:
            raise MagnlsError(f"unknown convergence mode {mode!r}")
    except MagnlsError as exc:
        write_rows(run.path(name), cols, rows)
        run.finish("failed", reason=str(exc), summary=summary)
        raise
    write_json(run.path("summary.json"), summary)
    run.finish("ok", summary=summary)
    return 0


def cmd_audit(cfg: RunConfig, args) -> int:
    run = Run(cfg, args, "audit")
    audit = run.meta.get("potential_audit", {})
    write_json(run.path("audit.json"), audit)
    run.finish("ok")
    print("audit:", "pass" if audit.get("passed") else "fail")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "wkb": cmd_wkb,
    "compare": cmd_compare,
    "instability": cmd_instability,
    "convergence": cmd_convergence,
    "audit": cmd_audit,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI run configuration")
    common.add_argument("--output-dir", default=None, help="overrides [output] dir")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised checks")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="magnls", description="Magnetic NLS solver and WKB experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="direct solve with diagnostics")
    sub.add_parser("wkb", parents=[common], help="semiclassical solve and reconstruction")
    p = sub.add_parser("compare", parents=[common], help="WKB reconstruction vs direct solve")
    p.add_argument("--b-list", default=None, help="comma separated b values")
    p = sub.add_parser("instability", parents=[common], help="perturbed-data separation sweep")
    p.add_argument("--b-list", default=None, help="comma separated b values")
    p = sub.add_parser("convergence", parents=[common], help="ladder or resolution sweeps")
    p.add_argument("--mode", choices=("truncated", "piecewise", "resolution"), default="resolution")
    sub.add_parser("audit", parents=[common], help="sampled audit of the potential bounds")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        ctx = sfft.set_workers(args.threads) if args.threads > 1 else nullcontext()
        with ctx:
            return COMMANDS[args.command](cfg, args)
    except MagnlsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
