"""Command-line entry points: ``perifsi run|check|sweep``.

Exit codes: 0 success, 1 failed check or other solver error, 2 config error,
3 self-intersection, 4 nonconvergence, 5 near-resonance.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import metadata

import numpy as np
import scipy

from .assembly import ForcingSpec, Transport
from .checks import SUITES, estimate_audit, holder_report, run_suite
from .config import RunConfig, load_config
from .errors import (AdmissibilityError, ConfigError, NearResonanceError, NonconvergenceError, PerifsiError,
                     SelfIntersectionError)
from .fluid_basis import build_combined_basis
from .geometry import QuadratureRule
from .periodic_solver import (couple, epsilon_continuation, held_out_error, schaefer_sweep,
                              solve_periodic_given_geometry)
from .plate import PlateParams, DisplacementTrajectory, bump_psi
from .time_stepper import SUP_SAMPLES, PeriodicOperators

CONFIG_ENV = "PERIFSI_CONFIG"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_SELF_INTERSECTION = 3
EXIT_NONCONVERGENCE = 4
EXIT_NEAR_RESONANCE = 5

SWEEP_PARAMS = ("amplitude", "epsilon", "dt", "n_modes")

# tolerances of the report's invariant map
TOL = {
    "periodicity_state": 1e-7,
    "periodicity_eta": 1e-7,
    "energy_balance": 1e-5,
    "periodic_energy": 1e-5,
    "mean_conservation": 1e-10,
    "probe_consistency": 1e-8,
    "schaefer_consistency": 1e-10,
    "audit_identity": 1e-10,
}

log = logging.getLogger("perifsi")


def exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, AdmissibilityError):
        return EXIT_SELF_INTERSECTION
    if isinstance(exc, NonconvergenceError):
        return EXIT_NONCONVERGENCE
    if isinstance(exc, NearResonanceError):
        return EXIT_NEAR_RESONANCE
    return EXIT_FAILED


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else _fmt(r) for r in row])


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_report(outdir, report):
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(_json_ready(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _version(name):
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "unknown"


def _provenance(cfg):
    return {
        "config_sha256": cfg.digest(),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "perifsi": _version("perifsi"),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


# ---------------------------------------------------------------------------
# run


def build_problem(cfg):
    forcing = ForcingSpec(cfg.period, cfg.amplitude, cfg.fluid_profile, cfg.shell_profile,
                          cfg.fluid_modes, cfg.shell_modes)
    params = PlateParams(cfg.h, cfg.lambda_s, cfg.mu_s, cfg.a_m, cfg.a_b, cfg.membrane)
    quad = QuadratureRule(cfg.quad_order_x, cfg.quad_cells_x, cfg.quad_order_z)
    basis = build_combined_basis(cfg.n_shell, cfg.n_interior, quad=quad, grid=cfg.grid)
    return forcing, params, basis


def solve(cfg, forcing, params, basis):
    """Returns (PeriodicSolution, extras) for the configured mode."""
    extras = {"history": [], "drift_eta": [], "drift_u": [], "warnings": [], "outer_residual": 0.0}
    if cfg.mode == "decoupled":
        delta = DisplacementTrajectory.constant(basis.plate, cfg.n_steps, cfg.mean, cfg.period)
        ops = PeriodicOperators(basis, delta, Transport.zero(cfg.n_steps, basis.n_total, cfg.period), forcing,
                                params, cfg.n_steps, cfg.period, mean=cfg.mean)
        return solve_periodic_given_geometry(ops, kappa=cfg.kappa), extras
    kw = dict(n_steps=cfg.n_steps, max_outer=cfg.max_outer, tol=cfg.outer_tol, rho=cfg.rho, kappa=cfg.kappa,
              c0_gate=cfg.c0_gate, anderson_depth=cfg.anderson_depth)
    first = couple(basis, forcing, cfg.mean, params, epsilon=cfg.epsilons[0], **kw)
    sols = [first]
    if len(cfg.epsilons) > 1:
        kw.pop("n_steps")
        rep = epsilon_continuation(first, basis, forcing, params, list(cfg.epsilons), **kw)
        sols = rep.solutions
        extras["drift_eta"], extras["drift_u"] = rep.drift_eta, rep.drift_u
    last = sols[-1]
    extras["history"] = [_iterate_row(it) for s in sols for it in s.history]
    extras["warnings"] = [w for s in sols for w in s.warnings]
    extras["outer_residual"] = last.converged_residual
    extras["bound_ratio"] = last.bound_ratio()
    return last.solution, extras


def _iterate_row(it):
    return {"k": it.k, "epsilon": it.epsilon, "residual": it.residual, "sup_delta": it.bound_delta,
            "v_l2": it.bound_v}


def _check(value, tol, upper=True):
    passed = bool(value < tol) if upper else bool(value > tol)
    return {"value": value, "tolerance": tol, "passed": passed}


def summarize(cfg, sol, forcing, extras):
    """Diagnostics and invariant map of a converged periodic solution."""
    ops, tr = sol.ops, sol.trajectory
    basis = ops.basis
    Yx = basis.plate(SUP_SAMPLES)
    psi = bump_psi(SUP_SAMPLES)
    eta = tr.b @ Yx + cfg.mean * psi
    led = sol.ledger
    from .plate import PLATE_RULE

    xq, wq = PLATE_RULE
    means = (tr.b @ basis.plate(xq) + cfg.mean * bump_psi(xq)) @ wq
    C = forcing.size()
    res = {
        "periodicity_state": float(np.max(np.abs(tr.terminal - tr.initial))),
        "periodicity_eta": float(np.max(np.abs(eta[-1] - eta[0]))),
        "energy_balance": abs(led.balance()),
        "energy_ledger_max_step": led.max_residual,
        "dissipation": sol.dissipation,
        "work": sol.work,
        "periodic_energy_gap": sol.energy_gap,
        "sup_energy": float(np.max(led.energy)),
        "sup_eta": float(np.max(np.abs(eta))),
        "mean_conservation": float(np.max(np.abs(means - cfg.mean))),
        "forcing_size": C,
        "mean": cfg.mean,
        "c0_gate": cfg.c0_gate,
        "smallness": cfg.mean**2 + C**2,
        "min_mass_eigenvalue": float(min(np.linalg.eigvalsh(M)[0] for M in ops.M_grid)),
        "audit": estimate_audit(sol) if not ops.shell.membrane else None,
        "holder": holder_report(eta, tr.times),
        "outer_history": extras["history"],
        "outer_residual": extras["outer_residual"],
        "drift_eta": extras["drift_eta"],
        "drift_u": extras["drift_u"],
        "warnings": extras["warnings"],
    }
    denom = C**2 + C + cfg.mean**2
    res["bound_ratio"] = res["sup_energy"] / denom if denom > 0 else None
    inv = {
        "periodicity_state": _check(res["periodicity_state"], TOL["periodicity_state"]),
        "periodicity_eta": _check(res["periodicity_eta"], TOL["periodicity_eta"]),
        "energy_balance": _check(res["energy_balance"], TOL["energy_balance"]),
        "mean_conservation": _check(res["mean_conservation"], TOL["mean_conservation"]),
        "mass_positive": _check(res["min_mass_eigenvalue"], 0.0, upper=False),
        "admissible": _check(res["sup_eta"], cfg.kappa),
    }
    if cfg.mode == "decoupled":
        inv["periodic_energy_equality"] = _check(abs(sol.energy_gap), TOL["periodic_energy"])
    else:
        inv["periodic_energy_inequality"] = _check(sol.energy_gap, TOL["periodic_energy"])
        inv["outer_self_consistency"] = _check(res["outer_residual"], cfg.outer_tol)
        if len(res["drift_eta"]) > 1:
            d = res["drift_eta"]
            inv["continuation_contracts"] = {"value": d, "tolerance": None,
                                             "passed": all(d[j + 1] < d[j] for j in range(len(d) - 1))}
    if sol.pmap is not None:
        x = np.random.default_rng(cfg.seed).normal(size=sol.pmap.dim)
        res["probe_error"] = held_out_error(sol.pmap, ops, x)
        res["spectral_radius"] = sol.pmap.spectral_radius
        res["schaefer_error"] = float(np.max(np.abs(schaefer_sweep(sol.pmap, [1.0])[0]["x"] - sol.x)))
        inv["probe_consistency"] = _check(res["probe_error"], TOL["probe_consistency"])
        inv["schaefer_consistency"] = _check(res["schaefer_error"], TOL["schaefer_consistency"])
        inv["spectral_radius_below_one"] = _check(res["spectral_radius"], 1.0)
    if res["audit"] is not None:
        scale = max(1.0, abs(res["audit"]["twice_int_K"]))
        inv["audit_identity"] = _check(res["audit"]["identity_residual"] / scale, TOL["audit_identity"])
    return res, inv


def write_trajectory(outdir, sol, cfg):
    tr = sol.trajectory
    P = sol.ops.basis.P
    ns = tr.b.shape[1]
    bdot = tr.a @ P
    header = ["t"] + [f"b{k + 1}" for k in range(ns)] + [f"bdot{k + 1}" for k in range(ns)]
    _write_csv(os.path.join(outdir, "trajectory.csv"), header,
               (np.concatenate([[t], tr.b[i], bdot[i]]) for i, t in enumerate(tr.times)))
    n = tr.a.shape[1]
    _write_csv(os.path.join(outdir, "coefficients.csv"), ["t"] + [f"a{k + 1}" for k in range(n)],
               (np.concatenate([[t], tr.a[i]]) for i, t in enumerate(tr.times)))
    led = sol.ledger
    rows = []
    for i, t in enumerate(led.times):
        if i < len(led.residual):
            rows.append([t, led.energy[i], led.dissipation[i], led.work[i], led.residual[i]])
        else:
            rows.append([t, led.energy[i], "", "", ""])
    _write_csv(os.path.join(outdir, "ledger.csv"), ["t", "energy", "dissipation", "work", "residual"], rows)


def run_config(cfg, outdir=None):
    """Run one configuration, persist artifacts, return (exit code, report)."""
    outdir = outdir or cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    report = {"provenance": _provenance(cfg), "mode": cfg.mode}
    try:
        forcing, params, basis = build_problem(cfg)
        sol, extras = solve(cfg, forcing, params, basis)
        results, inv = summarize(cfg, sol, forcing, extras)
        write_trajectory(outdir, sol, cfg)
    except PerifsiError as exc:
        code = exit_code(exc)
        report.update(status="failed", exit_code=code, error=type(exc).__name__, message=str(exc),
                      outer_history=[_iterate_row(it) for it in getattr(exc, "history", [])])
        _write_report(outdir, report)
        return code, report
    report.update(status="ok", exit_code=EXIT_OK, results=results, invariants=inv)
    _write_report(outdir, report)
    return EXIT_OK, report


def cmd_run(args):
    path = os.environ.get(CONFIG_ENV) or args.config
    if not path:
        print("error: no config given", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(path)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report = run_config(cfg, args.outdir)
    if code == EXIT_OK:
        r = report["results"]
        bad = [k for k, v in report["invariants"].items() if not v["passed"]]
        print(f"ok: sup E = {r['sup_energy']:.6e}, periodicity = {r['periodicity_state']:.3e}, "
              f"energy balance = {r['energy_balance']:.3e}")
        if bad:
            print("invariants failed: " + ", ".join(bad))
    else:
        print(f"{report['error']}: {report['message']}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# check


def cmd_check(args):
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        res = run_suite(name, args.seed)
        print(res.line())
        ok = ok and res.passed
    return EXIT_OK if ok else EXIT_FAILED


# ---------------------------------------------------------------------------
# sweep


def sweep_point(cfg, param, value):
    if param == "amplitude":
        return replace(cfg, amplitude=float(value))
    if param == "epsilon":
        return replace(cfg, epsilons=(float(value),))
    if param == "dt":
        n = cfg.period / float(value)
        if abs(n - round(n)) > 1e-9 * n:
            raise ConfigError(f"dt = {value} does not divide the period")
        return replace(cfg, n_steps=int(round(n)))
    if param == "n_modes":
        k = int(value)
        return replace(cfg, n_shell=k, n_interior=2 * k)
    raise ConfigError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


def _sweep_job(job):
    cfg, outdir = job
    code, report = run_config(cfg, outdir)
    return code, report


def run_sweep(cfg, param, grid, outdir=None, jobs=1):
    """Run every grid point in its own subdirectory; returns (exit code, rows)."""
    outdir = outdir or cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    cfgs = [sweep_point(cfg, param, v) for v in grid]
    work = [(c, os.path.join(outdir, f"{param}_{i:03d}")) for i, c in enumerate(cfgs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_sweep_job, work))
    else:
        outputs = [_sweep_job(w) for w in work]
    keys = ("sup_energy", "dissipation", "work", "periodicity_state", "energy_balance", "outer_residual",
            "forcing_size", "bound_ratio")
    rows, failed = [], []
    for v, (code, report) in zip(grid, outputs):
        r = report.get("results", {})
        rows.append({"value": float(v), "exit_code": code, "status": report["status"],
                     **{k: r.get(k) for k in keys}})
        if code != EXIT_OK:
            failed.append({"value": float(v), "exit_code": code, "message": report.get("message")})
    with open(os.path.join(outdir, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([param] + ["exit_code", "status"] + list(keys))
        for row in rows:
            vals = [row[k] for k in keys]
            w.writerow([_fmt(row["value"]), row["exit_code"], row["status"]]
                       + ["" if x is None else _fmt(x) for x in vals])
    with open(os.path.join(outdir, "sweep_report.json"), "w") as fh:
        json.dump(_json_ready({"param": param, "grid": list(grid), "rows": rows, "failed": failed}), fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    code = next((f["exit_code"] for f in failed), EXIT_OK)
    return code, rows


def cmd_sweep(args):
    path = os.environ.get(CONFIG_ENV) or args.config
    try:
        cfg = load_config(path)
        grid = [float(v) for v in args.grid.replace(",", " ").split()]
        for v in grid:
            sweep_point(cfg, args.param, v)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, rows = run_sweep(cfg, args.param, grid, args.outdir, args.jobs)
    for row in rows:
        e = row["sup_energy"]
        print(f"{args.param} = {row['value']:g}: {row['status']}" + ("" if e is None else f", sup E = {e:.6e}"))
    return code


# ---------------------------------------------------------------------------


def make_parser():
    p = argparse.ArgumentParser(prog="perifsi", description="Time-periodic fluid / Koiter-plate Galerkin solver.")
    p.add_argument("-v", "--verbose", action="store_true", help="log outer iterations")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve one configuration")
    r.add_argument("config", nargs="?", help=f"config file (overridden by ${CONFIG_ENV})")
    r.add_argument("--outdir", help="output directory (default: output_dir from the config)")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run a randomized verification suite")
    c.add_argument("suite", choices=sorted(SUITES) + ["all"])
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(func=cmd_check)
    s = sub.add_parser("sweep", help="run a configuration over a parameter grid")
    s.add_argument("config", nargs="?", help=f"config file (overridden by ${CONFIG_ENV})")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--grid", required=True, help="comma or space separated values")
    s.add_argument("--outdir")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
