"""Batch command-line front end.

Exit status: 0 when every requested check passes, 1 on a failed check, 2 on
a parse or validation error, 3 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from hklapse import __version__
from hklapse.config import (
    MeanfieldConfig,
    RunConfig,
    build_history,
    build_influence,
    build_sampler,
    build_weight,
    load_config,
    replace,
    resolve_alpha_bar,
)
from hklapse.core import certify_wf
from hklapse.errors import CertificationError, DomainError, HKError, SpecError
from hklapse.integrator import read_csv, simulate, write_csv
from hklapse.meanfield import lipschitz_constant, meanfield_decay_study
from hklapse.theory import bound_curve
from hklapse.verify import DEFAULT_SEED, derive_bounds, verify_trajectory

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
MANIFEST_VERSION = 1


class ConfigProblem(Exception):
    """Raised for anything that maps to exit status 2."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Prepared:
    """Domain objects built from a validated config; construction errors are config problems."""

    def __init__(self, cfg: RunConfig):
        try:
            self.influence = build_influence(cfg.influence)
            self.weight = build_weight(cfg.weight)
            self.history = None if cfg.history is None else build_history(cfg.history, cfg.N, cfg.d)
            self.alpha_bar = resolve_alpha_bar(cfg, self.weight)
        except (DomainError, SpecError, ValueError) as exc:
            raise ConfigProblem(str(exc)) from exc
        self.cfg = cfg
        self.tau = cfg.tau
        self.regime = "delayed" if cfg.model.kind == "delayed" else "undelayed"


def _certify(p: Prepared):
    cfg = p.cfg
    return certify_wf(p.weight, cfg.wf.T, p.alpha_bar, horizon=cfg.horizon(), tau=p.tau)


def _failure_record(exc: CertificationError) -> dict:
    return {"certified": False, "message": str(exc),
            "interval": list(exc.interval) if exc.interval else None, "integral": exc.integral}


def _write_bounds(path: Path, traj, bounds, decimation: int) -> None:
    k = np.arange(traj.offset, len(traj.x), decimation)
    if k[-1] != len(traj.x) - 1:
        k = np.append(k, len(traj.x) - 1)
    t = traj.t[k]
    rows = np.column_stack([t, traj.diameters()[k], bound_curve(bounds, t)])
    with open(path, "w", newline="") as fh:
        fh.write("t,diameter,bound\n")
        np.savetxt(fh, rows, fmt="%.17g", delimiter=",")


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------


def run_simulate(p: Prepared, out: Path, verify: bool) -> tuple[int, dict]:
    cfg = p.cfg
    files = {}
    if cfg.trajectory_input is not None:
        traj = read_csv(cfg.trajectory_input, tau=p.tau)
    else:
        traj = simulate(p.history, p.influence, p.weight, tau=p.tau, h=cfg.integrator.h,
                        t_end=cfg.integrator.t_end)
        files["trajectory"] = out / cfg.outputs.trajectory
        write_csv(traj, files["trajectory"], cfg.integrator.decimation)

    record = {"alpha_bar": p.alpha_bar, "regime": p.regime, "h": traj.h, "tau": traj.tau,
              "t_end": traj.t_end, "consensus_time": traj.consensus_time}
    try:
        cert = _certify(p)
    except CertificationError as exc:
        record["certificate"] = _failure_record(exc)
        files["report"] = out / cfg.outputs.report
        files["report"].write_text(_dump(record))
        return (EXIT_CHECK if verify else EXIT_OK), files
    record["certificate"] = cert.to_record()
    status = EXIT_OK
    if verify:
        report, bounds = verify_trajectory(traj, p.influence, cert, p.regime,
                                           gamma_override=cfg.overrides.gamma)
        record["verification"] = report.to_record()
        print(report.to_table())
        status = EXIT_OK if report.passed else EXIT_CHECK
    else:
        bounds = derive_bounds(traj, p.influence, cert, p.regime)
        if cfg.overrides.gamma is not None:
            bounds = bounds.with_gamma(cfg.overrides.gamma)
    record["bounds"] = bounds.to_record()
    files["bounds"] = out / cfg.outputs.bounds
    _write_bounds(files["bounds"], traj, bounds, cfg.integrator.decimation)
    files["report"] = out / cfg.outputs.report
    files["report"].write_text(_dump(record))
    return status, files


def run_certify(p: Prepared, out: Path) -> tuple[int, dict]:
    path = out / p.cfg.outputs.report
    try:
        cert = _certify(p)
    except CertificationError as exc:
        path.write_text(_dump({"alpha_bar": p.alpha_bar, "certificate": _failure_record(exc)}))
        print(f"certification failed: {exc}")
        return EXIT_CHECK, {"report": path}
    rec = cert.to_record()
    rec["certified"] = True
    path.write_text(_dump({"alpha_bar": p.alpha_bar, "certificate": rec}))
    print(f"certified {len(cert.partition)} partition points, T = {cert.T:.17g}, "
          f"alpha_bar = {cert.alpha_bar:.17g}")
    return EXIT_OK, {"report": path}


def run_meanfield(p: Prepared, out: Path, threads: int) -> tuple[int, dict]:
    cfg = p.cfg
    mf = cfg.meanfield or MeanfieldConfig()
    try:
        lipschitz_constant(p.influence)
        sampler = build_sampler(mf.sampler, cfg.d)
    except (DomainError, SpecError) as exc:
        raise ConfigProblem(str(exc)) from exc
    study = meanfield_decay_study(
        p.influence, p.weight, mf.N_list, sampler, seed=mf.seed, tau=p.tau, T=cfg.wf.T,
        alpha_bar=p.alpha_bar, h=cfg.integrator.h or 1e-2, t_end=cfg.integrator.t_end,
        n_times=mf.n_times, budget=mf.budget, workers=threads)
    files = {"meanfield": out / "meanfield.csv", "report": out / cfg.outputs.report}
    study.write_csv(files["meanfield"])
    rec = study.to_record()
    rec["lipschitz"] = lipschitz_constant(p.influence)
    files["report"].write_text(_dump(rec))
    for r in study.per_n:
        print(f"N={r['N']:<5d} envelope margin {r['envelope_worst_margin']:+.3e}  "
              f"fitted rate {r['fitted_rate']:.4g} vs gamma {r['gamma_env']:.4g}  "
              f"{'PASS' if r['envelope_passed'] else 'FAIL'}")
    return (EXIT_OK if study.passed else EXIT_CHECK), files


def _cell_config(cfg: RunConfig, cell: dict) -> RunConfig:
    updates = {}
    for axis, v in cell.items():
        if axis == "tau":
            updates["model"] = {"kind": "delayed", "tau": float(v)}
        elif axis == "alpha_bar":
            updates["wf.alpha_bar"] = float(v)
        elif axis == "duty":
            updates["weight.duty"] = float(v)
        elif axis == "N":
            updates["N"] = int(v)
        elif axis == "seed":
            updates["history.seed"] = int(v)
    updates["mode"] = "verify"
    updates["sweep"] = None
    return replace(cfg, **updates)


def _sweep_cell(args) -> dict:
    cfg_json, cell, cell_dir = args
    cfg = RunConfig.model_validate_json(cfg_json)
    row = dict(cell)
    cell_dir = Path(cell_dir)
    cell_dir.mkdir(parents=True, exist_ok=True)
    try:
        p = Prepared(cfg)
        traj = simulate(p.history, p.influence, p.weight, tau=p.tau, h=cfg.integrator.h,
                        t_end=cfg.integrator.t_end)
        cert = _certify(p)
        report, bounds = verify_trajectory(traj, p.influence, cert, p.regime,
                                           gamma_override=cfg.overrides.gamma)
    except CertificationError as exc:
        row.update(status="infeasible", passed=False, message=str(exc))
        return row
    except (ConfigProblem, HKError) as exc:
        row.update(status="error", passed=False, message=str(exc))
        return row
    (cell_dir / "report.json").write_text(_dump({"bounds": bounds.to_record(),
                                                 "certificate": cert.to_record(),
                                                 "verification": report.to_record()}))
    row.update(status="ok", passed=report.passed, alpha_bar=cert.alpha_bar, T=cert.T,
               C=bounds.C, C_tilde=bounds.C_tilde, gamma=bounds.gamma)
    for c in report.checks:
        row[f"{c.name}_margin"] = c.worst_margin
    return row


def run_sweep(cfg: RunConfig, out: Path, threads: int) -> tuple[int, dict]:
    axes = cfg.sweep.axes
    names = list(axes)
    cells = [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]
    jobs = []
    for i, cell in enumerate(cells):
        try:
            cell_cfg = _cell_config(cfg, cell)
        except ValidationError as exc:
            raise ConfigProblem(f"sweep cell {cell}: {exc}") from exc
        jobs.append((cell_cfg.model_dump_json(), cell, str(out / f"cell_{i:03d}")))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]

    fixed = names + ["status", "passed", "T", "alpha_bar", "C", "C_tilde", "gamma"]
    margins = sorted({k for r in rows for k in r if k.endswith("_margin")})
    cols = fixed + margins + ["message"]
    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
    files = {"summary": path}
    for i in range(len(rows)):
        rep = out / f"cell_{i:03d}" / "report.json"
        if rep.exists():
            files[f"cell_{i:03d}"] = rep
    for r in rows:
        print(" ".join(f"{n}={r[n]}" for n in names),
              "PASS" if r["passed"] else f"FAIL ({r['status']})")
    return (EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK), files


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("HK_LAPSE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigProblem(f"HK_LAPSE_THREADS must be an integer, got {env!r}")
    return 1


def _apply_flags(cfg: RunConfig, args, mode: str | None) -> RunConfig:
    updates = {}
    if mode is not None:
        updates["mode"] = mode
    if args.seed_override is not None:
        if cfg.history is not None and cfg.history.kind == "uniform":
            updates["history.seed"] = args.seed_override
        if cfg.meanfield is not None:
            updates["meanfield.seed"] = args.seed_override
    if args.gamma_override is not None:
        updates["overrides.gamma"] = args.gamma_override
    if getattr(args, "trajectory", None) is not None:
        updates["trajectory_input"] = args.trajectory
    if getattr(args, "axis", None):
        axes = {}
        for spec in args.axis:
            name, _, values = spec.partition("=")
            axes[name] = [float(v) for v in values.split(",") if v.strip()]
        updates["sweep"] = {"axes": axes}
    return replace(cfg, **updates) if updates else cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run config (or a run manifest to replay)")
    common.add_argument("--out", help="output directory (default: outputs.dir of the config)")
    common.add_argument("--seed-override", type=int, help="replace the history / study seed")
    common.add_argument("--threads", type=int, help="worker processes (env HK_LAPSE_THREADS)")
    common.add_argument("--gamma-override", type=float,
                        help="replace the decay rate of the bound curve")

    parser = argparse.ArgumentParser(prog="hklapse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hklapse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the mode named in the config")
    sub.add_parser("simulate", parents=[common], help="integrate and write the trajectory")
    v = sub.add_parser("verify", parents=[common], help="integrate (or load) and check every bound")
    v.add_argument("--trajectory", help="verify this trajectory CSV instead of simulating")
    s = sub.add_parser("sweep", parents=[common], help="verify over a parameter grid")
    s.add_argument("--axis", action="append", help="NAME=v1,v2,... (replaces the config axes)")
    sub.add_parser("meanfield", parents=[common], help="support-diameter study across N")
    sub.add_parser("certify-wf", parents=[common], help="certify the weight condition only")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    try:
        text = Path(args.config).read_text()
        cfg = load_config(text)
        mode = None if args.command == "run" else args.command
        cfg = _apply_flags(cfg, args, mode)
        threads = _resolve_threads(args.threads)
        out = Path(args.out or cfg.outputs.dir)
        out.mkdir(parents=True, exist_ok=True)
        prepared = Prepared(cfg) if cfg.mode != "sweep" else None
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, ConfigProblem, ValueError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if cfg.mode == "sweep":
            status, files = run_sweep(cfg, out, threads)
        elif cfg.mode == "meanfield":
            status, files = run_meanfield(prepared, out, threads)
        elif cfg.mode == "certify-wf":
            status, files = run_certify(prepared, out)
        else:
            status, files = run_simulate(prepared, out, verify=cfg.mode == "verify")
    except ConfigProblem as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": "hklapse",
        "version": __version__,
        "command": cfg.mode,
        "config": cfg.model_dump(mode="json"),
        "seeds": _seeds(cfg),
        "inputs": ({"trajectory": _sha256(Path(cfg.trajectory_input))}
                   if cfg.trajectory_input else {}),
        "outputs": {str(path.relative_to(out)): _sha256(path) for path in files.values()},
        "exit_status": status,
    }
    (out / cfg.outputs.manifest).write_text(_dump(manifest))
    return status


def _seeds(cfg: RunConfig) -> dict:
    seeds = {"verify_directions": DEFAULT_SEED}
    if cfg.history is not None and cfg.history.kind == "uniform":
        seeds["history"] = cfg.history.seed
    if cfg.meanfield is not None:
        seeds["meanfield"] = cfg.meanfield.seed
    return seeds


if __name__ == "__main__":
    sys.exit(main())
