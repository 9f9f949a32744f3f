"""Batch front-end: runs, sweeps, check suites, functional tables.

Subcommands: run, sweep, check, functionals, constants.  Outputs are plain
files (CSV + JSON + gnuplot scripts); trajectory.csv is byte-reproducible
for identical configs at a fixed thread count, so it is the artifact the
determinism checks hash.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import itertools
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, testfn, weakops
from .evolution import EvolutionError, SolverConfig, Trajectory, run_pipeline
from .measure import GridSpec, MeasureError, RadialMeasure, bose_einstein, moment
from .regularized import PHIN_VERSION

REQUIRED_RUN_FIELDS = ("initial_data", "n", "tau_end")


class ConfigError(ValueError):
    pass


def load_config(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".toml", ".tml"):
        import tomllib
        return tomllib.loads(text)
    return json.loads(text)


def config_hash(doc: dict) -> str:
    """Stable under key reordering: hash of the canonical JSON encoding."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def build_initial_data(spec: dict) -> RadialMeasure:
    kind = spec.get("kind")
    if kind == "bose_einstein":
        beta = float(spec["beta"])
        bulk_mass = float(spec.get("bulk_mass", 1.0))
        x_max = float(spec.get("x_max", 30.0 / beta))
        grid = GridSpec.geometric(x_max, int(spec.get("cells", 2000)), ratio=1.02)
        base = bose_einstein(beta, 0.0, 0.0, grid,
                             tail_tol=float(spec.get("tail_tol", 1e-10)))
        scale = bulk_mass / moment(base, 0.0)
        return RadialMeasure.from_density(grid, base.density * scale,
                                          atom0=float(spec.get("condensate", 0.0)))
    if kind == "bump":
        center = float(spec["center"])
        width = float(spec.get("width", 0.5))
        mass = float(spec["mass"])
        grid = GridSpec.uniform(0.0, center + 4 * width, int(spec.get("cells", 1000)))
        x = grid.centers
        shape = np.maximum(1.0 - np.abs(x - center) / width, 0.0)
        vals = shape * (mass / np.sum(shape * grid.widths))
        return RadialMeasure.from_density(grid, vals,
                                          atom0=float(spec.get("condensate", 0.0)))
    if kind == "measure":
        return RadialMeasure.from_json(Path(spec["path"]).read_text())
    raise ConfigError(f"unknown initial_data kind {kind!r}")


GNUPLOT_SCRIPT = """\
# gnuplot script; run from the directory containing trajectory.csv
set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set terminal push
plot 'trajectory.csv' using 't':'n_of_t' with lines title 'n(t)', \\
     'trajectory.csv' using 't':'mu_cumulative' with lines title 'mu((0,t])'
set terminal pop
"""


def _write_run_outputs(out_dir: Path, doc: dict, traj: Trajectory, run,
                       reports: list, started: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trajectory.csv").write_text(traj.to_csv())
    (out_dir / "bounds.json").write_text(analysis.reports_to_json(reports))
    manifest = {
        "config_hash": config_hash(doc),
        "code_version": __version__,
        "cutoff_version": PHIN_VERSION,
        "started": started,
        "finished": time.time(),
        "verdicts": analysis.summarize(reports),
    }
    run_doc = {
        "config": doc,
        "manifest": manifest,
        "N": run.N,
        "E": run.E,
        "n_steps": run.n_steps,
        "cells": run.grid.n_cells,
        "xc": run.cfg.xc,
        "failed_run_checks": [list(f) for f in run.failed_checks],
        "tau_star": traj.meta.get("tau_star"),
        "mu_nondecreasing": traj.meta.get("mu_nondecreasing"),
    }
    (out_dir / "run.json").write_text(json.dumps(run_doc, indent=2, sort_keys=True))
    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)
    (plots / "trajectory.gp").write_text(GNUPLOT_SCRIPT)


def _solver_config(doc: dict) -> SolverConfig:
    solver_fields = set(SolverConfig.__dataclass_fields__)
    body = {k: v for k, v in doc.items() if k in solver_fields}
    return SolverConfig.from_dict(body)


def execute_run(doc: dict, out_dir: Path) -> int:
    started = time.time()
    for key in REQUIRED_RUN_FIELDS:
        if key not in doc:
            print(f"config error: missing required field '{key}'", file=sys.stderr)
            return 1
    try:
        h0 = build_initial_data(doc["initial_data"])
        cfg = _solver_config(doc)
        run, traj = run_pipeline(h0, cfg)
        checks = doc.get("checks", {})
        traj.meta["conservation_tol"] = cfg.conservation_tol
        reports = analysis.run_checks(traj, slack=float(checks.get("slack", 1.01)),
                                      suite=checks.get("suite", "full"))
        _write_run_outputs(out_dir, doc, traj, run, reports, started)
    except (ConfigError, MeasureError, EvolutionError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    fails = [r for r in reports if r.verdict == "FAIL"] or run.failed_checks
    for r in reports:
        print(f"{r.verdict:14s} {r.name}  lhs={r.lhs:.6g} rhs={r.rhs:.6g}")
    return 2 if fails else 0


def cmd_run(args) -> int:
    doc = load_config(args.config)
    if args.slack is not None:
        doc.setdefault("checks", {})["slack"] = args.slack
    return execute_run(doc, Path(args.out_dir))


def _sweep_cell(payload):
    doc, cell_dir = payload
    return execute_run(doc, Path(cell_dir)), doc


def cmd_sweep(args) -> int:
    doc = load_config(args.config)
    sweep = doc.pop("sweep", None)
    if not sweep:
        print("config error: missing required field 'sweep'", file=sys.stderr)
        return 1
    keys = sorted(sweep)
    values = [sweep[k] if isinstance(sweep[k], list) else [sweep[k]] for k in keys]
    out_root = Path(args.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    cells = []
    for idx, combo in enumerate(itertools.product(*values)):
        cell_doc = json.loads(json.dumps(doc))
        cell_doc.update(dict(zip(keys, combo)))
        label = "cell_" + "_".join(f"{k}{v:g}" if isinstance(v, (int, float)) else f"{k}{v}"
                                   for k, v in zip(keys, combo))
        cells.append((cell_doc, out_root / f"{idx:03d}_{label}"))
    results = []
    if args.threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.threads) as pool:
            codes = list(pool.map(_sweep_cell, cells))
        results = [(code, doc) for code, doc in codes]
    else:
        for payload in cells:
            results.append(_sweep_cell(payload))
    rows = ["cell,config_hash,exit_code," + ",".join(keys)]
    worst = 0
    for (code, cdoc), (_, cell_dir) in zip(results, cells):
        worst = max(worst, code)
        vals = ",".join(str(cdoc.get(k)) for k in keys)
        rows.append(f"{cell_dir.name},{config_hash(cdoc)},{code},{vals}")
    (out_root / "summary.csv").write_text("\n".join(rows) + "\n")
    print(f"sweep finished: {len(cells)} cells, worst exit code {worst}")
    return worst


def cmd_check(args) -> int:
    traj = Trajectory.from_csv(Path(args.trajectory).read_text())
    reports = analysis.run_checks(traj, slack=args.slack, suite=args.suite)
    payload = analysis.reports_to_json(reports)
    if args.out:
        Path(args.out).write_text(payload)
    else:
        print(payload)
    for r in reports:
        print(f"{r.verdict:14s} {r.name}", file=sys.stderr)
    return 2 if any(r.verdict == "FAIL" for r in reports) else 0


def cmd_functionals(args) -> int:
    try:
        g = RadialMeasure.from_json(Path(args.measure).read_text())
        phi = testfn.by_name(args.phi)
    except (MeasureError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    atom0, bulk = g.atom0, g.with_atom0(0.0)
    quad = weakops.q3_quadratic(phi, bulk)
    lin = weakops.q3_linear(phi, bulk)
    lin_t = weakops.q3_linear_tilde(phi, bulk)
    v3, v3t = weakops.q3_pair(phi, bulk)
    phi0 = float(phi.f(np.array(0.0)))
    shift = phi0 * moment(bulk, 0.5)
    doc = {
        "phi": phi.name,
        "q3_quadratic": quad,
        "q3_linear": lin,
        "q3_linear_tilde": lin_t,
        "q3": v3,
        "q3_tilde": v3t,
        "identity_residual": v3 - (v3t - shift),
    }
    if not bulk.has_density:
        doc["q4_script"] = weakops.q4_script(phi, bulk)
        doc["q4_full"] = weakops.q4_full(phi, g)
        doc["decomposition_residual"] = (doc["q4_full"] - doc["q4_script"]
                                         - atom0 * v3)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_constants(args) -> int:
    b = analysis.critical_constant_b()
    lines = [f"b = {b:.6f}", f"limit alpha->1+: log(16)^(2/3)/b = "
             f"{(np.log(16.0) ** (2.0 / 3.0)) / b:.6f}", ""]
    lines.append("alpha  C(alpha)      C(alpha,E)        gamma(alpha,E)   (E = %g)"
                 % args.energy)
    for a in (1.5, 2.0, 2.5, 3.0):
        row = f"{a:5.2f}  {analysis.decay_threshold(a):<12.6f}"
        if a >= 3.0:
            C, gamma = analysis.uniform_moment_constants(a, args.energy)
            row += f"  {C:<16.6f}  {gamma:.6f}"
        lines.append(row)
    lines.append("")
    lines.append("alpha  T0(1-2^-alpha)   T*(alpha)")
    for a in (0.25, 0.5, 0.75):
        d = 1.0 - 2.0 ** (-a)
        lines.append(f"{a:5.2f}  {analysis.concentration_times(d):<15.4f}"
                     f"  {analysis.t_star(a):.4f}")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nck",
                                description="condensate/normal-fluid kinetics toolbox")
    p.add_argument("--threads", type=int, default=1)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run one evolution pipeline")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out-dir", default=os.environ.get("NCK_OUT_DIR", "out"))
    pr.add_argument("--slack", type=float, default=None)
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("sweep", help="cartesian parameter sweep")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out-dir", default=os.environ.get("NCK_OUT_DIR", "sweep"))
    ps.set_defaults(func=cmd_sweep)

    pc = sub.add_parser("check", help="evaluate the bound suite on a trajectory")
    pc.add_argument("trajectory")
    pc.add_argument("--suite", default="full")
    pc.add_argument("--slack", type=float, default=1.01)
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=cmd_check)

    pf = sub.add_parser("functionals", help="evaluate collision functionals on a measure")
    pf.add_argument("--measure", required=True)
    pf.add_argument("--phi", required=True)
    pf.set_defaults(func=cmd_functionals)

    pk = sub.add_parser("constants", help="print the closed-form constant tables")
    pk.add_argument("--energy", type=float, default=1.0)
    pk.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except Exception as exc:  # runtime failure contract: exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code


def main_check(argv=None) -> int:
    """Console alias: nck-check trajectory.csv --suite full."""
    argv = list(sys.argv[1:] if argv is None else argv)
    return main(["check"] + argv)


if __name__ == "__main__":
    sys.exit(main())
