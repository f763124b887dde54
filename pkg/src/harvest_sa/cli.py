"""Command-line entry point: ``harvest-sa <command> [options]``.

Every command writes CSV files plus ``manifest.json`` into the output
directory. Column layouts:

=============  ======================================
simulate       ``t,x,xdot,v``
bifurcation    ``direction,f,strobe_index,v``
power-map      ``beta,f,mean_power``
sobol          ``order,param_1,param_2,index``
sobol-sweep    ``f,order,param_1,param_2,index``
propagate      ``f,percentile,mean_power`` (percentile ``mean`` holds the sample mean)
validate       ``check,value,tolerance,passed``
=============  ======================================
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import bifurcation_sweep, power_map, sweep_disagreement
from .config import ExperimentConfig, parse_config
from .errors import HarvestError
from .integrator import integrate
from .pce import fit, save_pce, sobol_from_pce
from .uq import HarvesterQoI, lhs_sample, mc_first_order, propagate, recenter

COMMANDS = ("simulate", "bifurcation", "power-map", "sobol", "sobol-sweep", "propagate", "validate")
MANIFEST = "manifest.json"

HEADERS = {
    "simulate": ["t", "x", "xdot", "v"],
    "bifurcation": ["direction", "f", "strobe_index", "v"],
    "power-map": ["beta", "f", "mean_power"],
    "sobol": ["order", "param_1", "param_2", "index"],
    "sobol-sweep": ["f", "order", "param_1", "param_2", "index"],
    "propagate": ["f", "percentile", "mean_power"],
    "validate": ["check", "value", "tolerance", "passed"],
}


def fmt(value) -> str:
    """Shortest round-trip text for floats; ``str`` for everything else."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@dataclass
class RunContext:
    out_dir: Path
    files: list = field(default_factory=list)
    evaluations: int = 0
    notes: dict = field(default_factory=dict)

    def write_csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
        path = self.out_dir / name
        _atomic_write(path, buf.getvalue().encode("utf-8"))
        self.files.append(path)
        return path

    def add_file(self, path: Path):
        self.files.append(Path(path))


def write_manifest(ctx: RunContext, cfg: ExperimentConfig, command: str, wall: float,
                   complete: bool, error: dict | None = None) -> Path:
    import numba  # noqa: F401 - version probe only
    from ._jit import JIT_ENABLED

    manifest = {
        "command": command,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "versions": {"harvest_sa": __version__, "numpy": np.__version__,
                     "numba": numba.__version__, "python": platform.python_version(),
                     "jit": JIT_ENABLED},
        "files": {p.name: sha256_file(p) for p in ctx.files if p.exists()},
        "wall_clock_s": round(wall, 3),
        "evaluations": ctx.evaluations,
        "complete": complete,
        "notes": ctx.notes,
    }
    if error is not None:
        manifest["error"] = error
    path = ctx.out_dir / MANIFEST
    _atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return path


def verify_manifest(out_dir) -> list[str]:
    """Names of files whose checksum no longer matches the manifest."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST).read_text())
    bad = []
    for name, digest in manifest["files"].items():
        p = out_dir / name
        if not p.exists() or sha256_file(p) != digest:
            bad.append(name)
    return bad


# -- commands ---------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, ctx: RunContext, method=None):
    series = integrate(cfg.study_nominal(), cfg.s0, cfg.integrator)
    ctx.evaluations += 1
    rows = ((t, x, xd, v) for t, (x, xd, v) in zip(series.t.tolist(), series.states.tolist()))
    ctx.write_csv("simulate.csv", HEADERS["simulate"], rows)


def cmd_bifurcation(cfg: ExperimentConfig, ctx: RunContext, method=None):
    lo, hi, n = cfg.bif_range
    sweeps = {d: bifurcation_sweep(cfg.study_nominal(), lo, hi, n, d, cfg.integrator, cfg.s0,
                                   cfg.n_strobe, cfg.discard_fraction)
              for d in ("up", "down")}
    rows, failed = [], []
    for d, data in sweeps.items():
        ctx.evaluations += len(data.records)
        for rec in data.records:
            if rec.error:
                failed.append({"direction": d, "f": rec.f, "error": rec.error})
            for i, v in enumerate(rec.v):
                rows.append((d, rec.f, i, v))
    ctx.notes["failed_records"] = failed
    ctx.notes["hysteresis_f"] = sweep_disagreement(sweeps["up"], sweeps["down"])
    ctx.write_csv("bifurcation.csv", HEADERS["bifurcation"], rows)


def cmd_power_map(cfg: ExperimentConfig, ctx: RunContext, method=None):
    grid = power_map(cfg.study_nominal(), cfg.power_f_axis, cfg.beta_axis, cfg.integrator, cfg.s0,
                     cfg.window_fraction, cfg.workers)
    ctx.evaluations += grid.mean_power.size
    rows = ((b, f, grid.mean_power[i, j]) for i, b in enumerate(grid.beta_axis)
            for j, f in enumerate(grid.f_axis))
    ctx.write_csv("power_map.csv", HEADERS["power-map"], rows)


def sobol_at(cfg: ExperimentConfig, ctx: RunContext, method: str, nominal, spec, tag: str = ""):
    qoi = HarvesterQoI(spec, nominal, cfg.integrator, cfg.s0, cfg.window_fraction, cfg.workers)
    if method == "mc":
        report = mc_first_order(qoi, spec, cfg.mc_n, cfg.seed)
    else:
        design = lhs_sample(cfg.pce_n, spec.k, cfg.seed)
        y = qoi(spec.to_values(design.values))
        model = fit(design, y, cfg.degree_policy, spec)
        report = sobol_from_pce(model, cfg.max_order)
        path = ctx.out_dir / f"pce_model{tag}.txt"
        save_pce(model, path)
        ctx.add_file(path)
    ctx.evaluations += qoi.evaluations
    return report


def _meta(report):
    return {k: (v if isinstance(v, (int, str)) else fmt(v)) for k, v in report.metadata.items()}


def cmd_sobol(cfg: ExperimentConfig, ctx: RunContext, method="pce"):
    nominal = cfg.study_nominal()
    spec = cfg.input_space(nominal)
    report = sobol_at(cfg, ctx, method, nominal, spec)
    ctx.notes["metadata"] = _meta(report)
    ctx.notes["inputs"] = spec.names
    ctx.write_csv(f"sobol_{method}.csv", HEADERS["sobol"], report.rows())


def cmd_sobol_sweep(cfg: ExperimentConfig, ctx: RunContext, method="pce"):
    base = cfg.study_nominal()
    spec0 = cfg.input_space(base)
    rows, meta = [], []
    for g, f in enumerate(cfg.f_grid):
        nominal = base.with_(f=float(f))
        spec = recenter(spec0, base, float(f))
        report = sobol_at(cfg, ctx, method, nominal, spec, tag=f"_{g:03d}")
        meta.append({"f": fmt(f), **_meta(report)})
        rows.extend((f, *row) for row in report.rows())
    ctx.notes["metadata"] = meta
    ctx.write_csv(f"sobol_sweep_{method}.csv", HEADERS["sobol-sweep"], rows)


def cmd_propagate(cfg: ExperimentConfig, ctx: RunContext, method=None):
    nominal = cfg.study_nominal()
    spec = cfg.input_space(nominal)
    bands = propagate(spec, nominal, cfg.f_grid, cfg.propagate_n, cfg.percentiles, cfg.seed,
                      cfg.integrator, cfg.s0, cfg.window_fraction, cfg.workers)
    ctx.evaluations += cfg.propagate_n * len(cfg.f_grid)
    ctx.notes["failed_per_f"] = bands.n_failed.tolist()
    rows = []
    for g, f in enumerate(bands.f_grid):
        rows.extend((f, p, bands.values[g, j]) for j, p in enumerate(bands.percentiles))
        rows.append((f, "mean", bands.mean[g]))
    ctx.write_csv("propagate.csv", HEADERS["propagate"], rows)


def cmd_validate(cfg: ExperimentConfig, ctx: RunContext, method=None):
    from .validation import run_oracles

    results = run_oracles(seed=cfg.seed)
    ctx.write_csv("validate.csv", HEADERS["validate"],
                  ((r.name, r.value, r.tolerance, "yes" if r.passed else "no") for r in results))
    ctx.notes["failed_checks"] = [r.name for r in results if not r.passed]
    return 0 if all(r.passed for r in results) else 1


HANDLERS = {
    "simulate": cmd_simulate,
    "bifurcation": cmd_bifurcation,
    "power-map": cmd_power_map,
    "sobol": cmd_sobol,
    "sobol-sweep": cmd_sobol_sweep,
    "propagate": cmd_propagate,
    "validate": cmd_validate,
}


def run_case(cfg: ExperimentConfig, command: str, method: str = "pce", out_dir=None) -> int:
    """Run one command; returns the process exit status."""
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(out)
    start = time.perf_counter()
    try:
        status = HANDLERS[command](cfg, ctx, method) or 0
    except HarvestError as exc:
        for p in ctx.files:
            if p.exists():
                p.unlink()
        ctx.files.clear()
        error = {"type": type(exc).__name__, "message": str(exc)}
        write_manifest(ctx, cfg, command, time.perf_counter() - start, False, error)
        print(json.dumps({"error": error}), file=sys.stderr)
        return 2
    write_manifest(ctx, cfg, command, time.perf_counter() - start, True)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harvest-sa",
                                 description="Sensitivity analysis of bistable energy harvesters.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="experiment config file")
    ap.add_argument("--out", help="output directory (overrides [output] out_dir)")
    ap.add_argument("--seed", type=int, help="random seed (overrides [uq] seed)")
    ap.add_argument("--workers", type=int,
                    help="worker processes (default: [output] workers, then $HARVEST_SA_WORKERS, then 1)")
    ap.add_argument("--method", choices=("mc", "pce"), default="pce")
    ap.add_argument("--case", choices=("classical", "nl_coupling", "asymmetric", "full"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, seed=args.seed, case=args.case)
    except (HarvestError, OSError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 2
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    return run_case(cfg, args.command, args.method, args.out)


if __name__ == "__main__":
    sys.exit(main())
