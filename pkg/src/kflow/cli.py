"""Scenario runner.

    kflow run scenario.ini --out results/ [--seed N] [--threads K] [--verify]

A scenario is an INI file with the sections ``[scenario]``, ``[kernel]``,
``[grid]``, ``[shape]`` and ``[run]``.  Unknown sections or keys are
rejected.  Outputs go to a temporary directory that is renamed into place
only after the experiment finished, so a failed run leaves nothing behind.

Exit codes: 0 ok, 2 config error, 3 solver error, 4 property violation.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io as _io
import json
import os
import platform
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._quadrature import QuadratureError
from .atw import arrival_time, evolve_level_function, run_flow
from .energy import coarea_decompose, curvature_field, jk_functional, nonlocal_perimeter
from .errors import ConfigError, PropertyViolation, SolverError
from .grid import DiscreteSet, GridGeometry, ScalarField, signed_distance
from .io import read_pbm, write_pbm, write_pgm
from .kernel import build_compact_kernel, build_fractional_kernel, top_hat
from .minimality import certify_outward_minimizing, max_strong_delta, mean_convexity_report
from .oracle import MAX_PERIMETER_CELLS, brute_force_perimeter
from .shapes import convex_polygon, cross_geometry, disk, half_plane, tangent_disks_cross, wedge

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4
THREADS_ENV = "KFLOW_THREADS"

KINDS = ("flow", "h-sweep", "certify", "convexity-report", "level-function", "corollary-integral")
SHAPES = ("disk", "polygon", "half-plane", "tangent-disks-cross", "wedge-union", "pbm")


def _float(text: str) -> float:
    v = float(text)
    if not np.isfinite(v):
        raise ValueError("not finite")
    return v


def _floats(text: str) -> list[float]:
    return [_float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _points(text: str) -> list[list[float]]:
    pts = [_floats(chunk) for chunk in text.split(";") if chunk.strip()]
    if any(len(p) != 2 for p in pts):
        raise ValueError("points are 'x y; x y; ...'")
    return pts


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


SCHEMA = {
    "scenario": {"kind": _choice(KINDS), "seed": int, "name": str},
    "kernel": {
        "type": _choice(("fractional", "compact")),
        "s": _float,
        "radius": _float,
        "q_tol": _float,
        "profile": _choice(("top-hat",)),
        "height": _float,
    },
    "grid": {"shape": _ints, "spacing": _float, "clearance": int},
    "shape": {
        "kind": _choice(SHAPES),
        "center": _floats,
        "radius": _float,
        "vertices": _points,
        "normal": _floats,
        "offset": _float,
        "scale": int,
        "r": _float,
        "path": str,
    },
    "run": {
        "h": _float,
        "h_list": _floats,
        "t_max": _float,
        "mode": _choice(("minimal", "maximal")),
        "max_steps": int,
        "delta_tol": _float,
        "lambda_max": _float,
        "lambda_count": int,
        "omega_radius": _float,
        "focus_radius": _float,
        "steps": int,
        "quantum": _float,
        "snapshots": _choice(("yes", "no")),
    },
}

DEFAULTS = {
    "scenario": {"seed": 0, "name": "scenario"},
    "kernel": {"type": "fractional", "q_tol": 1e-10, "profile": "top-hat", "height": 1.0},
    "grid": {"spacing": 1.0, "clearance": 1},
    "shape": {"center": [0.0, 0.0], "offset": 0.0},
    "run": {"mode": "minimal", "delta_tol": 1e-3, "lambda_count": 4, "steps": 1, "snapshots": "yes"},
}

REQUIRED_RUN = {
    "flow": ("h", "t_max"),
    "h-sweep": ("h_list", "t_max"),
    "certify": (),
    "convexity-report": ("lambda_max",),
    "level-function": ("h",),
    "corollary-integral": ("h", "t_max"),
}


def load_config(path: str | Path) -> dict:
    """Parse and validate a scenario file into a fully resolved dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser(
        interpolation=None, default_section="__none__", inline_comment_prefixes=(";", "#")
    )
    parser.optionxform = str
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{key}' in [{sec}]")
            try:
                cfg[sec][key] = SCHEMA[sec][key](raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None
    _validate(cfg, path.parent)
    return cfg


def _need(cfg, sec, key):
    if key not in cfg[sec]:
        raise ConfigError(f"missing '{key}' in [{sec}]")
    return cfg[sec][key]


def _validate(cfg: dict, base: Path) -> None:
    kind = _need(cfg, "scenario", "kind")
    k = cfg["kernel"]
    _need(cfg, "kernel", "radius")
    if k["type"] == "fractional":
        s = _need(cfg, "kernel", "s")
        if not 0 < s < 1:
            raise ConfigError("kernel s must lie in (0, 1)")
    if k["radius"] <= 0 or k["q_tol"] <= 0:
        raise ConfigError("kernel radius and q_tol must be positive")
    shape = cfg["shape"]
    sk = _need(cfg, "shape", "kind")
    if sk != "tangent-disks-cross" and sk != "wedge-union":
        _need(cfg, "grid", "shape")
    if cfg["grid"]["spacing"] <= 0:
        raise ConfigError("grid spacing must be positive")
    if cfg["grid"]["clearance"] < 1:
        raise ConfigError("grid clearance must be at least 1 cell")
    need = {
        "disk": ("radius",),
        "polygon": ("vertices",),
        "half-plane": ("normal",),
        "tangent-disks-cross": ("scale",),
        "wedge-union": ("scale", "r"),
        "pbm": ("path",),
    }[sk]
    for key in need:
        _need(cfg, "shape", key)
    if sk == "pbm":
        p = Path(shape["path"])
        if not p.is_absolute():
            p = base / p
        if not p.is_file():
            raise ConfigError(f"shape file {p} not found")
        shape["path"] = str(p.resolve())
    if sk in ("tangent-disks-cross", "wedge-union") and shape["scale"] < 1:
        raise ConfigError("shape scale must be a positive integer")
    run = cfg["run"]
    for key in REQUIRED_RUN[kind]:
        _need(cfg, "run", key)
    for key in ("h", "t_max", "delta_tol", "lambda_max", "omega_radius", "focus_radius", "quantum"):
        if key in run and not run[key] > 0:
            raise ConfigError(f"[run] {key} must be positive")
    if kind == "h-sweep":
        hs = run["h_list"]
        if len(hs) < 3:
            raise ConfigError("h-sweep needs at least 3 values of h")
        if any(x <= 0 for x in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("h_list must be positive and strictly decreasing")
    if run["lambda_count"] < 1 or run["steps"] < 0:
        raise ConfigError("lambda_count must be >= 1 and steps >= 0")
    if "max_steps" in run and run["max_steps"] < 1:
        raise ConfigError("max_steps must be >= 1")


# -- building blocks ------------------------------------------------------


def build_geometry(cfg: dict) -> GridGeometry:
    sh = cfg["shape"]
    if sh["kind"] in ("tangent-disks-cross", "wedge-union"):
        g = cross_geometry(sh["scale"])
    else:
        dims = cfg["grid"]["shape"]
        try:
            g = GridGeometry(tuple(dims), cfg["grid"]["spacing"])
        except ValueError as exc:
            raise ConfigError(f"[grid] {exc}") from None
    clear = cfg["grid"]["clearance"]
    if clear > 1:
        flex = np.zeros(g.shape, dtype=bool)
        flex[tuple(slice(clear, n - clear) for n in g.shape)] = True
        g = g.with_flexible(flex)
    return g


def build_table(cfg: dict, g: GridGeometry):
    k = cfg["kernel"]
    try:
        if k["type"] == "fractional":
            return build_fractional_kernel(g.n, k["s"], g.spacing, k["radius"], k["q_tol"])
        return build_compact_kernel(g.n, top_hat(k["radius"], k["height"]), g.spacing, k["q_tol"])
    except ValueError as exc:
        raise ConfigError(f"[kernel] {exc}") from None


def build_shape(cfg: dict, g: GridGeometry) -> DiscreteSet:
    sh = cfg["shape"]
    kind = sh["kind"]
    try:
        if kind == "disk":
            s = disk(g, sh["center"], sh["radius"])
        elif kind == "polygon":
            s = convex_polygon(g, sh["vertices"])
        elif kind == "half-plane":
            return half_plane(g, sh["normal"], sh["offset"])
        elif kind == "tangent-disks-cross":
            s = tangent_disks_cross(g)
        elif kind == "wedge-union":
            s = tangent_disks_cross(g) | wedge(g, sh["r"])
        else:
            s = read_pbm(sh["path"], g)
    except ValueError as exc:
        raise ConfigError(f"[shape] {exc}") from None
    if s.is_empty:
        raise ConfigError("[shape] rasterizes to the empty set")
    # bounded shapes keep two cells of clearance inside the flexible region
    margin = np.zeros(g.shape, dtype=bool)
    flex = g.flexible
    for ax in range(g.n):
        for step in (-2, -1, 1, 2):
            margin |= ~np.roll(np.pad(flex, 2, constant_values=False), step, axis=ax)[
                tuple(slice(2, -2) for _ in range(g.n))
            ]
    if np.any(s.mask & (margin | ~flex)):
        raise ConfigError("[shape] must stay at least 2 cells inside the flexible region")
    return s


def _omega(cfg, g: GridGeometry):
    r = cfg["run"].get("omega_radius")
    if r is None:
        return None
    x = g.coords()
    c = cfg["shape"]["center"] if cfg["shape"]["kind"] not in ("tangent-disks-cross", "wedge-union") else [0.0, 0.0]
    return sum((xi - ci) ** 2 for xi, ci in zip(x, c)) <= r * r


# -- experiments ----------------------------------------------------------


class Output:
    """Writes tables and rasters under one directory."""

    def __init__(self, root: Path):
        self.root = root
        self.snap = root / "snapshots"

    def csv(self, name: str, rows: list[dict]) -> None:
        buf = _io.StringIO()
        fields = list(rows[0]) if rows else ["empty"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        (self.root / name).write_text(buf.getvalue())

    def pbm(self, name: str, s: DiscreteSet) -> None:
        if s.geometry.n == 2:
            self.snap.mkdir(exist_ok=True)
            write_pbm(s, self.snap / name)

    def pgm(self, name: str, values) -> None:
        if np.ndim(values) == 2:
            self.snap.mkdir(exist_ok=True)
            write_pgm(values, self.snap / name)


def _verify_flow(trace):
    u = arrival_time(trace)
    if u.info["nested"]:
        for r in trace.records:
            if not np.array_equal(u.values > r.t, r.set.mask):
                raise PropertyViolation(f"superlevel of the arrival time differs from E_{r.k}")
    return u


def exp_flow(cfg, g, table, E, out: Output, verify: bool) -> dict:
    run = cfg["run"]
    trace = run_flow(E, run["h"], run["t_max"], table, run["mode"], run.get("max_steps"))
    out.csv("results.csv", trace.summary_rows())
    if run["snapshots"] == "yes":
        for r in trace.records:
            out.pbm(f"step_{r.k:05d}.pbm", r.set)
    res = {
        "steps": len(trace),
        "termination": trace.termination,
        "integrated_perimeter": trace.integrated_perimeter(),
        "monotone_inclusion": all(b.set <= a.set for a, b in zip(trace.records, trace.records[1:])),
        "monotone_perimeter": all(
            b.perimeter <= a.perimeter + 1e-9 * max(1.0, a.perimeter)
            for a, b in zip(trace.records, trace.records[1:])
        ),
    }
    if verify:
        _verify_flow(trace)
        res["verified"] = True
    return res


def _sweep_one(args):
    E, h, t_max, table, mode, max_steps = args
    return run_flow(E, h, t_max, table, mode, max_steps)


def exp_h_sweep(cfg, g, table, E, out: Output, verify: bool, threads: int = 1) -> dict:
    run = cfg["run"]
    jobs = [(E, h, run["t_max"], table, run["mode"], run.get("max_steps")) for h in run["h_list"]]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(_sweep_one, jobs))
    else:
        traces = [_sweep_one(j) for j in jobs]
    rows, vols = [], []
    prev = None
    for tr in traces:
        integ = tr.integrated_perimeter()
        u = arrival_time(tr) if tr.extinct else None
        jk = jk_functional(u, table) if u is not None else float("nan")
        rows.append(
            {
                "h": tr.h,
                "steps": len(tr),
                "termination": tr.termination,
                "integrated_perimeter": integ,
                "jk_arrival": jk,
                "abs_difference": float("nan") if prev is None else abs(integ - prev),
            }
        )
        prev = integ
        for r in tr.records:
            vols.append({"h": tr.h, "k": r.k, "t": r.t, "measure": r.measure})
        if verify:
            _verify_flow(tr)
    out.csv("results.csv", rows)
    out.csv("volumes.csv", vols)
    diffs = [r["abs_difference"] for r in rows[1:]]
    return {
        "integrated_perimeters": [r["integrated_perimeter"] for r in rows],
        "differences_decrease": all(b < a for a, b in zip(diffs, diffs[1:])),
        "volumes_strictly_decrease": all(
            all(b.measure < a.measure for a, b in zip(tr.records, tr.records[1:])) for tr in traces
        ),
    }


def exp_certify(cfg, g, table, E, out: Output, verify: bool) -> dict:
    run = cfg["run"]
    om = _omega(cfg, g)
    cert = certify_outward_minimizing(E, om, table)
    delta = max_strong_delta(E, om, table, run["delta_tol"]) if cert.minimizing else 0.0
    cert.delta = delta
    row = {
        "verdict": cert.verdict,
        "gain": cert.gain,
        "witness_cells": 0 if cert.witness is None else cert.witness.count,
        "delta_star": delta,
    }
    out.csv("results.csv", [row])
    out.pbm("set.pbm", E)
    if cert.witness is not None:
        out.pbm("witness.pbm", cert.witness)
    res = dict(row)
    if verify and cert.witness is not None:
        if g.size <= MAX_PERIMETER_CELLS:
            gain = brute_force_perimeter(E | cert.witness, table) - brute_force_perimeter(E, table)
        else:
            gain = nonlocal_perimeter(E | cert.witness, table) - nonlocal_perimeter(E, table)
        if not gain < 0:
            raise PropertyViolation("witness does not re-verify as a strict improvement")
        res["verified_gain"] = gain
    return res


def exp_convexity(cfg, g, table, E, out: Output, verify: bool) -> dict:
    run = cfg["run"]
    focus = None
    if "focus_radius" in run:
        x = g.coords()
        c = cfg["shape"]["center"] if cfg["shape"]["kind"] not in ("tangent-disks-cross", "wedge-union") else [0.0, 0.0]
        focus = sum((xi - ci) ** 2 for xi, ci in zip(x, c)) <= run["focus_radius"] ** 2
    try:
        rep = mean_convexity_report(E, table, run["lambda_max"], run["lambda_count"], focus=focus)
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from None
    rows = [
        {
            "lambda": float(l),
            "min_curvature": float(m),
            "focus_min": float(rep.focus_min[i]) if rep.focus_min is not None else float("nan"),
        }
        for i, (l, m) in enumerate(zip(rep.lambdas, rep.min_curvature))
    ]
    out.csv("results.csv", rows)
    out.pgm("curvature.pgm", curvature_field(E, table))
    d = rep.to_dict()
    if verify and rep.strong and not rep.regular:
        raise PropertyViolation("strong convexity verdict without the regular one")
    return {k: d[k] for k in ("plain", "regular", "strong", "strong_delta", "c_fit", "blow_up", "curv_tol")}


def exp_level_function(cfg, g, table, E, out: Output, verify: bool) -> dict:
    run = cfg["run"]
    u0 = signed_distance(E)
    q = run.get("quantum", g.spacing)
    u = evolve_level_function(u0, run["h"], run["steps"], table, quantum=q)
    levels = np.unique(u.values)
    rows = [{"level": float(l), "superlevel_cells": int((u.values > l).sum())} for l in levels]
    out.csv("results.csv", rows)
    out.pgm("level_function.pgm", u.values)
    return {"levels": len(levels), "quantum": q, "steps": run["steps"]}


def exp_corollary(cfg, g, table, E, out: Output, verify: bool) -> dict:
    run = cfg["run"]
    trace = run_flow(E, run["h"], run["t_max"], table, run["mode"], run.get("max_steps"))
    u = arrival_time(trace)
    dec = coarea_decompose(u, table)
    integ = trace.integrated_perimeter()
    jk = jk_functional(u, table)
    rows = [
        {"level": float(l), "gap": float(gp), "perimeter": float(p)}
        for l, gp, p in zip(dec.levels, dec.gaps, dec.perimeters)
    ]
    out.csv("results.csv", rows)
    out.pgm("arrival_time.pgm", u.values)
    if verify and trace.extinct:
        if abs(jk - integ) > 1e-9 * max(1.0, abs(integ)):
            raise PropertyViolation("J_K of the arrival time differs from the integrated perimeter")
    return {
        "termination": trace.termination,
        "integrated_perimeter": integ,
        "jk_arrival": jk,
        "coarea_total": dec.total,
    }


EXPERIMENTS = {
    "flow": exp_flow,
    "h-sweep": exp_h_sweep,
    "certify": exp_certify,
    "convexity-report": exp_convexity,
    "level-function": exp_level_function,
    "corollary-integral": exp_corollary,
}


def _versions() -> dict:
    import numba
    import scipy

    return {
        "kflow": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def run_scenario(config: str | Path, out_dir: str | Path, seed: int | None = None,
                 threads: int = 1, verify: bool = False) -> dict:
    """Run one scenario; raises typed errors, writes nothing unless it succeeds."""
    cfg = load_config(config)
    if seed is not None:
        cfg["scenario"]["seed"] = int(seed)
    out_dir = Path(out_dir)
    g = build_geometry(cfg)
    table = build_table(cfg, g)
    E = build_shape(cfg, g)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".kflow-", dir=out_dir.parent))
    try:
        out = Output(tmp)
        kind = cfg["scenario"]["kind"]
        fn = EXPERIMENTS[kind]
        if kind == "h-sweep":
            results = fn(cfg, g, table, E, out, verify, threads=threads)
        else:
            results = fn(cfg, g, table, E, out, verify)
        manifest = {
            "config": cfg,
            "kernel": {"label": table.label, "offsets": len(table.offsets), "tail": table.tail,
                       "tail_convention": "mass beyond the truncation radius counted as exterior"},
            "grid": {"shape": list(g.shape), "spacing": g.spacing, "flexible_cells": int(g.flexible.sum())},
            "initial_cells": E.count,
            "results": results,
            "versions": _versions(),
        }
        (tmp / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kflow", description="Nonlocal curvature flow scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario file")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (default: <config stem>_out)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help=f"worker count (else ${THREADS_ENV}, else 1)")
    p.add_argument("--verify", action="store_true", help="re-check certificates and flow identities")
    args = parser.parse_args(argv)
    out = args.out or str(Path(args.config).with_suffix("")) + "_out"
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        manifest = run_scenario(args.config, out, args.seed, _threads(args.threads), args.verify)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, QuadratureError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    print(json.dumps(_jsonable(manifest["results"]), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
