"""Command-line entry point: ``screengap <command> [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 internal
consistency failure (eigenvalue bracketing).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .analytic import (
    GapSpec,
    ScreenParams,
    TwoScreenSpec,
    gap_edges,
    hole_radius,
    inverse_design,
    maxwell_gap,
    two_screen_gaps,
)
from .bands import ERROR_KEYS, MeshPolicy, converge_study, dirichlet_floor, sweep_bands
from .capacity import ball_capacity, disc_capacity
from .errors import ParameterError, ScreenGapError
from .mesh import TAG_NAMES, build_cell_mesh, cellmesh_text, validate_mesh
from .persist import (
    ResultCache,
    atomic_write_text,
    config_hash,
    csv_text,
    dump_json,
    seed_from_hash,
    validate_json,
)

log = logging.getLogger("screengap")

DEFAULT_OUT = "screengap-out"
CONFIG_VERSION = 1


# ---------------------------------------------------------------- helpers


def _float_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _capT(n: int, capT: Optional[float]) -> Optional[float]:
    if n == 2:
        return None
    if capT is not None:
        return capT
    res = disc_capacity(n)
    log.info("disc capacity for n=%d from the meridian solver: %.10g", n, res.capT)
    return res.capT


def _gap_dict(g: GapSpec) -> dict:
    return {"sigma": g.sigma, "mu": g.mu}


# ---------------------------------------------------------------- analytic commands


def run_gap_edges(cfg: dict, ctx: dict) -> dict:
    p = ScreenParams(cfg["n"], cfg["d"], cfg["b"], cfg.get("eps"))
    capT = _capT(p.n, cfg.get("capT"))
    g = gap_edges(p, capT)
    out = {"command": "gap-edges", "n": p.n, "d": p.d, "b": p.b, **_gap_dict(g), "capT": capT}
    if p.eps is not None:
        out["eps"] = p.eps
        out["hole_radius"] = hole_radius(p)
    return out


def run_design(cfg: dict, ctx: dict) -> dict:
    n = cfg["n"]
    capT = _capT(n, cfg.get("capT"))
    d, b = inverse_design(cfg["sigma"], cfg["mu"], n, capT)
    return {"command": "design", "n": n, "sigma": cfg["sigma"], "mu": cfg["mu"], "d": d, "b": b, "capT": capT}


def run_two_screen(cfg: dict, ctx: dict) -> dict:
    spec = TwoScreenSpec(cfg["d1"], cfg["d2"], cfg["vol1"], cfg["vol2"], n=cfg["n"])
    capT = _capT(spec.n, cfg.get("capT"))
    s = two_screen_gaps(spec, capT, radicand=cfg["radicand"])
    keys = ("sigma1", "mu1", "sigma2", "mu2", "rho1", "rho2")
    return {"command": "two-screen", "radicand": cfg["radicand"], **{k: getattr(s, k) for k in keys}}


def run_maxwell(cfg: dict, ctx: dict) -> dict:
    neg, pos = maxwell_gap(GapSpec(cfg["sigma"], cfg["mu"]))
    return {"command": "maxwell", "sigma": cfg["sigma"], "mu": cfg["mu"], "negative": list(neg), "positive": list(pos)}


# ---------------------------------------------------------------- file-producing commands


def run_capacity(cfg: dict, ctx: dict) -> dict:
    fn = disc_capacity if cfg["shape"] == "disc" else ball_capacity
    res = fn(cfg["n"], cfg["R"], cfg["h"], extrapolate=cfg["extrapolate"])
    summary = {
        "command": "capacity",
        "shape": cfg["shape"],
        "n": res.n,
        "capT": res.capT,
        "domain_radius": res.domain_radius,
        "mesh_h": res.mesh_h,
        "extrapolated": res.extrapolated,
        "raw": list(res.raw),
        "n_nodes": res.n_nodes,
    }
    return {"capacity.json": summary}


def _geometry(cfg: dict) -> tuple:
    if cfg.get("r") is not None:
        r = cfg["r"]
    else:
        r = hole_radius(ScreenParams(2, cfg["d"], cfg["b"], cfg["eps"]))
    policy = MeshPolicy(tip_factor=cfg["tip_factor"], h_max=cfg["h_max"], grading_ratio=cfg["grading"])
    return policy.geometry(cfg["b"], r), policy


def run_mesh(cfg: dict, ctx: dict) -> dict:
    geom, _ = _geometry(cfg)
    mesh = build_cell_mesh(geom)
    rep = validate_mesh(mesh)
    ncomp, _ = mesh.components()
    summary = {
        "command": "mesh",
        "b": geom.b,
        "hole_radius": geom.hole_radius,
        "n_nodes": mesh.n_nodes,
        "n_triangles": int(len(mesh.triangles)),
        "n_seam_pairs": int(len(mesh.seam_pairs)),
        "components": int(ncomp),
        "min_angle_deg": float(mesh.min_angles().min()),
        "tag_counts": {TAG_NAMES[t]: int(np.sum(mesh.tags == t)) for t in range(len(TAG_NAMES))},
        "checks": {name: c.passed for name, c in rep.checks.items()},
        "ok": rep.ok,
    }
    return {"cell.mesh": cellmesh_text(mesh), "mesh.json": summary}


PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Band diagram from band.csv: physical eigenvalues against the phi sample index."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rows = list(csv.DictReader(open(here / "band.csv", newline="")))
samples = sorted({(float(r["phi1"]), float(r["phi2"])) for r in rows})
index = {s: i for i, s in enumerate(samples)}
fig, ax = plt.subplots(figsize=(8, 5))
for k in sorted({int(r["k"]) for r in rows}):
    pts = sorted((index[(float(r["phi1"]), float(r["phi2"]))], float(r["lambda_physical"])) for r in rows if int(r["k"]) == k)
    ax.plot([p[0] for p in pts], [p[1] for p in pts], ".", ms=3, label=f"k={k}")
ax.set_xlabel("phi sample")
ax.set_ylabel("eigenvalue (physical scale)")
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else here / "band.png", dpi=150)
'''


def run_band(cfg: dict, ctx: dict) -> dict:
    geom, _ = _geometry(cfg)
    eps = cfg["eps"]
    targets = gap_edges(ScreenParams(2, cfg["d"], cfg["b"]))
    window = cfg.get("window") or targets.window
    bs = sweep_bands(
        geom, eps, phi_grid=cfg["phi_grid"], k_max=cfg["k_max"], window_L=window, tol=cfg["tol"], seed=ctx["seed"], threads=ctx["threads"]
    )
    rows = []
    for (p1, p2), vals in zip(bs.theta_samples, bs.eigen_tables):
        for k, v in enumerate(vals, start=1):
            rows.append((eps, p1, p2, k, float(v), float(v) / eps**2))
    csv_body = csv_text(("eps", "phi1", "phi2", "k", "lambda_cell", "lambda_physical"), rows)
    s = 1.0 / eps**2
    summary = {
        "command": "band",
        "config_hash": ctx["hash"],
        "epsilon": eps,
        "hole_radius": geom.hole_radius,
        "targets": _gap_dict(targets),
        "window_L": bs.window_L,
        "coverage": bs.coverage,
        "k_max": bs.k_max,
        "n_samples": len(bs.theta_samples),
        "n_nodes": bs.n_nodes,
        "neumann_cell": bs.neumann.tolist(),
        "dirichlet_cell": bs.dirichlet.tolist(),
        "bands": bs.bands.tolist(),
        "gaps": [list(g) for g in bs.gaps],
        "gap_count": len(bs.gaps),
        "sandwich": {
            "sigma": [s * float(bs.corner_values((math.pi, math.pi))[0]), s * float(bs.dirichlet[0])],
            "mu": [s * float(bs.neumann[1]), s * float(bs.corner_values((0.0, 0.0))[1])],
        },
        "maxwell_gaps": [list(maxwell_gap(GapSpec(lo, hi))) for lo, hi in bs.gaps if 0 < lo < hi],
        "residual_max": bs.residual_max,
    }
    return {"band.csv": csv_body, "summary.json": summary, "band.plot": PLOT_SCRIPT}


CONVERGE_COLUMNS = (
    "eps",
    "hole_radius",
    "status",
    "n_nodes",
    "h_max",
    "tip_size",
    "lam_d1",
    "lam_n1",
    "lam_n2",
    "lam_t2_1",
    "lam_t1_1",
    "lam_t1_2",
    *(f"err_{k}" for k in ERROR_KEYS),
    "rayleigh",
    "rayleigh_over_sigma_eps2",
    "sigma_eps",
    "mu_eps",
    "gap_count",
)


def run_converge(cfg: dict, ctx: dict) -> dict:
    params = ScreenParams(2, cfg["d"], cfg["b"])
    policy = MeshPolicy(tip_factor=cfg["tip_factor"], h_max=cfg["h_max"], grading_ratio=cfg["grading"])
    st = converge_study(
        params, cfg["eps_list"], mesh_policy=policy, phi_grid=cfg["phi_grid"], tol=cfg["tol"], seed=ctx["seed"], threads=ctx["threads"]
    )
    sigma = st.targets.sigma
    rows = []
    recs = []
    for r in st.records:
        gap = r.gap if r.gap is not None else (math.nan, math.nan)
        ratio = r.rayleigh / (sigma * r.eps**2) if r.ok else math.nan
        row = [
            r.eps,
            r.hole_radius,
            r.status,
            r.n_nodes,
            r.h_max,
            r.tip_size,
            r.lam_d1,
            r.lam_n1,
            r.lam_n2,
            r.lam_t2_1,
            r.lam_t1_1,
            r.lam_t1_2,
            *(r.errors.get(k, math.nan) for k in ERROR_KEYS),
            r.rayleigh,
            ratio,
            float(gap[0]),
            float(gap[1]),
            len(r.gaps),
        ]
        rows.append(row)
        recs.append({c: v for c, v in zip(CONVERGE_COLUMNS, row)} | {"gaps": [list(g) for g in r.gaps]})
    trends = st.trends()
    # trailing verdict row: one verdict per error column
    verdict = ["trend", "", "verdict"] + [""] * 9 + [trends[k] for k in ERROR_KEYS] + [""] * 5
    rows.append(verdict)
    resolved = st.resolved()
    summary = {
        "command": "converge",
        "config_hash": ctx["hash"],
        "targets": _gap_dict(st.targets),
        "window_L": st.targets.window,
        "records": recs,
        "trends": trends,
        "final_errors": {k: abs(resolved[-1].errors[k]) for k in ERROR_KEYS} if resolved else {},
        "skipped": [r.eps for r in st.records if not r.ok],
    }
    return {"converge.csv": csv_text(CONVERGE_COLUMNS, rows), "converge.json": summary}


def run_floor(cfg: dict, ctx: dict) -> dict:
    geom, _ = _geometry(cfg)
    fr = dirichlet_floor(geom, cfg["eps"], phi_grid=cfg["phi_grid"], tol=cfg["tol"], seed=ctx["seed"], threads=ctx["threads"])
    summary = {
        "command": "floor",
        "config_hash": ctx["hash"],
        "b": geom.b,
        "hole_radius": geom.hole_radius,
        "epsilon": fr.epsilon,
        "cell_floor": fr.cell_floor,
        "physical_floor": fr.physical_floor,
        "samples": [[p1, p2, float(v)] for (p1, p2), v in zip(fr.theta_samples, fr.values)],
    }
    return {"floor.json": summary}


# ---------------------------------------------------------------- parser


def _add_mesh_policy(p):
    p.add_argument("--h-max", dest="h_max", type=float, default=1.0 / 64)
    p.add_argument("--tip-factor", dest="tip_factor", type=float, default=0.25, help="tip element size as a fraction of r")
    p.add_argument("--grading", type=float, default=1.3)


def _add_geometry(p, eps_default: Optional[float] = 0.4):
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--eps", type=float, default=eps_default)
    p.add_argument("--r", type=float, default=None, help="hole radius; overrides the value derived from d and eps")
    _add_mesh_policy(p)


COMMANDS = {}


REQUIRED = {
    "gap-edges": ("d", "b"),
    "design": ("sigma", "mu"),
    "two-screen": ("d1", "d2", "vol1", "vol2"),
    "maxwell": ("sigma", "mu"),
}


def _command(name: str, runner: Callable, keys: tuple, files: bool):
    COMMANDS[name] = (runner, keys, files)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="screengap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help=f"output directory (default {DEFAULT_OUT} for file commands)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--no-cache", dest="no_cache", action="store_true")
    common.add_argument("--tol", type=float, default=1e-10, help="eigensolver residual tolerance")
    common.add_argument("--config", default=None, help="JSON file whose keys provide option defaults")
    common.add_argument("--log-level", dest="log_level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap-edges", parents=[common], help="limit gap edges (sigma, mu)")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--capT", type=float, default=None, help="disc capacity for n > 2 (computed if omitted)")
    _command("gap-edges", run_gap_edges, ("n", "d", "b", "eps", "capT"), False)

    p = sub.add_parser("design", parents=[common], help="(d, b) realising a target gap")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--capT", type=float, default=None)
    _command("design", run_design, ("sigma", "mu", "n", "capT"), False)

    p = sub.add_parser("two-screen", parents=[common], help="gap edges with two traps per cell")
    for k in ("d1", "d2", "vol1", "vol2"):
        p.add_argument(f"--{k}", type=float, default=None)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--capT", type=float, default=None)
    p.add_argument("--radicand", choices=("printed", "symmetric"), default="printed")
    _command("two-screen", run_two_screen, ("d1", "d2", "vol1", "vol2", "n", "capT", "radicand"), False)

    p = sub.add_parser("maxwell", parents=[common], help="Maxwell frequency gaps from (sigma, mu)")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    _command("maxwell", run_maxwell, ("sigma", "mu"), False)

    p = sub.add_parser("capacity", parents=[common], help="capacity of the unit disc (or ball)")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--R", type=float, default=8.0)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--shape", choices=("disc", "ball"), default="disc")
    p.add_argument("--no-extrapolate", dest="extrapolate", action="store_false")
    _command("capacity", run_capacity, ("n", "R", "h", "shape", "extrapolate"), True)

    p = sub.add_parser("mesh", parents=[common], help="build and validate a cell mesh")
    _add_geometry(p)
    _command("mesh", run_mesh, ("d", "b", "eps", "r", "h_max", "tip_factor", "grading"), True)

    p = sub.add_parser("band", parents=[common], help="Bloch band sweep and gap detection")
    _add_geometry(p)
    p.add_argument("--phi-grid", dest="phi_grid", type=int, default=8)
    p.add_argument("--k-max", dest="k_max", type=int, default=6)
    p.add_argument("--window", type=float, default=None, help="physical window bound (default 2 mu)")
    _command(
        "band", run_band, ("d", "b", "eps", "r", "h_max", "tip_factor", "grading", "phi_grid", "k_max", "window", "tol"), True
    )

    p = sub.add_parser("converge", parents=[common], help="epsilon study against the limit gap")
    p.add_argument("--d", type=float, default=1.0)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--eps-list", dest="eps_list", type=_float_list, default=[0.6, 0.55, 0.5, 0.45, 0.4, 0.35])
    p.add_argument("--phi-grid", dest="phi_grid", type=int, default=8, help="0 skips the band sweeps")
    _add_mesh_policy(p)
    _command("converge", run_converge, ("d", "b", "eps_list", "phi_grid", "h_max", "tip_factor", "grading", "tol"), True)

    p = sub.add_parser("floor", parents=[common], help="Dirichlet floor over the phi grid")
    _add_geometry(p, eps_default=1.0)
    p.add_argument("--phi-grid", dest="phi_grid", type=int, default=8)
    _command("floor", run_floor, ("d", "b", "eps", "r", "h_max", "tip_factor", "grading", "phi_grid", "tol"), True)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.exit(2, f"screengap: cannot read config {args.config}: {exc}\n")
        if not isinstance(defaults, dict):
            parser.exit(2, "screengap: config file must hold a JSON object\n")
        # file values act as defaults; explicit command-line options still win
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            parser.exit(2, f"screengap: unknown config keys {unknown}\n")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    # checked after the merge so a config file can supply them
    missing = [k for k in REQUIRED.get(args.command, ()) if getattr(args, k) is None]
    if missing:
        parser.exit(2, f"screengap {args.command}: missing required options {', '.join('--' + k for k in missing)}\n")
    return args


def run_config(command: str, args: argparse.Namespace) -> dict:
    """The semantic config of a run: only what changes the results."""
    _, keys, _ = COMMANDS[command]
    cfg = {k: getattr(args, k) for k in keys}
    return {"command": command, "version": CONFIG_VERSION, **cfg}


def _as_bytes(obj) -> bytes:
    return obj.encode() if isinstance(obj, str) else dump_json(obj).encode()


def _schema_name(fname: str, obj) -> Optional[str]:
    if not fname.endswith(".json"):
        return None
    return obj.get("command", fname[:-5]).replace("-", "_") if isinstance(obj, dict) else None


def execute(args: argparse.Namespace) -> int:
    runner, _, makes_files = COMMANDS[args.command]
    if args.threads < 1:
        raise ParameterError("--threads must be at least 1")
    if not args.tol > 0:
        raise ParameterError("--tol must be positive")
    cfg = run_config(args.command, args)
    digest = config_hash(cfg)
    ctx = {"hash": digest, "seed": seed_from_hash(digest), "threads": args.threads}
    t0 = time.perf_counter()
    if not makes_files:
        result = runner(cfg, ctx)
        validate_json(result, _schema_name("x.json", result))
        text = dump_json(result)
        sys.stdout.write(text)
        if args.out:
            atomic_write_text(Path(args.out) / f"{args.command}.json", text)
        return 0
    out = Path(args.out or DEFAULT_OUT)
    cache = ResultCache(out)
    files = None if args.no_cache else cache.lookup(digest)
    hit = files is not None
    if hit:
        log.info("cache hit %s: no eigensolves executed", digest[:12])
    else:
        produced = runner(cfg, ctx)
        for name, obj in produced.items():
            schema = _schema_name(name, obj)
            if schema:
                validate_json(obj, schema)
        files = {name: _as_bytes(obj) for name, obj in produced.items()}
        cache.store(digest, files)
    for name, data in sorted(files.items()):
        atomic_write_text(out / name, data.decode())
    config_doc = {"config": cfg, "config_hash": digest}
    validate_json(config_doc, "config")
    atomic_write_text(out / "config.json", dump_json(config_doc))
    # wall-clock data lives apart from the results so those stay bit-reproducible
    timings = {"config_hash": digest, "cache_hit": hit, "seconds": time.perf_counter() - t0}
    validate_json(timings, "timings")
    atomic_write_text(out / "timings.json", dump_json(timings))
    listing = {"command": args.command, "config_hash": digest, "cache_hit": hit, "out": str(out), "files": sorted(files)}
    sys.stdout.write(json.dumps(listing) + "\n")
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    try:
        return execute(args)
    except ScreenGapError as exc:
        log.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
