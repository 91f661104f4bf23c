"""Command line driver: single solves, canned experiment sweeps, mesh info.

Configuration comes from flags or a flat key=value file (flags win).  Every
solve writes ``report.csv`` (one row per cycle/iteration), ``solution.txt``
(x y u per node) and ``mesh.txt`` into the output directory; high-accuracy
reference solutions for the err_s column are cached as ``ref_<hash>.txt``.
Exit status: 0 converged, 2 budget exhausted, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from time import perf_counter

import numpy as np

from . import analytic, fem, mgopt as mg
from .mesh import MeshHierarchy, write_mesh
from .smoother import (DescentSolver, LineSearchFailure, SmootherConfig,
                       SolveReport, polish_minimizer)

REPORT_COLUMNS = ["cycle", "energy", "grad_norm", "err_s", "plug_flow",
                  "err_pf", "alpha", "wall_ms"]


@dataclass
class RunConfig:
    model: str = "hb"
    p: float = 1.75
    g: float = 0.0
    gamma: float = 1e3
    f: float = 1.0
    levels: int = 5          # number of grids in the hierarchy
    finest: int = 6          # refinement depth of the finest grid
    nu1: int = 2
    nu2: int = 2
    mode: str = "mgopt"      # mgopt | descent | fmg
    sigma1: float = 1e-4
    eps: float = 1e-6
    tol: float = 1e-7
    max_cycles: int = 0      # 0 = mode default (30 cycles / 5000 iterations)
    out: str = "."
    seed: int = 0
    ref: bool = True


_BOOL_WORDS = {"1": True, "true": True, "yes": True,
               "0": False, "false": False, "no": False}


def _parse_config_file(path: str) -> dict:
    """Flat key=value file; unknown keys are rejected with their line number."""
    known = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _convert(key, val, path, lineno)
    return values


def _convert(key, val, path, lineno):
    target = {f.name: f.default for f in fields(RunConfig)}[key]
    try:
        if isinstance(target, bool):
            return _BOOL_WORDS[val.lower()]
        if isinstance(target, int):
            return int(val)
        if isinstance(target, float):
            return float(val)
        return val
    except (KeyError, ValueError):
        raise ValueError(f"{path}:{lineno}: bad value {val!r} for {key!r}") from None


def _merge_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        for k, v in _parse_config_file(args.config).items():
            setattr(cfg, k, v)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig):
    if cfg.model not in ("hb", "bingham", "casson"):
        raise ValueError(f"model must be hb, bingham or casson, got {cfg.model!r}")
    if cfg.mode not in ("mgopt", "descent", "fmg"):
        raise ValueError(f"mode must be mgopt, descent or fmg, got {cfg.mode!r}")
    if cfg.finest < 0:
        raise ValueError("finest must be nonnegative")
    if not 1 <= cfg.levels <= cfg.finest + 1:
        raise ValueError(f"levels must lie in [1, finest+1] = [1, {cfg.finest + 1}]")
    if cfg.max_cycles < 0:
        raise ValueError("max_cycles must be nonnegative")


def _build_model(cfg: RunConfig) -> fem.ModelSpec:
    if cfg.model == "hb":
        return fem.ModelSpec.herschel_bulkley(cfg.p, cfg.g, cfg.gamma, cfg.f)
    if cfg.model == "bingham":
        return fem.ModelSpec.bingham(cfg.g, cfg.gamma, cfg.f)
    return fem.ModelSpec.casson(cfg.g, cfg.gamma, cfg.f)


def _build_meshes(finest: int, levels: int):
    hier = MeshHierarchy.unit_disk(finest + 1)
    return hier.levels[finest - levels + 1:]


def _profile_or_none(model):
    try:
        return analytic.profile_for(model)
    except ValueError:
        return None


def reference_solution(model, mesh, out_dir: Path, rtol=1e-11, max_iter=5000):
    """High-accuracy single-grid solution, cached as ref_<hash>.txt.

    Descent runs until the relative gradient target or float-resolution
    stagnation, then a semismooth-Newton polish takes the gradient to
    machine floor.
    """
    key = (f"{model.kind} p={model.p!r} g={model.g!r} gamma={model.gamma!r} "
           f"f={model.f!r} level={mesh.level} nodes={mesh.n_nodes}")
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    path = Path(out_dir) / f"ref_{digest}.txt"
    if path.exists():
        ref = np.loadtxt(path)
        if ref.shape == (mesh.n_nodes,):
            return ref
    solver = DescentSolver(model, mesh, SmootherConfig())
    u = fem.poisson_solve(mesh, model.f)
    u, _ = solver.run(u, count=max_iter, grad_rtol=rtol)
    u = polish_minimizer(u, model, mesh)
    np.savetxt(path, u, fmt="%.17e")
    return u


def _descent_report(model, mesh, scfg, max_iter, rtol, ref, profile,
                    err_s_stop=None):
    """Single-grid descent with per-iteration metric rows.

    Mirrors DescentSolver.run but enriches each record; ``err_s_stop``
    optionally terminates once the reference distance falls below it.
    """
    solver = DescentSolver(model, mesh, scfg)
    u = fem.poisson_solve(mesh, model.f)
    report = SolveReport()
    gref = None
    energy0 = None
    it = 0
    while True:
        grad = solver.gradient(u)
        gnorm = float(np.linalg.norm(grad))
        if gref is None:
            gref = gnorm
        if gnorm == 0.0 or gnorm <= rtol * gref:
            report.status = "converged"
            break
        if it >= max_iter:
            break
        t0 = perf_counter()
        try:
            u, rec = solver.step(u, grad=grad, energy0=energy0)
        except LineSearchFailure:
            report.status = "line-search-failure"
            break
        rec.index = it + 1
        rec.wall_ms = (perf_counter() - t0) * 1e3
        if profile is not None:
            rec.plug_flow = analytic.plug_flow_numeric(u, mesh)
            rec.err_pf = abs(analytic.plug_value(profile) - rec.plug_flow)
        if ref is not None:
            rec.err_s = analytic.err_s(u, ref, mesh)
        report.records.append(rec)
        energy0 = rec.energy
        it += 1
        if err_s_stop is not None and rec.err_s is not None and rec.err_s <= err_s_stop:
            report.status = "converged"
            break
    return u, report


def _fmt(x):
    return "" if x is None else f"{x:.6e}"


def _record_row(rec) -> dict:
    return {
        "cycle": rec.index,
        "energy": _fmt(rec.energy),
        "grad_norm": _fmt(rec.grad_norm),
        "err_s": _fmt(rec.err_s),
        "plug_flow": _fmt(rec.plug_flow),
        "err_pf": _fmt(rec.err_pf),
        "alpha": _fmt(rec.alpha),
        "wall_ms": f"{rec.wall_ms:.3f}",
    }


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def cmd_solve(args) -> int:
    cfg = _merge_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model = _build_model(cfg)
    meshes = _build_meshes(cfg.finest, cfg.levels)
    fine = meshes[-1]
    profile = _profile_or_none(model)
    ref = reference_solution(model, fine, out) if cfg.ref else None
    scfg = SmootherConfig(eps=cfg.eps, sigma1=cfg.sigma1)

    if cfg.mode == "descent" or len(meshes) == 1:
        max_iter = cfg.max_cycles or 5000
        u, report = _descent_report(model, fine, scfg, max_iter, cfg.tol,
                                    ref, profile)
    else:
        mcfg = mg.MgoptConfig(nu1=cfg.nu1, nu2=cfg.nu2, smoother=scfg,
                              outer_rtol=cfg.tol,
                              max_cycles=cfg.max_cycles or 30)
        solve = mg.fmg_solve if cfg.mode == "fmg" else mg.mgopt_solve
        u, report = solve(model, meshes, mcfg, ref=ref, profile=profile)

    _write_csv(out / "report.csv", REPORT_COLUMNS,
               [_record_row(r) for r in report.records])
    fem.write_field(fine, u, out / "solution.txt")
    write_mesh(fine, out / "mesh.txt")
    if report.records:
        last = report.records[-1]
        print("  ".join(f"{k}={v}" for k, v in _record_row(last).items()))
    print(f"status: {report.status}")
    return 0 if report.status == "converged" else 2


def _sweep_rows(report, **extra):
    rows = []
    for rec in report.records:
        row = dict(extra)
        row.update(_record_row(rec))
        rows.append(row)
    return rows


def _experiment_1(out: Path) -> int:
    """Power-law sweep, p = 1.75, five grids, against single-grid descent."""
    columns = ["g", "solver"] + REPORT_COLUMNS
    rows = []
    meshes = _build_meshes(6, 5)
    for g in (0.0, 0.2, 0.4):
        model = fem.ModelSpec.herschel_bulkley(1.75, g)
        profile = _profile_or_none(model)
        ref = reference_solution(model, meshes[-1], out)
        cfgm = mg.MgoptConfig(nu1=2, nu2=2, max_cycles=9)
        _, rep = mg.mgopt_solve(model, meshes, cfgm, ref=ref, profile=profile)
        rows += _sweep_rows(rep, g=g, solver="mgopt")
        _, rep = _descent_report(model, meshes[-1], SmootherConfig(), 5000,
                                 1e-7, ref, profile)
        rows += _sweep_rows(rep, g=g, solver="descent")
    _write_csv(out / "experiment1.csv", columns, rows)
    return 0


def _experiment_2(out: Path) -> int:
    """Bingham g = 0.4 with both smoothing splits, against descent."""
    meshes = _build_meshes(6, 5)
    model = fem.ModelSpec.bingham(0.4)
    profile = _profile_or_none(model)
    ref = reference_solution(model, meshes[-1], out)
    _, rep_d = _descent_report(model, meshes[-1], SmootherConfig(), 5000,
                               1e-7, ref, profile)
    for nu1, nu2, name in ((2, 2, "experiment2_nu22.csv"),
                           (1, 3, "experiment2_nu13.csv")):
        cfgm = mg.MgoptConfig(nu1=nu1, nu2=nu2, max_cycles=9)
        _, rep = mg.mgopt_solve(model, meshes, cfgm, ref=ref, profile=profile)
        rows = _sweep_rows(rep, solver=f"mgopt({nu1},{nu2})")
        rows += _sweep_rows(rep_d, solver="descent")
        _write_csv(out / name, ["solver"] + REPORT_COLUMNS, rows)
    return 0


def _experiment_3(out: Path) -> int:
    """Shear-thickening case p = 5, three grids (2113 finest, 145 coarsest)."""
    meshes = _build_meshes(5, 3)
    model = fem.ModelSpec.herschel_bulkley(5.0, 0.1)
    profile = _profile_or_none(model)
    ref = reference_solution(model, meshes[-1], out)
    cfgm = mg.MgoptConfig(nu1=2, nu2=2, max_cycles=9)
    _, rep = mg.mgopt_solve(model, meshes, cfgm, ref=ref, profile=profile)
    rows = _sweep_rows(rep, solver="mgopt")
    _, rep_d = _descent_report(model, meshes[-1], SmootherConfig(), 5000,
                               1e-7, ref, profile)
    rows += _sweep_rows(rep_d, solver="descent")
    _write_csv(out / "experiment3.csv", ["solver"] + REPORT_COLUMNS, rows)
    return 0


def _experiment_4(out: Path) -> int:
    """Casson g = 0.2 full multigrid with 1..5 grids; relative timings."""
    model = fem.ModelSpec.casson(0.2)
    profile = _profile_or_none(model)
    fine = _build_meshes(6, 1)[0]
    ref = reference_solution(model, fine, out)

    t0 = perf_counter()
    u, rep_d = _descent_report(model, fine, SmootherConfig(), 5000, 0.0,
                               ref, profile, err_s_stop=1e-7)
    base_time = perf_counter() - t0
    rows = [{
        "grids": 1, "coarsest_nodes": fine.n_nodes,
        "it": len(rep_d.records),
        "plug_flow": _fmt(analytic.plug_flow_numeric(u, fine)),
        "err_pf": _fmt(analytic.err_pf(u, profile, fine)),
        "rel_cpu_time": "1.000",
    }]
    for grids in range(2, 6):
        meshes = _build_meshes(6, grids)
        cfgm = mg.MgoptConfig(nu1=2, nu2=2)
        t0 = perf_counter()
        u, rep = mg.fmg_solve(model, meshes, cfgm, ref=ref, profile=profile)
        elapsed = perf_counter() - t0
        rows.append({
            "grids": grids, "coarsest_nodes": meshes[0].n_nodes,
            "it": len(rep.records),
            "plug_flow": _fmt(analytic.plug_flow_numeric(u, meshes[-1])),
            "err_pf": _fmt(analytic.err_pf(u, profile, meshes[-1])),
            "rel_cpu_time": f"{elapsed / base_time:.3f}",
        })
    _write_csv(out / "experiment4.csv",
               ["grids", "coarsest_nodes", "it", "plug_flow", "err_pf",
                "rel_cpu_time"], rows)
    return 0


_EXPERIMENTS = {1: _experiment_1, 2: _experiment_2, 3: _experiment_3,
                4: _experiment_4}


def cmd_experiment(args) -> int:
    if args.id not in _EXPERIMENTS:
        print(f"error: experiment must be one of {sorted(_EXPERIMENTS)}",
              file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return _EXPERIMENTS[args.id](out)


def cmd_mesh_info(args) -> int:
    if args.levels < 1:
        print("error: levels must be at least 1", file=sys.stderr)
        return 1
    from .mesh import total_area
    hier = MeshHierarchy.unit_disk(args.levels)
    print(f"{'level':>5} {'nodes':>7} {'triangles':>9} {'boundary':>8} {'area':>12}")
    for m in hier.levels:
        print(f"{m.level:>5} {m.n_nodes:>7} {m.n_triangles:>9} "
              f"{int(np.count_nonzero(m.is_boundary)):>8} {total_area(m):>12.8f}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="viscogrid",
                     description="Yield-stress pipe-flow solver on nested disk grids.")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one solve")
    ps.add_argument("--config", help="key=value config file; flags override it")
    ps.add_argument("--model", choices=["hb", "bingham", "casson"])
    ps.add_argument("--p", type=float, help="power-law exponent (hb only)")
    ps.add_argument("--g", type=float, help="yield stress")
    ps.add_argument("--gamma", type=float, help="regularization parameter")
    ps.add_argument("--f", type=float, help="constant pressure drop")
    ps.add_argument("--levels", type=int, help="number of grids")
    ps.add_argument("--finest", type=int, help="refinement depth of the finest grid")
    ps.add_argument("--nu1", type=int, help="pre-smoothing steps")
    ps.add_argument("--nu2", type=int, help="post-smoothing steps")
    ps.add_argument("--mode", choices=["mgopt", "descent", "fmg"])
    ps.add_argument("--sigma1", type=float, help="sufficient-decrease constant")
    ps.add_argument("--eps", type=float, help="preconditioner regularization")
    ps.add_argument("--tol", type=float, help="relative gradient-reduction stop")
    ps.add_argument("--max-cycles", dest="max_cycles", type=int)
    ps.add_argument("--out", help="output directory")
    ps.add_argument("--seed", type=int, help="seed recorded for randomized tooling")
    ps.add_argument("--no-ref", dest="ref", action="store_false", default=None,
                    help="skip the cached high-accuracy reference (empty err_s)")
    ps.set_defaults(func=cmd_solve)

    pe = sub.add_parser("experiment", help="reproduce a canned sweep (1-4)")
    pe.add_argument("id", type=int)
    pe.add_argument("--out", default=".")
    pe.set_defaults(func=cmd_experiment)

    pm = sub.add_parser("mesh-info", help="print the nested-grid table")
    pm.add_argument("--levels", type=int, default=7)
    pm.set_defaults(func=cmd_mesh_info)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return 0 if code in (0, None) else int(code)
    try:
        return args.func(args)
    except (ValueError, OSError, fem.NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
