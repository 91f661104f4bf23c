"""Recursive multigrid optimization (V-cycles) and the full-multigrid driver.

Each level k > 0 of a cycle runs nu1 smoothing steps, restricts the iterate,
builds the fine-to-coarse gradient correction

    tau = grad J_coarse(R u) - R grad J_fine(u)

which shifts the coarse objective so that its gradient at the restricted
iterate matches the restricted fine gradient, recurses once, prolongates the
coarse change as a search direction, line-searches along it (skipping with a
logged safeguard event if it fails the descent test), and finishes with nu2
smoothing steps.  Level 0 solves its problem to a tight relative gradient
tolerance.  Restriction of a boundary-zero field can leak onto coarse
boundary nodes, so restricted iterates, gradients and shifts are re-masked.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from time import perf_counter
from typing import Optional

import numpy as np

from . import analytic, fem
from .mesh import MeshLevel, prolongate, restrict
from .smoother import (DescentSolver, LineSearchFailure, SmootherConfig,
                       SolveReport, line_search)

__all__ = ["MgoptConfig", "CycleRecord", "vcycle", "mgopt_solve", "fmg_solve"]

log = logging.getLogger(__name__)


@dataclass
class MgoptConfig:
    nu1: int = 2
    nu2: int = 2
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    outer_rtol: float = 1e-7       # finest-level relative gradient reduction
    max_cycles: int = 30
    coarse_rtol: float = 1e-10     # "solve exactly" tolerance on the coarsest level
    coarse_max_iter: int = 100
    descent_max_iter: int = 5000   # cap for degenerate single-grid runs

    def __post_init__(self):
        if self.nu1 < 0 or self.nu2 < 0:
            raise ValueError("smoothing counts must be nonnegative")
        if self.nu1 + self.nu2 < 1:
            raise ValueError("at least one of nu1, nu2 must be positive")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be positive")


@dataclass
class CycleRecord:
    index: int
    energy: float
    grad_norm: float
    alpha: float          # correction step at the record's level
    fine_steps: int       # smoothing steps performed on the top level
    safeguards: int       # coarse corrections skipped by the descent test
    ls_failures: int      # line searches that stalled at float resolution
    wall_ms: float = 0.0
    level: Optional[int] = None
    err_s: Optional[float] = None
    plug_flow: Optional[float] = None
    err_pf: Optional[float] = None


class _CycleStats:
    """Per-cycle event counters threaded through the recursion."""

    __slots__ = ("top", "fine_steps", "safeguards", "ls_failures", "top_alpha")

    def __init__(self, top):
        self.top = top
        self.fine_steps = 0
        self.safeguards = 0
        self.ls_failures = 0
        self.top_alpha = 0.0


def _restrict0(values: np.ndarray, fine: MeshLevel) -> np.ndarray:
    out = restrict(values, fine)
    out[:fine.n_coarse][fine.is_boundary[:fine.n_coarse]] = 0.0
    return out


def _build_solvers(model, meshes, scfg):
    return [DescentSolver(model, m, scfg) for m in meshes]


def _coarse_shift(solvers, j, u, fhat):
    """Restricted iterate and the shifted coarse right-hand side for level j-1."""
    fine = solvers[j].mesh
    grad_fine = solvers[j].gradient(u)          # unshifted gradient
    u_coarse = _restrict0(u, fine)
    grad_coarse = solvers[j - 1].gradient(u_coarse)
    tau = grad_coarse - _restrict0(grad_fine, fine)
    fhat_coarse = tau if fhat is None else _restrict0(fhat, fine) + tau
    return u_coarse, fhat_coarse


def _smooth(solvers, j, u, fhat, count, stats):
    if count == 0:
        return u
    u, rep = solvers[j].run(u, fhat, count=count)
    if j == stats.top:
        stats.fine_steps += len(rep.records)
    if rep.status == "line-search-failure":
        stats.ls_failures += 1
    return u


def _vcycle(solvers, j, u, fhat, cfg, stats):
    sol = solvers[j]
    if j == 0:
        u, rep = sol.run(u, fhat, count=cfg.coarse_max_iter,
                         grad_rtol=cfg.coarse_rtol)
        if stats.top == 0:
            stats.fine_steps += len(rep.records)
        return u

    u = _smooth(solvers, j, u, fhat, cfg.nu1, stats)

    u_coarse, fhat_coarse = _coarse_shift(solvers, j, u, fhat)
    u_tilde = _vcycle(solvers, j - 1, u_coarse, fhat_coarse, cfg, stats)

    e = prolongate(u_tilde - u_coarse, sol.mesh)
    grad_shifted = sol.gradient(u, fhat)
    slope = float(grad_shifted @ e)
    alpha = 0.0
    if slope < 0.0:
        phi0 = sol.energy(u, fhat)
        relstep = float(np.max(np.abs(e))) / max(1.0, float(np.max(np.abs(u))))
        try:
            res = line_search(phi0, slope, lambda a: sol.energy(u + a * e, fhat),
                              cfg.smoother, relstep=relstep)
            alpha = res.alpha
            u = u + alpha * e
        except LineSearchFailure as exc:
            stats.ls_failures += 1
            log.debug("correction stalled at level %d: %s", j, exc)
    else:
        stats.safeguards += 1
        log.debug("skipped coarse correction at level %d (slope %.3e)", j, slope)
    if j == stats.top:
        stats.top_alpha = alpha

    return _smooth(solvers, j, u, fhat, cfg.nu2, stats)


def vcycle(k: int, u, fhat, model, meshes, cfg: MgoptConfig) -> np.ndarray:
    """One V-cycle rooted at level index k of the mesh list (0 = coarsest)."""
    if not 0 <= k < len(meshes):
        raise ValueError(f"level index {k} outside the {len(meshes)}-level hierarchy")
    solvers = _build_solvers(model, meshes[:k + 1], cfg.smoother)
    return _vcycle(solvers, k, u, fhat, cfg, _CycleStats(k))


def _enrich(rec, u, mesh, ref, profile):
    if profile is not None:
        rec.plug_flow = analytic.plug_flow_numeric(u, mesh)
        rec.err_pf = abs(analytic.plug_value(profile) - rec.plug_flow)
    if ref is not None and len(ref) == mesh.n_nodes:
        rec.err_s = analytic.err_s(u, ref, mesh)


def mgopt_solve(model, meshes, cfg: MgoptConfig, ref=None, profile=None):
    """Repeated V-cycles on the finest grid until the gradient norm drops
    below ``outer_rtol`` times its value at the initial (Poisson) iterate."""
    if len(meshes) < 2:
        raise ValueError("multigrid needs at least two levels")
    solvers = _build_solvers(model, meshes, cfg.smoother)
    top = len(meshes) - 1
    fine, fsol = meshes[top], solvers[top]

    u = fem.poisson_solve(fine, model.f)
    gnorm0 = float(np.linalg.norm(fsol.gradient(u)))
    report = SolveReport()
    if gnorm0 == 0.0:
        report.status = "converged"
        return u, report

    for cycle in range(1, cfg.max_cycles + 1):
        t0 = perf_counter()
        stats = _CycleStats(top)
        u_prev = u
        u = _vcycle(solvers, top, u, None, cfg, stats)
        gnorm = float(np.linalg.norm(fsol.gradient(u)))
        rec = CycleRecord(cycle, fsol.energy(u), gnorm, stats.top_alpha,
                          stats.fine_steps, stats.safeguards, stats.ls_failures,
                          (perf_counter() - t0) * 1e3, level=fine.level)
        _enrich(rec, u, fine, ref, profile)
        report.records.append(rec)
        if gnorm <= cfg.outer_rtol * gnorm0:
            report.status = "converged"
            break
        if np.array_equal(u, u_prev):
            # every line search stalled at float resolution; further cycles
            # cannot move the iterate
            report.status = "line-search-failure"
            break
    return u, report


def fmg_solve(model, meshes, cfg: MgoptConfig, ref=None, profile=None):
    """Full multigrid: solve the coarsest problem, then prolongate level by
    level, running one V-cycle on each visited level."""
    if len(meshes) < 1:
        raise ValueError("fmg needs at least one level")
    solvers = _build_solvers(model, meshes, cfg.smoother)
    report = SolveReport()

    if len(meshes) == 1:
        # degenerate case: plain preconditioned descent on the single grid
        mesh, sol = meshes[0], solvers[0]
        u = fem.poisson_solve(mesh, model.f)
        t0 = perf_counter()
        u, rep = sol.run(u, None, count=cfg.descent_max_iter,
                         grad_rtol=cfg.outer_rtol)
        gnorm = float(np.linalg.norm(sol.gradient(u)))
        rec = CycleRecord(0, sol.energy(u), gnorm, 0.0, len(rep.records), 0, 0,
                          (perf_counter() - t0) * 1e3, level=mesh.level)
        _enrich(rec, u, mesh, ref, profile)
        report.records.append(rec)
        report.status = rep.status if rep.status != "line-search-failure" else "converged"
        return u, report

    u = fem.poisson_solve(meshes[0], model.f)
    t0 = perf_counter()
    u, rep0 = solvers[0].run(u, None, count=cfg.coarse_max_iter,
                             grad_rtol=cfg.coarse_rtol)
    rec = CycleRecord(0, solvers[0].energy(u),
                      float(np.linalg.norm(solvers[0].gradient(u))),
                      0.0, len(rep0.records), 0, 0,
                      (perf_counter() - t0) * 1e3, level=meshes[0].level)
    _enrich(rec, u, meshes[0], None, profile)
    report.records.append(rec)

    for j in range(1, len(meshes)):
        u = prolongate(u, meshes[j])
        t0 = perf_counter()
        stats = _CycleStats(j)
        u = _vcycle(solvers, j, u, None, cfg, stats)
        rec = CycleRecord(j, solvers[j].energy(u),
                          float(np.linalg.norm(solvers[j].gradient(u))),
                          stats.top_alpha, stats.fine_steps, stats.safeguards,
                          stats.ls_failures, (perf_counter() - t0) * 1e3,
                          level=meshes[j].level)
        _enrich(rec, u, meshes[j], ref if j == len(meshes) - 1 else None, profile)
        report.records.append(rec)
    report.status = "converged"
    return u, report
