"""Closed-form pipe-flow velocity profiles and the two error metrics.

For a unit pipe under constant pressure drop the velocity is radial with a
rigid plug of radius r0 = 2 g.  The profiles below are the classical
solutions for the three models; they validate the computed fields via the
plug-flow velocity error (err_pf) and the discrete L2 distance to a high
accuracy reference (err_s).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fem
from .mesh import MeshLevel

__all__ = [
    "RadialProfile",
    "profile_for",
    "profile_value",
    "plug_value",
    "plug_flow_numeric",
    "err_pf",
    "err_s",
]


@dataclass(frozen=True)
class RadialProfile:
    """Radial velocity profile; ``p`` is used by the power-law model only."""

    kind: str                 # 'hb' | 'bingham' | 'casson'
    g: float
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("hb", "bingham", "casson"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "hb":
            if self.p is None or not self.p > 1.0:
                raise ValueError("power-law profile needs p > 1")
        if not 0.0 <= self.r0 < 1.0:
            raise ValueError(f"plug radius 2*g = {self.r0} must lie in [0, 1) "
                             "for a nontrivial flow")

    @property
    def r0(self) -> float:
        return 2.0 * self.g

    @property
    def beta(self) -> float:
        p = 2.0 if self.kind != "hb" else self.p
        return 1.0 / (p - 1.0)


def profile_for(model: fem.ModelSpec) -> RadialProfile:
    """Profile matching a fluid model (load f = 1 assumed)."""
    p = model.p if model.kind == "hb" else None
    return RadialProfile(model.kind, model.g, p)


def profile_value(prof: RadialProfile, r):
    """Velocity at radius r in [0, 1]; scalar or array argument."""
    r = np.asarray(r, dtype=float)
    if np.any((r < 0.0) | (r > 1.0)):
        raise ValueError("radius outside [0, 1]")
    r0 = prof.r0
    if prof.kind == "casson":
        sq = np.sqrt(r0)
        plug = (3.0 - 8.0 * sq + 6.0 * r0 - r0 * r0) / 12.0
        flow = (0.25 * (1.0 - r**2)
                - (2.0 / 3.0) * sq * (1.0 - r**1.5)
                + 0.5 * r0 * (1.0 - r))
    else:
        b = prof.beta
        scale = 1.0 / (2.0**b * (1.0 + b))
        plug = (1.0 - r0) ** (1.0 + b) * scale
        rr = np.maximum(r - r0, 0.0)
        flow = ((1.0 - r0) ** (1.0 + b) - rr ** (1.0 + b)) * scale
    val = np.where(r <= r0, plug, flow)
    return float(val) if val.ndim == 0 else val


def plug_value(prof: RadialProfile) -> float:
    return profile_value(prof, 0.0)


def plug_flow_numeric(u, mesh: MeshLevel) -> float:
    """Computed plug-flow velocity: value at the node nearest the origin."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"field has shape {u.shape}, level {mesh.level} "
                         f"has {mesh.n_nodes} nodes")
    center = int(np.argmin(np.einsum("nd,nd->n", mesh.nodes, mesh.nodes)))
    return float(u[center])


def err_pf(u, prof: RadialProfile, mesh: MeshLevel) -> float:
    """Absolute plug-flow velocity error against the closed form."""
    return abs(plug_value(prof) - plug_flow_numeric(u, mesh))


def err_s(u, ref, mesh: MeshLevel) -> float:
    """Discrete (mass-weighted) L2 distance between two fields on one level."""
    u = np.asarray(u, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if u.shape != ref.shape or u.shape != (mesh.n_nodes,):
        raise ValueError("fields must live on the same level")
    e = u - ref
    return float(np.sqrt(max(e @ (fem.assemble_mass(mesh) @ e), 0.0)))
