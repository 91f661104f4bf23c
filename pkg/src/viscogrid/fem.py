"""P1 finite element core: energy, gradient, semismooth Hessian, preconditioners.

All three fluid models share one elementwise form.  Writing e = |grad u| on a
triangle (P1 gradients are constant per triangle, so every integral here is
exact):

    energy density    e**p / p   [+ (4/3)*sqrt(g)*e**1.5 for Casson]  + huber(e)
    gradient weight   e**(p-2)   [+ 2*sqrt(g)*e**-0.5]   + g*gamma / max(g, gamma*e)

where ``huber`` is the C1 regularization of ``g*e`` with threshold g/gamma.
Bingham is the p = 2 case of Herschel-Bulkley and is evaluated through the
identical code path.  Fields are plain per-node float arrays; values at
boundary nodes are zero for anything living in the homogeneous-Dirichlet
space, and the gradient/Hessian operators enforce that by masking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import kernels
from .mesh import MeshLevel, signed_areas

__all__ = [
    "NumericError",
    "ModelSpec",
    "ElementGeometry",
    "element_geometry",
    "huber_value",
    "eval_energy",
    "eval_gradient",
    "active_set",
    "assemble_slant_hessian",
    "assemble_preconditioner",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_load",
    "SpdFactor",
    "solve_spd",
    "stiffness_factor",
    "poisson_solve",
    "precond_is_static",
    "write_field",
    "write_matrix",
    "HESS_CLAMP",
]

# clamp for singular |grad u| powers inside the semismooth Hessian
HESS_CLAMP = 1e-12

_MODEL_KINDS = ("hb", "bingham", "casson")


class NumericError(RuntimeError):
    """Numerical failure: non-finite data or a linear solve that broke down."""


@dataclass(frozen=True)
class ModelSpec:
    """Fluid model: power-law exponent, yield stress, regularization, load."""

    kind: str
    p: float
    g: float
    gamma: float = 1e3
    f: float = 1.0

    def __post_init__(self):
        if self.kind not in _MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind in ("bingham", "casson") and self.p != 2.0:
            raise ValueError(f"{self.kind} model requires p = 2, got {self.p}")
        if not self.p > 1.0:
            raise ValueError(f"power-law exponent must exceed 1, got {self.p}")
        if self.g < 0.0:
            raise ValueError(f"yield stress must be nonnegative, got {self.g}")
        if not self.gamma > 0.0:
            raise ValueError(f"regularization parameter must be positive, got {self.gamma}")
        if not math.isfinite(self.f):
            raise ValueError("load must be finite")

    @property
    def is_casson(self) -> bool:
        return self.kind == "casson"

    @classmethod
    def herschel_bulkley(cls, p, g, gamma=1e3, f=1.0):
        return cls("hb", float(p), float(g), float(gamma), float(f))

    @classmethod
    def bingham(cls, g, gamma=1e3, f=1.0):
        return cls("bingham", 2.0, float(g), float(gamma), float(f))

    @classmethod
    def casson(cls, g, gamma=1e3, f=1.0):
        return cls("casson", 2.0, float(g), float(gamma), float(f))


@dataclass(frozen=True)
class ElementGeometry:
    """Per-triangle areas and the three constant shape-function gradients."""

    tri: np.ndarray    # (t, 3) int32, C-contiguous
    area: np.ndarray   # (t,)
    grads: np.ndarray  # (t, 3, 2) with grads[t, a] = grad of basis a on triangle t


def element_geometry(mesh: MeshLevel) -> ElementGeometry:
    geo = mesh.cache.get("geometry")
    if geo is not None:
        return geo
    tri = np.ascontiguousarray(mesh.triangles, dtype=np.int32)
    area = signed_areas(mesh.nodes, tri)
    if np.any(area <= 0.0):
        raise ValueError("mesh has nonpositive-area triangles")
    x = mesh.nodes[:, 0][tri]
    y = mesh.nodes[:, 1][tri]
    grads = np.empty((len(tri), 3, 2))
    inv2a = 1.0 / (2.0 * area)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        grads[:, a, 0] = (y[:, b] - y[:, c]) * inv2a
        grads[:, a, 1] = (x[:, c] - x[:, b]) * inv2a
    geo = ElementGeometry(tri, np.ascontiguousarray(area),
                          np.ascontiguousarray(grads))
    mesh.cache["geometry"] = geo
    return geo


def _tri_gradients(geo: ElementGeometry, u: np.ndarray):
    ut = u[geo.tri]
    gx = np.einsum("ta,ta->t", ut, geo.grads[:, :, 0])
    gy = np.einsum("ta,ta->t", ut, geo.grads[:, :, 1])
    return gx, gy


def _check_field(u, mesh, name="u"):
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"{name} has shape {u.shape}, level {mesh.level} "
                         f"has {mesh.n_nodes} nodes")
    if not np.all(np.isfinite(u)):
        raise NumericError(f"{name} contains non-finite values")
    return u


def huber_value(z, g: float, gamma: float):
    """C1 regularization of g*|z|: quadratic below the threshold g/gamma.

    Accepts a single 2-vector or an array of them (last axis of length 2).
    """
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    if g < 0.0:
        raise ValueError("g must be nonnegative")
    z = np.asarray(z, dtype=float)
    nz = np.linalg.norm(z, axis=-1)
    val = np.where(gamma * nz > g,
                   g * nz - g * g / (2.0 * gamma),
                   0.5 * gamma * nz * nz)
    return float(val) if val.ndim == 0 else val


def eval_energy(u, model: ModelSpec, mesh: MeshLevel, fhat=None) -> float:
    """Total energy, including the load term and the optional linear shift."""
    u = _check_field(u, mesh)
    geo = element_geometry(mesh)
    total = kernels.energy_sum(geo.tri, geo.grads, geo.area, u,
                               model.p, model.g, model.gamma, model.is_casson)
    total -= float(assemble_load(mesh, model.f) @ u)
    if fhat is not None:
        fhat = _check_field(fhat, mesh, "fhat")
        total -= float(fhat @ u)
    if not math.isfinite(total):
        raise NumericError("energy evaluated to a non-finite value")
    return float(total)


def eval_gradient(u, model: ModelSpec, mesh: MeshLevel, fhat=None) -> np.ndarray:
    """Nodal gradient of :func:`eval_energy`; boundary entries forced to zero."""
    u = _check_field(u, mesh)
    geo = element_geometry(mesh)
    out = np.zeros(mesh.n_nodes)
    kernels.gradient_scatter(geo.tri, geo.grads, geo.area, u,
                             model.p, model.g, model.gamma, model.is_casson, out)
    out -= assemble_load(mesh, model.f)
    if fhat is not None:
        fhat = _check_field(fhat, mesh, "fhat")
        out -= fhat
    out[mesh.is_boundary] = 0.0
    if not np.all(np.isfinite(out)):
        raise NumericError("gradient evaluated to non-finite values")
    return out


def active_set(u, model: ModelSpec, mesh: MeshLevel) -> np.ndarray:
    """Per-triangle flag: True where the yield term is in its linear branch."""
    u = _check_field(u, mesh)
    geo = element_geometry(mesh)
    gx, gy = _tri_gradients(geo, u)
    return model.gamma * np.sqrt(gx * gx + gy * gy) >= model.g


def _assemble_p1(mesh: MeshLevel, c1, c2=None, du=None, free_only=True):
    """Assemble sum_T area * (c1 (ga.gb) + c2 (du.ga)(du.gb)) as sparse CSR."""
    geo = element_geometry(mesh)
    gdot = np.einsum("tad,tbd->tab", geo.grads, geo.grads)
    blocks = np.asarray(c1)[:, None, None] * gdot
    if c2 is not None:
        d = np.einsum("td,tad->ta", du, geo.grads)
        blocks = blocks + np.asarray(c2)[:, None, None] * d[:, :, None] * d[:, None, :]
    blocks = blocks * geo.area[:, None, None]
    rows = np.broadcast_to(geo.tri[:, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(geo.tri[:, None, :], blocks.shape).ravel()
    vals = blocks.ravel()
    if free_only:
        fidx = _free_index(mesh)
        r, c = fidx[rows], fidx[cols]
        keep = (r >= 0) & (c >= 0)
        nf = len(mesh.interior)
        A = sparse.coo_array((vals[keep], (r[keep], c[keep])),
                             shape=(nf, nf)).tocsr()
    else:
        n = mesh.n_nodes
        A = sparse.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
    # element blocks are symmetric but duplicate summation order is not;
    # symmetrize so A == A.T holds bitwise
    return ((A + A.T) * 0.5).tocsr()


def _free_index(mesh: MeshLevel) -> np.ndarray:
    idx = mesh.cache.get("free_index")
    if idx is None:
        idx = np.full(mesh.n_nodes, -1, dtype=np.int64)
        idx[mesh.interior] = np.arange(len(mesh.interior))
        mesh.cache["free_index"] = idx
    return idx


def assemble_slant_hessian(u, model: ModelSpec, mesh: MeshLevel):
    """Semismooth second derivative on the free nodes (symmetric positive definite).

    Singular powers of |grad u| are clamped at ``HESS_CLAMP``.
    """
    u = _check_field(u, mesh)
    geo = element_geometry(mesh)
    gx, gy = _tri_gradients(geo, u)
    ng = np.sqrt(gx * gx + gy * gy)
    ngc = np.maximum(ng, HESS_CLAMP)
    p = model.p
    c1 = ngc ** (p - 2.0)
    c2 = (p - 2.0) * ngc ** (p - 4.0)
    if model.g > 0.0:
        act = model.gamma * ng >= model.g
        c1 = c1 + np.where(act, model.g / ngc, model.gamma)
        c2 = c2 - np.where(act, model.g / ngc**3, 0.0)
    if model.is_casson:
        rg = math.sqrt(model.g)
        c1 = c1 + 2.0 * rg * ngc**-0.5
        c2 = c2 - rg * ngc**-2.5
    return _assemble_p1(mesh, c1, c2, np.column_stack([gx, gy]))


def assemble_preconditioner(u, model: ModelSpec, mesh: MeshLevel, eps: float):
    """Weighted Laplacian used for descent directions (SPD on the free nodes).

    The weight per triangle is the iterate's total diffusivity, i.e. the sum
    of the gradient weights with the power-law factor regularized by eps:
    (eps + e)^(p-2) for 1 < p < 2 (one for p >= 2), the Casson factor
    sqrt(g) * (eps + e)^(-1/2), and the yield factor g*gamma / max(g, gamma*e),
    where e = |grad u|.  The yield factor equals gamma on inactive triangles,
    which is what keeps descent directions well scaled inside the plug; the
    plain power-law weight alone stalls there by a factor of order gamma.
    """
    if (model.p < 2.0 or model.is_casson) and not eps > 0.0:
        raise ValueError(f"preconditioner needs eps > 0, got {eps}")
    if precond_is_static(model):
        return assemble_stiffness(mesh)
    u = _check_field(u, mesh)
    geo = element_geometry(mesh)
    gx, gy = _tri_gradients(geo, u)
    ng = np.sqrt(gx * gx + gy * gy)
    if model.p < 2.0:
        w = (eps + ng) ** (model.p - 2.0)
    else:
        w = np.ones_like(ng)
    if model.is_casson:
        w = w + math.sqrt(model.g) * (eps + ng) ** -0.5
    if model.g > 0.0:
        w = w + model.g * model.gamma / np.maximum(model.g, model.gamma * ng)
    return _assemble_p1(mesh, w)


def precond_is_static(model: ModelSpec) -> bool:
    """True when the descent preconditioner does not depend on the iterate."""
    return model.g == 0.0 and model.p >= 2.0


def assemble_stiffness(mesh: MeshLevel):
    """Laplacian stiffness matrix on the free nodes."""
    K = mesh.cache.get("stiffness_free")
    if K is None:
        K = _assemble_p1(mesh, np.ones(mesh.n_triangles))
        mesh.cache["stiffness_free"] = K
    return K


def assemble_mass(mesh: MeshLevel):
    """Exact P1 mass matrix over all nodes (defines the discrete L2 norm)."""
    M = mesh.cache.get("mass_full")
    if M is not None:
        return M
    geo = element_geometry(mesh)
    block = (np.ones((3, 3)) + np.eye(3)) / 12.0
    blocks = geo.area[:, None, None] * block
    rows = np.broadcast_to(geo.tri[:, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(geo.tri[:, None, :], blocks.shape).ravel()
    n = mesh.n_nodes
    M = sparse.coo_array((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    mesh.cache["mass_full"] = M
    return M


def assemble_load(mesh: MeshLevel, f: float) -> np.ndarray:
    """Load vector for a constant right-hand side: area/3 per incident vertex."""
    if not math.isfinite(f):
        raise ValueError("load must be finite")
    key = ("load", float(f))
    b = mesh.cache.get(key)
    if b is None:
        geo = element_geometry(mesh)
        b = np.zeros(mesh.n_nodes)
        np.add.at(b, geo.tri,
                  np.broadcast_to((geo.area * (f / 3.0))[:, None], geo.tri.shape))
        mesh.cache[key] = b
    return b


class SpdFactor:
    """Sparse LU factorization with a residual check on every solve."""

    def __init__(self, A):
        self.A = A.tocsc()
        try:
            self.lu = splu(self.A)
        except RuntimeError as exc:
            raise NumericError(f"SPD factorization broke down: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        x = self.lu.solve(b)
        res = np.linalg.norm(self.A @ x - b) / bnorm
        if not np.isfinite(res) or res > 1e-10:
            raise NumericError(f"SPD solve failed: relative residual {res:.3e}")
        return x


def solve_spd(A, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for a symmetric positive definite sparse A."""
    return SpdFactor(A).solve(b)


def stiffness_factor(mesh: MeshLevel) -> SpdFactor:
    fac = mesh.cache.get("stiffness_factor")
    if fac is None:
        fac = SpdFactor(assemble_stiffness(mesh))
        mesh.cache["stiffness_factor"] = fac
    return fac


def poisson_solve(mesh: MeshLevel, f: float) -> np.ndarray:
    """FE solution of the homogeneous-Dirichlet Poisson problem with constant load."""
    b = assemble_load(mesh, f)[mesh.interior]
    u = np.zeros(mesh.n_nodes)
    u[mesh.interior] = stiffness_factor(mesh).solve(b)
    return u


def write_field(mesh: MeshLevel, u, path) -> None:
    """Plain-text dump, one `x y u` line per node."""
    u = np.asarray(u, dtype=float)
    with open(path, "w") as fh:
        for (x, y), v in zip(mesh.nodes, u):
            fh.write(f"{x:.17g} {y:.17g} {v:.17g}\n")


def write_matrix(A, path) -> None:
    """Coordinate-format dump `row col value` (testing helper)."""
    coo = sparse.coo_array(A)
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
