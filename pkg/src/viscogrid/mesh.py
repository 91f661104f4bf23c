"""Nested unit-disk triangulations and the grid transfer operators.

The hierarchy starts from a 5-node coarse disk (center plus four boundary
points) and grows by regular refinement: each triangle splits into four,
every edge contributes one midpoint node, and midpoints of boundary edges
are pushed out to the unit circle.  Node numbering is stable across levels:
the first ``n_coarse`` nodes of a level are the parent level's nodes, the
midpoints follow in lexicographic order of their (sorted) parent edge, which
is all the transfer operators need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

__all__ = [
    "MeshLevel",
    "MeshHierarchy",
    "build_unit_disk_coarse",
    "refine",
    "prolongate",
    "restrict",
    "prolongation_matrix",
    "signed_areas",
    "total_area",
    "write_mesh",
]


@dataclass
class MeshLevel:
    """One triangulation in the nested hierarchy.

    Immutable after construction; ``cache`` only stores derived objects
    (element geometry, assembled matrices) keyed by the consumers.
    """

    level: int
    nodes: np.ndarray        # (n, 2) float64 coordinates
    triangles: np.ndarray    # (t, 3) int32, counterclockwise
    is_boundary: np.ndarray  # (n,) bool, True iff the node lies on the unit circle
    n_coarse: int            # nodes inherited from the parent level (0 on level 0)
    parents: np.ndarray      # (n - n_coarse, 2) int32, parent edge of each midpoint
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def interior(self) -> np.ndarray:
        """Indices of the non-boundary (free) nodes, increasing order."""
        idx = self.cache.get("interior")
        if idx is None:
            idx = np.flatnonzero(~self.is_boundary)
            self.cache["interior"] = idx
        return idx


@dataclass
class MeshHierarchy:
    """Ordered sequence of nested levels, coarsest first."""

    levels: list

    @classmethod
    def unit_disk(cls, n_levels: int) -> "MeshHierarchy":
        if n_levels < 1:
            raise ValueError("hierarchy needs at least one level")
        levels = [build_unit_disk_coarse()]
        for _ in range(n_levels - 1):
            levels.append(refine(levels[-1]))
        return cls(levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def total_area(mesh: MeshLevel) -> float:
    return float(signed_areas(mesh.nodes, mesh.triangles).sum())


def build_unit_disk_coarse() -> MeshLevel:
    """Coarsest disk: center node plus boundary nodes at angles 0, 90, 180, 270."""
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]], dtype=np.int32)
    is_boundary = np.array([False, True, True, True, True])
    return MeshLevel(0, nodes, triangles, is_boundary, 0,
                     np.empty((0, 2), dtype=np.int32))


def refine(coarse: MeshLevel) -> MeshLevel:
    """Regular refinement: 4 children per triangle, one new node per edge.

    Midpoints of boundary edges (edges incident to exactly one triangle) are
    normalized onto the unit circle, i.e. moved to the arc midpoint of their
    parents; interior midpoints stay at the chord midpoint.
    """
    nodes, tri = coarse.nodes, coarse.triangles
    areas = signed_areas(nodes, tri)
    if np.any(areas <= 0.0):
        bad = int(np.count_nonzero(areas <= 0.0))
        raise ValueError(f"refinement refused: {bad} triangle(s) with nonpositive area")

    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    edges.sort(axis=1)
    # np.unique sorts lexicographically, which fixes the midpoint numbering
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    n0 = len(nodes)

    on_circle = counts == 1
    mid = 0.5 * (nodes[uniq[:, 0]] + nodes[uniq[:, 1]])
    radius = np.linalg.norm(mid[on_circle], axis=1)
    if np.any(radius == 0.0):
        raise ValueError("degenerate boundary edge (antipodal endpoints)")
    mid[on_circle] /= radius[:, None]

    new_nodes = np.vstack([nodes, mid])
    new_boundary = np.concatenate([coarse.is_boundary, on_circle])

    key = uniq[:, 0].astype(np.int64) * n0 + uniq[:, 1]

    def midpoint_of(pa, pb):
        lo = np.minimum(pa, pb).astype(np.int64)
        hi = np.maximum(pa, pb).astype(np.int64)
        return (n0 + np.searchsorted(key, lo * n0 + hi)).astype(np.int32)

    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, bc, ca = midpoint_of(a, b), midpoint_of(b, c), midpoint_of(c, a)
    new_tri = np.empty((4 * len(tri), 3), dtype=np.int32)
    new_tri[0::4] = np.column_stack([a, ab, ca])
    new_tri[1::4] = np.column_stack([b, bc, ab])
    new_tri[2::4] = np.column_stack([c, ca, bc])
    new_tri[3::4] = np.column_stack([ab, bc, ca])

    return MeshLevel(coarse.level + 1, new_nodes, new_tri, new_boundary,
                     n0, uniq.astype(np.int32))


def prolongate(values: np.ndarray, fine: MeshLevel) -> np.ndarray:
    """Coarse-to-fine transfer: copy carryover nodes, average parents at midpoints."""
    values = np.asarray(values, dtype=float)
    if values.shape != (fine.n_coarse,):
        raise ValueError(
            f"prolongate: field has {values.shape} values, parent level of "
            f"level {fine.level} has {fine.n_coarse} nodes")
    out = np.empty(fine.n_nodes)
    out[:fine.n_coarse] = values
    out[fine.n_coarse:] = 0.5 * (values[fine.parents[:, 0]] + values[fine.parents[:, 1]])
    return out


def restrict(values: np.ndarray, fine: MeshLevel) -> np.ndarray:
    """Fine-to-coarse transfer; exact transpose of :func:`prolongate`.

    Copies the carryover node values, then each midpoint contributes half of
    its value to each of its two parents.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (fine.n_nodes,):
        raise ValueError(
            f"restrict: field has {values.shape} values, level {fine.level} "
            f"has {fine.n_nodes} nodes")
    out = values[:fine.n_coarse].copy()
    half = 0.5 * values[fine.n_coarse:]
    np.add.at(out, fine.parents[:, 0], half)
    np.add.at(out, fine.parents[:, 1], half)
    return out


def prolongation_matrix(fine: MeshLevel) -> sparse.csr_array:
    """Explicit sparse prolongation operator (used to test the transpose law)."""
    nc, nf = fine.n_coarse, fine.n_nodes
    rows = np.concatenate([np.arange(nc), np.arange(nc, nf), np.arange(nc, nf)])
    cols = np.concatenate([np.arange(nc), fine.parents[:, 0], fine.parents[:, 1]])
    vals = np.concatenate([np.ones(nc), np.full(2 * (nf - nc), 0.5)])
    return sparse.csr_array((vals, (rows, cols)), shape=(nf, nc))


def write_mesh(mesh: MeshLevel, path) -> None:
    """Plain-text export: a count header, `x y is_boundary` lines, `i j k` lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_nodes} {mesh.n_triangles}\n")
        for (x, y), b in zip(mesh.nodes, mesh.is_boundary):
            fh.write(f"{x:.17g} {y:.17g} {int(b)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
