"""NumPy implementation of the per-triangle kernels.

Reference implementation and import-time fallback for the compiled module
``_kernels_cy``; both expose the same two functions with identical semantics.
"""

import numpy as np


def _tri_grad(tri, grads, u):
    ut = u[tri]
    gx = np.einsum("ta,ta->t", ut, grads[:, :, 0])
    gy = np.einsum("ta,ta->t", ut, grads[:, :, 1])
    return gx, gy


def energy_sum(tri, grads, area, u, p, g, gamma, casson):
    """Sum of area * (power-law + Casson + Huber densities) over all triangles."""
    gx, gy = _tri_grad(tri, grads, u)
    ng = np.sqrt(gx * gx + gy * gy)
    dens = ng**p / p
    if casson:
        dens += (4.0 / 3.0) * np.sqrt(g) * ng**1.5
    if g > 0.0:
        dens += np.where(gamma * ng > g,
                         g * ng - g * g / (2.0 * gamma),
                         0.5 * gamma * ng * ng)
    return float(area @ dens)


def gradient_scatter(tri, grads, area, u, p, g, gamma, casson, out):
    """Add area * c(|grad u|) * (grad u . grad phi_a) into out[tri[:, a]].

    Triangles with a vanishing gradient contribute exactly zero (the limit
    value of every term), so they are masked out before the singular powers.
    """
    gx, gy = _tri_grad(tri, grads, u)
    ng = np.sqrt(gx * gx + gy * gy)
    nz = ng > 0.0
    c = np.zeros_like(ng)
    with np.errstate(divide="ignore"):
        c[nz] = ng[nz] ** (p - 2.0)
        if casson:
            c[nz] += 2.0 * np.sqrt(g) / np.sqrt(ng[nz])
    if g > 0.0:
        c[nz] += g * gamma / np.maximum(g, gamma * ng[nz])
    w = area * c
    vals = w[:, None] * (gx[:, None] * grads[:, :, 0] + gy[:, None] * grads[:, :, 1])
    np.add.at(out, tri, vals)
