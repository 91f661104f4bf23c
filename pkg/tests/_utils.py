"""Shared test helpers: random admissible fields and finite-difference oracles."""

import numpy as np

from viscogrid import fem

# parameters used by the derivative-consistency checks: a moderate gamma so
# random states can stay clear of the max-kink, a positive yield stress so
# both branches are exercised
FD_G = 0.4
FD_GAMMA = 5.0

MODEL_GRID = (
    [fem.ModelSpec.herschel_bulkley(p, FD_G, FD_GAMMA) for p in (1.5, 1.75, 2.0, 3.0, 5.0)]
    + [fem.ModelSpec.bingham(FD_G, FD_GAMMA), fem.ModelSpec.casson(FD_G, FD_GAMMA)]
)


def interior_field(mesh, rng, scale=1.0):
    """Random field in the homogeneous-Dirichlet space."""
    u = np.zeros(mesh.n_nodes)
    u[mesh.interior] = scale * rng.uniform(-1.0, 1.0, len(mesh.interior))
    return u


def field_away_from_kink(mesh, model, rng, scale=1.0, kink_margin=5e-3,
                         grad_floor=0.05, tries=200):
    """Random admissible field with every triangle clear of the max-kink
    (|gamma*|grad u|| - g| >= margin) and of the degenerate origin."""
    geo = fem.element_geometry(mesh)
    for _ in range(tries):
        u = interior_field(mesh, rng, scale)
        gx, gy = fem._tri_gradients(geo, u)
        ng = np.sqrt(gx * gx + gy * gy)
        if ng.min() >= grad_floor and np.min(np.abs(model.gamma * ng - model.g)) >= kink_margin:
            return u
    raise AssertionError("could not sample a field away from the kink set")


def fd_gradient(u, model, mesh, h=1e-6):
    """Central differences of the energy at the interior nodes."""
    out = np.zeros(mesh.n_nodes)
    for i in mesh.interior:
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        out[i] = (fem.eval_energy(up, model, mesh)
                  - fem.eval_energy(um, model, mesh)) / (2.0 * h)
    return out


def fd_hessian_vec(u, v, model, mesh, h=1e-6):
    """Central differences of the gradient along v, restricted to free nodes."""
    gp = fem.eval_gradient(u + h * v, model, mesh)
    gm = fem.eval_gradient(u - h * v, model, mesh)
    return ((gp - gm) / (2.0 * h))[mesh.interior]
