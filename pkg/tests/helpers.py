"""Shared oracles for the test modules."""

import numpy as np

from ferroflow.spaces import SpaceKind, shape_derivatives, shape_values

FD_STEP = 1e-6


def _random_interior_reference_points(rng, count):
    # barycentric coordinates bounded away from the faces so x +- h stays inside
    lam = rng.dirichlet(np.ones(4), size=count)
    lam = 0.1 + 0.6 * lam
    lam /= lam.sum(axis=1, keepdims=True)
    return lam[:, 1:]


def _values_at_physical(space, cell, x):
    mesh = space.mesh
    return shape_values(space, cell, mesh.to_reference(cell, x))


def fd_derivative_error(space, rng, count=10, h=FD_STEP):
    """Max |analytic - central difference| of the natural derivative of every basis function."""
    mesh = space.mesh
    worst = 0.0
    for _ in range(count):
        cell = int(rng.integers(mesh.num_cells))
        xi = _random_interior_reference_points(rng, 1)
        x = mesh.vertices[mesh.cells[cell, 0]] + mesh.jacobians[cell] @ xi[0]
        jac = []
        for d in range(3):
            e = np.zeros(3)
            e[d] = h
            plus = _values_at_physical(space, cell, x + e)[0]
            minus = _values_at_physical(space, cell, x - e)[0]
            jac.append((plus - minus) / (2 * h))
        jac = np.stack(jac, axis=-1)  # (..., d)
        analytic = shape_derivatives(space, cell, xi)[0]
        kind = space.kind
        if kind is SpaceKind.FACE0:
            fd = np.trace(jac, axis1=-2, axis2=-1)
        elif kind is SpaceKind.EDGE0:
            fd = np.stack([jac[:, 2, 1] - jac[:, 1, 2], jac[:, 0, 2] - jac[:, 2, 0],
                           jac[:, 1, 0] - jac[:, 0, 1]], axis=-1)
        else:
            fd = jac
        worst = max(worst, np.abs(fd - analytic).max())
    return worst
