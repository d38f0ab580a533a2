"""Discrete spaces: mini-element velocity, P1 pressure, NE0, RT0 and P0.

Local basis conventions (per cell, barycentric coordinates ``lam``):

* P1: ``lam_i``; bubble: ``256 * lam_0 lam_1 lam_2 lam_3``.
* NE0 on local edge (a, b): ``lam_a grad(lam_b) - lam_b grad(lam_a)``, unit
  circulation along a -> b.
* RT0 on local face i: ``(x - x_i) / (3 |K|)``, unit outward flux through the
  face opposite vertex i.

Edge and face functions are multiplied by the orientation signs stored on the
mesh, which turns them into restrictions of single-valued global functions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import LOCAL_EDGES, Mesh
from .quadrature import QuadratureRule, interval_rule, tet_rule, triangle_rule


class SpaceKind(enum.Enum):
    MINI_VELOCITY = "mini_velocity"
    PRESSURE_P1 = "pressure_p1"
    EDGE0 = "edge0"
    FACE0 = "face0"
    CELL0 = "cell0"


_LOCAL_SIZE = {
    SpaceKind.MINI_VELOCITY: 15,
    SpaceKind.PRESSURE_P1: 4,
    SpaceKind.EDGE0: 6,
    SpaceKind.FACE0: 4,
    SpaceKind.CELL0: 1,
}


@dataclass(frozen=True, eq=False)
class DofMap:
    """Cell-to-global numbering of one discrete space.

    ``cell_dofs[c, l]`` is the global index of local function ``l`` on cell
    ``c`` or -1 when the function is excluded by a homogeneous trace condition.
    The mini element is ordered component-major: local index
    ``l = comp * 5 + s`` with ``s`` in (v0, v1, v2, v3, bubble),
    and the global index is ``comp * (V + C) + scalar`` where scalar is a
    vertex id or ``V + cell``.
    """

    kind: SpaceKind
    mesh: Mesh
    n_global: int
    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    zero_mean: bool = False
    fixed: np.ndarray | None = None  # Dirichlet-constrained global dofs (mini element)

    @property
    def entities(self) -> np.ndarray:
        """Mesh face/edge index of each global dof (RT0 and NE0)."""
        table = {SpaceKind.FACE0: self.mesh.cell_to_face,
                 SpaceKind.EDGE0: self.mesh.cell_to_edge}[self.kind]
        out = np.empty(self.n_global, dtype=int)
        keep = self.cell_dofs >= 0
        out[self.cell_dofs[keep]] = table[keep]
        return out

    @property
    def free(self) -> np.ndarray:
        if self.fixed is None:
            return np.arange(self.n_global)
        return np.flatnonzero(~self.fixed)

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def scalar_size(self) -> int:
        """Scalar P1+bubble count per component (mini element only)."""
        return self.mesh.num_vertices + self.mesh.num_cells


def build_dofmap(mesh: Mesh, kind: SpaceKind, tangential_bc: bool = True) -> DofMap:
    """DOF map of one space.

    ``tangential_bc=False`` keeps the boundary edges of NE0, giving an
    H(curl) space without trace condition.
    """
    C = mesh.num_cells
    if kind is SpaceKind.CELL0:
        return DofMap(kind, mesh, C, np.arange(C)[:, None], np.ones((C, 1)), zero_mean=True)
    if kind is SpaceKind.PRESSURE_P1:
        return DofMap(kind, mesh, mesh.num_vertices, mesh.cells.copy(), np.ones((C, 4)),
                      zero_mean=True)
    if kind is SpaceKind.FACE0:
        interior = ~mesh.boundary_faces
        numbering = -np.ones(mesh.num_faces, dtype=int)
        numbering[interior] = np.arange(interior.sum())
        return DofMap(kind, mesh, int(interior.sum()), numbering[mesh.cell_to_face],
                      mesh.face_signs.astype(float))
    if kind is SpaceKind.EDGE0:
        interior = ~mesh.boundary_edges if tangential_bc else np.ones(mesh.num_edges, bool)
        numbering = -np.ones(mesh.num_edges, dtype=int)
        numbering[interior] = np.arange(interior.sum())
        return DofMap(kind, mesh, int(interior.sum()), numbering[mesh.cell_to_edge],
                      mesh.edge_signs.astype(float))
    if kind is SpaceKind.MINI_VELOCITY:
        V = mesh.num_vertices
        ns = V + C
        scalar = np.column_stack([mesh.cells, V + np.arange(C)])
        dofs = np.concatenate([scalar + comp * ns for comp in range(3)], axis=1)
        fixed_scalar = np.zeros(ns, dtype=bool)
        fixed_scalar[:V] = mesh.boundary_vertices
        return DofMap(kind, mesh, 3 * ns, dofs, np.ones((C, 15)),
                      fixed=np.tile(fixed_scalar, 3))
    raise ValueError(f"unknown space kind {kind!r}")


@dataclass
class FieldCoefficients:
    """Coefficient vector of one discrete field."""

    space: DofMap
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n_global,):
            raise ValueError(
                f"{self.space.kind.value}: expected {self.space.n_global} coefficients, "
                f"got shape {self.values.shape}"
            )

    @classmethod
    def zeros(cls, space: DofMap) -> "FieldCoefficients":
        return cls(space, np.zeros(space.n_global))

    @property
    def kind(self) -> SpaceKind:
        return self.space.kind

    def local(self, cells: np.ndarray | slice = slice(None)) -> np.ndarray:
        """Local coefficients, shape (cells, nloc); zero for excluded functions.

        Orientation signs live in the tabulated basis, not here.
        """
        dofs = self.space.cell_dofs[cells]
        return np.where(dofs >= 0, self.values[np.maximum(dofs, 0)], 0.0)

    def copy(self) -> "FieldCoefficients":
        return FieldCoefficients(self.space, self.values.copy())

    def __add__(self, other):
        return FieldCoefficients(self.space, self.values + other.values)

    def __sub__(self, other):
        return FieldCoefficients(self.space, self.values - other.values)

    def __mul__(self, s: float):
        return FieldCoefficients(self.space, self.values * s)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# tabulation of physical basis functions at reference points


def barycentric_gradients(mesh: Mesh, cells=slice(None)) -> np.ndarray:
    """(C, 4, 3) gradients of the barycentric coordinates."""
    inv = mesh.inverse_jacobians[cells]
    return np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)


def _as_barycentric(ref_points: np.ndarray) -> np.ndarray:
    ref_points = np.atleast_2d(ref_points)
    return np.column_stack([1.0 - ref_points.sum(axis=1), ref_points])


def _bubble(lam: np.ndarray, glam: np.ndarray):
    b = 256.0 * lam.prod(axis=1)  # (Q,)
    # d(prod)/d(lam_i) = product of the other three
    partial = np.stack([np.prod(np.delete(lam, i, axis=1), axis=1) for i in range(4)], axis=1)
    grad = 256.0 * np.einsum("qi,cid->cqd", partial, glam)
    return b, grad


def tabulate_scalar_mini(mesh: Mesh, lam: np.ndarray, cells=slice(None)):
    """Scalar P1 + bubble functions: values (Q, 5), gradients (C, Q, 5, 3)."""
    glam = barycentric_gradients(mesh, cells)
    b, gb = _bubble(lam, glam)
    values = np.column_stack([lam, b])
    grads = np.concatenate(
        [np.broadcast_to(glam[:, None], (glam.shape[0], lam.shape[0], 4, 3)), gb[:, :, None]],
        axis=2,
    )
    return values, grads


def physical_points(mesh: Mesh, lam: np.ndarray, cells=slice(None)) -> np.ndarray:
    """(C, Q, 3) physical coordinates of reference points."""
    xv = mesh.vertices[mesh.cells[cells]]  # (C, 4, 3)
    return np.einsum("qi,cid->cqd", lam, xv)


def tabulate_face0(mesh: Mesh, lam: np.ndarray, cells=slice(None)):
    """Signed RT0 values (C, Q, 4, 3) and divergences (C, 4)."""
    xv = mesh.vertices[mesh.cells[cells]]
    x = np.einsum("qi,cid->cqd", lam, xv)
    vol = mesh.volumes[cells]
    signs = mesh.face_signs[cells]
    vals = (x[:, :, None, :] - xv[:, None, :, :]) / (3.0 * vol[:, None, None, None])
    vals = vals * signs[:, None, :, None]
    div = signs / vol[:, None]
    return vals, div


def tabulate_edge0(mesh: Mesh, lam: np.ndarray, cells=slice(None)):
    """Signed NE0 values (C, Q, 6, 3) and curls (C, 6, 3)."""
    glam = barycentric_gradients(mesh, cells)
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    signs = mesh.edge_signs[cells]
    vals = (lam[None, :, a, None] * glam[:, None, b, :]
            - lam[None, :, b, None] * glam[:, None, a, :])
    vals = vals * signs[:, None, :, None]
    curl = 2.0 * np.cross(glam[:, a, :], glam[:, b, :]) * signs[:, :, None]
    return vals, curl


def shape_values(space: DofMap, cell: int, ref_points: np.ndarray) -> np.ndarray:
    """Signed local basis values on one cell at reference points.

    Returns (P, nloc) for scalar spaces and (P, nloc, 3) for vector spaces.
    """
    lam = _check_reference(ref_points)
    mesh, cells = space.mesh, slice(cell, cell + 1)
    kind = space.kind
    if kind is SpaceKind.CELL0:
        return np.ones((len(lam), 1))
    if kind is SpaceKind.PRESSURE_P1:
        return lam.copy()
    if kind is SpaceKind.FACE0:
        return tabulate_face0(mesh, lam, cells)[0][0]
    if kind is SpaceKind.EDGE0:
        return tabulate_edge0(mesh, lam, cells)[0][0]
    values, _ = tabulate_scalar_mini(mesh, lam, cells)
    out = np.zeros((len(lam), 15, 3))
    for comp in range(3):
        out[:, comp * 5:(comp + 1) * 5, comp] = values
    return out


def shape_derivatives(space: DofMap, cell: int, ref_points: np.ndarray) -> np.ndarray:
    """Signed local derivatives on one cell at reference points.

    P1 / mini element: gradients, (P, nloc, 3) resp. (P, 15, 3, 3) with
    ``[..., comp, d] = d(v_comp)/dx_d``; NE0: curls (P, 6, 3); RT0: divergences
    (P, 4); P0: zeros (P, 1, 3).
    """
    lam = _check_reference(ref_points)
    mesh, cells = space.mesh, slice(cell, cell + 1)
    kind = space.kind
    P = len(lam)
    if kind is SpaceKind.CELL0:
        return np.zeros((P, 1, 3))
    if kind is SpaceKind.PRESSURE_P1:
        return np.broadcast_to(barycentric_gradients(mesh, cells)[0], (P, 4, 3)).copy()
    if kind is SpaceKind.FACE0:
        return np.broadcast_to(tabulate_face0(mesh, lam, cells)[1][0], (P, 4)).copy()
    if kind is SpaceKind.EDGE0:
        return np.broadcast_to(tabulate_edge0(mesh, lam, cells)[1][0], (P, 6, 3)).copy()
    _, grads = tabulate_scalar_mini(mesh, lam, cells)
    out = np.zeros((P, 15, 3, 3))
    for comp in range(3):
        out[:, comp * 5:(comp + 1) * 5, comp, :] = grads[0]
    return out


def _check_reference(ref_points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    lam = _as_barycentric(np.asarray(ref_points, dtype=float))
    if np.any(lam < -tol):
        raise ValueError("reference point outside the reference tetrahedron")
    return lam


# ---------------------------------------------------------------------------
# field evaluation at quadrature points


@dataclass
class FieldAtPoints:
    """Values and first derivatives of a field at per-cell points."""

    value: np.ndarray  # (C, Q) or (C, Q, 3)
    derivative: np.ndarray | None = None  # grad (C,Q,3,3) / curl (C,Q,3) / div (C,Q)


def evaluate(field: FieldCoefficients, lam: np.ndarray, cells=slice(None)) -> FieldAtPoints:
    """Evaluate a discrete field and its natural derivative at reference points.

    The derivative is the full gradient ``[comp, d]`` for the mini element
    and the P1 gradient, the curl for NE0 and the divergence for RT0.
    """
    space = field.space
    mesh = space.mesh
    coef = field.local(cells)
    kind = space.kind
    Q = len(lam)
    if kind is SpaceKind.CELL0:
        v = np.broadcast_to(coef[:, :1], (coef.shape[0], Q)).copy()
        return FieldAtPoints(v, np.zeros(v.shape + (3,)))
    if kind is SpaceKind.PRESSURE_P1:
        v = coef @ lam.T
        g = np.einsum("ci,cid->cd", coef, barycentric_gradients(mesh, cells))
        return FieldAtPoints(v, np.broadcast_to(g[:, None], v.shape + (3,)).copy())
    if kind is SpaceKind.FACE0:
        # sum_i c_i s_i (x - x_i) / (3|K|) without tabulating each basis function
        cs = coef * mesh.face_signs[cells] / (3.0 * mesh.volumes[cells, None])
        xv = mesh.vertices[mesh.cells[cells]]
        x = np.einsum("qi,cid->cqd", lam, xv)
        v = x * cs.sum(axis=1)[:, None, None] - np.einsum("ci,cid->cd", cs, xv)[:, None, :]
        d = np.broadcast_to(3.0 * cs.sum(axis=1)[:, None], v.shape[:2]).copy()
        return FieldAtPoints(v, d)
    if kind is SpaceKind.EDGE0:
        vals, curl = tabulate_edge0(mesh, lam, cells)
        v = np.einsum("ci,cqid->cqd", coef, vals)
        d = np.broadcast_to(np.einsum("ci,cid->cd", coef, curl)[:, None], v.shape).copy()
        return FieldAtPoints(v, d)
    c3 = coef.reshape(coef.shape[0], 3, 5)
    glam = barycentric_gradients(mesh, cells)
    b, gb = _bubble(lam, glam)
    v = np.einsum("cks,qs->cqk", c3, np.column_stack([lam, b]))
    # P1 part of the gradient is constant per cell, the bubble part varies
    g = (np.einsum("cks,csd->ckd", c3[:, :, :4], glam)[:, None]
         + c3[:, None, :, 4, None] * gb[:, :, None, :])
    return FieldAtPoints(v, g)


def curl_from_gradient(grad: np.ndarray) -> np.ndarray:
    """Curl from a (..., 3, 3) gradient with ``[comp, d] = d v_comp / dx_d``."""
    return np.stack(
        [grad[..., 2, 1] - grad[..., 1, 2],
         grad[..., 0, 2] - grad[..., 2, 0],
         grad[..., 1, 0] - grad[..., 0, 1]],
        axis=-1,
    )


def eval_field(field: FieldCoefficients, points: np.ndarray) -> np.ndarray:
    """Evaluate a discrete field at physical points of [0, 1]^3."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = field.space.mesh
    cells = mesh.locate(points)
    out = []
    for x, c in zip(points, cells):
        lam = _as_barycentric(mesh.to_reference(c, x))
        out.append(evaluate(field, lam, slice(c, c + 1)).value[0, 0])
    return np.array(out)


# ---------------------------------------------------------------------------
# interpolation

AnalyticField = Callable[[np.ndarray, float], np.ndarray]


def interpolate(space: DofMap, f: AnalyticField, t: float = 0.0, degree: int = 6) -> FieldCoefficients:
    """Canonical interpolant of ``f(x, t)``.

    Mini element: vertex values (bubble coefficients zero, Dirichlet dofs kept
    at the trace of ``f``); P1/P0: nodal values resp. cell means shifted to
    zero mean; RT0: face fluxes; NE0: edge circulations.  ``degree`` sets the
    exactness of the face/edge/cell moment quadrature.
    """
    mesh = space.mesh
    kind = space.kind
    if kind is SpaceKind.MINI_VELOCITY:
        vals = np.asarray(f(mesh.vertices, t)).reshape(-1, 3)
        ns = space.scalar_size
        out = np.zeros(space.n_global)
        for comp in range(3):
            out[comp * ns: comp * ns + mesh.num_vertices] = vals[:, comp]
        return FieldCoefficients(space, out)
    if kind is SpaceKind.PRESSURE_P1:
        vals = np.asarray(f(mesh.vertices, t), dtype=float).reshape(-1)
        field = FieldCoefficients(space, vals)
        return remove_mean(field)
    if kind is SpaceKind.CELL0:
        rule = tet_rule(degree)
        x = physical_points(mesh, rule.barycentric)
        fx = np.asarray(f(x.reshape(-1, 3), t), dtype=float).reshape(x.shape[:2])
        means = fx @ rule.weights * 6.0
        return remove_mean(FieldCoefficients(space, means))
    if kind is SpaceKind.FACE0:
        rule = triangle_rule(degree)
        faces = mesh.faces[space.entities]
        a, b, c = (mesh.vertices[faces[:, i]] for i in range(3))
        normal = np.cross(b - a, c - a)  # |normal| = 2 * area, reference area 1/2
        s, r = rule.points[:, 0], rule.points[:, 1]
        x = a[:, None] + s[None, :, None] * (b - a)[:, None] + r[None, :, None] * (c - a)[:, None]
        fx = np.asarray(f(x.reshape(-1, 3), t)).reshape(x.shape)
        return FieldCoefficients(space, np.einsum("fqd,fd,q->f", fx, normal, rule.weights))
    if kind is SpaceKind.EDGE0:
        rule = interval_rule(degree)
        edges = mesh.edges[space.entities]
        a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
        s = rule.points[:, 0]
        x = a[:, None] + s[None, :, None] * (b - a)[:, None]
        fx = np.asarray(f(x.reshape(-1, 3), t)).reshape(x.shape)
        return FieldCoefficients(space, np.einsum("eqd,ed,q->e", fx, b - a, rule.weights))
    raise ValueError(f"unknown space kind {kind!r}")


def integration_weights(space: DofMap) -> np.ndarray:
    """Integral of each global basis function (scalar spaces only)."""
    mesh = space.mesh
    if space.kind is SpaceKind.CELL0:
        return mesh.volumes.copy()
    if space.kind is SpaceKind.PRESSURE_P1:
        return np.bincount(mesh.cells.ravel(), weights=np.repeat(mesh.volumes / 4.0, 4),
                           minlength=mesh.num_vertices)
    raise ValueError("integration weights are defined for scalar spaces only")


def field_mean(field: FieldCoefficients) -> float:
    return float(integration_weights(field.space) @ field.values)


def remove_mean(field: FieldCoefficients) -> FieldCoefficients:
    """Shift a P1 or P0 field to zero mean over the unit cube."""
    # both spaces reproduce constants, so subtracting the mean from every coefficient shifts by a constant
    return FieldCoefficients(field.space, field.values - field_mean(field))
