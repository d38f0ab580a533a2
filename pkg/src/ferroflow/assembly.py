"""Assembly of the bilinear, trilinear and linearized quadrilinear forms.

Matrices are ``scipy.sparse.csr_matrix`` with rows indexed by the test space
and columns by the trial space.  Mini-element matrices cover all velocity
dofs; Dirichlet rows/columns are split off by the solver.

Quadrature degrees: every constant-coefficient form is integrated exactly;
forms with a frozen mini-element factor use the degree-6 rule, which is exact
for all of them except the rotational convection load.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp

from .spaces import (
    DofMap,
    FieldCoefficients,
    SpaceKind,
    barycentric_gradients,
    curl_from_gradient,
    evaluate,
    physical_points,
    tabulate_edge0,
    tabulate_face0,
    tabulate_scalar_mini,
)
from .quadrature import tet_rule

CROSS_DEGREE = 6
LOAD_DEGREE = 6
CHUNK = 4096



def _einsum(*operands):
    # contraction order matters for the 4-operand quadrature sums
    return np.einsum(*operands, optimize=True)


def _pair(w: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``sum_{q,d} w[c,q] a[c,q,i,d] b[c,q,j,d]`` as a batched matrix product."""
    C, Q, I, D = a.shape
    J = b.shape[2]
    aw = (a * w[:, :, None, None]).transpose(0, 2, 1, 3).reshape(C, I, Q * D)
    bt = b.transpose(0, 1, 3, 2).reshape(C, Q * D, J)
    return aw @ bt


def _weights(wq: np.ndarray, mesh, cells) -> np.ndarray:
    return wq[None, :] * mesh.volumes[cells, None]

def _chunks(n: int, size: int = CHUNK):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def _require(dm: DofMap, *kinds: SpaceKind) -> None:
    if dm.kind not in kinds:
        names = ", ".join(k.value for k in kinds)
        raise ValueError(f"expected a {names} space, got {dm.kind.value}")


def _same_mesh(*spaces: DofMap) -> None:
    mesh = spaces[0].mesh
    if any(s.mesh is not mesh for s in spaces[1:]):
        raise ValueError("spaces are defined on different meshes")


class _Triplets:
    """Accumulates element matrices; duplicates are summed at compression."""

    def __init__(self, test: DofMap, trial: DofMap | None, shape):
        self.test, self.trial, self.shape = test, trial, shape
        self.rows, self.cols, self.vals = [], [], []

    def add(self, cells: slice, local: np.ndarray, test_dofs=None, trial_dofs=None):
        r = self.test.cell_dofs[cells] if test_dofs is None else test_dofs
        c = self.trial.cell_dofs[cells] if trial_dofs is None else trial_dofs
        R = np.broadcast_to(r[:, :, None], local.shape)
        Cc = np.broadcast_to(c[:, None, :], local.shape)
        keep = (R >= 0) & (Cc >= 0)
        self.rows.append(R[keep])
        self.cols.append(Cc[keep])
        self.vals.append(local[keep])

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(self.shape)
        A = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=self.shape,
        ).tocsr()
        A.sum_duplicates()
        return A


def _scalar_mini_dofs(dm: DofMap, cells: slice) -> np.ndarray:
    return dm.cell_dofs[cells, :5]


def _kron3(A: sp.spmatrix) -> sp.csr_matrix:
    return sp.kron(sp.identity(3, format="csr"), A, format="csr")


# ---------------------------------------------------------------------------
# constant-coefficient forms


def mass(dm: DofMap) -> sp.csr_matrix:
    """L2 mass matrix of a space (mini element: all velocity dofs)."""
    mesh = dm.mesh
    kind = dm.kind
    if kind is SpaceKind.CELL0:
        return sp.diags(mesh.volumes.copy(), format="csr")
    if kind is SpaceKind.PRESSURE_P1:
        ref = (np.ones((4, 4)) + np.eye(4)) / 20.0  # integral of lam_i lam_j / |K|
        trip = _Triplets(dm, dm, (dm.n_global, dm.n_global))
        trip.add(slice(None), mesh.volumes[:, None, None] * ref[None])
        return trip.tocsr()
    if kind is SpaceKind.MINI_VELOCITY:
        rule = tet_rule(8)
        values, _ = tabulate_scalar_mini(mesh, rule.barycentric, slice(0, 1))
        ref = _einsum("q,qi,qj->ij", rule.weights * 6.0, values, values)
        ns = dm.scalar_size
        trip = _Triplets(dm, dm, (ns, ns))
        dofs = _scalar_mini_dofs(dm, slice(None))
        trip.add(slice(None), mesh.volumes[:, None, None] * ref[None], dofs, dofs)
        return _kron3(trip.tocsr())
    rule = tet_rule(2)
    lam, wq = rule.barycentric, rule.weights * 6.0
    trip = _Triplets(dm, dm, (dm.n_global, dm.n_global))
    tab = tabulate_face0 if kind is SpaceKind.FACE0 else tabulate_edge0
    for cells in _chunks(mesh.num_cells):
        vals, _ = tab(mesh, lam, cells)
        local = _pair(_weights(wq, mesh, cells), vals, vals)
        trip.add(cells, local)
    return trip.tocsr()


def stiffness_velocity(dm: DofMap) -> sp.csr_matrix:
    """Vector Laplacian form (grad u, grad v) on the mini element."""
    _require(dm, SpaceKind.MINI_VELOCITY)
    mesh = dm.mesh
    rule = tet_rule(6)
    lam, wq = rule.barycentric, rule.weights * 6.0
    ns = dm.scalar_size
    trip = _Triplets(dm, dm, (ns, ns))
    for cells in _chunks(mesh.num_cells):
        _, grads = tabulate_scalar_mini(mesh, lam, cells)
        local = _pair(_weights(wq, mesh, cells), grads, grads)
        dofs = _scalar_mini_dofs(dm, cells)
        trip.add(cells, local, dofs, dofs)
    return _kron3(trip.tocsr())


def divdiv_face(dm: DofMap) -> sp.csr_matrix:
    """(div m, div F) on RT0."""
    _require(dm, SpaceKind.FACE0)
    mesh = dm.mesh
    _, div = tabulate_face0(mesh, np.full((1, 4), 0.25))
    trip = _Triplets(dm, dm, (dm.n_global, dm.n_global))
    trip.add(slice(None), mesh.volumes[:, None, None] * div[:, :, None] * div[:, None, :])
    return trip.tocsr()


def curl_edge_to_face(edge_dm: DofMap, face_dm: DofMap) -> sp.csr_matrix:
    """(curl kappa_j, F_i): rows RT0, columns NE0."""
    _require(edge_dm, SpaceKind.EDGE0)
    _require(face_dm, SpaceKind.FACE0)
    _same_mesh(edge_dm, face_dm)
    mesh = face_dm.mesh
    # RT0 values are affine, so their cell mean is the centroid value
    centroid = np.full((1, 4), 0.25)
    trip = _Triplets(face_dm, edge_dm, (face_dm.n_global, edge_dm.n_global))
    for cells in _chunks(mesh.num_cells):
        fv, _ = tabulate_face0(mesh, centroid, cells)
        _, curl = tabulate_edge0(mesh, centroid, cells)
        local = mesh.volumes[cells, None, None] * _einsum("cid,cjd->cij", fv[:, 0], curl)
        trip.add(cells, local)
    return trip.tocsr()


def div_face_to_cell(face_dm: DofMap, cell_dm: DofMap) -> sp.csr_matrix:
    """(div F_j, r_i): rows P0, columns RT0."""
    _require(face_dm, SpaceKind.FACE0)
    _require(cell_dm, SpaceKind.CELL0)
    _same_mesh(face_dm, cell_dm)
    mesh = face_dm.mesh
    trip = _Triplets(cell_dm, face_dm, (cell_dm.n_global, face_dm.n_global))
    trip.add(slice(None), mesh.face_signs[:, None, :].astype(float))
    return trip.tocsr()


def div_velocity_to_pressure(vel_dm: DofMap, p_dm: DofMap) -> sp.csr_matrix:
    """(div v_j, q_i): rows P1 pressure, columns mini velocity."""
    _require(vel_dm, SpaceKind.MINI_VELOCITY)
    _require(p_dm, SpaceKind.PRESSURE_P1)
    _same_mesh(vel_dm, p_dm)
    mesh = vel_dm.mesh
    rule = tet_rule(4)
    lam, wq = rule.barycentric, rule.weights * 6.0
    trip = _Triplets(p_dm, vel_dm, (p_dm.n_global, vel_dm.n_global))
    for cells in _chunks(mesh.num_cells):
        _, grads = tabulate_scalar_mini(mesh, lam, cells)
        # local velocity index comp * 5 + s has divergence d(psi_s)/dx_comp
        local = _einsum("q,c,qi,cqsk->ciks", wq, mesh.volumes[cells], lam, grads)
        trip.add(cells, local.reshape(local.shape[0], 4, 15))
    return trip.tocsr()


def exterior_derivative_matrices(edge_dm: DofMap, face_dm: DofMap, cell_dm: DofMap):
    """Coefficient matrices of curl: NE0 -> RT0 and div: RT0 -> P0.

    The curl matrix is obtained by interpolating the analytic curl of each
    edge function (a cellwise constant) into RT0 through its face fluxes;
    the div matrix expresses the divergence of each face function in the
    P0 indicator basis.
    """
    _same_mesh(edge_dm, face_dm, cell_dm)
    mesh = face_dm.mesh
    _, curl = tabulate_edge0(mesh, np.full((1, 4), 0.25))  # (C, 6, 3)
    # area vectors (global orientation) of the local faces
    fv = mesh.vertices[mesh.faces[mesh.cell_to_face]]  # (C, 4, 3, 3)
    area = 0.5 * np.cross(fv[:, :, 1] - fv[:, :, 0], fv[:, :, 2] - fv[:, :, 0])
    flux = _einsum("cfd,ced->cfe", area, curl)
    # take each face's flux from its first incident cell only
    first = mesh.face_cells[mesh.cell_to_face, 0] == np.arange(mesh.num_cells)[:, None]
    face_dofs = np.where(first, face_dm.cell_dofs, -1)
    trip = _Triplets(face_dm, edge_dm, (face_dm.n_global, edge_dm.n_global))
    trip.add(slice(None), flux, test_dofs=face_dofs)
    curl_matrix = trip.tocsr()

    trip = _Triplets(cell_dm, face_dm, (cell_dm.n_global, face_dm.n_global))
    trip.add(slice(None), (mesh.face_signs / mesh.volumes[:, None])[:, None, :])
    return curl_matrix, trip.tocsr()


# ---------------------------------------------------------------------------
# forms with frozen fields


def _at(field: FieldCoefficients, lam, cells):
    return evaluate(field, lam, cells)


def bform(w: FieldCoefficients, face_dm: DofMap) -> sp.csr_matrix:
    """Matrix B with ``F^T B m = b(w; m, F) = (w.F, div m)/2 - (w.m, div F)/2``."""
    _require(w.space, SpaceKind.MINI_VELOCITY)
    _require(face_dm, SpaceKind.FACE0)
    _same_mesh(w.space, face_dm)
    mesh = face_dm.mesh
    rule = tet_rule(CROSS_DEGREE)
    lam, wq = rule.barycentric, rule.weights * 6.0
    trip = _Triplets(face_dm, face_dm, (face_dm.n_global, face_dm.n_global))
    for cells in _chunks(mesh.num_cells):
        wv = _at(w, lam, cells).value
        vals, div = tabulate_face0(mesh, lam, cells)
        wF = _einsum("q,c,cqd,cqid->ci", wq, mesh.volumes[cells], wv, vals)  # (w.F_i)
        local = 0.5 * (wF[:, :, None] * div[:, None, :] - div[:, :, None] * wF[:, None, :])
        trip.add(cells, local)
    return trip.tocsr()


def cross_face_edge(u: FieldCoefficients, face_dm: DofMap, edge_dm: DofMap) -> sp.csr_matrix:
    """T[i, j] = ((u x F_i), kappa_j): rows RT0, columns NE0."""
    _require(u.space, SpaceKind.MINI_VELOCITY)
    _same_mesh(u.space, face_dm, edge_dm)
    mesh = face_dm.mesh
    rule = tet_rule(CROSS_DEGREE)
    lam, wq = rule.barycentric, rule.weights * 6.0
    trip = _Triplets(face_dm, edge_dm, (face_dm.n_global, edge_dm.n_global))
    for cells in _chunks(mesh.num_cells):
        uv = _at(u, lam, cells).value
        fv, _ = tabulate_face0(mesh, lam, cells)
        ev, _ = tabulate_edge0(mesh, lam, cells)
        uxF = np.cross(uv[:, :, None, :], fv)
        local = _pair(_weights(wq, mesh, cells), uxF, ev)
        trip.add(cells, local)
    return trip.tocsr()


def quadrilinear_matrices(m_prev: FieldCoefficients, H: FieldCoefficients):
    """Linearized pieces of ``(m x (m x H), F)`` around ``m_prev``.

    Returns ``(A1, A2)`` with ``A1[i, j] = (m_j x (m_prev x H), F_i)`` and
    ``A2[i, j] = (m_prev x (m_j x H), F_i)``.
    """
    face_dm = m_prev.space
    _require(face_dm, SpaceKind.FACE0)
    mesh = face_dm.mesh
    rule = tet_rule(4)
    lam, wq = rule.barycentric, rule.weights * 6.0
    t1 = _Triplets(face_dm, face_dm, (face_dm.n_global, face_dm.n_global))
    t2 = _Triplets(face_dm, face_dm, (face_dm.n_global, face_dm.n_global))
    for cells in _chunks(mesh.num_cells):
        a = _at(m_prev, lam, cells).value
        h = _at(H, lam, cells).value
        fv, _ = tabulate_face0(mesh, lam, cells)
        axh = np.cross(a, h)
        w = wq[None, :] * mesh.volumes[cells, None]
        left = np.cross(fv, axh[:, :, None, :])  # m_j x (a x h)
        right = np.cross(a[:, :, None, :], np.cross(fv, h[:, :, None, :]))  # a x (m_j x h)
        t1.add(cells, _pair(w, fv, left))
        t2.add(cells, _pair(w, fv, right))
    return t1.tocsr(), t2.tocsr()


def quadrilinear_load(m_prev: FieldCoefficients, H: FieldCoefficients) -> np.ndarray:
    """Vector of ``(m_prev x (m_prev x H), F_i)``."""
    mesh = m_prev.space.mesh
    rule = tet_rule(4)
    lam = rule.barycentric

    def integrand(cells):
        a = _at(m_prev, lam, cells).value
        h = _at(H, lam, cells).value
        return np.cross(a, np.cross(a, h))

    return _face_load_from(m_prev.space, integrand, rule)


def cross_velocity_face_edge_load(u: FieldCoefficients, m: FieldCoefficients,
                                  edge_dm: DofMap) -> np.ndarray:
    """Vector of ``(u x m, zeta_i)`` on NE0."""
    mesh = edge_dm.mesh
    rule = tet_rule(CROSS_DEGREE)
    lam, wq = rule.barycentric, rule.weights * 6.0
    out = np.zeros(edge_dm.n_global)
    for cells in _chunks(mesh.num_cells):
        g = np.cross(_at(u, lam, cells).value, _at(m, lam, cells).value)
        ev, _ = tabulate_edge0(mesh, lam, cells)
        local = _einsum("q,c,cqd,cqid->ci", wq, mesh.volumes[cells], g, ev)
        _scatter_vector(out, edge_dm.cell_dofs[cells], local)
    return out


def momentum_coupling_loads(vel_dm: DofMap, m: FieldCoefficients, H: FieldCoefficients,
                            k: FieldCoefficients):
    """Vectors of ``b(v_i; H, m)`` and ``(v_i x k, H)`` on the mini element."""
    mesh = vel_dm.mesh
    rule = tet_rule(CROSS_DEGREE)
    lam = rule.barycentric

    def bterm(cells):
        me, he = _at(m, lam, cells), _at(H, lam, cells)
        # b(v; H, m) = (v.m, div H)/2 - (v.H, div m)/2
        return 0.5 * (me.value * he.derivative[..., None] - he.value * me.derivative[..., None])

    def kterm(cells):
        # (v x k).H = v.(k x H)
        return np.cross(_at(k, lam, cells).value, _at(H, lam, cells).value)

    return _velocity_load_from(vel_dm, bterm, rule), _velocity_load_from(vel_dm, kterm, rule)


def convection_load(u: FieldCoefficients, degree: int = CROSS_DEGREE) -> np.ndarray:
    """Vector of ``(u x curl u, v_i)`` for a frozen velocity."""
    rule = tet_rule(degree)
    lam = rule.barycentric

    def integrand(cells):
        ue = _at(u, lam, cells)
        return np.cross(ue.value, curl_from_gradient(ue.derivative))

    return _velocity_load_from(u.space, integrand, rule)


# ---------------------------------------------------------------------------
# loads


def _scatter_vector(out: np.ndarray, dofs: np.ndarray, local: np.ndarray) -> None:
    keep = dofs >= 0
    np.add.at(out, dofs[keep], local[keep])


def _velocity_load_from(dm: DofMap, integrand: Callable, rule) -> np.ndarray:
    mesh = dm.mesh
    lam, wq = rule.barycentric, rule.weights * 6.0
    values, _ = tabulate_scalar_mini(mesh, lam, slice(0, 1))
    out = np.zeros(dm.n_global)
    for cells in _chunks(mesh.num_cells):
        g = integrand(cells)  # (C, Q, 3)
        # (C, 3, Q) @ (Q, 5) is a plain BLAS product
        local = (g.transpose(0, 2, 1) @ (wq[:, None] * values)) * mesh.volumes[cells, None, None]
        _scatter_vector(out, dm.cell_dofs[cells], local.reshape(local.shape[0], 15))
    return out


def _face_load_from(dm: DofMap, integrand: Callable, rule) -> np.ndarray:
    mesh = dm.mesh
    lam, wq = rule.barycentric, rule.weights * 6.0
    out = np.zeros(dm.n_global)
    for cells in _chunks(mesh.num_cells):
        g = integrand(cells)
        fv, _ = tabulate_face0(mesh, lam, cells)
        gw = g * (wq[None, :, None] * mesh.volumes[cells, None, None])
        local = _einsum("cqd,cqid->ci", gw, fv)
        _scatter_vector(out, dm.cell_dofs[cells], local)
    return out


def load(dm: DofMap, f: Callable, t: float = 0.0, degree: int = LOAD_DEGREE) -> np.ndarray:
    """Load vector ``(f(., t), phi_i)`` for every basis function of ``dm``."""
    if degree < 4:
        raise ValueError("load quadrature degree must be at least 4")
    mesh = dm.mesh
    rule = tet_rule(degree)
    lam, wq = rule.barycentric, rule.weights * 6.0
    kind = dm.kind

    def fx(cells):
        x = physical_points(mesh, lam, cells)
        return np.asarray(f(x.reshape(-1, 3), t), dtype=float).reshape(x.shape[:2] + (-1,))

    if kind is SpaceKind.MINI_VELOCITY:
        return _velocity_load_from(dm, fx, rule)
    if kind is SpaceKind.FACE0:
        return _face_load_from(dm, fx, rule)
    out = np.zeros(dm.n_global)
    for cells in _chunks(mesh.num_cells):
        g = fx(cells)
        vol = mesh.volumes[cells]
        if kind is SpaceKind.EDGE0:
            ev, _ = tabulate_edge0(mesh, lam, cells)
            local = _einsum("q,c,cqd,cqid->ci", wq, vol, g, ev)
        elif kind is SpaceKind.PRESSURE_P1:
            local = _einsum("q,c,cq,qi->ci", wq, vol, g[..., 0], lam)
        else:
            local = _einsum("q,c,cq->c", wq, vol, g[..., 0])[:, None]
        _scatter_vector(out, dm.cell_dofs[cells], local)
    return out


def cell_means(mesh, f: Callable, t: float = 0.0, degree: int = LOAD_DEGREE) -> np.ndarray:
    """Cell averages of a scalar function."""
    rule = tet_rule(degree)
    x = physical_points(mesh, rule.barycentric)
    fx = np.asarray(f(x.reshape(-1, 3), t), dtype=float).reshape(x.shape[:2])
    return fx @ (rule.weights * 6.0)
