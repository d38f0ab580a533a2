"""Uniform tetrahedral meshes of the unit cube.

Every sub-cube of an ``n x n x n`` lattice is split into six tetrahedra
sharing the main diagonal (Kuhn subdivision).  Edges and faces are oriented
globally by ascending vertex index so that edge and face degrees of freedom
are single valued across cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

# local edges as (tail, head) local vertex pairs; local face i is opposite vertex i
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])

_BOUNDARY_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable tetrahedral mesh of [0, 1]^3 with oriented entities.

    Attributes:
        n: subdivision count per axis.
        vertices: (V, 3) coordinates.
        cells: (C, 4) vertex indices, positively oriented.
        edges: (E, 2) ascending vertex pairs.
        faces: (F, 3) ascending vertex triples.
        cell_to_edge, edge_signs: (C, 6) global ids of ``LOCAL_EDGES`` and the
            sign relating the local tail->head direction to the global one.
        cell_to_face, face_signs: (C, 4) global ids of ``LOCAL_FACES`` and the
            sign of the global face normal relative to the cell's outward one.
    """

    n: int
    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    faces: np.ndarray
    cell_to_edge: np.ndarray
    edge_signs: np.ndarray
    cell_to_face: np.ndarray
    face_signs: np.ndarray
    face_cells: np.ndarray
    boundary_vertices: np.ndarray
    boundary_edges: np.ndarray
    boundary_faces: np.ndarray
    # per-cell affine geometry x = x0 + J xi
    origins: np.ndarray = field(repr=False)
    jacobians: np.ndarray = field(repr=False)
    inverse_jacobians: np.ndarray = field(repr=False)
    volumes: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        """Largest cell diameter (the sub-cube diagonal)."""
        return np.sqrt(3.0) / self.n

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_faces - self.num_cells

    def _check_cell(self, cell: int) -> None:
        if not 0 <= cell < self.num_cells:
            raise IndexError(f"cell {cell} out of range [0, {self.num_cells})")

    def geometry(self, cell: int):
        """Return ``(volume, origin, jacobian, inverse-transpose jacobian)`` of a cell.

        The affine map is ``x = origin + jacobian @ xi`` on the reference
        tetrahedron with vertices 0, e1, e2, e3.
        """
        self._check_cell(cell)
        return (
            float(self.volumes[cell]),
            self.origins[cell].copy(),
            self.jacobians[cell].copy(),
            self.inverse_jacobians[cell].T.copy(),
        )

    def entity_orientation(self, cell: int, local_entity: int, kind: str = "edge") -> int:
        """Sign (+1/-1) relating a cell-local edge or face orientation to the global one."""
        self._check_cell(cell)
        if kind == "edge":
            if not 0 <= local_entity < 6:
                raise IndexError(f"local edge {local_entity} out of range [0, 6)")
            return int(self.edge_signs[cell, local_entity])
        if kind == "face":
            if not 0 <= local_entity < 4:
                raise IndexError(f"local face {local_entity} out of range [0, 4)")
            return int(self.face_signs[cell, local_entity])
        raise ValueError(f"unknown entity kind {kind!r}")

    def to_reference(self, cell: int, x: np.ndarray) -> np.ndarray:
        """Map physical points of one cell to reference coordinates."""
        x = np.atleast_2d(x)
        return (x - self.origins[cell]) @ self.inverse_jacobians[cell].T

    def locate(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Containing cell of each point; ties go to the lowest cell id.

        Raises:
            ValueError: if a point lies outside the unit cube.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(points < -tol) or np.any(points > 1.0 + tol):
            raise ValueError("point outside the domain [0, 1]^3")
        n = self.n
        idx = np.clip(np.floor(points * n).astype(int), 0, n - 1)
        out = np.empty(len(points), dtype=int)
        for p, (x, ijk) in enumerate(zip(points, idx)):
            best = None
            # a point may lie on a sub-cube boundary, so search the neighbouring sub-cubes
            for shift in np.ndindex(3, 3, 3):
                c = ijk + np.array(shift) - 1
                if np.any(c < 0) or np.any(c >= n):
                    continue
                cube = c[0] + n * (c[1] + n * c[2])
                for cell in range(6 * cube, 6 * cube + 6):
                    lam = self.barycentric(cell, x)
                    if lam.min() >= -tol and (best is None or cell < best):
                        best = cell
            out[p] = best
        return out

    def barycentric(self, cell: int, x: np.ndarray) -> np.ndarray:
        xi = self.to_reference(cell, x)[0]
        return np.concatenate([[1.0 - xi.sum()], xi])


def _kuhn_cells(n: int) -> np.ndarray:
    stride = np.array([1, n + 1, (n + 1) ** 2])
    corners = []
    for perm in permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] += 1
            path.append(step)
        corners.append([p @ stride for p in path])
    corners = np.array(corners)  # (6, 4) offsets within one sub-cube

    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    # cube ordering x fastest, matching Mesh.locate
    base = (i.ravel(order="F") * stride[0] + j.ravel(order="F") * stride[1]
            + k.ravel(order="F") * stride[2])
    return (base[:, None, None] + corners[None, :, :]).reshape(-1, 4)


def build_uniform_mesh(n: int) -> Mesh:
    """Build the Kuhn-subdivided ``n x n x n`` mesh of the unit cube."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    n = int(n)

    g = np.arange(n + 1) / n
    z, y, x = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    cells = _kuhn_cells(n)
    x0 = vertices[cells[:, 0]]
    jac = np.stack([vertices[cells[:, a]] - x0 for a in (1, 2, 3)], axis=2)
    det = np.linalg.det(jac)
    # odd permutations give negative orientation; swapping two vertices fixes it
    neg = det < 0
    cells[neg] = cells[neg][:, [0, 2, 1, 3]]
    x0 = vertices[cells[:, 0]]
    jac = np.stack([vertices[cells[:, a]] - x0 for a in (1, 2, 3)], axis=2)
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        raise RuntimeError("degenerate cell in mesh construction")
    inv_jac = np.linalg.inv(jac)

    local_e = cells[:, LOCAL_EDGES]  # (C, 6, 2)
    edge_signs = np.where(local_e[..., 0] < local_e[..., 1], 1, -1)
    edges, cell_to_edge = np.unique(
        np.sort(local_e, axis=2).reshape(-1, 2), axis=0, return_inverse=True
    )
    cell_to_edge = cell_to_edge.reshape(-1, 6)

    local_f = np.sort(cells[:, LOCAL_FACES], axis=2)  # (C, 4, 3)
    faces, cell_to_face = np.unique(local_f.reshape(-1, 3), axis=0, return_inverse=True)
    cell_to_face = cell_to_face.reshape(-1, 4)

    # global normal (b - a) x (c - a) for ascending (a, b, c), compared to outward direction
    fa, fb, fc = (vertices[local_f[..., s]] for s in range(3))
    gnormal = np.cross(fb - fa, fc - fa)
    opposite = vertices[cells]  # local face i is opposite local vertex i
    outward = (fa + fb + fc) / 3.0 - opposite
    face_signs = np.where(np.einsum("cfi,cfi->cf", gnormal, outward) > 0, 1, -1)

    num_faces = len(faces)
    face_cells = -np.ones((num_faces, 2), dtype=int)
    flat_cells = np.repeat(np.arange(len(cells)), 4)
    flat_faces = cell_to_face.ravel()
    order = np.argsort(flat_faces, kind="stable")
    counts = np.bincount(flat_faces, minlength=num_faces)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    face_cells[:, 0] = flat_cells[order[starts]]
    two = counts == 2
    face_cells[two, 1] = flat_cells[order[starts[two] + 1]]
    boundary_faces = counts == 1

    boundary_edges = np.zeros(len(edges), dtype=bool)
    boundary_vertices = np.zeros(len(vertices), dtype=bool)
    bf = faces[boundary_faces]
    boundary_vertices[bf.ravel()] = True
    edge_index = {tuple(e): i for i, e in enumerate(edges)}
    for a, b, c in bf:
        for pair in ((a, b), (a, c), (b, c)):
            boundary_edges[edge_index[pair]] = True

    for arr in (vertices, cells, edges, faces, cell_to_edge, edge_signs, cell_to_face,
                face_signs, face_cells, boundary_vertices, boundary_edges, boundary_faces,
                x0, jac, inv_jac):
        arr.setflags(write=False)
    volumes = det / 6.0
    volumes.setflags(write=False)

    return Mesh(
        n=n,
        vertices=vertices,
        cells=cells,
        edges=edges,
        faces=faces,
        cell_to_edge=cell_to_edge,
        edge_signs=edge_signs,
        cell_to_face=cell_to_face,
        face_signs=face_signs,
        face_cells=face_cells,
        boundary_vertices=boundary_vertices,
        boundary_edges=boundary_edges,
        boundary_faces=boundary_faces,
        origins=x0,
        jacobians=jac,
        inverse_jacobians=inv_jac,
        volumes=volumes,
    )


def on_cube_boundary(points: np.ndarray, tol: float = _BOUNDARY_TOL) -> np.ndarray:
    """True where a point has a coordinate equal to 0 or 1."""
    points = np.atleast_2d(points)
    return np.any((np.abs(points) <= tol) | (np.abs(points - 1.0) <= tol), axis=1)
