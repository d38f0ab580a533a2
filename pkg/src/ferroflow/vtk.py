"""Legacy ASCII VTK output of a simulation state on the tetrahedral mesh."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .spaces import evaluate

VTK_TETRA = 10


def _fmt(a: np.ndarray) -> str:
    # repr-exact and locale independent
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a))


def cell_fields(state) -> dict[str, np.ndarray]:
    """Per-cell values written as CELL_DATA: m, H (cell averages), p~ (vertex mean), phi."""
    mesh = state.m.space.mesh
    centroid = np.full((1, 4), 0.25)
    # RT0 fields are affine per cell, so the centroid value is the cell average
    m = evaluate(state.m, centroid).value[:, 0]
    H = evaluate(state.H, centroid).value[:, 0]
    p = state.p.values[mesh.cells].mean(axis=1)
    return {"m": m, "H": H, "p_tilde": p, "phi": state.phi.values.copy()}


def nodal_velocity(state) -> np.ndarray:
    """Velocity at the mesh vertices (bubbles vanish there)."""
    space = state.u.space
    V = space.mesh.num_vertices
    ns = space.scalar_size
    return np.column_stack([state.u.values[c * ns: c * ns + V] for c in range(3)])


def write_vtk(path: str | Path, state, title: str = "ferroflow state") -> Path:
    mesh = state.u.space.mesh
    path = Path(path)
    V, C = mesh.num_vertices, mesh.num_cells
    cells = np.column_stack([np.full(C, 4), mesh.cells])
    cf = cell_fields(state)
    parts = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {V} double",
        _fmt(mesh.vertices),
        f"CELLS {C} {5 * C}",
        "\n".join(" ".join(str(int(v)) for v in row) for row in cells),
        f"CELL_TYPES {C}",
        "\n".join([str(VTK_TETRA)] * C),
        f"POINT_DATA {V}",
        "VECTORS u double",
        _fmt(nodal_velocity(state)),
        f"CELL_DATA {C}",
        "VECTORS m double",
        _fmt(cf["m"]),
        "VECTORS H double",
        _fmt(cf["H"]),
        "SCALARS p_tilde double 1",
        "LOOKUP_TABLE default",
        _fmt(cf["p_tilde"][:, None]),
        "SCALARS phi double 1",
        "LOOKUP_TABLE default",
        _fmt(cf["phi"][:, None]),
    ]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
    return path


def read_vtk(path: str | Path) -> dict[str, np.ndarray]:
    """Minimal reader for files produced by :func:`write_vtk`."""
    tokens = Path(path).read_text(encoding="ascii").split("\n")
    out: dict[str, np.ndarray] = {}
    i = 0
    while i < len(tokens):
        words = tokens[i].split()
        if not words:
            i += 1
            continue
        key = words[0]
        if key == "POINTS":
            n = int(words[1])
            out["points"] = np.loadtxt(tokens[i + 1: i + 1 + n], ndmin=2)
            i += n
        elif key == "CELLS":
            n = int(words[1])
            out["cells"] = np.loadtxt(tokens[i + 1: i + 1 + n], dtype=int, ndmin=2)[:, 1:]
            i += n
        elif key == "CELL_TYPES":
            n = int(words[1])
            out["cell_types"] = np.array([int(t) for t in tokens[i + 1: i + 1 + n]])
            i += n
        elif key in ("POINT_DATA", "CELL_DATA"):
            size = int(words[1])
        elif key == "VECTORS":
            out[words[1]] = np.loadtxt(tokens[i + 1: i + 1 + size], ndmin=2)
            i += size
        elif key == "SCALARS":
            out[words[1]] = np.loadtxt(tokens[i + 2: i + 2 + size], ndmin=1)
            i += size + 1
        i += 1
    return out
