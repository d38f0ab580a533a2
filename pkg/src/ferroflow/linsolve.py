"""Sparse direct solves of block systems with zero-mean constraints.

A zero-mean constraint on a block appends one Lagrange multiplier whose
row/column holds the integral of each basis function of that block.
"""

from __future__ import annotations

import glob
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10  # contract: failure above this
REFINE_TOL = 1e-15  # refinement keeps going down to this while it still helps
MAX_REFINEMENT = 5
# diagonal shift on zero-diagonal rows before a PARDISO factorization, relative to max|A|
REGULARIZATION = 1e-10


def _locate_mkl() -> None:
    # pip wheels of mkl land in <prefix>/lib, which ctypes does not search
    if os.environ.get("PYPARDISO_MKL_RT"):
        return
    for root in {sys.prefix, sys.base_prefix, "/usr/local", os.path.expanduser("~/.local")}:
        hits = sorted(glob.glob(os.path.join(root, "lib", "libmkl_rt.so*")), key=len)
        if hits:
            os.environ["PYPARDISO_MKL_RT"] = hits[0]
            return


def _load_pardiso():
    _locate_mkl()
    try:
        from pypardiso import PyPardisoSolver
    except (ImportError, OSError):
        return None
    return PyPardisoSolver


_PARDISO = _load_pardiso()


def available_backends() -> list[str]:
    return (["pardiso"] if _PARDISO is not None else []) + ["superlu"]


DEFAULT_BACKEND = available_backends()[0]


class SolverError(RuntimeError):
    """Raised when a stage's linear system cannot be solved."""


@dataclass
class BlockSystem:
    blocks: list[tuple[str, int]]
    matrix: sp.spmatrix
    rhs: np.ndarray
    zero_mean: dict[str, np.ndarray] = field(default_factory=dict)
    stage: str = "linear solve"

    def __post_init__(self):
        n = sum(size for _, size in self.blocks)
        if self.matrix.shape != (n, n):
            raise ValueError(
                f"{self.stage}: matrix shape {self.matrix.shape} does not match block sizes ({n})"
            )
        if self.rhs.shape != (n,):
            raise ValueError(f"{self.stage}: rhs has shape {self.rhs.shape}, expected ({n},)")
        for name, w in self.zero_mean.items():
            if len(w) != dict(self.blocks)[name]:
                raise ValueError(f"{self.stage}: weights for block {name!r} have wrong length")

    @property
    def offsets(self) -> dict[str, slice]:
        out, start = {}, 0
        for name, size in self.blocks:
            out[name] = slice(start, start + size)
            start += size
        return out

    @property
    def size(self) -> int:
        return sum(size for _, size in self.blocks)

    def split(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {name: x[s] for name, s in self.offsets.items()}


def _constraint_columns(system: BlockSystem) -> sp.csc_matrix:
    offsets = system.offsets
    cols = []
    for name, w in system.zero_mean.items():
        col = np.zeros(system.size)
        col[offsets[name]] = w
        cols.append(col)
    if not cols:
        return sp.csc_matrix((system.size, 0))
    return sp.csc_matrix(np.column_stack(cols))


def augment(system: BlockSystem) -> sp.csc_matrix:
    W = _constraint_columns(system)
    k = W.shape[1]
    return sp.bmat([[system.matrix, W], [W.T, sp.csc_matrix((k, k))]], format="csc")


class _PardisoLU:
    """PARDISO factorization with the ``splu`` solve interface.

    PARDISO's static pivoting breaks down on the zero (2,2) blocks of saddle
    systems, so rows with a zero diagonal get a tiny negative shift.  The
    factorization is then of a nearby matrix and the caller's iterative
    refinement against the true matrix removes the difference.
    """

    def __init__(self, A: sp.csr_matrix, norm: float):
        zero = A.diagonal() == 0
        if zero.any():
            A = (A - sp.diags(np.where(zero, REGULARIZATION * norm, 0.0))).tocsr()
            A.sort_indices()
        self.A = A
        self.solver = _PARDISO(mtype=11)
        self.solver.factorize(A)
        self._check_pivots()

    def _check_pivots(self) -> None:
        # perturbed pivots mean a numerically singular matrix; the solve would be garbage
        perturbed = int(self.solver.iparm[13])
        if perturbed:
            raise np.linalg.LinAlgError(f"{perturbed} perturbed pivot(s)")

    def same_pattern(self, A: sp.csr_matrix) -> bool:
        return (A.shape == self.A.shape and np.array_equal(A.indptr, self.A.indptr)
                and np.array_equal(A.indices, self.A.indices))

    def refactor(self, A: sp.csr_matrix) -> None:
        """Numeric refactorization reusing the ordering (same pattern, no shift needed)."""
        self.A = A
        self.solver.set_phase(22)
        self.solver._call_pardiso(A, np.zeros((A.shape[0], 1)))
        self.solver.factorized_A = A.copy()
        self._check_pivots()

    def solve(self, b):
        return self.solver.solve(self.A, b)

    def __del__(self):
        try:
            self.solver.free_memory(everything=True)
        except Exception:
            pass


class Factorization:
    """LU factorization of an augmented block matrix, reused across right-hand sides.

    ``backend`` is ``"pardiso"`` (MKL, when importable) or ``"superlu"``.
    Singularity shows up either as a factorization failure or as a residual
    that iterative refinement cannot reduce; both raise ``SolverError``.
    """

    def __init__(self, system: BlockSystem, backend: str | None = None):
        self.stage = system.stage
        self.n = system.size
        self.n_constraints = len(system.zero_mean)
        A = augment(system)
        if not np.all(np.isfinite(A.data)):
            raise SolverError(f"{self.stage}: non-finite entries in the system matrix")
        self.backend = backend or DEFAULT_BACKEND
        if self.backend not in available_backends():
            raise ValueError(f"linear solver backend {self.backend!r} is not available")
        self.norm = float(abs(A).max()) if A.nnz else 0.0
        try:
            if self.backend == "pardiso":
                self.A = A.tocsr()
                self.A.sort_indices()
                self.lu = _PardisoLU(self.A, self.norm)
            elif self.backend == "superlu":
                self.A = A
                # symmetric-pattern ordering: the saddle systems here are structurally symmetric
                self.lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01,
                                    options=dict(SymmetricMode=True))
        except Exception as exc:
            raise SolverError(f"{self.stage}: singular factorization ({exc})") from exc

    def refactor(self, system: BlockSystem) -> None:
        """Replace the matrix by one with the same block layout.

        With PARDISO and an unchanged sparsity pattern only the numeric phase
        is repeated; otherwise this is a fresh factorization.
        """
        A = augment(system).tocsr()
        A.sort_indices()
        if (self.backend == "pardiso" and np.all(A.diagonal() != 0)
                and self.lu.same_pattern(A) and np.all(np.isfinite(A.data))):
            self.stage = system.stage
            self.norm = float(abs(A).max())
            self.A = A
            try:
                self.lu.refactor(A)
            except Exception as exc:
                raise SolverError(f"{self.stage}: singular factorization ({exc})") from exc
        else:
            self.__init__(system, self.backend)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if not np.all(np.isfinite(rhs)):
            raise SolverError(f"{self.stage}: non-finite entries in the right-hand side")
        b = np.concatenate([rhs, np.zeros(self.n_constraints)])
        x = self.lu.solve(b)
        r = b - self.A @ x
        res = np.linalg.norm(r)
        for _ in range(MAX_REFINEMENT):
            scale = self.norm * np.linalg.norm(x) + np.linalg.norm(b)
            if not res > REFINE_TOL * scale:
                break
            x_new = x + self.lu.solve(r)
            r_new = b - self.A @ x_new
            res_new = np.linalg.norm(r_new)
            if not res_new < 0.5 * res:
                break
            x, r, res = x_new, r_new, res_new
        if not res <= RESIDUAL_TOL * (self.norm * np.linalg.norm(x) + np.linalg.norm(b)):
            raise SolverError(f"{self.stage}: residual {res:.3e} above tolerance after refinement")
        if not np.all(np.isfinite(x)):
            raise SolverError(f"{self.stage}: factorization produced non-finite values")
        self.multipliers = x[self.n:]
        return x[: self.n]


def solve(system: BlockSystem, backend: str | None = None) -> np.ndarray:
    """Solve a block system (multipliers dropped)."""
    return Factorization(system, backend).solve(system.rhs)


def residual_norm(system: BlockSystem, x: np.ndarray) -> float:
    return float(np.linalg.norm(system.matrix @ x - system.rhs))
