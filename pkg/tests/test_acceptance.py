"""End-to-end acceptance checks, one test per criterion.

Each test records a ``criterion k: PASS|FAIL ...`` line that is printed in
the terminal summary.  The n=16 leg of the order study takes roughly half an
hour; set ``FERROFLOW_ACCEPTANCE_QUICK=1`` to skip it.
"""

import os
import time

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from conftest import ACCEPTANCE_LINES
from helpers import fd_derivative_error
from reference_tables import EXAMPLE1, EXAMPLE2

from ferroflow import assembly, cli
from ferroflow.diagnostics import ErrorReport, convergence_orders, error_norms
from ferroflow.linsolve import BlockSystem, solve
from ferroflow.mesh import build_uniform_mesh
from ferroflow.mms import example1, example2, example3
from ferroflow.params import SchemeParams
from ferroflow.spaces import FieldCoefficients, SpaceKind, build_dofmap
from ferroflow.stepper import Discretization, run

QUICK = os.environ.get("FERROFLOW_ACCEPTANCE_QUICK", "") not in ("", "0")
REL_TOL = 0.20
COLUMNS = ErrorReport.columns()


def record(k, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


class Example1Runs:
    """Lazily computed Example 1 runs, shared by several criteria."""

    def __init__(self):
        self.results = {}
        self.seconds = {}

    def get(self, n):
        if n not in self.results:
            sol = example1()
            start = time.perf_counter()
            result = run(Discretization.uniform(n), SchemeParams(sol.params, 1.0 / n, sol.T),
                         sol.problem())
            self.seconds[n] = time.perf_counter() - start
            self.results[n] = (result, error_norms(result.state, sol))
        return self.results[n]


@pytest.fixture(scope="module")
def ex1_runs():
    return Example1Runs()


def test_criterion_01_complex_exactness():
    start = time.perf_counter()
    worst = 0.0
    for n in (1, 2, 4):
        mesh = build_uniform_mesh(n)
        C, D = assembly.exterior_derivative_matrices(
            build_dofmap(mesh, SpaceKind.EDGE0, tangential_bc=True),
            build_dofmap(mesh, SpaceKind.FACE0), build_dofmap(mesh, SpaceKind.CELL0))
        worst = max(worst, abs(D @ C).max())
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-13 and elapsed < 1.0, f"max|D C| = {worst:.1e}, {elapsed:.2f} s")


def test_criterion_02_skew_identity():
    rng = np.random.default_rng(2)
    disc = Discretization.uniform(2)
    worst = 0.0
    for _ in range(100):
        w = FieldCoefficients(disc.U, rng.standard_normal(disc.U.n_global))
        F = rng.standard_normal(disc.F.n_global)
        B = assembly.bform(w, disc.F)
        scale = np.sqrt(w.values @ (disc.mass_u @ w.values)) * (F @ (disc.mass_f @ F))
        worst = max(worst, abs(F @ (B @ F)) / scale)
    record(2, worst <= 1e-12, f"max |b(w;F,F)| / (|w| |F|^2) = {worst:.1e}")


def test_criterion_03_shape_derivatives():
    rng = np.random.default_rng(3)
    worst = {}
    for edge_bc in (False, True):
        disc = Discretization.uniform(2, edge_bc=edge_bc)
        for space in (disc.U, disc.P, disc.F, disc.E, disc.W):
            key = space.kind.value
            worst[key] = max(worst.get(key, 0.0), fd_derivative_error(space, rng))
    top = max(worst.values())
    summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(3, top <= 1e-6, f"max FD difference {top:.1e} ({summary})")


def test_criterion_04_constraints_every_step(ex1_runs):
    result, _ = ex1_runs.get(4)
    res = np.array([[r.res_div_u, r.res_flux, r.res_mstat] for r in result.energies])
    worst = res.max(axis=0)
    record(4, bool(np.all(res <= 1e-9)),
           f"{len(res)} states, max div u {worst[0]:.1e}, flux {worst[1]:.1e}, "
           f"magnetostatic {worst[2]:.1e}")


def test_criterion_05_energy_decay():
    data = example3(T=1.0)
    start = time.perf_counter()
    result = run(Discretization.uniform(8), SchemeParams(data.params, 1.0 / 16, 1.0), data)
    elapsed = time.perf_counter() - start
    E = np.array([r.E for r in result.energies])
    rise = np.diff(E).max()
    ok = rise <= 1e-12 * E[0] and elapsed < 120
    record(5, ok, f"max step increase {rise:.1e} (E0 = {E[0]:.4f}), {elapsed:.0f} s")


def _compare(measured, reference):
    rel = np.abs(measured - reference) / reference
    worst = int(np.argmax(rel))
    return rel, f"worst {COLUMNS[worst]} {measured[worst]:.4f} vs {reference[worst]:.4f}"


def test_criterion_06_table_reproduction(ex1_runs):
    details, ok = [], True
    for n in (4, 8):
        _, rep = ex1_runs.get(n)
        rel, text = _compare(rep.as_array(), np.array(EXAMPLE1[n]))
        ok &= bool(np.all(rel <= REL_TOL))
        details.append(f"n={n}: max rel dev {rel.max():.1%} ({text})")
    elapsed = ex1_runs.seconds[4] + ex1_runs.seconds[8]
    ok &= elapsed < 600
    record(6, ok, "; ".join(details) + f"; {elapsed:.0f} s")


def test_criterion_07_observed_orders(ex1_runs):
    if QUICK:
        ACCEPTANCE_LINES.append("criterion 7: SKIP  quick mode, no n=16 run")
        pytest.skip("order study needs the n=16 run")
    ns = [4, 8, 16]
    reports = [ex1_runs.get(n)[1] for n in ns]
    orders = dict(zip(COLUMNS, convergence_orders(reports, ns).pairwise[-1]))
    second = ("u_l2", "p_l2")
    bad = [c for c in COLUMNS
           if not (orders[c] >= 1.8 if c in second else 0.8 <= orders[c] <= 1.2)]
    text = ", ".join(f"{c} {orders[c]:.2f}" for c in COLUMNS)
    record(7, not bad, f"orders 8->16: {text}" + (f"; out of range: {bad}" if bad else ""))


def test_criterion_08_second_table_spot_check():
    sol = example2()
    result = run(Discretization.uniform(4), SchemeParams(sol.params, 0.25, sol.T), sol.problem())
    err = error_norms(result.state, sol).u_l2
    ref = EXAMPLE2[4][0]
    record(8, abs(err - ref) <= REL_TOL * ref, f"|u - u_h|/|u| = {err:.4f} vs {ref:.4f}")


def test_criterion_09_dense_oracle():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(20):
        A = rng.standard_normal((50, 50))
        A = A @ A.T + 50 * np.eye(50) if i % 2 else A + 10 * np.eye(50)
        b = rng.standard_normal(50)
        oracle = sla.lu_solve(sla.lu_factor(A), b)
        x = solve(BlockSystem([("x", 50)], sp.csr_matrix(A), b))
        worst = max(worst, np.linalg.norm(x - oracle) / np.linalg.norm(oracle))
    record(9, worst <= 1e-10, f"max relative difference {worst:.1e}")


def test_criterion_10_determinism(tmp_path):
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli.main(["run", "--example", "1", "--n", "4", "--T", "1", "--vtk",
                         "--vtk-every", "2", "--out", str(out)])
        assert code == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    same &= files == sorted(p.name for p in outs[1].iterdir())
    record(10, same, f"{len(files)} files compared byte for byte ({', '.join(files)})")
