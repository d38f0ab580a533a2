"""Fully discrete time stepping by staged quasi-Newton sweeps.

Each time step runs ``M`` sweeps of three linear solves with the
nonlinearities frozen at the previous sweep (magnetostatics, then the coupled
magnetization/auxiliary system, then Navier-Stokes), followed by one
closing magnetostatic solve so that the stored field matches the final
magnetization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import assembly
from .linsolve import BlockSystem, Factorization, SolverError
from .mesh import Mesh, build_uniform_mesh
from .mms import ProblemData
from .params import SchemeParams
from .spaces import (
    DofMap,
    FieldCoefficients,
    SpaceKind,
    build_dofmap,
    integration_weights,
    interpolate,
)

log = logging.getLogger(__name__)


class Discretization:
    """Mesh, spaces and the time-independent matrices of the scheme."""

    def __init__(self, mesh: Mesh, edge_bc: bool = False):
        self.mesh = mesh
        self.edge_bc = edge_bc
        self.U = build_dofmap(mesh, SpaceKind.MINI_VELOCITY)
        self.P = build_dofmap(mesh, SpaceKind.PRESSURE_P1)
        self.F = build_dofmap(mesh, SpaceKind.FACE0)
        self.E = build_dofmap(mesh, SpaceKind.EDGE0, tangential_bc=edge_bc)
        self.W = build_dofmap(mesh, SpaceKind.CELL0)

        self.mass_u = assembly.mass(self.U)
        self.stiff_u = assembly.stiffness_velocity(self.U)
        self.div_u = assembly.div_velocity_to_pressure(self.U, self.P)
        self.mass_f = assembly.mass(self.F)
        self.divdiv_f = assembly.divdiv_face(self.F)
        self.mass_e = assembly.mass(self.E)
        self.curl_ef = assembly.curl_edge_to_face(self.E, self.F)
        self.div_fc = assembly.div_face_to_cell(self.F, self.W)
        self.p_weights = integration_weights(self.P)
        self.w_weights = integration_weights(self.W)

    @classmethod
    def uniform(cls, n: int, edge_bc: bool = False) -> "Discretization":
        return cls(build_uniform_mesh(n), edge_bc)

    def zero(self, name: str) -> FieldCoefficients:
        return FieldCoefficients.zeros(self.space(name))

    def space(self, name: str) -> DofMap:
        return {"u": self.U, "p": self.P, "m": self.F, "H": self.F, "z": self.E,
                "k": self.E, "phi": self.W}[name]

    def projected_source(self, div_He: Callable, t: float) -> np.ndarray:
        """Cell values of the zero-mean L2 projection of ``div H_e``."""
        means = assembly.cell_means(self.mesh, div_He, t)
        return means - (means @ self.w_weights) / self.w_weights.sum()


@dataclass
class SimState:
    t: float
    u: FieldCoefficients
    p: FieldCoefficients
    m: FieldCoefficients
    z: FieldCoefficients
    k: FieldCoefficients
    H: FieldCoefficients
    phi: FieldCoefficients

    def fields(self) -> dict[str, FieldCoefficients]:
        return {name: getattr(self, name) for name in ("u", "p", "m", "z", "k", "H", "phi")}


@dataclass
class Residuals:
    div_u: float  # (div u_h, q_h) over zero-mean q_h
    flux: float  # elementwise div H_h + div m_h + Q_h div H_e
    mstat: float  # (H_h, G_h) + (phi_h, div G_h)


class Stepper:
    """Runs the staged iteration for one problem on one discretization."""

    def __init__(self, disc: Discretization, params: SchemeParams, data: ProblemData):
        self.disc = disc
        self.params = params
        self.data = data
        self._mstat_lu: Factorization | None = None
        self._ns_lu: Factorization | None = None
        self._mag_lu: Factorization | None = None
        self.step_index = 0
        self._source_cache: dict[tuple[str, float], np.ndarray] = {}

    def _cached(self, key: str, t: float, compute: Callable[[], np.ndarray]) -> np.ndarray:
        # time-dependent data is the same for every sweep of one step
        if (key, t) not in self._source_cache:
            self._source_cache = {k: v for k, v in self._source_cache.items() if k[1] == t}
            self._source_cache[key, t] = compute()
        return self._source_cache[key, t]

    # -- magnetostatics ---------------------------------------------------

    def _mstat_factorization(self) -> Factorization:
        if self._mstat_lu is None:
            d = self.disc
            nF, nW = d.F.n_global, d.W.n_global
            A = sp.bmat([[d.mass_f, d.div_fc.T], [d.div_fc, None]], format="csc")
            system = BlockSystem([("H", nF), ("phi", nW)], A, np.zeros(nF + nW),
                                 zero_mean={"phi": d.w_weights}, stage="magnetostatic solve")
            self._mstat_lu = Factorization(system)
        return self._mstat_lu

    def magnetostatic_solve(self, m: FieldCoefficients, t: float):
        """Discrete gradient field ``H_h = grad_h phi_h`` with ``div(H_h + m_h) = -Q_h div H_e``."""
        d = self.disc
        source = self._cached("div_He", t, lambda: d.projected_source(self.data.div_He, t))
        source = source * d.mesh.volumes
        rhs = np.concatenate([np.zeros(d.F.n_global), -source - d.div_fc @ m.values])
        x = self._mstat_factorization().solve(rhs)
        nF = d.F.n_global
        return FieldCoefficients(d.F, x[:nF]), FieldCoefficients(d.W, x[nF:])

    # -- magnetization ----------------------------------------------------

    def magnetization_solve(self, u_prev: FieldCoefficients, m_prev: FieldCoefficients,
                            m_old: FieldCoefficients, H: FieldCoefficients, t: float):
        """Coupled solve for ``(m, z, k)`` with velocity and magnetization frozen."""
        d, p = self.disc, self.params
        dt = p.dt
        T = assembly.cross_face_edge(u_prev, d.F, d.E)
        Bw = assembly.bform(u_prev, d.F)
        A1, A2 = assembly.quadrilinear_matrices(m_prev, H)
        Amm = ((1.0 + dt / p.tau) * d.mass_f + p.sigma * dt * d.divdiv_f + dt * Bw
               + p.beta * dt * (A1 + A2))
        A = sp.bmat(
            [[Amm, -0.5 * dt * d.curl_ef, p.sigma * dt * d.curl_ef + 0.5 * dt * T],
             [-T.T, d.mass_e, None],
             [-d.curl_ef.T, None, d.mass_e]],
            format="csc",
        )
        rhs_m = (d.mass_f @ m_old.values + (p.chi0 / p.tau) * dt * (d.mass_f @ H.values)
                 + p.beta * dt * assembly.quadrilinear_load(m_prev, H))
        if self.data.f_m is not None:
            rhs_m = rhs_m + dt * self._cached("f_m", t, lambda: assembly.load(d.F, self.data.f_m, t))
        nF, nE = d.F.n_global, d.E.n_global
        rhs = np.concatenate([rhs_m, np.zeros(2 * nE)])
        system = BlockSystem([("m", nF), ("z", nE), ("k", nE)], A, rhs,
                             stage="magnetization solve")
        if self._mag_lu is None:
            self._mag_lu = Factorization(system)
        else:
            self._mag_lu.refactor(system)
        x = self._mag_lu.solve(rhs)
        parts = system.split(x)
        return (FieldCoefficients(d.F, parts["m"]), FieldCoefficients(d.E, parts["z"]),
                FieldCoefficients(d.E, parts["k"]))

    # -- Navier-Stokes ----------------------------------------------------

    def _ns_factorization(self) -> Factorization:
        if self._ns_lu is None:
            d, p = self.disc, self.params
            free = d.U.free
            A = (d.mass_u + p.dt * p.eta * d.stiff_u).tocsr()[free][:, free]
            B = d.div_u.tocsc()[:, free]
            K = sp.bmat([[A, -p.dt * B.T], [B, None]], format="csc")
            nf, nP = len(free), d.P.n_global
            system = BlockSystem([("u", nf), ("p", nP)], K, np.zeros(nf + nP),
                                 zero_mean={"p": d.p_weights}, stage="Navier-Stokes solve")
            self._ns_lu = Factorization(system)
        return self._ns_lu

    def boundary_values(self, t: float) -> np.ndarray:
        """Full velocity vector that is zero except at Dirichlet dofs."""
        d = self.disc
        g = interpolate(d.U, self.data.g_u, t).values
        g[d.U.free] = 0.0
        return g

    def nstokes_solve(self, u_prev: FieldCoefficients, u_old: FieldCoefficients,
                      m: FieldCoefficients, H: FieldCoefficients, k: FieldCoefficients, t: float):
        """Velocity and modified pressure with the magnetic terms on the right."""
        d, p = self.disc, self.params
        dt = p.dt
        b_load, k_load = assembly.momentum_coupling_loads(d.U, m, H, k)
        rhs = (dt * p.mu0 * b_load + 0.5 * p.mu0 * dt * k_load + d.mass_u @ u_old.values
               + dt * assembly.convection_load(u_prev))
        if self.data.f_u is not None:
            rhs = rhs + dt * self._cached("f_u", t, lambda: assembly.load(d.U, self.data.f_u, t))
        g = self._cached("g_u", t, lambda: self.boundary_values(t))
        free = d.U.free
        A_full = d.mass_u + dt * p.eta * d.stiff_u
        rhs_u = (rhs - A_full @ g)[free]
        rhs_p = -(d.div_u @ g)
        x = self._ns_factorization().solve(np.concatenate([rhs_u, rhs_p]))
        u = g.copy()
        u[free] = x[: len(free)]
        return FieldCoefficients(d.U, u), FieldCoefficients(d.P, x[len(free):])

    # -- auxiliary fields -------------------------------------------------

    def auxiliary_fields(self, u: FieldCoefficients, m: FieldCoefficients):
        """``z = P(u x m)`` and ``k = curl_h m`` by edge-mass solves."""
        d = self.disc
        nE = d.E.n_global
        lu = Factorization(BlockSystem([("edge", nE)], d.mass_e, np.zeros(nE),
                                       stage="edge mass solve"))
        z = lu.solve(assembly.cross_velocity_face_edge_load(u, m, d.E))
        k = lu.solve(d.curl_ef.T @ m.values)
        return FieldCoefficients(d.E, z), FieldCoefficients(d.E, k)

    # -- driver -----------------------------------------------------------

    def initial_state(self) -> SimState:
        d = self.disc
        u = interpolate(d.U, self.data.initial_u, 0.0)
        g = self.boundary_values(0.0)
        fixed = d.U.fixed
        u.values[fixed] = g[fixed]
        m = interpolate(d.F, self.data.initial_m, 0.0)
        H, phi = self.magnetostatic_solve(m, 0.0)
        z, k = self.auxiliary_fields(u, m)
        return SimState(0.0, u, d.zero("p"), m, z, k, H, phi)

    def step(self, state: SimState) -> SimState:
        p = self.params
        t = state.t + p.dt
        self.step_index += 1
        u_minus, m_minus = state.u, state.m
        try:
            for sweep in range(1, p.M + 1):
                stage = "magnetostatic"
                H, phi = self.magnetostatic_solve(m_minus, t)
                stage = "magnetization"
                m, z, k = self.magnetization_solve(u_minus, m_minus, state.m, H, t)
                stage = "Navier-Stokes"
                u, pr = self.nstokes_solve(u_minus, state.u, m, H, k, t)
                converged = False
                if p.sweep_tol is not None:
                    du = np.linalg.norm(u.values - u_minus.values)
                    dm = np.linalg.norm(m.values - m_minus.values)
                    scale = np.linalg.norm(u.values) + np.linalg.norm(m.values) + 1e-300
                    converged = (du + dm) <= p.sweep_tol * scale
                u_minus, m_minus = u, m
                if converged:
                    break
            stage = "closing magnetostatic"
            H, phi = self.magnetostatic_solve(m, t)
        except SolverError as exc:
            raise SolverError(f"step {self.step_index}, sweep {sweep}, {stage}: {exc}") from exc
        return SimState(t, u, pr, m, z, k, H, phi)

    def residuals(self, state: SimState) -> Residuals:
        d = self.disc
        r = d.div_u @ state.u.values
        w = d.p_weights
        r = r - w * (w @ r) / (w @ w)
        source = self._cached("div_He", state.t, lambda: d.projected_source(self.data.div_He, state.t))
        flux = (d.div_fc @ (state.H.values + state.m.values)) / d.mesh.volumes + source
        mstat = d.mass_f @ state.H.values + d.div_fc.T @ state.phi.values
        return Residuals(float(np.abs(r).max()), float(np.abs(flux).max()),
                         float(np.abs(mstat).max()))


@dataclass
class RunResult:
    state: SimState
    energies: list = field(default_factory=list)


def run(disc: Discretization, params: SchemeParams, data: ProblemData,
        callback: Callable[[int, SimState, "Stepper"], None] | None = None) -> RunResult:
    """Integrate from t = 0 to ``params.T``; the callback runs after every step (and at n = 0)."""
    from .diagnostics import energy

    stepper = Stepper(disc, params, data)
    state = stepper.initial_state()
    result = RunResult(state)
    record = lambda n, st: energy(st, params.model, step=n, disc=disc,
                                  residuals=stepper.residuals(st))
    result.energies.append(record(0, state))
    if callback is not None:
        callback(0, state, stepper)
    for n in range(1, params.num_steps + 1):
        state = stepper.step(state)
        result.energies.append(record(n, state))
        log.info("step %d t=%.4f E=%.6e", n, state.t, result.energies[-1].E)
        if callback is not None:
            callback(n, state, stepper)
    # re-anchor the time to the exact grid value
    result.state = replace(state, t=params.num_steps * params.dt)
    return result
