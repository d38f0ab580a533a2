"""Energies, dissipation, error norms and observed convergence orders."""

from __future__ import annotations

import math
import warnings
from dataclasses import astuple, dataclass, fields

import numpy as np

from . import assembly
from .params import ModelParams
from .quadrature import tet_rule
from .spaces import curl_from_gradient, evaluate, physical_points

ERROR_DEGREE = 5


@dataclass(frozen=True)
class EnergyRecord:
    step: int
    t: float
    E: float
    F: float
    res_div_u: float = math.nan
    res_flux: float = math.nan
    res_mstat: float = math.nan


def _quad(x, A):
    return float(x @ (A @ x))


def _cross_sq(m, H) -> float:
    """``||m x H||^2`` by degree-4 quadrature."""
    mesh = m.space.mesh
    rule = tet_rule(4)
    lam, wq = rule.barycentric, rule.weights * 6.0
    total = 0.0
    for cells in assembly._chunks(mesh.num_cells):
        c = np.cross(evaluate(m, lam, cells).value, evaluate(H, lam, cells).value)
        total += float(np.einsum("q,c,cqd,cqd->", wq, mesh.volumes[cells], c, c))
    return total


def energy(state, params: ModelParams, step: int = 0, disc=None, residuals=None) -> EnergyRecord:
    """Discrete energy ``E`` and dissipation ``F`` of a state.

    ``disc`` (a Discretization) supplies cached matrices; without it they are
    assembled on the fly.
    """
    u, m, H, k = state.u, state.m, state.H, state.k
    if disc is None:
        Mu, Ku = assembly.mass(u.space), assembly.stiffness_velocity(u.space)
        Mf, Df = assembly.mass(m.space), assembly.divdiv_face(m.space)
        Me = assembly.mass(k.space)
    else:
        Mu, Ku, Mf, Df, Me = disc.mass_u, disc.stiff_u, disc.mass_f, disc.divdiv_f, disc.mass_e
    p = params
    m2, H2 = _quad(m.values, Mf), _quad(H.values, Mf)
    E = _quad(u.values, Mu) + m2 + p.mu0 * H2
    F = (p.eta * _quad(u.values, Ku)
         + p.sigma * (p.mu0 + 1.0) * _quad(m.values, Df)
         + p.sigma * _quad(k.values, Me)
         + m2 / p.tau
         + (p.mu0 * (1.0 + p.chi0) + p.chi0) * H2 / p.tau
         + p.mu0 * p.beta * _cross_sq(m, H))
    res = (math.nan,) * 3 if residuals is None else (residuals.div_u, residuals.flux, residuals.mstat)
    return EnergyRecord(step, float(state.t), E, F, *res)


@dataclass(frozen=True)
class ErrorReport:
    u_l2: float
    u_h1: float
    p_l2: float
    m_l2: float
    m_div: float
    H_l2: float
    H_div: float
    z_l2: float
    k_l2: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))


def _ratio(num: float, den: float, name: str) -> float:
    if not den > 0:
        raise ZeroDivisionError(f"exact {name} has zero norm; relative error undefined")
    return math.sqrt(num / den)


def error_norms(state, exact, degree: int = ERROR_DEGREE) -> ErrorReport:
    """Relative errors of all nine tracked quantities at ``state.t``."""
    mesh = state.u.space.mesh
    rule = tet_rule(degree)
    lam, wq = rule.barycentric, rule.weights * 6.0
    t = state.t
    keys = ("u", "gu", "p", "m", "dm", "H", "dH", "z", "k")
    err = dict.fromkeys(keys, 0.0)
    ref = dict.fromkeys(keys, 0.0)
    p_mean_exact = 0.0
    p_stats = []
    for cells in assembly._chunks(mesh.num_cells):
        x = physical_points(mesh, lam, cells)
        shape = x.shape[:2]
        xf = x.reshape(-1, 3)
        w = wq[None, :] * mesh.volumes[cells, None]

        def acc(key, disc, ex):
            ex = np.asarray(ex).reshape(disc.shape)
            d = (disc - ex).reshape(shape + (-1,))
            e = ex.reshape(shape + (-1,))
            err[key] += float(np.einsum("cq,cqk,cqk->", w, d, d))
            ref[key] += float(np.einsum("cq,cqk,cqk->", w, e, e))

        ue = evaluate(state.u, lam, cells)
        acc("u", ue.value, exact.u(xf, t))
        acc("gu", ue.derivative, exact.grad_u(xf, t))
        me = evaluate(state.m, lam, cells)
        acc("m", me.value, exact.m(xf, t))
        acc("dm", me.derivative, exact.div_m(xf, t))
        He = evaluate(state.H, lam, cells)
        acc("H", He.value, exact.H(xf, t))
        acc("dH", He.derivative, exact.div_H(xf, t))
        acc("z", evaluate(state.z, lam, cells).value, exact.z(xf, t))
        acc("k", evaluate(state.k, lam, cells).value, exact.k(xf, t))
        ph = evaluate(state.p, lam, cells).value
        pe = np.asarray(exact.p_tilde(xf, t)).reshape(shape)
        p_mean_exact += float(np.einsum("cq,cq->", w, pe))
        p_stats.append((w, ph, pe))
    # both pressures are compared with zero mean
    for w, ph, pe in p_stats:
        pe = pe - p_mean_exact
        d = ph - pe
        err["p"] += float(np.einsum("cq,cq->", w, d * d))
        ref["p"] += float(np.einsum("cq,cq->", w, pe * pe))
    names = ["u", "grad u", "p~", "m", "div m", "H", "div H", "z", "k"]
    vals = [_ratio(err[k], ref[k], name) for k, name in zip(keys, names)]
    return ErrorReport(*vals)


@dataclass
class OrderTable:
    """Observed orders between consecutive levels plus a regression slope."""

    ns: list[int]
    pairwise: np.ndarray  # (levels - 1, 9)
    slope: np.ndarray  # (9,)
    non_monotone: list[str]


def convergence_orders(reports: list[ErrorReport], ns: list[int] | None = None) -> OrderTable:
    """Orders ``log2(e(n) / e(2n))``; each level must halve h and dt."""
    if len(reports) < 2:
        raise ValueError("at least two mesh levels are needed for an order")
    if ns is None:
        ns = [2**i for i in range(len(reports))]
    if any(b != 2 * a for a, b in zip(ns, ns[1:])):
        raise ValueError(f"mesh levels {ns} are not successive doublings")
    errs = np.array([r.as_array() for r in reports])
    with np.errstate(divide="ignore", invalid="ignore"):
        pairwise = np.log2(errs[:-1] / errs[1:])
        slope = -np.polyfit(np.log2(ns), np.log2(errs), 1)[0]
    cols = ErrorReport.columns()
    bad = [c for j, c in enumerate(cols) if np.any(np.diff(errs[:, j]) >= 0)]
    if bad:
        warnings.warn(f"errors do not decrease monotonically for: {', '.join(bad)}", stacklevel=2)
    return OrderTable(list(ns), pairwise, np.atleast_1d(slope), bad)
