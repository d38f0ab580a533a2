"""Closed-form exact solutions and manufactured forcing.

Each exact field is a sum of separable terms ``c * X(x) Y(y) Z(z) * T(t)``
whose one-dimensional factors carry their own first and second
derivatives.  Forcing terms are the strong-form residuals of the
ferrofluid equations evaluated from these closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ModelParams

Array = np.ndarray


class Factor:
    """One-dimensional factor with derivatives up to order two."""

    def __call__(self, s: Array) -> tuple[Array, Array, Array]:
        raise NotImplementedError


class SinPi(Factor):
    def __call__(self, s):
        ps = np.pi * s
        return np.sin(ps), np.pi * np.cos(ps), -np.pi ** 2 * np.sin(ps)


class Poly(Factor):
    def __init__(self, coefficients):
        self.p = np.polynomial.Polynomial(coefficients)
        self.d1 = self.p.deriv(1)
        self.d2 = self.p.deriv(2)

    def __call__(self, s):
        return self.p(s), self.d1(s), self.d2(s)


ONE = Poly([1.0])
X = Poly([0.0, 1.0])
SIN = SinPi()


class TimeFactor:
    def __call__(self, t: float) -> tuple[float, float]:
        raise NotImplementedError


class SinTime(TimeFactor):
    def __call__(self, t):
        return np.sin(t), np.cos(t)


class Constant(TimeFactor):
    def __call__(self, t):
        return 1.0, 0.0


@dataclass
class SeparableField:
    """Vector (or scalar, one component) field made of separable terms."""

    components: list[list[tuple[float, Factor, Factor, Factor]]]
    time: TimeFactor = field(default_factory=Constant)

    @property
    def ncomp(self) -> int:
        return len(self.components)

    def _parts(self, x: Array):
        x = np.atleast_2d(x)
        cache = {}

        def fac(f, axis):
            key = (id(f), axis)
            if key not in cache:
                cache[key] = f(x[:, axis])
            return cache[key]

        return x, fac

    def _spatial(self, x: Array) -> Array:
        x, fac = self._parts(x)
        out = np.zeros((len(x), self.ncomp))
        for i, terms in enumerate(self.components):
            for c, fx, fy, fz in terms:
                out[:, i] += c * fac(fx, 0)[0] * fac(fy, 1)[0] * fac(fz, 2)[0]
        return out

    def value(self, x: Array, t: float) -> Array:
        return self._shape(self._spatial(x) * self.time(t)[0])

    def time_derivative(self, x: Array, t: float) -> Array:
        return self._shape(self._spatial(x) * self.time(t)[1])

    def gradient(self, x: Array, t: float) -> Array:
        """(N, ncomp, 3) with ``[:, i, d] = d f_i / d x_d`` (scalar: (N, 3))."""
        x, fac = self._parts(x)
        T, _ = self.time(t)
        out = np.zeros((len(x), self.ncomp, 3))
        for i, terms in enumerate(self.components):
            for c, fx, fy, fz in terms:
                a, b, d = fac(fx, 0), fac(fy, 1), fac(fz, 2)
                out[:, i, 0] += c * a[1] * b[0] * d[0]
                out[:, i, 1] += c * a[0] * b[1] * d[0]
                out[:, i, 2] += c * a[0] * b[0] * d[1]
        out *= T
        return out[:, 0] if self.ncomp == 1 else out

    def laplacian(self, x: Array, t: float) -> Array:
        x, fac = self._parts(x)
        T, _ = self.time(t)
        out = np.zeros((len(x), self.ncomp))
        for i, terms in enumerate(self.components):
            for c, fx, fy, fz in terms:
                a, b, d = fac(fx, 0), fac(fy, 1), fac(fz, 2)
                out[:, i] += c * (a[2] * b[0] * d[0] + a[0] * b[2] * d[0] + a[0] * b[0] * d[2])
        return self._shape(out * T)

    def divergence(self, x: Array, t: float) -> Array:
        g = self.gradient(x, t)
        return g[:, 0, 0] + g[:, 1, 1] + g[:, 2, 2]

    def curl(self, x: Array, t: float) -> Array:
        g = self.gradient(x, t)
        return np.column_stack([g[:, 2, 1] - g[:, 1, 2], g[:, 0, 2] - g[:, 2, 0],
                                g[:, 1, 0] - g[:, 0, 1]])

    def _shape(self, out: Array) -> Array:
        return out[:, 0] if self.ncomp == 1 else out


def zero_field(ncomp: int = 3) -> SeparableField:
    return SeparableField([[] for _ in range(ncomp)])


def _matvec(A: Array, v: Array) -> Array:
    return np.einsum("nij,nj->ni", A, v)


def _tmatvec(A: Array, v: Array) -> Array:
    return np.einsum("nji,nj->ni", A, v)


@dataclass
class ProblemData:
    """Everything the time stepper needs from a test case.

    Callables take ``(points (N, 3), t)``.  ``exact`` is set for manufactured
    solutions and ``None`` otherwise.
    """

    label: str
    params: ModelParams
    T: float
    initial_u: Callable[[Array, float], Array]
    initial_m: Callable[[Array, float], Array]
    g_u: Callable[[Array, float], Array]
    div_He: Callable[[Array, float], Array]
    f_u: Callable[[Array, float], Array] | None = None
    f_m: Callable[[Array, float], Array] | None = None
    exact: "ExactSolution | None" = None


@dataclass
class ExactSolution:
    """Closed-form exact fields with the derived quantities used by the solver."""

    label: str
    u_field: SeparableField
    m_field: SeparableField
    H_field: SeparableField
    p_tilde_field: SeparableField
    params: ModelParams
    T: float

    # primitive fields and derivatives
    def u(self, x, t):
        return self.u_field.value(x, t)

    def dt_u(self, x, t):
        return self.u_field.time_derivative(x, t)

    def grad_u(self, x, t):
        return self.u_field.gradient(x, t)

    def curl_u(self, x, t):
        return self.u_field.curl(x, t)

    def lap_u(self, x, t):
        return self.u_field.laplacian(x, t)

    def m(self, x, t):
        return self.m_field.value(x, t)

    def dt_m(self, x, t):
        return self.m_field.time_derivative(x, t)

    def grad_m(self, x, t):
        return self.m_field.gradient(x, t)

    def div_m(self, x, t):
        return self.m_field.divergence(x, t)

    def k(self, x, t):
        """curl m"""
        return self.m_field.curl(x, t)

    def lap_m(self, x, t):
        return self.m_field.laplacian(x, t)

    def H(self, x, t):
        return self.H_field.value(x, t)

    def grad_H(self, x, t):
        return self.H_field.gradient(x, t)

    def div_H(self, x, t):
        return self.H_field.divergence(x, t)

    def curl_H(self, x, t):
        return self.H_field.curl(x, t)

    def p_tilde(self, x, t):
        return self.p_tilde_field.value(x, t)

    def grad_p_tilde(self, x, t):
        return self.p_tilde_field.gradient(x, t)

    def z(self, x, t):
        return np.cross(self.u(x, t), self.m(x, t))

    def p(self, x, t):
        """Physical pressure from ``p~ = p + |u|^2/2 - mu0 (m.H)/2``.

        The minus sign on the magnetic part is the one under which the
        rotational weak form is consistent with the strong equations.
        """
        mu0 = self.params.mu0
        u, m, H = self.u(x, t), self.m(x, t), self.H(x, t)
        return (self.p_tilde(x, t) - 0.5 * np.einsum("ni,ni->n", u, u)
                + 0.5 * mu0 * np.einsum("ni,ni->n", m, H))

    def grad_p(self, x, t):
        mu0 = self.params.mu0
        u, m, H = self.u(x, t), self.m(x, t), self.H(x, t)
        gu, gm, gH = self.grad_u(x, t), self.grad_m(x, t), self.grad_H(x, t)
        grad_mH = _tmatvec(gm, H) + _tmatvec(gH, m)
        return self.grad_p_tilde(x, t) - _tmatvec(gu, u) + 0.5 * mu0 * grad_mH

    def div_He(self, x, t):
        return -(self.div_H(x, t) + self.div_m(x, t))

    def problem(self) -> ProblemData:
        f_u, f_m, div_He = forcing_from_exact(self, self.params)
        return ProblemData(
            label=self.label,
            params=self.params,
            T=self.T,
            initial_u=self.u,
            initial_m=self.m,
            g_u=self.u,
            div_He=div_He,
            f_u=f_u,
            f_m=f_m,
            exact=self,
        )


def forcing_from_exact(sol: ExactSolution, params: ModelParams):
    """Strong-form residuals ``(f_u, f_m, div_He)`` of an exact solution."""
    eta, mu0, sigma = params.eta, params.mu0, params.sigma
    tau, chi0, beta = params.tau, params.chi0, params.beta

    def f_u(x, t):
        u, m, H = sol.u(x, t), sol.m(x, t), sol.H(x, t)
        gu, gm, gH = sol.grad_u(x, t), sol.grad_m(x, t), sol.grad_H(x, t)
        div_m, div_H = sol.div_m(x, t), sol.div_H(x, t)
        curl_mxH = (m * div_H[:, None] - H * div_m[:, None] + _matvec(gm, H) - _matvec(gH, m))
        return (sol.dt_u(x, t) + _matvec(gu, u) - eta * sol.lap_u(x, t) + sol.grad_p(x, t)
                - mu0 * _matvec(gH, m) - 0.5 * mu0 * curl_mxH)

    def f_m(x, t):
        u, m, H = sol.u(x, t), sol.m(x, t), sol.H(x, t)
        return (sol.dt_m(x, t) + _matvec(sol.grad_m(x, t), u) - sigma * sol.lap_m(x, t)
                - 0.5 * np.cross(sol.curl_u(x, t), m) + (m - chi0 * H) / tau
                + beta * np.cross(m, np.cross(m, H)))

    return f_u, f_m, sol.div_He


# ---------------------------------------------------------------------------
# test cases

_UNIT = ModelParams()

# (x^2 - x)^2 and (2x - 1)(x^2 - x)
_B = Poly([0.0, 0.0, 1.0, -2.0, 1.0])
_A = Poly([0.0, 1.0, -3.0, 2.0])
_C = Poly([0.0, -1.0, 1.0])


def _demagnetizing_field() -> SeparableField:
    # 100 sin(t) grad[(x^2-x)^2 (y^2-y)^2 (z^2-z)^2]
    return SeparableField(
        [[(200.0, _A, _B, _B)], [(200.0, _B, _A, _B)], [(200.0, _B, _B, _A)]],
        SinTime(),
    )


def _pressure() -> SeparableField:
    # 120 x^2 y z - 40 y^3 z - 40 y z^3
    X2, X3 = Poly([0, 0, 1.0]), Poly([0, 0, 0, 1.0])
    return SeparableField([[(120.0, X2, X, X), (-40.0, ONE, X3, X), (-40.0, ONE, X, X3)]])


def example1(params: ModelParams = _UNIT) -> ExactSolution:
    u = SeparableField([[(1.0, ONE, SIN, ONE)], [(1.0, ONE, ONE, SIN)], [(1.0, SIN, ONE, ONE)]],
                       SinTime())
    m = SeparableField([[(1.0, SIN, SIN, SIN)], [], []], SinTime())
    return ExactSolution("example1", u, m, _demagnetizing_field(), _pressure(), params, T=4.0)


def example2(params: ModelParams = _UNIT) -> ExactSolution:
    u = SeparableField([[(1.0, ONE, SIN, SIN)], [(1.0, SIN, ONE, SIN)], [(1.0, SIN, SIN, ONE)]],
                       SinTime())
    m = SeparableField([[], [(1.0, _C, _C, _C)], []], SinTime())
    return ExactSolution("example2", u, m, _demagnetizing_field(), _pressure(), params, T=1.0)


def example3(params: ModelParams = _UNIT, T: float = 1.0) -> ProblemData:
    """Energy test: no forcing, zero external field, homogeneous velocity trace."""
    u0 = SeparableField([[(1.0, ONE, SIN, SIN)], [(1.0, SIN, ONE, SIN)], [(1.0, SIN, SIN, ONE)]])
    m0 = SeparableField([[(1.0, SIN, SIN, SIN)], [], []])

    def zero_vector(x, t):
        return np.zeros((len(np.atleast_2d(x)), 3))

    def zero_scalar(x, t):
        return np.zeros(len(np.atleast_2d(x)))

    return ProblemData(
        label="example3",
        params=params,
        T=T,
        initial_u=u0.value,
        initial_m=m0.value,
        g_u=zero_vector,
        div_He=zero_scalar,
    )


EXAMPLES = {1: example1, 2: example2, 3: example3}
