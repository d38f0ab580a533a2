import warnings

import numpy as np
import pytest

from ferroflow.diagnostics import (
    ErrorReport,
    convergence_orders,
    energy,
    error_norms,
)
from ferroflow.mms import ExactSolution, example1, zero_field
from ferroflow.params import ModelParams
from ferroflow.quadrature import tet_rule
from ferroflow.spaces import FieldCoefficients, evaluate, interpolate, physical_points
from ferroflow.stepper import Discretization, SimState


def interpolant_state(disc, sol, t):
    f = {"u": sol.u, "m": sol.m, "z": sol.z, "k": sol.k, "H": sol.H}
    s = {name: interpolate(disc.space(name), fn, t) for name, fn in f.items()}
    p = interpolate(disc.P, sol.p_tilde, t)
    p = FieldCoefficients(disc.P, p.values - p.values @ disc.p_weights / disc.p_weights.sum())
    return SimState(t, s["u"], p, s["m"], s["z"], s["k"], s["H"], disc.zero("phi"))


def random_state(disc, rng):
    vals = {name: FieldCoefficients(disc.space(name), rng.standard_normal(disc.space(name).n_global))
            for name in ("u", "p", "m", "z", "k", "H", "phi")}
    return SimState(0.3, **vals)


def test_zero_state(disc2):
    z = disc2.zero
    state = SimState(0.0, z("u"), z("p"), z("m"), z("z"), z("k"), z("H"), z("phi"))
    rec = energy(state, ModelParams(), disc=disc2)
    assert rec.E == 0.0 and rec.F == 0.0


def test_scaling_quadruples_energy(disc2, rng):
    state = random_state(disc2, rng)
    doubled = SimState(state.t, *[f * 2.0 for f in state.fields().values()])
    e1, e2 = energy(state, ModelParams(), disc=disc2), energy(doubled, ModelParams(), disc=disc2)
    assert np.isclose(e2.E, 4 * e1.E, rtol=1e-14)
    assert e1.E > 0 and e1.F > 0


def test_energy_matches_direct_quadrature(disc2, rng):
    state = random_state(disc2, rng)
    params = ModelParams(mu0=0.7)
    rule = tet_rule(8)
    w = rule.weights * 6.0

    def sq(f):
        v = evaluate(f, rule.barycentric).value
        return float(np.einsum("q,c,cqd,cqd->", w, disc2.mesh.volumes, v, v))

    direct = sq(state.u) + sq(state.m) + 0.7 * sq(state.H)
    assert np.isclose(energy(state, params, disc=disc2).E, direct, rtol=1e-8)
    # assembling on the fly agrees with the cached matrices
    assert np.isclose(energy(state, params).E, direct, rtol=1e-8)


def test_energy_of_exact_interpolants():
    disc = Discretization.uniform(8)
    sol = example1()
    t = np.pi / 2
    rec = energy(interpolant_state(disc, sol, t), sol.params, disc=disc)
    rule = tet_rule(5)
    x = physical_points(disc.mesh, rule.barycentric)
    H = sol.H(x.reshape(-1, 3), t).reshape(x.shape)
    H2 = float(np.einsum("q,c,cqd,cqd->", rule.weights * 6.0, disc.mesh.volumes, H, H))
    expected = 1.5 + 0.125 + sol.params.mu0 * H2
    assert abs(rec.E - expected) <= 0.05 * expected


def test_interpolant_errors_below_one():
    sol = example1()
    for n in (2, 4):
        disc = Discretization.uniform(n)
        rep = error_norms(interpolant_state(disc, sol, 1.0), sol)
        arr = rep.as_array()
        assert np.all(arr >= 0) and np.all(arr < 1), rep


def test_zero_exact_solution_rejected(disc2):
    z = zero_field()
    sol = ExactSolution("zero", z, z, z, zero_field(1), ModelParams(), T=1.0)
    state = interpolant_state(disc2, example1(), 1.0)
    with pytest.raises(ZeroDivisionError):
        error_norms(state, sol)


def report(values):
    return ErrorReport(*([values] * 9))


def test_orders_two_levels():
    tab = convergence_orders([report(0.4), report(0.1)], [4, 8])
    assert np.allclose(tab.pairwise, 2.0) and np.allclose(tab.slope, 2.0)


def test_orders_three_levels():
    tab = convergence_orders([report(0.32), report(0.16), report(0.08)], [4, 8, 16])
    assert np.allclose(tab.pairwise, 1.0) and np.allclose(tab.slope, 1.0)
    assert tab.non_monotone == []


def test_non_monotone_sequence_is_reported():
    reps = [report(0.3), report(0.1), report(0.2)]
    with pytest.warns(UserWarning, match="monotonically"):
        tab = convergence_orders(reps, [4, 8, 16])
    assert tab.non_monotone == ErrorReport.columns()
    assert tab.pairwise[1, 0] < 0


def test_order_preconditions():
    with pytest.raises(ValueError):
        convergence_orders([report(0.1)], [4])
    with pytest.raises(ValueError):
        convergence_orders([report(0.2), report(0.1)], [4, 12])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        convergence_orders([report(0.2), report(0.1)])


def test_columns():
    assert ErrorReport.columns() == ["u_l2", "u_h1", "p_l2", "m_l2", "m_div", "H_l2", "H_div",
                                     "z_l2", "k_l2"]
