import numpy as np
import pytest

from ferroflow import assembly
from ferroflow.mesh import build_uniform_mesh
from ferroflow.mms import example1
from ferroflow.quadrature import tet_rule
from ferroflow.spaces import (
    FieldCoefficients,
    SpaceKind,
    build_dofmap,
    evaluate,
    interpolate,
)


def random_field(space, rng):
    return FieldCoefficients(space, rng.standard_normal(space.n_global))


def quad(mesh, integrand, degree=8):
    """Direct quadrature of a pointwise integrand(lam, cells) -> (C, Q)."""
    rule = tet_rule(degree)
    vals = integrand(rule.barycentric)
    return float(np.einsum("q,c,cq->", rule.weights * 6.0, mesh.volumes, vals))


def l2(field, mass):
    return float(np.sqrt(field.values @ (mass @ field.values)))


def test_exterior_derivative_composition_vanishes():
    for n in (1, 2, 4):
        mesh = build_uniform_mesh(n)
        E = build_dofmap(mesh, SpaceKind.EDGE0, tangential_bc=True)
        F = build_dofmap(mesh, SpaceKind.FACE0)
        W = build_dofmap(mesh, SpaceKind.CELL0)
        C, D = assembly.exterior_derivative_matrices(E, F, W)
        assert abs(D @ C).max() <= 1e-13


def test_curl_form_equals_face_mass_times_curl_coefficients(disc2):
    mesh = disc2.mesh
    E = build_dofmap(mesh, SpaceKind.EDGE0, tangential_bc=True)
    C, _ = assembly.exterior_derivative_matrices(E, disc2.F, disc2.W)
    G = assembly.curl_edge_to_face(E, disc2.F)
    assert abs(G - disc2.mass_f @ C).max() < 1e-12


def test_div_form_composed_with_curl_form(disc2):
    # (div F_i, r) against curl coefficients also vanishes
    E = build_dofmap(disc2.mesh, SpaceKind.EDGE0, tangential_bc=True)
    C, _ = assembly.exterior_derivative_matrices(E, disc2.F, disc2.W)
    assert abs(disc2.div_fc @ C).max() < 1e-13


def test_p0_mass_on_single_cube():
    mesh = build_uniform_mesh(1)
    M = assembly.mass(build_dofmap(mesh, SpaceKind.CELL0)).toarray()
    assert np.allclose(M, np.eye(6) / 6.0, atol=1e-15)


@pytest.mark.parametrize("name", ["u", "p", "m", "z", "phi"])
def test_mass_matrices_spd(disc2, name):
    space = disc2.space(name)
    M = assembly.mass(space).toarray()
    assert np.allclose(M, M.T, atol=1e-15)
    assert np.linalg.eigvalsh(M).min() > 0


@pytest.mark.parametrize("name", ["u", "m", "z"])
def test_mass_matches_direct_quadrature(disc2, rng, name):
    space = disc2.space(name)
    M = assembly.mass(space)
    a, b = random_field(space, rng), random_field(space, rng)
    direct = quad(disc2.mesh, lambda lam: np.einsum(
        "cqd,cqd->cq", evaluate(a, lam).value, evaluate(b, lam).value), degree=8)
    assert np.isclose(b.values @ (M @ a.values), direct, rtol=1e-12)


def test_velocity_stiffness_kernel_and_symmetry(disc2):
    K = disc2.stiff_u
    assert abs(K - K.T).max() < 1e-13
    const = interpolate(disc2.U, lambda x, t: np.tile([1.0, -2.0, 0.5], (len(x), 1)))
    assert np.abs(K @ const.values).max() < 1e-12


def test_div_velocity_annihilates_constants(disc2):
    const = interpolate(disc2.U, lambda x, t: np.tile([0.3, 1.0, -0.7], (len(x), 1)))
    assert np.abs(disc2.div_u @ const.values).max() < 1e-13


def test_divdiv_matches_div_coefficients(disc2, rng):
    m = random_field(disc2.F, rng)
    direct = quad(disc2.mesh, lambda lam: evaluate(m, lam).derivative ** 2, degree=2)
    assert np.isclose(m.values @ (disc2.divdiv_f @ m.values), direct, rtol=1e-12)


def test_bform_skew_on_random_pairs(disc2, rng):
    worst = 0.0
    for _ in range(100):
        w = random_field(disc2.U, rng)
        F = random_field(disc2.F, rng)
        B = assembly.bform(w, disc2.F)
        scale = l2(w, disc2.mass_u) * l2(F, disc2.mass_f) ** 2
        worst = max(worst, abs(F.values @ (B @ F.values)) / scale)
    assert worst <= 1e-12


def test_bform_zero_velocity(disc2):
    B = assembly.bform(disc2.zero("u"), disc2.F)
    assert B.count_nonzero() == 0


def test_bform_antisymmetric_part_by_direct_quadrature(disc2, rng):
    # b(w; m, F) - b(w; F, m) = (w.F, div m) - (w.m, div F)
    for _ in range(5):
        w, m, F = (random_field(s, rng) for s in (disc2.U, disc2.F, disc2.F))
        B = assembly.bform(w, disc2.F)
        lhs = F.values @ (B @ m.values) - m.values @ (B @ F.values)

        def integrand(lam):
            we, me, fe = evaluate(w, lam), evaluate(m, lam), evaluate(F, lam)
            wF = np.einsum("cqd,cqd->cq", we.value, fe.value)
            wm = np.einsum("cqd,cqd->cq", we.value, me.value)
            return wF * me.derivative - wm * fe.derivative

        assert np.isclose(lhs, quad(disc2.mesh, integrand), rtol=1e-11)


def test_cross_forms_vanish_for_zero_frozen_fields(disc2, rng):
    zu, zm = disc2.zero("u"), disc2.zero("m")
    assert assembly.cross_face_edge(zu, disc2.F, disc2.E).count_nonzero() == 0
    A1, A2 = assembly.quadrilinear_matrices(zm, random_field(disc2.F, rng))
    assert A1.count_nonzero() == 0 and A2.count_nonzero() == 0
    assert not assembly.quadrilinear_load(zm, random_field(disc2.F, rng)).any()
    assert not assembly.convection_load(zu).any()
    assert not assembly.cross_velocity_face_edge_load(zu, random_field(disc2.F, rng), disc2.E).any()
    b, kx = assembly.momentum_coupling_loads(disc2.U, zm, disc2.zero("H"), disc2.zero("k"))
    assert not b.any() and not kx.any()


def test_velocity_cross_k_load_by_direct_quadrature(disc2, rng):
    k, H, v = random_field(disc2.E, rng), random_field(disc2.F, rng), random_field(disc2.U, rng)
    _, kx = assembly.momentum_coupling_loads(disc2.U, disc2.zero("m"), H, k)
    direct = quad(disc2.mesh, lambda lam: np.einsum(
        "cqd,cqd->cq", np.cross(evaluate(v, lam).value, evaluate(k, lam).value),
        evaluate(H, lam).value))
    assert np.isclose(v.values @ kx, direct, rtol=1e-10)
    # repeated vector in the triple product
    assert abs(quad(disc2.mesh, lambda lam: np.einsum(
        "cqd,cqd->cq", np.cross(evaluate(v, lam).value, evaluate(k, lam).value),
        evaluate(k, lam).value))) < 1e-12


def test_velocity_magnetization_load_matches_matrix_and_quadrature(disc2, rng):
    u, m = random_field(disc2.U, rng), random_field(disc2.F, rng)
    vec = assembly.cross_velocity_face_edge_load(u, m, disc2.E)
    T = assembly.cross_face_edge(u, disc2.F, disc2.E)
    assert np.allclose(T.T @ m.values, vec, rtol=1e-10, atol=1e-13)
    zeta = random_field(disc2.E, rng)
    direct = quad(disc2.mesh, lambda lam: np.einsum(
        "cqd,cqd->cq", np.cross(evaluate(u, lam).value, evaluate(m, lam).value),
        evaluate(zeta, lam).value))
    assert np.isclose(zeta.values @ vec, direct, rtol=1e-10)


def test_quadrilinear_linearization_reproduces_explicit_term(disc2, rng):
    m, H = random_field(disc2.F, rng), random_field(disc2.F, rng)
    A1, A2 = assembly.quadrilinear_matrices(m, H)
    explicit = assembly.quadrilinear_load(m, H)
    # at m_j = m_prev both linear pieces equal the explicit vector
    assert np.allclose(A1 @ m.values, explicit, atol=1e-12)
    assert np.allclose(A2 @ m.values, explicit, atol=1e-12)


def test_convection_load_by_direct_quadrature(disc2, rng):
    u = random_field(disc2.U, rng)
    v = random_field(disc2.U, rng)
    vec = assembly.convection_load(u, degree=10)

    def integrand(lam):
        ue, ve = evaluate(u, lam), evaluate(v, lam)
        g = ue.derivative
        curl = np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0],
                         g[..., 1, 0] - g[..., 0, 1]], axis=-1)
        return np.einsum("cqd,cqd->cq", np.cross(ue.value, curl), ve.value)

    assert np.isclose(v.values @ vec, quad(disc2.mesh, integrand, degree=10), rtol=1e-10)


def test_loads(disc2):
    for space in (disc2.U, disc2.P, disc2.F, disc2.E, disc2.W):
        ncomp = 1 if space.kind in (SpaceKind.PRESSURE_P1, SpaceKind.CELL0) else 3
        assert not assembly.load(space, lambda x, t: np.zeros((len(x), ncomp))).any()
    vec = assembly.load(disc2.W, lambda x, t: np.full(len(x), 2.5))
    assert np.allclose(vec, 2.5 * disc2.mesh.volumes)
    with pytest.raises(ValueError):
        assembly.load(disc2.W, lambda x, t: x[:, 0], degree=2)


def test_load_consistent_with_exact_norm():
    import scipy.sparse.linalg as spla

    from ferroflow.stepper import Discretization

    sol = example1()
    t = np.pi / 2
    gaps = []
    for n in (4, 8):
        disc = Discretization.uniform(n)
        b = assembly.load(disc.F, sol.m, t)
        # c = M^-1 b is the L2 projection, so c.b = |P m|^2 -> |m|^2 = 1/8
        c = spla.spsolve(disc.mass_f.tocsc(), b)
        gaps.append(abs(c @ b - 0.125))
    assert gaps[1] < 5e-3
    assert gaps[0] / gaps[1] > 3.5


def test_assembly_is_deterministic(disc2, rng):
    w = random_field(disc2.U, rng)
    B1 = assembly.bform(w, disc2.F)
    B2 = assembly.bform(w, disc2.F)
    assert np.array_equal(B1.indptr, B2.indptr) and np.array_equal(B1.data, B2.data)


def test_dimension_mismatch_rejected(disc2, disc3):
    with pytest.raises(ValueError):
        assembly.div_face_to_cell(disc2.F, disc3.W)
    with pytest.raises(ValueError):
        assembly.stiffness_velocity(disc2.F)
