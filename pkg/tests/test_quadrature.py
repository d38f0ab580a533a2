from math import factorial

import numpy as np
import pytest

from ferroflow.quadrature import interval_rule, tet_rule, triangle_rule


def simplex_monomial(exps):
    # integral of prod x_i^a_i over the unit simplex: prod a_i! / (d + sum a_i)!
    num = np.prod([factorial(a) for a in exps])
    return num / factorial(len(exps) + sum(exps))


def monomials(dim, degree):
    if dim == 0:
        yield ()
        return
    for a in range(degree + 1):
        for rest in monomials(dim - 1, degree - a):
            yield (a, *rest)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 8])
def test_tet_rule_exactness(degree):
    rule = tet_rule(degree)
    assert rule.degree >= degree
    for exps in monomials(3, degree):
        approx = rule.weights @ np.prod(rule.points ** np.array(exps), axis=1)
        assert abs(approx - simplex_monomial(exps)) < 1e-14


@pytest.mark.parametrize("degree", [2, 4, 6])
def test_triangle_rule_exactness(degree):
    rule = triangle_rule(degree)
    for exps in monomials(2, degree):
        approx = rule.weights @ np.prod(rule.points ** np.array(exps), axis=1)
        assert abs(approx - simplex_monomial(exps)) < 1e-14


def test_interval_rule():
    rule = interval_rule(5)
    for k in range(6):
        assert abs(rule.weights @ rule.points[:, 0] ** k - 1.0 / (k + 1)) < 1e-15


def test_barycentric_rows_sum_to_one():
    lam = tet_rule(5).barycentric
    assert lam.shape[1] == 4
    assert np.allclose(lam.sum(axis=1), 1.0)
