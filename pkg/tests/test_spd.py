import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poissona2 import spd
from conftest import random_spd

A = np.array([[2.0, 1.0], [1.0, 2.0]])
I2 = np.eye(2)


def test_eigen_examples():
    assert spd.min_eig(I2) == pytest.approx(1)
    assert spd.min_eig(A) == pytest.approx(1)
    assert spd.min_eig(np.diag([4.0, 9.0])) == pytest.approx(4)
    assert spd.op_norm(I2) == pytest.approx(1)
    assert spd.op_norm(A) == pytest.approx(3)
    assert spd.op_norm(np.diag([4.0, 9.0])) == pytest.approx(9)


def test_dominates_examples():
    assert spd.dominates(2 * I2, I2)
    assert not spd.dominates(I2, 2 * I2)
    assert spd.dominates(A, I2)


def test_sqrt_examples():
    assert np.allclose(spd.sqrtm2(I2), I2)
    assert np.allclose(spd.sqrtm2(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    root, inv = spd.sqrt_inv(np.diag([4.0, 9.0]))
    assert np.allclose(root, np.diag([2.0, 3.0])) and np.allclose(inv, np.diag([0.25, 1 / 9]))
    root, inv = spd.sqrt_inv(I2)
    assert np.allclose(root, I2) and np.allclose(inv, I2)
    # eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2 with eigenvalues 3 and 1
    u = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    expected = u @ np.diag([np.sqrt(3), 1.0]) @ u.T
    assert np.allclose(spd.sqrtm2(A), expected, atol=1e-14)


def test_comparability_margin_examples():
    assert spd.comparability_margin([I2] * 4) == pytest.approx(0.25)
    assert spd.comparability_margin([I2, np.diag([4.0, 9.0])]) == pytest.approx(0.1)
    assert spd.comparability_margin([np.diag([2.0, 2.0])]) == pytest.approx(1)


def test_convex_comparability_examples(rng):
    mats = random_spd(rng, 4)
    lam = rng.dirichlet(np.ones(4))
    assert spd.check_convex_comparability(mats, lam, lam, 0.01)
    assert spd.check_convex_comparability([I2] * 4, lam, rng.dirichlet(np.ones(4)), 0.5)


def test_convex_comparability_compensated(rng):
    for _ in range(50):
        mats = random_spd(rng, 4)
        eps = rng.uniform(0.01, 1)
        c = spd.comparability_margin(mats)
        lam = rng.dirichlet(np.ones(4)) * 0.5 + 0.125
        step = eps * c * np.array([1, -1, 1, -1]) * 0.5
        mu = lam + step
        assert np.all(mu >= 0)
        # oracle: eigenvalues of (1+eps) D - C by numpy
        C, D = spd.convex_combination(mats, mu), spd.convex_combination(mats, lam)
        assert np.linalg.eigvalsh((1 + eps) * D - C).min() >= -1e-12
        assert spd.check_convex_comparability(mats, lam, mu, eps)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_against_numpy(seed):
    r = np.random.default_rng(seed)
    a, b = random_spd(r, cond=1e3), random_spd(r, cond=1e3)
    ev = np.linalg.eigvalsh(a)
    assert np.allclose(spd.eigvalsh2(a), ev, rtol=1e-12, atol=1e-14 * ev[-1])
    assert np.allclose(spd.inv2(a) @ a, I2, atol=1e-10)
    s = spd.sqrtm2(a)
    assert np.allclose(s @ s, a, rtol=1e-12, atol=1e-12 * ev[-1])
    g = np.linalg.eigvals(np.linalg.solve(a, b)).real.max()
    assert spd.generalized_max_eig(a, b) == pytest.approx(g, rel=1e-9)
    assert spd.dominates(a + b, a)
    # a2 product is at least 1 against the inverse
    assert spd.a2_product(a, spd.inv2(a)) == pytest.approx(1, rel=1e-9)


def test_min_eig_of_convex_combination(rng):
    for _ in range(200):
        mats = random_spd(rng, 4)
        lam = rng.dirichlet(np.ones(4))
        assert spd.min_eig(spd.convex_combination(mats, lam)) >= spd.min_eig(mats).min() - 1e-12


def test_dominates_slack():
    b = I2 + 1e-14 * np.diag([1.0, 0.0])
    assert spd.dominates(I2, b)
    assert not spd.dominates(I2, b, slack=0.0)


def test_spd2_validation():
    with pytest.raises(ValueError):
        spd.Spd2.from_matrix([[1.0, 2.0], [2.0, 1.0]])
    assert spd.Spd2.diag(1, 2).triple() == (1.0, 0.0, 2.0)
