import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cccp.errors import DomainError, IndependenceViolated, NotPSD, NotSymmetric
from cccp.linalg import (from_real, normal_cdf, normal_quantile, normal_quantile_deriv, psd_sqrt,
                         real_embedding, split_blocks, to_real)

from oracles import quantile_bisect


def test_psd_sqrt_identity():
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3), atol=1e-15)


def test_psd_sqrt_diagonal():
    F = psd_sqrt(np.diag([4.0, 1.0]))
    np.testing.assert_allclose(np.abs(F), np.diag([2.0, 1.0]), atol=1e-15)


def test_psd_sqrt_reconstructs_random_gram():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((5, 5))
    S = B.T @ B
    F = psd_sqrt(S)
    assert np.linalg.norm(F.T @ F - S) <= 1e-10 * np.linalg.norm(S)


def test_psd_sqrt_singular_and_clamped():
    v = np.array([1.0, 2.0, -1.0])
    S = np.outer(v, v)
    S[0, 0] -= 1e-13  # tiny negative eigenvalue
    F = psd_sqrt(S)
    assert np.linalg.norm(F.T @ F - S) <= 1e-10 * np.linalg.norm(S)


def test_psd_sqrt_errors():
    with pytest.raises(NotPSD):
        psd_sqrt(np.diag([1.0, -0.1]))
    with pytest.raises(NotSymmetric):
        psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(NotSymmetric):
        psd_sqrt(np.ones((2, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_psd_sqrt_idempotent_under_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((rng.integers(1, n + 1), n))
    S = B.T @ B
    S2 = psd_sqrt(S).T @ psd_sqrt(S)
    F2 = psd_sqrt(S2)
    assert np.linalg.norm(F2.T @ F2 - S2) <= 1e-10 * max(np.linalg.norm(S2), 1.0)


def test_split_blocks_examples():
    gx, gy = split_blocks(2 * np.eye(2), np.zeros((2, 2)))
    np.testing.assert_allclose(gx, np.eye(2))
    np.testing.assert_allclose(gy, np.eye(2))
    gx, gy = split_blocks([[3.0]], [[1.0]])
    assert gx[0, 0] == 2.0 and gy[0, 0] == 1.0
    gx, gy = split_blocks(np.eye(3), np.eye(3))
    np.testing.assert_allclose(gx, np.eye(3))
    np.testing.assert_allclose(gy, np.zeros((3, 3)))


def test_split_blocks_errors():
    with pytest.raises(IndependenceViolated):
        split_blocks(np.array([[1.0, 0.1j], [-0.1j, 1.0]]), np.zeros((2, 2)))
    with pytest.raises(IndependenceViolated):
        split_blocks(np.eye(2), 0.2j * np.eye(2))
    with pytest.raises(NotPSD):
        split_blocks(np.eye(2), 2 * np.eye(2))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_split_blocks_recombine(n, seed):
    rng = np.random.default_rng(seed)
    Bx = rng.standard_normal((n, n))
    By = rng.standard_normal((n, n))
    gx0, gy0 = Bx @ Bx.T, By @ By.T
    G, C = gx0 + gy0, gx0 - gy0
    gx, gy = split_blocks(G, C)
    np.testing.assert_allclose(gx + gy, G, atol=1e-12)
    np.testing.assert_allclose(gx - gy, C, atol=1e-12)
    np.testing.assert_array_equal(gx, gx.T)
    np.testing.assert_array_equal(gy, gy.T)


def test_real_embedding_quadratic_form():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    R = B @ B.conj().T
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    x = to_real(w)
    assert math.isclose(x @ real_embedding(R) @ x, np.vdot(w, R @ w).real, rel_tol=1e-12)
    np.testing.assert_array_equal(from_real(x), w)


def test_quantile_examples():
    assert normal_quantile(0.5) == 0.0
    assert normal_cdf(0.0) == 0.5
    assert abs(normal_quantile(0.95) - quantile_bisect(0.95)) <= 1e-12
    assert abs(normal_quantile(0.95) - 1.6448536269514722) <= 1e-12


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_quantile_domain(u):
    with pytest.raises(DomainError):
        normal_quantile(u)


def test_quantile_against_bisection_oracle():
    us = np.concatenate([np.logspace(-8, -1, 40), np.linspace(0.1, 0.9, 41), 1 - np.logspace(-8, -1, 40)])
    for u in us:
        assert abs(normal_quantile(u) - quantile_bisect(u)) <= 1e-9 * max(1.0, abs(quantile_bisect(u)))


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-8, 1 - 1e-8))
def test_cdf_of_quantile(u):
    assert abs(normal_cdf(normal_quantile(u)) - u) <= 1e-12


def test_quantile_of_cdf_on_pm6():
    xs = np.linspace(-6.0, 6.0, 1201)
    err = np.array([abs(normal_quantile(normal_cdf(x)) - x) for x in xs])
    bad = xs[err > 1e-10]
    assert bad.size == 0, f"{bad.size} points exceed 1e-10, first at x={bad[0]:.2f}, max err {err.max():.2e}"


def test_quantile_of_cdf_left_tail_and_center():
    # cdf(x) keeps full relative precision here
    for x in np.linspace(-6.0, 4.0, 1001):
        assert abs(normal_quantile(normal_cdf(x)) - x) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_monotone(u, v):
    if u < v:
        assert normal_quantile(u) <= normal_quantile(v)
        assert normal_cdf(normal_quantile(u)) <= normal_cdf(normal_quantile(v))


def test_quantile_derivative_matches_finite_difference():
    for u in (0.6, 0.9, 0.99):
        h = 1e-6
        fd = (normal_quantile(u + h) - normal_quantile(u - h)) / (2 * h)
        assert math.isclose(normal_quantile_deriv(u), fd, rel_tol=1e-6)
