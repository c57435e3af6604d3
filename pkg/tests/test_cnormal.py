import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cccp.cnormal import (ComplexNormal, affine, augmented_real, re_inner_stats, re_row_stats,
                          re_variance_scalar, sample, validate)
from cccp.errors import DimensionMismatch, IndependenceViolated, NotPSD
from cccp.linalg import psd_factor


def random_real_normal(n, rng, mean_scale=1.0):
    """Complex normal with independent real/imaginary parts (real Gamma, C)."""
    Bx = rng.standard_normal((n, n)) / math.sqrt(n)
    By = rng.standard_normal((n, n)) / math.sqrt(n)
    gx, gy = Bx @ Bx.T, By @ By.T
    mu = mean_scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return ComplexNormal.from_blocks(mu, gx, gy), gx, gy


def test_validate_examples():
    assert validate(ComplexNormal(np.zeros(2), np.eye(2), np.zeros((2, 2)))).valid
    rep = validate(ComplexNormal(np.zeros(2), np.eye(2), 2 * np.eye(2)))
    assert not rep.valid
    assert "imag_block_not_psd" in rep.violations
    assert math.isclose(rep.violations["imag_block_not_psd"], 0.5, rel_tol=1e-12)
    G = np.eye(2, dtype=complex)
    G[0, 1] = 1e-3
    rep = validate(ComplexNormal(np.zeros(2), G, np.zeros((2, 2))))
    assert not rep.valid
    assert math.isclose(rep.violations["covariance_not_hermitian"], 1e-3, rel_tol=1e-9)


def test_validate_relation_symmetry():
    C = np.array([[0.1, 0.05], [0.0, 0.1]])
    rep = validate(ComplexNormal(np.zeros(2), np.eye(2), C))
    assert "relation_not_symmetric" in rep.violations


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        ComplexNormal(np.zeros(2), np.eye(3), np.zeros((3, 3)))


def test_augmented_examples():
    m, cov = augmented_real(ComplexNormal(np.zeros(3), 2 * np.eye(3), np.zeros((3, 3))))
    np.testing.assert_array_equal(m, np.zeros(6))
    np.testing.assert_allclose(cov, np.eye(6))
    _, cov = augmented_real(ComplexNormal([0.0], [[2.0]], [[2.0]]))
    np.testing.assert_allclose(cov, [[2.0, 0.0], [0.0, 0.0]])


def test_augmented_general_cross_blocks():
    # z = x + i y with x, y correlated: build from a real 2n covariance
    rng = np.random.default_rng(5)
    n = 3
    B = rng.standard_normal((2 * n, 2 * n))
    S = B @ B.T
    Sx, Sxy, Syx, Sy = S[:n, :n], S[:n, n:], S[n:, :n], S[n:, n:]
    G = Sx + Sy + 1j * (Syx - Sxy)
    C = Sx - Sy + 1j * (Syx + Sxy)
    d = ComplexNormal(np.zeros(n), G, C)
    _, cov = augmented_real(d)
    np.testing.assert_allclose(cov, S, atol=1e-12)


def test_augmented_inconsistent_pair():
    with pytest.raises(NotPSD):
        augmented_real(ComplexNormal([0.0], [[1.0]], [[2.0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_augmented_psd_random(n, seed):
    d, _, _ = random_real_normal(n, np.random.default_rng(seed))
    _, cov = augmented_real(d)
    assert np.linalg.eigvalsh(cov)[0] >= -1e-12


def test_sample_unit_circular_covariance():
    n = 3
    z = sample(ComplexNormal(np.zeros(n), np.eye(n), np.zeros((n, n))), 1_000_000, 11)
    G = z @ z.conj().T / z.shape[1]
    assert np.max(np.abs(G - np.eye(n))) <= 0.01


def test_sample_reproducible():
    d = ComplexNormal([1 + 1j], [[2.0]], [[0.5]])
    a = sample(d, 1, 42)
    b = sample(d, 1, 42)
    np.testing.assert_array_equal(a, b)


def test_sample_degenerate_imaginary():
    d = ComplexNormal([1.0 + 2.0j, -1.0 - 0.5j], np.diag([1.0, 2.0]), np.diag([1.0, 2.0]))
    z = sample(d, 1000, 1)
    np.testing.assert_allclose(z.imag, np.array([[2.0], [-0.5]]) * np.ones((1, 1000)), atol=1e-12)


def test_sample_moments_general():
    rng = np.random.default_rng(8)
    n = 2
    B = rng.standard_normal((2 * n, 2 * n))
    S = B @ B.T / 4
    Sx, Sxy, Syx, Sy = S[:n, :n], S[:n, n:], S[n:, :n], S[n:, n:]
    G = Sx + Sy + 1j * (Syx - Sxy)
    C = Sx - Sy + 1j * (Syx + Sxy)
    mu = np.array([0.5 - 1j, 2.0 + 0.1j])
    z = sample(ComplexNormal(mu, G, C), 1_000_000, 3)
    zc = z - z.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(z.mean(axis=1), mu, atol=0.01)
    np.testing.assert_allclose(zc @ zc.conj().T / z.shape[1], G, atol=0.02 * np.abs(G).max())
    np.testing.assert_allclose(zc @ zc.T / z.shape[1], C, atol=0.02 * np.abs(G).max())


def test_affine_identity_and_scalar():
    d, _, _ = random_real_normal(3, np.random.default_rng(0))
    e = affine(d, np.eye(3))
    np.testing.assert_array_equal(e.mean, d.mean)
    np.testing.assert_array_equal(e.covariance, d.covariance)
    alpha = 0.7 - 1.3j
    e = affine(d, alpha * np.eye(3))
    np.testing.assert_allclose(e.covariance, abs(alpha) ** 2 * d.covariance, atol=1e-14)
    np.testing.assert_allclose(e.relation, alpha ** 2 * d.relation, atol=1e-14)
    with pytest.raises(DimensionMismatch):
        affine(d, np.eye(2))


def test_affine_monte_carlo():
    rng = np.random.default_rng(1)
    d, _, _ = random_real_normal(3, rng)
    A = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    b = np.array([1.0, -1j])
    z = A @ sample(d, 1_000_000, 7) + b[:, None]
    e = affine(d, A, b)
    zc = z - z.mean(axis=1, keepdims=True)
    scale = np.abs(e.covariance).max()
    np.testing.assert_allclose(zc @ zc.conj().T / z.shape[1], e.covariance, atol=0.02 * scale)
    np.testing.assert_allclose(zc @ zc.T / z.shape[1], e.relation, atol=0.02 * scale)
    # transform-then-sample has the same moments
    w = sample(e, 1_000_000, 9)
    wc = w - w.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(wc @ wc.conj().T / w.shape[1], zc @ zc.conj().T / z.shape[1],
                               atol=0.02 * scale)


def test_inner_stats_examples():
    st_ = re_inner_stats(ComplexNormal([0.3 - 0.2j], [[2.0]], [[0.0]]), np.array([1.0 + 0j]))
    assert math.isclose(st_.mean, 0.3) and math.isclose(st_.variance, 1.0)
    st_ = re_inner_stats(ComplexNormal([0.3 - 0.2j], [[2.0]], [[0.0]]), np.zeros(1))
    assert st_.mean == 0.0 and st_.variance == 0.0


def test_inner_stats_rejects_dependence():
    with pytest.raises(IndependenceViolated):
        re_inner_stats(ComplexNormal([0.0, 0.0], [[1.0, 0.2j], [-0.2j, 1.0]], np.zeros((2, 2))), np.ones(2))


def test_row_stats_examples():
    row = ComplexNormal.deterministic([1.0 + 1j])
    b = ComplexNormal([0.4 + 0.1j], [[1.0]], [[0.0]])
    st_ = re_row_stats(row, b, np.zeros(1))
    assert math.isclose(st_.mean, -0.4) and math.isclose(st_.variance, 0.5)
    st_ = re_row_stats(row, ComplexNormal.deterministic([0.4]), np.array([2.0 - 1j]))
    assert math.isclose(st_.mean, ((1 + 1j) * (2 - 1j)).real - 0.4) and st_.variance == 0.0
    assert math.isclose(re_variance_scalar(ComplexNormal([0], [[3.0]], [[1.0]])), 2.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_inner_variance_nonnegative_and_circular(n, seed):
    rng = np.random.default_rng(seed)
    d, _, _ = random_real_normal(n, rng)
    for _ in range(10):
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert re_inner_stats(d, z).variance >= 0.0
    circ = ComplexNormal.circular(d.mean, d.covariance.real)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = re_inner_stats(circ, z).variance
    assert math.isclose(v, 0.5 * np.vdot(z, circ.covariance @ z).real, rel_tol=1e-12, abs_tol=1e-15)


def test_inner_stats_monte_carlo_n5():
    rng = np.random.default_rng(21)
    d, _, _ = random_real_normal(5, rng)
    z = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    c = sample(d, 1_000_000, 4)
    v = np.real(np.conj(c).T @ z)
    st_ = re_inner_stats(d, z)
    se = math.sqrt(st_.variance / v.size)
    assert abs(v.mean() - st_.mean) <= 5 * se
    assert abs(v.var() / st_.variance - 1.0) <= 0.01


def test_row_stats_monte_carlo():
    rng = np.random.default_rng(22)
    d, _, _ = random_real_normal(4, rng)
    b = ComplexNormal([0.7 - 0.3j], [[0.8]], [[0.3]])
    z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    A = sample(d, 1_000_000, 5)
    bb = sample(b, 1_000_000, 6)[0]
    v = np.real(z @ A - bb)
    st_ = re_row_stats(d, b, z)
    se = math.sqrt(st_.variance / v.size)
    assert abs(v.mean() - st_.mean) <= 5 * se
    assert abs(v.var() / st_.variance - 1.0) <= 0.01


def test_psd_factor_rank():
    v = np.array([1.0, -2.0, 0.5])
    F = psd_factor(np.outer(v, v))
    assert F.shape == (1, 3)
    np.testing.assert_allclose(F.T @ F, np.outer(v, v), atol=1e-14)
