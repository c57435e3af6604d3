"""Dense linear-algebra helpers and the scalar standard normal CDF/quantile.

Complex vectors and matrices are plain ``numpy`` arrays of dtype
``complex128``; real symmetric matrices are ``float64`` arrays.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, NotPSD, NotSymmetric, IndependenceViolated

SYM_TOL = 1e-10
PSD_REL_TOL = 1e-9


def _scale(S: np.ndarray) -> float:
    return max(float(np.linalg.norm(S)), 1.0)


def check_symmetric(S: np.ndarray, tol: float = SYM_TOL) -> None:
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {S.shape}")
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > tol * _scale(S):
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds tolerance")


def _eig_psd(S, psd_tol):
    S = np.asarray(S, dtype=float)
    check_symmetric(S)
    if psd_tol is None:
        psd_tol = PSD_REL_TOL * float(np.linalg.norm(S))
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    if vals.size and vals[0] < -psd_tol:
        raise NotPSD(f"smallest eigenvalue {vals[0]:.3e} below -{psd_tol:.3e}")
    return np.clip(vals, 0.0, None), vecs


def psd_sqrt(S, psd_tol: float | None = None) -> np.ndarray:
    """Symmetric square root ``F`` with ``F.T @ F == S`` for a real symmetric PSD ``S``.

    Uses a symmetric eigendecomposition, so singular matrices factor
    cleanly. Eigenvalues in ``[-psd_tol, 0)`` are clamped to zero; the
    default tolerance is ``1e-9 * ||S||_F``.
    """
    vals, vecs = _eig_psd(S, psd_tol)
    return (vecs * np.sqrt(vals)) @ vecs.T


def psd_factor(S, psd_tol: float | None = None, rank_tol: float = 1e-13) -> np.ndarray:
    """Compact factor: ``r x n`` matrix ``F`` with ``F.T @ F == S`` and ``r = rank(S)``.

    Eigenvalues below ``rank_tol`` times the largest are treated as zero.
    """
    vals, vecs = _eig_psd(S, psd_tol)
    if vals.size == 0:
        return np.zeros((0, 0))
    keep = vals > rank_tol * max(float(vals[-1]), 1e-300)
    return (vecs[:, keep] * np.sqrt(vals[keep])).T


def is_psd(S, psd_tol: float | None = None) -> bool:
    S = np.asarray(S, dtype=float)
    if psd_tol is None:
        psd_tol = PSD_REL_TOL * float(np.linalg.norm(S))
    return bool(np.linalg.eigvalsh(0.5 * (S + S.T))[0] >= -psd_tol) if S.size else True


def split_blocks(gamma, relation, tol: float = SYM_TOL):
    """Split a real (covariance, relation) pair into real/imaginary blocks.

    Returns ``(Gx, Gy)`` with ``Gx = (G + C)/2`` the covariance of the real
    part and ``Gy = (G - C)/2`` that of the imaginary part.
    """
    gamma = np.atleast_2d(np.asarray(gamma, dtype=complex))
    relation = np.atleast_2d(np.asarray(relation, dtype=complex))
    if gamma.shape != relation.shape:
        raise DomainError(f"shape mismatch {gamma.shape} vs {relation.shape}")
    scale = max(_scale(gamma.real), _scale(relation.real))
    im = max(float(np.max(np.abs(gamma.imag))), float(np.max(np.abs(relation.imag))))
    if im > tol * scale:
        raise IndependenceViolated(f"imaginary part of magnitude {im:.3e} in covariance/relation")
    g, c = gamma.real, relation.real
    gx = 0.5 * (g + c)
    gy = 0.5 * (g - c)
    gx = 0.5 * (gx + gx.T)
    gy = 0.5 * (gy + gy.T)
    for name, blk in (("real", gx), ("imaginary", gy)):
        if not is_psd(blk, PSD_REL_TOL * scale):
            raise NotPSD(f"covariance block of the {name} part is not PSD")
    return gx, gy


def real_embedding(R) -> np.ndarray:
    """Real 2n x 2n matrix ``Q`` with ``w^H R w = x^T Q x`` for ``x = [Re w; Im w]``."""
    R = np.asarray(R, dtype=complex)
    return np.block([[R.real, -R.imag], [R.imag, R.real]])


def to_real(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag])


def from_real(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]


# -- standard normal ---------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation coefficients.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT2PI


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _acklam(u: float) -> float:
    if u < _P_LOW:
        q = math.sqrt(-2.0 * math.log(u))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if u > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-u))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = u - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def normal_quantile(u: float) -> float:
    """Inverse of :func:`normal_cdf` on the open interval (0, 1).

    Rational initial guess refined by one Halley step on the CDF.
    """
    u = float(u)
    if not 0.0 < u < 1.0:
        raise DomainError(f"quantile argument {u!r} outside (0, 1)")
    if u == 0.5:
        return 0.0
    x = _acklam(u)
    # residual in the tail that keeps precision
    if x > 0:
        e = -(0.5 * math.erfc(x / _SQRT2) - (1.0 - u))
    else:
        e = normal_cdf(x) - u
    d = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - d / (1.0 + 0.5 * x * d)


def normal_quantile_deriv(u: float) -> float:
    """d/du of the standard normal quantile, ``1 / pdf(quantile(u))``."""
    return 1.0 / normal_pdf(normal_quantile(u))
