"""Complex normal distributions N_c(mean, covariance, relation).

A complex random vector ``z = x + iy`` is described by its mean, its
covariance ``G = E[(z-m)(z-m)^H]`` and its relation matrix
``C = E[(z-m)(z-m)^T]``. The real-part statistics used by the chance
constraint reformulations assume real ``G`` and ``C`` (independent real and
imaginary parts); sampling and the augmented representation handle the
general case.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPSD
from .linalg import PSD_REL_TOL, SYM_TOL, is_psd, psd_sqrt, split_blocks


@dataclass(frozen=True)
class ComplexNormal:
    mean: np.ndarray
    covariance: np.ndarray
    relation: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=complex))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=complex))
        rel = np.atleast_2d(np.asarray(self.relation, dtype=complex))
        n = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (n, n) or rel.shape != (n, n):
            raise DimensionMismatch(
                f"mean {mean.shape}, covariance {cov.shape}, relation {rel.shape} do not conform")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "relation", rel)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def circular(cls, mean, covariance):
        cov = np.atleast_2d(np.asarray(covariance, dtype=complex))
        return cls(mean, cov, np.zeros_like(cov))

    @classmethod
    def deterministic(cls, mean):
        mean = np.atleast_1d(np.asarray(mean, dtype=complex))
        n = mean.shape[0]
        return cls(mean, np.zeros((n, n)), np.zeros((n, n)))

    @classmethod
    def from_blocks(cls, mean, cov_re, cov_im):
        """Build from independent real/imaginary covariances ``Gx``, ``Gy``."""
        cov_re = np.atleast_2d(np.asarray(cov_re, dtype=float))
        cov_im = np.atleast_2d(np.asarray(cov_im, dtype=float))
        return cls(mean, cov_re + cov_im, cov_re - cov_im)


@dataclass(frozen=True)
class RealGaussStats:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass
class ValidityReport:
    valid: bool = True
    violations: dict = field(default_factory=dict)

    def add(self, name, magnitude):
        self.valid = False
        self.violations[name] = float(magnitude)


def validate(d: ComplexNormal, tol: float = SYM_TOL) -> ValidityReport:
    """Check Hermitian covariance, symmetric relation and PSD augmented covariance."""
    rep = ValidityReport()
    g, c = d.covariance, d.relation
    scale = max(float(np.linalg.norm(g)), float(np.linalg.norm(c)), 1.0)
    herm = float(np.max(np.abs(g - g.conj().T)))
    if herm > tol * scale:
        rep.add("covariance_not_hermitian", herm)
    sym = float(np.max(np.abs(c - c.T)))
    if sym > tol * scale:
        rep.add("relation_not_symmetric", sym)
    if rep.valid:
        gx, gy, gxy, gyx = _blocks(d)
        for name, blk in (("real_block_not_psd", gx), ("imag_block_not_psd", gy)):
            lo = float(np.linalg.eigvalsh(blk)[0])
            if lo < -PSD_REL_TOL * scale:
                rep.add(name, -lo)
        aug = np.block([[gx, gxy], [gyx, gy]])
        lo = float(np.linalg.eigvalsh(0.5 * (aug + aug.T))[0])
        if lo < -PSD_REL_TOL * scale:
            rep.add("augmented_not_psd", -lo)
    return rep


def _blocks(d: ComplexNormal):
    g, c = d.covariance, d.relation
    gx = 0.5 * (g + c).real
    gy = 0.5 * (g - c).real
    gyx = 0.5 * (g + c).imag
    gxy = 0.5 * (c - g).imag
    return gx, gy, gxy, gyx


def augmented_real(d: ComplexNormal):
    """Mean and covariance of ``[Re z; Im z]``."""
    gx, gy, gxy, gyx = _blocks(d)
    cov = np.block([[gx, gxy], [gyx, gy]])
    cov = 0.5 * (cov + cov.T)
    if not is_psd(cov, PSD_REL_TOL * max(float(np.linalg.norm(cov)), 1.0)):
        raise NotPSD("augmented covariance is not PSD; (covariance, relation) inconsistent")
    return np.concatenate([d.mean.real, d.mean.imag]), cov


def sample(d: ComplexNormal, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` samples as the columns of an ``n x count`` complex array."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mean, cov = augmented_real(d)
    F = psd_sqrt(cov, PSD_REL_TOL * max(float(np.linalg.norm(cov)), 1.0))
    x = mean[:, None] + F.T @ rng.standard_normal((2 * d.dim, count))
    n = d.dim
    return x[:n] + 1j * x[n:]


def affine(d: ComplexNormal, A, b=None) -> ComplexNormal:
    """Distribution of ``A z + b``."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.shape[1] != d.dim:
        raise DimensionMismatch(f"A has {A.shape[1]} columns, distribution has dimension {d.dim}")
    b = np.zeros(A.shape[0], dtype=complex) if b is None else np.atleast_1d(np.asarray(b, dtype=complex))
    if b.shape != (A.shape[0],):
        raise DimensionMismatch(f"offset shape {b.shape} does not match {A.shape[0]} rows")
    return ComplexNormal(A @ d.mean + b, A @ d.covariance @ A.conj().T, A @ d.relation @ A.T)


def quad_variance(d: ComplexNormal, z) -> float:
    """``Re(z)^T Gx Re(z) + Im(z)^T Gy Im(z)`` with the split blocks of ``d``."""
    z = np.asarray(z, dtype=complex)
    gx, gy = split_blocks(d.covariance, d.relation)
    return float(z.real @ gx @ z.real + z.imag @ gy @ z.imag)


def re_inner_stats(d_c: ComplexNormal, z) -> RealGaussStats:
    """Mean and variance of ``Re(c^H z)`` for ``c ~ d_c``."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (d_c.dim,):
        raise DimensionMismatch(f"z shape {z.shape}, distribution dimension {d_c.dim}")
    mean = float(np.real(np.vdot(d_c.mean, z)))
    return RealGaussStats(mean, max(quad_variance(d_c, z), 0.0))


def re_variance_scalar(d_b: ComplexNormal) -> float:
    """Variance of ``Re(b)`` for a scalar ``b``: ``(G_b + Re C_b) / 2``."""
    if d_b.dim != 1:
        raise DimensionMismatch("expected a scalar distribution")
    gx, _ = split_blocks(d_b.covariance, d_b.relation)
    return float(gx[0, 0])


def re_row_stats(d_row: ComplexNormal, d_b: ComplexNormal, z) -> RealGaussStats:
    """Mean and variance of ``Re(A_i z - b_i)`` for independent row ``A_i`` and scalar ``b_i``."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (d_row.dim,):
        raise DimensionMismatch(f"z shape {z.shape}, row dimension {d_row.dim}")
    mean = float(np.real(d_row.mean @ z - d_b.mean[0]))
    var = quad_variance(d_row, z) + re_variance_scalar(d_b)
    return RealGaussStats(mean, max(var, 0.0))
