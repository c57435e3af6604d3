"""Monte-Carlo checks of chance-constraint satisfaction at a candidate solution.

Samples are drawn in fixed-size blocks. Block ``k`` uses the generator
``default_rng(seed + k)``, and only integer hit counts are accumulated, so the
estimates do not depend on how blocks are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cnormal import sample
from .errors import DomainError, UnsupportedDependence

BLOCK = 1 << 16
Z95 = 1.96
MIN_COUNT = 1000
MIN_OBJECTIVE_COUNT = 10_000


@dataclass
class Estimate:
    probability: float
    half_width: float
    target: float | None = None

    @property
    def passed(self) -> bool:
        if self.target is None:
            return True
        return self.probability >= self.target - 3.0 * self.half_width

    def to_dict(self) -> dict:
        return {"probability": self.probability, "half_width": self.half_width,
                "target": self.target, "passed": self.passed}


@dataclass
class ValidationReport:
    rows: list
    count: int
    seed: int
    joint: Estimate | None = None

    @property
    def passed(self) -> bool:
        ok = all(r.passed for r in self.rows)
        return ok and (self.joint is None or self.joint.passed)

    def to_dict(self) -> dict:
        return {"count": self.count, "seed": self.seed, "passed": self.passed,
                "rows": [r.to_dict() for r in self.rows],
                "joint": None if self.joint is None else self.joint.to_dict()}


def half_width(p_hat: float, count: int) -> float:
    """95% normal-approximation half-width ``1.96 sqrt(p(1-p)/count)``."""
    return Z95 * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / count)


def _estimate(hits: int, count: int, target=None) -> Estimate:
    p_hat = hits / count
    return Estimate(p_hat, half_width(p_hat, count), target)


def _blocks(count):
    k = 0
    done = 0
    while done < count:
        size = min(BLOCK, count - done)
        yield k, size
        k += 1
        done += size


def _row_values(row, z, size, rng):
    """Samples of ``Re(A z - b)`` for one chance row."""
    A = sample(row.row, size, rng)  # n x size
    b = sample(row.rhs, size, rng)[0]
    return np.real(z @ A - b)


def _check_inputs(z, n, count, minimum=MIN_COUNT):
    z = np.asarray(z, dtype=complex)
    if z.shape != (n,):
        raise DomainError(f"solution has shape {z.shape}, problem dimension is {n}")
    if not np.all(np.isfinite(z)):
        raise DomainError("solution has non-finite entries")
    if count < minimum:
        raise DomainError(f"need at least {minimum} samples, got {count}")
    return z


def estimate_rows(rows, z, count: int, seed: int, targets=None, joint_target=None):
    """Empirical satisfaction of ``Re(A_i z - b_i) <= 0`` for each row and jointly.

    Rows are sampled independently of each other. Returns ``(row estimates,
    joint estimate)``.
    """
    targets = [None] * len(rows) if targets is None else list(targets)
    n = rows[0].row.dim if rows else 0
    z = _check_inputs(z, n, count)
    hits = [0] * len(rows)
    joint_hits = 0
    for k, size in _blocks(count):
        rng = np.random.default_rng(int(seed) + k)
        ok_all = np.ones(size, dtype=bool)
        for i, row in enumerate(rows):
            ok = _row_values(row, z, size, rng) <= 0.0
            hits[i] += int(np.count_nonzero(ok))
            ok_all &= ok
        joint_hits += int(np.count_nonzero(ok_all))
    ests = [_estimate(h, count, t) for h, t in zip(hits, targets)]
    return ests, _estimate(joint_hits, count, joint_target)


def estimate_individual(prob, z, count: int, seed: int) -> ValidationReport:
    """Per-row empirical probabilities against each row's level."""
    ests, _ = estimate_rows(prob.rows, z, count, seed, [r.p for r in prob.rows])
    return ValidationReport(ests, int(count), int(seed))


def estimate_joint(prob, z, count: int, seed: int) -> ValidationReport:
    """Joint empirical probability (conjunction of rows) plus the marginals.

    Only independent rows (``theta == 1``) can be sampled.
    """
    if prob.theta != 1:
        raise UnsupportedDependence(
            f"joint validation samples independent rows only; theta={prob.theta}")
    ests, joint = estimate_rows(prob.rows, z, count, seed, joint_target=prob.p)
    return ValidationReport(ests, int(count), int(seed), joint)


def objective_stats(prob, z, count: int, seed: int):
    """Empirical mean and variance of ``Re(c^H z)`` for ``c`` from the objective law."""
    z = _check_inputs(z, prob.n, count, MIN_OBJECTIVE_COUNT)
    values = []
    for k, size in _blocks(count):
        rng = np.random.default_rng(int(seed) + k)
        c = sample(prob.objective, size, rng)
        values.append(np.real(np.conj(c).T @ z))
    v = np.concatenate(values)
    total = math.fsum(v)
    mean = total / count
    var = math.fsum((v - mean) ** 2) / (count - 1)
    return mean, var
