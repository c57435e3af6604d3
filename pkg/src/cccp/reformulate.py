"""Compile complex chance-constrained programs into second-order cone programs.

Decision variables ``z`` are complex; every program below works on the real
vector ``s = [Re z; Im z; 1]``. A chance row ``P[Re(A_i z - b_i) <= 0] >= p_i``
with independent Gaussian ``A_i`` and ``b_i`` is equivalent to::

    Re(mu_A z) - Re(mu_b) + quantile(p_i) * sqrt(var_i(z)) <= 0

which is a second-order cone constraint on ``s`` whenever ``p_i >= 0.5``.

Joint constraints with the Gumbel-type allocation ``p_i = p ** (y_i ** (1/theta))``
are handled by tangent (lower bound) and chord (upper bound) linearisations
of ``y -> quantile(p ** (y ** (1/theta)))``, or by searching a grid of
allocations ``y`` on the simplex.
"""
from __future__ import annotations

import itertools
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cnormal import ComplexNormal, re_inner_stats, re_row_stats, re_variance_scalar
from .errors import DomainError, EmptyGrid, MissingOrthant
from .linalg import normal_cdf, normal_quantile, normal_quantile_deriv, psd_factor, split_blocks
from .socp import ConicProgram, Free, NonNeg, SecondOrder, SolverConfig, SolveResult, solve

TANGENT = "TangentLower"
PIECEWISE = "PiecewiseUpper"


@dataclass
class ChanceRow:
    """One random constraint row ``Re(A z - b) <= 0``.

    ``p`` is the row's own probability level; joint problems ignore it.
    """
    row: ComplexNormal
    rhs: ComplexNormal
    p: float | None = None

    def __post_init__(self):
        if self.rhs.dim != 1:
            raise DomainError("right-hand side must be a scalar distribution")


def _check_level(p, what="p"):
    if not 0.5 <= p < 1.0:
        raise DomainError(f"{what}={p} outside [0.5, 1)")


@dataclass
class IndividualCCCP:
    objective: ComplexNormal
    rows: list
    q1: float = 1.0
    q2: float = 1.0
    nonneg: bool = True

    def __post_init__(self):
        if self.q1 < 0 or self.q2 < 0:
            raise DomainError("objective weights must be nonnegative")
        for i, r in enumerate(self.rows):
            if r.p is None:
                raise DomainError(f"row {i} has no probability level")
            _check_level(r.p, f"rows[{i}].p")
            if r.row.dim != self.n:
                raise DomainError(f"row {i} has dimension {r.row.dim}, expected {self.n}")

    @property
    def n(self) -> int:
        return self.objective.dim

    @property
    def levels(self):
        return [r.p for r in self.rows]


@dataclass
class JointCCCP:
    objective: ComplexNormal
    rows: list
    p: float = 0.95
    theta: float = 1.0
    q1: float = 1.0
    q2: float = 1.0
    nonneg: bool = True

    def __post_init__(self):
        _check_level(self.p)
        if self.theta < 1:
            raise DomainError(f"theta={self.theta} must be >= 1")
        if self.q1 < 0 or self.q2 < 0:
            raise DomainError("objective weights must be nonnegative")
        for i, r in enumerate(self.rows):
            if r.row.dim != self.n:
                raise DomainError(f"row {i} has dimension {r.row.dim}, expected {self.n}")

    @property
    def n(self) -> int:
        return self.objective.dim

    def at_levels(self, levels) -> IndividualCCCP:
        rows = [ChanceRow(r.row, r.rhs, float(lv)) for r, lv in zip(self.rows, levels)]
        return IndividualCCCP(self.objective, rows, self.q1, self.q2, self.nonneg)


# -- quantile composite and its linearisations ---------------------------------

def copula_exponent(p, theta, y):
    """Per-row level ``p ** (y ** (1/theta))``."""
    _check_level(p)
    if theta < 1:
        raise DomainError(f"theta={theta} must be >= 1")
    if not 0.0 < y <= 1.0:
        raise DomainError(f"allocation y={y} outside (0, 1]")
    return p ** (y ** (1.0 / theta))


def composite_quantile(p, theta, y):
    """``quantile(p ** (y ** (1/theta)))``; convex and decreasing in ``y``."""
    return normal_quantile(copula_exponent(p, theta, y))


def tangent_coeffs(p, theta, r):
    """Intercept and slope of the tangent to :func:`composite_quantile` at ``r``."""
    u = copula_exponent(p, theta, r)
    slope = normal_quantile_deriv(u) * u * math.log(p) * r ** (1.0 / theta - 1.0) / theta
    return normal_quantile(u) - slope * r, slope


def piecewise_coeffs(p, theta, r_lo, r_hi):
    """Intercept and slope of the chord of :func:`composite_quantile` over ``[r_lo, r_hi]``."""
    if not 0.0 < r_lo < r_hi <= 1.0:
        raise DomainError(f"need 0 < r_lo < r_hi <= 1, got ({r_lo}, {r_hi})")
    f_lo = composite_quantile(p, theta, r_lo)
    f_hi = composite_quantile(p, theta, r_hi)
    width = r_hi - r_lo
    if width < 1e-9:
        # chord degenerates to the tangent at the midpoint
        a, b = tangent_coeffs(p, theta, 0.5 * (r_lo + r_hi))
        return f_lo - b * r_lo, b
    slope = (f_hi - f_lo) / width
    return (r_hi * f_lo - r_lo * f_hi) / width, slope


@dataclass
class ApproxPoints:
    points: np.ndarray
    intercepts: np.ndarray
    slopes: np.ndarray
    kind: str

    @classmethod
    def build(cls, p, theta, points, kind):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size == 0 or np.any(np.diff(pts) <= 0):
            raise DomainError("approximation points must be strictly increasing")
        if pts[0] <= 0 or pts[-1] > 1:
            raise DomainError("approximation points must lie in (0, 1]")
        if kind == TANGENT:
            coef = [tangent_coeffs(p, theta, r) for r in pts]
        elif kind == PIECEWISE:
            if pts.size < 2:
                raise DomainError("piecewise approximation needs at least two points")
            coef = [piecewise_coeffs(p, theta, lo, hi) for lo, hi in zip(pts[:-1], pts[1:])]
        else:
            raise ValueError(f"unknown approximation kind {kind!r}")
        a, b = np.array(coef).T
        return cls(pts, a, b, kind)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.max(self.intercepts[:, None] + self.slopes[:, None] * y.ravel()[None, :], axis=0).reshape(y.shape)


def uniform_points(N):
    if N < 1:
        raise DomainError("need at least one approximation point")
    return np.arange(1, N + 1) / N


# -- program assembly ----------------------------------------------------------

def _factor(S):
    """Factor ``S = F^T F`` with as many rows as the rank of ``S``."""
    return psd_factor(S)


def objective_blocks(d: ComplexNormal):
    """``K0`` and a factor of ``K1`` for the objective, both acting on ``s``."""
    n = d.dim
    k0 = np.r_[d.mean.real, d.mean.imag, 0.0]
    gx, gy = split_blocks(d.covariance, d.relation)
    K1 = np.zeros((2 * n + 1, 2 * n + 1))
    K1[:n, :n] = gx
    K1[n:2 * n, n:2 * n] = gy
    return k0, K1


def row_blocks(r: ChanceRow):
    """``K2`` (covariance of the row on ``s``) and ``K3`` (negated mean) for a row.

    ``s^T K3 = Re(mu_b) - Re(mu_A z)``.
    """
    n = r.row.dim
    gx, gy = split_blocks(r.row.covariance, r.row.relation)
    K2 = np.zeros((2 * n + 1, 2 * n + 1))
    K2[:n, :n] = gx
    K2[n:2 * n, n:2 * n] = gy
    K2[2 * n, 2 * n] = re_variance_scalar(r.rhs)
    mu = r.row.mean
    K3 = np.r_[-mu.real, mu.imag, r.rhs.mean[0].real]
    return K2, K3


class _Builder:
    """Incremental assembly of a standard-form conic program."""

    def __init__(self):
        self.cones = []
        self.var_map = {}
        self.n = 0
        self.rows = []
        self.rhs = []
        self.cost = {}

    def add(self, name, cone):
        sl = slice(self.n, self.n + cone.dim)
        self.cones.append(cone)
        self.var_map[name] = sl
        self.n += cone.dim
        return np.arange(sl.start, sl.stop)

    def add_group(self, names_cones):
        """Variables that share one cone block (e.g. a second-order head and tail)."""
        total = sum(d for _, d in names_cones)
        start = self.n
        idx = {}
        for name, d in names_cones:
            sl = slice(self.n, self.n + d)
            self.var_map[name] = sl
            idx[name] = np.arange(sl.start, sl.stop)
            self.n += d
        return start, total, idx

    def eq(self, coeffs, rhs):
        """Add ``sum coeff * x[idx] == rhs`` given ``[(idx_array, coeff_array)]``."""
        self.rows.append(coeffs)
        self.rhs.append(rhs)

    def program(self) -> ConicProgram:
        A = np.zeros((len(self.rows), self.n))
        for i, coeffs in enumerate(self.rows):
            for idx, val in coeffs:
                np.add.at(A[i], idx, val)
        c = np.zeros(self.n)
        for idx, val in self.cost.items():
            c[idx] += val
        return ConicProgram(c, A, np.array(self.rhs, dtype=float), self.cones, self.var_map)


def _soc_link(b: _Builder, name, head_idx_coef, head_const, tail_matrix, tail_vars, tail_const=None):
    """Add cone ``(h, u)`` with ``h = coef.x + const`` and ``u = M x[tail_vars]``.

    ``head_idx_coef`` is a list of ``(idx, coef)``; when ``tail_matrix`` has no
    rows the constraint degenerates to ``h >= 0``.
    """
    k = tail_matrix.shape[0]
    if k == 0:
        start, total, idx = b.add_group([(f"{name}_head", 1)])
        b.cones.append(NonNeg(1))
    else:
        start, total, idx = b.add_group([(f"{name}_head", 1), (f"{name}_tail", k)])
        b.cones.append(SecondOrder(1 + k))
    h = idx[f"{name}_head"][0]
    b.eq([(np.array([h]), np.array([1.0]))] + [(i, -c) for i, c in head_idx_coef], head_const)
    for r in range(k):
        u = idx[f"{name}_tail"][r]
        b.eq([(np.array([u]), np.array([1.0])), (tail_vars, -tail_matrix[r])],
             0.0 if tail_const is None else tail_const[r])
    return h


def _base_variables(b: _Builder, n, nonneg):
    if nonneg:
        s = b.add("s", NonNeg(2 * n + 1))
        b.var_map.pop("s")
        b.var_map["re_z"] = slice(s[0], s[0] + n)
        b.var_map["im_z"] = slice(s[0] + n, s[0] + 2 * n)
        b.var_map["hom"] = slice(s[0] + 2 * n, s[0] + 2 * n + 1)
    else:
        z = b.add("z", Free(2 * n))
        b.var_map.pop("z")
        b.var_map["re_z"] = slice(z[0], z[0] + n)
        b.var_map["im_z"] = slice(z[0] + n, z[0] + 2 * n)
        hom = b.add("hom", NonNeg(1))
        s = np.r_[z, hom]
    b.eq([(np.array([s[-1]]), np.array([1.0]))], 1.0)
    return s


def _objective(b: _Builder, d: ComplexNormal, q1, q2, s):
    k0, K1 = objective_blocks(d)
    for j, v in zip(s, q1 * k0):
        b.cost[j] = b.cost.get(j, 0.0) + v
    F1 = _factor(K1)
    if q2 > 0 and F1.shape[0] > 0:
        start, total, idx = b.add_group([("t", 1), ("obj_tail", F1.shape[0])])
        b.cones.append(SecondOrder(total))
        t = idx["t"][0]
        b.cost[t] = b.cost.get(t, 0.0) + q2
        for r in range(F1.shape[0]):
            b.eq([(np.array([idx["obj_tail"][r]]), np.array([1.0])), (s, -F1[r])], 0.0)


def build_individual_socp(prob: IndividualCCCP, levels: Sequence[float] | None = None) -> ConicProgram:
    """Exact conic program for an individual chance-constrained problem.

    ``levels`` overrides the rows' probability levels (used by the grid search).
    """
    levels = prob.levels if levels is None else list(levels)
    n = prob.n
    b = _Builder()
    s = _base_variables(b, n, prob.nonneg)
    _objective(b, prob.objective, prob.q1, prob.q2, s)
    for i, (row, lv) in enumerate(zip(prob.rows, levels)):
        q = normal_quantile(lv)
        K2, K3 = row_blocks(row)
        F2 = _factor(K2) if q > 0 else np.zeros((0, 2 * n + 1))
        _soc_link(b, f"row{i}", [(s, K3)], 0.0, q * F2, s)
    return b.program()


def _decision(prog: ConicProgram, x):
    return prog.value(x, "re_z") + 1j * prog.value(x, "im_z")


def objective_value(prob, z) -> float:
    """``q1 * Re(mu_c^H z) + q2 * std(Re(c^H z))`` evaluated directly."""
    st = re_inner_stats(prob.objective, z)
    return prob.q1 * st.mean + prob.q2 * st.std


def row_margin(row: ChanceRow, level, z) -> float:
    """``mean + quantile(level) * std`` of ``Re(A z - b)``; nonpositive iff the row holds."""
    st = re_row_stats(row.row, row.rhs, z)
    return st.mean + normal_quantile(level) * st.std


def row_probability(row: ChanceRow, z) -> float:
    """Exact ``P[Re(A z - b) <= 0]``."""
    st = re_row_stats(row.row, row.rhs, z)
    if st.variance <= 0:
        return 1.0 if st.mean <= 0 else 0.0
    return normal_cdf(-st.mean / st.std)


@dataclass
class Solution:
    z: np.ndarray | None
    objective: float
    result: SolveResult
    y: np.ndarray | None = None

    @property
    def status(self):
        return self.result.status


def solve_individual(prob: IndividualCCCP, cfg: SolverConfig | None = None, levels=None) -> Solution:
    prog = build_individual_socp(prob, levels)
    res = solve(prog, cfg)
    if not res.ok:
        return Solution(None, math.nan, res)
    z = _decision(prog, res.primal)
    return Solution(z, objective_value(prob, z), res)


# -- joint bounds --------------------------------------------------------------

def _require_orthant(prob):
    if not prob.nonneg:
        raise MissingOrthant("joint bounds need Re z >= 0 and Im z >= 0; use solve_joint_grid")


def build_joint_socp(prob: JointCCCP, pts: ApproxPoints) -> ConicProgram:
    """Conic program for the tangent (lower) or chord (upper) approximation.

    Variables: ``s = [Re z; Im z; 1]``, allocations ``y``, auxiliary ``m``
    (standing in for ``y_i z_j``) and ``r`` (standing in for
    ``quantile_i * z_j``), plus ``rho_i`` standing in for the row quantile
    itself so the right-hand-side variance is scaled consistently.
    """
    _require_orthant(prob)
    n, mrows = prob.n, len(prob.rows)
    b = _Builder()
    s = _base_variables(b, n, True)
    _objective(b, prob.objective, prob.q1, prob.q2, s)
    re_z, im_z = s[:n], s[n:2 * n]
    y = b.add("y", NonNeg(mrows))
    b.eq([(y, np.ones(mrows))], 1.0)
    m_re = b.add("re_m", NonNeg(mrows * n)).reshape(mrows, n)
    m_im = b.add("im_m", NonNeg(mrows * n)).reshape(mrows, n)
    for j in range(n):
        b.eq([(m_re[:, j], np.ones(mrows)), (np.array([re_z[j]]), np.array([-1.0]))], 0.0)
        b.eq([(m_im[:, j], np.ones(mrows)), (np.array([im_z[j]]), np.array([-1.0]))], 0.0)
    r_re = b.add("re_r", Free(mrows * n)).reshape(mrows, n)
    r_im = b.add("im_r", Free(mrows * n)).reshape(mrows, n)
    rho = b.add("rho", NonNeg(mrows))
    L = pts.intercepts.size
    slack = b.add("slack", NonNeg(mrows * (2 * n + 1) * L)).reshape(mrows, 2 * n + 1, L)
    one = np.array([1.0])
    for i in range(mrows):
        for l, (a, sl) in enumerate(zip(pts.intercepts, pts.slopes)):
            for j in range(n):
                # Re r_ij - a Re z_j - b Re m_ij - slack = 0, same for Im
                for k, (rv, zv, mv) in enumerate(((r_re, re_z, m_re), (r_im, im_z, m_im))):
                    b.eq([(np.array([rv[i, j]]), one), (np.array([zv[j]]), np.array([-a])),
                          (np.array([mv[i, j]]), np.array([-sl])),
                          (np.array([slack[i, k * n + j, l]]), np.array([-1.0]))], 0.0)
            # rho_i - b y_i - slack = a
            b.eq([(np.array([rho[i]]), one), (np.array([y[i]]), np.array([-sl])),
                  (np.array([slack[i, 2 * n, l]]), np.array([-1.0]))], a)
    if pts.kind == PIECEWISE:
        # chords over-estimate only on [r_1, 1]
        lo = pts.points[0]
        sy = b.add("y_floor", NonNeg(mrows))
        for i in range(mrows):
            b.eq([(np.array([y[i], sy[i]]), np.array([1.0, -1.0]))], lo)
        sm = b.add("m_floor", NonNeg(2 * mrows * n)).reshape(2, mrows, n)
        for i in range(mrows):
            for j in range(n):
                for k, (mv, zv) in enumerate(((m_re, re_z), (m_im, im_z))):
                    b.eq([(np.array([mv[i, j], zv[j], sm[k, i, j]]), np.array([1.0, -lo, -1.0]))], 0.0)
    for i, row in enumerate(prob.rows):
        K2, K3 = row_blocks(row)
        F2 = _factor(K2)
        tail_vars = np.r_[r_re[i], r_im[i], rho[i]]
        _soc_link(b, f"row{i}", [(s, K3)], 0.0, F2, tail_vars)
    return b.program()


def build_joint_lower_socp(prob: JointCCCP, pts: ApproxPoints | None = None, N: int = 10) -> ConicProgram:
    pts = pts or ApproxPoints.build(prob.p, prob.theta, uniform_points(N), TANGENT)
    if pts.kind != TANGENT:
        raise DomainError("lower bound needs tangent points")
    return build_joint_socp(prob, pts)


def build_joint_upper_socp(prob: JointCCCP, pts: ApproxPoints | None = None, N: int = 10) -> ConicProgram:
    pts = pts or ApproxPoints.build(prob.p, prob.theta, uniform_points(N), PIECEWISE)
    if pts.kind != PIECEWISE:
        raise DomainError("upper bound needs piecewise points")
    return build_joint_socp(prob, pts)


def joint_probability(prob: JointCCCP, z) -> float:
    """Joint satisfaction probability of ``z`` under the Gumbel copula with ``theta``."""
    q = np.array([row_probability(r, z) for r in prob.rows])
    if np.any(q <= 0):
        return 0.0
    t = np.sum((-np.log(q)) ** prob.theta) ** (1.0 / prob.theta)
    return float(math.exp(-t))


def upper_validity(prob: JointCCCP, z, y, tol=1e-7):
    """Check the a-posteriori condition of the chord bound at a solution.

    Returns ``(literal, feasible)``: ``literal`` is
    ``p ** (y_i ** (1/theta)) <= P_i(z)`` for every row at the returned
    allocation; ``feasible`` is whether some allocation on the simplex makes
    ``z`` satisfy the joint constraint (copula probability >= p).
    """
    q = np.array([row_probability(r, z) for r in prob.rows])
    yy = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    need = np.array([prob.p ** (v ** (1.0 / prob.theta)) if v > 0 else 1.0 for v in yy])
    literal = bool(np.all(need <= q + tol))
    feasible = joint_probability(prob, z) >= prob.p - tol
    return literal, feasible


@dataclass
class BoundsResult:
    lower: Solution
    upper: Solution
    gap: float
    upper_valid: bool
    upper_literal: bool = False
    N: int = 0


def _solve_joint_program(prob, prog, cfg) -> Solution:
    res = solve(prog, cfg)
    if not res.ok:
        return Solution(None, math.inf if res.status == "PrimalInfeasible" else math.nan, res)
    z = _decision(prog, res.primal)
    y = prog.value(res.primal, "y").copy()
    return Solution(z, objective_value(prob, z), res, y)


def solve_joint_lower(prob: JointCCCP, N: int = 10, cfg: SolverConfig | None = None) -> Solution:
    """Tangent relaxation; its optimum bounds the joint problem from below."""
    if N < 2:
        raise DomainError("need N >= 2 approximation points")
    pts = ApproxPoints.build(prob.p, prob.theta, uniform_points(N), TANGENT)
    return _solve_joint_program(prob, build_joint_lower_socp(prob, pts), cfg)


def solve_joint_upper(prob: JointCCCP, N: int = 10, cfg: SolverConfig | None = None) -> Solution:
    """Chord restriction; its optimum bounds the joint problem from above."""
    if N < 2:
        raise DomainError("need N >= 2 approximation points")
    pts = ApproxPoints.build(prob.p, prob.theta, uniform_points(N), PIECEWISE)
    return _solve_joint_program(prob, build_joint_upper_socp(prob, pts), cfg)


def solve_joint_bounds(prob: JointCCCP, N: int = 10, cfg: SolverConfig | None = None) -> BoundsResult:
    lower = solve_joint_lower(prob, N, cfg)
    upper = solve_joint_upper(prob, N, cfg)
    lo_val = lower.result.objective if lower.z is not None else lower.objective
    up_val = upper.result.objective if upper.z is not None else upper.objective
    valid = literal = False
    if upper.z is not None:
        literal, valid = upper_validity(prob, upper.z, upper.y)
    return BoundsResult(lower, upper, float(up_val - lo_val), valid, literal, N)


# -- simplex grid search -------------------------------------------------------

def simplex_grid(m: int, step: float):
    """All allocations with entries in ``{step, 2 step, ...}`` summing to one."""
    if not 0 < step <= 0.5 and m > 1:
        raise DomainError(f"grid step {step} outside (0, 0.5]")
    if m == 1:
        return [(1.0,)]
    K = int(round(1.0 / step))
    if abs(K * step - 1.0) > 1e-9:
        raise DomainError(f"grid step {step} does not divide 1")
    if K < m:
        raise EmptyGrid(f"step {step} too coarse for {m} rows")
    return [tuple(k / K for k in c) for c in _compositions(K, m)]


def _compositions(K, m):
    if m == 1:
        yield (K,)
        return
    for first in range(1, K - m + 2):
        for rest in _compositions(K - first, m - 1):
            yield (first,) + rest


@dataclass
class GridSearchResult:
    y: tuple
    objective: float
    payload: object
    evaluated: int


def min_share(level, p, theta):
    """Smallest allocation ``y`` with ``p ** (y ** (1/theta)) <= level``."""
    if level >= 1.0:
        return 0.0
    if level <= p:
        return 1.0 if level >= p - 1e-15 else math.inf
    return (math.log(level) / math.log(p)) ** theta


def simplex_grid_search(m: int, step: float, p: float, theta: float,
                        solve_at: Callable[[list], tuple], prune: bool = True,
                        admissible: Callable[[object], list] | None = None,
                        tol: float = 1e-9) -> GridSearchResult:
    """Minimise ``solve_at(levels)`` over the simplex grid of allocations.

    ``solve_at`` returns ``(objective, payload)`` with ``objective = inf`` when
    infeasible. The optimal value is nonincreasing in every allocation ``y_i``
    (a larger share loosens row ``i``). With ``prune`` the grid is explored by
    branch and bound over boxes of allocations: a box is bounded below by
    solving at its largest shares. ``admissible(payload)`` returns, per row,
    the largest level that the relaxed solution still satisfies; when some
    grid point of the box is admissible it attains the bound and the box is
    closed without further solves. The result matches exhaustive enumeration
    up to ``tol``; ties go to the lexicographically smallest allocation.
    """
    grid = simplex_grid(m, step)
    K = int(round(1.0 / step)) if m > 1 else 1
    lv = lambda ks: [copula_exponent(p, theta, k / K) for k in ks]
    best = [math.inf, None, None]
    count = [0]

    def consider(ks, val, payload):
        if not math.isfinite(val):
            return
        y = tuple(k / K for k in ks)
        if best[1] is None or val < best[0] - tol or (abs(val - best[0]) <= tol and y < best[1]):
            best[:] = [val, y, payload]

    def evaluate(ks):
        count[0] += 1
        return solve_at(lv(ks))

    if not prune or m == 1:
        for y in grid:
            ks = tuple(int(round(v * K)) for v in y)
            val, payload = evaluate(ks)
            consider(ks, val, payload)
        return GridSearchResult(best[1], best[0], best[2], count[0])

    def tighten(lo, hi):
        lo, hi = list(lo), list(hi)
        for _ in range(2):
            for i in range(m):
                hi[i] = min(hi[i], K - (sum(lo) - lo[i]))
                lo[i] = max(lo[i], K - (sum(hi) - hi[i]))
        if any(a > b for a, b in zip(lo, hi)) or sum(lo) > K or sum(hi) < K:
            return None
        return tuple(lo), tuple(hi)

    def admissible_point(lo, hi, payload):
        need = []
        for i, level in enumerate(admissible(payload)):
            share = min_share(level, p, theta)
            if not math.isfinite(share):
                return None
            need.append(max(lo[i], math.ceil(share * K - 1e-6)))
        box = tighten(need, hi)
        if box is None:
            return None
        lo2, hi2 = box
        # lexicographically smallest point of the box
        pt = []
        for i in range(m):
            rest_hi = sum(hi2[i + 1:])
            v = max(lo2[i], K - sum(pt) - rest_hi)
            if v > hi2[i]:
                return None
            pt.append(v)
        return tuple(pt) if sum(pt) == K else None

    memo = {}

    def relax(hi):
        if hi not in memo:
            memo[hi] = evaluate(hi)
        return memo[hi]

    # best-first over boxes keyed by the parent's bound
    heap = [(-math.inf, (1,) * m, (K,) * m)]
    while heap:
        key, lo, hi = heapq.heappop(heap)
        if key > best[0] + tol:
            break
        box = tighten(lo, hi)
        if box is None:
            continue
        lo, hi = box
        if lo == hi:
            val, payload = relax(lo)
            consider(lo, val, payload)
            continue
        bound, payload = relax(hi)
        if not math.isfinite(bound) or bound > best[0] + tol:
            continue
        if admissible is not None:
            pt = admissible_point(lo, hi, payload)
            if pt is not None:
                consider(pt, bound, payload)
                continue
        i = max(range(m), key=lambda k: (hi[k] - lo[k], -k))
        mid = (lo[i] + hi[i]) // 2
        heapq.heappush(heap, (bound, lo[:i] + (mid + 1,) + lo[i + 1:], hi))
        heapq.heappush(heap, (bound, lo, hi[:i] + (mid,) + hi[i + 1:]))
    return GridSearchResult(best[1], best[0], best[2], count[0])


def solve_joint_grid(prob: JointCCCP, grid_step: float = 0.05, cfg: SolverConfig | None = None,
                     prune: bool = True) -> Solution:
    """Best allocation on the simplex grid; each allocation gives an exact SOCP."""
    mrows = len(prob.rows)
    if mrows > 4:
        raise DomainError("grid search supports at most four rows")
    base = prob.at_levels([prob.p] * mrows)

    def solve_at(levels):
        sol = solve_individual(base, cfg, levels)
        if sol.z is None:
            return math.inf, sol
        return sol.result.objective, sol

    def admissible(sol):
        return [row_probability(r, sol.z) for r in prob.rows]

    out = simplex_grid_search(mrows, grid_step, prob.p, prob.theta, solve_at, prune, admissible)
    if out.payload is None:
        sol = solve_individual(base, cfg, [prob.p] * mrows)
        return Solution(None, math.inf, sol.result, None)
    sol = out.payload
    return Solution(sol.z, sol.objective, sol.result, np.array(out.y))
