"""Second-order cone programs in standard form and an interior-point solver.

The primal/dual pair is::

    minimize    c^T x                 maximize    b^T y
    subject to  A x = b               subject to  A^T y + s = c
                x in K                            s in K*

where ``K`` is a product of free blocks, nonnegative orthants and
second-order cones ``{(t, u) : t >= ||u||}``. The solver runs a primal-dual
path-following method on the homogeneous self-dual embedding with
Nesterov-Todd scaling and Mehrotra's predictor-corrector, so infeasible
problems terminate with a certificate instead of diverging.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch

log = logging.getLogger(__name__)

CONE_KINDS = ("free", "nonneg", "soc")


@dataclass(frozen=True)
class Cone:
    kind: Literal["free", "nonneg", "soc"]
    dim: int

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1 or (self.kind == "soc" and self.dim < 2):
            raise ValueError(f"invalid dimension {self.dim} for {self.kind} cone")


def Free(k):
    return Cone("free", k)


def NonNeg(k):
    return Cone("nonneg", k)


def SecondOrder(d):
    return Cone("soc", d)


@dataclass
class ConicProgram:
    objective: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    cones: list
    var_map: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.shape[0]
        self.eq_matrix = np.asarray(self.eq_matrix, dtype=float).reshape(-1, n)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float).ravel()
        if self.eq_matrix.shape[0] != self.eq_rhs.shape[0]:
            raise DimensionMismatch("eq_matrix rows and eq_rhs length differ")
        if sum(c.dim for c in self.cones) != n:
            raise DimensionMismatch(
                f"cone dimensions sum to {sum(c.dim for c in self.cones)}, expected {n}")
        used = np.zeros(n, dtype=bool)
        for name, sl in self.var_map.items():
            idx = np.arange(n)[sl]
            if used[idx].any():
                raise ValueError(f"variable slice {name!r} overlaps another slice")
            used[idx] = True

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    @property
    def m(self) -> int:
        return self.eq_rhs.shape[0]

    def blocks(self):
        """Yield ``(cone, slice)`` pairs in order."""
        start = 0
        for c in self.cones:
            yield c, slice(start, start + c.dim)
            start += c.dim

    def value(self, x, name):
        return np.asarray(x)[self.var_map[name]]


@dataclass
class SolverConfig:
    max_iterations: int = 100
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    tol_infeas: float = 1e-8
    step_fraction: float = 0.99
    regularization: float = 1e-9
    refinement_steps: int = 3

    def __post_init__(self):
        if min(self.tol_gap, self.tol_feas, self.tol_infeas) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
DUAL_INFEASIBLE = "DualInfeasible"
MAX_ITERATIONS = "MaxIterations"
NUMERICAL_ERROR = "NumericalError"


@dataclass
class SolveResult:
    status: str
    primal: np.ndarray
    dual: np.ndarray
    slack: np.ndarray
    objective: float
    residuals: tuple
    iterations: int
    history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


# -- cone algebra ------------------------------------------------------------

def project(prog: ConicProgram, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the cone of ``prog``."""
    v = np.asarray(v, dtype=float)
    out = v.copy()
    for cone, sl in prog.blocks():
        if cone.kind == "nonneg":
            out[sl] = np.maximum(v[sl], 0.0)
        elif cone.kind == "soc":
            t, u = v[sl][0], v[sl][1:]
            nu = np.linalg.norm(u)
            if nu <= t:
                continue
            if nu <= -t:
                out[sl] = 0.0
            else:
                a = 0.5 * (t + nu)
                out[sl] = np.concatenate([[a], a * u / nu])
    return out


def project_dual(prog: ConicProgram, v) -> np.ndarray:
    """Projection onto the dual cone (free blocks map to zero)."""
    out = project(prog, v)
    for cone, sl in prog.blocks():
        if cone.kind == "free":
            out[sl] = 0.0
    return out


def in_cone(prog: ConicProgram, v, tol: float = 0.0) -> bool:
    v = np.asarray(v, dtype=float)
    for cone, sl in prog.blocks():
        if cone.kind == "nonneg" and np.min(v[sl]) < -tol:
            return False
        if cone.kind == "soc" and v[sl][0] - np.linalg.norm(v[sl][1:]) < -tol:
            return False
    return True


def residuals(prog: ConicProgram, primal, dual, slack=None):
    """Relative (primal feasibility, dual feasibility, duality gap).

    ``dual`` is the equality multiplier ``y``. When ``slack`` is omitted it
    is taken as ``c - A^T y``. Cone violations are measured by distance to
    the (dual) cone.
    """
    x = np.asarray(primal, dtype=float)
    y = np.asarray(dual, dtype=float)
    if x.shape != (prog.n,) or y.shape != (prog.m,):
        raise DimensionMismatch(f"primal {x.shape} / dual {y.shape} vs program ({prog.n}, {prog.m})")
    A, b, c = prog.eq_matrix, prog.eq_rhs, prog.objective
    s = c - A.T @ y if slack is None else np.asarray(slack, dtype=float)
    nb = max(1.0, float(np.linalg.norm(b)))
    nc = max(1.0, float(np.linalg.norm(c)))
    pres = np.hypot(np.linalg.norm(A @ x - b), np.linalg.norm(x - project(prog, x))) / nb
    dres = np.hypot(np.linalg.norm(A.T @ y + s - c), np.linalg.norm(s - project_dual(prog, s))) / nc
    pcost, dcost = float(c @ x), float(b @ y)
    gap = max(abs(pcost - dcost), abs(float(x @ s))) / max(1.0, abs(pcost), abs(dcost))
    return float(pres), float(dres), float(gap)


class _Scaling:
    """Nesterov-Todd scaling for the current iterate.

    Holds, per block, the matrix ``W`` with ``W^{-1} x = W s = lam``.
    """

    def __init__(self, blocks, x, s):
        self.blocks = blocks
        self.parts = []
        lam = np.zeros_like(x)
        for cone, sl in blocks:
            if cone.kind == "free":
                self.parts.append(None)
                continue
            xb, sb = x[sl], s[sl]
            if cone.kind == "nonneg":
                w = np.sqrt(xb / sb)
                self.parts.append(("d", w))
                lam[sl] = np.sqrt(xb * sb)
                continue
            xj = _jnorm(xb)
            sj = _jnorm(sb)
            xn, sn = xb / xj, sb / sj
            gamma = np.sqrt(0.5 * (1.0 + xn @ sn))
            wbar = (xn + _jmul(sn)) / (2.0 * gamma)
            beta = np.sqrt(xj / sj)
            v = wbar.copy()
            v[0] += 1.0
            v /= np.sqrt(2.0 * (wbar[0] + 1.0))
            J = -np.eye(cone.dim)
            J[0, 0] = 1.0
            W = beta * (2.0 * np.outer(v, v) - J)
            Jv = _jmul(v)
            Winv = (2.0 * np.outer(Jv, Jv) - J) / beta
            self.parts.append(("m", W, Winv))
            lam[sl] = W @ sb
        self.lam = lam

    def apply(self, v, inverse=False):
        out = np.zeros_like(v)
        for (cone, sl), part in zip(self.blocks, self.parts):
            if part is None:
                continue
            if part[0] == "d":
                out[sl] = v[sl] / part[1] if inverse else v[sl] * part[1]
            else:
                out[sl] = (part[2] if inverse else part[1]) @ v[sl]
        return out

    def hessian(self, n):
        """Block-diagonal ``W^{-2}`` (zero on free blocks)."""
        H = np.zeros((n, n))
        for (cone, sl), part in zip(self.blocks, self.parts):
            if part is None:
                continue
            if part[0] == "d":
                idx = np.arange(sl.start, sl.stop)
                H[idx, idx] = part[1] ** -2
            else:
                H[sl, sl] = part[2] @ part[2]
        return H


def _jnorm(v):
    return np.sqrt(max(v[0] ** 2 - v[1:] @ v[1:], 1e-300))


def _jmul(v):
    out = -v.copy()
    out[0] = v[0]
    return out


def _jprod(blocks, u, v):
    out = np.zeros_like(u)
    for cone, sl in blocks:
        if cone.kind == "nonneg":
            out[sl] = u[sl] * v[sl]
        elif cone.kind == "soc":
            ub, vb = u[sl], v[sl]
            out[sl.start] = ub @ vb
            out[sl.start + 1:sl.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
    return out


def _jdiv(blocks, lam, d):
    """Solve ``lam o u = d`` for ``u``."""
    out = np.zeros_like(d)
    for cone, sl in blocks:
        if cone.kind == "nonneg":
            out[sl] = d[sl] / lam[sl]
        elif cone.kind == "soc":
            l0, l1 = lam[sl][0], lam[sl][1:]
            d0, d1 = d[sl][0], d[sl][1:]
            r = np.linalg.norm(l1)
            # factored determinant avoids overflow in l0 * l0
            u0 = (l0 * d0 - l1 @ d1) / (l0 - r) / (l0 + r)
            out[sl.start] = u0
            out[sl.start + 1:sl.stop] = (d1 - u0 * l1) / l0
    return out


def _identity(blocks, n):
    e = np.zeros(n)
    for cone, sl in blocks:
        if cone.kind == "nonneg":
            e[sl] = 1.0
        elif cone.kind == "soc":
            e[sl.start] = 1.0
    return e


def _max_step(blocks, x, dx):
    alpha = np.inf
    for cone, sl in blocks:
        if cone.kind == "nonneg":
            neg = dx[sl] < 0
            if neg.any():
                alpha = min(alpha, float(np.min(-x[sl][neg] / dx[sl][neg])))
        elif cone.kind == "soc":
            x0, x1 = x[sl][0], x[sl][1:]
            d0, d1 = dx[sl][0], dx[sl][1:]
            a = d0 * d0 - d1 @ d1
            b = x0 * d0 - x1 @ d1
            c = max(x0 * x0 - x1 @ x1, 0.0)
            disc = b * b - a * c
            if a < 0 or (b < 0 and disc >= 0):
                alpha = min(alpha, c / (-b + np.sqrt(max(disc, 0.0))))
    return alpha


def _shift_interior(blocks, v, e):
    """Shift ``v`` by a multiple of ``e`` so every non-free block is interior."""
    viol = -np.inf
    for cone, sl in blocks:
        if cone.kind == "nonneg":
            viol = max(viol, float(-np.min(v[sl])))
        elif cone.kind == "soc":
            viol = max(viol, float(np.linalg.norm(v[sl][1:]) - v[sl][0]))
    if viol >= 0:
        v = v + (1.0 + viol) * e
    return v


# -- presolve / scaling ------------------------------------------------------

def _presolve(A, b):
    """Drop zero and linearly dependent equality rows.

    Returns ``(keep, inconsistent)`` where ``keep`` indexes the retained rows.
    """
    m = A.shape[0]
    if m == 0:
        return np.arange(0), False
    norms = np.linalg.norm(A, axis=1)
    scale = max(float(norms.max()), 1.0)
    nz = np.flatnonzero(norms > 1e-13 * scale)
    inconsistent = bool(np.any(np.abs(b[norms <= 1e-13 * scale]) > 1e-9 * max(1.0, np.abs(b).max())))
    if nz.size == 0:
        return nz, inconsistent
    An = A[nz] / norms[nz, None]
    _, R, piv = sla.qr(An.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(diag[0], 1e-300)))
    keep = np.sort(nz[piv[:rank]])
    drop = np.setdiff1d(nz, keep)
    if drop.size:
        T, *_ = np.linalg.lstsq(A[keep].T, A[drop].T, rcond=None)
        pred = T.T @ b[keep]
        if np.any(np.abs(pred - b[drop]) > 1e-8 * max(1.0, np.abs(b).max())):
            inconsistent = True
    return keep, inconsistent


def _fixed_coordinates(A, b):
    """Equality rows with a single nonzero entry pin one coordinate."""
    fixed = {}
    for i, row in enumerate(A):
        nzi = np.flatnonzero(row)
        if nzi.size == 1:
            fixed[int(nzi[0])] = float(b[i] / row[nzi[0]])
    return fixed


def _equilibrate(A, blocks, iters=15):
    """Ruiz scaling ``E A D`` with ``D`` constant on each second-order block."""
    m, n = A.shape
    E = np.ones(m)
    D = np.ones(n)
    if m == 0:
        return E, D
    M = A.copy()
    for _ in range(iters):
        rn = np.sqrt(np.max(np.abs(M), axis=1))
        rn[rn < 1e-8] = 1.0
        cn = np.sqrt(np.max(np.abs(M), axis=0))
        cn[cn < 1e-8] = 1.0
        for cone, sl in blocks:
            if cone.kind == "soc":
                cn[sl] = np.exp(np.mean(np.log(cn[sl])))
        M = M / rn[:, None] / cn[None, :]
        E /= rn
        D /= cn
    return E, D


# -- main solver -------------------------------------------------------------

def solve(prog: ConicProgram, cfg: SolverConfig | None = None) -> SolveResult:
    cfg = cfg or SolverConfig()
    A0, b0, c0 = prog.eq_matrix, prog.eq_rhs, prog.objective
    n = prog.n
    blocks = list(prog.blocks())
    info = {"fixed_coordinates": _fixed_coordinates(A0, b0)}

    keep, inconsistent = _presolve(A0, b0)
    info["dropped_rows"] = int(prog.m - keep.size)
    if inconsistent:
        return SolveResult(PRIMAL_INFEASIBLE, np.full(n, np.nan), np.zeros(prog.m), np.zeros(n),
                           np.inf, (np.inf, np.inf, np.inf), 0, info=info)
    A = A0[keep]
    b = b0[keep]
    E, D = _equilibrate(A, blocks)
    A = E[:, None] * A * D[None, :]
    b = E * b
    c = D * c0
    m = A.shape[0]

    res = _hsde(A, b, c, blocks, n, m, cfg)
    status, x, y, s, iters, hist = res

    # undo scaling
    x = D * x
    s = s / D
    y_full = np.zeros(prog.m)
    y_full[keep] = E * y
    if status == OPTIMAL:
        obj = float(c0 @ x)
        resid = residuals(prog, x, y_full, s)
    elif status == PRIMAL_INFEASIBLE:
        obj = np.inf
        resid = (np.inf, np.inf, np.inf)
    elif status == DUAL_INFEASIBLE:
        obj = -np.inf
        resid = (np.inf, np.inf, np.inf)
    else:
        obj = float(c0 @ x)
        resid = residuals(prog, x, y_full, s)
    return SolveResult(status, x, y_full, s, obj, resid, iters, hist, info)


def _hsde(A, b, c, blocks, n, m, cfg):
    nu = sum(1 if cn.kind == "soc" else cn.dim for cn, _ in blocks if cn.kind != "free")
    free = np.zeros(n, dtype=bool)
    for cn, sl in blocks:
        if cn.kind == "free":
            free[sl] = True
    e = _identity(blocks, n)
    delta = cfg.regularization
    nb = max(1.0, float(np.linalg.norm(b)))
    nc = max(1.0, float(np.linalg.norm(c)))

    def kkt(H):
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        K[:n, n:] = A.T
        K[n:, :n] = A
        Kreg = K.copy()
        Kreg[np.arange(n), np.arange(n)] += delta
        Kreg[np.arange(n, n + m), np.arange(n, n + m)] -= delta
        try:
            lu = sla.lu_factor(Kreg, check_finite=False)
        except (ValueError, sla.LinAlgError):
            return None

        def solve_kkt(r):
            sol = sla.lu_solve(lu, r, check_finite=False)
            for _ in range(cfg.refinement_steps):
                err = r - K @ sol
                if np.linalg.norm(err) <= 1e-14 * (1.0 + np.linalg.norm(r)):
                    break
                sol = sol + sla.lu_solve(lu, err, check_finite=False)
            return sol
        return solve_kkt

    # initial point: least-norm primal / dual, shifted into the cone
    solve0 = kkt(np.eye(n))
    if solve0 is None:
        return NUMERICAL_ERROR, np.zeros(n), np.zeros(m), np.zeros(n), 0, []
    x = solve0(np.r_[np.zeros(n), b])[:n]
    x = _shift_interior(blocks, x, e)
    sol = solve0(np.r_[c, np.zeros(m)])
    s = c - A.T @ sol[n:]
    y = sol[n:]
    s[free] = 0.0
    s = _shift_interior(blocks, s, e)
    x[free] = x[free]
    tau = kappa = 1.0

    history = []
    status = MAX_ITERATIONS
    it = 0
    for it in range(cfg.max_iterations + 1):
        rp = A @ x - b * tau
        rd = c * tau - A.T @ y - s
        rg = kappa + c @ x - b @ y
        mu = (x @ s + tau * kappa) / (nu + 1)

        pcost = c @ x / tau
        dcost = b @ y / tau
        pres = np.linalg.norm(rp) / tau / nb
        dres = np.linalg.norm(rd) / tau / nc
        gap = max(abs(pcost - dcost), (x @ s) / tau ** 2) / max(1.0, abs(pcost), abs(dcost))
        history.append({"pcost": float(pcost), "dcost": float(dcost), "pres": float(pres),
                        "dres": float(dres), "gap": float(gap), "mu": float(mu),
                        "tau": float(tau), "kappa": float(kappa)})
        if not np.all(np.isfinite([pcost, dcost, mu])):
            status = NUMERICAL_ERROR
            break
        if pres <= cfg.tol_feas and dres <= cfg.tol_feas and gap <= cfg.tol_gap:
            status = OPTIMAL
            break
        bty = b @ y
        if bty > 0 and kappa > tau:
            if np.linalg.norm(A.T @ y + s) / bty <= cfg.tol_infeas * nc:
                status = PRIMAL_INFEASIBLE
                y, x, s = y / bty, x, s / bty
                break
        ctx = c @ x
        if ctx < 0 and kappa > tau:
            if np.linalg.norm(A @ x) / -ctx <= cfg.tol_infeas * nb:
                status = DUAL_INFEASIBLE
                x = x / -ctx
                break
        if it == cfg.max_iterations:
            break

        scal = _Scaling(blocks, x, s)
        lam = scal.lam
        H = scal.hessian(n)
        solve_kkt = kkt(H)
        if solve_kkt is None:
            status = NUMERICAL_ERROR
            break

        sol1 = solve_kkt(np.r_[-c, b])
        x1, y1 = sol1[:n], -sol1[n:]
        denom = c @ x1 - b @ y1 - kappa / tau

        def direction(sig, dc, dtk):
            u = _jdiv(blocks, lam, dc)
            Wiu = scal.apply(u, inverse=True)
            r1 = -(1.0 - sig) * rp
            r2 = -(1.0 - sig) * rd + Wiu
            sol2 = solve_kkt(np.r_[r2, r1])
            x2, y2 = sol2[:n], -sol2[n:]
            dtau = (-(1.0 - sig) * rg - dtk / tau - c @ x2 + b @ y2) / denom
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            ds = Wiu - H @ dx
            ds[free] = 0.0
            dkappa = (dtk - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        def step_length(dx, ds, dtau, dkappa):
            a = min(_max_step(blocks, x, dx), _max_step(blocks, s, ds))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        dc_aff = -_jprod(blocks, lam, lam)
        dxa, dya, dsa, dta, dka = direction(0.0, dc_aff, -tau * kappa)
        alpha_aff = min(1.0, step_length(dxa, dsa, dta, dka))
        sigma = float(np.clip((1.0 - alpha_aff) ** 3, 0.0, 1.0))

        # corrector
        corr = _jprod(blocks, scal.apply(dxa, inverse=True), scal.apply(dsa))
        dc = -_jprod(blocks, lam, lam) + sigma * mu * e - corr
        dtk = -tau * kappa + sigma * mu - dta * dka
        dx, dy, ds, dtau, dkappa = direction(sigma, dc, dtk)
        alpha = min(1.0, cfg.step_fraction * step_length(dx, ds, dtau, dkappa))
        if not np.isfinite(alpha) or alpha < 1e-12:
            status = NUMERICAL_ERROR
            break

        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status in (OPTIMAL, MAX_ITERATIONS, NUMERICAL_ERROR):
        return status, x / tau, y / tau, s / tau, it, history
    return status, x, y, s, it, history


def write_dump(prog: ConicProgram, path_or_file, label: str = "") -> None:
    """Write a plain-text dump of ``prog`` (MatrixMarket coordinate blocks)."""
    from scipy.io import mmwrite

    buf = io.StringIO()
    buf.write(f"% conic program {label}\n")
    buf.write("% cones: " + " ".join(f"{c.kind}:{c.dim}" for c in prog.cones) + "\n")
    for name, sl in prog.var_map.items():
        idx = np.arange(prog.n)[sl]
        lo, hi = (int(idx[0]), int(idx[-1]) + 1) if idx.size else (0, 0)
        buf.write(f"% var {name} {lo} {hi}\n")
    for title, arr in (("A", prog.eq_matrix), ("b", prog.eq_rhs[:, None]), ("c", prog.objective[:, None])):
        buf.write(f"% block {title}\n")
        sub = io.BytesIO()
        mmwrite(sub, np.asarray(arr), precision=17)
        buf.write(sub.getvalue().decode())
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)
