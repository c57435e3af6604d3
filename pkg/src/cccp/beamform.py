"""Robust MVDR beamforming with a chance-constrained distortionless response.

The presumed steering vector ``a`` differs from the actual one by a circular
Gaussian error ``delta ~ CN(0, G_delta)``. The beamformer solves::

    minimize    w^H R w
    subject to  P[ -Re(delta^H w) <= Re(a^H w) - 1 ] >= p,   Im(a^H w) = 0

through its deterministic second-order cone equivalent. Angles are given in
degrees at the configuration boundary and converted to radians once.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DomainError, SingularMatrix
from .linalg import normal_cdf, normal_quantile, psd_factor, real_embedding, to_real, from_real
from .cnormal import ComplexNormal
from .reformulate import ChanceRow, simplex_grid_search
from .validate import estimate_rows
from .socp import ConicProgram, Free, NonNeg, SecondOrder, SolverConfig, solve

log = logging.getLogger(__name__)

METHODS = ("proposed", "smi", "optimal", "joint", "individual")


def db2pow(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def pow2db(x):
    return 10.0 * np.log10(x)


def steering(M: int, d: float, theta: float) -> np.ndarray:
    """ULA response ``exp(i 2 pi d k sin(theta))``, ``k = 0..M-1``; ``theta`` in radians."""
    if M < 1:
        raise DomainError("need at least one sensor")
    if not -math.pi / 2 <= theta <= math.pi / 2:
        raise DomainError(f"angle {theta} rad outside [-pi/2, pi/2]")
    return np.exp(2j * np.pi * d * np.arange(M) * np.sin(theta))


def _deg(rad):
    return round(math.degrees(rad), 12)


@dataclass
class BeamformScenario:
    sensors: int = 8
    spacing: float = 0.5
    doa: float = math.radians(3.0)
    interferers: list = field(default_factory=lambda: [(math.radians(30.0), 20.0),
                                                       (math.radians(50.0), 20.0)])
    noise_power: float = 1.0
    mismatch_variance: float = 0.3 * 8
    snapshots: int = 100
    p: float = 0.95
    runs: int = 200
    seed: int = 0
    snr_db: list = field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0])
    alpha: float | None = None
    constant_mode: str = "derived"
    grid_step: float = 0.05

    def __post_init__(self):
        if self.sensors < 2:
            raise DomainError("need M >= 2 sensors")
        if self.spacing <= 0:
            raise DomainError("element spacing must be positive")
        if not 0.5 <= self.p < 1:
            raise DomainError(f"p={self.p} outside [0.5, 1)")
        if self.snapshots < self.sensors:
            raise DomainError("need at least as many snapshots as sensors")
        if self.constant_mode not in ("derived", "paper"):
            raise DomainError(f"unknown constant_mode {self.constant_mode!r}")

    @classmethod
    def from_config(cls, cfg: dict) -> "BeamformScenario":
        """Build from a config dict with angles in degrees and powers in dB."""
        cfg = dict(cfg)
        kw = {}
        simple = ("sensors", "spacing", "noise_power", "snapshots", "p", "runs", "seed",
                  "alpha", "constant_mode", "grid_step")
        for key in simple:
            if key in cfg:
                kw[key] = cfg.pop(key)
        if "doa_deg" in cfg:
            kw["doa"] = math.radians(cfg.pop("doa_deg"))
        if "interferers" in cfg:
            kw["interferers"] = [(math.radians(it["doa_deg"]), float(it["inr_db"]))
                                 for it in cfg.pop("interferers")]
        if "snr_db" in cfg:
            kw["snr_db"] = [float(v) for v in cfg.pop("snr_db")]
        M = kw.get("sensors", 8)
        if "mismatch_variance" in cfg:
            kw["mismatch_variance"] = float(cfg.pop("mismatch_variance"))
        elif "mismatch_variance_per_sensor" in cfg:
            kw["mismatch_variance"] = float(cfg.pop("mismatch_variance_per_sensor")) * M
        else:
            kw["mismatch_variance"] = 0.3 * M
        cfg.pop("inr_db", None)
        cfg.pop("experiment", None)
        if cfg:
            raise DomainError(f"unknown scenario keys: {sorted(cfg)}")
        return cls(**kw)

    def to_config(self) -> dict:
        return {
            "sensors": self.sensors, "spacing": self.spacing,
            "doa_deg": _deg(self.doa),
            "interferers": [{"doa_deg": _deg(t), "inr_db": inr} for t, inr in self.interferers],
            "noise_power": self.noise_power, "mismatch_variance": self.mismatch_variance,
            "snapshots": self.snapshots, "p": self.p, "runs": self.runs, "seed": self.seed,
            "snr_db": list(self.snr_db), "alpha": self.alpha,
            "constant_mode": self.constant_mode, "grid_step": self.grid_step,
        }

    def with_inr(self, inr_db: float) -> "BeamformScenario":
        kw = asdict(self)
        kw["interferers"] = [(t, float(inr_db)) for t, _ in self.interferers]
        return BeamformScenario(**kw)

    @property
    def presumed(self) -> np.ndarray:
        return steering(self.sensors, self.spacing, self.doa)

    @property
    def mismatch_cov(self) -> np.ndarray:
        return self.mismatch_variance / self.sensors * np.eye(self.sensors)


def interference_noise_cov(sc: BeamformScenario) -> np.ndarray:
    R = sc.noise_power * np.eye(sc.sensors, dtype=complex)
    for theta, inr in sc.interferers:
        a = steering(sc.sensors, sc.spacing, theta)
        R += db2pow(inr) * sc.noise_power * np.outer(a, a.conj())
    return R


def draw_mismatch(sc: BeamformScenario, rng) -> np.ndarray:
    s = math.sqrt(sc.mismatch_variance / sc.sensors / 2.0)
    return s * (rng.standard_normal(sc.sensors) + 1j * rng.standard_normal(sc.sensors))


def true_covariances(sc: BeamformScenario, snr_db: float, delta=None):
    """``(R_s, R_in, actual_steering, signal_power)`` for one mismatch draw ``delta``."""
    a_act = sc.presumed + (0.0 if delta is None else delta)
    sig = float(db2pow(snr_db)) * sc.noise_power
    Rs = sig * np.outer(a_act, a_act.conj())
    return Rs, interference_noise_cov(sc), a_act, sig


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def snapshots(sc: BeamformScenario, snr_db: float, rng, actual=None, K=None) -> np.ndarray:
    """``M x K`` array snapshots: signal along ``actual``, interferers and white noise."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    K = sc.snapshots if K is None else K
    actual = sc.presumed if actual is None else actual
    sig = math.sqrt(float(db2pow(snr_db)) * sc.noise_power)
    X = sig * np.outer(actual, _cn(rng, K))
    for theta, inr in sc.interferers:
        amp = math.sqrt(float(db2pow(inr)) * sc.noise_power)
        X += amp * np.outer(steering(sc.sensors, sc.spacing, theta), _cn(rng, K))
    X += math.sqrt(sc.noise_power) * _cn(rng, (sc.sensors, K))
    return X


def sample_covariance(X) -> np.ndarray:
    X = np.asarray(X)
    R = X @ X.conj().T / X.shape[1]
    return 0.5 * (R + R.conj().T)


def sinr(w, R_in, actual, signal_power) -> float:
    w = np.asarray(w)
    num = signal_power * abs(np.vdot(w, actual)) ** 2
    den = float(np.real(np.vdot(w, R_in @ w)))
    return num / den


def optimal_sinr(R_in, actual, signal_power) -> float:
    return signal_power * float(np.real(np.vdot(actual, _solve(R_in, actual))))


def _ridge(R):
    M = R.shape[0]
    return R + 1e-10 * np.real(np.trace(R)) / M * np.eye(M)


def _solve(R, a):
    # ridge only when the plain solve is singular or ill-conditioned
    try:
        if np.linalg.cond(R) < 1e12:
            return np.linalg.solve(R, a)
        return np.linalg.solve(_ridge(R), a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def smi_mvdr(R, a) -> np.ndarray:
    """Sample-matrix-inversion MVDR weights ``R^-1 a / (a^H R^-1 a)``."""
    Ra = _solve(R, a)
    return Ra / np.vdot(a, Ra)


def mismatch_std_factor(constant_mode: str) -> float:
    """Multiplier of ``||G^(1/2) w||`` giving the protected standard deviation."""
    return 1.0 / math.sqrt(2.0) if constant_mode == "derived" else 0.5


@dataclass
class MismatchRow:
    """Chance row ``Re(g^H w) + Re(d^H w) <= bound`` for random ``d ~ CN(0, cov)``.

    The distortionless row is ``g = -a``, ``bound = -1``.
    """
    direction: np.ndarray
    cov: np.ndarray
    bound: float


def as_chance_row(mr: MismatchRow, level=None) -> ChanceRow:
    """Express ``mr`` as ``Re(A w - b) <= 0`` with ``A = conj(g + d)^T``, ``b = bound``."""
    cov = np.asarray(mr.cov, dtype=complex)
    row = ComplexNormal(np.conj(mr.direction), np.conj(cov), np.zeros_like(cov))
    return ChanceRow(row, ComplexNormal.deterministic([mr.bound]), level)


def validate_rows(w, rows, levels, count=100_000, seed=0):
    """Monte-Carlo satisfaction of each mismatch row at ``w``."""
    crows = [as_chance_row(mr, lv) for mr, lv in zip(rows, levels)]
    ests, _ = estimate_rows(crows, w, count, seed, levels)
    return ests


def build_mvdr_program(R, a, rows, levels, constant_mode="derived") -> ConicProgram:
    """Conic program for ``min w^H R w`` with chance rows and ``Im(a^H w) = 0``.

    Variables: ``w = [Re w; Im w]`` (free), the objective epigraph cone
    ``(t, F w)`` with ``F^T F`` the real embedding of ``R``, one norm cone
    ``(tau, G w)`` per distinct row covariance and a nonnegative slack per row
    ``bound - Re(g^H w) - k q tau``. Rows with equal covariance share ``tau``;
    this is exact because every quantile ``q`` is nonnegative for levels
    of at least one half.
    """
    M = a.shape[0]
    R = _ridge(np.asarray(R, dtype=complex))
    F = psd_factor(real_embedding(R))
    kfac = mismatch_std_factor(constant_mode)
    qs = []
    for lv in levels:
        if not 0.5 <= lv < 1:
            raise DomainError(f"row level {lv} outside [0.5, 1)")
        qs.append(normal_quantile(lv))

    groups = []  # (cov, factor, [row indices])
    for i, mr in enumerate(rows):
        for g in groups:
            if g[0] is mr.cov or np.array_equal(g[0], mr.cov):
                g[2].append(i)
                break
        else:
            groups.append((mr.cov, None, [i]))
    groups = [(cov, psd_factor(real_embedding(cov)), idx) for cov, _, idx in groups]

    cones = [Free(2 * M), SecondOrder(1 + F.shape[0])]
    var_map = {"w": slice(0, 2 * M), "t": slice(2 * M, 2 * M + 1),
               "obj_tail": slice(2 * M + 1, 2 * M + 1 + F.shape[0])}
    n = 2 * M + 1 + F.shape[0]
    tau = {}
    for gi, (_, G, idx) in enumerate(groups):
        if G.shape[0] == 0:
            continue
        var_map[f"norm{gi}"] = slice(n, n + 1)
        var_map[f"norm{gi}_tail"] = slice(n + 1, n + 1 + G.shape[0])
        for i in idx:
            tau[i] = (n, G)
        cones.append(SecondOrder(1 + G.shape[0]))
        n += 1 + G.shape[0]
    var_map["slack"] = slice(n, n + len(rows))
    cones.append(NonNeg(len(rows)))
    slack0 = n
    n += len(rows)

    w = np.arange(2 * M)
    eqs = []
    rhs = []

    def link(start, mat):
        for r in range(mat.shape[0]):
            row = np.zeros(n)
            row[start + r] = 1.0
            row[w] = -mat[r]
            eqs.append(row)
            rhs.append(0.0)

    link(2 * M + 1, F)
    for gi, (_, G, _) in enumerate(groups):
        if G.shape[0]:
            link(var_map[f"norm{gi}"].start + 1, G)
    # Im(a^H w) = Re(a) Im(w) - Im(a) Re(w) = 0
    row = np.zeros(n)
    row[w] = np.r_[-a.imag, a.real]
    eqs.append(row)
    rhs.append(0.0)
    for i, mr in enumerate(rows):
        # slack + Re(g^H w) + k q tau = bound
        row = np.zeros(n)
        row[slack0 + i] = 1.0
        row[w] = to_real(mr.direction)
        if i in tau:
            row[tau[i][0]] = kfac * qs[i]
        eqs.append(row)
        rhs.append(float(mr.bound))
    c = np.zeros(n)
    c[2 * M] = 1.0
    return ConicProgram(c, np.array(eqs), np.array(rhs), cones, var_map)


def distortionless_row(sc: BeamformScenario, a=None) -> MismatchRow:
    a = sc.presumed if a is None else a
    return MismatchRow(-a, sc.mismatch_cov, -1.0)


def interferer_rows(sc: BeamformScenario) -> list:
    return [MismatchRow(steering(sc.sensors, sc.spacing, t), sc.mismatch_cov, sc.alpha)
            for t, _ in sc.interferers]


def row_margins(w, rows, levels, constant_mode="derived"):
    """``Re(g^H w) + k q ||G^(1/2) w|| - bound`` per row; nonpositive when satisfied."""
    kfac = mismatch_std_factor(constant_mode)
    out = []
    for mr, lv in zip(rows, levels):
        std = math.sqrt(max(float(np.real(np.vdot(w, mr.cov @ w))), 0.0))
        out.append(float(np.real(np.vdot(mr.direction, w))) + kfac * normal_quantile(lv) * std - mr.bound)
    return out


def row_levels(w, rows, constant_mode="derived"):
    """Largest probability level at which each row still holds at ``w``."""
    kfac = mismatch_std_factor(constant_mode)
    out = []
    for mr in rows:
        std = kfac * math.sqrt(max(float(np.real(np.vdot(w, mr.cov @ w))), 0.0))
        slack = mr.bound - float(np.real(np.vdot(mr.direction, w)))
        if std <= 0:
            out.append(1.0 if slack >= 0 else 0.0)
        else:
            out.append(normal_cdf(slack / std))
    return out


def _solve_program(R, a, rows, levels, constant_mode, cfg):
    prog = build_mvdr_program(R, a, rows, levels, constant_mode)
    res = solve(prog, cfg)
    if not res.ok:
        return None, res
    return from_real(prog.value(res.primal, "w")), res


def solve_mvdr_cccp(R, a, cov_delta, p, constant_mode="derived", cfg=None):
    """Chance-constrained MVDR weights; returns ``(w, SolveResult)``, ``w`` None on failure."""
    if not 0.5 <= p < 1:
        raise DomainError(f"p={p} outside [0.5, 1)")
    a = np.asarray(a, dtype=complex)
    rows = [MismatchRow(-a, np.asarray(cov_delta, dtype=complex), -1.0)]
    return _solve_program(R, a, rows, [p], constant_mode, cfg)


def solve_mvdr_rows(R, a, rows, levels, constant_mode="derived", cfg=None):
    return _solve_program(R, a, rows, levels, constant_mode, cfg)


def solve_mvdr_joint(R, a, rows, p, theta=1.0, grid_step=0.05, constant_mode="derived", cfg=None):
    """Joint chance rows over sign-free ``w`` via the simplex grid of allocations."""
    def solve_at(levels):
        w, res = _solve_program(R, a, rows, levels, constant_mode, cfg)
        if w is None:
            return math.inf, (None, res)
        return res.objective, (w, res)

    def admissible(payload):
        return row_levels(payload[0], rows, constant_mode)

    out = simplex_grid_search(len(rows), grid_step, p, theta, solve_at, admissible=admissible)
    if out.payload is None:
        return None, None, None
    w, res = out.payload
    return w, np.array(out.y), res


# -- experiments ---------------------------------------------------------------

@dataclass
class MethodStats:
    mean_sinr_db: float
    std_sinr_db: float
    runs: int
    failures: int


@dataclass
class ExperimentResult:
    scenario: dict
    stats: dict  # (snr_db, method) -> MethodStats

    def rows(self):
        for (snr, method), st in self.stats.items():
            yield snr, method, st

    def mean(self, snr, method):
        return self.stats[(snr, method)].mean_sinr_db


def _aggregate(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return math.nan, math.nan
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, math.sqrt(var)


def run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(run)]))


def _collect(sc, per_run, methods):
    stats = {}
    for si, snr in enumerate(sc.snr_db):
        for meth in methods:
            vals = [r[si].get(meth) for r in per_run]
            ok = [v for v in vals if v is not None]
            mean, std = _aggregate(ok)
            stats[(float(snr), meth)] = MethodStats(mean, std, len(ok), len(vals) - len(ok))
    return ExperimentResult(sc.to_config(), stats)


def run_experiment(sc: BeamformScenario, cfg: SolverConfig | None = None) -> ExperimentResult:
    """Output SINR versus SNR for the proposed, SMI and optimal beamformers."""
    per_run = [_fig1_run(sc, run, cfg) for run in range(sc.runs)]
    return _collect(sc, per_run, ("proposed", "smi", "optimal"))


def _fig1_run(sc, run, cfg):
    rng = run_rng(sc.seed, run)
    delta = draw_mismatch(sc, rng)
    a = sc.presumed
    out = []
    for snr in sc.snr_db:
        _, R_in, a_act, sig = true_covariances(sc, snr, delta)
        Rhat = sample_covariance(snapshots(sc, snr, rng, a_act))
        res = {"optimal": float(pow2db(optimal_sinr(R_in, a_act, sig))),
               "smi": float(pow2db(sinr(smi_mvdr(Rhat, a), R_in, a_act, sig)))}
        w, sol = solve_mvdr_cccp(Rhat, a, sc.mismatch_cov, sc.p, sc.constant_mode, cfg)
        if w is None:
            log.warning("run %d snr %s: proposed beamformer failed (%s)", run, snr, sol.status)
            res["proposed"] = None
        else:
            res["proposed"] = float(pow2db(sinr(w, R_in, a_act, sig)))
        out.append(res)
    return out


def run_joint_vs_individual(sc: BeamformScenario, cfg: SolverConfig | None = None) -> ExperimentResult:
    """Individual versus joint treatment of the distortionless and interferer rows."""
    if sc.alpha is None:
        raise DomainError("the joint experiment needs alpha")
    if not sc.interferers:
        raise DomainError("the joint experiment needs at least one interferer")
    per_run = [_fig2_run(sc, run, cfg) for run in range(sc.runs)]
    return _collect(sc, per_run, ("joint", "individual", "optimal"))


def _fig2_run(sc, run, cfg):
    rng = run_rng(sc.seed, run)
    delta = draw_mismatch(sc, rng)
    a = sc.presumed
    rows = [distortionless_row(sc)] + interferer_rows(sc)
    out = []
    for snr in sc.snr_db:
        _, R_in, a_act, sig = true_covariances(sc, snr, delta)
        Rhat = sample_covariance(snapshots(sc, snr, rng, a_act))
        res = {"optimal": float(pow2db(optimal_sinr(R_in, a_act, sig)))}
        w, sol = solve_mvdr_rows(Rhat, a, rows, [sc.p] * len(rows), sc.constant_mode, cfg)
        res["individual"] = None if w is None else float(pow2db(sinr(w, R_in, a_act, sig)))
        wj, _, _ = solve_mvdr_joint(Rhat, a, rows, sc.p, 1.0, sc.grid_step, sc.constant_mode, cfg)
        res["joint"] = None if wj is None else float(pow2db(sinr(wj, R_in, a_act, sig)))
        out.append(res)
    return out
