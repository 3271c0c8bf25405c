"""HOEG+ (l2), lp-HOEG+, lp-HOMVI and the anchored EAG baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, SubproblemError
from .geometry import PotentialSpec, bregman, dual_norm, lp_norm
from .oracle import OperatorOracle, estimate_lipschitz
from .subproblems import (
    SubproblemSettings,
    mirror_step,
    solve_lp_taylor_step,
    solve_phi_root,
    solve_psi_root,
)


class Algorithm(str, Enum):
    HOEG_PLUS_L2 = "hoeg_plus_l2"
    LP_HOEG_PLUS = "lp_hoeg_plus"
    LP_HOMVI = "lp_homvi"
    EAG = "eag"


def nu_default(algorithm, s: int, p: float = 2.0) -> float:
    """Regularisation exponent nu used by each algorithm's initialisation."""
    algorithm = Algorithm(algorithm)
    if s < 1:
        raise ConfigError("order s must be >= 1")
    if algorithm is Algorithm.HOEG_PLUS_L2:
        if s == 1:
            return 0.656
        return math.log2(s + 0.5 + 1.0 / (5 * s) - 1.0 / (4 * s**3))
    if algorithm is Algorithm.LP_HOEG_PLUS:
        if not 2 <= p <= s + 1:
            raise ConfigError(f"lp_hoeg_plus requires s+1 >= p >= 2 (got s={s}, p={p})")
        return s / (s + 1) * math.log2(s * (s + 2) * 2 ** (1 - 1 / s) / (s + 1) ** (1 + 1 / s))
    if algorithm is Algorithm.LP_HOMVI:
        if p < 2:
            raise ConfigError("lp_homvi requires p >= 2")
        return (s + 1) * (p + 1) / p - math.log2(p) + (p - 1) / p * math.log2(s)
    return 0.0


@dataclass
class SolverConfig:
    algorithm: Algorithm
    s: int = 1
    p: float = 2.0
    L: float | None = None
    nu: float | None = None
    K: int = 1000
    target_eps: float = 0.0
    subproblem: SubproblemSettings = field(default_factory=SubproblemSettings)
    seed: int = 0
    lambda_rule: str = "box"
    safety_factor: float = 1.5

    def __post_init__(self):
        try:
            self.algorithm = Algorithm(self.algorithm)
        except ValueError:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}") from None
        self.p = float(self.p)
        if int(self.s) != self.s or self.s < 1:
            raise ConfigError("order s must be a positive integer")
        self.s = int(self.s)
        if self.K < 0:
            raise ConfigError("iteration budget K must be >= 0")
        if self.L is not None and not self.L > 0:
            raise ConfigError(f"L must be positive (got {self.L})")
        if self.lambda_rule not in ("box", "proof"):
            raise ConfigError("lambda_rule must be 'box' or 'proof'")
        alg = self.algorithm
        if alg is Algorithm.LP_HOEG_PLUS and not 2 <= self.p <= self.s + 1:
            raise ConfigError(f"lp_hoeg_plus requires s+1 >= p >= 2 (got s={self.s}, p={self.p:g})")
        if alg is Algorithm.HOEG_PLUS_L2 and self.p != 2:
            raise ConfigError("hoeg_plus_l2 fixes p = 2")
        if alg is Algorithm.EAG and (self.s != 1 or self.p != 2):
            raise ConfigError("eag fixes s = 1 and p = 2")
        if alg is Algorithm.LP_HOMVI and self.p < 2:
            raise ConfigError("lp_homvi requires p >= 2")
        if self.nu is None:
            self.nu = nu_default(alg, self.s, self.p)


@dataclass
class IterationRecord:
    k: int
    z: np.ndarray
    z_half: np.ndarray
    lam: float
    norm_half: float
    norm_full: float
    displacement: float
    average: np.ndarray | None = None


@dataclass
class Trace:
    algorithm: str
    config: SolverConfig
    L: float
    records: list = field(default_factory=list)
    output: np.ndarray | None = None
    output_rule: str = "best_halfstep_norm"
    stop_reason: str = "budget"
    final_point: np.ndarray | None = None
    outside_box: int = 0
    header: dict = field(default_factory=dict)

    @property
    def half_norms(self):
        return np.array([r.norm_half for r in self.records])

    @property
    def best_norm(self) -> float:
        return float(self.half_norms.min()) if self.records else math.nan

    @property
    def iterations(self) -> int:
        return len(self.records)

    def running_min(self):
        return np.minimum.accumulate(self.half_norms)


def resolve_L(oracle: OperatorOracle, z0, config: SolverConfig, samples: int = 4000, box=None) -> float:
    """Config L, else a sampled estimate times the safety factor.

    The estimate uses ``box`` when given, otherwise a box around z0.
    """
    if config.L is not None:
        return float(config.L)
    if oracle.is_zero_order(config.s):
        raise ConfigError(f"L_{config.s} of {oracle.name or 'this operator'} is zero; supply L explicitly")
    z0 = np.asarray(z0, dtype=float)
    if box is None:
        half = 0.5 * (4.0 * float(np.max(np.abs(z0))) + 4.0)
        box = (z0 - half, z0 + half)
    est = estimate_lipschitz(oracle, config.s, config.p, box, samples, config.seed)
    L = est * config.safety_factor
    scale = max(1.0, dual_norm(oracle.eval(z0), config.p))
    if not L > 1e-10 * scale:
        raise ConfigError(f"estimated L_{config.s} is numerically zero; supply L explicitly")
    return L


def _outside(z, box):
    if box is None:
        return False
    lo, hi = box
    return bool(np.any(z < lo) or np.any(z > hi))


def _finish(trace: Trace, z):
    trace.final_point = np.asarray(z, dtype=float)
    if trace.output_rule == "best_halfstep_norm":
        if trace.records:
            best = int(np.argmin(trace.half_norms))
            trace.output = trace.records[best].z_half.copy()
        else:
            trace.output = trace.final_point.copy()
    return trace


def lp_hoeg_lambda(s, p, nu, displacement, rule="box"):
    """Step weight of lp-HOEG+; 'proof' selects the variant used in the analysis."""
    e = s + 1 - p
    if rule == "box":
        return (2.0 ** -(p + 1)) ** (s / (s + 1)) * ((s + 2) / p) ** (-e / (s + 1)) * displacement ** (-e)
    m_p = 2.0 ** -(p + 1)
    return (m_p ** ((s + 1) / s) / 2.0 ** (nu * (p - 1) / s)
            * (((s + 1) * 2.0**nu + 1) / p) ** (-e / s) * displacement ** (-e))


def _run_extragradient_type(oracle, z0, config, box, half_step, weight, geometry_p, displacement_fn):
    L = resolve_L(oracle, z0, config, box=box)
    s, nu = config.s, config.nu
    trace = Trace(config.algorithm.value, config, L,
                  header={"L": L, "nu": nu, "s": s, "p": geometry_p})
    z = np.asarray(z0, dtype=float).copy()
    fact = math.factorial(s)
    for k in range(config.K + 1):
        fz = oracle.eval(z)
        try:
            z_half = half_step(z, L)
        except SubproblemError as err:
            err.iteration = k
            raise
        disp = displacement_fn(z_half, z)
        if disp == 0.0:
            trace.stop_reason = "stationary"
            break
        lam = weight(disp)
        f_half = oracle.eval(z_half)
        norm_half = dual_norm(f_half, geometry_p) if np.all(np.isfinite(f_half)) else math.inf
        z_next = mirror_step(z, f_half, fact * lam / L, geometry_p)
        trace.records.append(IterationRecord(k, z, z_half, lam, norm_half,
                                             dual_norm(fz, geometry_p), lp_norm(z_half - z, geometry_p)))
        trace.outside_box += _outside(z_half, box)
        z = z_next
        if not np.all(np.isfinite(z)) or not math.isfinite(norm_half):
            trace.stop_reason = "diverged"
            break
        if norm_half <= config.target_eps:
            trace.stop_reason = "target"
            break
    return trace, z


def run_hoeg_plus_l2(oracle: OperatorOracle, z0, config: SolverConfig, box=None) -> Trace:
    """HOEG+: l2 higher-order half step, then an l2 extragradient-type step."""
    if config.algorithm is not Algorithm.HOEG_PLUS_L2:
        config = replace(config, algorithm=Algorithm.HOEG_PLUS_L2, nu=None)
    s, nu = config.s, config.nu
    trace, z = _run_extragradient_type(
        oracle, z0, config, box,
        lambda z, L: solve_phi_root(oracle, z, s, nu, L, config.subproblem),
        lambda disp: 2.0**-nu * disp ** (1 - s),
        2.0,
        lambda a, b: lp_norm(a - b, 2.0),
    )
    return _finish(trace, z)


def run_lp_hoeg_plus(oracle: OperatorOracle, z0, config: SolverConfig, box=None) -> Trace:
    if config.algorithm is not Algorithm.LP_HOEG_PLUS:
        config = replace(config, algorithm=Algorithm.LP_HOEG_PLUS, nu=None)
    s, p, nu = config.s, config.p, config.nu
    trace, z = _run_extragradient_type(
        oracle, z0, config, box,
        lambda z, L: solve_lp_taylor_step(oracle, z, s, p, nu, L, config.subproblem),
        lambda disp: lp_hoeg_lambda(s, p, nu, disp, config.lambda_rule),
        p,
        lambda a, b: lp_norm(a - b, p),
    )
    trace.header["lambda_rule"] = config.lambda_rule
    return _finish(trace, z)


def run_lp_homvi(oracle: OperatorOracle, z0, config: SolverConfig, box=None) -> Trace:
    """lp-HOMVI; output is the lambda-weighted average of the half-step iterates."""
    if config.algorithm is not Algorithm.LP_HOMVI:
        config = replace(config, algorithm=Algorithm.LP_HOMVI, nu=None)
    s, p, nu = config.s, config.p, config.nu
    h = PotentialSpec("lp_pow_p", p)
    trace, z = _run_extragradient_type(
        oracle, z0, config, box,
        lambda z, L: solve_psi_root(oracle, z, s, p, nu, L, config.subproblem),
        lambda om: 2.0**-nu * om ** (-(s + 1 - p) / p),
        p,
        lambda a, b: max(bregman(h, a, b), 0.0),
    )
    trace.output_rule = "lambda_weighted_average"
    weighted = np.zeros_like(np.asarray(z0, dtype=float))
    total = 0.0
    for rec in trace.records:
        weighted = weighted + rec.lam * rec.z_half
        total += rec.lam
        rec.average = weighted / total
    trace.final_point = np.asarray(z, dtype=float)
    trace.output = weighted / total if total > 0 else np.asarray(z0, dtype=float).copy()
    return trace


def run_eag(oracle: OperatorOracle, z0, config: SolverConfig, box=None) -> Trace:
    """Anchored extragradient with anchor weight 1/(k+1) and step 1/(8L)."""
    if config.algorithm is not Algorithm.EAG:
        config = replace(config, algorithm=Algorithm.EAG, nu=None, s=1, p=2.0)
    L = resolve_L(oracle, z0, config, box=box)
    alpha = 1.0 / (8.0 * L)
    trace = Trace(Algorithm.EAG.value, config, L, header={"L": L, "alpha": alpha, "s": 1, "p": 2.0})
    z0 = np.asarray(z0, dtype=float).copy()
    z = z0.copy()
    for k in range(config.K + 1):
        fz = oracle.eval(z)
        anchor = z + (z0 - z) / (k + 1)
        z_half = anchor - alpha * fz
        f_half = oracle.eval(z_half)
        norm_half = float(np.linalg.norm(f_half)) if np.all(np.isfinite(f_half)) else math.inf
        z_next = anchor - alpha * f_half
        trace.records.append(IterationRecord(k, z, z_half, alpha, norm_half, float(np.linalg.norm(fz)),
                                             float(np.linalg.norm(z_half - z))))
        trace.outside_box += _outside(z_half, box)
        z = z_next
        if not np.all(np.isfinite(z)) or not math.isfinite(norm_half):
            trace.stop_reason = "diverged"
            break
        if norm_half <= config.target_eps:
            trace.stop_reason = "target"
            break
    return _finish(trace, z)


RUNNERS = {
    Algorithm.HOEG_PLUS_L2: run_hoeg_plus_l2,
    Algorithm.LP_HOEG_PLUS: run_lp_hoeg_plus,
    Algorithm.LP_HOMVI: run_lp_homvi,
    Algorithm.EAG: run_eag,
}


def run(oracle: OperatorOracle, z0, config: SolverConfig, box=None) -> Trace:
    return RUNNERS[config.algorithm](oracle, z0, config, box)


def restricted_gap(oracle: OperatorOracle, z_out, center, radius: float, samples: int = 10_000, seed: int = 0) -> float:
    """max over sampled z in the l2 ball of <F(z), z_out - z>.

    Samples are uniform in the ball plus points on the boundary sphere.
    """
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    z_out = np.asarray(z_out, dtype=float)
    center = np.asarray(center, dtype=float)
    d = center.size
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, size=(samples, 1)) ** (1.0 / d)
    radii[: samples // 10] = radius
    pts = center + radii * dirs
    best = -math.inf
    for z in pts:
        best = max(best, float(np.dot(oracle.eval(z), z_out - z)))
    return best
