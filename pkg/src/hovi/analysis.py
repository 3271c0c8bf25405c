"""Sampled checks of monotonicity-type conditions, theoretical rho ranges and rate fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, InputError, PreconditionError
from .geometry import dual_norm
from .oracle import OperatorOracle
from .solvers import Algorithm, nu_default

_SKIP = 1e-12


class Condition(str, Enum):
    MONOTONE = "monotone"
    COMONOTONE = "comonotone"
    WEAK_MVI = "weak_mvi"


@dataclass
class ConditionReport:
    """Outcome of a sampled condition check.

    ``worst_witness`` is ``(z,)`` for weak-MVI and ``(z_a, z_b)`` for the pair
    conditions.  ``value`` is the raw extreme statistic (the minimum inner
    product for monotone checks, the rho estimate otherwise).
    """

    condition: Condition
    estimated_rho: float
    worst_witness: tuple
    samples: int
    exponent_q: float | None = None
    p: float = 2.0
    value: float = math.nan
    verdict: bool | None = None
    verdict_against_bound: bool | None = None
    z_star: np.ndarray | None = None
    skipped: int = 0

    def reevaluate(self, oracle: OperatorOracle) -> float:
        """Recompute the statistic at the stored witness."""
        if self.condition is Condition.WEAK_MVI:
            (z,) = self.worst_witness
            return _weak_mvi_ratio(oracle.eval(z), z, self.z_star, self.p, self.exponent_q)
        za, zb = self.worst_witness
        df = oracle.eval(za) - oracle.eval(zb)
        inner = float(np.dot(df, za - zb))
        if self.condition is Condition.MONOTONE:
            return inner
        return inner / dual_norm(df, self.p) ** 2

    def to_dict(self) -> dict:
        out = {
            "condition": self.condition.value,
            "estimated_rho": self.estimated_rho,
            "value": self.value,
            "worst_witness": [np.asarray(w).tolist() for w in self.worst_witness],
            "samples": self.samples,
            "skipped": self.skipped,
            "exponent_q": self.exponent_q,
            "p": self.p,
            "verdict": self.verdict,
            "verdict_against_bound": self.verdict_against_bound,
        }
        if self.z_star is not None:
            out["z_star"] = np.asarray(self.z_star).tolist()
        return out


def _box(region, dim):
    lo, hi = region
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    if np.any(hi <= lo):
        raise InputError("degenerate region")
    return lo, hi


def box_points(region, dim: int, n: int, seed: int = 0):
    """n scrambled Sobol points in the box (deterministic for a given seed)."""
    lo, hi = _box(region, dim)
    if n < 1:
        return np.empty((0, dim))
    m = max(0, math.ceil(math.log2(n)))
    pts = qmc.Sobol(dim, scramble=True, seed=seed).random_base2(m)[:n]
    return qmc.scale(pts, lo, hi)


def _shell_points(center, region, n, rng):
    """Points around ``center`` at radii log-uniform in [1e-4, 1e-1] x box diagonal."""
    lo, hi = _box(region, center.size)
    dirs = rng.standard_normal((n, center.size))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = float(np.linalg.norm(hi - lo)) * 10.0 ** rng.uniform(-4.0, -1.0, size=(n, 1))
    return np.clip(center + radii * dirs, lo, hi)


def _weak_mvi_ratio(f, z, z_star, p, q):
    n = dual_norm(f, p)
    return -2.0 * float(np.dot(f, np.asarray(z) - z_star)) / n**q


def verify_weak_mvi(oracle: OperatorOracle, z_star, q_exponent: float | None = None, p: float = 2.0,
                    region=None, samples: int = 10_000, seed: int = 0, *, s: int = 1,
                    shell_fraction: float = 0.25) -> ConditionReport:
    """Estimate the smallest rho with <F(z), z - z*> >= -(rho/2) |F(z)|_{p*}^q.

    ``q_exponent`` defaults to (s+1)/s.  A fraction of the samples is placed in
    a thin shell around z*, the rest on a scrambled Sobol net over ``region``.
    """
    z_star = np.asarray(z_star, dtype=float)
    if dual_norm(oracle.eval(z_star), p) > 1e-6:
        raise PreconditionError("z_star is not a stationary point (|F(z_star)| > 1e-6)")
    if samples < 1:
        raise InputError("samples must be >= 1")
    q = (s + 1) / s if q_exponent is None else float(q_exponent)
    if region is None:
        region = (z_star - 2.0, z_star + 2.0)
    n_shell = int(samples * shell_fraction)
    rng = np.random.default_rng(seed)
    pts = np.vstack([box_points(region, oracle.dim, samples - n_shell, seed),
                     _shell_points(z_star, region, n_shell, rng)])
    best, witness, skipped = -math.inf, z_star, 0
    for z in pts:
        f = oracle.eval(z)
        if dual_norm(f, p) < _SKIP:
            skipped += 1
            continue
        r = _weak_mvi_ratio(f, z, z_star, p, q)
        if r > best:
            best, witness = r, z.copy()
    return ConditionReport(Condition.WEAK_MVI, max(0.0, best), (witness,), len(pts), q, float(p),
                           value=best, z_star=z_star, skipped=skipped)


def sample_pairs(region, dim: int, samples: int, seed: int = 0):
    """Pairs for the pair conditions: half far apart, half local (log-uniform separations)."""
    if samples < 2:
        raise InputError("need at least two samples")
    lo, hi = _box(region, dim)
    rng = np.random.default_rng(seed)
    n_pairs = samples // 2
    za = rng.uniform(lo, hi, size=(n_pairs, dim))
    zb = rng.uniform(lo, hi, size=(n_pairs, dim))
    n_near = n_pairs // 2
    dirs = rng.standard_normal((n_near, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    scale = float(np.linalg.norm(hi - lo)) * 10.0 ** rng.uniform(-3.0, -0.5, size=(n_near, 1))
    zb[:n_near] = np.clip(za[:n_near] + scale * dirs, lo, hi)
    return za, zb


def _pair_stats(oracle, za, zb, p):
    fa = np.array([oracle.eval(z) for z in za])
    fb = np.array([oracle.eval(z) for z in zb])
    df = fa - fb
    inner = np.einsum("ij,ij->i", df, za - zb)
    dn = np.array([dual_norm(v, p) for v in df])
    return inner, dn


def verify_monotone(oracle: OperatorOracle, region, samples: int = 10_000, seed: int = 0, *,
                    pairs=None, tol: float = 1e-12) -> ConditionReport:
    """Minimum over sampled pairs of <F(a) - F(b), a - b>."""
    za, zb = pairs if pairs is not None else sample_pairs(region, oracle.dim, samples, seed)
    za, zb = np.asarray(za, dtype=float), np.asarray(zb, dtype=float)
    inner, _ = _pair_stats(oracle, za, zb, 2.0)
    i = int(np.argmin(inner))
    val = float(inner[i])
    return ConditionReport(Condition.MONOTONE, max(0.0, -val), (za[i].copy(), zb[i].copy()), len(za),
                           value=val, verdict=bool(val >= -tol))


def verify_comonotone(oracle: OperatorOracle, region, samples: int = 10_000, seed: int = 0, *,
                      p: float = 2.0, pairs=None) -> ConditionReport:
    """rho = min over pairs of <dF, dz> / |dF|_{p*}^2; pairs with tiny |dF| are skipped."""
    za, zb = pairs if pairs is not None else sample_pairs(region, oracle.dim, samples, seed)
    za, zb = np.asarray(za, dtype=float), np.asarray(zb, dtype=float)
    inner, dn = _pair_stats(oracle, za, zb, p)
    keep = dn >= _SKIP
    if not np.any(keep):
        return ConditionReport(Condition.COMONOTONE, math.inf, (za[0], zb[0]), len(za), p=float(p),
                               value=math.inf, skipped=len(za))
    ratio = np.full(len(za), math.inf)
    ratio[keep] = inner[keep] / dn[keep] ** 2
    i = int(np.argmin(ratio))
    return ConditionReport(Condition.COMONOTONE, float(ratio[i]), (za[i].copy(), zb[i].copy()), len(za),
                           p=float(p), value=float(ratio[i]), skipped=int(np.count_nonzero(~keep)))


@dataclass
class TheoremBounds:
    s: int
    p: float
    L: float
    algorithm: str
    nu: float
    rho_max_balanced: float
    rho_max_lp: float
    c1: float
    c2: float
    C_sp: float
    c_sprho: float
    m_p: float
    m_s: float
    rho: float = 0.0
    first_order_reference: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _balanced(s, L, nu, rho):
    fact = math.factorial(s)
    g = 2.0**nu + 1.0
    rho_max = (2.0**nu - 2.0 ** -(nu + 2)) * (fact / (g * L)) ** ((s + 1) / s)
    c1 = 1.0 - 2.0 ** -(2 * nu + 2) - rho / 2.0**nu * (g * L / fact) ** ((s + 1) / s)
    c2 = (fact / (g * L)) ** (2.0 / s)
    return rho_max, c1, c2


def _lp(s, p, L, nu, rho):
    fact = math.factorial(s)
    g = (s + 1) * 2.0**nu + 1.0
    a = 2.0**nu - s / (2.0 ** ((nu - s + 1) / s) * (s + 1) ** (1 + 1 / s))
    rho_max = 2.0 * a * (fact / (g ** (s + 1) * L)) ** (1.0 / s)
    C_sp = 2.0 ** -(((p + 1) * (s + 1) + nu * (p - 1)) / s) * (fact / (p * L)) ** ((p - (s + 1)) / s)
    # positive exactly when rho < rho_max
    c_sprho = a * (fact / (g * L)) ** ((s + 1) / s) - fact * rho / (2.0 * L)
    return rho_max, C_sp, c_sprho


def theorem_rho_bound(s: int, p: float = 2.0, L: float = 1.0, algorithm="hoeg_plus_l2",
                      rho: float = 0.0) -> TheoremBounds:
    """Closed-form admissible rho ranges and rate constants.

    ``rho_max_balanced`` uses the l2 HOEG+ exponent, ``rho_max_lp`` the lp-HOEG+
    exponent; ``nu`` reports the exponent of ``algorithm``.
    """
    if int(s) != s or s < 1:
        raise ConfigError("order s must be a positive integer")
    s = int(s)
    if not L > 0:
        raise ConfigError("L must be positive")
    algorithm = Algorithm(algorithm)
    p = float(p)
    if algorithm is Algorithm.HOEG_PLUS_L2 and p != 2.0:
        raise ConfigError("hoeg_plus_l2 is defined for p = 2 only")
    if algorithm is Algorithm.EAG and (s != 1 or p != 2.0):
        raise ConfigError("eag is a first-order l2 method (s = 1, p = 2)")
    if algorithm in (Algorithm.LP_HOEG_PLUS, Algorithm.HOEG_PLUS_L2, Algorithm.EAG) and not 2 <= p <= s + 1:
        raise ConfigError(f"need s+1 >= p >= 2 (got s={s}, p={p:g})")
    if algorithm is Algorithm.LP_HOMVI and p < 2:
        raise ConfigError("lp_homvi requires p >= 2")
    nu_l2 = nu_default(Algorithm.HOEG_PLUS_L2, s)
    nu_lp = nu_default(Algorithm.LP_HOEG_PLUS, s, min(max(p, 2.0), s + 1.0))
    rho_b, c1, c2 = _balanced(s, L, nu_l2, rho)
    rho_lp, C_sp, c_sprho = _lp(s, p, L, nu_lp, rho)
    nu = nu_default(algorithm, s, p) if algorithm is not Algorithm.EAG else nu_l2
    return TheoremBounds(
        s=s, p=p, L=float(L), algorithm=algorithm.value, nu=nu,
        rho_max_balanced=rho_b, rho_max_lp=rho_lp, c1=c1, c2=c2, C_sp=C_sp, c_sprho=c_sprho,
        m_p=2.0 ** -(p + 1), m_s=2.0 ** -(s - 1), rho=float(rho),
        first_order_reference=1.0 / (4.0 * L) if s == 1 else None,
        extra={"nu_balanced": nu_l2, "nu_lp": nu_lp},
    )


def rate_fit(series, floor: float | None = None) -> float:
    """Slope of log(running min) against log(k+1) over the last 80% of points.

    ``series`` is a sequence of (k, value) pairs or of values indexed from 0.
    With ``floor`` set, points whose running minimum has reached the floor are
    dropped first; if that leaves fewer than two points, the run hit the floor
    before the window and -inf is returned.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        arr = np.column_stack([np.arange(arr.size), arr])
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError("series must be (k, value) pairs or a flat sequence of values")
    if arr.shape[0] < 10:
        raise InputError("need at least 10 points")
    k, v = arr[:, 0], arr[:, 1]
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise InputError("values must be positive and finite")
    run_min = np.minimum.accumulate(v)
    start = int(math.floor(0.2 * len(k)))
    k, run_min = k[start:], run_min[start:]
    if floor is not None:
        keep = run_min > floor
        if np.count_nonzero(keep) < 2:
            return -math.inf
        k, run_min = k[keep], run_min[keep]
    slope, _ = np.polyfit(np.log(k + 1.0), np.log(run_min), 1)
    return float(slope)
