"""lp norms, norm-power gradients, Bregman divergences and mirror maps.

Conventions: ``z`` is a 1-D float array, ``p >= 2`` is the primal exponent and
``p* = p / (p - 1)`` its dual.  The signed power ``z^[a]`` is the vector with
entries ``|z_i|^a * sign(z_i)`` (zero where ``z_i == 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, InputError, SingularityError


def _as_point(z):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z.reshape(1)
    return z


def _check_primal(p):
    if not p >= 2:
        raise DomainError(f"primal exponent must satisfy p >= 2, got {p}")


def dual_exponent(p: float) -> float:
    """Return p* = p/(p-1); ``inf`` for p == 1."""
    if not p >= 1:
        raise DomainError(f"exponent must satisfy p >= 1, got {p}")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class GeometryParams:
    p: float
    dual_p: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dual_p", dual_exponent(self.p))


def lp_norm(z, p: float) -> float:
    """(sum |z_i|^p)^(1/p), computed with max-scaling to avoid overflow."""
    if not p >= 1:
        raise DomainError(f"norm exponent must satisfy p >= 1, got {p}")
    z = _as_point(z)
    if not np.all(np.isfinite(z)):
        raise InputError("non-finite coordinate in lp_norm")
    a = np.abs(z)
    m = float(a.max()) if a.size else 0.0
    if m == 0.0:
        return 0.0
    if math.isinf(p):
        return m
    if p == 2:
        return float(np.sqrt(np.dot(a, a)))
    return m * float(np.sum((a / m) ** p)) ** (1.0 / p)


def dual_norm(g, p: float) -> float:
    """Norm of ``g`` in the dual of l_p."""
    return lp_norm(g, dual_exponent(p))


def signed_power(z, a: float):
    """Entry-wise |z_i|^a sign(z_i), with 0 mapped to 0 for a > 0."""
    z = _as_point(z)
    return np.sign(z) * np.abs(z) ** a


def grad_norm_power(z, p: float, r: float):
    """Gradient of ||z||_p^r, i.e. r ||z||_p^(r-p) z^[p-1]."""
    _check_primal(p)
    if not r >= 1:
        raise DomainError(f"power must satisfy r >= 1, got {r}")
    z = _as_point(z)
    nz = lp_norm(z, p)
    if nz == 0.0:
        if r > 1:
            return np.zeros_like(z)
        raise SingularityError("||z||_p^r is not differentiable at 0 for r <= 1")
    return r * nz ** (r - p) * signed_power(z, p - 1.0)


def hess_norm_power(z, p: float, r: float):
    """Hessian of ||z||_p^r.

    r(r-p) ||z||^(r-2p) w w^T + r(p-1) ||z||^(r-p) diag(|z_i|^(p-2)),
    with w = z^[p-1].
    """
    _check_primal(p)
    z = _as_point(z)
    d = z.size
    nz = lp_norm(z, p)
    if nz == 0.0:
        if r > 2:
            return np.zeros((d, d))
        if r == 2 and p == 2:
            return 2.0 * np.eye(d)
        raise SingularityError("Hessian of ||z||_p^r undefined at 0 for this (p, r)")
    w = signed_power(z, p - 1.0)
    diag = np.abs(z) ** (p - 2.0)
    return r * (r - p) * nz ** (r - 2 * p) * np.outer(w, w) + r * (p - 1.0) * nz ** (r - p) * np.diag(diag)


class PotentialKind(str, Enum):
    LP_POW_P = "lp_pow_p"
    LP_POW_R = "lp_pow_r"
    SQ = "sq"


@dataclass(frozen=True)
class PotentialSpec:
    """A norm-power potential h used to build Bregman divergences."""

    kind: PotentialKind = PotentialKind.LP_POW_P
    p: float = 2.0
    r: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PotentialKind(self.kind))
        if self.kind is PotentialKind.SQ:
            object.__setattr__(self, "p", 2.0)
        _check_primal(self.p)
        if self.kind is PotentialKind.LP_POW_R:
            if self.r is None or self.r < self.p:
                raise DomainError("lp_pow_r potential requires r >= p")

    @property
    def power(self) -> float:
        if self.kind is PotentialKind.LP_POW_R:
            return float(self.r)
        return 2.0 if self.kind is PotentialKind.SQ else float(self.p)

    def value(self, z) -> float:
        return lp_norm(z, self.p) ** self.power

    def grad(self, z):
        return grad_norm_power(z, self.p, self.power)

    def hess(self, z):
        return hess_norm_power(z, self.p, self.power)


def bregman(h: PotentialSpec, a, b) -> float:
    """omega_h(a, b) = h(a) - h(b) - <grad h(b), a - b>."""
    a = _as_point(a)
    b = _as_point(b)
    return h.value(a) - h.value(b) - float(np.dot(h.grad(b), a - b))


def mirror_map(z, p: float):
    """Gradient of ||z||_p^p; separable: p |z_i|^(p-1) sign(z_i)."""
    _check_primal(p)
    return p * signed_power(z, p - 1.0)


def inverse_mirror_map(g, p: float):
    """Inverse of :func:`mirror_map`: sign(g_i) (|g_i|/p)^(1/(p-1))."""
    _check_primal(p)
    g = _as_point(g)
    return signed_power(g / p, 1.0 / (p - 1.0))


def duality_map_inverse(g, p: float, s: int, c: float):
    """Solve grad(c ||u||_p^(s+1)) = g for u.

    Uses ||g||_{p*} = c (s+1) ||u||_p^s to fix the magnitude, then inverts the
    signed power u^[p-1] component-wise.
    """
    _check_primal(p)
    if not c > 0:
        raise DomainError("regularisation coefficient must be positive")
    if s < 1:
        raise DomainError("order must satisfy s >= 1")
    g = _as_point(g)
    gn = dual_norm(g, p)
    if gn == 0.0:
        return np.zeros_like(g)
    radius = (gn / ((s + 1) * c)) ** (1.0 / s)
    w = g / (c * (s + 1) * radius ** (s + 1 - p))
    return signed_power(w, 1.0 / (p - 1.0))
