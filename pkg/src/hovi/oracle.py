"""Operator oracles, Taylor models and finite-difference fallbacks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CapabilityError, InputError
from .geometry import dual_norm, lp_norm

# Base central-difference steps per derivative order (unit-norm direction).
# Orders >= 2 are Richardson-extrapolated, so truncation is O(step^4) and the
# larger steps keep round-off (~eps / step^k) small.
_FD_STEPS = {1: 1e-5, 2: 2e-3, 3: 4e-3}
FD_MAX_ORDER = 3


def contract(tensor, h, times: int):
    """Contract the last ``times`` axes of ``tensor`` with ``h``."""
    out = tensor
    for _ in range(times):
        out = out @ h
    return out


class OperatorOracle:
    """An operator F: R^d -> R^d with optional analytic derivative tensors.

    ``derivatives[k - 1](z)`` returns the k-th derivative tensor of shape
    ``(d,) * (k + 1)``; the first axis indexes the output component.  When
    ``degree`` is given, F is a polynomial of that degree and every derivative
    of higher order is identically zero, so all orders are analytic.
    """

    def __init__(
        self,
        dim: int,
        func: Callable,
        derivatives: Sequence[Callable] = (),
        *,
        degree: int | None = None,
        name: str = "",
        declared_L: Callable[[int, float], float] | dict | None = None,
        stationary_point=None,
        fd_fallback: bool = True,
    ):
        if dim < 1:
            raise InputError("dimension must be positive")
        self.dim = int(dim)
        self._func = func
        self._derivatives = tuple(derivatives)
        self.degree = degree
        self.name = name
        self._declared_L = declared_L
        self.stationary_point = None if stationary_point is None else np.asarray(stationary_point, dtype=float)
        self.fd_fallback = fd_fallback

    @property
    def max_analytic_order(self) -> float:
        if self.degree is not None and self.degree <= len(self._derivatives):
            return math.inf
        return len(self._derivatives)

    def __call__(self, z):
        return self.eval(z)

    def eval(self, z):
        out = np.asarray(self._func(np.asarray(z, dtype=float)), dtype=float)
        if out.shape != (self.dim,):
            raise InputError(f"operator returned shape {out.shape}, expected ({self.dim},)")
        return out

    def has_analytic(self, k: int) -> bool:
        return k <= self.max_analytic_order

    def is_zero_order(self, k: int) -> bool:
        return self.degree is not None and k > self.degree

    def derivative(self, z, k: int):
        """Full k-th derivative tensor at z (k = 0 gives F(z))."""
        if k == 0:
            return self.eval(z)
        if self.is_zero_order(k):
            return np.zeros((self.dim,) * (k + 1))
        if k > len(self._derivatives):
            raise CapabilityError(f"{self.name or 'operator'} has no analytic derivative of order {k}")
        return np.asarray(self._derivatives[k - 1](np.asarray(z, dtype=float)), dtype=float)

    def jacobian(self, z):
        if self.has_analytic(1):
            return self.derivative(z, 1)
        return fd_jacobian(self.eval, z)

    def dir_derivative(self, z, h, k: int):
        """nabla^k F(z)[h]^k, analytic when available, else finite differences."""
        h = np.asarray(h, dtype=float)
        if k == 0:
            return self.eval(z)
        if self.is_zero_order(k):
            return np.zeros(self.dim)
        if self.has_analytic(k):
            return contract(self.derivative(z, k), h, k)
        if self.fd_fallback:
            return fd_dir_derivative(self, z, h, k)
        raise CapabilityError(f"order {k} exceeds analytic capability and finite differences are disabled")

    def declared_L(self, s: int, p: float) -> float | None:
        src = self._declared_L
        if src is None:
            return None
        if callable(src):
            return src(s, p)
        return src.get((s, float(p)))


def _nested_central(f, z, e, k, delta):
    # D^k with D g(t) = (g(t+delta) - g(t-delta)) / (2 delta) expands to a
    # binomial stencil on the nodes t = (k - 2i) delta.
    acc = 0.0
    for i in range(k + 1):
        acc = acc + (-1) ** i * math.comb(k, i) * np.asarray(f(z + (k - 2 * i) * delta * e), dtype=float)
    return acc / (2.0 * delta) ** k


def fd_dir_derivative(oracle, z, h, k: int, step: float | None = None):
    """k-fold nested central difference of F along h.

    Differentiates g(t) = F(z + t h/|h|) k times at t = 0 and rescales by
    |h|^k, so the step is independent of the length of h.  Orders >= 2 use
    one Richardson extrapolation (steps delta and delta/2), cancelling the
    O(delta^2) truncation term.
    """
    if k > FD_MAX_ORDER:
        raise CapabilityError(f"finite differences are limited to order {FD_MAX_ORDER}")
    f = oracle.eval if hasattr(oracle, "eval") else oracle
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)
    if k == 0:
        return np.asarray(f(z), dtype=float)
    hn = float(np.linalg.norm(h))
    if hn == 0.0:
        return np.zeros_like(np.asarray(f(z), dtype=float))
    e = h / hn
    delta = (step or _FD_STEPS[k]) * max(1.0, float(np.max(np.abs(z))))
    coarse = _nested_central(f, z, e, k, delta)
    if k == 1:
        return coarse * hn
    fine = _nested_central(f, z, e, k, 0.5 * delta)
    return (4.0 * fine - coarse) / 3.0 * hn**k


def fd_jacobian(f, z, step: float = 1e-6):
    z = np.asarray(z, dtype=float)
    d = z.size
    delta = step * max(1.0, float(np.max(np.abs(z))))
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = delta
        cols.append((np.asarray(f(z + e)) - np.asarray(f(z - e))) / (2 * delta))
    return np.stack(cols, axis=1)


@dataclass
class TaylorModel:
    """T_order(z'; z) = sum_i (1/i!) nabla^i F(z)[z' - z]^i."""

    oracle: OperatorOracle
    center: np.ndarray
    order: int
    _tensors: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self._tensors[0] = self.oracle.eval(self.center)
        for i in range(1, self.order + 1):
            if self.oracle.is_zero_order(i):
                break
            if self.oracle.has_analytic(i):
                self._tensors[i] = self.oracle.derivative(self.center, i)

    @property
    def value_at_center(self):
        return self._tensors[0]

    def _term(self, i, h):
        if i in self._tensors:
            return contract(self._tensors[i], h, i)
        if self.oracle.is_zero_order(i):
            return None
        return self.oracle.dir_derivative(self.center, h, i)

    def evaluate(self, zp):
        h = np.asarray(zp, dtype=float) - self.center
        out = self._tensors[0].copy()
        for i in range(1, self.order + 1):
            t = self._term(i, h)
            if t is None:
                break
            out = out + t / math.factorial(i)
        return out

    __call__ = evaluate

    def jacobian(self, zp):
        """Derivative of evaluate() with respect to z'."""
        h = np.asarray(zp, dtype=float) - self.center
        d = self.center.size
        if self.order == 0:
            return np.zeros((d, d))
        if all(i in self._tensors or self.oracle.is_zero_order(i) for i in range(1, self.order + 1)):
            jac = np.zeros((d, d))
            for i in range(1, self.order + 1):
                if i not in self._tensors:
                    break
                jac = jac + contract(self._tensors[i], h, i - 1) / math.factorial(i - 1)
            return jac
        return fd_jacobian(self.evaluate, zp)


def taylor(oracle: OperatorOracle, z, order: int, allow_fd: bool = True) -> TaylorModel:
    if order < 0:
        raise InputError("Taylor order must be non-negative")
    if not oracle.has_analytic(order):
        if not (allow_fd and oracle.fd_fallback and order <= FD_MAX_ORDER):
            raise CapabilityError(f"Taylor model of order {order} unavailable for {oracle.name or 'operator'}")
    return TaylorModel(oracle, z, order)


def _box_arrays(region, dim):
    lo, hi = region
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    if np.any(hi <= lo):
        raise InputError("degenerate region: every side must have positive length")
    return lo, hi


def estimate_lipschitz(oracle: OperatorOracle, s: int, p: float, region, samples: int = 10_000, seed: int = 0) -> float:
    """Sampled lower bound on L_{s,p} over a box.

    Half of the pairs are drawn independently in the box, the other half are
    local pairs with separations log-uniform in [1e-3, 1] times the box
    diagonal, which is where the worst secant ratios of smooth operators live.
    """
    if samples < 2:
        raise InputError("need at least two samples")
    lo, hi = _box_arrays(region, oracle.dim)
    rng = np.random.default_rng(seed)
    n_far = samples // 2
    n_near = samples - n_far
    za = rng.uniform(lo, hi, size=(samples, oracle.dim))
    zb = np.empty_like(za)
    zb[:n_far] = rng.uniform(lo, hi, size=(n_far, oracle.dim))
    dirs = rng.standard_normal((n_near, oracle.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    diag = float(np.linalg.norm(hi - lo))
    scale = diag * 10.0 ** rng.uniform(-3.0, 0.0, size=(n_near, 1))
    zb[n_far:] = np.clip(za[n_far:] + scale * dirs, lo, hi)

    fact = math.factorial(s)
    best = 0.0
    for a, b in zip(za, zb):
        dist = lp_norm(b - a, p)
        if dist == 0.0:
            continue
        model = taylor(oracle, a, s - 1)
        rem = dual_norm(oracle.eval(b) - model.evaluate(b), p)
        best = max(best, fact * rem / dist**s)
    return best
