"""Bundled operator instances, the min-max adapter and the competitive transform."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import CatalogError, ConfigError, SubproblemError
from .oracle import OperatorOracle, contract


@dataclass(frozen=True)
class MinMaxFunction:
    """A smooth f(x, y) described through its derivative tensors in z = (x, y).

    ``grad(z)`` is the full gradient of f; ``partials[m - 2](z)`` is the m-th
    derivative tensor of f (m >= 2).  ``degree`` is the polynomial degree of f
    when known, so derivative tensors past ``degree`` vanish.
    """

    nx: int
    ny: int
    grad: Callable
    partials: Sequence[Callable]
    degree: int | None = None
    box: tuple | None = None
    name: str = ""

    @property
    def dim(self):
        return self.nx + self.ny

    def grad_x(self, z):
        return self.grad(z)[: self.nx]

    def grad_y(self, z):
        return self.grad(z)[self.nx :]

    def hessian(self, z):
        return self.partials[0](z)

    def mixed_xy(self, z):
        return self.hessian(z)[: self.nx, self.nx :]

    def mixed_yx(self, z):
        return self.hessian(z)[self.nx :, : self.nx]

    def tensor(self, z, m: int):
        """m-th derivative tensor of f (m >= 2)."""
        if self.degree is not None and m > self.degree:
            return np.zeros((self.dim,) * m)
        return self.partials[m - 2](z)

    @property
    def sign(self):
        return np.concatenate([np.ones(self.nx), -np.ones(self.ny)])


def minmax_to_operator(f: MinMaxFunction, name: str | None = None) -> OperatorOracle:
    """F(z) = (grad_x f, -grad_y f) with derivatives from f's partials."""
    sign = f.sign

    def func(z):
        return sign * f.grad(z)

    def make_deriv(k):
        def deriv(z):
            return sign.reshape((-1,) + (1,) * k) * f.tensor(z, k + 1)

        return deriv

    n_analytic = len(f.partials)
    derivs = [make_deriv(k) for k in range(1, n_analytic + 1)]
    degree = None if f.degree is None else max(f.degree - 1, 0)
    return OperatorOracle(f.dim, func, derivs, degree=degree, name=name or f.name)


def _competitive_matrix(f: MinMaxFunction, z, alpha):
    d, nx = f.dim, f.nx
    a = np.eye(d)
    hess = f.hessian(z)
    a[:nx, nx:] = alpha * hess[:nx, nx:]
    a[nx:, :nx] = -alpha * hess[nx:, :nx]
    return a


def competitive_transform(f: MinMaxFunction, alpha: float, name: str | None = None) -> OperatorOracle:
    """F_alpha = [[I, a f_xy], [-a f_yx, I]]^{-1} (grad_x f, -grad_y f).

    The block matrix has identity symmetric part, so the solve never fails.
    Value and Jacobian are analytic; higher orders fall back to finite
    differences of the composed map.
    """
    if alpha < 0:
        raise ConfigError("alpha must be non-negative")
    base = minmax_to_operator(f)
    if alpha == 0:
        return base
    nx = f.nx

    def func(z):
        return np.linalg.solve(_competitive_matrix(f, z, alpha), base.eval(z))

    def jac(z):
        a = _competitive_matrix(f, z, alpha)
        fa = np.linalg.solve(a, base.eval(z))
        t3 = f.tensor(z, 3)
        # dA/dz_j has blocks alpha * d_j f_xy and -alpha * d_j f_yx.
        da = np.zeros_like(t3)
        da[:nx, nx:, :] = alpha * t3[:nx, nx:, :]
        da[nx:, :nx, :] = -alpha * t3[nx:, :nx, :]
        rhs = base.derivative(z, 1) - np.einsum("ikj,k->ij", da, fa)
        return np.linalg.solve(a, rhs)

    return OperatorOracle(f.dim, func, [jac], name=name or f"{f.name}_alpha{alpha:g}")


# ---------------------------------------------------------------------------
# bundled functions

def _poly_h(coeffs):
    """Derivative callables of a univariate polynomial sum_k c_k t^k."""
    base = np.polynomial.Polynomial(coeffs)
    return [base.deriv(m) for m in range(base.degree() + 1)]


# h(t) = t^2/4 - t^4/2 + t^6/6
_H = _poly_h([0.0, 0.0, 0.25, 0.0, -0.5, 0.0, 1.0 / 6.0])


def forsaken_function(shift: float, bound: float, name: str) -> MinMaxFunction:
    """f(x, y) = x (y - shift) + h(x) - h(y)."""

    def grad(z):
        x, y = z
        return np.array([y - shift + _H[1](x), x - _H[1](y)])

    def partial(m):
        def tens(z):
            x, y = z
            t = np.zeros((2,) * m)
            t[(0,) * m] = _H[m](x)
            t[(1,) * m] = -_H[m](y)
            if m == 2:
                t[0, 1] = t[1, 0] = 1.0
            return t

        return tens

    box = (np.full(2, -bound), np.full(2, bound))
    return MinMaxFunction(1, 1, grad, [partial(m) for m in range(2, 7)], degree=6, box=box, name=name)


def x2y_function() -> MinMaxFunction:
    """f(x, y) = x^2 y."""

    def grad(z):
        x, y = z
        return np.array([2 * x * y, x * x])

    def hess(z):
        x, y = z
        return np.array([[2 * y, 2 * x], [2 * x, 0.0]])

    def third(z):
        t = np.zeros((2, 2, 2))
        t[0, 0, 1] = t[0, 1, 0] = t[1, 0, 0] = 2.0
        return t

    box = (np.full(2, -2.0), np.full(2, 2.0))
    return MinMaxFunction(1, 1, grad, [hess, third], degree=3, box=box, name="x2y")


def quadratic_function(a: float, b: float, c: float, name: str) -> MinMaxFunction:
    """f(x, y) = a/2 x^2 + b x y - c/2 y^2 (convex-concave for a, c >= 0)."""
    h = np.array([[a, b], [b, -c]])

    def grad(z):
        return h @ z

    return MinMaxFunction(1, 1, grad, [lambda z: h.copy()], degree=2, name=name,
                          box=(np.full(2, -2.0), np.full(2, 2.0)))


def linear_operator(m, name: str = "linear") -> OperatorOracle:
    m = np.array(m, dtype=float)
    d = m.shape[0]
    return OperatorOracle(d, lambda z: m @ z, [lambda z: m.copy()], degree=1, name=name)


# ---------------------------------------------------------------------------
# catalog

@dataclass
class ProblemCatalogEntry:
    name: str
    oracle: OperatorOracle
    known_stationary_points: list = field(default_factory=list)
    box: tuple | None = None
    minmax: MinMaxFunction | None = None
    params: dict = field(default_factory=dict)
    _l_cache: dict = field(default_factory=dict, repr=False)

    def declared_L(self, s: int, p: float = 2.0) -> float:
        """Upper bound on L_{s,p} over the reference box (see declared_lipschitz)."""
        key = (int(s), float(p))
        if key not in self._l_cache:
            self._l_cache[key] = declared_lipschitz(self.oracle, s, p, self.box)
        return self._l_cache[key]

    @property
    def z_star(self):
        return self.known_stationary_points[0] if self.known_stationary_points else None


def _tensor_sup_norm(oracle: OperatorOracle, s: int, box, n_grid: int = 121) -> float:
    lo, hi = box
    axes = [np.linspace(lo[i], hi[i], n_grid) for i in range(oracle.dim)]
    best = 0.0
    for point in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, oracle.dim):
        best = max(best, float(np.linalg.norm(oracle.derivative(point, s))))
    return best


def declared_lipschitz(oracle: OperatorOracle, s: int, p: float, box, margin: float = 1.05) -> float:
    """Bound on L_{s,p}: sup of the Frobenius norm of the s-th derivative tensor.

    The Frobenius norm dominates the multilinear operator norm in l2; the
    grid supremum gets a 5% margin, and the l2 bound converts to (p, p*)
    through ||v||_{p*} <= d^(1/p* - 1/2) ||v||_2 and ||u||_2 <= d^(1/2 - 1/p) ||u||_p.
    Linear operators have a global constant, so no box is needed there.
    """
    if oracle.is_zero_order(s):
        return 0.0
    if oracle.degree == s:
        norm2 = float(np.linalg.norm(oracle.derivative(np.zeros(oracle.dim), s)))
    else:
        if box is None:
            raise ConfigError(f"{oracle.name}: a reference box is needed to declare L_{s}")
        norm2 = _tensor_sup_norm(oracle, s, box) * margin
    d = oracle.dim
    pstar = p / (p - 1.0)
    return norm2 * d ** (1.0 / pstar - 0.5) * d ** (s * (0.5 - 1.0 / p))


def newton_refine(oracle: OperatorOracle, z0, tol: float = 1e-13, max_iter: int = 100):
    """Plain Newton iteration on F(z) = 0 with step halving."""
    z = np.asarray(z0, dtype=float).copy()
    fz = oracle.eval(z)
    for _ in range(max_iter):
        if np.linalg.norm(fz) <= tol:
            return z
        step = np.linalg.solve(oracle.jacobian(z), -fz)
        t = 1.0
        while t > 1e-8:
            trial = z + t * step
            ft = oracle.eval(trial)
            if np.linalg.norm(ft) < np.linalg.norm(fz):
                break
            t *= 0.5
        z, fz = trial, ft
    if np.linalg.norm(fz) > 1e-10:
        raise SubproblemError("Newton refinement did not converge", best_point=z,
                              best_residual=float(np.linalg.norm(fz)))
    return z


PROBLEM_NAMES = ("forsaken", "modified_forsaken", "x2y", "bilinear", "linear_monotone", "skew_quadratic")

FORSAKEN_SEED = (0.0780, 0.4119)
MODIFIED_FORSAKEN_SEED = (1.5, 1.5)


@lru_cache(maxsize=None)
def _stationary(name: str):
    seed = FORSAKEN_SEED if name == "forsaken" else MODIFIED_FORSAKEN_SEED
    return newton_refine(minmax_to_operator(_minmax_for(name)), seed)


def _minmax_for(name: str) -> MinMaxFunction:
    if name == "forsaken":
        return forsaken_function(0.45, 1.5, "forsaken")
    if name == "modified_forsaken":
        return forsaken_function(1.5, 2.0, "modified_forsaken")
    if name == "x2y":
        return x2y_function()
    if name == "bilinear":
        return quadratic_function(0.0, 1.0, 0.0, "bilinear")
    if name == "skew_quadratic":
        return quadratic_function(0.1, 1.0, 0.1, "skew_quadratic")
    raise CatalogError(f"{name!r} is not a min-max problem")


def make_problem(name: str, alpha: float | None = None, matrix=None, dim: int = 2) -> ProblemCatalogEntry:
    """Build a catalog entry.

    ``alpha`` replaces F by the competitive operator F_alpha (min-max problems
    only); ``matrix`` / ``dim`` configure ``linear_monotone``.
    """
    if name not in PROBLEM_NAMES:
        raise CatalogError(f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")
    params = {}
    if name == "linear_monotone":
        if alpha:
            raise ConfigError("alpha applies to min-max problems only")
        if matrix is None:
            # symmetric part I, skew part of strength 2
            matrix = np.eye(dim)
            for i in range(0, dim - 1, 2):
                matrix[i, i + 1], matrix[i + 1, i] = 2.0, -2.0
        matrix = np.asarray(matrix, dtype=float)
        sym = 0.5 * (matrix + matrix.T)
        if np.linalg.eigvalsh(sym).min() < 0:
            raise ConfigError("linear_monotone needs a positive semidefinite symmetric part")
        params["matrix"] = matrix.tolist()
        oracle = linear_operator(matrix, name)
        d = matrix.shape[0]
        return ProblemCatalogEntry(name, oracle, [np.zeros(d)],
                                   box=(np.full(d, -2.0), np.full(d, 2.0)), params=params)

    f = _minmax_for(name)
    if alpha:
        params["alpha"] = float(alpha)
        oracle = competitive_transform(f, float(alpha), name=f"{name}_alpha{alpha:g}")
    else:
        oracle = minmax_to_operator(f, name)
    if name in ("forsaken", "modified_forsaken"):
        points = [_stationary(name).copy()]
    else:
        points = [np.zeros(2)]
    oracle.stationary_point = points[0]
    return ProblemCatalogEntry(name, oracle, points, box=f.box, minmax=f, params=params)
