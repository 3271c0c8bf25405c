"""Per-iteration implicit equations (half steps) and the mirror-descent full step.

Every half step has the form ``T_{s-1}(z_k + u; z_k) + R(u) = 0`` with a
norm-power regulariser R.  Inner solvers:

* s = 1: closed forms (the Taylor model is the constant F(z_k));
* s = 2, p = 2: scalar-radius reduction, bisection on r = |u|;
* otherwise: damped Newton on the residual, then MINPACK ``hybr``, then
  continuation in the regulariser weight as a last resort.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError, SubproblemError
from .geometry import (
    PotentialSpec,
    bregman,
    dual_norm,
    duality_map_inverse,
    grad_norm_power,
    hess_norm_power,
    inverse_mirror_map,
    lp_norm,
    mirror_map,
)
from .oracle import OperatorOracle, taylor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubproblemSettings:
    """Inner-solver controls.

    ``tolerance=None`` means 1e-10 * max(1, ||F(z_k)||_{p*}).
    """

    tolerance: float | None = None
    max_inner_iterations: int = 100
    damping: float = 1.0
    relative_tolerance: float = 1e-10

    def __post_init__(self):
        if self.tolerance is not None and not self.tolerance > 0:
            raise DomainError("tolerance must be positive")
        if self.max_inner_iterations < 1:
            raise DomainError("max_inner_iterations must be >= 1")
        if not 0 < self.damping <= 1:
            raise DomainError("damping must lie in (0, 1]")

    def resolve(self, f_norm: float) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return self.relative_tolerance * max(1.0, f_norm)


DEFAULT_SETTINGS = SubproblemSettings()


def damped_newton(residual, jacobian, x0, tol, settings=DEFAULT_SETTINGS, norm=np.linalg.norm):
    """Newton's method with step halving on ||residual||; returns (x, res_norm)."""
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    rn = norm(r)
    for _ in range(settings.max_inner_iterations):
        if rn <= tol:
            break
        try:
            step = np.linalg.solve(jacobian(x), -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jacobian(x), -r, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        t = settings.damping
        improved = False
        while t > 1e-12:
            trial = x + t * step
            rt = residual(trial)
            rtn = norm(rt)
            if np.isfinite(rtn) and rtn < rn:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        x, r, rn = trial, rt, rtn
    return x, rn


def _solve_with_fallback(residual, jacobian, x0, tol, settings, norm, what):
    x, rn = damped_newton(residual, jacobian, x0, tol, settings, norm)
    if rn <= tol:
        return x
    sol = optimize.root(residual, x, jac=jacobian, method="hybr", options={"xtol": 1e-15})
    xr = sol.x
    rr = norm(residual(xr))
    if rr <= tol:
        return xr
    best, best_rn = (x, rn) if rn <= rr else (xr, rr)
    raise SubproblemError(f"{what}: inner solver stalled at residual {best_rn:.3e} (tol {tol:.1e})",
                          best_point=best, best_residual=float(best_rn))


def scalar_radius_solve(jac, f, c, tol_rel: float = 1e-12):
    """Solve f + jac u + c |u| u = 0 through its radius r = |u|_2.

    For fixed r the equation is linear, u(r) = -(jac + c r I)^{-1} f, and the
    radius solves |u(r)| = r.  Bisection on [0, r_max] with
    r_max = (|jac| + sqrt(|jac|^2 + 4 c |f|)) / (2c), beyond which
    |u(r)| < r.  Returns (u, r).
    """
    d = f.size
    fn = float(np.linalg.norm(f))
    if fn == 0.0:
        return np.zeros(d), 0.0
    jn = float(np.linalg.norm(jac, 2))
    eye = np.eye(d)

    def u_of(r):
        return -np.linalg.solve(jac + c * r * eye, f)

    def phi(r):
        try:
            u = u_of(r)
        except np.linalg.LinAlgError:
            return math.inf
        return float(np.linalg.norm(u)) - r

    lo = 0.0
    hi = (jn + math.sqrt(jn * jn + 4.0 * c * fn)) / (2.0 * c)
    hi = hi * (1.0 + 1e-12) + 1e-300
    if phi(hi) > 0:
        raise SubproblemError("scalar-radius bracket is invalid")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol_rel * hi:
            break
    r = 0.5 * (lo + hi)
    try:
        u = u_of(r)
    except np.linalg.LinAlgError:
        u = u_of(r + 1e-12 / c)
    return u, r


def _check_s(s):
    if s < 1 or int(s) != s:
        raise DomainError("order s must be a positive integer")


def _continuation(residual_m, jacobian_m, z_k, tol, settings, norm, what):
    """Track the root of T + m R from m = 2^20 down to m = 1.

    For large m the root sits close to z_k and Newton converges easily; each
    stage warm-starts the next, and the step in log2(m) halves on failure.
    """
    x = np.asarray(z_k, dtype=float).copy()
    log_m, step = 20.0, 2.0
    x, rn = damped_newton(lambda z: residual_m(z, 2.0**log_m), lambda z: jacobian_m(z, 2.0**log_m), x, tol, settings, norm)
    if rn > tol:
        raise SubproblemError(f"{what}: continuation could not start", best_point=x, best_residual=float(rn))
    while log_m > 0.0:
        target = max(0.0, log_m - step)
        m = 2.0**target
        trial, rn = damped_newton(lambda z: residual_m(z, m), lambda z: jacobian_m(z, m), x, tol, settings, norm)
        if rn <= tol:
            x, log_m = trial, target
            step = min(2.0 * step, 4.0)
        else:
            step *= 0.5
            if step < 1e-3:
                raise SubproblemError(f"{what}: continuation stalled at weight 2^{log_m:.3f}",
                                      best_point=trial, best_residual=float(rn))
    return x


def _regularised_root(oracle, z_k, s, p, reg_grad, reg_hess, settings, what, radius_coef=None, x0=None):
    """Root of T_{s-1}(z; z_k) + reg_grad(z - z_k) = 0 in the dual norm."""
    z_k = np.asarray(z_k, dtype=float)
    model = taylor(oracle, z_k, s - 1)
    f0 = model.value_at_center
    tol = settings.resolve(dual_norm(f0, p))

    def residual(z):
        return model.evaluate(z) + reg_grad(z - z_k)

    def jacobian(z):
        return model.jacobian(z) + reg_hess(z - z_k)

    def norm(r):
        return dual_norm(r, p)

    if dual_norm(f0, p) == 0.0:
        return z_k.copy()

    if radius_coef is not None and s == 2 and p == 2 and oracle.has_analytic(1):
        try:
            u, _ = scalar_radius_solve(model.jacobian(z_k), f0, radius_coef)
            z = z_k + u
            if norm(residual(z)) <= tol:
                return z
            x0 = z
        except SubproblemError:
            log.debug("scalar-radius solve failed, falling back to Newton")
    if x0 is None:
        x0 = z_k
    try:
        return _solve_with_fallback(residual, jacobian, x0, tol, settings, norm, what)
    except SubproblemError as err:
        log.debug("%s; trying continuation in the regulariser weight", err)
        try:
            return _continuation(
                lambda z, m: model.evaluate(z) + m * reg_grad(z - z_k),
                lambda z, m: model.jacobian(z) + m * reg_hess(z - z_k),
                z_k, tol, settings, norm, what,
            )
        except SubproblemError:
            raise err from None


def solve_phi_root(oracle: OperatorOracle, z_k, s: int, nu: float, L: float, settings=DEFAULT_SETTINGS):
    """l2 half step: T_{s-1}(z; z_k) + c |z - z_k|^{s-1}(z - z_k) = 0, c = 2^nu L / s!."""
    _check_s(s)
    if not L > 0:
        raise DomainError("L must be positive")
    z_k = np.asarray(z_k, dtype=float)
    c = 2.0**nu * L / math.factorial(s)
    if s == 1:
        return z_k - oracle.eval(z_k) / c
    # c |u|^{s-1} u is the gradient of c/(s+1) |u|^{s+1}
    k = c / (s + 1)
    x0 = z_k - oracle.eval(z_k) / c
    return _regularised_root(
        oracle, z_k, s, 2.0,
        lambda u: k * grad_norm_power(u, 2.0, s + 1),
        lambda u: k * hess_norm_power(u, 2.0, s + 1),
        settings, "phi-root", radius_coef=c, x0=x0,
    )


def solve_lp_taylor_step(oracle: OperatorOracle, z_k, s: int, p: float, nu: float, L: float, settings=DEFAULT_SETTINGS):
    """lp half step: T_{s-1}(z; z_k) + grad(c |u|_p^{s+1}) = 0 at u = z - z_k.

    The equation is well posed for every p >= 2; the s+1 >= p restriction of
    the convergence analysis is enforced by SolverConfig.
    """
    _check_s(s)
    if not L > 0:
        raise DomainError("L must be positive")
    if not p >= 2:
        raise DomainError(f"lp Taylor step requires p >= 2, got p={p}")
    z_k = np.asarray(z_k, dtype=float)
    c = 2.0**nu * L / math.factorial(s)
    f0 = oracle.eval(z_k)
    if s == 1:
        return z_k + duality_map_inverse(-f0, p, 1, c)
    # start at the root of the regulariser alone, which has the right radius scale
    x0 = z_k + duality_map_inverse(-f0, p, s, c)
    return _regularised_root(
        oracle, z_k, s, p,
        lambda u: c * grad_norm_power(u, p, s + 1),
        lambda u: c * hess_norm_power(u, p, s + 1),
        settings, "lp-taylor step", radius_coef=(s + 1) * c, x0=x0,
    )


def solve_psi_root(oracle: OperatorOracle, z_k, s: int, p: float, nu: float, L: float, settings=DEFAULT_SETTINGS):
    """Bregman-regularised half step (unconstrained root reading).

    T_{s-1}(z; z_k) + c omega_h(z, z_k)^{(s-1)/2} (grad h(z) - grad h(z_k)) = 0
    with h = |.|_p^p and c = 2^nu L / s!.
    """
    _check_s(s)
    if not L > 0:
        raise DomainError("L must be positive")
    if not p >= 2:
        raise DomainError("p must be >= 2")
    z_k = np.asarray(z_k, dtype=float)
    c = 2.0**nu * L / math.factorial(s)
    h = PotentialSpec("lp_pow_p", p)
    gk = mirror_map(z_k, p)
    f0 = oracle.eval(z_k)
    x0 = inverse_mirror_map(gk - f0 / c, p)
    if s == 1:
        return x0
    a = 0.5 * (s - 1)

    def reg_grad(u):
        z = z_k + u
        om = max(bregman(h, z, z_k), 0.0)
        return c * om**a * (mirror_map(z, p) - gk)

    def reg_hess(u):
        z = z_k + u
        om = max(bregman(h, z, z_k), 0.0)
        g = mirror_map(z, p) - gk
        out = om**a * h.hess(z)
        if om > 0:
            out = out + a * om ** (a - 1.0) * np.outer(g, g)
        return c * out

    # for p = 2, omega = |u|^2 and the regulariser is 2c |u|^{s-1} u
    return _regularised_root(oracle, z_k, s, p, reg_grad, reg_hess, settings, "psi-root",
                             radius_coef=2.0 * c, x0=x0)


def mirror_step(z_k, g, lambda_scaled: float, p: float):
    """argmin_z <g, z> + omega_h(z, z_k) / lambda_scaled for h = |.|_p^p.

    Solves grad h(z) = grad h(z_k) - lambda_scaled * g component-wise.
    """
    if not lambda_scaled > 0:
        raise DomainError("lambda_scaled must be positive")
    z_k = np.asarray(z_k, dtype=float)
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return z_k.copy()
    if p == 2:
        return z_k - 0.5 * lambda_scaled * g
    return inverse_mirror_map(mirror_map(z_k, p) - lambda_scaled * g, p)


def phi_residual(oracle, z_k, z, s, nu, L):
    """Residual of the l2 half-step equation (for diagnostics and tests)."""
    c = 2.0**nu * L / math.factorial(s)
    u = np.asarray(z, dtype=float) - np.asarray(z_k, dtype=float)
    return taylor(oracle, z_k, s - 1).evaluate(z) + c * lp_norm(u, 2) ** (s - 1) * u
