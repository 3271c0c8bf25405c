"""Rescaled continuous-time dual-extrapolation dynamics.

    du/dt = -F(z) / |F(z)|^(1 - 1/s),   v = z0 + u,
    z - v + F(z) / |F(z)|^(1 - 1/s) = 0.

The algebraic constraint is solved by damped Newton at every Runge-Kutta
stage (index-1 DAE treatment), warm-started from the previous stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, IntegrationError, PreconditionError


@dataclass(frozen=True)
class ContinuousConfig:
    s: int = 1
    t_end: float = 10.0
    dt: float = 1e-3
    algebraic_tolerance: float = 1e-10
    norm_floor: float = 1e-9
    max_newton: int = 50
    record_every: int = 1

    def __post_init__(self):
        if self.s < 1:
            raise InputError("s must be >= 1")
        if not (0 < self.dt < self.t_end):
            raise InputError("need 0 < dt < t_end")
        if not (self.algebraic_tolerance > 0 and self.norm_floor > 0):
            raise InputError("tolerances must be positive")


@dataclass
class Sample:
    t: float
    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    norm_F: float


@dataclass
class Trajectory:
    z0: np.ndarray
    config: ContinuousConfig
    samples: list = field(default_factory=list)
    running_min_norm: list = field(default_factory=list)
    stop_reason: str = "t_end"

    @property
    def times(self):
        return np.array([smp.t for smp in self.samples])

    @property
    def norms(self):
        return np.array([smp.norm_F for smp in self.samples])

    def _append(self, smp):
        self.samples.append(smp)
        prev = self.running_min_norm[-1][1] if self.running_min_norm else math.inf
        self.running_min_norm.append((smp.t, min(prev, smp.norm_F)))


def _scaled_field(f, s):
    """F / |F|^(1 - 1/s) and |F|."""
    n = float(np.linalg.norm(f))
    if s == 1:
        return f, n
    if n == 0.0:
        return np.zeros_like(f), 0.0
    return f * n ** (1.0 / s - 1.0), n


def algebraic_residual(oracle, z, v, s):
    g, _ = _scaled_field(oracle.eval(z), s)
    return z - v + g


def solve_constraint(oracle, v, z_guess, s, tol, max_iter=50):
    """Damped Newton for z - v + F(z)/|F(z)|^(1-1/s) = 0."""
    z = np.asarray(z_guess, dtype=float).copy()
    a = 1.0 / s - 1.0
    eye = np.eye(z.size)

    def parts(z):
        f = oracle.eval(z)
        g, n = _scaled_field(f, s)
        return f, n, z - v + g

    f, n, r = parts(z)
    rn = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if rn <= tol:
            return z
        jac = oracle.jacobian(z)
        if s == 1:
            dg = jac
        else:
            if n == 0.0:
                break
            dg = n**a * jac + a * n ** (a - 2.0) * np.outer(f, f @ jac)
        try:
            step = np.linalg.solve(eye + dg, -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-10:
            trial = z + t * step
            ft, nt, rt = parts(trial)
            rtn = float(np.linalg.norm(rt))
            if rtn < rn:
                break
            t *= 0.5
        else:
            break
        z, f, n, r, rn = trial, ft, nt, rt, rtn
    if rn <= tol:
        return z
    raise IntegrationError(f"algebraic constraint unsolved (residual {rn:.3e})")


def integrate_re_ds(oracle, z0, config: ContinuousConfig) -> Trajectory:
    """Classical RK4 on u with the constraint re-solved at every stage."""
    z0 = np.asarray(z0, dtype=float).copy()
    if float(np.linalg.norm(oracle.eval(z0))) == 0.0:
        raise PreconditionError("F(z0) = 0: the start point is already stationary")
    s, dt, tol = config.s, config.dt, config.algebraic_tolerance
    traj = Trajectory(z0, config)
    u = np.zeros_like(z0)
    t = 0.0
    z_prev = z0

    def stage(u_stage, guess):
        z = solve_constraint(oracle, z0 + u_stage, guess, s, tol, config.max_newton)
        f = oracle.eval(z)
        g, n = _scaled_field(f, s)
        return -g, z, n

    try:
        k1, z, n = stage(u, z_prev)
    except IntegrationError as err:
        err.last_good_t = None
        raise
    traj._append(Sample(t, u.copy(), z0 + u, z.copy(), n))
    n_steps = int(math.ceil(config.t_end / dt - 1e-9))
    for i in range(1, n_steps + 1):
        h = min(dt, config.t_end - t)
        if n < config.norm_floor:
            traj.stop_reason = "norm_floor"
            break
        try:
            k2, z2, _ = stage(u + 0.5 * h * k1, z)
            k3, z3, _ = stage(u + 0.5 * h * k2, z2)
            k4, z4, _ = stage(u + h * k3, z3)
            u = u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = min(i * dt, config.t_end)
            k1, z, n = stage(u, z4)
        except IntegrationError as err:
            err.last_good_t = t
            raise
        if i % config.record_every == 0 or i == n_steps or n < config.norm_floor:
            traj._append(Sample(t, u.copy(), z0 + u, z.copy(), n))
    if traj.stop_reason != "norm_floor" and n < config.norm_floor:
        traj.stop_reason = "norm_floor"
    return traj


def min_norm_rate(traj: Trajectory | list) -> float:
    """Least-squares slope of log(min_{r<=t} |F|) against log t on [t_end/10, t_end].

    Accepts a Trajectory or a list of (t, min_norm) pairs.
    """
    pairs = traj.running_min_norm if isinstance(traj, Trajectory) else list(traj)
    arr = np.array(pairs, dtype=float)
    if arr.size == 0:
        raise InputError("empty trajectory")
    t, m = arr[:, 0], arr[:, 1]
    if np.count_nonzero(t > 1.0) < 10:
        raise InputError("need at least 10 samples past t = 1")
    t_end = t.max()
    mask = (t >= t_end / 10.0) & (t > 0) & (m > 0)
    if np.count_nonzero(mask) < 2:
        raise InputError("not enough positive samples in the fitting window")
    slope, _ = np.polyfit(np.log(t[mask]), np.log(m[mask]), 1)
    return float(slope)
