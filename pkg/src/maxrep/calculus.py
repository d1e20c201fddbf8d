"""Pathwise stochastic calculus on :class:`~maxrep.paths.CadlagPath`.

Each event splits into a continuous increment and a jump.  Integrals charge
the continuous increment at the integrand's previous event value and the jump
at the integrand's value just before the jump.  The Brownian
bracket of a diffusive path is the sum of squared grid increments; a
non-diffusive GRID part has zero bracket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .paths import (
    GRID_RTOL,
    CadlagPath,
    _sample,
    combine,
    linear_combination,
    max_abs_difference,
    merged_times,
    running_max,
    same_horizon,
    support_check,
)


@dataclass(frozen=True)
class PathDecomposition:
    continuous_part: CadlagPath
    jump_part: CadlagPath


def decompose(x: CadlagPath) -> PathDecomposition:
    c_inc = x.continuous_increments
    cont = x.initial_value + np.cumsum(c_inc)
    jump = np.cumsum(x.jump_sizes)
    grid = ~x.jumps | (c_inc != 0)
    continuous = x.replace(times=x.times[grid], values=cont[grid],
                           jumps=np.zeros(int(grid.sum()), dtype=bool))
    jumps = x.replace(initial_value=0.0, times=x.times[x.jumps],
                      values=jump[x.jumps], jumps=np.ones(int(x.jumps.sum()), dtype=bool),
                      diffusive=False)
    return PathDecomposition(continuous, jumps)


def integrate_left(h: CadlagPath, x: CadlagPath) -> CadlagPath:
    """``t -> sum_{s<=t} h(s-) dX(s)`` over the events of ``x``."""
    horizon = same_horizon(h, x)
    if not x.times.size:
        return CadlagPath.constant(0.0, horizon, x.tail)
    ts = x.times
    jump_terms = (h.value_at(ts) - h.jump_at(ts)) * x.jump_sizes
    values = np.cumsum(h.previous_value_at(ts) * x.continuous_increments + jump_terms)
    return CadlagPath._make(0.0, ts, values, x.jumps, horizon, x.tail, x.diffusive,
                            np.where(x.jumps, jump_terms, 0.0))


def covariation(x: CadlagPath, y: CadlagPath) -> CadlagPath:
    """Jump covariation plus, for two diffusive paths, the shared grid bracket."""
    horizon = same_horizon(x, y)
    times = np.intersect1d(x.times, y.times, assume_unique=True)
    vx, jx, _ = _sample(x, times)
    vy, jy, _ = _sample(y, times)
    jump_prod = jx * jy
    prod = jump_prod
    if x.diffusive and y.diffusive:
        cx = vx - x.previous_value_at(times) - jx
        cy = vy - y.previous_value_at(times) - jy
        prod = prod + cx * cy
    keep = prod != 0
    jumps = jump_prod[keep] != 0
    return CadlagPath._make(0.0, times[keep], np.cumsum(prod[keep]), jumps, horizon, x.tail,
                            False, np.where(jumps, jump_prod[keep], 0.0))


def stoch_exp(x: CadlagPath) -> CadlagPath:
    """Doleans-Dade exponential: ``exp(X^c - [X^c]/2) * prod(1 + dX)``."""
    c = x.continuous_increments
    j = x.jump_sizes
    log_inc = c - 0.5 * c * c if x.diffusive else c
    # step by step so a factor 1 + dX = 0 absorbs exactly
    values = np.empty(c.shape)
    sizes = np.empty(c.shape)
    e = 1.0
    for k in range(c.size):
        pre = e * np.exp(log_inc[k]) if log_inc[k] else e
        e = pre * (1.0 + j[k])
        values[k] = e
        sizes[k] = pre * j[k]
    return x._derive(initial_value=1.0, values=values, jump_sizes=np.where(x.jumps, sizes, 0.0))


def ratio_decomposition(u: CadlagPath) -> tuple[CadlagPath, float]:
    """``Z = U/U*`` and the residual against ``1 + (1/U*_-).U - (1/U*_-).U*``."""
    if u.initial_value != 1.0:
        raise ValueError(f"U(0) must be 1, got {u.initial_value}")
    ustar = running_max(u)
    z = combine(np.divide, u, ustar, times=u.times)
    inv = ustar.map(np.reciprocal)
    expected = linear_combination([1.0, -1.0], [integrate_left(inv, u), integrate_left(inv, ustar)])
    residual = float(np.max(np.abs(z.values - 1.0 - expected.value_at(u.times)))) \
        if u.times.size else 0.0
    return z, residual


def gexp_forward(w: CadlagPath, rtol=None) -> tuple[CadlagPath, bool]:
    """``U = 1 + E(gamma)_- . w`` with ``gamma`` the running max of ``w`` (floored at 0).

    ``ok`` asserts ``U >= 0`` and ``U* = E(gamma)``.  The comparison is exact up
    to 1e-12 for pure-jump ``w``; with a GRID part the left-point integral
    carries an O(dt) error, so the default tolerance is ``4 * max grid step``.
    """
    if w.initial_value != 0.0:
        raise ValueError("w must start at 0")
    gamma = running_max(w).map(lambda v: np.maximum(v, 0.0))
    gap = combine(np.subtract, gamma, w)
    bad = np.nonzero(gap.all_values > 1.0 + 1e-12)[0]
    if bad.size:
        t = 0.0 if bad[0] == 0 else float(gap.times[bad[0] - 1])
        raise ValueError(f"gamma - w > 1 first at t={t}")
    eg = stoch_exp(gamma)
    u = integrate_left(eg, w).map(lambda v: v + 1.0)
    if rtol is None:
        rtol = 1e-12 if w.jump_only else 4.0 * w.max_grid_step()
    ustar = running_max(u)
    times = merged_times(ustar, eg)
    a = np.concatenate(([ustar.initial_value], ustar.value_at(times)))
    b = np.concatenate(([eg.initial_value], eg.value_at(times)))
    ok = bool(np.all(u.all_values >= -rtol) and np.all(np.abs(a - b) <= rtol * np.abs(b)))
    return u, ok


def supmultip_transform(x: CadlagPath, v: CadlagPath, T: float) -> tuple[CadlagPath, bool]:
    """``Y = e^v X`` with the check ``Y* = e^v X*``.

    Raises ``ValueError`` naming the violated precondition.
    """
    same_horizon(x, v)
    if np.min(x.all_values) < 0:
        raise ValueError("precondition: X must be non-negative")
    if np.any(v.increments < 0):
        raise ValueError("precondition: v must be non-decreasing")
    if v.times.size and v.increments[v.times > T].any():
        raise ValueError("precondition: v must be stopped at T")
    xstar = running_max(x)
    # {X_- = X*_-}: at t compare the values just before any jump; for a
    # continuous increment the start of its cell also counts
    def many(ts, left):
        if left:
            return np.isclose(x.previous_value_at(ts), xstar.previous_value_at(ts),
                              rtol=GRID_RTOL, atol=0.0)
        return np.isclose(x.value_at(ts) - x.jump_at(ts), xstar.value_at(ts) - xstar.jump_at(ts),
                          rtol=GRID_RTOL, atol=0.0)

    def carrier(t, left):
        return bool(many(t, left))
    carrier.many = many
    report = support_check(v, carrier)
    if not report.carried:
        raise ValueError(f"precondition: dv not carried on {{X_- = X*_-}} (t={report.first_escape})")
    for t in np.intersect1d(v.times[v.jumps], x.times[x.jumps]):
        if v.jump_at(t) != 0 and x.jump_at(t) < 0:
            raise ValueError(f"precondition: dv * dX * 1(dX<0) != 0 at t={t}")
    if np.isfinite(T) and T <= x.horizon:
        if not many(np.array([T]), False)[0]:
            raise ValueError("precondition: X(T-) != X*(T-)")
    y = combine(lambda a, b: np.exp(b) * a, x, v)
    expected = combine(lambda a, b: np.exp(b) * a, xstar, v)
    ystar = running_max(y)
    diff = max_abs_difference(ystar, expected)
    scale = max(1.0, float(np.max(np.abs(expected.all_values))))
    return y, bool(diff <= 1e-12 * scale)


def integration_by_parts_residual(x: CadlagPath, y: CadlagPath) -> float:
    """``max |X Y - X_0 Y_0 - X_-.Y - Y_-.X - [X,Y]|`` over events."""
    prod = combine(np.multiply, x, y)
    lhs = prod.map(lambda v: v - x.initial_value * y.initial_value)
    rhs = linear_combination([1.0, 1.0, 1.0],
                             [integrate_left(x, y), integrate_left(y, x), covariation(x, y)])
    return max_abs_difference(lhs, rhs)
