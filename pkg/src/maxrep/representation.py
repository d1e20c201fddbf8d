"""Construct, extract and certify ``Z = U / U*`` representations, plus the
non-uniqueness transforms acting on a compensator or on ``U`` itself."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import covariation
from .paths import (
    ABSORBED,
    TRUNCATED,
    CadlagPath,
    combine,
    level_carrier,
    linear_combination,
    merged_times,
    running_max,
    same_horizon,
    support_check,
)

VALID = "VALID"
VALID_ON_HORIZON = "VALID-ON-HORIZON"
REFUTED = "REFUTED"

JUMP_TOL = 1e-12
MIXED_TOL = 1e-9


def _fv_step(u, ustar, dx):
    """Exact solution of ``dU = U* dx`` across one step of a continuous,
    monotone, finite-variation driver."""
    if dx <= 0:
        return u + ustar * dx, ustar
    room = (ustar - u) / ustar if ustar > 0 else 0.0
    if dx <= room:
        u = u + ustar * dx
        return u, max(ustar, u)
    ustar = ustar * math.exp(dx - room)
    return ustar, ustar


def _event_parts(times: np.ndarray, paths) -> tuple[np.ndarray, np.ndarray]:
    """Continuous and jump parts of ``sum(paths)`` at each merged time."""
    cont = np.zeros(times.size)
    jump = np.zeros(times.size)
    for p in paths:
        j = np.asarray(p.jump_at(times))
        jump += j
        cont += p.value_at(times) - p.previous_value_at(times) - j
    return cont, jump


def sde_solve_mmr(z: CadlagPath, gamma: CadlagPath) -> CadlagPath:
    """Solve ``U = 1 + U*_- . (Z + gamma)`` on the merged event grid.

    Simultaneous events of ``Z`` and ``gamma`` are combined.  Within one event
    the continuous part (the move over the preceding grid cell) is applied
    before the jump part.  JUMP parts and diffusive GRID parts follow the
    recursion ``U += U*_- dX``; finite-variation GRID parts are integrated
    exactly, so ``e^t``-type solutions carry no discretisation error.
    """
    horizon = same_horizon(z, gamma)
    if z.initial_value != 1.0:
        raise ValueError("Z(0) must be 1")
    if np.min(z.all_values) < 0:
        raise ValueError("Z must be non-negative")
    if gamma.initial_value != 0.0 or np.any(gamma.increments < 0):
        raise ValueError("gamma must be non-decreasing from 0")
    diffusive = z.diffusive or gamma.diffusive
    times = merged_times(z, gamma)
    cont, jump = _event_parts(times, (z, gamma))
    u = ustar = 1.0
    out = [0.0] * times.size
    sizes = [0.0] * times.size
    exp = math.exp
    for k, (c, j) in enumerate(zip(cont.tolist(), jump.tolist())):
        if c != 0.0:
            if diffusive:
                u += ustar * c
                ustar = max(ustar, u)
            elif c > 0.0 and u == ustar:
                u = ustar = ustar * exp(c)  # rising at the maximum
            else:
                u, ustar = _fv_step(u, ustar, c)
        before = u
        if j != 0.0:
            u += ustar * j
            ustar = max(ustar, u)
        if u < 0:
            if u < -1e-12 * ustar:
                raise ValueError(f"U < 0 at t={times[k]}: gamma is invalid for this Z")
            u = 0.0
        out[k] = u
        sizes[k] = u - before
    tail = ABSORBED if z.tail == ABSORBED and gamma.tail == ABSORBED else TRUNCATED
    sizes = np.array(sizes)
    jumps = sizes != 0.0
    return CadlagPath._make(1.0, times, np.array(out), jumps, horizon, tail, diffusive, sizes)


def extract_gamma(u: CadlagPath) -> CadlagPath:
    """``gamma = (1/U*_-) . U*``, with events only where ``U*`` rises.

    A rise at a JUMP event contributes ``dU*/U*_-``; a rise at a GRID event
    contributes ``d log U*`` for finite-variation paths (the exact integral
    for a continuous maximum) and ``dU*/U*_-`` for diffusive ones.  An event
    mixing both is split at the left limit.
    """
    if u.initial_value != 1.0:
        raise ValueError("U(0) must be 1")
    if u.times.size and np.min(u.values) < 0:
        raise ValueError("U must be non-negative")
    return _gamma_from_max(u, running_max(u))


def _gamma_from_max(u: CadlagPath, ustar: CadlagPath) -> CadlagPath:
    prev = ustar.all_values[:-1]
    before = ustar.pre_jump_values
    if u.diffusive:
        cont = (before - prev) / prev
    else:
        cont = np.log(before / prev)
    jump = ustar.jump_sizes / before
    return CadlagPath._make(0.0, ustar.times, np.cumsum(cont + jump), ustar.jumps, u.horizon,
                      u.tail, u.diffusive, jump)


@dataclass
class MmrCertificate:
    Z: CadlagPath
    gamma: CadlagPath
    U: CadlagPath
    Ustar: CadlagPath
    max_residual: float
    checks: dict = field(default_factory=dict)
    verdict: str = REFUTED
    reasons: list = field(default_factory=list)
    escaped_mass: float = 0.0  # dU* mass outside {Z = 1}

    def to_json(self, scenario: str, path_id: int) -> str:
        return json.dumps({"scenario": scenario, "path_id": path_id,
                           "residual": self.max_residual,
                           "checks": {k: ("pass" if v is True else "fail" if v is False else v)
                                      for k, v in self.checks.items()},
                           "verdict": self.verdict}, sort_keys=True)


def ratio_residual(z: CadlagPath, u: CadlagPath) -> float:
    """``max |Z - U/U*|`` over the merged grid, initial values included."""
    return _ratio_residual(z, u, running_max(u))


def _ratio_residual(z: CadlagPath, u: CadlagPath, ustar: CadlagPath) -> float:
    times = merged_times(z, u)
    zv = np.concatenate(([z.initial_value], z.value_at(times)))
    uv = np.concatenate(([u.initial_value], u.value_at(times)))
    sv = np.concatenate(([ustar.initial_value], ustar.value_at(times)))
    ratio = np.divide(uv, sv, out=np.zeros_like(uv), where=sv > 0)
    return float(np.max(np.abs(zv - ratio)))


def verify_mmr(z: CadlagPath, u: CadlagPath, A: CadlagPath | None = None,
               tol: float | None = None, martingale_ok: bool | None = None) -> MmrCertificate:
    """Certify or refute ``Z = U/U*`` on one path.

    ``martingale_ok`` carries the ensemble-level verdict of the martingale
    test of ``-A + gamma`` (or of ``U``); per-path data cannot decide it.
    """
    jump_only = z.jump_only and u.jump_only
    if tol is None:
        tol = JUMP_TOL if jump_only else MIXED_TOL
    if u.initial_value != 1.0:
        raise ValueError("U(0) must be 1")
    if u.times.size and np.min(u.values) < 0:
        raise ValueError("U must be non-negative")
    ustar = running_max(u)
    gamma = _gamma_from_max(u, ustar)
    resid = _ratio_residual(z, u, ustar)
    checks: dict = {}
    reasons = []
    checks["residual"] = resid <= tol
    if not checks["residual"]:
        reasons.append(f"max |Z - U/U*| = {resid:.3g} > {tol:g}")
    sup = support_check(ustar, level_carrier(z, 1.0, exact=jump_only))
    checks["dU*_on_Z=1"] = sup.carried
    if not sup.carried:
        reasons.append(f"dU* escapes {{Z=1}} (mass {sup.escaped_mass:.3g} at t={sup.first_escape})")
    if A is not None:
        cov = covariation(A, ustar)
        ok = bool(np.all(cov.values == 0))
        jump_times = A.times[A.jumps]
        ok = ok and not np.any(ustar.jump_at(jump_times))
        checks["[A,U*]=0"] = ok
        if not ok:
            reasons.append("[A, U*] does not vanish")
    zc = covariation(z, ustar)
    bad = [t for t in zc.times
           if not (z.left_limit_at(t) < 1.0 and z.value_at(t) == 1.0)]
    checks["[Z,U*]_on_{Z-<1=Z}"] = not bad
    if bad:
        reasons.append(f"[Z,U*] jumps off {{Z_- < 1 = Z}} at t={bad[0]}")
    if martingale_ok is not None:
        checks["martingale"] = bool(martingale_ok)
        if not martingale_ok:
            reasons.append("empirical martingale test failed")
    vanishes = u.tail == ABSORBED and u.final_value == 0.0
    checks["vanishes"] = vanishes if u.tail == ABSORBED else "truncated"
    if u.tail == ABSORBED and not vanishes:
        reasons.append("U is absorbed away from 0")
    if reasons:
        verdict = REFUTED
    elif u.tail == TRUNCATED:
        verdict = VALID_ON_HORIZON
    else:
        verdict = VALID
    return MmrCertificate(z, gamma, u, ustar, resid, checks, verdict, reasons, sup.escaped_mass)


def remove_ti_jump(u: CadlagPath, T: float, v: CadlagPath, z: CadlagPath | None = None
                   ) -> tuple[CadlagPath, dict]:
    """``U' = U e^v / (1 + U_{T-}^{-1} dU_T 1_{[T, inf)})``.

    Returns ``U'`` and the pathwise postconditions ``Z = U'/U'*`` and
    ``U* = e^{-v} (1 + U_{T-}^{-1} dU_T 1_{[T, inf)}) U'*``.
    """
    same_horizon(u, v)
    if v.jumps.any():
        raise ValueError("v must be continuous")
    finite = math.isfinite(T) and T <= u.horizon
    if finite:
        du = u.jump_at(T)
        if du <= 0:
            raise ValueError(f"need a positive jump of U at T={T}, got {du}")
        rel = du / u.left_limit_at(T)
        if z is not None and z.left_limit_at(T) != 1.0:
            raise ValueError("need Z_{T-} = 1")
    else:
        rel = 0.0
    step = CadlagPath.indicator_from(T if finite else math.inf, u.horizon, rel, u.tail)
    u_new = combine(lambda a, b, c: a * np.exp(b) / (1.0 + c), u, v, step)
    if finite:
        # U' is continuous at T by construction; drop rounding-level jumps
        at_T = u_new.times == T
        u_new = u_new.replace(jumps=u_new.jumps & ~at_T,
                              jump_sizes=np.where(at_T, 0.0, u_new.jump_sizes))
    z_ref = z if z is not None else combine(
        lambda a, b: np.divide(a, b, out=np.zeros_like(a), where=b > 0), u, running_max(u))
    ustar = running_max(u)
    rebuilt = combine(lambda s, b, c: np.exp(-b) * (1.0 + c) * s, running_max(u_new), v, step)
    times = merged_times(ustar, rebuilt)
    lhs = np.concatenate(([ustar.initial_value], ustar.value_at(times)))
    rhs = np.concatenate(([rebuilt.initial_value], rebuilt.value_at(times)))
    scale = max(1.0, float(np.max(np.abs(lhs))))
    checks = {
        "Z=U'/U'*": ratio_residual(z_ref, u_new) <= MIXED_TOL,
        "U*=e^-v(1+..)U'*": float(np.max(np.abs(lhs - rhs))) <= MIXED_TOL * scale,
    }
    return u_new, checks


def compensator_swap_ti(gamma: CadlagPath, T: float, xi: float, v: CadlagPath,
                        v_prime: CadlagPath) -> CadlagPath:
    """``gamma - (dgamma_T 1_{[T,inf)} - v) + (xi 1{dgamma_T>0} 1_{[T,inf)} - v')``."""
    h = same_horizon(gamma, v, v_prime)
    finite = math.isfinite(T) and T <= h
    jump = gamma.jump_at(T) if finite else 0.0
    if finite and jump <= 0:
        raise ValueError(f"need a positive jump of gamma at T={T}")
    if xi < 0 or xi > jump + 0.0 and finite:
        raise ValueError(f"need 0 <= xi <= dgamma_T = {jump}")
    big = CadlagPath.indicator_from(T if finite else math.inf, h, jump, gamma.tail)
    small = CadlagPath.indicator_from(T if finite else math.inf, h, xi if jump > 0 else 0.0,
                                      gamma.tail)
    out = linear_combination([1.0, -1.0, 1.0, 1.0, -1.0], [gamma, big, v, small, v_prime])
    out = out._derive(initial_value=out.initial_value + 0.0)  # no -0.0
    bad = np.nonzero(out.increments < 0)[0]
    if bad.size:
        raise ValueError(f"gamma-hat decreases first at t={out.times[bad[0]]}")
    return out
