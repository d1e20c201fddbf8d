"""Monte Carlo machinery: reproducible streams, generators, ensembles,
empirical martingale tests and nested conditional-probability estimators."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .paths import TRUNCATED, CadlagPath

# Expected overshoot of a Brownian maximum over its sampled maximum, in units
# of sigma * sqrt(dt): -zeta(1/2) / sqrt(2 pi).
BGK_BETA = 0.5825971579390106


def stream(master_seed: int, path_index: int, substream: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(master_seed, path_index, substream)``."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(path_index, substream))
    return np.random.Generator(np.random.Philox(seq))


def time_grid(horizon: float, dt: float, extra=()) -> np.ndarray:
    """``{0, dt, 2dt, ...} ∩ [0, horizon]`` plus ``extra`` points and the horizon."""
    n = int(math.floor(horizon / dt + 1e-9))
    pts = np.arange(n + 1) * dt
    extra = [e for e in extra if 0 <= e <= horizon]
    return np.unique(np.concatenate((pts, extra, [horizon])))


def simulate_poisson(rate: float, horizon: float, rng: np.random.Generator) -> CadlagPath:
    """Counting path with unit JUMPs at partial sums of Exp(rate) draws."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    times = []
    t = rng.exponential(1.0 / rate)
    while t <= horizon:
        times.append(t)
        t += rng.exponential(1.0 / rate)
    n = len(times)
    return CadlagPath(0.0, np.array(times), np.arange(1.0, n + 1), np.ones(n, dtype=bool),
                      horizon, TRUNCATED)


def compensated(counting: CadlagPath, rate: float, dt: float) -> CadlagPath:
    """``N_t - rate * t`` sampled on a ``dt`` grid merged with the jump times."""
    grid = time_grid(counting.horizon, dt, counting.times)
    def f(t):
        return counting.value_at(t) - rate * t
    def left(t):
        return counting.left_limit_at(t) - rate * t
    return CadlagPath.sampled(grid, f, counting.horizon, counting.tail,
                              jump_times=counting.times, left=left)


# -- ensembles ----------------------------------------------------------------

@dataclass
class Ensemble:
    scenario: str
    n_paths: int
    master_seed: int
    dt: float
    horizon: float
    bundles: list[dict[str, CadlagPath]] = field(default_factory=list)
    scalars: list[dict[str, float]] = field(default_factory=list)

    def paths(self, name: str) -> list[CadlagPath]:
        try:
            return [b[name] for b in self.bundles]
        except KeyError:
            raise KeyError(f"process {name!r} missing from ensemble {self.scenario}") from None

    def scalar(self, name: str) -> np.ndarray:
        return np.array([s[name] for s in self.scalars], dtype=float)


def build_ensemble(scenario: str, n_paths: int, master_seed: int, dt: float, horizon: float,
                   path_builder: Callable[[np.random.Generator, int], tuple[dict, dict]],
                   threads: int = 1) -> Ensemble:
    """Run ``path_builder(rng, index)`` for every path.  Streams are keyed by the
    path index, so the result does not depend on ``threads``."""
    def one(i):
        return path_builder(stream(master_seed, i), i)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_paths)))
    else:
        results = [one(i) for i in range(n_paths)]
    ens = Ensemble(scenario, n_paths, master_seed, dt, horizon)
    for bundle, scal in results:
        ens.bundles.append(bundle)
        ens.scalars.append(scal)
    return ens


# -- checks and martingale tests ----------------------------------------------

@dataclass
class Check:
    name: str
    estimate: float
    se: float
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "estimate": _clean(self.estimate), "se": _clean(self.se),
                "tol": _clean(self.tol), "pass": bool(self.passed)}


def _clean(x):
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    return x


@dataclass
class MartingaleTestReport:
    process: str
    k: float
    rows: list[Check]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def pass_fraction(self) -> float:
        return sum(r.passed for r in self.rows) / len(self.rows) if self.rows else 1.0


Functional = Callable[[CadlagPath, float], float]


def functional_library(paths: Sequence[CadlagPath], s: float) -> dict[str, Functional]:
    """Bounded weights measurable w.r.t. the path up to ``s``.

    The median threshold is computed from the ensemble at ``s`` only.
    """
    maxima = [float(np.max(p.all_values[: np.searchsorted(p.times, s, side="right") + 1]))
              for p in paths]
    med = float(np.median(maxima)) if maxima else 0.0
    return {
        "one": lambda p, s: 1.0,
        "value": lambda p, s: p.value_at(s),
        "max_below_median": lambda p, s: float(np.max(p.all_values) <= med),
        "sin_value": lambda p, s: math.sin(p.value_at(s)),
    }


def empirical_martingale_test(ensemble_or_paths, process_name: str | None,
                              checkpoints: Sequence[tuple[float, float]],
                              functionals: Mapping[str, Functional] | None = None,
                              k: float = 3.0) -> MartingaleTestReport:
    """Estimate ``E[(X_t - X_s) h(X|[0,s])]`` with its standard error.

    ``h`` only ever sees the path truncated at ``s``.  A row passes when the
    estimate lies within ``k`` standard errors of zero.
    """
    if isinstance(ensemble_or_paths, Ensemble):
        paths = ensemble_or_paths.paths(process_name)
    else:
        paths = list(ensemble_or_paths)
    rows = []
    for s, t in checkpoints:
        if s > t:
            raise ValueError("need s <= t")
        if any(t > p.horizon + 1e-12 for p in paths):
            raise ValueError(f"checkpoint {t} beyond horizon")
        funcs = functionals if functionals is not None else functional_library(paths, s)
        incr = np.array([p.value_at(t) - p.value_at(s) for p in paths])
        seen = [p.truncate(s) for p in paths]
        for name, h in funcs.items():
            w = np.array([h(p, s) for p in seen])
            x = incr * w
            n = x.size
            mean = math.fsum(x) / n
            se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
            ok = abs(mean) <= k * se if se > 0 else abs(mean) <= 1e-12
            rows.append(Check(f"{process_name or 'X'}[{s},{t}]*{name}", mean, se, k * se, ok))
    return MartingaleTestReport(process_name or "X", k, rows)


# -- nested conditional estimation ---------------------------------------------

@dataclass(frozen=True)
class Estimate:
    p: float
    se: float
    n: int
    tail_bound: float = 0.0

    def ci(self, z: float = 1.959963984540054) -> tuple[float, float]:
        return self.p - z * self.se, self.p + z * self.se


class MarkovFutures:
    """Resamples futures of a scenario from its Markov state."""

    def sample(self, state, n: int, horizon: float, rng: np.random.Generator):
        raise NotImplementedError


@dataclass
class GBMFutures(MarkovFutures):
    """Futures of ``U = exp(B - t/2)`` from the state ``(U_t, U*_t)``.

    ``log_sup`` is the supremum of ``log(U_s / U_t)`` over ``s`` in
    ``(t, t + horizon]`` with the discrete-monitoring shift ``BGK_BETA * sqrt(dt)``;
    ``terminal`` is ``U_{t+horizon} / U_t``.
    """
    dt: float = 1e-3
    chunk: int = 1000

    def sample(self, state, n, horizon, rng):
        steps = int(round(horizon / self.dt))
        sd = math.sqrt(self.dt)
        level = np.zeros(n)
        best = np.full(n, -np.inf)
        done = 0
        while done < steps:
            m = min(self.chunk, steps - done)
            inc = rng.standard_normal((n, m)) * sd - 0.5 * self.dt
            path = level[:, None] + np.cumsum(inc, axis=1)
            best = np.maximum(best, path.max(axis=1))
            level = path[:, -1]
            done += m
        return {"log_sup": best + BGK_BETA * sd, "terminal": np.exp(level)}


@dataclass
class RatioWalkFutures(MarkovFutures):
    """Futures of the ratio ``W_s / W_t`` with ``W = 2^N e^{-t}``.

    In log scale the walk is ``N ln 2 - u``; observed at jump times it is
    ``-(Gamma_n - n ln 2)``.  A run stops early once it sits ``slack`` below
    the start, where a return has probability at most ``e^{-slack}``.
    """
    slack: float = 20.0

    def sample(self, state, n, horizon, rng):
        start = float(state)  # log of the current ratio W_t / W*_t, <= 0
        log_sup = np.full(n, -np.inf)
        pos = np.full(n, start)
        clock = np.zeros(n)
        active = np.ones(n, dtype=bool)
        while active.any():
            idx = np.nonzero(active)[0]
            gaps = rng.exponential(1.0, idx.size)
            clock[idx] += gaps
            pos[idx] += math.log(2.0) - gaps
            alive = clock[idx] <= horizon
            reach = idx[alive]
            log_sup[reach] = np.maximum(log_sup[reach], pos[reach])
            stop = (~alive) | (pos[idx] < start - self.slack) | (log_sup[idx] >= 0)
            active[idx[stop]] = False
        # Lundberg: a walk sitting y below 0 ever returns with probability <= e^{-y}
        gap = np.maximum(-pos, 0.0)
        bound = np.where(log_sup >= 0, 0.0, np.exp(-gap))
        return {"log_sup": log_sup, "tail_bound": bound}


def nested_conditional(futures: MarkovFutures | None, state, predicate, n_inner: int,
                       horizon: float, rng: np.random.Generator,
                       tail: Callable[[dict], np.ndarray] | None = None) -> Estimate:
    """Fraction of ``n_inner`` resampled futures satisfying ``predicate``.

    ``tail`` maps the sample to per-run bounds on the probability mass lost to
    truncation; their mean is reported as ``tail_bound``.
    """
    if futures is None:
        raise ValueError("scenario declares no Markov state")
    if n_inner < 1:
        raise ValueError("n_inner must be positive")
    sample = futures.sample(state, n_inner, horizon, rng)
    hits = np.asarray(predicate(sample), dtype=bool)
    if hits.shape != (n_inner,):
        raise ValueError("predicate must return one verdict per future")
    p = float(hits.mean())
    se = math.sqrt(p * (1 - p) / n_inner)
    bound = float(np.mean(np.minimum(tail(sample), 1.0))) if tail is not None else 0.0
    return Estimate(p, se, n_inner, bound)
