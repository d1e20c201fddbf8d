"""Right-continuous piecewise-constant paths and the pathwise set operators.

A :class:`CadlagPath` is an initial value plus a strictly increasing list of
events ``(time, new_value, kind)``.  ``JUMP`` events are genuine
discontinuities; ``GRID`` events are samples of a continuous part.  The
continuous part is either of finite variation (``diffusive=False``, zero
bracket) or a diffusion sample (``diffusive=True``).

A JUMP event may also carry continuous motion accrued since the previous
event: its ``jump_size`` is then smaller than its increment, and the left
limit at the event is ``value - jump_size``.  By default a JUMP event's whole
increment is the jump.  GRID events have jump size 0, and their left limit is
the previous event value (left-point convention).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

JUMP = "JUMP"
GRID = "GRID"
ABSORBED = "ABSORBED"
TRUNCATED = "TRUNCATED"

# Relative tolerance for value comparisons on paths with GRID parts.
GRID_RTOL = 1e-12

Carrier = Callable[[float, bool], bool]


@dataclass(frozen=True, eq=False)
class CadlagPath:
    initial_value: float
    times: np.ndarray
    values: np.ndarray
    jumps: np.ndarray
    horizon: float
    tail: str = ABSORBED
    diffusive: bool = False
    jump_sizes: np.ndarray | None = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        jumps = np.array(self.jumps, dtype=bool)
        if not (times.shape == values.shape == jumps.shape) or times.ndim != 1:
            raise ValueError("times, values and kinds must be 1-d and equally long")
        if times.size:
            if times[0] < 0:
                raise ValueError("event times must be nonnegative")
            if (times[1:] <= times[:-1]).any():
                raise ValueError("event times must be strictly increasing")
            if times[-1] > self.horizon:
                raise ValueError("event after horizon")
        if self.tail not in (ABSORBED, TRUNCATED):
            raise ValueError(f"unknown tail flag {self.tail!r}")
        full = np.empty(values.size + 1)
        full[0] = self.initial_value
        full[1:] = values
        if self.jump_sizes is None:
            sizes = full[1:] - full[:-1]
            sizes[~jumps] = 0.0
        else:
            sizes = np.array(self.jump_sizes, dtype=float)
            if sizes.shape != times.shape:
                raise ValueError("jump_sizes must match the events")
            if sizes[~jumps].any():
                raise ValueError("GRID events cannot carry a jump size")
        for name, arr in (("times", times), ("values", values), ("jumps", jumps),
                          ("jump_sizes", sizes)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "initial_value", float(self.initial_value))
        object.__setattr__(self, "horizon", float(self.horizon))
        full.setflags(write=False)
        object.__setattr__(self, "_all", full)

    # -- construction -----------------------------------------------------

    @classmethod
    def _make(cls, initial_value, times, values, jumps, horizon, tail, diffusive,
              jump_sizes) -> "CadlagPath":
        """Unchecked constructor for results that are valid by construction."""
        self = object.__new__(cls)
        full = np.empty(values.size + 1)
        full[0] = initial_value
        full[1:] = values
        for name, arr in (("times", times), ("values", values), ("jumps", jumps),
                          ("jump_sizes", jump_sizes), ("_all", full)):
            arr = np.asarray(arr)
            if arr.flags.writeable:
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "initial_value", float(initial_value))
        object.__setattr__(self, "horizon", float(horizon))
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "diffusive", bool(diffusive))
        return self

    @classmethod
    def from_events(cls, initial_value, events: Iterable[tuple], horizon,
                    tail=ABSORBED, diffusive=False) -> "CadlagPath":
        """Events are ``(t, value)``, ``(t, value, kind)`` or ``(t, value, JUMP, jump_size)``."""
        events = list(events)
        times = [e[0] for e in events]
        values = [e[1] for e in events]
        jumps = [(e[2] if len(e) > 2 else JUMP) == JUMP for e in events]
        sizes = None
        if any(len(e) > 3 for e in events):
            full = [initial_value] + values
            sizes = [e[3] if len(e) > 3 else (full[i + 1] - full[i] if jumps[i] else 0.0)
                     for i, e in enumerate(events)]
        return cls(initial_value, np.array(times, dtype=float),
                   np.array(values, dtype=float), np.array(jumps, dtype=bool),
                   horizon, tail, diffusive, sizes)

    @classmethod
    def constant(cls, value, horizon, tail=ABSORBED) -> "CadlagPath":
        empty = np.empty(0)
        return cls(value, empty, empty, np.empty(0, dtype=bool), horizon, tail)

    @classmethod
    def indicator_from(cls, at, horizon, height=1.0, tail=ABSORBED) -> "CadlagPath":
        """``height * 1_{[at, inf)}``; a constant zero path if ``at`` is past the horizon."""
        if at > horizon or math.isinf(at):
            return cls.constant(0.0, horizon, tail)
        if not at >= 0:
            raise ValueError("event times must be nonnegative")
        if tail not in (ABSORBED, TRUNCATED):
            raise ValueError(f"unknown tail flag {tail!r}")
        h = float(height)
        return cls._make(0.0, np.array([float(at)]), np.array([h]), np.array([True]), horizon,
                         tail, False, np.array([h]))

    @classmethod
    def sampled(cls, grid, func, horizon, tail=ABSORBED, diffusive=False,
                jump_times=(), left=None) -> "CadlagPath":
        """Sample ``func`` on ``grid`` (0 excluded from events); times in
        ``jump_times`` become JUMP events.

        ``left`` gives the left limits at the jump times.  Without it the whole
        increment since the previous grid point counts as the jump.
        """
        grid = np.asarray(grid, dtype=float)
        initial = float(func(np.array([0.0]))[0])
        times = grid[grid > 0]
        values = np.asarray(func(times), dtype=float)
        jumps = np.isin(times, np.asarray(jump_times, dtype=float))
        sizes = None
        if left is not None:
            sizes = np.zeros(times.shape)
            sizes[jumps] = values[jumps] - np.asarray(left(times[jumps]), dtype=float)
        return cls(initial, times, values, jumps, horizon, tail, diffusive, sizes)

    def replace(self, **changes) -> "CadlagPath":
        fields = dict(initial_value=self.initial_value, times=self.times,
                      values=self.values, jumps=self.jumps, horizon=self.horizon,
                      tail=self.tail, diffusive=self.diffusive, jump_sizes=self.jump_sizes)
        # new values invalidate the recorded jump sizes unless they are given
        if "jump_sizes" not in changes and changes.keys() & {"initial_value", "times",
                                                             "values", "jumps"}:
            fields["jump_sizes"] = None
        fields.update(changes)
        return CadlagPath(**fields)

    def _derive(self, **changes) -> "CadlagPath":
        """``replace`` without validation; every change must be explicit and consistent."""
        fields = dict(initial_value=self.initial_value, times=self.times,
                      values=self.values, jumps=self.jumps, horizon=self.horizon,
                      tail=self.tail, diffusive=self.diffusive, jump_sizes=self.jump_sizes)
        fields.update(changes)
        return CadlagPath._make(**fields)

    # -- queries ----------------------------------------------------------

    def __len__(self):
        return self.times.size

    @property
    def jump_only(self) -> bool:
        return bool(np.all(self.jumps))

    @property
    def kinds(self) -> list[str]:
        return [JUMP if j else GRID for j in self.jumps]

    @property
    def all_values(self) -> np.ndarray:
        """Initial value followed by the event values (read-only)."""
        return self._all

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.all_values)

    @property
    def continuous_increments(self) -> np.ndarray:
        """Increment of each event minus its jump size."""
        return self.increments - self.jump_sizes

    @property
    def pre_jump_values(self) -> np.ndarray:
        """Event values with the jump removed (equal to the value at GRID events)."""
        return self.values - self.jump_sizes

    @property
    def final_value(self) -> float:
        return float(self.values[-1]) if self.times.size else self.initial_value

    def events(self):
        for t, v, j in zip(self.times, self.values, self.jumps):
            yield float(t), float(v), JUMP if j else GRID

    def value_at(self, t):
        """Right-continuous value; vectorised over ``t``."""
        idx = np.searchsorted(self.times, t, side="right")
        out = self.all_values[idx]
        return float(out) if np.ndim(out) == 0 else out

    def _event_index(self, t):
        """Index of the event at exactly ``t`` (or -1), vectorised."""
        idx = np.searchsorted(self.times, t, side="left")
        if self.times.size == 0:
            return np.full(np.shape(idx), -1), idx
        idx_c = np.minimum(idx, self.times.size - 1)
        hit = (idx < self.times.size) & (self.times[idx_c] == t)
        return np.where(hit, idx_c, -1), idx

    def previous_value_at(self, t):
        """Value after the last event strictly before ``t``."""
        idx = np.searchsorted(self.times, t, side="left")
        out = self.all_values[idx]
        return float(out) if np.ndim(out) == 0 else out

    def left_limit_at(self, t):
        """Value just before the event at ``t``; ``value_at(t)`` when there is none.

        At a JUMP event this is ``value - jump_size``; at a GRID event it is
        the previous event value.
        """
        k, idx = self._event_index(t)
        out = self.all_values[idx]
        if self.times.size:
            kc = np.maximum(k, 0)
            out = np.where((k >= 0) & self.jumps[kc], self.pre_jump_values[kc], out)
        return float(out) if np.ndim(out) == 0 else out

    def jump_at(self, t):
        """Jump size at ``t`` (0 where there is no JUMP event); vectorised."""
        k, _ = self._event_index(t)
        out = np.where(k >= 0, self.jump_sizes[np.maximum(k, 0)], 0.0) if self.times.size \
            else np.zeros(np.shape(t))
        return float(out) if np.ndim(out) == 0 else out

    def truncate(self, t) -> "CadlagPath":
        """The path observed up to time ``t`` (events after ``t`` dropped)."""
        k = np.searchsorted(self.times, t, side="right")
        return self._derive(times=self.times[:k], values=self.values[:k],
                            jumps=self.jumps[:k], jump_sizes=self.jump_sizes[:k],
                            horizon=min(self.horizon, max(t, 0.0)), tail=TRUNCATED)

    def canonical(self) -> "CadlagPath":
        """Drop events that do not change the value."""
        keep = self.increments != 0
        return self._derive(times=self.times[keep], values=self.values[keep],
                            jumps=self.jumps[keep], jump_sizes=self.jump_sizes[keep])

    def map(self, func) -> "CadlagPath":
        values = np.asarray(func(self.values), dtype=float)
        sizes = np.where(self.jumps, values - np.asarray(func(self.pre_jump_values), dtype=float),
                         0.0)
        return self._derive(initial_value=float(func(np.array([self.initial_value]))[0]),
                            values=values, jump_sizes=sizes)

    def max_grid_step(self) -> float:
        grid = np.concatenate(([0.0], self.times[~self.jumps]))
        return float(np.max(np.diff(grid))) if grid.size > 1 else 0.0

    # -- CSV --------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "value", "kind"])
        writer.writerow([repr(0.0), repr(self.initial_value), "INITIAL"])
        for t, v, k in self.events():
            writer.writerow([repr(t), repr(v), k])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon=None, tail=ABSORBED, diffusive=False):
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or rows[0]["kind"] != "INITIAL":
            raise ValueError("CSV must start with the t=0 INITIAL row")
        events = [(float(r["t"]), float(r["value"]), r["kind"]) for r in rows[1:]]
        if horizon is None:
            horizon = events[-1][0] if events else 0.0
        return cls.from_events(float(rows[0]["value"]), events, horizon, tail, diffusive)


def same_horizon(*paths: CadlagPath) -> float:
    h = paths[0].horizon
    for p in paths[1:]:
        if not math.isclose(p.horizon, h, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"mismatched horizons {h} and {p.horizon}")
    return h


def merged_times(*paths: CadlagPath) -> np.ndarray:
    return np.unique(np.concatenate([p.times for p in paths]))


def _has_jump_at(path: CadlagPath, times: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(path.times, times)
    idx_c = np.minimum(idx, max(path.times.size - 1, 0))
    if path.times.size == 0:
        return np.zeros(times.shape, dtype=bool)
    return (idx < path.times.size) & (path.times[idx_c] == times) & path.jumps[idx_c]


def _sample(path: CadlagPath, times: np.ndarray):
    """Value, jump size and JUMP flag of ``path`` at each of ``times``."""
    idx = np.searchsorted(path.times, times)
    if path.times.size == 0:
        return np.full(times.shape, path.initial_value), np.zeros(times.shape), \
            np.zeros(times.shape, dtype=bool)
    idx_c = np.minimum(idx, path.times.size - 1)
    hit = (idx < path.times.size) & (path.times[idx_c] == times)
    # GRID events carry size 0, so masking by ``hit`` alone gives the jump size
    return path.all_values[idx + hit], path.jump_sizes[idx_c] * hit, hit & path.jumps[idx_c]


def _tail_of(paths) -> str:
    return TRUNCATED if any(p.tail == TRUNCATED for p in paths) else ABSORBED


def combine(func, *paths: CadlagPath, times=None) -> CadlagPath:
    """Pointwise ``func(*values)`` on the merged event grid.

    An event of the result is a JUMP where some operand jumps and the result's
    jump ``func(values) - func(values just before the jump)`` is nonzero.
    """
    horizon = same_horizon(*paths)
    build = CadlagPath._make if times is None else CadlagPath
    times = merged_times(*paths) if times is None else np.asarray(times, dtype=float)
    init = func(*[np.array([p.initial_value]) for p in paths])
    sampled = [_sample(p, times) for p in paths]
    now = [v for v, _, _ in sampled]
    values = np.asarray(func(*now), dtype=float)
    any_jump = np.zeros(times.shape, dtype=bool)
    for _, _, has in sampled:
        any_jump |= has
    sizes = np.zeros(times.shape)
    if any_jump.any():
        before = [v[any_jump] - j[any_jump] for v, j, _ in sampled]
        sizes[any_jump] = values[any_jump] - np.asarray(func(*before), dtype=float)
    jumps = any_jump & (sizes != 0)
    if values.shape != times.shape:
        raise ValueError("func must return one value per time")
    return build(float(np.asarray(init)[0]), times, values, jumps, horizon,
                 _tail_of(paths), any(p.diffusive for p in paths), np.where(jumps, sizes, 0.0))


def linear_combination(coeffs: Sequence[float], paths: Sequence[CadlagPath]) -> CadlagPath:
    """``sum c_i X_i`` on the merged grid.

    An event is a JUMP iff the combined JUMP increments do not cancel.
    """
    horizon = same_horizon(*paths)
    times = merged_times(*paths)
    init = sum(c * p.initial_value for c, p in zip(coeffs, paths))
    values = np.zeros(times.shape)
    jump_part = np.zeros(times.shape)
    any_jump = np.zeros(times.shape, dtype=bool)
    for c, p in zip(coeffs, paths):
        v, j, has = _sample(p, times)
        values += c * v
        jump_part += c * j
        any_jump |= has
    jumps = any_jump & (jump_part != 0)
    return CadlagPath._make(float(init), times, values, jumps, horizon, _tail_of(paths),
                            any(p.diffusive for p in paths), np.where(jumps, jump_part, 0.0))


def events_equal(a: CadlagPath, b: CadlagPath) -> bool:
    """Exact equality of canonical event lists (no-op events removed)."""
    a, b = a.canonical(), b.canonical()
    return (a.initial_value == b.initial_value
            and np.array_equal(a.times, b.times)
            and np.array_equal(a.values, b.values)
            and np.array_equal(a.jumps, b.jumps)
            and np.array_equal(a.jump_sizes, b.jump_sizes))


def max_abs_difference(a: CadlagPath, b: CadlagPath) -> float:
    times = merged_times(a, b)
    d0 = abs(a.initial_value - b.initial_value)
    if times.size == 0:
        return d0
    return max(d0, float(np.max(np.abs(a.value_at(times) - b.value_at(times)))))


def max_relative_difference(a: CadlagPath, b: CadlagPath) -> float:
    times = merged_times(a, b)
    va = np.concatenate(([a.initial_value], a.value_at(times)))
    vb = np.concatenate(([b.initial_value], b.value_at(times)))
    scale = np.maximum(np.abs(va), np.abs(vb))
    diff = np.abs(va - vb)
    rel = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    return float(np.max(rel))


# -- running maximum --------------------------------------------------------

def running_max(path: CadlagPath) -> CadlagPath:
    """``t -> sup_{s<=t} path(s)``; events only where the maximum increases.

    Left limits at JUMP events count, so a rise just before a downward jump
    still moves the maximum (as a GRID increment).
    """
    # interleave initial, pre-jump and event values: x0, pre_1, v_1, pre_2, v_2, ...
    seq = np.empty(2 * path.times.size + 1)
    seq[0] = path.initial_value
    seq[1::2] = path.pre_jump_values
    seq[2::2] = path.values
    acc = np.maximum.accumulate(seq)
    cummax = acc[0::2]
    before = acc[1::2]
    up = cummax[1:] > cummax[:-1]
    sizes = cummax[1:] - before
    jumps = sizes > 0
    return path._derive(times=path.times[up], values=cummax[1:][up], jumps=jumps[up],
                        jump_sizes=np.where(jumps, sizes, 0.0)[up])


# -- carriers and support -----------------------------------------------------

def time_carrier(pred: Callable[[float], bool]) -> Carrier:
    """Carrier from a predicate on time; ``left`` evaluates just before ``t``."""
    def carrier(t, left):
        return bool(pred(np.nextafter(t, -np.inf) if left else t))
    return carrier


def _close(x, y, exact):
    if exact:
        return x == y
    return np.abs(x - y) <= GRID_RTOL * np.maximum(np.maximum(np.abs(x), np.abs(y)), 1.0)


def level_carrier(path: CadlagPath, level: float, exact=None) -> Carrier:
    """``{path = level}``."""
    exact = path.jump_only if exact is None else exact

    def many(ts, left):
        v = path.left_limit_at(ts) if left else path.value_at(ts)
        return _close(v, level, exact)

    def carrier(t, left):
        return bool(many(t, left))
    carrier.many = many
    return carrier


def equal_carrier(a: CadlagPath, b: CadlagPath, exact=None) -> Carrier:
    """``{a = b}``; exact for JUMP-only paths, relative 1e-12 otherwise."""
    exact = (a.jump_only and b.jump_only) if exact is None else exact

    def many(ts, left):
        if left:
            return _close(a.left_limit_at(ts), b.left_limit_at(ts), exact)
        return _close(a.value_at(ts), b.value_at(ts), exact)

    def carrier(t, left):
        return bool(many(t, left))
    carrier.many = many
    return carrier


@dataclass(frozen=True)
class SupportReport:
    carried: bool
    escaped_mass: float
    total_mass: float
    first_escape: float | None = None


def support_check(increasing: CadlagPath, carrier: Carrier, include_initial=False,
                  tol=None) -> SupportReport:
    """Is the measure ``d(increasing)`` carried by ``carrier``?

    Jump sizes are charged to their event time.  Continuous increments stand
    for mass spread over the step ending at the event, so they are carried if
    the carrier holds at the time or just before it.  With ``include_initial``
    the initial value counts as an atom at 0.
    """
    inc = increasing.increments
    if np.any(inc < 0) or np.any(increasing.jump_sizes < 0):
        raise ValueError("support_check needs a non-decreasing path")
    jump = increasing.jump_sizes
    cont = inc - jump
    escaped = 0.0
    first = None
    if include_initial and increasing.initial_value > 0 and not carrier(0.0, False):
        escaped += increasing.initial_value
        first = 0.0
    many = getattr(carrier, "many", None)
    if many is not None and increasing.times.size:
        ts = increasing.times
        at = np.asarray(many(ts, False), dtype=bool)
        ok_cont = at | np.asarray(many(ts, True), dtype=bool)
        lost = np.where(at, 0.0, jump) + np.where(ok_cont, 0.0, cont)
        bad = lost != 0
        if bad.any():
            escaped += float(np.sum(lost))
            if first is None:
                first = float(ts[bad][0])
    else:
        for t, c, j in zip(increasing.times, cont, jump):
            if c == 0 and j == 0:
                continue
            at = carrier(t, False)
            lost = (0.0 if at else j) + (0.0 if at or carrier(t, True) else c)
            if lost:
                escaped += lost
                if first is None:
                    first = float(t)
    total = float(np.sum(inc)) + (increasing.initial_value if include_initial else 0.0)
    if tol is None:
        tol = 0.0 if increasing.jump_only else GRID_RTOL * max(total, 1.0)
    return SupportReport(escaped <= tol, float(escaped), total, first)


# -- closed time sets -------------------------------------------------------

@dataclass(frozen=True)
class SojournTimes:
    G: float | None
    g: float | None
    D: float
    d: float
    immediate: bool = False


@dataclass(frozen=True)
class ClosedTimeSet:
    components: tuple[tuple[float, float], ...]
    horizon: float = math.inf

    def __post_init__(self):
        comps = tuple((float(a), float(b)) for a, b in self.components)
        for a, b in comps:
            if a > b:
                raise ValueError(f"bad interval [{a}, {b}]")
        for (_, b0), (a1, _) in zip(comps, comps[1:]):
            if a1 <= b0:
                raise ValueError("components must be sorted and disjoint")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_points(cls, points, horizon=math.inf):
        return cls(tuple((p, p) for p in sorted(set(points))), horizon)

    def __contains__(self, t):
        return any(a <= t <= b for a, b in self.components)

    def is_finite(self) -> bool:
        return all(a == b for a, b in self.components)

    def right_isolated(self) -> list[float]:
        """Points ``t`` of the set with ``t < D_t``."""
        return [b for _, b in self.components]


def sojourn_query(s: ClosedTimeSet, t: float) -> SojournTimes:
    G = g = None
    D = d = math.inf
    immediate = False
    for a, b in s.components:
        if a <= t:
            G = min(b, t)
        if a < t:
            g = min(b, t)
        if b >= t and math.isinf(d):
            d = max(a, t)
        if b > t and math.isinf(D):
            D = max(a, t)
            immediate = a <= t
    return SojournTimes(G, g, D, d, immediate)


# -- Skorokhod reflection -----------------------------------------------------

def skorokhod_solve(x: CadlagPath) -> CadlagPath:
    """Minimal non-decreasing ``Y`` with ``X + Y >= 0`` pushing only on ``{X+Y=0}``."""
    m = running_max(x.map(np.negative)).map(lambda v: np.maximum(v, 0.0))
    vals = np.concatenate(([m.initial_value], m.value_at(x.times)))
    sizes = np.asarray(m.jump_at(x.times)) if x.times.size else np.empty(0)
    return x.replace(initial_value=vals[0], values=vals[1:], jumps=sizes != 0,
                     jump_sizes=np.where(sizes != 0, sizes, 0.0))


def verify_skorokhod(x: CadlagPath, y: CadlagPath) -> bool:
    same_horizon(x, y)
    inc = y.increments
    if y.initial_value < 0 or np.any(inc < 0):
        return False
    total = combine(np.add, x, y)
    exact = x.jump_only and y.jump_only
    scale = max(1.0, float(np.max(np.abs(total.all_values))))
    floor = 0.0 if exact else -GRID_RTOL * scale
    if np.min(total.all_values) < floor:
        return False
    report = support_check(y, level_carrier(total, 0.0, exact=exact), include_initial=True)
    if not exact:
        return report.escaped_mass <= GRID_RTOL * max(report.total_mass, 1.0)
    return report.carried
