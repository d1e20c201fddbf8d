import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxrep.paths import (
    GRID,
    JUMP,
    TRUNCATED,
    CadlagPath,
    ClosedTimeSet,
    combine,
    events_equal,
    level_carrier,
    linear_combination,
    running_max,
    same_horizon,
    skorokhod_solve,
    sojourn_query,
    support_check,
    time_carrier,
    verify_skorokhod,
)

from .strategies import step_paths


def grid_path(func, horizon=1.0, n=100, **kw):
    grid = np.linspace(0, horizon, n + 1)
    return CadlagPath.sampled(grid, func, horizon, **kw)


class TestCadlagPath:
    def test_rejects_unsorted_times(self):
        with pytest.raises(ValueError):
            CadlagPath.from_events(0.0, [(2, 1), (1, 2)], 5)

    def test_rejects_event_past_horizon(self):
        with pytest.raises(ValueError):
            CadlagPath.from_events(0.0, [(6, 1)], 5)

    def test_rejects_unknown_tail(self):
        with pytest.raises(ValueError):
            CadlagPath.constant(0.0, 1.0, tail="OPEN")

    def test_value_and_left_limit(self):
        p = CadlagPath.from_events(1.0, [(1.0, 3.0), (2.0, 2.0)], 5)
        assert p.value_at(0.5) == 1.0
        assert p.value_at(1.0) == 3.0
        assert p.left_limit_at(1.0) == 1.0
        assert p.jump_at(2.0) == -1.0
        assert p.jump_at(1.5) == 0.0
        assert list(p.value_at(np.array([0.0, 1.0, 2.5]))) == [1.0, 3.0, 2.0]

    def test_input_arrays_are_not_frozen(self):
        vals = np.array([1.0, 2.0])
        CadlagPath(0.0, np.array([1.0, 2.0]), vals, np.array([True, True]), 3.0)
        vals[0] = 5.0  # caller's array stays writable

    def test_truncate_marks_tail(self):
        p = CadlagPath.from_events(0.0, [(1, 1), (2, 2)], 5)
        q = p.truncate(1.5)
        assert q.tail == TRUNCATED and q.final_value == 1.0 and q.horizon == 1.5

    def test_csv_round_trip(self):
        p = CadlagPath.from_events(0.5, [(0.25, 1.0, JUMP), (0.5, 1.5, GRID)], 1.0)
        text = p.to_csv()
        assert text.splitlines()[0] == "t,value,kind"
        assert text.splitlines()[1].endswith("INITIAL")
        assert events_equal(CadlagPath.from_csv(text, horizon=1.0), p)

    def test_csv_requires_initial_row(self):
        with pytest.raises(ValueError):
            CadlagPath.from_csv("t,value,kind\n1.0,2.0,JUMP\n")

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            same_horizon(CadlagPath.constant(0, 1), CadlagPath.constant(0, 2))

    def test_linear_combination_cancelling_jumps_are_not_jumps(self):
        a = CadlagPath.indicator_from(1.0, 3.0)
        b = CadlagPath.indicator_from(1.0, 3.0)
        d = linear_combination([1.0, -1.0], [a, b])
        assert not d.jumps.any()
        assert events_equal(d, CadlagPath.constant(0.0, 3.0))

    def test_combine_marks_jumps(self):
        a = CadlagPath.indicator_from(1.0, 3.0)
        g = grid_path(lambda t: t, horizon=3.0, n=3)
        s = combine(np.add, a, g)
        assert list(s.jumps) == [True, False, False]


class TestRunningMax:
    def test_step_example(self):
        p = CadlagPath.from_events(1.0, [(1.0, 3.0), (2.0, 2.0)], 5)
        m = running_max(p)
        assert m.initial_value == 1.0
        assert list(m.events()) == [(1.0, 3.0, JUMP)]

    def test_constant(self):
        c = CadlagPath.constant(2.5, 4)
        assert events_equal(running_max(c), c)

    def test_geometric_poisson_sample(self):
        # 2^N e^{-t} with jumps at 0.5 and 1.2: the maximum only moves at jumps
        jumps = [0.5, 1.2]
        grid = np.union1d(np.linspace(0, 3, 301), jumps)

        def w(t):
            return 2.0 ** np.searchsorted(jumps, t, side="right") * np.exp(-t)
        p = CadlagPath.sampled(grid, w, 3.0, jump_times=jumps)
        m = running_max(p)
        # enumerate candidates: t=0 value and post-jump values
        cands = [1.0, 2 * math.exp(-0.5), 4 * math.exp(-1.2)]
        expect = np.maximum.accumulate(cands)
        assert m.final_value == pytest.approx(expect[-1], rel=1e-15)
        assert set(m.times) <= set(jumps)

    @settings(max_examples=200, deadline=None)
    @given(step_paths())
    def test_dominates_and_monotone(self, p):
        m = running_max(p)
        times = np.union1d(p.times, [0.0])
        assert np.all(m.value_at(times) >= p.value_at(times))
        assert np.all(np.diff(m.all_values) >= 0)


class TestSupport:
    def test_max_is_carried_by_level_set(self):
        p = CadlagPath.from_events(1.0, [(1, 2.0), (2, 1.0), (3, 4.0)], 5)
        m = running_max(p)
        from maxrep.paths import equal_carrier
        rep = support_check(m, equal_carrier(p, m))
        assert rep.carried and rep.escaped_mass == 0

    def test_grid_mass_outside_carrier(self):
        rep = support_check(grid_path(lambda t: t), time_carrier(lambda t: False))
        assert not rep.carried
        assert rep.escaped_mass == pytest.approx(1.0)

    def test_atom_outside(self):
        S = 0.7
        rep = support_check(CadlagPath.indicator_from(S, 2.0), time_carrier(lambda t: t < S))
        assert not rep.carried and rep.escaped_mass == 1.0 and rep.first_escape == S

    def test_grid_increment_uses_left_point(self):
        # mass of the cell ending at S is carried by [0, S)
        g = CadlagPath.from_events(0.0, [(0.5, 0.5, GRID), (1.0, 1.0, GRID)], 2.0)
        z = CadlagPath.from_events(1.0, [(1.0, 0.0, JUMP)], 2.0)
        assert support_check(g, level_carrier(z, 1.0)).carried

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            support_check(CadlagPath.from_events(1.0, [(1, 0.0)], 2), time_carrier(lambda t: True))


class TestSojourn:
    S = ClosedTimeSet(((0.0, 0.0), (1.0, 2.0)))

    def test_before_interval(self):
        r = sojourn_query(self.S, 0.5)
        assert (r.G, r.g, r.D, r.d) == (0.0, 0.0, 1.0, 1.0)

    def test_inside_interval(self):
        r = sojourn_query(self.S, 1.5)
        assert (r.G, r.g, r.D, r.d) == (1.5, 1.5, 1.5, 1.5) and r.immediate

    def test_after(self):
        r = sojourn_query(self.S, 2.5)
        assert (r.G, r.g) == (2.0, 2.0) and math.isinf(r.D) and math.isinf(r.d)

    def test_isolated_point_right_entrance(self):
        r = sojourn_query(ClosedTimeSet.from_points([0.0, 1.0]), 1.0)
        assert r.G == 1.0 and r.g == 0.0 and math.isinf(r.D) and r.d == 1.0

    def test_invalid_components(self):
        with pytest.raises(ValueError):
            ClosedTimeSet(((1.0, 2.0), (1.5, 3.0)))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=8),
           st.lists(st.floats(0, 12, allow_nan=False), min_size=2, max_size=10))
    def test_monotone(self, pts, ts):
        s = ClosedTimeSet.from_points(pts)
        ts = sorted(ts)
        rs = [sojourn_query(s, t) for t in ts]
        G = [r.G for r in rs if r.G is not None]
        assert G == sorted(G)
        D = [r.D for r in rs]
        assert D == sorted(D)
        for t, r in zip(ts, rs):
            assert r.D >= r.d >= t
            if r.g is not None:
                assert r.g <= r.G


class TestSkorokhod:
    def test_minus_t(self):
        x = grid_path(lambda t: -t)
        y = skorokhod_solve(x)
        assert np.allclose(y.values, x.times)
        assert verify_skorokhod(x, y)

    def test_nonnegative_needs_no_push(self):
        x = CadlagPath.from_events(1.0, [(1, 2.0), (2, 0.0)], 3)
        assert np.all(skorokhod_solve(x).all_values == 0)

    def test_step_example(self):
        x = CadlagPath.from_events(1.0, [(1, -2.0), (2, 0.5)], 3)
        y = skorokhod_solve(x)
        assert list(y.all_values) == [0.0, 2.0, 2.0]
        assert list(combine(np.add, x, y).all_values) == [1.0, 0.0, 2.5]
        assert verify_skorokhod(x, y)

    def test_overpush_rejected(self):
        x = grid_path(lambda t: -t)
        assert not verify_skorokhod(x, grid_path(lambda t: 2 * t))

    @settings(max_examples=200, deadline=None)
    @given(step_paths(), st.data())
    def test_minimality(self, x, data):
        y = skorokhod_solve(x)
        assert verify_skorokhod(x, y)
        if y.final_value > 0:
            # lowering Y from its first positive event on breaks X + Y >= 0
            k = int(np.argmax(y.all_values > 0))
            eps = data.draw(st.floats(1e-6, 1.0))
            lowered = y.all_values.copy()
            lowered[k:] -= eps * y.all_values[k]
            low = y.replace(initial_value=lowered[0], values=lowered[1:])
            assert np.min(combine(np.add, x, low).all_values) < 0
