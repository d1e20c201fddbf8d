import math

import numpy as np
import pytest
from hypothesis import given, settings

from maxrep.calculus import (
    covariation,
    decompose,
    gexp_forward,
    integrate_left,
    integration_by_parts_residual,
    ratio_decomposition,
    stoch_exp,
    supmultip_transform,
)
from maxrep.paths import GRID, JUMP, CadlagPath, events_equal, running_max

from .strategies import step_paths


def ramp(horizon=1.0, n=64, slope=1.0, **kw):
    grid = np.arange(n + 1) * (horizon / n)
    return CadlagPath.sampled(grid, lambda t: slope * t, horizon, **kw)


def test_decompose_splits_kinds():
    x = CadlagPath.from_events(0.0, [(0.5, 0.5, GRID), (1.0, 2.5, JUMP), (1.5, 3.0, GRID)], 2)
    d = decompose(x)
    assert d.continuous_part.final_value == 1.0
    assert d.jump_part.final_value == 2.0


class TestIntegrateLeft:
    def test_unit_integrand(self):
        x = CadlagPath.from_events(2.0, [(1, 3.0), (2, 1.0)], 3)
        i = integrate_left(CadlagPath.constant(1.0, 3), x)
        assert list(i.values) == [1.0, -1.0]

    def test_indicator_against_time(self):
        h = CadlagPath.from_events(1.0, [(1.0, 0.0)], 2.0)
        i = integrate_left(h, ramp(2.0, 8))
        assert i.final_value == 1.0

    def test_left_limit_at_common_jump(self):
        j = CadlagPath.indicator_from(1.0, 2.0)
        assert integrate_left(j, j).final_value == 0.0


class TestCovariation:
    def test_disjoint_is_zero(self):
        x = CadlagPath.indicator_from(0.3, 1.0)
        assert covariation(x, ramp()).final_value == 0.0

    def test_self_jump(self):
        j = CadlagPath.indicator_from(1.0, 2.0)
        c = covariation(j, j)
        assert events_equal(c, j)

    def test_continuous_max_has_no_bracket_with_atom(self):
        S = 0.625
        A = CadlagPath.indicator_from(S, 2.0)
        ustar = ramp(2.0, 64).map(np.exp)
        assert covariation(A, ustar).final_value == 0.0

    def test_diffusive_bracket(self):
        rng = np.random.default_rng(0)
        n = 20000
        inc = rng.standard_normal(n) * math.sqrt(1 / n)
        b = CadlagPath(0.0, np.arange(1, n + 1) / n, np.cumsum(inc), np.zeros(n, bool), 1.0,
                       diffusive=True)
        assert covariation(b, b).final_value == pytest.approx(1.0, abs=0.05)


class TestStochExp:
    def test_time(self):
        assert stoch_exp(ramp()).final_value == pytest.approx(math.e, rel=1e-15)

    def test_compensated_poisson(self):
        # jumps off the grid, so each jump event also carries drift since the last grid point
        jumps = [0.3125, 0.90625, 1.40625]
        grid = np.union1d(np.arange(41) / 20, jumps)
        n_tilde = CadlagPath.sampled(grid, lambda t: np.searchsorted(jumps, t, "right") - t, 2.0,
                                     jump_times=jumps,
                                     left=lambda t: np.searchsorted(jumps, t, "left") - t)
        assert np.all(n_tilde.jump_sizes[n_tilde.jumps] == 1.0)
        e = stoch_exp(n_tilde)
        expect = 2.0 ** np.searchsorted(jumps, e.times, "right") * np.exp(-e.times)
        assert np.allclose(e.values, expect, rtol=1e-13)

    def test_kill_jump(self):
        x = CadlagPath.from_events(0.0, [(1.0, -1.0)], 2.0)
        assert list(stoch_exp(x).all_values) == [1.0, 0.0]

    @settings(max_examples=100, deadline=None)
    @given(step_paths())
    def test_event_recursion(self, x):
        e = stoch_exp(x)
        rec = [1.0]
        for d in x.increments:
            rec.append(rec[-1] * (1 + d))
        assert np.allclose(e.all_values, rec, rtol=1e-12, atol=1e-300)


class TestRatioDecomposition:
    def test_first_jump_martingale(self):
        S = 0.75
        grid = np.arange(0, 97) / 64
        u = CadlagPath.sampled(grid, lambda t: np.where(t < S, np.exp(np.minimum(t, S)), 0.0),
                               1.5, jump_times=[S])
        z, res = ratio_decomposition(u)
        assert list(np.unique(z.values)) == [0.0, 1.0]
        assert res <= 4 * np.finfo(float).eps

    def test_increasing_gives_one(self):
        z, _ = ratio_decomposition(CadlagPath.from_events(1.0, [(1, 2.0), (2, 5.0)], 3))
        assert np.all(z.values == 1.0)

    def test_gbm_sample(self):
        rng = np.random.default_rng(3)
        n = 4000
        logu = np.cumsum(rng.standard_normal(n) * math.sqrt(1e-3) - 0.5e-3)
        u = CadlagPath(1.0, np.arange(1, n + 1) * 1e-3, np.exp(logu), np.zeros(n, bool), 4.0,
                       diffusive=True)
        z, res = ratio_decomposition(u)
        assert res <= 1e-12
        assert np.allclose(z.values, u.values / running_max(u).value_at(u.times))

    def test_requires_unit_start(self):
        with pytest.raises(ValueError):
            ratio_decomposition(CadlagPath.constant(2.0, 1))

    @settings(max_examples=100, deadline=None)
    @given(step_paths(start=1.0))
    def test_identity_on_step_paths(self, u):
        u = u.map(np.abs)
        _, res = ratio_decomposition(u.replace(initial_value=1.0))
        assert res <= 1e-12


class TestGexpForward:
    def test_time(self):
        u, ok = gexp_forward(ramp(1.0, 512))
        assert ok and u.final_value == pytest.approx(math.e, rel=1e-2)

    def test_minus_time(self):
        u, ok = gexp_forward(ramp(1.0, 64, slope=-1.0))
        assert ok
        assert np.allclose(u.values, 1 - u.times)
        assert running_max(u).final_value == 1.0

    def test_zero(self):
        u, ok = gexp_forward(CadlagPath.constant(0.0, 1.0))
        assert ok and u.final_value == 1.0

    def test_drawdown_over_one(self):
        with pytest.raises(ValueError, match="t=1.0"):
            gexp_forward(CadlagPath.from_events(0.0, [(1.0, -1.5)], 2.0))


class TestSupmultip:
    def test_zero_v(self):
        x = CadlagPath.from_events(1.0, [(1, 3.0), (2, 2.0)], 3)
        y, ok = supmultip_transform(x, CadlagPath.constant(0.0, 3), math.inf)
        assert ok and events_equal(y, x)

    def test_first_jump(self):
        S = 0.75
        grid = np.arange(0, 65) / 32
        x = CadlagPath.sampled(grid, lambda t: np.where(t < S, np.exp(t), 0.0), 2.0, jump_times=[S],
                               left=lambda t: np.exp(t))
        v = CadlagPath.sampled(grid, lambda t: 0.5 * np.minimum(t, S), 2.0)
        y, ok = supmultip_transform(x, v, S)
        assert ok
        expect = np.exp(0.5 * np.minimum(y.times, S)) * np.exp(np.minimum(y.times, S))
        ystar = running_max(y)
        assert np.allclose(ystar.value_at(y.times[y.times < S]), expect[y.times < S], rtol=1e-12)

    def test_jump_down_with_v_jump(self):
        x = CadlagPath.from_events(1.0, [(1.0, 0.5)], 2.0)
        v = CadlagPath.from_events(0.0, [(1.0, 0.1)], 2.0)
        with pytest.raises(ValueError, match="dX"):
            supmultip_transform(x, v, 1.0)

    def test_v_not_stopped(self):
        x = CadlagPath.constant(1.0, 2.0)
        v = CadlagPath.from_events(0.0, [(1.5, 0.1)], 2.0)
        with pytest.raises(ValueError, match="stopped"):
            supmultip_transform(x, v, 1.0)

    def test_v_off_maximum(self):
        x = CadlagPath.from_events(1.0, [(0.5, 0.5)], 2.0)
        v = CadlagPath.from_events(0.0, [(1.0, 0.1)], 2.0)
        with pytest.raises(ValueError, match="carried"):
            supmultip_transform(x, v, 1.0)

    def test_negative_x(self):
        with pytest.raises(ValueError, match="non-negative"):
            supmultip_transform(CadlagPath.constant(-1.0, 1.0), CadlagPath.constant(0.0, 1.0), 1.0)


@settings(max_examples=200, deadline=None)
@given(step_paths(), step_paths())
def test_integration_by_parts_exact(x, y):
    assert integration_by_parts_residual(x, y) == 0.0
