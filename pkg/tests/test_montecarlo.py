import math

import numpy as np
import pytest

from maxrep.montecarlo import (
    Estimate,
    GBMFutures,
    RatioWalkFutures,
    build_ensemble,
    compensated,
    empirical_martingale_test,
    nested_conditional,
    simulate_poisson,
    stream,
    time_grid,
)
from maxrep.paths import TRUNCATED

CHECKPOINTS = ((0.5, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0), (1.0, 4.0))


def poisson_ensemble(seed, n=2000, horizon=4.0, rate=1.0, dt=0.125):
    def one(rng, i):
        counting = simulate_poisson(rate, horizon, rng)
        return {"N": counting, "Nt": compensated(counting, rate, dt)}, {"count": len(counting)}
    return build_ensemble("poisson", n, seed, dt, horizon, one)


def test_streams_are_keyed_and_reproducible():
    a = stream(7, 3).random(5)
    assert np.array_equal(a, stream(7, 3).random(5))
    assert not np.array_equal(a, stream(7, 4).random(5))
    assert not np.array_equal(a, stream(7, 3, 1).random(5))


def test_time_grid_contains_extras_and_horizon():
    g = time_grid(1.0, 0.3, extra=[0.45, 2.0])
    assert g[0] == 0.0 and g[-1] == 1.0 and 0.45 in g and 2.0 not in g


class TestPoisson:
    def test_zero_horizon(self):
        p = simulate_poisson(1.0, 0.0, stream(0, 0))
        assert len(p) == 0 and p.final_value == 0.0 and p.tail == TRUNCATED

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            simulate_poisson(0.0, 1.0, stream(0, 0))

    def test_mean_count(self):
        ens = poisson_ensemble(1, n=4000)
        counts = ens.scalar("count")
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 4.0) <= 3 * se

    def test_inter_arrival_ks(self):
        rng = stream(2, 0)
        gaps = np.diff(np.concatenate(([0.0], simulate_poisson(2.0, 5000.0, rng).times)))
        gaps = np.sort(gaps)
        n = gaps.size
        cdf = 1 - np.exp(-2.0 * gaps)
        d = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
        assert d < 1.63 / math.sqrt(n)  # 1% critical value

    def test_compensated_jumps_are_unit(self):
        counting = simulate_poisson(1.0, 5.0, stream(3, 0))
        nt = compensated(counting, 1.0, 0.25)
        assert np.all(nt.jump_sizes[nt.jumps] == 1.0)
        assert np.allclose(nt.values, counting.value_at(nt.times) - nt.times, rtol=0, atol=1e-12)


class TestMartingaleTest:
    def test_compensated_passes(self):
        rep = empirical_martingale_test(poisson_ensemble(5), "Nt", CHECKPOINTS)
        assert len(rep.rows) == 20 and rep.passed

    def test_uncompensated_fails(self):
        rep = empirical_martingale_test(poisson_ensemble(5), "N", [(1.0, 2.0)],
                                        functionals={"one": lambda p, s: 1.0})
        row = rep.rows[0]
        assert row.estimate == pytest.approx(1.0, abs=0.1) and not row.passed

    def test_pass_rate_over_seeds(self):
        # 3-sigma rows fail about 0.27% of the time; require >= 99% over 200 rows
        rows = []
        for seed in range(10):
            rows += empirical_martingale_test(poisson_ensemble(100 + seed, n=1000), "Nt",
                                              CHECKPOINTS).rows
        assert sum(r.passed for r in rows) / len(rows) >= 0.99

    def test_functionals_see_only_the_past(self):
        seen = []

        def spy(p, s):
            seen.append(p.horizon)
            return 1.0
        empirical_martingale_test(poisson_ensemble(6, n=50), "Nt", [(1.0, 2.0)],
                                  functionals={"spy": spy})
        assert set(seen) == {1.0}

    def test_checkpoint_order(self):
        with pytest.raises(ValueError):
            empirical_martingale_test(poisson_ensemble(6, n=10), "Nt", [(2.0, 1.0)])

    def test_unknown_process(self):
        with pytest.raises(KeyError):
            empirical_martingale_test(poisson_ensemble(6, n=10), "missing", [(0.5, 1.0)])


def test_threads_do_not_change_results():
    def one(rng, i):
        return {"N": simulate_poisson(1.0, 3.0, rng)}, {"u": rng.random()}
    a = build_ensemble("t", 200, 9, 0.1, 3.0, one, threads=1)
    b = build_ensemble("t", 200, 9, 0.1, 3.0, one, threads=4)
    assert np.array_equal(a.scalar("u"), b.scalar("u"))
    assert all(np.array_equal(x.times, y.times) for x, y in zip(a.paths("N"), b.paths("N")))


class TestNested:
    def test_always_true(self):
        est = nested_conditional(GBMFutures(dt=0.01), None, lambda s: np.ones(s["terminal"].size),
                                 100, 1.0, stream(0, 0))
        assert (est.p, est.se) == (1.0, 0.0)

    def test_needs_futures(self):
        with pytest.raises(ValueError):
            nested_conditional(None, None, lambda s: [], 10, 1.0, stream(0, 0))

    def test_predicate_shape(self):
        with pytest.raises(ValueError):
            nested_conditional(GBMFutures(dt=0.1), None, lambda s: [True], 10, 1.0, stream(0, 0))

    def test_doob_level(self):
        # P[sup U >= lam] = 1/lam for U = exp(B - t/2) started at 1; tail bound U_H/lam
        lam = 2.0
        est = nested_conditional(GBMFutures(dt=1e-3), None,
                                 lambda s: s["log_sup"] >= math.log(lam), 4000, 20.0,
                                 stream(1, 0), tail=lambda s: s["terminal"] / lam)
        assert abs(est.p - 1 / lam) <= max(3 * est.se, est.tail_bound + 0.005)

    def test_ratio_walk_return_probability(self):
        est = nested_conditional(RatioWalkFutures(), 0.0, lambda s: s["log_sup"] >= 0, 20000,
                                 200.0, stream(2, 0))
        lo, hi = est.ci()
        assert 0 < lo and hi < 1
        assert abs(est.p - math.log(2)) <= 3 * est.se

    def test_estimate_ci(self):
        assert Estimate(0.5, 0.1, 10).ci(2.0) == (0.3, 0.7)
