import numpy as np
import pytest

from statemf.aggregation import (
    ConstraintRow,
    annual_monthly_row,
    annual_quarterly_row,
    cross_sectional_row,
    quarterly_monthly_row,
    triangle_weights,
    write_constraints_csv,
)


def row_weights(row: ConstraintRow) -> np.ndarray:
    w = np.zeros(row.max_lag() + 1)
    for _, lag, wt in row.weights:
        w[lag] += wt
    return w


class TestQuarterlyMonthly:
    def test_weight_pattern(self):
        row = quarterly_monthly_row("gdp_q", "gdp_m")
        np.testing.assert_allclose(
            row_weights(row), [1 / 3, 2 / 3, 1.0, 2 / 3, 1 / 3]
        )
        assert row.variance == 0.0
        assert row.schedule == frozenset({3, 6, 9, 12})

    def test_constant_growth_sums_to_3g(self):
        row = quarterly_monthly_row("q", "m")
        path = {"m": np.full(10, 0.02)}
        np.testing.assert_allclose(row.evaluate(path, 8), 3 * 0.02)

    def test_single_impulse(self):
        row = quarterly_monthly_row("q", "m")
        path = {"m": np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])}
        # impulse at lag 4 relative to t=8 carries weight 1/3
        np.testing.assert_allclose(row.evaluate(path, 8), 1 / 3)

    def test_random_path_matches_formula(self):
        rng = np.random.default_rng(0)
        m = rng.normal(0, 1, 20)
        row = quarterly_monthly_row("q", "m")
        t = 11
        direct = (m[t] / 3 + 2 * m[t - 1] / 3 + m[t - 2]
                  + 2 * m[t - 3] / 3 + m[t - 4] / 3)
        np.testing.assert_allclose(row.evaluate({"m": m}, t), direct)


class TestAnnualMonthly:
    def test_weight_sum_12(self):
        row = annual_monthly_row("a", "m")
        assert row.max_lag() == 22
        np.testing.assert_allclose(row_weights(row).sum(), 12.0)
        assert row.schedule == frozenset({12})

    def test_constant_growth(self):
        row = annual_monthly_row("a", "m")
        np.testing.assert_allclose(row.evaluate({"m": np.full(30, 0.01)}, 25), 0.12)

    def test_impulse_at_center(self):
        row = annual_monthly_row("a", "m")
        m = np.zeros(30)
        m[25 - 11] = 5.0  # lag 11 carries weight 12/12
        np.testing.assert_allclose(row.evaluate({"m": m}, 25), 5.0)

    def test_random_path_matches_formula(self):
        rng = np.random.default_rng(1)
        m = rng.normal(0, 1, 40)
        row = annual_monthly_row("a", "m")
        t = 30
        w = np.concatenate([np.arange(1, 13), np.arange(11, 0, -1)]) / 12.0
        direct = sum(w[l] * m[t - l] for l in range(23))
        np.testing.assert_allclose(row.evaluate({"m": m}, t), direct)


class TestAnnualQuarterly:
    def test_weight_pattern(self):
        row = annual_quarterly_row("a", "q")
        np.testing.assert_allclose(
            row_weights(row), [0.25, 0.5, 0.75, 1.0, 0.75, 0.5, 0.25]
        )

    def test_constant_growth(self):
        row = annual_quarterly_row("a", "q")
        np.testing.assert_allclose(row.evaluate({"q": np.full(12, 0.01)}, 10), 0.04)

    def test_impulse_at_lag3(self):
        row = annual_quarterly_row("a", "q")
        q = np.zeros(12)
        q[10 - 3] = 2.0
        np.testing.assert_allclose(row.evaluate({"q": q}, 10), 2.0)

    def test_brute_force_level_aggregation(self):
        # The triangle weights linearize exact level aggregation; with tiny
        # growth rates the second-order error falls below 1e-10.
        rng = np.random.default_rng(2)
        for _ in range(20):
            g = rng.normal(0, 1e-6, 20)  # quarterly growth rates
            levels = 100.0 * np.cumprod(1.0 + g)
            annual = np.array([levels[i:i + 4].sum() for i in range(0, 20, 4)])
            annual_growth = annual[1:] / annual[:-1] - 1.0
            row = annual_quarterly_row("a", "q")
            for yidx in range(1, 5):
                t = 4 * yidx + 3  # last quarter of year yidx
                np.testing.assert_allclose(
                    row.evaluate({"q": g}, t), annual_growth[yidx - 1], atol=1e-10
                )

    def test_triangle_weights_generic(self):
        for k in (3, 4, 12):
            w = triangle_weights(k)
            assert w.size == 2 * k - 1
            np.testing.assert_allclose(w.sum(), float(k))
            np.testing.assert_allclose(w, w[::-1])


class TestCrossSectional:
    def test_weighted_mean(self):
        row = cross_sectional_row("us", [("s1", 0.5), ("s2", 0.5)], 1e-4)
        paths = {"s1": np.array([2.0]), "s2": np.array([4.0])}
        np.testing.assert_allclose(row.evaluate(paths, 0), 3.0)

    def test_single_state(self):
        row = cross_sectional_row("us", [("s1", 1.0)], 1e-4)
        np.testing.assert_allclose(row.evaluate({"s1": np.array([1.7])}, 0), 1.7)

    def test_five_states_oracle(self):
        rng = np.random.default_rng(3)
        w = rng.uniform(0.1, 0.3, 5)
        g = rng.normal(0, 1, 5)
        row = cross_sectional_row("us", [(f"s{i}", w[i]) for i in range(5)], 1e-4)
        paths = {f"s{i}": np.array([g[i]]) for i in range(5)}
        np.testing.assert_allclose(row.evaluate(paths, 0), w @ g)

    def test_empty_states_rejected(self):
        with pytest.raises(ValueError):
            cross_sectional_row("us", [], 1e-4)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            cross_sectional_row("us", [("s1", 1.0)], 0.0)

    def test_quarterly_schedule(self):
        row = cross_sectional_row("us", [("s1", 1.0)], 1e-4, quarterly=True)
        assert row.schedule == frozenset({3, 6, 9, 12})


def test_constraint_csv_round_trip(tmp_path):
    rows = [quarterly_monthly_row("q", "m"),
            cross_sectional_row("us", [("s1", 0.4), ("s2", 0.6)], 2e-4)]
    out = tmp_path / "constraints.csv"
    write_constraints_csv(rows, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "target,latent,lag,weight,variance"
    assert len(lines) == 1 + 5 + 2
