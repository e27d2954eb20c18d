import math

import numpy as np
import pytest

from lvgpbo.benchmarks import (
    TabularLoadError,
    branin_mixed,
    branin_objective,
    branin_space,
    exhaustive_oracle,
    goldstein_price_mixed,
    goldstein_price_objective,
    goldstein_price_space,
    load_tabular,
    noisy_wrapper,
    synthetic_tabular_path,
)
from lvgpbo.engine import Objective
from lvgpbo.space import MixedPoint


def grid_minimum(fn, lo, hi, n_levels, step=1e-4):
    """Brute-force oracle: dense scan over x1 for every level."""
    x = np.linspace(lo, hi, round((hi - lo) / step) + 1)
    best = (math.inf, None, None)
    for lev in range(1, n_levels + 1):
        values = np.array([fn(v, lev) for v in x])
        i = int(np.argmin(values))
        if values[i] < best[0]:
            best = (float(values[i]), float(x[i]), lev)
    return best


class TestBranin:
    def test_grid_oracle_reproduces_known_minimum(self):
        best_val, best_x, best_lev = grid_minimum(branin_mixed, -5.0, 10.0, 4, step=1e-3)
        assert best_val == pytest.approx(2.79118, abs=1e-2)
        assert best_lev == 3  # the level mapping to x2 = 10
        assert best_x == pytest.approx(-2.6, abs=0.05)

    def test_hand_value_at_origin_level_one(self):
        # x2 = 0: (0 - 0 + 0 - 6)^2 + 10(1 - 1/(8 pi)) + 10
        expected = 36.0 + 10.0 * (1.0 - 1.0 / (8 * math.pi)) + 10.0
        assert branin_mixed(0.0, 1) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(55.602, abs=1e-3)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            branin_mixed(11.0, 1)
        with pytest.raises(ValueError):
            branin_mixed(0.0, 5)

    def test_space_and_objective_wiring(self):
        space = branin_space()
        assert space.n_quant == 1 and space.qual_cardinalities == (4,)
        obj = branin_objective()
        assert obj.fn(MixedPoint(x=(0.0,), t=(1,))) == branin_mixed(0.0, 1)


class TestGoldsteinPrice:
    def test_global_minimum_value(self):
        # level 2 maps to x2 = -1
        assert goldstein_price_mixed(0.0, 2) == pytest.approx(3.0, rel=1e-12)

    def test_hand_value_at_origin_level_three(self):
        # x2 = 0: [1 + 1*19] * [30 + 0] = 600
        assert goldstein_price_mixed(0.0, 3) == pytest.approx(600.0, rel=1e-12)

    def test_grid_oracle_confirms_minimum(self):
        best_val, best_x, best_lev = grid_minimum(
            goldstein_price_mixed, -2.0, 2.0, 5, step=1e-3
        )
        assert best_val == pytest.approx(3.0, abs=1e-2)
        assert best_lev == 2
        assert best_x == pytest.approx(0.0, abs=0.01)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            goldstein_price_mixed(2.5, 1)
        with pytest.raises(ValueError):
            goldstein_price_mixed(0.0, 6)

    def test_space_levels(self):
        space = goldstein_price_space()
        assert space.qual[0].levels == ("-2", "-1", "0", "1", "2")
        assert goldstein_price_objective().fn(
            MixedPoint(x=(0.5,), t=(4,))
        ) == goldstein_price_mixed(0.5, 4)


class TestLoadTabular:
    def test_bundled_fixture(self):
        tab = load_tabular(
            synthetic_tabular_path(),
            factors=["cation", "halide_1", "halide_2", "halide_3", "solvent"],
            response="energy",
        )
        assert tab.n_rows == 240
        assert tab.space.qual_cardinalities == (3, 3, 3, 3, 8)
        lo, hi = tab.response_range
        assert lo == pytest.approx(-41.3, abs=0.01)
        assert len(tab.pool(-30.0)) == 216

    def test_duplicate_rows_named(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("a,b,y\nu,v,1.0\nx,w,2.0\nu,v,3.0\n")
        with pytest.raises(TabularLoadError, match=r"dup.csv:4: duplicate .* line 2"):
            load_tabular(path, factors=["a", "b"], response="y")

    def test_unknown_level_with_pinned_levels(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b,y\nu,v,1.0\nz,w,2.0\n")
        with pytest.raises(TabularLoadError, match=r"t.csv:3: unknown level 'z'"):
            load_tabular(
                path, factors=["a", "b"], response="y",
                levels={"a": ["u", "x"], "b": ["v", "w"]},
            )

    def test_non_numeric_response_named(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b,y\nu,v,1.0\nx,w,oops\n")
        with pytest.raises(TabularLoadError, match=r"t.csv:3: non-numeric"):
            load_tabular(path, factors=["a", "b"], response="y")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,y\nu,1.0\n")
        with pytest.raises(TabularLoadError, match="missing columns"):
            load_tabular(path, factors=["a", "b"], response="y")

    def test_lookup_is_exact_and_total_on_rows_only(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b,y\nu,v,1.5\nu,w,2.5\nx,v,0.5\n")
        tab = load_tabular(path, factors=["a", "b"], response="y")
        for pt in tab.candidates:
            assert tab.lookup(pt) == tab.table[pt.t]
        with pytest.raises(LookupError):
            tab.lookup(MixedPoint(t=(2, 2)))


class TestExhaustiveOracle:
    def test_bundled_fixture_planted_optimum(self):
        tab = load_tabular(
            synthetic_tabular_path(),
            factors=["cation", "halide_1", "halide_2", "halide_3", "solvent"],
            response="energy",
        )
        best_pt, best_val = exhaustive_oracle(tab)
        assert best_val == pytest.approx(-41.3, abs=1e-9)
        labels = [s.levels[i - 1] for s, i in zip(tab.space.qual, best_pt.t)]
        assert labels == ["A3", "X3", "X3", "X3", "S2"]

    def test_single_row(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("a,b,y\nu,v,7.0\n")
        with pytest.raises(TabularLoadError):
            # a single-level factor cannot form a valid space
            load_tabular(path, factors=["a", "b"], response="y")

    def test_planted_minimum_found(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = ["a,b,y"]
        for i in range(3):
            for j in range(3):
                rows.append(f"l{i},m{j},{1.0 + i + j}")
        rows[5] = "l1,m1,-9.0"  # plant the minimum at (l1, m1)
        path.write_text("\n".join(rows) + "\n")
        tab = load_tabular(path, factors=["a", "b"], response="y")
        best_pt, best_val = exhaustive_oracle(tab)
        assert best_val == -9.0
        assert best_pt.t == (2, 2)


class TestNoisyWrapper:
    def flat(self):
        return Objective(fn=lambda pt: 2.0, name="flat")

    def test_zero_sd_identity(self):
        wrapped = noisy_wrapper(self.flat(), 0.0, seed=1)
        assert [wrapped.fn(MixedPoint()) for _ in range(5)] == [2.0] * 5
        assert wrapped.noisy is False

    def test_mean_statistics(self):
        wrapped = noisy_wrapper(self.flat(), 1.0, seed=42)
        draws = np.array([wrapped.fn(MixedPoint()) for _ in range(10_000)])
        assert abs(draws.mean() - 2.0) <= 4.0 / math.sqrt(10_000)
        assert draws.std() == pytest.approx(1.0, abs=0.05)

    def test_same_seed_same_sequence(self):
        a = noisy_wrapper(self.flat(), 0.5, seed=9)
        b = noisy_wrapper(self.flat(), 0.5, seed=9)
        assert [a.fn(MixedPoint()) for _ in range(10)] == [
            b.fn(MixedPoint()) for _ in range(10)
        ]

    def test_negative_sd_rejected(self):
        with pytest.raises(ValueError):
            noisy_wrapper(self.flat(), -0.1, seed=0)

    def test_marks_noisy_and_keeps_budget(self):
        obj = Objective(fn=lambda pt: 0.0, budget=7)
        wrapped = noisy_wrapper(obj, 0.3, seed=0)
        assert wrapped.noisy is True and wrapped.budget == 7
