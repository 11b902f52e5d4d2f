import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elasticbmc.grid import Grid, unit_grid
from elasticbmc.synthetic import (
    EXAMPLE1_TRUTH,
    EXAMPLE2_TRUTH,
    SyntheticDesign,
    example1_curve,
    example1_design,
    example1_observation,
    example2_curve,
    example2_design,
    example2_observation,
    sample_design,
    vinet_pressure,
)
from elasticbmc.workflow import example_data

# 30-digit evaluation of the Vinet form at rho = 2, rho0 = 1, B0 = 1, B0' = 4
VINET_2_1_1_4 = 2.48589221064075971050257913374

unit3 = st.tuples(*[st.floats(0.0, 1.0)] * 3)


class TestExample1:
    def test_peak_height(self):
        g = unit_grid(101)
        for u2 in (0.0, 0.37, 1.0):
            f = example1_curve(g, [0.0, 1.0, u2])
            i = int(np.argmax(f.values))
            assert g.points[i] == pytest.approx(0.5)
            assert f.values[i] == pytest.approx(1.0 / (0.05 * np.sqrt(2 * np.pi)), abs=1e-12)
            assert f.values[i] == pytest.approx(7.9788, abs=1e-4)

    @settings(max_examples=40, deadline=None)
    @given(unit3, st.floats(0.0, 1.0))
    def test_third_input_inert(self, u, other):
        g = unit_grid(101)
        a = example1_curve(g, [u[0], u[1], u[2]])
        b = example1_curve(g, [u[0], u[1], other])
        assert np.array_equal(a.values, b.values)

    def test_observation_is_truth_curve(self):
        g = unit_grid(101)
        assert np.array_equal(example1_observation(g).values, example1_curve(g, EXAMPLE1_TRUTH).values)
        obs, _, _, truth, _ = example_data(1, seed=0)
        assert truth == EXAMPLE1_TRUTH
        assert np.array_equal(obs.values, example1_curve(obs.grid, EXAMPLE1_TRUTH).values)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            example1_curve(unit_grid(11), [0.1, 0.2])

    def test_design_integrates_to_height(self):
        _, design, curves, _, _ = example_data(1, seed=7)
        for u, f in zip(design, curves):
            assert abs(np.trapezoid(f.values, f.grid.points) - u[1]) < 1e-3


class TestExample2:
    def test_observation_offset(self):
        t = unit_grid(101).points
        obs = example2_observation(Grid(t))
        model = example2_curve(Grid(t - 0.2), EXAMPLE2_TRUTH)
        np.testing.assert_allclose(obs.values, model.values, rtol=0, atol=1e-12)

    def test_observation_peak(self):
        obs = example2_observation(unit_grid(101))
        assert obs.grid.points[np.argmax(obs.values)] == pytest.approx(0.6)

    def test_design(self):
        d1 = example2_design(seed=4)
        d2 = example2_design(seed=4)
        assert d1.inputs.shape == (300, 3)
        assert np.array_equal(d1.inputs, d2.inputs)
        assert np.all(d1.inputs[:, :2] <= 0.3) and np.all(d1.inputs >= 0)
        assert np.all(d1.inputs[:, 2] <= 1.0) and d1.inputs[:, 2].max() > 0.3

    def test_example_data_size(self):
        _, design, curves, truth, _ = example_data(2, seed=1)
        assert len(curves) == 300 and design.shape == (300, 3)
        assert truth == EXAMPLE2_TRUTH

    def test_nuisance_input_ignored(self):
        g = unit_grid(51)
        assert np.array_equal(example2_curve(g, [0.1, 0.2, 0.0]).values,
                              example2_curve(g, [0.1, 0.2, 0.9]).values)


def test_curves_carry_unit_mass_times_height():
    # on a domain wide enough to hold the whole bump, the area is the height input exactly
    wide = Grid(np.linspace(-1.0, 2.0, 3001))
    for ex, sim in ((1, example1_curve), (2, example2_curve)):
        _, design, _, _, _ = example_data(ex, seed=3)
        for u in design[:50]:
            f = sim(wide, u)
            assert abs(np.trapezoid(f.values, f.grid.points) - u[1]) < 1e-3


class TestVinet:
    def test_ambient(self):
        assert vinet_pressure(3.0, 3.0, 2.0, 4.0) == 0.0

    def test_regression_value(self):
        assert vinet_pressure(2.0, 1.0, 1.0, 4.0) == pytest.approx(VINET_2_1_1_4, rel=1e-13)

    @pytest.mark.parametrize("bp", [1.5, 4.0, 6.0])
    def test_monotone_in_compression(self, bp):
        rho = np.linspace(1.0, 4.0, 500)
        p = vinet_pressure(rho, 1.0, 2.0, bp)
        assert np.all(np.diff(p) > 0)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
    def test_nonpositive_rejected(self, args):
        with pytest.raises(ValueError):
            vinet_pressure(*args, 4.0)


class TestDesign:
    def test_seeded(self):
        assert np.array_equal(sample_design(20, 3, seed=9).inputs, sample_design(20, 3, seed=9).inputs)
        assert not np.array_equal(sample_design(20, 3, seed=9).inputs, sample_design(20, 3, seed=8).inputs)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 60), st.integers(1, 4), st.integers(0, 2**32 - 1),
           st.sampled_from(["uniform", "lhs"]))
    def test_bounds(self, n, p, seed, method):
        b = np.column_stack([np.arange(p) - 1.0, np.arange(p) + 0.5])
        x = sample_design(n, p, b, seed, method).inputs
        assert x.shape == (n, p)
        assert np.all(x >= b[:, 0]) and np.all(x <= b[:, 1])

    @pytest.mark.parametrize("n", [7, 50])
    def test_lhs_strata(self, n):
        x = sample_design(n, 3, seed=2, method="lhs").inputs
        for col in x.T:
            strata = np.floor(col * n).astype(int)
            assert sorted(strata) == list(range(n))

    def test_example1_design(self):
        d = example1_design(seed=5)
        assert d.inputs.shape == (100, 3) and np.all((d.inputs >= 0) & (d.inputs <= 1))

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_design(0, 2)
        with pytest.raises(ValueError):
            sample_design(5, 2, method="sobol-ish")
        with pytest.raises(ValueError):
            SyntheticDesign(np.array([[1.5]]), 0)
