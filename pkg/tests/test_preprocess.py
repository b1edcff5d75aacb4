import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from math import comb

from sindycp.errors import DataError, InsufficientDataError, ParameterError
from sindycp.preprocess import LibrarySpec, build_library, finite_diff, savgol_smooth, savgol_weights
from sindycp.systems import TimeSeries, simulate_ode


def normal_equation_weights(window, order, pos):
    """Independent oracle: row ``pos`` of the local least-squares hat matrix."""
    half = window // 2
    u = np.arange(window) - half
    V = np.vander(u, order + 1, increasing=True)
    hat = V @ np.linalg.solve(V.T @ V, V.T)
    return hat[pos]


class TestSavgol:
    def test_five_point_quadratic_weights(self):
        w = savgol_weights(5, 2)
        assert np.allclose(w, np.array([-3, 12, 17, 12, -3]) / 35, atol=1e-14)

    @pytest.mark.parametrize("window,order", [(5, 2), (7, 3), (9, 3), (11, 4)])
    @pytest.mark.parametrize("where", ["centre", "end"])
    def test_weights_match_normal_equations(self, window, order, where):
        pos = window // 2 if where == "centre" else window - 1
        got = savgol_weights(window, order, None if where == "centre" else pos)
        assert np.allclose(got, normal_equation_weights(window, order, pos), atol=1e-12)

    def test_constant_unchanged(self):
        ts = TimeSeries(np.full((30, 2), 4.5), 0.1)
        assert np.allclose(savgol_smooth(ts, 9, 3).states, 4.5, atol=1e-13)

    def test_quadratic_reproduced(self):
        t = np.arange(40) * 0.1
        ts = TimeSeries(np.c_[2 * t**2 - t + 1], 0.1)
        assert np.allclose(savgol_smooth(ts, 7, 2).states, ts.states, atol=1e-12)

    @pytest.mark.parametrize("window,order", [(8, 3), (1, 0), (5, 5), (41, 3)])
    def test_bad_parameters(self, window, order):
        ts = TimeSeries(np.zeros((30, 1)), 0.1)
        with pytest.raises(ParameterError):
            savgol_smooth(ts, window, order)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-100, 100))
    def test_commutes_with_constant_shift(self, c):
        x = np.random.default_rng(0).normal(size=(25, 2))
        a = savgol_smooth(TimeSeries(x + c, 0.1)).states
        b = savgol_smooth(TimeSeries(x, 0.1)).states + c
        assert np.allclose(a, b, atol=1e-9 * max(1.0, abs(c)))


class TestFiniteDiff:
    def test_linear(self):
        t = np.arange(20) * 0.1
        assert np.allclose(finite_diff(TimeSeries(3 * t, 0.1)).values, 3.0, atol=1e-12)

    def test_quadratic(self):
        t = np.arange(20) * 0.1
        assert np.allclose(finite_diff(TimeSeries(t**2, 0.1)).values[:, 0], 2 * t, atol=1e-10)

    def test_sine(self):
        t = np.arange(700) * 0.01
        d = finite_diff(TimeSeries(np.sin(t), 0.01)).values[:, 0]
        assert np.abs(d[1:-1] - np.cos(t[1:-1])).max() <= 2e-5

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            finite_diff(TimeSeries(np.zeros(2), 0.1))

    def test_exponential_second_order(self):
        errs = []
        for dt in (0.01, 0.005):
            ts = simulate_ode(lambda x: x, [1.0], dt, int(1 / dt))
            d = finite_diff(ts).values[:, 0]
            errs.append(np.abs(d / ts.states[:, 0] - 1).max())
        assert errs[0] < 1e-3
        assert errs[1] / errs[0] == pytest.approx(0.25, abs=0.03)


class TestLibrary:
    def test_columns(self):
        lib = build_library(np.zeros((1, 2)))
        assert lib.feature_names == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]

    def test_zero_row(self):
        assert np.array_equal(build_library([[0.0, 0.0]]).values[0], [1, 0, 0, 0, 0, 0])

    def test_row_values(self):
        assert np.array_equal(build_library([[2.0, 3.0]]).values[0], [1, 2, 3, 4, 6, 9])

    def test_nonfinite_row(self):
        with pytest.raises(DataError) as info:
            build_library([[1.0, 2.0], [0.0, np.inf]])
        assert info.value.row == 1

    def test_degree_cap(self):
        with pytest.raises(ParameterError):
            LibrarySpec(max_degree=6)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 4), st.booleans())
    def test_column_count_and_values(self, m, degree, bias):
        X = np.random.default_rng(m * 10 + degree).uniform(-2, 2, size=(5, m))
        lib = build_library(X, LibrarySpec(degree, bias))
        assert lib.p == comb(m + degree, degree) - (0 if bias else 1)
        for j, e in enumerate(lib.features):
            assert np.allclose(lib.values[:, j], np.prod(X ** np.array(e), axis=1), atol=1e-12)
        assert np.array_equal(lib.values, build_library(X, LibrarySpec(degree, bias)).values)
