import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from sindycp.errors import ArityError, DivergenceError, IntegrationError, ParameterError, RegistryError
from sindycp.preprocess import build_library
from sindycp.systems import (
    NoiseSpec,
    TimeSeries,
    add_measurement_noise,
    draw_noise,
    make_system,
    rk4_step,
    simulate_ode,
    simulate_sde,
)


def zero_field(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def identity_field(x):
    return np.asarray(x, dtype=float)


class TestRegistry:
    def test_lv_fixed_point(self, lv):
        assert np.allclose(lv.rhs([10.0, 10.0]), [0.0, 0.0], atol=0)

    def test_lv_value(self, lv):
        assert np.allclose(lv.rhs([1.0, 1.0]), [0.9, -0.9], atol=1e-15)

    def test_lorenz_origin(self):
        lz = make_system("lorenz", [10, 28, 8 / 3])
        assert np.array_equal(lz.rhs([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])

    def test_unknown_name(self):
        with pytest.raises(RegistryError):
            make_system("van_der_pol")

    def test_arity(self):
        with pytest.raises(ArityError):
            make_system("lotka_volterra", [1, 2, 3])

    @pytest.mark.parametrize("name", ["lotka_volterra", "lorenz"])
    def test_true_coeffs_reproduce_rhs(self, name):
        sys_ = make_system(name)
        X = np.random.default_rng(3).uniform(0.1, 20, size=(100, sys_.dim))
        via_library = build_library(X).values @ sys_.true_coeffs.coeffs
        assert np.allclose(via_library, sys_.rhs(X), rtol=0, atol=1e-12 * np.abs(sys_.rhs(X)).max())

    def test_lv_true_coefficients(self, lv):
        C = lv.true_coeffs.coeffs
        names = lv.true_coeffs.feature_names
        assert C[names.index("x1"), 0] == 1 and C[names.index("x1*x2"), 0] == -0.1
        assert C[names.index("x2"), 1] == -1 and C[names.index("x1*x2"), 1] == 0.1
        assert lv.true_coeffs.support.sum() == 4


class TestRK4:
    def test_zero_field(self):
        assert np.array_equal(rk4_step(zero_field, [10.0, 10.0], 0.1), [10.0, 10.0])

    def test_scalar_exponential_stages(self):
        # stages by hand: k1 = 1, k2 = 1.05, k3 = 1.0525, k4 = 1.10525
        expected = 1 + 0.1 / 6 * (1 + 2 * 1.05 + 2 * 1.0525 + 1.10525)
        got = rk4_step(identity_field, np.array([1.0]), 0.1)[0]
        assert got == pytest.approx(expected, abs=1e-15)
        assert got == pytest.approx(1.105170833, abs=1e-9)

    def test_lv_equilibrium(self, lv):
        assert np.allclose(rk4_step(lv.rhs, [10.0, 10.0], 0.1), [10.0, 10.0], atol=0)

    def test_nonfinite_stage(self):
        def blows(x):
            return np.array([np.inf]) if x[0] > 1 else np.array([100.0])

        with pytest.raises(IntegrationError) as info:
            rk4_step(blows, np.array([1.0]), 0.1)
        assert info.value.stage == 2

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.floats(0.001, 0.1))
    def test_linear_field_matches_taylor(self, entries, dt):
        A = np.array(entries).reshape(2, 2)
        A *= 0.1 / max(np.linalg.norm(A, 2) * dt, 1e-12) if np.linalg.norm(A, 2) * dt > 0.1 else 1.0
        x = np.array([0.3, -1.2])
        M = A * dt
        taylor = np.eye(2) + M + M @ M / 2 + M @ M @ M / 6 + M @ M @ M @ M / 24
        assert np.allclose(rk4_step(lambda v: A @ v, x, dt), taylor @ x, atol=1e-12)


class TestSimulateODE:
    def test_rejects_zero_steps(self):
        with pytest.raises(ParameterError):
            simulate_ode(zero_field, [1.0], 0.1, 0)

    def test_one_step_zero_field(self):
        ts = simulate_ode(zero_field, [2.0, 3.0], 0.1, 1)
        assert ts.n == 2 and np.array_equal(ts.states[0], ts.states[1])

    def test_lv_equilibrium_constant(self, lv):
        ts = simulate_ode(lv, [10.0, 10.0], 0.1, 50)
        assert np.allclose(ts.states, 10.0, atol=0)

    def test_exponential_oracle(self):
        ts = simulate_ode(identity_field, [1.0], 0.1, 10)
        h = 0.1
        rk4_factor = 1 + h + h**2 / 2 + h**3 / 6 + h**4 / 24
        assert ts.states[-1, 0] == pytest.approx(rk4_factor**10, abs=1e-14)
        # global RK4 error after ten steps is about 2.1e-6, not below 1e-6
        assert abs(ts.states[-1, 0] - np.e) < 2.5e-6

    def test_linear_system_matches_expm(self):
        A = np.array([[-0.5, 1.0], [-1.0, -0.5]])
        ts = simulate_ode(lambda v: A @ v, [1.0, 0.0], 0.01, 200)
        assert np.allclose(ts.states[-1], expm(2.0 * A) @ [1.0, 0.0], atol=1e-9)


class TestSimulateSDE:
    def test_zero_field_constant(self):
        ts = simulate_sde(zero_field, [1.0, 2.0], 0.1, 20, 0.0, seed=1)
        assert np.array_equal(ts.states, np.tile([1.0, 2.0], (21, 1)))

    def test_seeded(self, lv):
        a = simulate_sde(lv, [5, 5], 0.1, 100, 0.05, seed=7, substeps=4)
        b = simulate_sde(lv, [5, 5], 0.1, 100, 0.05, seed=7, substeps=4)
        assert np.array_equal(a.states, b.states)

    def test_euler_error_against_exponential(self):
        ts = simulate_sde(identity_field, [1.0], 0.001, 1000, 0.0, seed=0)
        assert abs(ts.states[-1, 0] / np.e - 1) < 0.002

    def test_euler_matches_ode_to_first_order(self):
        errs = []
        for dt in (0.01, 0.005):
            n = int(round(1 / dt))
            sde = simulate_sde(identity_field, [1.0], dt, n, 0.0, seed=0).states[-1, 0]
            ode = simulate_ode(identity_field, [1.0], dt, n).states[-1, 0]
            errs.append(abs(sde - ode))
        assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)

    def test_divergence_step(self):
        with pytest.raises(DivergenceError) as info:
            simulate_sde(lambda x: x * x, [2.0], 0.1, 100, 0.0, seed=0, guard=1e6)
        assert 1 <= info.value.step <= 100


class TestNoise:
    def test_zero_level_identity(self, lv):
        ts = simulate_ode(lv, [5, 5], 0.1, 10)
        out = add_measurement_noise(ts, NoiseSpec("gaussian", 0.0, seed=3))
        assert np.array_equal(out.states, ts.states)

    def test_gamma_mean(self):
        noise = draw_noise(NoiseSpec("gamma", 0.5, gamma_shape=2.0, seed=11), (100_000,))
        se = np.sqrt(2.0) * 0.5 / np.sqrt(noise.size)
        assert abs(noise.mean() - 1.0) < 3 * se

    def test_gamma_centered(self):
        noise = draw_noise(NoiseSpec("gamma", 0.5, centered=True, seed=11), (100_000,))
        assert abs(noise.mean()) < 3 * np.sqrt(2.0) * 0.5 / np.sqrt(noise.size)

    def test_gaussian_std(self):
        noise = draw_noise(NoiseSpec("gaussian", 0.1, seed=5), (100_000,))
        assert 0.097 <= noise.std() <= 0.103

    def test_reproducible(self, lv):
        ts = simulate_ode(lv, [5, 5], 0.1, 10)
        spec = NoiseSpec("gaussian", 0.2, seed=9)
        assert np.array_equal(add_measurement_noise(ts, spec).states,
                              add_measurement_noise(ts, spec).states)

    def test_bad_kind(self):
        with pytest.raises(ParameterError):
            NoiseSpec("laplace", 0.1)


class TestTimeSeries:
    def test_csv_round_trip(self, lv, tmp_path):
        ts = simulate_ode(lv, [5, 5], 0.1, 20)
        path = tmp_path / "ts.csv"
        ts.to_csv(path, ["origin = test"])
        back = TimeSeries.from_csv(path)
        assert np.array_equal(back.states, ts.states)
        assert back.labels == ("x1", "x2")
        assert path.read_text().splitlines()[1] == "t,x1,x2"

    def test_nonfinite_row(self):
        from sindycp.errors import DataError

        with pytest.raises(DataError) as info:
            TimeSeries([[1.0], [np.nan], [2.0]], 0.1)
        assert info.value.row == 1
