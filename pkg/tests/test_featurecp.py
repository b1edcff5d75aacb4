import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bordered_solve
from sindycp.errors import CalibrationError, ParameterError
from sindycp.featurecp import (
    check_skip_rate,
    coefficient_intervals,
    esindy_intervals,
    featurecp_scores,
    surrogate_model,
)
from sindycp.model import SparseModel
from sindycp.preprocess import prepare_regression
from sindycp.sindy import Ensemble, bootstrap_ensemble, jackknife_ensemble, stlsq
from sindycp.systems import NoiseSpec, add_measurement_noise, simulate_ode


@pytest.fixture(scope="module")
def exact_jk(lv_exact):
    theta, xdot, true = lv_exact
    return jackknife_ensemble(theta, xdot, 0.05), theta, xdot, true


class TestSurrogate:
    def test_exact_data_equals_member(self, exact_jk):
        ens, theta, xdot, _ = exact_jk
        m, rows, out = ens.members[3], ens.train_rows[3], ens.held_out[3]
        sur = surrogate_model(theta.values[rows], xdot[rows], theta.values[out], xdot[out], m.support)
        assert np.allclose(sur.coeffs, m.coeffs, atol=1e-10)

    def test_three_row_instance(self):
        A = np.array([[1.0, 0.5, 9.0], [2.0, -1.0, 9.0], [0.3, 0.7, 9.0]])
        y = np.array([1.0, -0.4, 0.8])
        support = np.array([[True], [True], [False]])
        ci, di = np.array([0.6, 1.5, 3.0]), 2.0
        sur = surrogate_model(A, y, ci, [di], support)
        xi, _ = bordered_solve(A[:, :2], y, ci[:2], di)
        assert np.allclose(sur.coeffs[:2, 0], xi, atol=1e-12)
        assert sur.coeffs[2, 0] == 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_constraint_residual(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(15, 5))
        Y = rng.normal(size=(15, 2))
        support = rng.random((5, 2)) < 0.7
        support[0] = True
        ci, yi = rng.normal(size=5), rng.normal(size=2)
        sur = surrogate_model(A, Y, ci, yi, support)
        assert np.abs(ci @ sur.coeffs - yi).max() <= 1e-10
        assert not sur.coeffs[~support].any()


def _toy_jackknife():
    """Four-row single-feature jackknife: too few members to calibrate."""
    x = np.ones(4)
    y = 2 * x
    feats = ((1,),)
    members, rows, held = [], [], []
    for i in range(4):
        keep = np.setdiff1d(np.arange(4), [i])
        members.append(SparseModel.from_coeffs([[2.0]], feats))
        rows.append(keep)
        held.append(np.array([i]))
    return Ensemble(tuple(members), tuple(rows), "jackknife", 4, tuple(held)), x[:, None], y


class TestScores:
    def test_exact_scores_zero(self, exact_jk):
        ens, theta, xdot, _ = exact_jk
        fs = featurecp_scores(ens, theta, xdot)
        assert np.allclose(fs.scores, 0, atol=1e-8)
        assert fs.skipped == 0 and fs.constraint_residual <= 1e-10

    def test_single_feature_shift(self):
        # one-column surrogate is pinned to the held-out ratio ydot_i / x_i = 5
        A = np.ones((3, 1))
        sur = surrogate_model(A[1:], [2.0, 2.0], A[0], [5.0], [[True]])
        member = SparseModel.from_coeffs([[2.0]], ((1,),))
        assert np.abs(sur.coeffs - member.coeffs).sum() == pytest.approx(3.0)

    def test_requires_jackknife(self, lv_exact):
        theta, xdot, _ = lv_exact
        with pytest.raises(ParameterError):
            featurecp_scores(bootstrap_ensemble(theta, xdot, 5, 0.05, 0), theta, xdot)

    def test_too_few_scores(self):
        ens, A, y = _toy_jackknife()
        with pytest.raises(CalibrationError):
            featurecp_scores(ens, A, y)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000))
    def test_nonnegative_and_audited(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(25, 4))
        y = A @ [1.0, 0.0, -0.5, 0.2] + 0.1 * rng.normal(size=25)
        ens = jackknife_ensemble(A, y, 0.1)
        fs = featurecp_scores(ens, A, y)
        assert np.all(fs.scores >= 0) and fs.constraint_residual <= 1e-10


class TestIntervals:
    def test_exact_collapse(self, exact_jk):
        ens, theta, xdot, true = exact_jk
        iv = coefficient_intervals(ens, featurecp_scores(ens, theta, xdot), 0.1)
        assert np.allclose(iv.lower, true, atol=1e-7) and np.allclose(iv.upper, true, atol=1e-7)
        assert iv.contains(true)

    def test_uniform_width_and_structural_zero(self, lv):
        ts = simulate_ode(lv, lv.default_x0, 0.1, 99)
        noisy = add_measurement_noise(ts, NoiseSpec("gaussian", 0.1, seed=0))
        theta, xdot = prepare_regression(noisy)
        ens = jackknife_ensemble(theta, xdot, 0.05)
        iv = coefficient_intervals(ens, featurecp_scores(ens, theta, xdot), 0.1)
        active = ~iv.structural_zero
        assert np.allclose(iv.width[active], 2 * iv.half_width)
        assert np.all(iv.lower[~active] == 0) and np.all(iv.upper[~active] == 0)

    def test_quantile_rule(self, exact_jk):
        ens, *_ = exact_jk
        iv = coefficient_intervals(ens, np.arange(1, 10) / 10, 0.1)
        assert iv.half_width == pytest.approx(0.9)

    def test_esindy_baseline_quantiles(self):
        feats = ((1,),)
        vals = np.arange(1.0, 101.0)
        members = tuple(SparseModel.from_coeffs([[v]], feats) for v in vals)
        ens = Ensemble(members, tuple(np.arange(1) for _ in vals), "bootstrap", 1)
        iv = esindy_intervals(ens, 0.1)
        assert iv.lower[0, 0] == pytest.approx(np.quantile(vals, 0.05))
        assert iv.upper[0, 0] == pytest.approx(np.quantile(vals, 0.95))

    def test_skip_rate(self):
        from sindycp.featurecp import FeatureCPScores

        with pytest.raises(CalibrationError):
            check_skip_rate(FeatureCPScores(np.zeros(7), tuple(range(7)), 3, 0.0))
        check_skip_rate(FeatureCPScores(np.zeros(8), tuple(range(8)), 2, 0.0))

    def test_csv(self, exact_jk, tmp_path):
        ens, theta, xdot, _ = exact_jk
        iv = coefficient_intervals(ens, featurecp_scores(ens, theta, xdot), 0.1)
        path = tmp_path / "ci.csv"
        iv.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "feature,state,center,lower,upper,structural_zero,alpha,n_scores"
        assert lines[1] == "1,1,0.0,0.0,0.0,1,0.1,200"
