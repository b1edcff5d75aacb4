"""Feature conformal prediction for SINDy model coefficients.

Every jackknife member is paired with a surrogate model: the least-squares
fit on the member's own training rows and support, constrained to reproduce
the held-out derivative exactly. The L1 distance between surrogate and
member is the non-conformity score, and one quantile of those scores
calibrates a common half-width for every active coefficient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from sindycp.conformal_ts import empirical_quantile
from sindycp.errors import CalibrationError, DegeneracyError, ParameterError
from sindycp.model import SparseModel
from sindycp.sindy import Ensemble, _design, _response, aggregate, constrained_lstsq

MIN_SCORES = 5
MAX_SKIP_RATE = 0.2


def surrogate_model(theta_rest, xdot_rest, theta_i, xdot_i, support, features=None) -> SparseModel:
    """Constrained refit on ``support`` that interpolates the held-out row(s).

    ``theta_i`` / ``xdot_i`` may hold one row or a batch of rows; a batch is
    enforced as simultaneous equality constraints. No thresholding is applied.

    Raises
    ------
    DegeneracyError
        If some state's KKT system is singular; the message names the state.
    """
    A, feats, labels = _design(theta_rest)
    Y = _response(xdot_rest)
    Ci = np.atleast_2d(np.asarray(theta_i.values if hasattr(theta_i, "values") else theta_i, float))
    Yi = np.asarray(xdot_i, dtype=float).reshape(Ci.shape[0], -1)
    support = np.asarray(support, dtype=bool)
    p, m = support.shape
    coeffs = np.zeros((p, m))
    for k in range(m):
        cols = np.flatnonzero(support[:, k])
        if cols.size == 0:
            if np.any(Yi[:, k] != 0):
                raise DegeneracyError(f"state {k}: empty support cannot interpolate", constraint=k)
            continue
        try:
            xi, _ = constrained_lstsq(A[:, cols], Y[:, k], Ci[:, cols], Yi[:, k])
        except DegeneracyError as exc:
            raise DegeneracyError(f"state {k}: {exc}", constraint=k) from exc
        coeffs[cols, k] = xi
    return SparseModel(coeffs, support, np.nan, features or feats, labels=labels)


@dataclass(frozen=True)
class FeatureCPScores:
    scores: np.ndarray
    members: tuple  # indices of members that produced a score
    skipped: int
    constraint_residual: float  # worst |theta_i xi - xdot_i| over surviving surrogates

    @property
    def skip_rate(self) -> float:
        total = self.skipped + len(self.members)
        return self.skipped / total if total else 0.0


def featurecp_scores(ens: Ensemble, theta, xdot) -> FeatureCPScores:
    """Scores ``s_i = ||surrogate_i - member_i||_1`` for a jackknife ensemble."""
    if ens.kind != "jackknife" or not ens.held_out:
        raise ParameterError("feature-CP needs a jackknife ensemble with held-out indices")
    A, _, _ = _design(theta)
    Y = _response(xdot)
    scores, used, skipped, worst = [], [], 0, 0.0
    for i, (member, rows, out) in enumerate(zip(ens.members, ens.train_rows, ens.held_out)):
        try:
            sur = surrogate_model(A[rows], Y[rows], A[out], Y[out], member.support, member.features)
        except DegeneracyError:
            skipped += 1
            continue
        worst = max(worst, float(np.abs(A[out] @ sur.coeffs - Y[out]).max()))
        scores.append(float(np.abs(sur.coeffs - member.coeffs).sum()))
        used.append(i)
    if len(scores) < MIN_SCORES:
        raise CalibrationError(f"only {len(scores)} usable feature-CP scores (need {MIN_SCORES})")
    return FeatureCPScores(np.array(scores), tuple(used), skipped, worst)


@dataclass(frozen=True)
class CoefficientIntervals:
    """Per-coefficient intervals; structurally-zero entries carry ``[0, 0]``."""

    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    structural_zero: np.ndarray
    alpha: float
    method: str
    features: tuple
    n_scores: int = 0
    half_width: float = np.nan
    scores: np.ndarray = None
    labels: tuple = None

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, true_coeffs, entries=None) -> bool:
        """True when every selected entry of ``true_coeffs`` lies in its interval.

        ``entries`` defaults to the nonzero entries of ``true_coeffs``.
        """
        true_coeffs = np.asarray(true_coeffs, dtype=float)
        if entries is None:
            entries = true_coeffs != 0
        inside = (self.lower <= true_coeffs) & (true_coeffs <= self.upper)
        return bool(inside[entries].all())

    @property
    def feature_names(self) -> list[str]:
        return SparseModel(self.center, self.center != 0, 0.0, self.features,
                           labels=self.labels).feature_names

    def to_csv(self, path, header_lines=()):
        """Columns: feature, state, center, lower, upper, structural_zero, alpha, n_scores."""
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "state", "center", "lower", "upper", "structural_zero",
                        "alpha", "n_scores"])
            for j, name in enumerate(self.feature_names):
                for k in range(self.center.shape[1]):
                    w.writerow([name, k + 1, repr(float(self.center[j, k])),
                                repr(float(self.lower[j, k])), repr(float(self.upper[j, k])),
                                int(self.structural_zero[j, k]), repr(float(self.alpha)),
                                self.n_scores])


def coefficient_intervals(ens: Ensemble, scores, alpha: float,
                          aggregation: str = "median") -> CoefficientIntervals:
    """Centre on the ensemble aggregate, half-width = score quantile on every active entry."""
    scores = np.asarray(getattr(scores, "scores", scores), dtype=float)
    agg = aggregate(ens, aggregation)
    q = float(empirical_quantile(scores, alpha))
    zero = ~agg.support
    lower = np.where(zero, 0.0, agg.coeffs - q)
    upper = np.where(zero, 0.0, agg.coeffs + q)
    return CoefficientIntervals(agg.coeffs, lower, upper, zero, alpha, "feature_cp",
                                agg.features, len(scores), q, scores, agg.labels)


def esindy_intervals(ens: Ensemble, alpha: float, aggregation: str = "median") -> CoefficientIntervals:
    """Baseline: per-coefficient ``[alpha/2, 1 - alpha/2]`` quantiles across members."""
    stack = ens.coeff_stack
    agg = aggregate(ens, aggregation)
    lower, upper = np.quantile(stack, [alpha / 2, 1 - alpha / 2], axis=0)
    zero = ~ens.support_stack.any(axis=0)
    lower = np.where(zero, 0.0, lower)
    upper = np.where(zero, 0.0, upper)
    return CoefficientIntervals(agg.coeffs, lower, upper, zero, alpha, "esindy",
                                agg.features, ens.B, labels=agg.labels)


def check_skip_rate(fs: FeatureCPScores, limit: float = MAX_SKIP_RATE):
    if fs.skip_rate > limit:
        raise CalibrationError(
            f"{fs.skipped} of {fs.skipped + len(fs.members)} surrogates skipped "
            f"({fs.skip_rate:.0%} > {limit:.0%})"
        )
