"""Smoothing, derivative estimation and the polynomial candidate library."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_coeffs, savgol_filter

from sindycp._poly import eval_monomials, monomial_exponents, monomial_name
from sindycp.errors import DataError, InsufficientDataError, ParameterError
from sindycp.systems import TimeSeries

MAX_LIBRARY_DEGREE = 5


@dataclass(frozen=True)
class LibrarySpec:
    max_degree: int = 2
    include_bias: bool = True

    def __post_init__(self):
        if not 0 <= self.max_degree <= MAX_LIBRARY_DEGREE:
            raise ParameterError(f"max_degree must lie in [0, {MAX_LIBRARY_DEGREE}]")


@dataclass(frozen=True)
class LibraryMatrix:
    """Candidate functions evaluated row-wise.

    ``values[:, j]`` is the monomial with exponents ``features[j]``.
    """

    values: np.ndarray
    features: tuple
    spec: LibrarySpec
    labels: tuple = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [monomial_name(f, self.labels) for f in self.features]

    def rows(self, idx) -> "LibraryMatrix":
        return LibraryMatrix(self.values[idx], self.features, self.spec, self.labels)


@dataclass(frozen=True)
class DerivMatrix:
    values: np.ndarray
    method: str = "finite_difference"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if not np.isfinite(v).all():
            raise DataError("derivative matrix has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _check_savgol(window, polyorder, n):
    if window % 2 != 1:
        raise ParameterError(f"window must be odd, got {window}")
    if not 3 <= window <= n:
        raise ParameterError(f"window must satisfy 3 <= window <= n={n}, got {window}")
    if not 0 <= polyorder < window:
        raise ParameterError(f"polyorder must satisfy 0 <= polyorder < window, got {polyorder}")


def savgol_weights(window, polyorder, pos=None):
    """Least-squares weights returning the local fit evaluated at offset ``pos``.

    ``pos`` defaults to the window centre; ``pos = window - 1`` gives the
    causal end-point estimate used for online forecasting.
    """
    _check_savgol(window, polyorder, window)
    return savgol_coeffs(window, polyorder, pos=pos, use="dot")


def savgol_smooth(ts: TimeSeries, window: int = 9, polyorder: int = 3) -> TimeSeries:
    """Savitzky-Golay smoothing; the edges use the nearest full-window fit."""
    _check_savgol(window, polyorder, ts.n)
    smoothed = savgol_filter(ts.states, window, polyorder, axis=0, mode="interp")
    return ts.with_states(smoothed, smoothed=f"savgol(window={window}, polyorder={polyorder})")


def finite_diff(ts: TimeSeries) -> DerivMatrix:
    """Second-order central differences, one-sided second-order stencils at both ends."""
    if ts.n < 3:
        raise InsufficientDataError(f"finite differences need n >= 3, got {ts.n}")
    return DerivMatrix(np.gradient(ts.states, ts.dt, axis=0, edge_order=2), "finite_difference")


def build_library(X, spec: LibrarySpec = LibrarySpec(), labels=None) -> LibraryMatrix:
    """Polynomial library with columns ordered by degree then lexicographically.

    For two states and ``max_degree=2`` the columns are
    ``1, x1, x2, x1^2, x1*x2, x2^2``.
    """
    if isinstance(X, TimeSeries):
        labels = labels or X.labels
        X = X.states
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] < 1:
        raise DataError("library needs at least one state column")
    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        row = int(np.argmax(bad))
        raise DataError(f"non-finite state at row {row}", row=row)
    features = monomial_exponents(X.shape[1], spec.max_degree, spec.include_bias)
    return LibraryMatrix(eval_monomials(X, features), features, spec,
                         tuple(labels) if labels else None)


def prepare_regression(ts: TimeSeries, spec: LibrarySpec = LibrarySpec(),
                       window: int = 9, polyorder: int = 3):
    """Smooth, differentiate and build the library in one go."""
    smooth = savgol_smooth(ts, window, polyorder)
    return build_library(smooth, spec), finite_diff(smooth)
