"""Library-feature importance: LOCO excess error and the LOCO-path statistic.

Both scores are estimated with jackknife resampling. For every held-out fold
the full model and one reduced model per dropped feature are refitted with
the complete STLSQ procedure, so a reduced model may pick a different
support than the full one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from sindycp.errors import InsufficientDataError, ParameterError, SindyCPError
from sindycp.model import SparseModel
from sindycp.sindy import _design, _response, inclusion_probability, jackknife_batches, stlsq


@dataclass(frozen=True)
class ImportanceConfig:
    max_iter: int = 20
    batch: int | None = None  # None: leave-one-out up to loo_limit rows, then n_batches blocks
    loo_limit: int = 200
    n_batches: int = 50

    def batch_for(self, n: int) -> int:
        if self.batch is not None:
            return self.batch
        return 1 if n <= self.loo_limit else -(-n // self.n_batches)


@dataclass(frozen=True)
class LambdaGrid:
    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if len(v) < 2:
            raise ParameterError("a lambda grid needs at least two values")
        if v[0] < 0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ParameterError("lambda grid must be non-negative and strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def log_spaced(cls, lo, hi, k=10):
        return cls(tuple(np.geomspace(lo, hi, k)))

    @classmethod
    def around(cls, lam_ref, k=10):
        """Default grid: ``k`` log-spaced points on ``[0.1, 5] * lam_ref``."""
        return cls.log_spaced(0.1 * lam_ref, 5.0 * lam_ref, k)


def normalize_columns(raw) -> np.ndarray:
    """Scale each column to sum to one; all-zero columns stay zero."""
    raw = np.clip(np.asarray(raw, dtype=float), 0.0, None)
    tot = raw.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, raw / np.where(tot > 0, tot, 1.0), 0.0)


@dataclass(frozen=True)
class ImportanceReport:
    scores: np.ndarray  # (p, m), normalised per state
    raw: np.ndarray
    method: str
    data_len: int
    features: tuple
    labels: tuple = None
    skipped: int = 0

    @property
    def feature_names(self) -> list[str]:
        return SparseModel(self.raw, np.ones_like(self.raw, bool), 0.0, self.features,
                           labels=self.labels).feature_names

    def top(self, k) -> list[set]:
        """Indices of the ``k`` highest-scoring features for every state."""
        order = np.argsort(-self.scores, axis=0, kind="stable")
        return [set(order[:k, i].tolist()) for i in range(self.scores.shape[1])]

    def rows(self):
        for j, name in enumerate(self.feature_names):
            for k in range(self.scores.shape[1]):
                yield [name, k + 1, repr(float(self.raw[j, k])), repr(float(self.scores[j, k])),
                       self.method, self.data_len]

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "state", "raw", "normalized", "method", "data_len"])
            w.writerows(self.rows())


def _drop(A, j):
    return np.delete(A, j, axis=1)


def _reinsert(coeffs, j):
    """Put a zero row back at position ``j`` so reduced and full models align."""
    return np.insert(coeffs, j, 0.0, axis=0)


def loco_excess(full: SparseModel, reduced: SparseModel, theta_row, xdot_row) -> np.ndarray:
    """Excess absolute error of the reduced model at held-out rows, per state.

    ``reduced`` may either have a zero row for the dropped feature or be
    expressed on the full library; its missing column contributes nothing.
    Several rows give one value per row, shape (rows, m).
    """
    th = np.atleast_2d(np.asarray(theta_row, dtype=float))
    y = np.asarray(xdot_row, dtype=float).reshape(th.shape[0], -1)
    full_c = full.coeffs if isinstance(full, SparseModel) else np.asarray(full, float)
    red_c = reduced.coeffs if isinstance(reduced, SparseModel) else np.asarray(reduced, float)
    out = np.abs(y - th @ red_c) - np.abs(y - th @ full_c)
    return out[0] if np.ndim(theta_row) == 1 else out


def _check(A, n_min=3, p_min=2):
    if A.shape[0] < n_min:
        raise InsufficientDataError(f"need at least {n_min} rows, got {A.shape[0]}")
    if A.shape[1] < p_min:
        raise ParameterError(f"need at least {p_min} library features, got {A.shape[1]}")


def loco_importance(theta, xdot, lam: float, cfg: ImportanceConfig = ImportanceConfig()) -> ImportanceReport:
    """Jackknife LOCO: mean positive excess error of dropping each feature.

    Negative excess errors are clipped to zero point by point before
    averaging over held-out rows.
    """
    A, feats, labels = _design(theta)
    Y = _response(xdot)
    _check(A)
    n, p = A.shape
    m = Y.shape[1]
    total = np.zeros((p, m))
    count = 0
    skipped = 0
    for out in jackknife_batches(n, cfg.batch_for(n)):
        keep = np.setdiff1d(np.arange(n), out)
        At, Yt = A[keep], Y[keep]
        full = stlsq(At, Yt, lam, cfg.max_iter).coeffs
        for j in range(p):
            try:
                red = _reinsert(stlsq(_drop(At, j), Yt, lam, cfg.max_iter).coeffs, j)
            except (SindyCPError, np.linalg.LinAlgError):
                skipped += 1
                continue
            delta = loco_excess(full, red, A[out], Y[out])
            total[j] += np.clip(delta, 0.0, None).sum(axis=0)
        count += len(out)
    raw = total / count
    return ImportanceReport(normalize_columns(raw), raw, "loco", n, feats, labels, skipped)


def _path(A, Y, grid, max_iter):
    return np.stack([stlsq(A, Y, lam, max_iter).coeffs for lam in grid.values])


def _path_stats(A, Y, grid, max_iter, features=None):
    full = _path(A, Y, grid, max_iter)
    p = A.shape[1]
    features = range(p) if features is None else features
    out = np.zeros((p, Y.shape[1]))
    for j in features:
        red = _reinsert(_path(_drop(A, j), Y, grid, max_iter).transpose(1, 0, 2), j).transpose(1, 0, 2)
        out[j] = np.abs(red - full).sum(axis=(0, 1))
    return out


def loco_path_stat(theta, xdot, grid: LambdaGrid, j: int, max_iter: int = 20) -> np.ndarray:
    """Cumulative L1 gap between the full and the feature-``j``-dropped STLSQ paths, per state."""
    A, _, _ = _design(theta)
    Y = _response(xdot)
    if not 0 <= j < A.shape[1]:
        raise ParameterError(f"feature index {j} out of range")
    return _path_stats(A, Y, grid, max_iter, [j])[j]


def loco_path_importance(theta, xdot, grid: LambdaGrid,
                         cfg: ImportanceConfig = ImportanceConfig()) -> ImportanceReport:
    """LOCO-path statistics averaged over jackknife folds, normalised per state."""
    A, feats, labels = _design(theta)
    Y = _response(xdot)
    _check(A, p_min=1)
    n, p = A.shape
    folds = jackknife_batches(n, cfg.batch_for(n))
    raw = np.zeros((p, Y.shape[1]))
    for out in folds:
        keep = np.setdiff1d(np.arange(n), out)
        raw += _path_stats(A[keep], Y[keep], grid, cfg.max_iter)
    raw /= len(folds)
    return ImportanceReport(normalize_columns(raw), raw, "loco_path", n, feats, labels)


def inclusion_report(ens, data_len=None) -> ImportanceReport:
    """Inclusion probabilities of an ensemble wrapped as an importance report."""
    raw = inclusion_probability(ens)
    return ImportanceReport(normalize_columns(raw), raw, "inclusion",
                            ens.n_rows if data_len is None else data_len,
                            ens.features, ens.members[0].labels)


def separation(report: ImportanceReport, true_support) -> bool:
    """True when every true feature outscores every inert one, in every state."""
    true_support = np.asarray(true_support, dtype=bool)
    for k in range(true_support.shape[1]):
        t, f = report.scores[true_support[:, k], k], report.scores[~true_support[:, k], k]
        if t.size and f.size and not t.min() > f.max():
            return False
    return True
