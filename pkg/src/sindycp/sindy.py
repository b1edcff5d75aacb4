"""Sparse regression core: STLSQ, equality-constrained least squares, ensembles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sindycp.errors import DegeneracyError, InsufficientDataError, ParameterError
from sindycp.model import SparseModel
from sindycp.preprocess import DerivMatrix, LibraryMatrix

__all__ = [
    "SparseModel",
    "Ensemble",
    "stlsq",
    "constrained_lstsq",
    "bootstrap_ensemble",
    "jackknife_ensemble",
    "aggregate",
    "inclusion_probability",
    "prune_by_inclusion",
]


def _design(theta):
    """Return ``(values, features, labels)`` for a LibraryMatrix or a bare array.

    Bare arrays get one pseudo-variable per column so that models built from
    them still carry a consistent feature list.
    """
    if isinstance(theta, LibraryMatrix):
        return theta.values, theta.features, theta.labels
    A = np.asarray(theta, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    p = A.shape[1]
    feats = tuple(tuple(int(i == j) for i in range(p)) for j in range(p))
    return A, feats, None


def _response(xdot):
    Y = xdot.values if isinstance(xdot, DerivMatrix) else np.asarray(xdot, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def _lstsq(A, y):
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    return coef, rank < A.shape[1]


def _stlsq_column(A, y, lam, max_iter):
    p = A.shape[1]
    active = np.ones(p, dtype=bool)
    coef = np.zeros(p)
    deficient = False
    for _ in range(max_iter):
        c, deficient = _lstsq(A[:, active], y)
        keep = np.abs(c) >= lam
        if keep.all():
            coef[active] = c
            return coef, active, deficient
        active[np.flatnonzero(active)[~keep]] = False
        if not active.any():
            return coef, active, False
    # max_iter exhausted: refit on whatever support we ended with
    c, deficient = _lstsq(A[:, active], y)
    coef[active] = c
    return coef, active, deficient


def stlsq(theta, xdot, lam: float, max_iter: int = 20) -> SparseModel:
    """Sequentially thresholded least squares, one state column at a time.

    Each pass solves least squares on the active columns and drops the
    coefficients whose magnitude is below ``lam``. Iteration stops once the
    support no longer changes (the last solve is then the refit on the final
    support) or after ``max_iter`` passes.

    Rank-deficient active sets are solved in the minimum-norm sense and the
    returned model has ``rank_deficient=True``. Eliminating every column is
    a valid outcome and yields the all-zero model.
    """
    A, feats, labels = _design(theta)
    Y = _response(xdot)
    if A.shape[0] != Y.shape[0]:
        raise ParameterError(f"row mismatch: theta has {A.shape[0]}, xdot has {Y.shape[0]}")
    if lam < 0:
        raise ParameterError(f"threshold must be >= 0, got {lam}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    p, m = A.shape[1], Y.shape[1]
    coeffs = np.zeros((p, m))
    support = np.zeros((p, m), dtype=bool)
    deficient = False
    for k in range(m):
        coeffs[:, k], support[:, k], dk = _stlsq_column(A, Y[:, k], lam, max_iter)
        deficient |= dk
    return SparseModel(coeffs, support, float(lam), feats, deficient, labels)


def constrained_lstsq(theta, y, c_row, d):
    """Least squares ``min ||theta @ xi - y||`` subject to ``c_row @ xi = d``.

    Solved by a null-space reduction of the constraint, which is equivalent to
    the bordered KKT system

        [theta'theta  c']  [xi]   [theta' y]
        [c            0 ]  [z ] = [d       ]

    whenever that system is nonsingular. Several constraint rows may be
    stacked in ``c_row``.

    Returns
    -------
    xi : ndarray, shape (p,)
    z : ndarray, shape (k,)
        Lagrange multipliers; zero when the unconstrained optimum already
        satisfies the constraint.

    Raises
    ------
    DegeneracyError
        If the constraint rows are linearly dependent or ``theta`` is rank
        deficient on the null space of the constraint (singular KKT matrix).
    """
    A = np.asarray(theta, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    y = np.asarray(y, dtype=float).ravel()
    C = np.atleast_2d(np.asarray(c_row, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float)).ravel()
    k, p = C.shape
    if p != A.shape[1]:
        raise ParameterError(f"constraint has {p} columns, theta has {A.shape[1]}")
    if d.size != k:
        raise ParameterError("one constraint value per constraint row is required")
    if k > p:
        raise DegeneracyError(f"{k} constraints on {p} coefficients", constraint=c_row)

    U, s, Vt = np.linalg.svd(C)
    if s[-1] <= max(C.shape) * np.finfo(float).eps * max(s[0], 1.0):
        raise DegeneracyError("constraint rows are linearly dependent", constraint=c_row)
    xi = Vt[:k].T @ ((U.T @ d) / s)
    N = Vt[k:].T
    if N.shape[1]:
        AN = A @ N
        # rank test relative to theta itself; lstsq's own tolerance is relative
        # to A @ N and misses a numerically vanishing reduced matrix
        sv = np.linalg.svd(AN, compute_uv=False)
        tol = max(A.shape) * np.finfo(float).eps * max(np.linalg.norm(A, 2), 1e-300)
        if AN.shape[0] < AN.shape[1] or sv.min() <= tol:
            raise DegeneracyError(
                "singular KKT matrix: theta is rank deficient on the constraint null space",
                constraint=c_row,
            )
        xi = xi + N @ np.linalg.lstsq(AN, y - A @ xi, rcond=None)[0]
    r = A.T @ (y - A @ xi)
    z = U @ ((Vt[:k] @ r) / s)
    return xi, z


@dataclass(frozen=True)
class Ensemble:
    """Fitted members plus the row indices each one was trained on.

    For ``kind="jackknife"`` member ``i`` was trained on every row except
    ``held_out[i]``.
    """

    members: tuple
    train_rows: tuple
    kind: str
    n_rows: int
    held_out: tuple = ()

    @property
    def B(self) -> int:
        return len(self.members)

    @property
    def features(self) -> tuple:
        return self.members[0].features

    @property
    def coeff_stack(self) -> np.ndarray:
        """Member coefficients stacked to shape (B, p, m)."""
        return np.stack([mdl.coeffs for mdl in self.members])

    @property
    def support_stack(self) -> np.ndarray:
        return np.stack([mdl.support for mdl in self.members])

    @property
    def flagged(self) -> list[int]:
        return [b for b, mdl in enumerate(self.members) if mdl.rank_deficient]

    def in_train(self, n_total=None) -> np.ndarray:
        """Boolean (B, n_total) matrix: True where a member saw that row."""
        n_total = self.n_rows if n_total is None else max(n_total, self.n_rows)
        mask = np.zeros((self.B, n_total), dtype=bool)
        for b, rows in enumerate(self.train_rows):
            mask[b, rows] = True
        return mask


def bootstrap_ensemble(theta, xdot, B: int, lam: float, seed: int, max_iter: int = 20) -> Ensemble:
    """Bagged STLSQ: each member sees ``n`` rows of ``[xdot, theta]`` drawn with replacement."""
    if B < 1:
        raise ParameterError(f"B must be >= 1, got {B}")
    A, feats, labels = _design(theta)
    Y = _response(xdot)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    members, rows = [], []
    for _ in range(B):
        idx = rng.integers(0, n, size=n)
        members.append(stlsq(LibraryMatrix(A[idx], feats, None, labels), Y[idx], lam, max_iter))
        rows.append(idx)
    return Ensemble(tuple(members), tuple(rows), "bootstrap", n)


def jackknife_batches(n: int, batch: int) -> list[np.ndarray]:
    if batch < 1:
        raise ParameterError(f"batch must be >= 1, got {batch}")
    nb = -(-n // batch)
    if nb < 2:
        raise InsufficientDataError(f"jackknife needs at least two batches (n={n}, batch={batch})")
    return [np.arange(i * batch, min(n, (i + 1) * batch)) for i in range(nb)]


def jackknife_ensemble(theta, xdot, lam: float, batch: int = 1, max_iter: int = 20) -> Ensemble:
    """Leave-one-batch-out STLSQ ensemble over contiguous row blocks."""
    A, feats, labels = _design(theta)
    Y = _response(xdot)
    n = A.shape[0]
    members, rows, held = [], [], []
    for out in jackknife_batches(n, batch):
        keep = np.setdiff1d(np.arange(n), out)
        members.append(stlsq(LibraryMatrix(A[keep], feats, None, labels), Y[keep], lam, max_iter))
        rows.append(keep)
        held.append(out)
    return Ensemble(tuple(members), tuple(rows), "jackknife", n, tuple(held))


def aggregate(ens: Ensemble, method: str = "median") -> SparseModel:
    stack = ens.coeff_stack
    if method == "median":
        agg = np.median(stack, axis=0)
    elif method == "mean":
        agg = stack.mean(axis=0)
    else:
        raise ParameterError(f"aggregation must be 'mean' or 'median', got {method!r}")
    first = ens.members[0]
    return SparseModel(agg, agg != 0, first.lam, first.features,
                       any(mdl.rank_deficient for mdl in ens.members), first.labels)


def inclusion_probability(ens: Ensemble) -> np.ndarray:
    return ens.support_stack.mean(axis=0)


def prune_by_inclusion(ens: Ensemble, tol: float) -> SparseModel:
    """Median aggregate with entries of inclusion probability below ``tol`` zeroed."""
    if not 0 <= tol <= 1:
        raise ParameterError(f"tol must lie in [0, 1], got {tol}")
    agg = aggregate(ens, "median")
    keep = agg.support & (inclusion_probability(ens) >= tol)
    return SparseModel(agg.coeffs, keep, agg.lam, agg.features, agg.rank_deficient, agg.labels)
