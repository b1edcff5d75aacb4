"""Sparse coefficient model shared by the regression, forecasting and CP modules."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from sindycp._poly import eval_monomials, monomial_name


@dataclass(frozen=True)
class SparseModel:
    """Coefficient matrix ``coeffs`` (features x states) with its active support.

    Parameters
    ----------
    coeffs : ndarray, shape (p, m)
    support : ndarray of bool, shape (p, m)
        Entries outside the support are exactly zero.
    lam : float
        Threshold used by the sparse regression that produced the model.
    features : tuple of exponent tuples
        Monomial exponents of the library columns, in column order.
    rank_deficient : bool
        Set when some least-squares solve fell back to the minimum-norm answer.
    """

    coeffs: np.ndarray
    support: np.ndarray
    lam: float
    features: tuple
    rank_deficient: bool = False
    labels: tuple = field(default=None)

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        support = np.array(self.support, dtype=bool).reshape(coeffs.shape)
        coeffs[~support] = 0.0
        coeffs.flags.writeable = False
        support.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "features", tuple(tuple(int(v) for v in f) for f in self.features))
        if len(self.features) != coeffs.shape[0]:
            raise ValueError("one feature descriptor per coefficient row is required")

    @classmethod
    def from_coeffs(cls, coeffs, features, lam=0.0, **kw):
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(coeffs, coeffs != 0, lam, features, **kw)

    @property
    def n_features(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_states(self) -> int:
        return self.coeffs.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [monomial_name(f, self.labels) for f in self.features]

    def library(self, X):
        return eval_monomials(X, self.features)

    def predict(self, X):
        """Right-hand side ``Theta(X) @ coeffs`` for states of shape (..., m)."""
        return self.library(X) @ self.coeffs

    def rhs(self):
        return self.predict

    def to_csv(self, path, header_lines=()):
        """Write one row per (feature, state): feature, state, coefficient, included, lambda."""
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "state", "coefficient", "included", "lambda"])
            for j, name in enumerate(self.feature_names):
                for k in range(self.n_states):
                    w.writerow([name, k + 1, repr(float(self.coeffs[j, k])),
                                int(self.support[j, k]), repr(float(self.lam))])
