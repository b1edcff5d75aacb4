"""Monomial bookkeeping used by the library builder and by model evaluation."""

from itertools import combinations_with_replacement

import numpy as np


def monomial_exponents(m, max_degree, include_bias=True):
    """Exponent vectors ordered by total degree, then lexicographically.

    Within one degree the order follows ``combinations_with_replacement`` of the
    variable indices, so for two states and degree two the result is
    ``x1^2, x1*x2, x2^2``.
    """
    exps = []
    for degree in range(0 if include_bias else 1, max_degree + 1):
        for combo in combinations_with_replacement(range(m), degree):
            e = [0] * m
            for k in combo:
                e[k] += 1
            exps.append(tuple(e))
    return tuple(exps)


def monomial_name(exponent, labels=None):
    if labels is None:
        labels = [f"x{k + 1}" for k in range(len(exponent))]
    parts = []
    for label, power in zip(labels, exponent):
        if power == 1:
            parts.append(label)
        elif power > 1:
            parts.append(f"{label}^{power}")
    return "*".join(parts) if parts else "1"


def eval_monomials(X, exponents):
    """Evaluate monomials on states of shape ``(..., m)``; returns ``(..., p)``."""
    X = np.asarray(X, dtype=float)
    E = np.asarray(exponents, dtype=int)
    if E.size == 0:
        return np.zeros(X.shape[:-1] + (0,))
    out = np.ones(X.shape[:-1] + (E.shape[0],))
    # repeated multiplication keeps integer powers exact for small degrees
    for k in range(E.shape[1]):
        for power in range(1, int(E[:, k].max()) + 1):
            cols = E[:, k] >= power
            out[..., cols] *= X[..., k : k + 1]
    return out
