"""Benchmark dynamical systems, ODE/SDE integration and measurement-noise models."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from sindycp._poly import monomial_exponents
from sindycp.errors import (
    ArityError,
    DataError,
    DivergenceError,
    IntegrationError,
    ParameterError,
    RegistryError,
)
from sindycp.model import SparseModel


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled trajectory.

    ``states`` has shape (n, m): one row per sample, one column per state.
    ``meta`` records how the series was produced, e.g. ``{"kind": "noisy"}``.
    """

    states: np.ndarray
    dt: float
    t0: float = 0.0
    labels: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.array(self.states, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError(f"states must be 2-D, got shape {X.shape}")
        if X.shape[0] < 2:
            raise DataError("a time series needs at least two samples")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        bad = ~np.isfinite(X).all(axis=1)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(f"non-finite sample at row {row}", row=row)
        X.flags.writeable = False
        object.__setattr__(self, "states", X)
        labels = tuple(self.labels) or tuple(f"x{k + 1}" for k in range(X.shape[1]))
        if len(labels) != X.shape[1]:
            raise DataError("one label per state column is required")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def m(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def with_states(self, states, **meta) -> "TimeSeries":
        return replace(self, states=states, meta={**self.meta, **meta})

    def slice(self, start, stop=None) -> "TimeSeries":
        stop = self.n if stop is None else stop
        return replace(self, states=self.states[start:stop], t0=self.t0 + start * self.dt)

    def to_csv(self, path, header_lines=()):
        """Columns ``t, x1 ... xm``; floats written with ``repr`` for exact round trips."""
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *self.labels])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        header, body = rows[0], np.array(rows[1:], dtype=float)
        t = body[:, 0]
        return cls(body[:, 1:], dt=float(t[1] - t[0]), t0=float(t[0]), labels=tuple(header[1:]))


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-noise model.

    Gaussian noise has standard deviation ``level``. Gamma noise draws
    ``Gamma(shape=gamma_shape, scale=level)`` and is mean-subtracted only when
    ``centered`` is set, so by default it biases the observations by
    ``gamma_shape * level``.
    """

    kind: str = "gaussian"
    level: float = 0.0
    gamma_shape: float = 2.0
    centered: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "gamma"):
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if not self.level >= 0:
            raise ParameterError(f"noise level must be >= 0, got {self.level}")
        if not self.gamma_shape > 0:
            raise ParameterError(f"gamma_shape must be > 0, got {self.gamma_shape}")


@dataclass(frozen=True)
class SystemDef:
    name: str
    dim: int
    rhs: Callable
    true_coeffs: SparseModel | None
    default_x0: tuple
    params: tuple = ()


def _lotka_volterra(alpha, beta, gamma, delta):
    def rhs(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([alpha * x1 - beta * x1 * x2, delta * x1 * x2 - gamma * x2], axis=-1)

    feats = monomial_exponents(2, 2)
    C = np.zeros((len(feats), 2))
    C[feats.index((1, 0)), 0] = alpha
    C[feats.index((1, 1)), 0] = -beta
    C[feats.index((0, 1)), 1] = -gamma
    C[feats.index((1, 1)), 1] = delta
    return rhs, SparseModel.from_coeffs(C, feats)


def _lorenz(sigma, rho, beta):
    def rhs(x):
        x = np.asarray(x, dtype=float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack(
            [sigma * (x2 - x1), x1 * (rho - x3) - x2, x1 * x2 - beta * x3], axis=-1
        )

    feats = monomial_exponents(3, 2)
    C = np.zeros((len(feats), 3))
    C[feats.index((1, 0, 0)), 0] = -sigma
    C[feats.index((0, 1, 0)), 0] = sigma
    C[feats.index((1, 0, 0)), 1] = rho
    C[feats.index((0, 1, 0)), 1] = -1.0
    C[feats.index((1, 0, 1)), 1] = -1.0
    C[feats.index((1, 1, 0)), 2] = 1.0
    C[feats.index((0, 0, 1)), 2] = -beta
    return rhs, SparseModel.from_coeffs(C, feats)


# name -> (builder, arity, default params, default initial state)
REGISTRY = {
    "lotka_volterra": (_lotka_volterra, 4, (1.0, 0.1, 1.0, 0.1), (5.0, 5.0)),
    "lorenz": (_lorenz, 3, (10.0, 28.0, 8.0 / 3.0), (-8.0, 8.0, 27.0)),
}


def make_system(name: str, params=None) -> SystemDef:
    """Build a registry system.

    ``lotka_volterra`` takes ``[alpha, beta, gamma, delta]`` and ``lorenz``
    takes ``[sigma, rho, beta]``. ``true_coeffs`` is expressed in the
    quadratic library with bias, in the column order of ``build_library``.
    """
    try:
        builder, arity, defaults, x0 = REGISTRY[name]
    except KeyError:
        raise RegistryError(f"unknown system {name!r}; known: {sorted(REGISTRY)}") from None
    params = defaults if params is None else tuple(float(p) for p in params)
    if len(params) != arity:
        raise ArityError(f"{name} takes {arity} parameters, got {len(params)}")
    rhs, true = builder(*params)
    return SystemDef(name, len(x0), rhs, true, x0, params)


def _rhs_of(system):
    return system.rhs if isinstance(system, SystemDef) else system


def rk4_step(rhs, x, dt):
    """One classical Runge-Kutta step; raises IntegrationError on a non-finite stage."""
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(rhs(x), dtype=float)
    k2 = np.asarray(rhs(x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(rhs(x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(rhs(x + dt * k3), dtype=float)
    for stage, k in enumerate((k1, k2, k3, k4), start=1):
        if not np.all(np.isfinite(k)):
            raise IntegrationError(f"non-finite value in RK4 stage k{stage}", stage=stage)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_ode(system, x0, dt, n, labels=()) -> TimeSeries:
    """Integrate ``n`` RK4 steps from ``x0``; returns ``n + 1`` rows."""
    if n < 1:
        raise ParameterError(f"step count must be >= 1, got {n}")
    rhs = _rhs_of(system)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((n + 1, x.size))
    out[0] = x
    for k in range(n):
        try:
            x = rk4_step(rhs, x, dt)
        except IntegrationError as exc:
            raise IntegrationError(f"{exc} at step {k}", stage=exc.stage, step=k) from exc
        out[k + 1] = x
    return TimeSeries(out, dt, labels=labels, meta={"kind": "clean"})


def simulate_sde(system, x0, dt, n, process_level, seed, substeps=1, guard=1e6, labels=()):
    """Euler-Maruyama with additive noise ``process_level * sqrt(h) * z``.

    ``substeps`` internal steps of size ``h = dt / substeps`` are taken between
    returned samples. With ``process_level = 0`` this is forward Euler, which is
    only first-order accurate and differs from :func:`simulate_ode`.
    """
    if n < 1:
        raise ParameterError(f"step count must be >= 1, got {n}")
    if not process_level >= 0:
        raise ParameterError(f"process_level must be >= 0, got {process_level}")
    if substeps < 1:
        raise ParameterError("substeps must be >= 1")
    rhs = _rhs_of(system)
    rng = np.random.default_rng(seed)
    h = dt / substeps
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    out = np.empty((n + 1, x.size))
    out[0] = x
    z = rng.standard_normal((n, substeps, x.size))
    scale = process_level * np.sqrt(h)
    for k in range(n):
        for s in range(substeps):
            x = x + np.asarray(rhs(x), dtype=float) * h + scale * z[k, s]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > guard:
            raise DivergenceError(f"trajectory diverged at step {k + 1}", step=k + 1)
        out[k + 1] = x
    return TimeSeries(out, dt, labels=labels, meta={"kind": "clean", "process_level": process_level})


def draw_noise(spec: NoiseSpec, shape) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if spec.level == 0:
        return np.zeros(shape)
    if spec.kind == "gaussian":
        return rng.normal(0.0, spec.level, size=shape)
    noise = rng.gamma(spec.gamma_shape, spec.level, size=shape)
    if spec.centered:
        noise -= spec.gamma_shape * spec.level
    return noise


def add_measurement_noise(ts: TimeSeries, spec: NoiseSpec) -> TimeSeries:
    if spec.level == 0:
        return ts.with_states(ts.states.copy(), kind="noisy", noise=spec.kind, noise_level=0.0)
    noisy = ts.states + draw_noise(spec, ts.states.shape)
    return ts.with_states(noisy, kind="noisy", noise=spec.kind, noise_level=spec.level)
