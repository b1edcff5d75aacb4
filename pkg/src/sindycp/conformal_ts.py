"""Conformal prediction intervals for E-SINDy forecasts.

The online machinery is shared by two calibrators:

* EnbPI keeps a sliding window of out-of-sample ensemble residuals and uses
  its empirical quantile as the interval half-width.
* Conformal PI control (CP-PID without the scorecaster) drives the
  half-width with a proportional term and a saturated integral of the
  coverage errors.

Coverage is tracked per state; each state has its own score window and its
own controller.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from sindycp._poly import eval_monomials
from sindycp.errors import CalibrationError, InsufficientDataError, ParameterError
from sindycp.preprocess import LibrarySpec, build_library, finite_diff, savgol_smooth, savgol_weights
from sindycp.sindy import Ensemble, bootstrap_ensemble
from sindycp.systems import TimeSeries

_QUANTILE_SLACK = 1e-9


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")


def empirical_quantile(scores, alpha: float):
    """k-th smallest score with ``k = ceil((mcal + 1)(1 - alpha))``.

    Works column-wise on 2-D input. When ``k > mcal`` there are too few
    scores for the requested level and ``inf`` is returned.
    """
    _check_alpha(alpha)
    s = np.asarray(scores, dtype=float)
    if s.ndim == 0 or s.shape[0] == 0:
        raise CalibrationError("cannot take a quantile of an empty score list")
    mcal = s.shape[0]
    k = int(np.ceil((mcal + 1) * (1.0 - alpha) - _QUANTILE_SLACK))
    if k > mcal:
        return np.inf if s.ndim == 1 else np.full(s.shape[1:], np.inf)
    return np.sort(s, axis=0)[max(k, 1) - 1]


@dataclass(frozen=True)
class SplitConformal:
    predict: object
    q: float
    alpha: float

    def __call__(self, x):
        center = np.asarray(self.predict(x), dtype=float)
        return center - self.q, center + self.q


def split_conformal(x_train, y_train, x_cal, y_cal, alpha, fit) -> SplitConformal:
    """Fit on the training split, calibrate absolute residuals on the other.

    ``fit(x, y)`` must return a callable predictor.
    """
    _check_alpha(alpha)
    predictor = fit(x_train, y_train)
    scores = np.abs(np.asarray(y_cal, dtype=float) - np.asarray(predictor(x_cal), dtype=float))
    return SplitConformal(predictor, float(empirical_quantile(scores.ravel(), alpha)), alpha)


@dataclass(frozen=True)
class PredictionInterval:
    """Symmetric interval ``center +/- q`` over a forecast horizon.

    ``center`` has shape (horizon, m); ``q`` has one half-width per state.
    """

    center: np.ndarray
    q: np.ndarray
    alpha: float

    @property
    def lower(self):
        return self.center - self.q

    @property
    def upper(self):
        return self.center + self.q

    def covers(self, truth) -> np.ndarray:
        """Per-state flag: every horizon step of ``truth`` lies inside the interval."""
        truth = np.asarray(truth, dtype=float).reshape(self.center.shape)
        return np.all(np.abs(truth - self.center) <= self.q, axis=0)


class ScoreWindow:
    """FIFO window of per-state non-conformity scores."""

    def __init__(self, capacity: int, scores=()):
        if capacity < 1:
            raise ParameterError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._buf = deque(maxlen=capacity)
        for s in scores:
            self.push(s)

    def push(self, score):
        self._buf.append(np.atleast_1d(np.asarray(score, dtype=float)))

    def __len__(self):
        return len(self._buf)

    @property
    def scores(self) -> np.ndarray:
        return np.array(self._buf)

    def quantile(self, alpha):
        if not self._buf:
            raise CalibrationError("score window is empty")
        return np.atleast_1d(empirical_quantile(self.scores, alpha))


# ---------------------------------------------------------------------------
# forecasting


@dataclass(frozen=True)
class Forecast:
    members: np.ndarray  # (B, horizon, m)
    valid: np.ndarray  # (B,) member stayed inside the guard box
    mean: np.ndarray  # (horizon, m)
    x0: np.ndarray

    @property
    def n_flagged(self) -> int:
        return int((~self.valid).sum())


def _integrate_members(C, exps, x0, dt, horizon, guard):
    """RK4 for every member at once. C has shape (B, p, m)."""

    def f(X):
        return np.einsum("bp,bpm->bm", eval_monomials(X, exps), C)

    B, m = C.shape[0], C.shape[2]
    X = np.broadcast_to(np.asarray(x0, dtype=float), (B, m)).copy()
    out = np.empty((B, horizon, m))
    valid = np.ones(B, dtype=bool)
    with np.errstate(all="ignore"):
        for h in range(horizon):
            k1 = f(X)
            k2 = f(X + 0.5 * dt * k1)
            k3 = f(X + 0.5 * dt * k2)
            k4 = f(X + dt * k3)
            X = X + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            bad = ~np.isfinite(X).all(axis=1) | (np.abs(X).max(axis=1) > guard)
            valid &= ~bad
            X[bad] = 0.0
            out[:, h] = X
    out[~valid] = np.nan
    return out, valid


@dataclass(frozen=True)
class Forecaster:
    """Ensemble model + state estimator + RK4 integrator."""

    ens: Ensemble
    dt: float
    horizon: int = 2
    window: int = 9
    polyorder: int = 3
    guard: float = 1e6

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError(f"horizon must be >= 1, got {self.horizon}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "_coeffs", self.ens.coeff_stack)
        object.__setattr__(self, "_endpoint", savgol_weights(self.window, self.polyorder, self.window - 1))

    def estimate_state(self, recent) -> np.ndarray:
        """Smoothed value of the last sample of ``recent`` (shape (>= window, m))."""
        recent = np.asarray(recent, dtype=float)
        if recent.shape[0] < self.window:
            raise InsufficientDataError(
                f"need {self.window} recent samples for the smoother, got {recent.shape[0]}"
            )
        return self._endpoint @ recent[-self.window :]

    def from_state(self, x0) -> Forecast:
        traj, valid = _integrate_members(self._coeffs, self.ens.features, x0, self.dt,
                                         self.horizon, self.guard)
        if valid.any():
            mean = traj[valid].mean(axis=0)
        else:
            mean = np.broadcast_to(np.asarray(x0, dtype=float), traj.shape[1:]).copy()
        return Forecast(traj, valid, mean, np.asarray(x0, dtype=float))

    def __call__(self, recent) -> Forecast:
        return self.from_state(self.estimate_state(recent))


def forecast(ens: Ensemble, recent: TimeSeries, horizon: int, window: int = 9,
             polyorder: int = 3) -> Forecast:
    """Smooth ``recent``, start from its last smoothed state, integrate every member.

    Diverging members are excluded from the ensemble mean and reported in
    ``Forecast.valid``.
    """
    x0 = savgol_smooth(recent, window, polyorder).states[-1]
    return Forecaster(ens, recent.dt, horizon, window, polyorder).from_state(x0)


def member_scores(members, truth, qualifying):
    """Mean over qualifying members of the per-member horizon residual.

    The per-member residual of a state is the largest absolute error over the
    horizon. Returns ``None`` when no member qualifies.
    """
    members = np.asarray(members, dtype=float)
    truth = np.asarray(truth, dtype=float).reshape(members.shape[1:])
    qualifying = np.asarray(qualifying, dtype=bool)
    if not qualifying.any():
        return None
    resid = np.abs(members[qualifying] - truth).max(axis=1)
    return resid.mean(axis=0)


def enbpi_scores(fc: Forecaster, y, origins, in_train=None):
    """Out-of-sample scores for forecasts issued at ``origins``.

    ``y`` holds observations of shape (N, m). For an origin ``t`` only members
    with ``in_train[b, t]`` False contribute; origins past the training rows
    use every member.

    Returns
    -------
    scores : ndarray, shape (K, m)
    used : list of int
        Origins that produced a score.
    skipped : int
        Origins with no qualifying member.
    """
    y = np.asarray(y, dtype=float)
    scores, used, skipped = [], [], 0
    for t in origins:
        f = fc(y[: t + 1])
        qual = f.valid.copy()
        if in_train is not None and t < in_train.shape[1]:
            qual &= ~in_train[:, t]
        s = member_scores(f.members, y[t + 1 : t + 1 + fc.horizon], qual)
        if s is None:
            skipped += 1
            continue
        scores.append(s)
        used.append(t)
    m = y.shape[1]
    return np.array(scores).reshape(-1, m), used, skipped


def enbpi_interval(fc: Forecaster, recent, window: ScoreWindow, alpha: float) -> PredictionInterval:
    """Interval centred on the ensemble-mean forecast with the window quantile as half-width."""
    _check_alpha(alpha)
    q = window.quantile(alpha)
    return PredictionInterval(fc(recent).mean, q, alpha)


# ---------------------------------------------------------------------------
# conformal PI control


@dataclass(frozen=True)
class PidState:
    """Controller state, vectorised over states.

    ``saturation="tan"`` uses ``k_i * tan(x log t / (c_sat t))`` with the
    argument clamped to ``+/-(pi/2 - 0.01)``; ``"identity"`` uses ``k_i * x``.
    """

    q: np.ndarray
    eta: np.ndarray
    err_sum: np.ndarray
    t: int = 0
    k_i: np.ndarray = 1.0
    c_sat: float = 1.0
    saturation: str = "tan"
    g: np.ndarray = 0.0
    p_term: np.ndarray = 0.0
    i_term: np.ndarray = 0.0

    @classmethod
    def start(cls, m, eta, k_i=1.0, c_sat=1.0, saturation="tan"):
        z = np.zeros(m)
        return cls(z, np.broadcast_to(np.asarray(eta, float), (m,)).copy(), z.copy(), 0,
                   np.broadcast_to(np.asarray(k_i, float), (m,)).copy(), c_sat, saturation)

    @property
    def half_width(self) -> np.ndarray:
        return np.maximum(self.q, 0.0)


_TAN_LIMIT = np.pi / 2 - 0.01


def saturate(x, t, k_i, c_sat, kind="tan"):
    x = np.asarray(x, dtype=float)
    if kind == "identity":
        return k_i * x
    if kind != "tan":
        raise ParameterError(f"unknown saturation {kind!r}")
    if t < 1:
        return np.zeros_like(x)
    arg = np.clip(x * np.log(t) / (c_sat * t), -_TAN_LIMIT, _TAN_LIMIT)
    return k_i * np.tan(arg)


def pid_update(state: PidState, covered, alpha: float) -> PidState:
    """One P + I step: ``q <- eta * g_t + r_t(sum g_i)`` with ``g_t = err_t - alpha``."""
    err = 1.0 - np.asarray(covered, dtype=float)
    g = err - alpha
    err_sum = state.err_sum + g
    t = state.t + 1
    p = state.eta * g
    i = saturate(err_sum, t, state.k_i, state.c_sat, state.saturation)
    return replace(state, q=p + i, err_sum=err_sum, t=t, g=g, p_term=p, i_term=i)


# ---------------------------------------------------------------------------
# online loop


@dataclass(frozen=True)
class OnlineConfig:
    alpha: float = 0.1
    horizon: int = 2
    window: int = 100  # l_r, EnbPI calibration window
    smoother_window: int = 9
    polyorder: int = 3
    library_degree: int = 2
    lam: float = 0.05
    B: int = 50
    max_iter: int = 20
    refit_every: int = 50  # 0 disables refits
    eta_scale: float = 0.05
    k_i_scale: float = 5.0
    c_sat: float = 0.5
    saturation: str = "tan"
    guard: float = 1e6
    seed: int = 0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.horizon < 1 or self.window < 1:
            raise ParameterError("horizon and window must be >= 1")


@dataclass
class ForecastLog:
    """Per-origin records. Arrays are indexed by verified forecast origin.

    ``covered_state[k, i]`` is True when every horizon step of state ``i``
    fell inside the interval; ``covered[k]`` requires all states.
    """

    method: str
    alpha: float
    dt: float
    horizon: int
    origin: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    center: list = field(default_factory=list)
    q: list = field(default_factory=list)
    covered_state: list = field(default_factory=list)
    flagged: list = field(default_factory=list)
    labels: tuple = ()

    def record(self, origin, truth, interval, flagged):
        self.origin.append(origin)
        self.truth.append(np.asarray(truth, dtype=float))
        self.center.append(interval.center)
        self.q.append(np.asarray(interval.q, dtype=float))
        self.covered_state.append(interval.covers(truth))
        self.flagged.append(flagged)

    def finalize(self):
        for name in ("origin", "truth", "center", "q", "covered_state", "flagged"):
            setattr(self, name, np.array(getattr(self, name)))
        return self

    def __len__(self):
        return len(self.origin)

    @property
    def covered(self) -> np.ndarray:
        return np.asarray(self.covered_state).all(axis=1)

    @property
    def width(self) -> np.ndarray:
        return 2.0 * np.asarray(self.q)

    @property
    def err(self) -> np.ndarray:
        return 1.0 - np.asarray(self.covered_state, dtype=float)

    def to_csv(self, path, rolling_window=50, header_lines=()):
        """One row per (step, state); values refer to the last horizon step."""
        roll = coverage_metrics(self, rolling_window)
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "state", "truth", "center", "lower", "upper", "covered",
                        "width", "rolling_coverage", "rolling_width"])
            m = self.q.shape[1]
            labels = self.labels or tuple(f"x{i + 1}" for i in range(m))
            for k, o in enumerate(self.origin):
                t = (o + self.horizon) * self.dt
                for i in range(m):
                    c = self.center[k, -1, i]
                    w.writerow([
                        _fmt(t), labels[i], _fmt(self.truth[k, -1, i]), _fmt(c),
                        _fmt(c - self.q[k, i]), _fmt(c + self.q[k, i]),
                        int(self.covered_state[k, i]), _fmt(2 * self.q[k, i]),
                        _fmt(roll["coverage"][k, i]), _fmt(roll["width"][k, i]),
                    ])


def _fmt(v):
    return repr(float(v))


def _trailing_mean(x, window):
    x = np.asarray(x, dtype=float)
    c = np.cumsum(np.concatenate([np.zeros((1,) + x.shape[1:]), x]), axis=0)
    idx = np.arange(1, x.shape[0] + 1)
    lo = np.maximum(idx - window, 0)
    count = (idx - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    with np.errstate(invalid="ignore"):
        out = (c[idx] - c[lo]) / count
    if not np.isfinite(x).all():
        # cumsum arithmetic turns inf - inf into nan; recompute those slots directly
        for k in np.flatnonzero(~np.isfinite(out).all(axis=tuple(range(1, x.ndim)))):
            out[k] = x[lo[k] : idx[k]].mean(axis=0)
    return out


def coverage_metrics(log: ForecastLog, window: int = 50) -> dict:
    """Trailing-window coverage and mean width (windows are shorter at the start)."""
    if window < 1:
        raise ParameterError(f"window must be >= 1, got {window}")
    cov = np.asarray(log.covered_state, dtype=float)
    return {
        "coverage": _trailing_mean(cov, window),
        "joint_coverage": _trailing_mean(np.asarray(log.covered, dtype=float), window),
        "width": _trailing_mean(log.width, window),
    }


def achieved_coverage(log: ForecastLog, burn_in: int = 0) -> np.ndarray:
    """Per-state fraction of covered steps after discarding ``burn_in`` steps."""
    return np.asarray(log.covered_state, dtype=float)[burn_in:].mean(axis=0)


def fit_ensemble(y, dt, cfg: OnlineConfig, seed=None) -> Ensemble:
    ts = TimeSeries(y, dt)
    smooth = savgol_smooth(ts, cfg.smoother_window, cfg.polyorder)
    theta = build_library(smooth, LibrarySpec(cfg.library_degree))
    return bootstrap_ensemble(theta, finite_diff(smooth), cfg.B, cfg.lam,
                              cfg.seed if seed is None else seed, cfg.max_iter)


class OnlineSession:
    """Walks a stream one observation at a time for EnbPI and/or CP-PID.

    At construction the ensemble is trained on ``history`` and the EnbPI
    window is filled with out-of-sample scores from the training range (a
    member only scores origins it was not trained on). Each :meth:`step`
    appends one observation, scores the forecast that has just become fully
    observable, updates the calibrators, optionally refits the ensemble and
    issues the next interval for every method.
    """

    def __init__(self, history, dt, cfg: OnlineConfig = OnlineConfig(),
                 methods=("enbpi", "cppid"), ensemble=None, alphas=None):
        self.cfg = cfg
        self.dt = dt
        self.methods = tuple(methods)
        for mth in self.methods:
            if mth not in ("enbpi", "cppid"):
                raise ParameterError(f"unknown method {mth!r}")
        y = np.asarray(history, dtype=float)
        H, w = cfg.horizon, cfg.smoother_window
        if y.shape[0] < w + H + 1:
            raise InsufficientDataError("history too short for smoothing plus one horizon")
        self._y = [row for row in y]
        self._n_refits = 0
        self.ens = ensemble if ensemble is not None else fit_ensemble(y, dt, cfg)
        self._set_forecaster()
        self.skipped = 0

        n0 = y.shape[0]
        scores, _, skipped = enbpi_scores(self.fc, y, range(w - 1, n0 - H), self._in_train)
        self.skipped += skipped
        if scores.shape[0] == 0:
            raise CalibrationError("no out-of-sample calibration scores in the training range")
        self.window = ScoreWindow(cfg.window, scores[-cfg.window :])
        self.alphas = tuple(alphas) if alphas is not None else (cfg.alpha,)
        for a in self.alphas:
            _check_alpha(a)
        m = y.shape[1]
        self.initial_q = {a: self.window.quantile(a) for a in self.alphas}
        self.pid = {}
        for a in self.alphas:
            q0 = np.where(np.isfinite(self.initial_q[a]), self.initial_q[a], scores.max(axis=0))
            self.pid[a] = PidState.start(m, cfg.eta_scale * q0, cfg.k_i_scale * q0, cfg.c_sat,
                                         cfg.saturation)
        self.logs = {(mth, a): ForecastLog(mth, a, dt, H)
                     for mth in self.methods for a in self.alphas}
        self._pending = {}
        self._open = {key: {} for key in self.logs}
        self._since_refit = 0
        for o in range(n0 - H, n0):
            self._issue(o, intervals=(o == n0 - 1))

    @property
    def T(self) -> int:
        return len(self._y) - 1

    @property
    def y(self) -> np.ndarray:
        return np.array(self._y)

    def _set_forecaster(self):
        c = self.cfg
        self.fc = Forecaster(self.ens, self.dt, c.horizon, c.smoother_window, c.polyorder, c.guard)
        self._in_train = self.ens.in_train()

    def _qualifying(self, origin, valid):
        q = valid.copy()
        if origin < self._in_train.shape[1]:
            q &= ~self._in_train[:, origin]
        return q

    def _issue(self, origin, intervals=True):
        f = self.fc(np.array(self._y[origin - self.cfg.smoother_window + 1 : origin + 1]))
        self._pending[origin] = (f, self._qualifying(origin, f.valid))
        if not intervals:
            return {}
        out = {}
        for mth, a in self.logs:
            q = self.window.quantile(a) if mth == "enbpi" else self.pid[a].half_width
            iv = PredictionInterval(f.mean, q, a)
            self._open[mth, a][origin] = (iv, f.n_flagged)
            out[mth, a] = iv
        return out

    def step(self, obs) -> dict:
        """Consume one observation; return new intervals keyed by ``(method, alpha)``."""
        self._y.append(np.asarray(obs, dtype=float).reshape(-1))
        H = self.cfg.horizon
        o = self.T - H
        truth = np.array(self._y[o + 1 : o + 1 + H])
        if o in self._pending:
            f, qual = self._pending.pop(o)
            s = member_scores(f.members, truth, qual)
            if s is None:
                self.skipped += 1
            else:
                self.window.push(s)
        for (mth, a), log in self.logs.items():
            opened = self._open[mth, a].pop(o, None)
            if opened is None:
                continue
            iv, flagged = opened
            log.record(o, truth, iv, flagged)
            if mth == "cppid":
                self.pid[a] = pid_update(self.pid[a], iv.covers(truth), a)
        self._since_refit += 1
        if self.cfg.refit_every and self._since_refit >= self.cfg.refit_every:
            self.refit()
        return self._issue(self.T)

    def refit(self):
        self._n_refits += 1
        self.ens = fit_ensemble(self.y, self.dt, self.cfg, seed=self.cfg.seed + self._n_refits)
        self._set_forecaster()
        self._since_refit = 0

    def finish(self) -> dict:
        for log in self.logs.values():
            log.finalize()
        return self.logs


def enbpi_step(session: OnlineSession, new_observation):
    """Advance an online session by one observation; returns (session, EnbPI interval)."""
    out = session.step(new_observation)
    return session, out.get(("enbpi", session.alphas[0]))


def run_online_methods(stream: TimeSeries, train_len: int, cfg: OnlineConfig = OnlineConfig(),
                       methods=("enbpi", "cppid"), alphas=None) -> dict:
    """Train on the first ``train_len`` samples, then walk the rest of the stream.

    Returns logs keyed by method, or by ``(method, alpha)`` when ``alphas``
    is given. Forecasts and scores do not depend on the target level, so one
    pass serves every level.
    """
    y = stream.states
    if y.shape[0] <= train_len + cfg.horizon:
        raise InsufficientDataError("stream must extend past the training prefix by a horizon")
    session = OnlineSession(y[:train_len], stream.dt, cfg, methods, alphas=alphas)
    for obs in y[train_len:]:
        session.step(obs)
    logs = session.finish()
    for log in logs.values():
        log.labels = stream.labels
    if alphas is None:
        return {mth: log for (mth, _), log in logs.items()}
    return logs


def run_online(method: str, stream: TimeSeries, train_len: int,
               cfg: OnlineConfig = OnlineConfig()) -> ForecastLog:
    return run_online_methods(stream, train_len, cfg, (method,))[method]
