"""Markov-switching autoregressive model with regime-dependent variance.

The observation equation is

    y_t = mu[s_t] + phi[s_t] * y_{t-1} + sqrt(sigma2[s_t]) * eps_t,   eps_t ~ N(0, 1)

with ``s_t`` a homogeneous first-order Markov chain.  Transition matrices are
row-stochastic: ``p[i, j] = Pr(s_t = j | s_{t-1} = i)``.

Filtering runs in log space with per-step normalisation, so long daily
histories do not underflow.  Estimation is EM (Baum-Welch style) with closed
form M-steps and multiple jittered restarts.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
from numba import njit

from regimekit.data import ReturnSeries
from regimekit.errors import (
    DegenerateDensity,
    DegenerateRegime,
    InvalidInit,
    InvalidSpec,
    SeriesTooShort,
    ZeroPredictedProbability,
)
from regimekit.labels import LabelSeries, Variance

logger = logging.getLogger(__name__)

Mode = Literal["smoothed", "filtered"]
Init = Union[str, Sequence[float], np.ndarray]

_LOG_2PI = math.log(2.0 * math.pi)


class NonConvergence(UserWarning):
    """EM stopped at ``max_iter`` before the log-likelihood gain fell below ``tol``."""


@dataclass(frozen=True)
class RegimeModelSpec:
    sigma2: np.ndarray
    mu: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None

    def __post_init__(self):
        sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        k = len(sigma2)
        mu = np.zeros(k) if self.mu is None else np.atleast_1d(np.asarray(self.mu, dtype=float))
        phi = np.zeros(k) if self.phi is None else np.atleast_1d(np.asarray(self.phi, dtype=float))
        if k < 2:
            raise InvalidSpec(f"need at least 2 regimes, got {k}")
        if len(mu) != k or len(phi) != k:
            raise InvalidSpec("mu, phi and sigma2 must have one entry per regime")
        if not np.all(sigma2 > 0) or not np.all(np.isfinite(sigma2)):
            raise InvalidSpec(f"regime variances must be positive, got {sigma2}")
        if not np.all(np.abs(phi) < 1):
            raise InvalidSpec(f"AR coefficients must satisfy |phi| < 1, got {phi}")
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "phi", phi)

    @property
    def k(self) -> int:
        return len(self.sigma2)

    @property
    def has_ar(self) -> bool:
        return bool(np.any(self.phi != 0))

    def permuted(self, order) -> "RegimeModelSpec":
        order = np.asarray(order)
        return RegimeModelSpec(self.sigma2[order], self.mu[order], self.phi[order])


@dataclass(frozen=True)
class TransitionMatrix:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise InvalidSpec(f"transition matrix must be square, got shape {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise InvalidSpec("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidSpec(f"rows must sum to 1, got {p.sum(axis=1)}")
        object.__setattr__(self, "p", p)

    @property
    def k(self) -> int:
        return self.p.shape[0]

    def ergodic(self) -> np.ndarray:
        """Stationary distribution pi with pi P = pi."""
        k = self.k
        a = np.vstack([self.p.T - np.eye(k), np.ones(k)])
        b = np.zeros(k + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    def permuted(self, order) -> "TransitionMatrix":
        order = np.asarray(order)
        return TransitionMatrix(self.p[np.ix_(order, order)])


@dataclass(frozen=True)
class FittedModel:
    """Estimated parameters plus the filtered and smoothed state probabilities.

    ``init`` is the estimated distribution of the first state; the filter and
    smoother outputs were computed with it.
    """

    spec: RegimeModelSpec
    trans: TransitionMatrix
    loglik: float
    filtered: np.ndarray
    smoothed: np.ndarray
    n_iter: int
    init: np.ndarray
    dates: Optional[np.ndarray] = None
    converged: bool = True
    history: tuple = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.spec.k

    def permuted(self, order) -> "FittedModel":
        order = np.asarray(order)
        return replace(
            self,
            spec=self.spec.permuted(order),
            trans=self.trans.permuted(order),
            filtered=self.filtered[:, order],
            smoothed=self.smoothed[:, order],
            init=self.init[order],
        )

    def sorted_by_variance(self) -> "FittedModel":
        order = np.argsort(self.spec.sigma2, kind="stable")
        if np.array_equal(order, np.arange(self.k)):
            return self
        return self.permuted(order)

    def probabilities(self, mode: Mode = "smoothed") -> np.ndarray:
        if mode == "smoothed":
            return self.smoothed
        if mode == "filtered":
            return self.filtered
        raise ValueError(f"unknown mode {mode!r}")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mu": self.spec.mu.tolist(),
            "phi": self.spec.phi.tolist(),
            "sigma2": self.spec.sigma2.tolist(),
            "trans": self.trans.p.tolist(),
            "loglik": float(self.loglik),
            "n_iter": int(self.n_iter),
            "init": self.init.tolist(),
            "converged": bool(self.converged),
        }


def save_model(model: FittedModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_model(path, y: ReturnSeries) -> FittedModel:
    """Rebuild a :class:`FittedModel` from JSON by re-running filter and smoother on ``y``."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = RegimeModelSpec(payload["sigma2"], payload["mu"], payload["phi"])
    trans = TransitionMatrix(payload["trans"])
    init = np.asarray(payload.get("init") or trans.ergodic())
    filtered, predicted, loglik = _run_filter(_values(y), spec, trans, init)
    smoothed, _ = _run_smoother(filtered, trans)
    return FittedModel(
        spec, trans, loglik, filtered, smoothed, payload["n_iter"], init,
        dates=y.dates, converged=payload.get("converged", True),
    )


def write_probabilities(model: FittedModel, path, mode: Mode = "smoothed") -> None:
    probs = model.probabilities(mode)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date"] + [f"p_regime{j}" for j in range(model.k)])
        for d, row in zip(model.dates, probs):
            writer.writerow([str(d)] + [repr(float(x)) for x in row])


def read_probabilities(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    dates = np.array([r[0] for r in body], dtype="datetime64[D]")
    probs = np.array([[float(x) for x in r[1:]] for r in body])
    return dates, probs


# ---------------------------------------------------------------- recursions


@njit(cache=True)
def _filter_core(log_dens, p, init):
    n, k = log_dens.shape
    filtered = np.empty((n, k))
    predicted = np.empty((n, k))
    loglik = 0.0
    for t in range(n):
        for j in range(k):
            if t == 0:
                predicted[t, j] = init[j]
            else:
                acc = 0.0
                for i in range(k):
                    acc += filtered[t - 1, i] * p[i, j]
                predicted[t, j] = acc
        m = -np.inf
        for j in range(k):
            if predicted[t, j] > 0.0 and log_dens[t, j] > m:
                m = log_dens[t, j]
        if not np.isfinite(m):
            return filtered, predicted, loglik, t
        total = 0.0
        for j in range(k):
            w = predicted[t, j] * math.exp(log_dens[t, j] - m) if predicted[t, j] > 0.0 else 0.0
            filtered[t, j] = w
            total += w
        for j in range(k):
            filtered[t, j] /= total
        loglik += m + math.log(total)
    return filtered, predicted, loglik, -1


@njit(cache=True)
def _smoother_core(filtered, p):
    n, k = filtered.shape
    smoothed = np.empty((n, k))
    pair = np.zeros((k, k))
    ratio = np.empty(k)
    smoothed[n - 1] = filtered[n - 1]
    for t in range(n - 2, -1, -1):
        for j in range(k):
            pred = 0.0
            for i in range(k):
                pred += filtered[t, i] * p[i, j]
            if pred > 0.0:
                ratio[j] = smoothed[t + 1, j] / pred
            elif smoothed[t + 1, j] > 0.0:
                return smoothed, pair, t + 1
            else:
                ratio[j] = 0.0
        total = 0.0
        for i in range(k):
            acc = 0.0
            for j in range(k):
                joint = filtered[t, i] * p[i, j] * ratio[j]
                pair[i, j] += joint
                acc += joint
            smoothed[t, i] = acc
            total += acc
        for i in range(k):
            smoothed[t, i] /= total
    return smoothed, pair, -1


def _values(y) -> np.ndarray:
    return np.asarray(y.values if isinstance(y, ReturnSeries) else y, dtype=float)


def _log_densities(y: np.ndarray, spec: RegimeModelSpec) -> np.ndarray:
    """T x k Gaussian log densities; the first row is zeroed when the AR term is active."""
    lagged = np.concatenate([[0.0], y[:-1]])
    mean = spec.mu[None, :] + spec.phi[None, :] * lagged[:, None]
    resid = y[:, None] - mean
    with np.errstate(over="ignore"):
        out = -0.5 * (_LOG_2PI + np.log(spec.sigma2)[None, :] + resid**2 / spec.sigma2[None, :])
    if spec.has_ar:
        out[0] = 0.0
    return out


def _resolve_init(init: Init, trans: TransitionMatrix) -> np.ndarray:
    if isinstance(init, str):
        if init != "ergodic":
            raise InvalidInit(f"unknown init {init!r}")
        return trans.ergodic()
    vec = np.asarray(init, dtype=float)
    if vec.shape != (trans.k,) or np.any(vec < 0) or abs(vec.sum() - 1.0) > 1e-9:
        raise InvalidInit(f"init must be a probability vector of length {trans.k}, got {vec}")
    return vec


def _run_filter(y, spec, trans, init):
    y = _values(y)
    if len(y) == 0:
        raise SeriesTooShort("cannot filter an empty series")
    if spec.k != trans.k:
        raise InvalidSpec("model and transition matrix disagree on the regime count")
    filtered, predicted, loglik, bad = _filter_core(_log_densities(y, spec), trans.p, init)
    if bad >= 0:
        raise DegenerateDensity(f"every regime density underflows at observation {bad}")
    return filtered, predicted, loglik


def _run_smoother(filtered, trans):
    smoothed, pair, bad = _smoother_core(np.ascontiguousarray(filtered, dtype=float), trans.p)
    if bad >= 0:
        raise ZeroPredictedProbability(f"predicted probability is zero at t={bad} but smoothed mass is not")
    return smoothed, pair


def hamilton_filter(
    y, spec: RegimeModelSpec, trans: TransitionMatrix, init: Init = "ergodic"
) -> tuple[np.ndarray, float]:
    """Filtered probabilities ``Pr(s_t = j | y_1..y_t)`` and the total log-likelihood.

    ``init`` is the distribution of the first state, or ``"ergodic"`` for the
    stationary distribution of ``trans``.  With a non-zero AR coefficient the
    first observation only conditions the second and adds no density term.
    """
    filtered, _, loglik = _run_filter(y, spec, trans, _resolve_init(init, trans))
    return filtered, loglik


def kim_smoother(filtered: np.ndarray, trans: TransitionMatrix) -> np.ndarray:
    """Full-sample probabilities ``Pr(s_t = j | y_1..y_T)`` by backward recursion."""
    filtered = np.atleast_2d(np.asarray(filtered, dtype=float))
    if len(filtered) == 0:
        raise SeriesTooShort("cannot smooth an empty series")
    smoothed, _ = _run_smoother(filtered, trans)
    return smoothed


# ---------------------------------------------------------------- estimation


@dataclass
class _EState:
    filtered: np.ndarray
    smoothed: np.ndarray
    pair: np.ndarray
    loglik: float


def _e_step(y, spec, trans, init) -> _EState:
    filtered, _, loglik = _run_filter(y, spec, trans, init)
    smoothed, pair = _run_smoother(filtered, trans)
    return _EState(filtered, smoothed, pair, loglik)


def _m_step(y, spec, state: _EState, estimate_mean: bool, estimate_ar: bool):
    use_ar = estimate_ar or spec.has_ar
    start = 1 if use_ar else 0
    resp = state.smoothed[start:]
    target = y[start:]
    lagged = np.concatenate([[0.0], y[:-1]])[start:]

    weights = resp.sum(axis=0)
    if np.any(weights < 1e-6):
        j = int(np.argmin(weights))
        raise DegenerateRegime(f"regime {j} collapsed (total smoothed weight {weights[j]:.3g})")

    mu = spec.mu.copy()
    phi = spec.phi.copy()
    sigma2 = np.empty(spec.k)
    for j in range(spec.k):
        w = resp[:, j]
        cols = []
        offset = np.zeros_like(target)
        if estimate_mean:
            cols.append(np.ones_like(target))
        else:
            offset += mu[j]
        if estimate_ar:
            cols.append(lagged)
        else:
            offset += phi[j] * lagged
        if cols:
            x = np.column_stack(cols)
            xtw = x.T * w
            beta = np.linalg.solve(xtw @ x, xtw @ (target - offset))
            pos = 0
            if estimate_mean:
                mu[j] = beta[pos]
                pos += 1
            if estimate_ar:
                phi[j] = float(np.clip(beta[pos], -0.999, 0.999))
        resid = target - mu[j] - phi[j] * lagged
        sigma2[j] = max(float(w @ resid**2 / weights[j]), 1e-300)

    counts = state.pair
    visits = counts.sum(axis=1, keepdims=True)
    trans = counts / np.where(visits > 0, visits, 1.0)
    trans[visits[:, 0] == 0] = np.eye(spec.k)[visits[:, 0] == 0]
    trans /= trans.sum(axis=1, keepdims=True)
    init = state.smoothed[0] / state.smoothed[0].sum()
    return RegimeModelSpec(sigma2, mu, phi), TransitionMatrix(trans), init


def em_step(y, spec: RegimeModelSpec, trans: TransitionMatrix, init: Init = "ergodic",
            estimate_mean: bool = False, estimate_ar: bool = False):
    """One EM iteration; returns the updated ``(spec, trans, init)``."""
    y = _values(y)
    state = _e_step(y, spec, trans, _resolve_init(init, trans))
    return _m_step(y, spec, state, estimate_mean, estimate_ar)


def _starting_points(y, k, n_restarts, rng, estimate_mean):
    var = float(np.var(y))
    base = var * np.geomspace(0.5, 2.0, k)
    mu = np.full(k, float(np.mean(y)) if estimate_mean else 0.0)
    for r in range(max(1, n_restarts)):
        sigma2 = base if r == 0 else base * rng.uniform(0.5, 2.0, size=k)
        off = np.full(k, 0.05) if r == 0 else 0.05 * rng.uniform(0.5, 2.0, size=k)
        p = np.empty((k, k))
        for i in range(k):
            p[i] = off[i] / (k - 1)
            p[i, i] = 1.0 - off[i]
        yield RegimeModelSpec(np.sort(sigma2), mu, np.zeros(k)), TransitionMatrix(p)


def _fit_once(y, spec, trans, max_iter, tol, estimate_mean, estimate_ar):
    init = np.full(spec.k, 1.0 / spec.k)
    state = _e_step(y, spec, trans, init)
    history = [state.loglik]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        spec, trans, init = _m_step(y, spec, state, estimate_mean, estimate_ar)
        new_state = _e_step(y, spec, trans, init)
        gain = new_state.loglik - state.loglik
        state = new_state
        history.append(state.loglik)
        if gain < tol:
            converged = True
            break
    return spec, trans, init, state, n_iter, converged, history


def fit_em(
    y,
    k: int = 2,
    max_iter: int = 1000,
    tol: float = 1e-8,
    n_restarts: int = 4,
    seed: int = 0,
    estimate_mean: bool = False,
    estimate_ar: bool = False,
    start: Optional[tuple[RegimeModelSpec, TransitionMatrix]] = None,
) -> FittedModel:
    """Maximum-likelihood fit of a ``k``-regime switching-variance model by EM.

    The first restart starts from variances spread between half and twice the
    sample variance with 0.95 self-transition probabilities; further restarts
    jitter those values multiplicatively by U(0.5, 2).  The best restart by
    log-likelihood is returned with regimes sorted by ascending variance.
    Pass ``start`` to run a single EM chain from explicit starting values.
    """
    dates = y.dates if isinstance(y, ReturnSeries) else None
    y = _values(y)
    if len(y) < 50:
        raise SeriesTooShort(f"need at least 50 returns to fit, got {len(y)}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    rng = np.random.default_rng(seed)
    starts = [start] if start is not None else _starting_points(y, k, n_restarts, rng, estimate_mean)
    best = None
    failures = []
    for r, (spec0, trans0) in enumerate(starts):
        try:
            result = _fit_once(y, spec0, trans0, max_iter, tol, estimate_mean, estimate_ar)
        except (DegenerateRegime, DegenerateDensity, ZeroPredictedProbability) as exc:
            logger.info("restart %d failed: %s", r, exc)
            failures.append(exc)
            continue
        logger.debug("restart %d: loglik %.6f after %d iterations", r, result[3].loglik, result[4])
        if best is None or result[3].loglik > best[3].loglik:
            best = result
    if best is None:
        raise failures[-1]

    spec, trans, init, state, n_iter, converged, history = best
    if not converged:
        warnings.warn(f"EM hit max_iter={max_iter} without converging", NonConvergence, stacklevel=2)
    model = FittedModel(
        spec, trans, state.loglik, state.filtered, state.smoothed, n_iter, init,
        dates=dates, converged=converged, history=tuple(history),
    )
    return model.sorted_by_variance()


# ---------------------------------------------------------------- simulation & summaries


def simulate_msar(spec: RegimeModelSpec, trans: TransitionMatrix, T: int, seed: int = 0,
                  start_date: str = "2000-01-03") -> tuple[ReturnSeries, np.ndarray]:
    """Draw a path of length ``T``; the chain starts from its ergodic distribution.

    Returns the observations (dated on consecutive business days) and the true
    state sequence.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if spec.k != trans.k:
        raise InvalidSpec("model and transition matrix disagree on the regime count")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(trans.p, axis=1)
    u = rng.random(T)
    eps = rng.standard_normal(T)
    states = np.empty(T, dtype=int)
    states[0] = min(int(np.searchsorted(np.cumsum(trans.ergodic()), u[0], side="right")), spec.k - 1)
    for t in range(1, T):
        states[t] = min(int(np.searchsorted(cum[states[t - 1]], u[t], side="right")), spec.k - 1)
    sd = np.sqrt(spec.sigma2)
    y = np.empty(T)
    prev = 0.0
    for t in range(T):
        s = states[t]
        prev = spec.mu[s] + spec.phi[s] * prev + sd[s] * eps[t]
        y[t] = prev
    dates = np.busday_offset(np.datetime64(start_date, "D"), np.arange(T), roll="forward")
    return ReturnSeries("simulated", dates, y, "log"), states


def expected_durations(trans: TransitionMatrix) -> np.ndarray:
    """Mean regime duration in days, ``1 / (1 - p[i, i])``; ``inf`` for absorbing states."""
    stay = np.diag(trans.p)
    with np.errstate(divide="ignore"):
        return np.where(stay < 1.0, 1.0 / (1.0 - stay), np.inf)


def classify_variance(model: FittedModel, mode: Mode = "smoothed", threshold: float = 0.5) -> LabelSeries:
    """HighVar where the probability of the highest-variance regime exceeds ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    high = model.probabilities(mode)[:, int(np.argmax(model.spec.sigma2))]
    labels = [Variance.HIGH if h else Variance.LOW for h in high > threshold]
    dates = model.dates if model.dates is not None else np.arange(len(high)).astype("datetime64[D]")
    return LabelSeries(dates, labels)
