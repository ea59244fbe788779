"""Log-intensities, likelihood and gradients of the convolutional NHPP.

The log-intensity on segment ``i`` at step ``t`` is

    log lambda(t) = sum_{k=0}^{K} xi^k W^k X(t - k) beta

(the *series* form). It equals the recurrence ``h(t) = xi W h(t-1) + X(t)
beta`` started from ``h = 0`` just before step ``t - K`` (the *recurrence*
form). Passing ``K=None`` to the likelihood functions drops the truncation:
the recurrence then runs once from the first panel step to the end of the
window, which is the untruncated model seen through its zero-initialised
history.

Intensities are piecewise constant over unit steps, so the integral in the
log-likelihood is a plain sum over cells.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import stats

from .convolution import CovariatePanel, HistoryError, conv_covariate_matrix, conv_covariate_window
from .network import WeightMatrix

__all__ = [
    "ModelParams",
    "EventLog",
    "IntensityField",
    "IntensityOverflowError",
    "log_intensity_series",
    "log_intensity_window",
    "log_intensity_recurrence",
    "log_likelihood",
    "gradient_bptt",
    "nhpp_log_likelihood",
    "nhpp_score",
    "event_probability",
    "subnet_count_distribution",
    "predict_intensity",
]

# exp(50) ~ 5e21; anything larger is a misconfigured model, not a risk estimate
MAX_LOG_INTENSITY = 50.0


class IntensityOverflowError(FloatingPointError):
    """A log-intensity exceeded :data:`MAX_LOG_INTENSITY`."""


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Decay factor ``xi`` in [0, 1) and coefficients ``beta`` (intercept first)."""

    xi: float
    beta: np.ndarray

    def __post_init__(self):
        xi = float(self.xi)
        if not 0.0 <= xi < 1.0:
            raise ValueError(f"xi must lie in [0, 1), got {xi}")
        beta = np.array(self.beta, dtype=float).ravel()
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "beta", beta)

    @property
    def theta(self) -> np.ndarray:
        """``(xi, beta_0, ..., beta_q)``."""
        return np.concatenate([[self.xi], self.beta])

    def to_dict(self) -> dict:
        return {"xi": self.xi, "beta": self.beta.tolist()}

    @classmethod
    def from_dict(cls, d) -> "ModelParams":
        return cls(d["xi"], d["beta"])


@dataclass(frozen=True, eq=False)
class EventLog:
    """Observed events as ``(segment, time)`` pairs in a window ``[0, T]``.

    Times are in step units; an event at time ``u`` falls in step
    ``floor(u)``, and ``u = T`` is folded into the last step.
    """

    segment_ids: np.ndarray
    times: np.ndarray
    window_T: int
    n_segments: int

    def __post_init__(self):
        seg = np.asarray(self.segment_ids, dtype=np.int64).ravel()
        t = np.asarray(self.times, dtype=float).ravel()
        if seg.shape != t.shape:
            raise ValueError("segment_ids and times must have the same length")
        if self.window_T <= 0 or self.n_segments <= 0:
            raise ValueError("window_T and n_segments must be positive")
        bad = np.flatnonzero((seg < 0) | (seg >= self.n_segments))
        if bad.size:
            raise ValueError(f"event {bad[0]}: segment id {seg[bad[0]]} not in 0..{self.n_segments - 1}")
        bad = np.flatnonzero(~((t >= 0) & (t <= self.window_T)))
        if bad.size:
            raise ValueError(f"event {bad[0]}: time {t[bad[0]]} outside [0, {self.window_T}]")
        seg.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "segment_ids", seg)
        object.__setattr__(self, "times", t)

    @classmethod
    def empty(cls, window_T: int, n_segments: int) -> "EventLog":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0), window_T, n_segments)

    def __len__(self):
        return self.segment_ids.size

    @property
    def steps(self) -> np.ndarray:
        return np.minimum(np.floor(self.times).astype(np.int64), self.window_T - 1)

    @property
    def counts(self) -> np.ndarray:
        """Events per segment, ``b_i``."""
        return np.bincount(self.segment_ids, minlength=self.n_segments)

    def cell_counts(self) -> np.ndarray:
        """Events per ``(step, segment)`` cell, shape ``(T, N)``."""
        out = np.zeros((self.window_T, self.n_segments))
        np.add.at(out, (self.steps, self.segment_ids), 1.0)
        return out


@dataclass(frozen=True, eq=False)
class IntensityField:
    """Log-intensities over consecutive steps ``t0, t0+1, ...``; shape ``(T, N)``."""

    log_lambda: np.ndarray
    t0: int = 0

    def __post_init__(self):
        a = np.array(self.log_lambda, dtype=float)
        if a.ndim != 2:
            raise ValueError("log_lambda must be 2-D (steps, segments)")
        if not np.all(np.isfinite(a)):
            raise ValueError("log-intensities must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "log_lambda", a)

    @property
    def lam(self) -> np.ndarray:
        return np.exp(self.log_lambda)

    @property
    def n_steps(self) -> int:
        return self.log_lambda.shape[0]

    @property
    def n_segments(self) -> int:
        return self.log_lambda.shape[1]

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.t0, self.t0 + self.n_steps)

    def at(self, t: int) -> np.ndarray:
        """Log-intensity vector at step ``t``."""
        k = t - self.t0
        if not 0 <= k < self.n_steps:
            raise IndexError(f"step {t} outside intensity field steps {self.t0}..{self.t0 + self.n_steps - 1}")
        return self.log_lambda[k]

    def to_csv(self, path) -> None:
        """Write columns ``t, segment_id, log_lambda, lambda``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "segment_id", "log_lambda", "lambda"])
            lam = self.lam
            for k, t in enumerate(self.steps):
                for i in range(self.n_segments):
                    w.writerow([int(t), i, repr(float(self.log_lambda[k, i])), repr(float(lam[k, i]))])

    @classmethod
    def from_csv(cls, path) -> "IntensityField":
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append((int(r["t"]), int(r["segment_id"]), float(r["log_lambda"])))
        ts = sorted({r[0] for r in rows})
        n = max(r[1] for r in rows) + 1
        a = np.full((len(ts), n), np.nan)
        for t, i, v in rows:
            a[t - ts[0], i] = v
        return cls(a, t0=ts[0])


def _eta_guard(eta: np.ndarray, beta, t0: int = 0) -> None:
    top = np.max(eta) if eta.size else -np.inf
    if top > MAX_LOG_INTENSITY:
        t, i = np.unravel_index(np.argmax(eta), eta.shape)
        raise IntensityOverflowError(
            f"log-intensity {top:.4g} > {MAX_LOG_INTENSITY} at segment {i}, step {t + t0} "
            f"(beta = {np.asarray(beta).tolist()})"
        )


def _poisson_loglik(eta: np.ndarray, counts: np.ndarray, beta) -> float:
    # sum_events eta - sum_cells exp(eta), with unit steps
    _eta_guard(eta, beta)
    return float(np.sum(counts * eta) - np.sum(np.exp(eta)))


def _score(X: np.ndarray, resid: np.ndarray) -> np.ndarray:
    return np.einsum("tnp,tn->p", X, resid)


def log_intensity_series(params: ModelParams, panel: CovariatePanel, W: WeightMatrix, K: int, t: int,
                         pad_history: bool = False) -> np.ndarray:
    """``log lambda(t) = Xconv(t) beta`` at one window step."""
    xc = conv_covariate_matrix(W, panel, params.xi, K, t, pad_history=pad_history)
    return xc.values @ params.beta


def log_intensity_window(params: ModelParams, panel: CovariatePanel, W: WeightMatrix, K: int | None,
                         pad_history: bool = False) -> IntensityField:
    """Log-intensities over the whole window.

    Integer ``K`` uses the truncated series; ``K=None`` runs the untruncated
    recurrence from the first panel step.
    """
    if K is None:
        h = _recurrence_states(params, panel, W)
        return IntensityField(h[panel.burn_in:], t0=0)
    xc = conv_covariate_window(W, panel, params.xi, K, pad_history=pad_history)
    return IntensityField(xc @ params.beta, t0=0)


def log_intensity_recurrence(params: ModelParams, panel: CovariatePanel, W: WeightMatrix,
                             t_start: int, t_end: int, h_init=None) -> IntensityField:
    """Iterate ``h(t) = xi W h(t-1) + X(t) beta`` for ``t = t_start..t_end``.

    ``h_init`` is the state at ``t_start - 1`` (zero if omitted). The output
    map is the identity, so the returned field is ``h`` itself.
    """
    if t_end < t_start:
        raise ValueError("t_end must be >= t_start")
    panel.step(t_start), panel.step(t_end)  # range check
    lo = panel.burn_in + t_start
    # input projections for every step in one product
    C = panel.values[lo:lo + t_end - t_start + 1] @ params.beta
    A, xi = W.matrix, params.xi
    out = np.empty_like(C)
    h = np.zeros(panel.n_segments) if h_init is None else np.array(h_init, dtype=float)
    for k in range(C.shape[0]):
        h = xi * (A @ h) + C[k]
        out[k] = h
    return IntensityField(out, t0=t_start)


def _recurrence_states(params: ModelParams, panel: CovariatePanel, W: WeightMatrix) -> np.ndarray:
    C = panel.values @ params.beta
    H = np.empty_like(C)
    h = np.zeros(panel.n_segments)
    for s in range(panel.n_total):
        h = params.xi * (W.matrix @ h) + C[s]
        H[s] = h
    return H


def _restarted_inputs(panel: CovariatePanel, K: int, pad_history: bool):
    """Covariate blocks ``X(t - K + j)`` over the window, ``j = 0..K``."""
    T, b = panel.n_steps, panel.burn_in
    if b < K and not pad_history:
        raise HistoryError(
            f"truncation K={K} needs {K} burn-in steps before the window; the panel has {b}"
        )
    blocks = []
    for j in range(K + 1):
        lo = b - K + j
        if lo >= 0:
            blocks.append(panel.values[lo:lo + T])
        else:
            blk = np.zeros((T,) + panel.values.shape[1:])
            blk[-lo:] = panel.values[:T + lo]
            blocks.append(blk)
    return blocks


def _sp_rows(W: WeightMatrix, H: np.ndarray) -> np.ndarray:
    """Apply ``W`` to each row of ``H`` (rows are steps)."""
    return np.asarray(W.matrix @ H.T).T


def _sp_rows_T(W: WeightMatrix, A: np.ndarray) -> np.ndarray:
    """Apply ``W^T`` to each row of ``A``."""
    return np.asarray(W.matrix.T @ A.T).T


def log_likelihood(params: ModelParams, panel: CovariatePanel, events: EventLog, W: WeightMatrix,
                   K: int | None, pad_history: bool = False) -> float:
    """Poisson log-likelihood of the events given the covariate panel.

    Raises
    ------
    IntensityOverflowError
        If any log-intensity exceeds :data:`MAX_LOG_INTENSITY`.
    """
    _check_events(panel, events)
    if K is None:
        eta = _recurrence_states(params, panel, W)[panel.burn_in:]
    else:
        eta = conv_covariate_window(W, panel, params.xi, K, pad_history=pad_history) @ params.beta
    return _poisson_loglik(eta, events.cell_counts(), params.beta)


def _check_events(panel: CovariatePanel, events: EventLog):
    if events.window_T != panel.n_steps or events.n_segments != panel.n_segments:
        raise ValueError(
            f"events cover T={events.window_T}, N={events.n_segments}; "
            f"panel window is T={panel.n_steps}, N={panel.n_segments}"
        )


def gradient_bptt(params: ModelParams, panel: CovariatePanel, events: EventLog, W: WeightMatrix,
                  K: int | None, pad_history: bool = False, return_loglik: bool = False):
    """Gradient of :func:`log_likelihood` by back-propagation through time.

    Returns the vector ``(dl/dbeta_0, ..., dl/dbeta_q, dl/dxi)``.

    With ``K=None`` the adjoint runs once backwards over the whole panel::

        a(T_end) = g(T_end),   a(t) = g(t) + xi W^T a(t+1)

    where ``g = dl/do`` is ``counts - lambda`` inside the window and zero in
    the burn-in. Then ``dl/dbeta = sum_t X(t)^T a(t)`` and
    ``dl/dxi = sum_t (W h(t-1))^T a(t)``.

    With integer ``K`` each output step ``t`` has its own chain restarted at
    ``t - K``; all chains are advanced together, and each is unrolled back
    exactly ``K`` steps.
    """
    _check_events(panel, events)
    beta, xi = params.beta, params.xi
    counts = events.cell_counts()
    b = panel.burn_in

    if K is None:
        H = _recurrence_states(params, panel, W)
        eta = H[b:]
        _eta_guard(eta, beta)
        G = np.zeros_like(H)
        G[b:] = counts - np.exp(eta)
        A = np.empty_like(H)
        a = G[-1]
        A[-1] = a
        for s in range(panel.n_total - 2, -1, -1):
            a = G[s] + xi * (W.matrix.T @ a)
            A[s] = a
        g_beta = _score(panel.values, A)
        WH = _sp_rows(W, H[:-1])
        g_xi = float(np.sum(WH * A[1:]))
    else:
        Xs = _restarted_inputs(panel, K, pad_history)
        Cs = [X @ beta for X in Xs]
        Hs = [Cs[0]]
        for j in range(1, K + 1):
            Hs.append(xi * _sp_rows(W, Hs[-1]) + Cs[j])
        eta = Hs[-1]
        _eta_guard(eta, beta)
        A = counts - np.exp(eta)
        g_beta = np.zeros(beta.size)
        g_xi = 0.0
        for j in range(K, -1, -1):
            if j < K:
                A = xi * _sp_rows_T(W, A)
            g_beta = g_beta + _score(Xs[j], A)
            if j >= 1:
                g_xi += float(np.sum(_sp_rows(W, Hs[j - 1]) * A))
        if K == 0:
            g_xi = 0.0
    grad = np.concatenate([g_beta, [g_xi]])
    if return_loglik:
        ll = float(np.sum(counts * eta) - np.sum(np.exp(eta)))
        return grad, ll
    return grad


def nhpp_log_likelihood(beta, panel: CovariatePanel, events: EventLog) -> float:
    """Log-likelihood of the plain log-linear NHPP, ``log lambda = X(t) beta``."""
    _check_events(panel, events)
    beta = np.asarray(beta, dtype=float)
    return _poisson_loglik(panel.window @ beta, events.cell_counts(), beta)


def nhpp_score(beta, panel: CovariatePanel, events: EventLog) -> np.ndarray:
    """Gradient of :func:`nhpp_log_likelihood` in ``beta``."""
    _check_events(panel, events)
    beta = np.asarray(beta, dtype=float)
    X = panel.window
    eta = X @ beta
    _eta_guard(eta, beta)
    return _score(X, events.cell_counts() - np.exp(eta))


def _window_mass(intensity: IntensityField, subnet, t0: int, t1: int) -> np.ndarray:
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    lo, hi = t0 - intensity.t0, t1 - intensity.t0
    if lo < 0 or hi > intensity.n_steps:
        raise IndexError(f"[{t0}, {t1}) is not inside the intensity field")
    subnet = np.asarray(list(subnet), dtype=np.int64)
    return intensity.lam[lo:hi][:, subnet].sum(axis=0)


def event_probability(intensity: IntensityField, subnet: Iterable[int], t0: int, t1: int, counts) -> float:
    """Probability of observing ``counts[k]`` events on ``subnet[k]`` during ``[t0, t1)``.

    Segments are independent Poisson with mean ``sum_t lambda(i, t)``.
    """
    lam = _window_mass(intensity, subnet, t0, t1)
    n = np.asarray(counts, dtype=float)
    if n.shape != lam.shape:
        raise ValueError("counts must align with subnet")
    if np.any(n < 0) or np.any(n != np.floor(n)):
        raise ValueError("counts must be nonnegative integers")
    return float(np.exp(np.sum(stats.poisson.logpmf(n, lam))))


def subnet_count_distribution(intensity: IntensityField, subnet: Iterable[int], t0: int, t1: int):
    """Distribution of the total count on ``subnet`` during ``[t0, t1)`` (a frozen scipy Poisson)."""
    return stats.poisson(float(_window_mass(intensity, subnet, t0, t1).sum()))


def predict_intensity(fit, future_panel: CovariatePanel, W: WeightMatrix, K: int | None = None,
                      steps: int | None = None) -> IntensityField:
    """Log-intensities implied by a fitted model on another panel.

    ``fit`` needs ``params_hat`` (and ``K`` when ``K`` is not given). The
    panel's burn-in supplies the trailing history; ``steps`` keeps only the
    last ``steps`` window steps.
    """
    K = fit.K if K is None else K
    if future_panel.burn_in < K:
        raise HistoryError(
            f"prediction with K={K} needs {K} history steps before the first predicted step; "
            f"panel has {future_panel.burn_in} (required steps {-K}..-1)"
        )
    field = log_intensity_window(fit.params_hat, future_panel, W, K)
    if steps is None:
        return field
    if not 1 <= steps <= field.n_steps:
        raise ValueError(f"steps must be in 1..{field.n_steps}")
    start = field.n_steps - steps
    return IntensityField(field.log_lambda[start:], t0=start)
