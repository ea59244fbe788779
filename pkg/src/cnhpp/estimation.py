"""Maximum-likelihood fitting: HPP and NHPP baselines, and the profile fit
of the convolutional NHPP over a grid of decay factors.

For a fixed ``xi`` the convolutional covariates are fixed too, and the
log-likelihood is a concave Poisson-GLM objective in ``beta``; it is
maximized with a BFGS ascent. ``xi`` itself is chosen by comparing the
maximized log-likelihoods across the grid.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .convolution import CovariatePanel, conv_covariate_window
from .model import EventLog, IntensityOverflowError, ModelParams, _poisson_loglik, _score
from .network import WeightMatrix

__all__ = [
    "SolverConfig",
    "OptimResult",
    "ProfilePoint",
    "FitResult",
    "FitError",
    "optimize_beta",
    "fit_hpp",
    "hpp_log_likelihood",
    "fit_nhpp",
    "fit_cnhpp",
    "default_xi_grid",
]


def default_xi_grid() -> tuple[float, ...]:
    return tuple(round(0.05 * k, 2) for k in range(20))


class FitError(RuntimeError):
    """No grid point produced a converged fit."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the inner solver and the decay grid.

    ``beta_bound`` stops the ascent when a coefficient runs off to
    infinity, which happens when the data separate (the MLE does not exist).
    """

    grad_tolerance: float = 1e-8
    max_iterations: int = 500
    xi_grid: tuple[float, ...] = field(default_factory=default_xi_grid)
    K: int = 7
    beta_bound: float = 30.0
    n_jobs: int = 1

    def __post_init__(self):
        grid = tuple(float(x) for x in self.xi_grid)
        if not grid:
            raise ValueError("xi_grid is empty")
        if any(not 0.0 <= x < 1.0 for x in grid):
            raise ValueError("xi grid values must lie in [0, 1)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("xi grid must be strictly increasing")
        if self.grad_tolerance <= 0 or self.max_iterations <= 0 or self.K < 0:
            raise ValueError("grad_tolerance and max_iterations must be positive, K nonnegative")
        object.__setattr__(self, "xi_grid", grid)


@dataclass
class OptimResult:
    beta: np.ndarray
    loglik: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def optimize_beta(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], init, cfg: SolverConfig | None = None) -> OptimResult:
    """Maximize ``fun`` by BFGS with backtracking line search.

    ``fun(beta)`` returns ``(value, gradient)``. Iteration stops when the
    gradient sup-norm drops below ``cfg.grad_tolerance`` or after
    ``cfg.max_iterations`` iterations; the run is deterministic given
    ``init``. A trial point where ``fun`` raises :class:`FloatingPointError`
    or returns a non-finite value is treated as a failed trial step.
    """
    cfg = cfg or SolverConfig()
    x = np.array(init, dtype=float)
    f, g = fun(x)
    f, g = -float(f), -np.asarray(g, dtype=float)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective is not finite at the initial point")
    n = x.size
    H = np.eye(n)
    scaled = False
    tol = cfg.grad_tolerance

    def evaluate(z):
        try:
            fz, gz = fun(z)
        except FloatingPointError:
            return None
        fz, gz = -float(fz), -np.asarray(gz, dtype=float)
        if not (np.isfinite(fz) and np.all(np.isfinite(gz))):
            return None
        return fz, gz

    it = 0
    message = "max_iterations reached"
    while True:
        gmax = float(np.max(np.abs(g)))
        if gmax < tol:
            message = "gradient tolerance reached"
            break
        if it >= cfg.max_iterations:
            break
        if np.max(np.abs(x)) > cfg.beta_bound:
            message = f"coefficients exceed {cfg.beta_bound} in magnitude (diverging; data may be separable)"
            break
        it += 1
        accepted = None
        for attempt in range(2):
            d = -H @ g
            if g @ d >= 0:
                H = np.eye(n)
                d = -g
            step_cap = np.max(np.abs(d))
            if step_cap > 5.0:
                d = d * (5.0 / step_cap)
            slope = g @ d
            alpha = 1.0
            for _ in range(60):
                trial = evaluate(x + alpha * d)
                if trial is not None:
                    fn, gn = trial
                    if fn <= f + 1e-4 * alpha * slope:
                        accepted = (alpha, fn, gn)
                        break
                    # within rounding of f: accept if the gradient still shrinks
                    if abs(fn - f) <= 1e-12 * (1.0 + abs(f)) and np.max(np.abs(gn)) < gmax:
                        accepted = (alpha, fn, gn)
                        break
                alpha *= 0.5
            if accepted is not None:
                break
            H = np.eye(n)
        if accepted is None:
            message = "line search failed"
            break
        alpha, fn, gn = accepted
        s = alpha * d
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, f, g = x + s, fn, gn
    converged = float(np.max(np.abs(g))) < tol
    return OptimResult(x, -f, -g, it, converged, message)


# -- baselines ---------------------------------------------------------------

def fit_hpp(events: EventLog | int, N: int, T: int) -> float:
    """Closed-form HPP rate: events per segment per step."""
    if N <= 0 or T <= 0:
        raise ValueError(f"HPP rate needs a positive window (N={N}, T={T})")
    n = events if isinstance(events, (int, np.integer)) else len(events)
    return n / (N * T)


def hpp_log_likelihood(events: EventLog | int, N: int, T: int) -> float:
    """Maximized HPP log-likelihood ``n log(rate) - rate N T`` (0 when ``n = 0``)."""
    n = events if isinstance(events, (int, np.integer)) else len(events)
    rate = fit_hpp(n, N, T)
    if n == 0:
        return 0.0
    return n * math.log(rate) - rate * N * T


@dataclass
class ProfilePoint:
    xi: float
    loglik: float
    beta: np.ndarray
    iterations: int
    converged: bool
    grad_norm: float
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "xi": self.xi,
            "loglik": self.loglik,
            "beta": np.asarray(self.beta).tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d) -> "ProfilePoint":
        return cls(d["xi"], d["loglik"], np.asarray(d["beta"], dtype=float), d["iterations"], d["converged"],
                   d["grad_norm"], d.get("message", ""))


@dataclass
class FitResult:
    """Outcome of a profile-likelihood fit.

    ``std_errors`` are from the observed information in ``beta`` at the
    selected ``xi`` (conditional on that ``xi``).
    """

    params_hat: ModelParams
    loglik: float
    profile: list[ProfilePoint]
    K: int
    model: str = "cNHPP"
    std_errors: np.ndarray | None = None
    n_events: int = 0
    standardization: dict | None = None
    names: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self) -> list[int]:
        return [p.iterations for p in self.profile]

    @property
    def converged(self) -> list[bool]:
        return [p.converged for p in self.profile]

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    def profile_array(self) -> np.ndarray:
        """``(n_grid, 2)`` array of ``(xi, maximized loglik)``."""
        return np.array([(p.xi, p.loglik) for p in self.profile])

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params_hat": self.params_hat.to_dict(),
            "loglik": self.loglik,
            "K": self.K,
            "std_errors": None if self.std_errors is None else np.asarray(self.std_errors).tolist(),
            "n_events": self.n_events,
            "names": list(self.names),
            "profile": [p.to_dict() for p in self.profile],
            "iterations": self.iterations,
            "converged": self.converged,
            "standardization": self.standardization,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "FitResult":
        se = d.get("std_errors")
        return cls(
            params_hat=ModelParams.from_dict(d["params_hat"]),
            loglik=d["loglik"],
            profile=[ProfilePoint.from_dict(p) for p in d["profile"]],
            K=d["K"],
            model=d.get("model", "cNHPP"),
            std_errors=None if se is None else np.asarray(se, dtype=float),
            n_events=d.get("n_events", 0),
            standardization=d.get("standardization"),
            names=tuple(d.get("names", ())),
            extra=d.get("extra", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def _design_objective(X: np.ndarray, counts: np.ndarray):
    def fun(beta):
        eta = X @ beta
        ll = _poisson_loglik(eta, counts, beta)
        return ll, _score(X, counts - np.exp(eta))
    return fun


def _observed_information(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    lam = np.exp(X @ beta)
    return np.einsum("tnp,tn,tnr->pr", X, lam, X)


def _std_errors(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    info = _observed_information(X, beta)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return np.full(beta.size, np.nan)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _init_beta(X: np.ndarray, counts: np.ndarray) -> np.ndarray:
    T, N, p = X.shape
    n = counts.sum()
    # zero events: start at half an event so the log is finite
    rate = (n if n > 0 else 0.5) / (N * T)
    beta = np.zeros(p)
    scale = float(np.mean(X[:, :, 0]))
    beta[0] = math.log(rate) / scale if scale > 0 else math.log(rate)
    return beta


def _fit_design(X: np.ndarray, counts: np.ndarray, cfg: SolverConfig, xi: float) -> ProfilePoint:
    fun = _design_objective(X, counts)
    init = _init_beta(X, counts)
    try:
        res = optimize_beta(fun, init, cfg)
    except (ValueError, FloatingPointError) as e:
        return ProfilePoint(xi, float("nan"), np.full(X.shape[2], np.nan), 0, False, float("nan"), str(e))
    return ProfilePoint(xi, res.loglik, res.beta, res.iterations, res.converged, res.grad_norm, res.message)


def fit_nhpp(panel: CovariatePanel, events: EventLog, cfg: SolverConfig | None = None) -> FitResult:
    """Log-linear NHPP fit, ``log lambda = X(t) beta`` (no history, no network).

    Non-convergence is reported through ``converged``, not raised.
    """
    cfg = cfg or SolverConfig()
    X = panel.window
    counts = events.cell_counts()
    pt = _fit_design(X, counts, cfg, 0.0)
    beta = pt.beta if np.all(np.isfinite(pt.beta)) else np.zeros(X.shape[2])
    return FitResult(
        params_hat=ModelParams(0.0, beta),
        loglik=pt.loglik,
        profile=[pt],
        K=0,
        model="NHPP",
        std_errors=_std_errors(X, beta),
        n_events=len(events),
        names=panel.names,
    )


def fit_cnhpp(panel: CovariatePanel, events: EventLog, W: WeightMatrix, cfg: SolverConfig | None = None,
              pad_history: bool = False) -> FitResult:
    """Profile-likelihood fit over ``cfg.xi_grid``.

    Each grid point builds the convolutional covariates once and maximizes
    over ``beta``. The selected ``xi`` is the best converged grid point
    (ties go to the smaller ``xi``).

    Raises
    ------
    FitError
        If no grid point converged; the partial result is attached.
    """
    cfg = cfg or SolverConfig()
    counts = events.cell_counts()
    if events.window_T != panel.n_steps or events.n_segments != panel.n_segments:
        raise ValueError("events and panel disagree on the window or network size")

    def run(xi):
        X = conv_covariate_window(W, panel, xi, cfg.K, pad_history=pad_history)
        return _fit_design(X, counts, cfg, xi)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            profile = list(pool.map(run, cfg.xi_grid))
    else:
        profile = [run(xi) for xi in cfg.xi_grid]

    ok = [p for p in profile if p.converged]
    pick = ok if ok else [p for p in profile if np.isfinite(p.loglik)]
    if not pick:
        raise FitError("every grid point failed", None)
    best = pick[0]
    for p in pick[1:]:
        if p.loglik > best.loglik:
            best = p
    X = conv_covariate_window(W, panel, best.xi, cfg.K, pad_history=pad_history)
    result = FitResult(
        params_hat=ModelParams(best.xi, best.beta),
        loglik=best.loglik,
        profile=profile,
        K=cfg.K,
        model="cNHPP",
        std_errors=_std_errors(X, best.beta),
        n_events=len(events),
        names=panel.names,
    )
    if not ok:
        raise FitError("no grid point converged", result)
    return result
