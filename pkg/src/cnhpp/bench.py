"""Wall-time comparison of the two ways to evaluate log-intensities over a window.

* series route: for each step, build the convolutional covariate matrix by
  ``K`` sparse products, then multiply by ``beta``;
* recurrence route: one sparse matrix-vector product per step.
"""

from __future__ import annotations

import time

import numpy as np

from .convolution import CovariatePanel, conv_covariate_matrix
from .model import ModelParams, log_intensity_recurrence
from .network import build_weights
from .simulate import gen_covariates, gen_network


def series_route(params: ModelParams, panel: CovariatePanel, W, K: int) -> np.ndarray:
    out = np.empty((panel.n_steps, panel.n_segments))
    for t in range(panel.n_steps):
        out[t] = conv_covariate_matrix(W, panel, params.xi, K, t).values @ params.beta
    return out


def recurrence_route(params: ModelParams, panel: CovariatePanel, W, K: int) -> np.ndarray:
    return log_intensity_recurrence(params, panel, W, -K, panel.n_steps - 1).log_lambda[K:]


def _best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(n: int = 5000, T: int = 30, K_values=range(0, 8), q: int = 4, repeats: int = 5,
                  topology: str = "lattice", xi: float = 0.7, seed: int = 0) -> list[dict]:
    """Time both routes for each ``K``; best of ``repeats`` runs.

    Returns one dict per ``K`` with ``series_s``, ``recurrence_s`` and
    ``ratio`` (series over recurrence).
    """
    K_values = list(K_values)
    kmax = max(K_values)
    net = gen_network(topology, n, seed)
    W = build_weights(net)
    panel = gen_covariates(net, T + kmax, q, 0.8, 1.0, seed, burn_in=kmax)
    params = ModelParams(xi, np.linspace(-3.0, 1.0, q + 1))
    rows = []
    for K in K_values:
        p = panel.with_burn_in(kmax)
        ts = _best_time(lambda: series_route(params, p, W, K), repeats)
        tr = _best_time(lambda: recurrence_route(params, p, W, K), repeats)
        rows.append({"K": K, "n": n, "T": T, "series_s": ts, "recurrence_s": tr, "ratio": ts / tr})
    return rows
