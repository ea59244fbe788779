"""Network convolution of per-segment covariates.

Time is measured in panel steps. A :class:`CovariatePanel` stores
``burn_in`` history steps followed by the ``n_steps`` steps of the
likelihood window; window step ``t`` lives at array index ``burn_in + t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import WeightMatrix, matrix_power_apply

__all__ = [
    "CovariatePanel",
    "ConvCovariates",
    "HistoryError",
    "nc_apply",
    "nc_nfold",
    "conv_covariate_matrix",
    "conv_covariate_window",
]


class HistoryError(ValueError):
    """The panel does not reach far enough back for the requested truncation."""


@dataclass(frozen=True, eq=False)
class CovariatePanel:
    """Design rows ``x(i, t)`` on a uniform step grid.

    ``values`` has shape ``(burn_in + n_steps, N, q + 1)`` and column 0 is
    the intercept (exactly 1.0).
    """

    values: np.ndarray
    burn_in: int = 0
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError(f"panel values must be 3-D (steps, segments, columns), got shape {v.shape}")
        if v.shape[2] < 1:
            raise ValueError("panel needs at least the intercept column")
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise ValueError(f"non-finite covariate at step {bad[0]}, segment {bad[1]}, column {bad[2]}")
        if not np.all(v[:, :, 0] == 1.0):
            raise ValueError("column 0 must be the intercept (all ones)")
        if not 0 <= self.burn_in < v.shape[0]:
            raise ValueError(f"burn_in={self.burn_in} leaves no window steps (panel has {v.shape[0]})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        names = self.names
        if names is None:
            names = ("intercept",) + tuple(f"x{k}" for k in range(1, v.shape[2]))
        elif len(names) == v.shape[2] - 1:
            names = ("intercept",) + tuple(names)
        if len(names) != v.shape[2]:
            raise ValueError("names must cover every covariate column")
        object.__setattr__(self, "names", tuple(names))

    @classmethod
    def from_covariates(cls, covariates, burn_in: int = 0, names: Sequence[str] | None = None) -> "CovariatePanel":
        """Build a panel from a ``(steps, N, q)`` array, prepending the intercept."""
        cov = np.asarray(covariates, dtype=float)
        if cov.ndim == 2:
            cov = cov[:, :, None]
        ones = np.ones(cov.shape[:2] + (1,))
        return cls(np.concatenate([ones, cov], axis=2), burn_in=burn_in, names=names)

    @property
    def n_total(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        """Length ``T`` of the likelihood window."""
        return self.values.shape[0] - self.burn_in

    @property
    def n_segments(self) -> int:
        return self.values.shape[1]

    @property
    def q(self) -> int:
        return self.values.shape[2] - 1

    @property
    def window(self) -> np.ndarray:
        return self.values[self.burn_in:]

    def step(self, t: int) -> np.ndarray:
        """``X(t)`` for window step ``t`` (negative ``t`` reaches into burn-in)."""
        idx = self.burn_in + t
        if not 0 <= idx < self.n_total:
            raise HistoryError(f"step {t} is outside the panel (steps {-self.burn_in}..{self.n_steps - 1})")
        return self.values[idx]

    def with_burn_in(self, burn_in: int) -> "CovariatePanel":
        return CovariatePanel(self.values, burn_in=burn_in, names=self.names)


@dataclass(frozen=True, eq=False)
class ConvCovariates:
    """The convolutional covariate matrix at one step."""

    values: np.ndarray
    k_used: int


def nc_apply(W: WeightMatrix, f) -> np.ndarray:
    """One network convolution: ``out[i] = sum_{i'} w[i, i'] f[i']``."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != W.n:
        raise ValueError(f"dimension mismatch: W is {W.n}x{W.n}, f has length {f.shape[0]}")
    return np.asarray(W.matrix @ f)


def nc_nfold(W: WeightMatrix, f, n: int) -> np.ndarray:
    """``n`` repeated network convolutions; ``n = 0`` returns ``f``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = np.array(f, dtype=float, copy=True)
    for _ in range(n):
        out = nc_apply(W, out)
    return out


def _check_history(panel: CovariatePanel, K: int, first: int, pad_history: bool):
    earliest = panel.burn_in + first - K
    if earliest < 0 and not pad_history:
        missing = ", ".join(str(s) for s in range(first - K, -panel.burn_in))
        raise HistoryError(
            f"truncation K={K} at step {first} needs history back to step {first - K}; "
            f"panel starts at step {-panel.burn_in} (missing steps {missing})"
        )


def conv_covariate_matrix(
    W: WeightMatrix,
    panel: CovariatePanel,
    xi: float,
    K: int,
    t: int,
    pad_history: bool = False,
) -> ConvCovariates:
    """``sum_{k=0}^{K} xi^k W^k X(t - k)`` at a single window step ``t``.

    Evaluated by Horner's rule, so ``K`` sparse products are used and no
    power of ``W`` is formed. With ``pad_history=True`` steps before the
    start of the panel count as zero.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if not 0 <= xi < 1:
        raise ValueError(f"xi must lie in [0, 1), got {xi}")
    _check_history(panel, K, t, pad_history)
    if t >= panel.n_steps:
        raise HistoryError(f"step {t} is beyond the window (T={panel.n_steps})")
    vals = panel.values
    acc = None
    for k in range(K, -1, -1):
        idx = panel.burn_in + t - k
        x = vals[idx] if idx >= 0 else None
        if acc is None:
            acc = np.zeros(vals.shape[1:]) if x is None else x.copy()
        else:
            acc = xi * (W.matrix @ acc)
            if x is not None:
                acc = x + acc
    return ConvCovariates(np.asarray(acc), K)


def conv_covariate_window(
    W: WeightMatrix,
    panel: CovariatePanel,
    xi: float,
    K: int,
    pad_history: bool = False,
) -> np.ndarray:
    """Convolutional covariates for every window step, shape ``(T, N, q+1)``.

    Same Horner recursion as :func:`conv_covariate_matrix`, but each sparse
    product acts on all steps at once.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if not 0 <= xi < 1:
        raise ValueError(f"xi must lie in [0, 1), got {xi}")
    _check_history(panel, K, 0, pad_history)
    T, N, p = panel.n_steps, panel.n_segments, panel.q + 1
    vals = panel.values
    b = panel.burn_in

    def shifted(k):
        # X(t - k) for t = 0..T-1, zeros before the panel start
        lo = b - k
        if lo >= 0:
            return vals[lo:lo + T]
        out = np.zeros((T, N, p))
        out[-lo:] = vals[:T + lo]
        return out

    acc = shifted(K).copy()
    for k in range(K - 1, -1, -1):
        # (T, N, p) -> (N, T*p) so one sparse product covers every step
        flat = np.ascontiguousarray(acc.transpose(1, 0, 2)).reshape(N, T * p)
        prop = (W.matrix @ flat).reshape(N, T, p).transpose(1, 0, 2)
        acc = shifted(k) + xi * prop
    return np.ascontiguousarray(acc)


def series_terms(W: WeightMatrix, panel: CovariatePanel, xi: float, K: int, t: int) -> list[np.ndarray]:
    """The individual terms ``xi^k W^k X(t - k)``, ``k = 0..K`` (diagnostics)."""
    return [xi ** k * matrix_power_apply(W, k, panel.step(t - k)) for k in range(K + 1)]
