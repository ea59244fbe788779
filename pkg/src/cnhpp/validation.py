"""Percentile-rank validation, model comparison tables and density exports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimation import FitResult
from .model import EventLog, IntensityField

__all__ = [
    "PercentileReport",
    "ComparisonTable",
    "percentile_rank",
    "model_comparison",
    "export_density",
    "read_density",
]


@dataclass(frozen=True, eq=False)
class PercentileReport:
    event_index: np.ndarray
    segment_id: np.ndarray
    t: np.ndarray
    percentile: np.ndarray
    summary: dict = field(default_factory=dict)

    def __len__(self):
        return self.percentile.size

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["event_index", "segment_id", "t", "percentile"])
        for row in zip(self.event_index, self.segment_id, self.t, self.percentile):
            w.writerow([int(row[0]), int(row[1]), int(row[2]), repr(float(row[3]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def percentile_rank(intensity, events: EventLog, t0: int = 0) -> PercentileReport:
    """Weak percentile rank of each event's segment among all segments at its step.

    For an event on segment ``s`` at step ``t`` the percentile is
    ``100 * #{i : v(i, t) <= v(s, t)} / N``. ``intensity`` is an
    :class:`IntensityField` (ranked on log-intensity) or a ``(T, N)`` array
    whose first row is step ``t0``. Any strictly increasing transform of the
    values gives the same report.
    """
    if isinstance(intensity, IntensityField):
        vals, t0 = intensity.log_lambda, intensity.t0
    else:
        vals = np.asarray(intensity, dtype=float)
    if vals.ndim != 2 or vals.shape[1] != events.n_segments:
        raise ValueError("intensity must be (steps, N) with N matching the events")
    steps = events.steps
    rows = steps - t0
    bad = np.flatnonzero((rows < 0) | (rows >= vals.shape[0]))
    if bad.size:
        k = bad[0]
        raise IndexError(f"event {k} at step {steps[k]} is outside the intensity window")
    N = vals.shape[1]
    seg = events.segment_ids
    own = vals[rows, seg]
    below = np.sum(vals[rows] <= own[:, None], axis=1)
    pct = 100.0 * below / N
    summary = {}
    if pct.size:
        summary = {f"q{int(q)}": float(np.percentile(pct, q)) for q in (0, 25, 50, 75, 100)}
        summary["mean"] = float(pct.mean())
    return PercentileReport(np.arange(seg.size), seg.copy(), steps.copy(), pct, summary)


@dataclass
class ComparisonTable:
    columns: list[str]
    rows: list[str]
    cells: list[list[str]]

    def to_text(self) -> str:
        widths = [max(len(r) for r in self.rows + [""])]
        for j, c in enumerate(self.columns):
            widths.append(max([len(c)] + [len(row[j]) for row in self.cells]))
        lines = [" | ".join([" " * widths[0]] + [c.center(w) for c, w in zip(self.columns, widths[1:])])]
        lines.append("-+-".join("-" * w for w in widths))
        for name, row in zip(self.rows, self.cells):
            lines.append(" | ".join([name.ljust(widths[0])] + [v.rjust(w) for v, w in zip(row, widths[1:])]))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", *self.columns])
        for name, row in zip(self.rows, self.cells):
            w.writerow([name, *row])
        return buf.getvalue()


def model_comparison(fits: Sequence[FitResult] = (), labels: Sequence[str] | None = None,
                     hpp_rate: float | None = None, hpp_loglik: float | None = None,
                     digits: int = 3) -> ComparisonTable:
    """Side-by-side parameter table: rate, decay, coefficients, log-likelihood.

    The HPP column (when ``hpp_rate`` is given) comes first and shows the
    rate in units of 1e-5. Missing entries are ``-``.
    """
    fits = list(fits)
    if not fits and hpp_rate is None:
        raise ValueError("nothing to compare")
    labels = list(labels) if labels is not None else [f.model for f in fits]
    if len(labels) != len(fits):
        raise ValueError("one label per fit")
    p = max((f.params_hat.beta.size for f in fits), default=0)
    names = None
    for f in fits:
        if len(f.names) == p:
            names = list(f.names)
            break
    if names is None:
        names = ["intercept"] + [f"beta{k}" for k in range(1, p)]
    fmt = f"{{:.{digits}f}}"
    rows = ["rate (x1e-5)", "decay"] + names + ["log-likelihood"]
    columns, cols = [], []
    if hpp_rate is not None:
        columns.append("HPP")
        cols.append([fmt.format(hpp_rate * 1e5), "-"] + ["-"] * p
                    + ["-" if hpp_loglik is None else fmt.format(hpp_loglik)])
    for lab, f in zip(labels, fits):
        beta = [fmt.format(b) for b in f.params_hat.beta] + ["-"] * (p - f.params_hat.beta.size)
        decay = "-" if f.model == "NHPP" else _fmt_decay(f.params_hat.xi, digits)
        columns.append(lab)
        cols.append(["-", decay] + beta + [fmt.format(f.loglik)])
    cells = [[c[i] for c in cols] for i in range(len(rows))]
    return ComparisonTable(columns, rows, cells)


def _fmt_decay(xi: float, digits: int) -> str:
    s = f"{xi:.{digits}f}".rstrip("0")
    return s + "0" if s.endswith(".") else s


def export_density(intensity: IntensityField, t: int, path=None) -> str:
    """CSV of ``segment_id, lambda`` at step ``t``, one row per segment."""
    lam = np.exp(intensity.at(t))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["segment_id", "lambda"])
    for i, v in enumerate(lam):
        w.writerow([i, repr(float(v))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_density(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = np.empty(len(rows))
    for r in rows:
        out[int(r["segment_id"])] = float(r["lambda"])
    return out
