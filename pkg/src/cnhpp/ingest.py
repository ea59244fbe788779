"""File loaders, covariate standardization, NDVI and grid-to-segment assignment.

File formats (UTF-8 CSV with a header row unless noted):

* network: ``segment_id, x1, y1, x2, y2`` (CSV), or JSON holding either a
  list of such records or ``{"segments": [...], "adjacency": [[i, j], ...]}``;
  an optional adjacency CSV ``segment_id, neighbor_id`` overrides snapping.
* covariate panel: long format ``t, segment_id, <cov1>, ..., <covq>``, one
  row per (step, segment). Steps are consecutive integers; steps ``t < 0``
  form the burn-in history and the window is ``t = 0..T-1``.
* events: ``segment_id, t`` with ``t`` a real time in step units in ``[0, T]``.
* grid field: ``x, y, value``; reflectance: ``x, y, rho_red, rho_nir``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .convolution import CovariatePanel
from .model import EventLog
from .network import LinearNetwork, NeighborConfig, build_network

__all__ = [
    "IngestError",
    "StandardizationStats",
    "GridField",
    "standardize",
    "destandardize",
    "compute_ndvi",
    "assign_grid_to_segments",
    "load_network",
    "load_panel",
    "load_events",
    "load_grid_field",
    "load_reflectance",
    "write_network",
    "write_panel",
    "write_events",
]


class IngestError(ValueError):
    """A malformed or inconsistent input file."""


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """Per-covariate mean and population SD (intercept excluded)."""

    mean: np.ndarray
    std: np.ndarray
    names: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"mean": np.asarray(self.mean).tolist(), "std": np.asarray(self.std).tolist(), "names": list(self.names)}

    @classmethod
    def from_dict(cls, d) -> "StandardizationStats":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float), tuple(d.get("names", ())))

    @classmethod
    def identity(cls, q: int) -> "StandardizationStats":
        return cls(np.zeros(q), np.ones(q))


def standardize(panel: CovariatePanel, stats: StandardizationStats | None = None):
    """Z-score every non-intercept column.

    Statistics come from the likelihood window (burn-in excluded) unless
    ``stats`` is given, in which case they are reused as-is. A constant
    column becomes all zeros.

    Returns
    -------
    (CovariatePanel, StandardizationStats)
    """
    cov = panel.values[:, :, 1:]
    if stats is None:
        win = cov[panel.burn_in:].reshape(-1, panel.q)
        mean = win.mean(axis=0)
        std = win.std(axis=0)
        stats = StandardizationStats(mean, std, tuple(panel.names[1:]))
    mean, std = np.asarray(stats.mean), np.asarray(stats.std)
    if mean.shape != (panel.q,) or std.shape != (panel.q,):
        raise ValueError(f"statistics cover {mean.size} covariates, panel has {panel.q}")
    scale = np.where(std > 0, std, 1.0)
    z = np.where(std > 0, (cov - mean) / scale, 0.0)
    out = np.concatenate([panel.values[:, :, :1], z], axis=2)
    return CovariatePanel(out, burn_in=panel.burn_in, names=panel.names), stats


def destandardize(panel: CovariatePanel, stats: StandardizationStats) -> CovariatePanel:
    """Inverse of :func:`standardize` (constant columns return to their mean)."""
    z = panel.values[:, :, 1:]
    cov = z * np.asarray(stats.std) + np.asarray(stats.mean)
    out = np.concatenate([panel.values[:, :, :1], cov], axis=2)
    return CovariatePanel(out, burn_in=panel.burn_in, names=panel.names)


def compute_ndvi(rho_nir, rho_red):
    """Normalized difference vegetation index ``(nir - red) / (nir + red)``.

    Works elementwise on arrays; returns a float for scalar input.
    """
    nir = np.asarray(rho_nir, dtype=float)
    red = np.asarray(rho_red, dtype=float)
    if np.any((nir < 0) | (nir > 1) | (red < 0) | (red > 1)):
        raise ValueError("reflectances must lie in [0, 1]")
    denom = nir + red
    if np.any(denom == 0):
        raise ValueError("NDVI undefined where both reflectances are zero")
    out = (nir - red) / denom
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class GridField:
    """Values at scattered grid points for one timestamp."""

    points: np.ndarray
    values: np.ndarray
    resolution: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        vals = np.asarray(self.values, dtype=float).ravel()
        if pts.shape[0] != vals.size:
            raise ValueError("points and values must have the same length")
        if pts.shape[0] == 0:
            raise ValueError("grid field is empty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid coordinates must be finite")
        uniq = np.unique(pts, axis=0)
        if uniq.shape[0] != pts.shape[0]:
            raise ValueError("grid field has duplicate coordinates")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)


def assign_grid_to_segments(field: GridField, net: LinearNetwork, chunk: int = 4096) -> np.ndarray:
    """Value of the grid point nearest each segment midpoint.

    Planar Euclidean distance on raw coordinates; ties go to the lowest
    point index.
    """
    mids = net.midpoints()
    out = np.empty(mids.shape[0])
    for lo in range(0, mids.shape[0], chunk):
        d = cdist(mids[lo:lo + chunk], field.points)
        out[lo:lo + chunk] = field.values[np.argmin(d, axis=1)]
    return out


# -- readers -----------------------------------------------------------------

def _read_csv(path, required):
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: missing header row")
        fields = [f.strip() for f in reader.fieldnames]
        missing = [c for c in required if c not in fields]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            rows.append((lineno, {k.strip(): (v.strip() if v is not None else None) for k, v in raw.items() if k is not None}))
    return fields, rows


def _num(path, lineno, row, col, cast=float):
    val = row.get(col)
    try:
        x = cast(val)
    except (TypeError, ValueError):
        raise IngestError(f"{path}: row {lineno}: column {col!r} is not a number ({val!r})") from None
    if cast is float and not np.isfinite(x):
        raise IngestError(f"{path}: row {lineno}: column {col!r} is not finite")
    return x


def _int(path, lineno, row, col):
    x = _num(path, lineno, row, col)
    if x != int(x):
        raise IngestError(f"{path}: row {lineno}: column {col!r} must be an integer ({x})")
    return int(x)


def load_network(path, adjacency_path=None, cfg: NeighborConfig | None = None) -> LinearNetwork:
    """Load a network from CSV or JSON (see module docstring)."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: file not found")
    adjacency = None
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise IngestError(f"{path}: invalid JSON ({e})") from None
        records = doc["segments"] if isinstance(doc, dict) else doc
        if isinstance(doc, dict) and doc.get("adjacency") is not None:
            adjacency = [tuple(p) for p in doc["adjacency"]]
        rows = list(enumerate(records, start=1))
    else:
        _, rows = _read_csv(path, ["segment_id", "x1", "y1", "x2", "y2"])
    geoms = {}
    for lineno, r in rows:
        sid = _int(path, lineno, r, "segment_id")
        if sid in geoms:
            raise IngestError(f"{path}: row {lineno}: duplicate segment_id {sid}")
        geoms[sid] = [_num(path, lineno, r, c) for c in ("x1", "y1", "x2", "y2")]
    if not geoms:
        raise IngestError(f"{path}: no segments")
    n = len(geoms)
    if sorted(geoms) != list(range(n)):
        raise IngestError(f"{path}: segment ids must be 0..{n - 1}")
    if adjacency_path is not None:
        apath = Path(adjacency_path)
        _, arows = _read_csv(apath, ["segment_id", "neighbor_id"])
        adjacency = []
        for lineno, r in arows:
            a, b = _int(apath, lineno, r, "segment_id"), _int(apath, lineno, r, "neighbor_id")
            if not (0 <= a < n and 0 <= b < n):
                raise IngestError(f"{apath}: row {lineno}: unknown segment in pair ({a}, {b})")
            adjacency.append((a, b))
    try:
        return build_network([geoms[k] for k in range(n)], cfg, adjacency=adjacency)
    except ValueError as e:
        raise IngestError(f"{path}: {e}") from None


def load_panel(path, n_segments: int | None = None) -> CovariatePanel:
    """Load a long-format covariate panel; the intercept is added here."""
    path = Path(path)
    fields, rows = _read_csv(path, ["t", "segment_id"])
    names = [f for f in fields if f not in ("t", "segment_id")]
    if not rows:
        raise IngestError(f"{path}: no rows")
    ts, sids, vals = [], [], []
    for lineno, r in rows:
        ts.append(_num(path, lineno, r, "t"))
        sids.append(_int(path, lineno, r, "segment_id"))
        vals.append([_num(path, lineno, r, c) for c in names])
    ts = np.asarray(ts)
    steps = np.unique(ts)
    if steps.size > 1:
        gaps = np.diff(steps)
        if not np.allclose(gaps, gaps[0], rtol=0, atol=1e-9):
            raise IngestError(f"{path}: non-uniform steps (gaps {sorted(set(np.round(gaps, 9).tolist()))})")
        if not np.isclose(gaps[0], 1.0):
            raise IngestError(f"{path}: step spacing is {gaps[0]}; aggregate to unit steps first")
    if np.any(steps != np.round(steps)):
        raise IngestError(f"{path}: steps must be integers")
    n = n_segments if n_segments is not None else max(sids) + 1
    t0 = int(steps[0])
    if t0 > 0:
        raise IngestError(f"{path}: the window must start at t=0 (first step is {t0})")
    cube = np.full((steps.size, n, len(names)), np.nan)
    seen = np.zeros((steps.size, n), dtype=bool)
    for (lineno, _), t, s, v in zip(rows, ts, sids, vals):
        if not 0 <= s < n:
            raise IngestError(f"{path}: row {lineno}: unknown segment_id {s}")
        k = int(t) - t0
        if seen[k, s]:
            raise IngestError(f"{path}: row {lineno}: duplicate row for t={int(t)}, segment {s}")
        seen[k, s] = True
        cube[k, s] = v
    if not seen.all():
        k, s = np.argwhere(~seen)[0]
        raise IngestError(f"{path}: no row for t={k + t0}, segment {s}")
    return CovariatePanel.from_covariates(cube, burn_in=-t0, names=names)


def load_events(path, n_segments: int, window_T: int) -> EventLog:
    """Load events and check them against the network size and window."""
    path = Path(path)
    _, rows = _read_csv(path, ["segment_id", "t"])
    seg, times = [], []
    for lineno, r in rows:
        s = _int(path, lineno, r, "segment_id")
        t = _num(path, lineno, r, "t")
        if not 0 <= s < n_segments:
            raise IngestError(f"{path}: row {lineno}: unknown segment_id {s} (network has {n_segments})")
        if not 0 <= t <= window_T:
            raise IngestError(f"{path}: row {lineno}: time {t} outside [0, {window_T}]")
        seg.append(s)
        times.append(t)
    return EventLog(np.asarray(seg, dtype=np.int64), np.asarray(times, dtype=float), window_T, n_segments)


def load_grid_field(path) -> GridField:
    path = Path(path)
    _, rows = _read_csv(path, ["x", "y", "value"])
    pts = [(_num(path, ln, r, "x"), _num(path, ln, r, "y")) for ln, r in rows]
    vals = [_num(path, ln, r, "value") for ln, r in rows]
    try:
        return GridField(np.asarray(pts), np.asarray(vals))
    except ValueError as e:
        raise IngestError(f"{path}: {e}") from None


def load_reflectance(path) -> GridField:
    """Reflectance CSV to a grid field of NDVI values."""
    path = Path(path)
    _, rows = _read_csv(path, ["x", "y", "rho_red", "rho_nir"])
    pts, vals = [], []
    for ln, r in rows:
        pts.append((_num(path, ln, r, "x"), _num(path, ln, r, "y")))
        try:
            vals.append(compute_ndvi(_num(path, ln, r, "rho_nir"), _num(path, ln, r, "rho_red")))
        except ValueError as e:
            raise IngestError(f"{path}: row {ln}: {e}") from None
    try:
        return GridField(np.asarray(pts), np.asarray(vals))
    except ValueError as e:
        raise IngestError(f"{path}: {e}") from None


# -- writers -----------------------------------------------------------------

def write_network(net: LinearNetwork, path, adjacency_path=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id", "x1", "y1", "x2", "y2"])
        for s in net.segments:
            w.writerow([s.id, repr(s.start[0]), repr(s.start[1]), repr(s.end[0]), repr(s.end[1])])
    if adjacency_path is not None:
        with open(adjacency_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["segment_id", "neighbor_id"])
            for i, nbrs in enumerate(net.adjacency):
                for j in nbrs:
                    if i < j:
                        w.writerow([i, j])


def write_panel(panel: CovariatePanel, path) -> None:
    """Write the covariates (intercept dropped) in long format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "segment_id", *panel.names[1:]])
        for k in range(panel.n_total):
            t = k - panel.burn_in
            for i in range(panel.n_segments):
                w.writerow([t, i, *(repr(float(x)) for x in panel.values[k, i, 1:])])


def write_events(events: EventLog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id", "t"])
        for s, t in zip(events.segment_ids, events.times):
            w.writerow([int(s), repr(float(t))])
