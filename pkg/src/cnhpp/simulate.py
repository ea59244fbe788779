"""Synthetic scenarios for parameter-recovery and distributional checks.

All randomness comes from one ``numpy.random.SeedSequence`` per scenario.
The network uses the first spawned child; replicate ``r`` uses child
``r + 1``, which is split again into covariate and event streams.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .convolution import CovariatePanel
from .estimation import FitError, SolverConfig, fit_cnhpp
from .ingest import standardize, write_events, write_network, write_panel
from .model import EventLog, ModelParams, log_intensity_window
from .network import LinearNetwork, NeighborConfig, WeightMatrix, build_network, build_weights

__all__ = [
    "TOPOLOGIES",
    "ScenarioConfig",
    "Scenario",
    "gen_network",
    "gen_covariates",
    "sample_events",
    "simulate_scenario",
    "write_bundle",
    "recovery_experiment",
    "RecoveryReport",
]

TOPOLOGIES = ("chain", "tree", "lattice")
MAX_CELL_MEAN = 1e3


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_network(topology: str, n: int, seed=0, jitter: float = 0.1) -> LinearNetwork:
    """Synthetic network with ``n`` segments.

    * ``chain``: a path of unit-length segments.
    * ``tree``: segments arranged as a complete binary tree in heap order
      (segment ``k`` touches ``(k - 1) // 2``). Shared endpoints cannot
      produce a tree (siblings would touch), so the adjacency is explicit
      and the drawn segments are disjoint.
    * ``lattice``: edges of a square node grid, row-major, keeping the
      first ``n``; segments meeting at a grid node are all neighbours.

    Node coordinates get a seeded uniform jitter of up to ``jitter`` so that
    midpoint distances vary; adjacency does not depend on the seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    if topology == "chain":
        nodes = np.column_stack([np.arange(n + 1, dtype=float), np.zeros(n + 1)])
        nodes += rng.uniform(-jitter / 2, jitter / 2, size=nodes.shape)
        segs = [np.r_[nodes[k], nodes[k + 1]] for k in range(n)]
        return build_network(segs)
    if topology == "tree":
        depth = int(math.floor(math.log2(n))) + 1
        width = 2.0 ** (depth - 1)
        segs = []
        for k in range(n):
            d = int(math.floor(math.log2(k + 1)))
            pos = k - (2 ** d - 1)
            span = width / 2 ** d
            cx = (pos + 0.5) * span + rng.uniform(-jitter, jitter) * 0.1
            segs.append([cx - 0.25, -float(d), cx + 0.25, -float(d)])
        adjacency = [(k, (k - 1) // 2) for k in range(1, n)]
        return build_network(segs, adjacency=adjacency)
    if topology == "lattice":
        side = 2
        while 2 * side * (side - 1) < n:
            side += 1
        grid = np.stack(np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float), indexing="ij"), -1)
        grid += rng.uniform(-jitter / 2, jitter / 2, size=grid.shape)
        segs = []
        for r in range(side):
            for c in range(side):
                if c + 1 < side:
                    segs.append(np.r_[grid[r, c], grid[r, c + 1]])
                if r + 1 < side:
                    segs.append(np.r_[grid[r, c], grid[r + 1, c]])
        return build_network(segs[:n])
    raise ValueError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")


def gen_covariates(net: LinearNetwork, T_total: int, q: int, rho: float, scale: float, seed=0,
                   burn_in: int = 0) -> CovariatePanel:
    """AR(1) covariates per segment, z-standardized, intercept prepended.

    Each covariate follows ``x(t) = rho x(t-1) + scale * e(t)`` with
    independent standard normal noise across segments and covariates,
    started from its stationary distribution.
    """
    if not -1 < rho < 1:
        raise ValueError("|rho| must be < 1")
    rng = _rng(seed)
    N = net.n_segments
    e = rng.standard_normal((T_total, N, q))
    x = np.empty_like(e)
    x[0] = scale * e[0] / math.sqrt(1.0 - rho * rho)
    for t in range(1, T_total):
        x[t] = rho * x[t - 1] + scale * e[t]
    panel = CovariatePanel.from_covariates(x, burn_in=burn_in)
    panel, _ = standardize(panel)
    return panel


def sample_events(params: ModelParams, panel: CovariatePanel, W: WeightMatrix, K: int, seed=0) -> EventLog:
    """Poisson counts per (segment, step), placed uniformly within the step."""
    rng = _rng(seed)
    lam = log_intensity_window(params, panel, W, K).lam
    if np.max(lam) > MAX_CELL_MEAN:
        t, i = np.unravel_index(np.argmax(lam), lam.shape)
        raise ValueError(f"cell mean {lam[t, i]:.4g} > {MAX_CELL_MEAN:g} at segment {i}, step {t}; scenario misconfigured")
    counts = rng.poisson(lam)
    t_idx, seg = np.nonzero(counts)
    reps = counts[t_idx, seg]
    t_idx = np.repeat(t_idx, reps)
    seg = np.repeat(seg, reps)
    times = t_idx + rng.uniform(0.0, 1.0, size=t_idx.size)
    order = np.lexsort((seg, times))
    return EventLog(seg[order], times[order], panel.n_steps, panel.n_segments)


@dataclass(frozen=True)
class ScenarioConfig:
    topology: str = "chain"
    n_segments: int = 500
    T: int = 200
    burn_in: int = 7
    q: int = 4
    rho: float = 0.8
    noise_scale: float = 1.0
    xi: float = 0.5
    beta: tuple[float, ...] = (-6.0, -1.2, 0.7, 0.9, -0.7)
    seed: int = 0
    K: int = 7
    include_self: bool = True
    weight_scheme: str = "equal"

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; expected one of {TOPOLOGIES}")
        if not -1 < self.rho < 1:
            raise ValueError("|rho| must be < 1")
        if self.burn_in < self.K:
            raise ValueError(f"burn_in={self.burn_in} must be >= K={self.K}")
        if len(self.beta) != self.q + 1:
            raise ValueError(f"beta has {len(self.beta)} entries, expected q+1={self.q + 1}")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    @property
    def true_params(self) -> ModelParams:
        return ModelParams(self.xi, self.beta)

    @property
    def neighbor_config(self) -> NeighborConfig:
        return NeighborConfig(include_self=self.include_self, scheme=self.weight_scheme)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = list(self.beta)
        return d


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    network: LinearNetwork
    weights: WeightMatrix
    panel: CovariatePanel
    events: EventLog


def _streams(cfg: ScenarioConfig, replicates: int):
    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(replicates + 1)
    return children[0], children[1:]


def _replicate(cfg: ScenarioConfig, net, W, stream) -> Scenario:
    cov_ss, ev_ss = stream.spawn(2)
    panel = gen_covariates(net, cfg.burn_in + cfg.T, cfg.q, cfg.rho, cfg.noise_scale, cov_ss, burn_in=cfg.burn_in)
    events = sample_events(cfg.true_params, panel, W, cfg.K, ev_ss)
    return Scenario(cfg, net, W, panel, events)


def simulate_scenario(cfg: ScenarioConfig, replicate: int = 0) -> Scenario:
    """One simulated dataset; ``replicate`` selects the random substream."""
    net_ss, reps = _streams(cfg, replicate + 1)
    net = gen_network(cfg.topology, cfg.n_segments, net_ss)
    W = build_weights(net, cfg.neighbor_config)
    return _replicate(cfg, net, W, reps[replicate])


def write_bundle(scenario: Scenario, out_dir) -> Path:
    """Write ``network.csv``, ``adjacency.csv``, ``panel.csv``, ``events.csv`` and ``truth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_network(scenario.network, out / "network.csv", out / "adjacency.csv")
    write_panel(scenario.panel, out / "panel.csv")
    write_events(scenario.events, out / "events.csv")
    truth = {
        "scenario": scenario.config.to_dict(),
        "params": scenario.config.true_params.to_dict(),
        "n_events": len(scenario.events),
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True))
    return out


@dataclass
class RecoveryReport:
    """Per-replicate estimates and their summary against the truth."""

    config: dict
    grid: list[float]
    xi_hat: list[float]
    beta_hat: list[list[float]]
    std_errors: list[list[float]]
    n_events: list[int]
    converged: list[bool]
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _summarize(cfg: ScenarioConfig, grid, xi_hat, beta_hat, se) -> dict:
    beta_true = np.asarray(cfg.beta)
    B = np.asarray(beta_hat, dtype=float)
    S = np.asarray(se, dtype=float)
    xi_arr = np.asarray(xi_hat, dtype=float)
    step = min(np.diff(grid)) if len(grid) > 1 else 0.0
    rel = np.abs(B - beta_true) / np.abs(beta_true)
    hist = {f"{g:.2f}": int(np.sum(np.isclose(xi_arr, g))) for g in grid}
    return {
        "bias": (B - beta_true).mean(axis=0).tolist(),
        "rmse": np.sqrt(((B - beta_true) ** 2).mean(axis=0)).tolist(),
        "median_rel_error": np.median(rel, axis=0).tolist(),
        "coverage_3se": (np.abs(B - beta_true) <= 3 * S).mean(axis=0).tolist(),
        "xi_histogram": hist,
        "xi_within_one_step": float(np.mean(np.abs(xi_arr - cfg.xi) <= step + 1e-9)),
        "xi_at_truth": float(np.mean(np.isclose(xi_arr, cfg.xi))),
    }


def recovery_experiment(cfg: ScenarioConfig, replicates: int, solver: SolverConfig | None = None,
                        n_jobs: int = 1) -> RecoveryReport:
    """Simulate ``replicates`` datasets from ``cfg``, fit each, summarize.

    The network is shared; covariates and events are redrawn per replicate.
    The report is a deterministic function of ``cfg``, ``replicates`` and
    ``solver`` (``n_jobs`` only changes the wall time).
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    solver = solver or SolverConfig(K=cfg.K)
    if solver.K != cfg.K:
        raise ValueError("solver K must match the scenario K")
    net_ss, reps = _streams(cfg, replicates)
    net = gen_network(cfg.topology, cfg.n_segments, net_ss)
    W = build_weights(net, cfg.neighbor_config)

    def one(stream):
        sc = _replicate(cfg, net, W, stream)
        try:
            fit = fit_cnhpp(sc.panel, sc.events, W, solver)
            conv = True
        except FitError as e:
            fit, conv = e.result, False
        if fit is None:
            nan = [float("nan")] * (cfg.q + 1)
            return float("nan"), nan, nan, len(sc.events), False
        return fit.params_hat.xi, fit.params_hat.beta.tolist(), fit.std_errors.tolist(), len(sc.events), conv

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(one, reps))
    else:
        rows = [one(s) for s in reps]
    xi_hat = [r[0] for r in rows]
    beta_hat = [r[1] for r in rows]
    se = [r[2] for r in rows]
    n_events = [r[3] for r in rows]
    summary = _summarize(cfg, solver.xi_grid, xi_hat, beta_hat, se)
    summary["mean_events"] = float(np.mean(n_events))
    return RecoveryReport(cfg.to_dict(), list(solver.xi_grid), xi_hat, beta_hat, se, n_events,
                          [r[4] for r in rows], summary)
