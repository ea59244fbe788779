"""Command-line entry point: ``cnhpp {fit,simulate,predict,bench}``.

Exit codes: 0 success, 1 input or usage error, 2 numerical non-convergence.
A JSON file passed with ``--config`` supplies defaults for any flag (keys
are the flag names with dashes replaced by underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .convolution import HistoryError
from .estimation import FitError, FitResult, SolverConfig, fit_cnhpp, fit_hpp, fit_nhpp, hpp_log_likelihood
from .ingest import IngestError, StandardizationStats, load_events, load_network, load_panel, standardize
from .model import IntensityOverflowError, log_intensity_window, predict_intensity
from .network import NeighborConfig, build_weights
from .simulate import TOPOLOGIES, ScenarioConfig, simulate_scenario, write_bundle
from .validation import model_comparison, percentile_rank

log = logging.getLogger("cnhpp")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _add_neighbor_flags(p):
    p.add_argument("--include-self", dest="include_self", action="store_true", default=None)
    p.add_argument("--no-include-self", dest="include_self", action="store_false")
    p.add_argument("--weight-scheme", choices=["equal", "exponential"], default=None)
    p.add_argument("--snap-tolerance", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cnhpp", description="Convolutional NHPP on linear networks")
    ap.add_argument("--config", help="JSON file with default values for any flag")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="profile-likelihood fit of a data bundle")
    f.add_argument("--bundle", help="directory with network.csv, panel.csv, events.csv (and adjacency.csv)")
    f.add_argument("--network")
    f.add_argument("--adjacency")
    f.add_argument("--panel")
    f.add_argument("--events")
    f.add_argument("--xi-grid", type=_floats, default=None, help="comma-separated decay values")
    f.add_argument("--K", type=int, default=None)
    f.add_argument("--grad-tolerance", type=float, default=None)
    f.add_argument("--max-iterations", type=int, default=None)
    f.add_argument("--baselines", action="store_true", default=None)
    f.add_argument("--no-standardize", dest="standardize", action="store_false", default=None)
    _add_neighbor_flags(f)
    f.add_argument("--out")

    s = sub.add_parser("simulate", help="write a synthetic scenario bundle")
    s.add_argument("--topology", choices=TOPOLOGIES, default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--T", type=int, default=None)
    s.add_argument("--burn-in", type=int, default=None)
    s.add_argument("--K", type=int, default=None)
    s.add_argument("--xi", type=float, default=None)
    s.add_argument("--beta", type=_floats, default=None)
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--scale", type=float, default=None)
    s.add_argument("--seed", type=int, default=None)
    _add_neighbor_flags(s)
    s.add_argument("--out")

    p = sub.add_parser("predict", help="log-intensities for the last steps of a panel")
    p.add_argument("--fit")
    p.add_argument("--panel")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--network", help="override the network recorded in the fit file")
    p.add_argument("--adjacency")
    p.add_argument("--out")

    b = sub.add_parser("bench", help="series vs recurrence wall time")
    b.add_argument("--n", type=int, default=None)
    b.add_argument("--T", type=int, default=None)
    b.add_argument("--K-max", type=int, default=None)
    b.add_argument("--repeats", type=int, default=None)
    b.add_argument("--topology", choices=TOPOLOGIES, default=None)
    b.add_argument("--out")
    return ap


DEFAULTS = {
    "fit": {"xi_grid": None, "K": 7, "grad_tolerance": 1e-8, "max_iterations": 500, "baselines": False,
            "standardize": True, "include_self": True, "weight_scheme": "equal", "snap_tolerance": 1e-6},
    "simulate": {"topology": "chain", "n": 50, "T": 60, "burn_in": None, "K": 7, "xi": 0.5,
                 "beta": [-3.0, -1.2, 0.7, 0.9, -0.7], "rho": 0.8, "scale": 1.0, "seed": 0,
                 "include_self": True, "weight_scheme": "equal", "snap_tolerance": 1e-6},
    "predict": {"steps": None},
    "bench": {"n": 5000, "T": 30, "K_max": 7, "repeats": 5, "topology": "lattice"},
}


def _resolve(args, config: dict) -> dict:
    out = dict(DEFAULTS.get(args.command, {}))
    section = config.get(args.command, config)
    for k, v in section.items():
        if isinstance(v, dict):
            continue
        out[k] = v
    for k, v in vars(args).items():
        if v is not None:
            out[k] = v
    return out


def _require(opts, *keys):
    missing = [k for k in keys if not opts.get(k)]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _preflight(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise IngestError(f"{p}: file not found")


def _neighbor_cfg(opts) -> NeighborConfig:
    return NeighborConfig(snap_tolerance=float(opts["snap_tolerance"]), include_self=bool(opts["include_self"]),
                          scheme=opts["weight_scheme"])


def cmd_fit(opts) -> int:
    if opts.get("bundle"):
        bdir = Path(opts["bundle"])
        opts.setdefault("network", None)
        for key, name in (("network", "network.csv"), ("panel", "panel.csv"), ("events", "events.csv")):
            if not opts.get(key):
                opts[key] = str(bdir / name)
        if not opts.get("adjacency") and (bdir / "adjacency.csv").exists():
            opts["adjacency"] = str(bdir / "adjacency.csv")
    _require(opts, "network", "panel", "events", "out")
    _preflight(opts["network"], opts.get("adjacency"), opts["panel"], opts["events"])
    out = Path(opts["out"])

    ncfg = _neighbor_cfg(opts)
    net = load_network(opts["network"], opts.get("adjacency"), ncfg)
    W = build_weights(net, ncfg)
    panel = load_panel(opts["panel"], net.n_segments)
    stats = StandardizationStats.identity(panel.q)
    if opts["standardize"]:
        panel, stats = standardize(panel)
    events = load_events(opts["events"], net.n_segments, panel.n_steps)
    grid = opts["xi_grid"]
    solver = SolverConfig(
        grad_tolerance=float(opts["grad_tolerance"]),
        max_iterations=int(opts["max_iterations"]),
        K=int(opts["K"]),
        n_jobs=int(opts["threads"]),
        **({"xi_grid": tuple(grid)} if grid else {}),
    )
    log.info("fitting N=%d T=%d events=%d grid=%s", net.n_segments, panel.n_steps, len(events), solver.xi_grid)
    status = EXIT_OK
    try:
        fit = fit_cnhpp(panel, events, W, solver)
    except FitError as e:
        if e.result is None:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_NONCONVERGED
        fit = e.result
    if not fit.all_converged:
        status = EXIT_NONCONVERGED
    fit.standardization = stats.to_dict()
    fit.extra.update({
        "network": str(Path(opts["network"]).resolve()),
        "adjacency": None if not opts.get("adjacency") else str(Path(opts["adjacency"]).resolve()),
        "neighbor_config": {"snap_tolerance": ncfg.snap_tolerance, "include_self": ncfg.include_self,
                            "scheme": ncfg.scheme},
    })

    out.mkdir(parents=True, exist_ok=True)
    (out / "fit.json").write_text(fit.to_json())
    with open(out / "profile.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi", "loglik", "converged", "iterations", "grad_norm"])
        for p in fit.profile:
            w.writerow([p.xi, repr(p.loglik), int(p.converged), p.iterations, repr(p.grad_norm)])
    field = log_intensity_window(fit.params_hat, panel, W, fit.K)
    field.to_csv(out / "intensity.csv")
    percentile_rank(field, events).to_csv(out / "percentiles.csv")

    fits, labels = [fit], ["cNHPP"]
    hpp_rate = hpp_ll = None
    if opts["baselines"]:
        nhpp = fit_nhpp(panel, events, solver)
        if not nhpp.all_converged:
            status = EXIT_NONCONVERGED
        (out / "fit_nhpp.json").write_text(nhpp.to_json())
        fits, labels = [nhpp, fit], ["NHPP", "cNHPP"]
        hpp_rate = fit_hpp(events, net.n_segments, panel.n_steps)
        hpp_ll = hpp_log_likelihood(events, net.n_segments, panel.n_steps)
    table = model_comparison(fits, labels, hpp_rate=hpp_rate, hpp_loglik=hpp_ll)
    (out / "comparison.txt").write_text(table.to_text())
    (out / "comparison.csv").write_text(table.to_csv())
    print(table.to_text(), end="")
    if status != EXIT_OK:
        bad = [p.xi for p in fit.profile if not p.converged]
        print(f"warning: solver did not converge at xi = {bad}", file=sys.stderr)
    return status


def cmd_simulate(opts) -> int:
    _require(opts, "out")
    beta = list(opts["beta"])
    K = int(opts["K"])
    cfg = ScenarioConfig(
        topology=opts["topology"], n_segments=int(opts["n"]), T=int(opts["T"]),
        burn_in=int(opts["burn_in"]) if opts["burn_in"] is not None else K, q=len(beta) - 1,
        rho=float(opts["rho"]), noise_scale=float(opts["scale"]), xi=float(opts["xi"]), beta=tuple(beta),
        seed=int(opts["seed"]), K=K, include_self=bool(opts["include_self"]), weight_scheme=opts["weight_scheme"],
    )
    sc = simulate_scenario(cfg)
    write_bundle(sc, opts["out"])
    print(f"wrote {opts['out']}: N={sc.network.n_segments} T={cfg.T} events={len(sc.events)}")
    return EXIT_OK


def cmd_predict(opts) -> int:
    _require(opts, "fit", "panel", "out")
    _preflight(opts["fit"], opts["panel"], opts.get("network"), opts.get("adjacency"))
    fit = FitResult.from_json(Path(opts["fit"]).read_text())
    net_path = opts.get("network") or fit.extra.get("network")
    adj_path = opts.get("adjacency") or (None if opts.get("network") else fit.extra.get("adjacency"))
    if not net_path:
        raise UsageError("the fit file records no network; pass --network")
    _preflight(net_path, adj_path)
    ncfg = NeighborConfig(**fit.extra.get("neighbor_config", {}))
    net = load_network(net_path, adj_path, ncfg)
    W = build_weights(net, ncfg)
    panel = load_panel(opts["panel"], net.n_segments)
    if fit.standardization is not None:
        panel, _ = standardize(panel, StandardizationStats.from_dict(fit.standardization))
    steps = opts.get("steps")
    field = predict_intensity(fit, panel, W, steps=None if steps is None else int(steps))
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    field.to_csv(out / "prediction.csv")
    print(f"wrote {out / 'prediction.csv'}: {field.n_steps} steps x {field.n_segments} segments")
    return EXIT_OK


def cmd_bench(opts) -> int:
    _require(opts, "out")
    rows = bench_mod.run_benchmark(n=int(opts["n"]), T=int(opts["T"]), K_values=range(0, int(opts["K_max"]) + 1),
                                   repeats=int(opts["repeats"]), topology=opts["topology"])
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"{'K':>3} {'series_s':>10} {'recurrence_s':>13} {'ratio':>7}")
    for r in rows:
        print(f"{r['K']:>3} {r['series_s']:>10.4f} {r['recurrence_s']:>13.4f} {r['ratio']:>7.2f}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = {}
        if args.config:
            _preflight(args.config)
            config = json.loads(Path(args.config).read_text())
        opts = _resolve(args, config)
        if opts.get("threads") is None:
            opts["threads"] = os.cpu_count() or 1
        logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return COMMANDS[args.command](opts)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INPUT
    except (IngestError, HistoryError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except IntensityOverflowError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
