# main.py - Command-line orchestrator
#
#   python main.py simulate   --out runs/sim  [--graph chain3 --seed 1 ...]
#   python main.py discover   runs/sim/data.csv --out runs/disc [--no-orient --no-prune --reps 4 ...]
#   python main.py baseline   runs/sim/data.csv --out runs/lin
#   python main.py evaluate   --predicted runs/disc/graph.json --truth runs/sim/truth.json
#   python main.py experiment --config grid.yaml --out runs/grid
#
# Exit codes: 0 ok, 2 config error, 3 data/graph error, 4 runtime failure.

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from longitudinal_gc.data.dataset import load_csv, save_csv
from longitudinal_gc.engine import simgen, splits
from longitudinal_gc.engine.forecaster import save_checkpoint
from longitudinal_gc.engine.graph_ops import export_dot, export_json, import_json
from longitudinal_gc.engine.linear_gc import granger_tests
from longitudinal_gc.engine.simgen import SimConfig, generate_dataset, resolve_graph, save_graph_file
from longitudinal_gc.engine.split_runner import SplitResult
from longitudinal_gc.errors import ConfigError, DataError, GraphError
from longitudinal_gc.evaluation.metrics import score
from longitudinal_gc.pipeline import METHODS, evaluate_cell, grid_cells, run_discovery
from longitudinal_gc.settings import config_digest, constant_mismatches, contract_mismatches, load_settings
from longitudinal_gc.telemetry.collector import RunRecorder

logger = logging.getLogger("longitudinal_gc.cli")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


# -----------------------------
# Helpers
# -----------------------------

def _settings(args: argparse.Namespace, overrides: Dict[str, Any]) -> Dict[str, Any]:
    settings = load_settings(args.config, overrides, env=args.env)
    level = args.log_level or settings["logging"]["level"]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    for key, (actual, expected) in contract_mismatches(settings).items():
        logger.info("Setting %s=%r deviates from reference value %r", key, actual, expected)
    for section, module in (("detection", splits), ("simulation", simgen)):
        for key, (actual, expected) in constant_mismatches(section, module.reference_constants()).items():
            logger.warning("Built-in %s=%r deviates from reference value %r", key, actual, expected)
    return settings


def _recorder(args: argparse.Namespace, settings: Dict[str, Any]) -> RunRecorder:
    return RunRecorder(args.out, traces=settings["telemetry"]["traces"])


# -----------------------------
# Commands
# -----------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _settings(args, {
        "simulation.graph": args.graph,
        "simulation.sample_path": args.sample_path,
        "simulation.n_individuals": args.n_individuals,
        "simulation.n_timepoints": args.timepoints,
        "simulation.lag": args.lag,
        "simulation.noise_sigma": args.noise,
        "simulation.missing_rate": args.missing_rate,
        "simulation.seed": args.seed,
    })
    recorder = _recorder(args, settings)
    sim = SimConfig.from_settings(settings["simulation"])

    data, truth = generate_dataset(sim)
    data = data.with_meta(config_digest=config_digest(settings["simulation"]))
    save_csv(data, recorder.path("data.csv"))
    save_graph_file(truth, recorder.path("truth.json"))
    recorder.mark("simulate")
    recorder.write_meta("simulate", settings, {"simulation": sim.seed})

    print(f"✅ Simulated {len(data.individuals)} individuals over {truth.name} "
          f"({len(truth.edges)} edges, observed {data.observed_fraction():.3f}) -> {recorder.run_dir}")
    return EXIT_OK


def cmd_discover(args: argparse.Namespace) -> int:
    settings = _settings(args, {
        "seed": args.seed,
        "detection.repetitions": args.reps,
        "detection.runs": args.runs,
        "detection.alpha": args.alpha,
        "detection.workers": args.workers,
        "forecaster.hidden_size": args.hidden_size,
        "postprocess.keep_threshold": args.keep_threshold,
        "postprocess.orient": args.orient,
        "postprocess.prune": args.prune,
    })
    recorder = _recorder(args, settings)
    data = load_csv(args.data)
    multi = settings["detection"]["runs"] > 1

    def on_split(run: int, result: SplitResult) -> None:
        recorder.log_trace({
            "event": "split", "run": run, "split": result.split.index,
            "repetition": result.split.repetition, "fold": result.split.fold,
            "best_val_loss": result.best_val_loss, "epochs": result.epochs_run,
            "seconds": round(result.seconds, 3),
        })
        if args.save_models and result.model is not None:
            save_checkpoint(result.model, recorder.path(f"models/run{run:02d}_split{result.split.index:02d}.json"))

    print(f"🔍 Discovering causal graph over {data.n_variables} variables, {len(data.individuals)} individuals")
    outcome = run_discovery(data, settings, keep_models=args.save_models, on_result=on_split)

    for i, run in enumerate(outcome.runs):
        prefix = f"runs/run{i:02d}/" if multi else ""
        recorder.write_csv(f"{prefix}delta_mse.csv", run.table.sample_frame())
        recorder.write_csv(f"{prefix}delta_mse_summary.csv", run.table.summary_frame())
        export_json(run.candidate, recorder.path(f"{prefix}candidate.json"))
        if multi:
            export_json(run.graph, recorder.path(f"{prefix}graph.json"))
        untestable = run.table.untestable()
        if untestable:
            print(f"⚠️  Run {i}: {len(untestable)} untestable pair(s): "
                  + ", ".join(f"{u}->{v}" for u, v in untestable))

    export_dot(outcome.graph, recorder.path("graph.dot"))
    export_json(outcome.graph, recorder.path("graph.json"))
    recorder.mark("discover")
    recorder.write_meta("discover", settings, {"base": settings["seed"], "runs": [r.seed for r in outcome.runs]},
                        {"data": str(args.data), "data_meta": data.meta.get("generator_digest"),
                         "table_signatures": [r.table.signature() for r in outcome.runs]})

    print(f"🏛️  {len(outcome.graph.scores)} edge(s): "
          + (", ".join(f"{u}->{v}" for u, v in outcome.graph.edges) or "none"))
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    settings = _settings(args, {
        "baseline.lag_order": args.lag_order,
        "baseline.alpha": args.alpha,
        "baseline.bivariate": args.bivariate,
        "baseline.differencing": args.differencing,
    })
    recorder = _recorder(args, settings)
    b = settings["baseline"]
    data = load_csv(args.data)

    result = granger_tests(data, b["lag_order"], b["bivariate"], b["differencing"])
    graph = result.graph(b["alpha"])
    names = result.model.variable_names
    rows = [(names[u], names[v], result.f_statistic[u, v], result.p_value[u, v])
            for u in range(len(names)) for v in range(len(names)) if u != v]
    recorder.write_csv("f_tests.csv", pd.DataFrame(rows, columns=["cause", "effect", "F", "p"]))
    export_dot(graph, recorder.path("graph.dot"))
    export_json(graph, recorder.path("graph.json"))
    recorder.mark("baseline")
    recorder.write_meta("baseline", settings, {}, {"data": str(args.data)})

    print(f"🏛️  Linear GC: {len(graph.scores)} edge(s) from {result.n_rows} lagged rows")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    _settings(args, {})
    predicted = import_json(args.predicted)
    truth = resolve_graph(str(args.truth))
    result = score(predicted, truth)
    if args.out:
        recorder = RunRecorder(args.out, traces=False)
        recorder.write_json("evaluation.json", {
            "precision": result.precision, "recall": result.recall, "f1": result.f1,
            "counts": result.counts, "predicted": str(args.predicted), "truth": str(args.truth),
        })
        recorder.write_csv("ledger.csv", result.ledger_frame())
    print(f"precision={result.precision:.4f} recall={result.recall:.4f} f1={result.f1:.4f}")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    settings = _settings(args, {"detection.workers": args.workers})
    recorder = _recorder(args, settings)
    methods = tuple(m for m in settings["experiment"]["methods"] if m in METHODS)
    cells = list(grid_cells(settings["experiment"]))
    print(f"🧪 Experiment grid: {len(cells)} cell(s) x {len(methods)} method(s)")

    rows: List[Dict[str, Any]] = []
    for i, cell in enumerate(cells, 1):
        cell_rows = evaluate_cell(settings, cell, methods)
        rows.extend(cell_rows)
        for row in cell_rows:
            recorder.log_trace({"event": "cell", **row})
        recorder.write_csv("results.csv", pd.DataFrame(rows))
        summary = ", ".join(f"{r['method']} f1={r['f1']:.3f}" if r["status"] == "ok" else f"{r['method']} failed"
                            for r in cell_rows)
        print(f"  [Cell {i}/{len(cells)}] {cell.dataset_id}: {summary}")

    recorder.mark("experiment")
    recorder.write_meta("experiment", settings, {"datasets": sorted({c.seed for c in cells})})
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"✅ {len(rows)} result row(s), {failed} failed -> {recorder.path('results.csv')}")
    return EXIT_OK


# -----------------------------
# Parser
# -----------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longitudinal_gc",
                                     description="Granger-causal discovery on longitudinal data")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML settings file")
    common.add_argument("--env", help="environment overlay (dev, test, prod); defaults to $LGC_ENV")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset and its truth graph")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--graph", help="builtin graph name or graph JSON path")
    p.add_argument("--sample-path", choices=["gaussian_random_walk", "sigmoid"])
    p.add_argument("--n-individuals", type=int)
    p.add_argument("--timepoints", type=int)
    p.add_argument("--lag", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--missing-rate", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discover", parents=[common], help="ΔMSE Granger discovery with post-processing")
    p.add_argument("data", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-orient", dest="orient", action="store_const", const=False)
    p.add_argument("--no-prune", dest="prune", action="store_const", const=False)
    p.add_argument("--reps", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--keep-threshold", type=float)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--save-models", action="store_true")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("baseline", parents=[common], help="linear VAR Granger baseline")
    p.add_argument("data", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--lag-order", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bivariate", action="store_const", const=True)
    p.add_argument("--differencing", action="store_const", const=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", parents=[common], help="score a predicted graph against a truth graph")
    p.add_argument("--predicted", type=Path, required=True)
    p.add_argument("--truth", required=True, help="truth graph JSON or builtin graph name")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", parents=[common], help="simulate -> discover -> baseline -> evaluate grid")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        logger.exception("Run failed")
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
