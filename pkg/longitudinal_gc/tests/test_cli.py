import json

import pandas as pd
import pytest

from main import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main

TINY_CONFIG = """\
forecaster:
  hidden_size: 8
  max_epochs: 2
  patience: 1
  batch_size: 16
  learning_rate: 3.0e-3
detection:
  repetitions: 1
  workers: 1
telemetry:
  traces: true
"""


# -----------------------------
# Fixtures
# -----------------------------

@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "tiny.yaml"
    config.write_text(TINY_CONFIG, encoding="utf-8")
    sim = root / "sim"
    code = main(["simulate", "--out", str(sim), "--graph", "chain3", "--n-individuals", "20",
                 "--timepoints", "5", "--seed", "1", "--log-level", "WARNING"])
    assert code == EXIT_OK
    return root, config, sim


def discover(workspace, out, *extra):
    _, config, sim = workspace
    return main(["discover", str(sim / "data.csv"), "--out", str(out), "--config", str(config),
                 "--log-level", "WARNING", *extra])


# -----------------------------
# simulate
# -----------------------------

def test_simulate_writes_dataset_truth_and_meta(workspace):
    _, _, sim = workspace
    for name in ("data.csv", "data.meta.json", "truth.json", "run_meta.json"):
        assert (sim / name).exists(), name
    frame = pd.read_csv(sim / "data.csv")
    assert list(frame.columns) == ["individual_id", "time", "x", "y", "z"]
    assert len(frame) == 20 * 5
    meta = json.loads((sim / "data.meta.json").read_text())
    assert meta["seed"] == 1 and "config_digest" in meta


def test_simulate_is_deterministic(workspace, tmp_path):
    _, _, sim = workspace
    again = tmp_path / "again"
    assert main(["simulate", "--out", str(again), "--graph", "chain3", "--n-individuals", "20",
                 "--timepoints", "5", "--seed", "1", "--log-level", "WARNING"]) == EXIT_OK
    for name in ("data.csv", "data.meta.json", "truth.json"):
        assert (again / name).read_bytes() == (sim / name).read_bytes(), name


def test_simulate_missing_rate(tmp_path):
    out = tmp_path / "sparse"
    assert main(["simulate", "--out", str(out), "--graph", "chain3", "--n-individuals", "200",
                 "--timepoints", "6", "--missing-rate", "0.3", "--log-level", "WARNING"]) == EXIT_OK
    frame = pd.read_csv(out / "data.csv")
    observed = frame[["x", "y", "z"]].notna().to_numpy().mean()
    assert observed == pytest.approx(0.7, abs=0.05)


# -----------------------------
# Exit codes
# -----------------------------

def test_invalid_config_exits_with_config_code(workspace, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("forecaster:\n  hidden_size: 0\n", encoding="utf-8")
    _, _, sim = workspace
    code = main(["discover", str(sim / "data.csv"), "--out", str(tmp_path / "o"), "--config", str(bad)])
    assert code == EXIT_CONFIG


def test_missing_data_file_exits_with_data_code(tmp_path):
    code = main(["baseline", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "o"),
                 "--log-level", "WARNING"])
    assert code == EXIT_DATA


def test_window_overflow_is_config_error(tmp_path):
    code = main(["simulate", "--out", str(tmp_path / "o"), "--timepoints", "40", "--log-level", "WARNING"])
    assert code == EXIT_CONFIG


# -----------------------------
# discover / baseline / evaluate
# -----------------------------

def test_discover_is_reproducible_and_writes_artifacts(workspace):
    root, _, _ = workspace
    a, b = root / "disc_a", root / "disc_b"
    assert discover(workspace, a) == EXIT_OK
    assert discover(workspace, b) == EXIT_OK
    for name in ("delta_mse.csv", "delta_mse_summary.csv", "candidate.json", "graph.json", "graph.dot"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name

    samples = pd.read_csv(a / "delta_mse.csv")
    assert len(samples) == 6 * 5
    meta = json.loads((a / "run_meta.json").read_text())
    assert meta["command"] == "discover"
    assert len(meta["table_signatures"]) == 1
    assert meta["table_signatures"] == json.loads((b / "run_meta.json").read_text())["table_signatures"]
    assert (a / "trace.jsonl").read_text().count("\n") == 5


def test_post_processing_only_removes_edges(workspace):
    root, _, _ = workspace
    full, raw = root / "disc_full", root / "disc_raw"
    assert discover(workspace, full) == EXIT_OK
    assert discover(workspace, raw, "--no-orient", "--no-prune") == EXIT_OK

    def edges(path):
        return {(e["from"], e["to"]) for e in json.loads(path.read_text())["edges"]}

    assert edges(full / "graph.json") <= edges(raw / "graph.json")
    assert edges(raw / "graph.json") == edges(raw / "candidate.json")


def test_discover_saves_checkpoints_on_request(workspace):
    root, _, _ = workspace
    out = root / "disc_models"
    assert discover(workspace, out, "--save-models") == EXIT_OK
    assert len(list((out / "models").glob("run00_split*.json"))) == 5


def test_multiple_runs_write_per_run_outputs(workspace):
    root, _, _ = workspace
    out = root / "disc_runs"
    assert discover(workspace, out, "--runs", "2") == EXIT_OK
    for run in ("run00", "run01"):
        assert (out / "runs" / run / "delta_mse.csv").exists()
    payload = json.loads((out / "graph.json").read_text())
    assert all(e["freq"] is not None and e["freq"] > 0.5 for e in payload["edges"])


def test_baseline_and_evaluate(workspace):
    root, _, sim = workspace
    out = root / "lin"
    assert main(["baseline", str(sim / "data.csv"), "--out", str(out), "--log-level", "WARNING"]) == EXIT_OK
    tests = pd.read_csv(out / "f_tests.csv")
    assert len(tests) == 6
    assert list(tests.columns) == ["cause", "effect", "F", "p"]

    scored = root / "scored"
    code = main(["evaluate", "--predicted", str(out / "graph.json"), "--truth", str(sim / "truth.json"),
                 "--out", str(scored), "--log-level", "WARNING"])
    assert code == EXIT_OK
    report = json.loads((scored / "evaluation.json").read_text())
    assert 0.0 <= report["f1"] <= 1.0
    assert (scored / "ledger.csv").exists()


def test_evaluate_against_builtin_graph_with_other_nodes_fails(workspace, tmp_path):
    root, _, sim = workspace
    out = tmp_path / "lin"
    main(["baseline", str(sim / "data.csv"), "--out", str(out), "--log-level", "WARNING"])
    code = main(["evaluate", "--predicted", str(out / "graph.json"), "--truth", "basic7",
                 "--log-level", "WARNING"])
    assert code == EXIT_DATA


# -----------------------------
# experiment
# -----------------------------

def test_experiment_records_failed_cells_and_keeps_going(tmp_path):
    grid = tmp_path / "grid.yaml"
    grid.write_text(
        "simulation:\n"
        "  n_individuals: 30\n"
        "experiment:\n"
        "  graphs: [chain3]\n"
        "  sample_paths: [gaussian_random_walk]\n"
        "  lags: [1, 2]\n"
        "  noise_sigmas: [0.1]\n"
        "  missing_rates: [0.0]\n"
        "  timepoints: [6, 40]\n"
        "  repetitions: [1]\n"
        "  seeds: [0]\n"
        "  methods: [linear_gc]\n",
        encoding="utf-8",
    )
    out = tmp_path / "exp"
    code = main(["experiment", "--config", str(grid), "--out", str(out), "--log-level", "WARNING"])
    assert code == EXIT_OK
    results = pd.read_csv(out / "results.csv")
    assert len(results) == 4
    assert (results["status"] == "ok").sum() == 2
    failed = results[results["status"] != "ok"]
    assert set(failed["timepoints"]) == {40}
    assert all(s.startswith("failed:") for s in failed["status"])
