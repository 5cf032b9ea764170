"""
Synthetic longitudinal study generator

For each individual, node series are produced in topological order over a
101-step latent timeline: source nodes follow a sample path plus bias,
non-source nodes are a bias plus the weighted, lagged sum of their parents.
Gaussian measurement noise is added to every latent step, then a contiguous
window of `n_timepoints` steps is extracted as the individual's visits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from longitudinal_gc.data.dataset import Individual, LongitudinalDataset, standardize
from longitudinal_gc.errors import ConfigError, GraphError
from longitudinal_gc.settings import config_digest, validate_against

logger = logging.getLogger(__name__)

LATENT_STEPS = 101
WINDOW_START_RANGE = (30, 70)
WEIGHT_MAGNITUDE_RANGE = (0.5, 1.0)
BIAS_RANGE = (-0.5, 0.5)
SIGMOID_AMPLITUDE_RANGE = (1.0, 2.0)
SIGMOID_MIDPOINT_RANGE = (40.0, 60.0)
SIGMOID_RATE_RANGE = (0.1, 0.3)

GRAPHS_DIR = Path(__file__).resolve().parent.parent / "graphs"
BUILTIN_GRAPHS = {"chain3": "chain3", "basic7": "basic7", "rtk39": "rtk39", "rtk39-style": "rtk39"}

Edge = Tuple[str, str]


class SamplePath(str, Enum):
    GAUSSIAN_RANDOM_WALK = "gaussian_random_walk"
    SIGMOID = "sigmoid"


# -----------------------------
# Ground-truth graph
# -----------------------------

@dataclass(frozen=True)
class GroundTruthGraph:
    nodes: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    weights: Mapping[Edge, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((str(u), str(v)) for u, v in self.edges))
        object.__setattr__(self, "weights", dict(self.weights))
        self.validate()

    def validate(self) -> None:
        known = set(self.nodes)
        if len(known) != len(self.nodes):
            raise GraphError("Graph node names must be unique")
        if len(set(self.edges)) != len(self.edges):
            raise GraphError("Graph contains duplicate edges")
        for u, v in self.edges:
            if u not in known or v not in known:
                raise GraphError(f"Edge ({u}, {v}) references an unknown node")
            if u == v:
                raise GraphError(f"Self-loop on {u!r}")
        extra = set(self.weights) - set(self.edges)
        if extra:
            raise GraphError(f"Weights given for non-edges: {sorted(extra)}")
        if not nx.is_directed_acyclic_graph(self.to_networkx()):
            raise GraphError(f"Graph {self.name or '<unnamed>'} is not acyclic")

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def parents(self, node: str) -> List[str]:
        return [u for u, v in self.edges if v == node]

    def topological_order(self) -> List[str]:
        rank = {n: i for i, n in enumerate(self.nodes)}
        return list(nx.lexicographical_topological_sort(self.to_networkx(), key=rank.__getitem__))

    def with_weights(self, weights: Mapping[Edge, float]) -> "GroundTruthGraph":
        return GroundTruthGraph(self.nodes, self.edges, dict(weights), self.name)

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "name": self.name,
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
        }
        if self.weights:
            payload["weights"] = [[u, v, float(self.weights[(u, v)])] for u, v in self.edges
                                  if (u, v) in self.weights]
        return payload


def graph_from_dict(payload: Mapping[str, Any], source: str = "") -> GroundTruthGraph:
    validate_against(dict(payload), "graph_schema.json", source=source)
    if "clusters" in payload:
        clusters = payload["clusters"]
        nodes = [n for members in clusters.values() for n in members]
        edges = []
        for parent, child in payload["cluster_edges"]:
            if parent not in clusters or child not in clusters:
                raise GraphError(f"Unknown cluster in edge ({parent}, {child})")
            edges.extend((u, v) for u in clusters[parent] for v in clusters[child])
        nodes.extend(n for n in payload.get("nodes", []) if n not in nodes)
        edges.extend(tuple(e) for e in payload.get("edges", []))
    else:
        nodes = list(payload["nodes"])
        edges = [tuple(e) for e in payload["edges"]]
    weights = {(u, v): float(w) for u, v, w in payload.get("weights", [])}
    return GroundTruthGraph(tuple(nodes), tuple(edges), weights, payload.get("name", ""))


def load_graph_file(path: Path | str) -> GroundTruthGraph:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise GraphError(f"Cannot read graph file {path}: {exc}") from exc
    graph = graph_from_dict(payload, source=str(path))
    if not graph.name:
        graph = GroundTruthGraph(graph.nodes, graph.edges, graph.weights, path.stem)
    return graph


def save_graph_file(graph: GroundTruthGraph, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(graph.to_dict(), f, indent=2)
        f.write("\n")
    return path


def builtin_graph(name: str) -> GroundTruthGraph:
    if name not in BUILTIN_GRAPHS:
        raise GraphError(f"Unknown builtin graph {name!r}; choose from {sorted(BUILTIN_GRAPHS)}")
    return load_graph_file(GRAPHS_DIR / f"{BUILTIN_GRAPHS[name]}.json")


def resolve_graph(name_or_path: str) -> GroundTruthGraph:
    """Builtin name or path to a graph JSON file."""
    if name_or_path in BUILTIN_GRAPHS:
        return builtin_graph(name_or_path)
    if Path(name_or_path).exists():
        return load_graph_file(name_or_path)
    raise GraphError(f"Graph {name_or_path!r} is neither a builtin name nor a readable file")


# -----------------------------
# Simulation config
# -----------------------------

@dataclass(frozen=True)
class SimConfig:
    graph: str = "basic7"
    sample_path: SamplePath = SamplePath.GAUSSIAN_RANDOM_WALK
    n_individuals: int = 2000
    n_timepoints: int = 6
    lag: int = 1
    noise_sigma: float = 0.1
    missing_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sample_path", SamplePath(self.sample_path))

    def validate(self) -> None:
        if self.lag < 1:
            raise ConfigError(f"lag must be >= 1, got {self.lag}")
        if self.n_timepoints < 2:
            raise ConfigError(f"n_timepoints must be >= 2, got {self.n_timepoints}")
        if self.n_individuals < 1:
            raise ConfigError("n_individuals must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not (0.0 <= self.missing_rate < 1.0):
            raise ConfigError(f"missing_rate must lie in [0, 1), got {self.missing_rate}")
        check_window(self.n_timepoints)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["sample_path"] = self.sample_path.value
        return payload

    @classmethod
    def from_settings(cls, section: Mapping[str, Any]) -> "SimConfig":
        return cls(**{k: section[k] for k in cls.__dataclass_fields__ if k in section})


def check_window(n_timepoints: int) -> None:
    last = WINDOW_START_RANGE[1] + n_timepoints - 1
    if last > LATENT_STEPS - 1:
        raise ConfigError(
            f"Observation window overflows the latent timeline: start up to "
            f"{WINDOW_START_RANGE[1]} + {n_timepoints} timepoints ends at t={last} > {LATENT_STEPS - 1}"
        )


def reference_constants() -> Dict[str, Any]:
    """Simulation constants in the layout of the contract's `simulation` section."""
    return {
        "latent_steps": LATENT_STEPS,
        "window_start_range": list(WINDOW_START_RANGE),
        "weight_magnitude_range": list(WEIGHT_MAGNITUDE_RANGE),
        "bias_range": list(BIAS_RANGE),
        "sigmoid": {
            "amplitude_range": list(SIGMOID_AMPLITUDE_RANGE),
            "midpoint_range": list(SIGMOID_MIDPOINT_RANGE),
            "rate_range": list(SIGMOID_RATE_RANGE),
        },
    }


# -----------------------------
# Sampling
# -----------------------------

def sample_weights(edges: Sequence[Edge], rng: np.random.Generator) -> Dict[Edge, float]:
    """w = s * m, s a fair ±1 draw, m ~ Unif[0.5, 1]."""
    edges = [tuple(e) for e in edges]
    if not edges:
        return {}
    signs = rng.integers(0, 2, size=len(edges)) * 2 - 1
    magnitudes = rng.uniform(*WEIGHT_MAGNITUDE_RANGE, size=len(edges))
    return {e: float(s * m) for e, s, m in zip(edges, signs, magnitudes)}


def sample_path(kind: SamplePath, rng: np.random.Generator) -> Tuple[np.ndarray, Dict[str, float]]:
    t = np.arange(LATENT_STEPS, dtype=float)
    if kind is SamplePath.GAUSSIAN_RANDOM_WALK:
        return np.cumsum(rng.standard_normal(LATENT_STEPS)), {}
    amplitude = float(rng.uniform(*SIGMOID_AMPLITUDE_RANGE))
    midpoint = float(rng.uniform(*SIGMOID_MIDPOINT_RANGE))
    rate = float(rng.uniform(*SIGMOID_RATE_RANGE))
    series = amplitude / (1.0 + np.exp(-rate * (t - midpoint)))
    return series, {"amplitude": amplitude, "midpoint": midpoint, "rate": rate}


def lagged(series: np.ndarray, lag: int) -> np.ndarray:
    """series[t - lag], zero before the timeline starts."""
    out = np.zeros_like(series)
    if lag < series.size:
        out[lag:] = series[:series.size - lag]
    return out


@dataclass(frozen=True, eq=False)
class LatentSeries:
    """Full 101-step node series of one individual plus its biases and window start."""
    nodes: Tuple[str, ...]
    series: Dict[str, np.ndarray]
    biases: Dict[str, float]
    window_start: int


def simulate_latent(graph: GroundTruthGraph, weights: Mapping[Edge, float],
                    config: SimConfig, rng: np.random.Generator) -> LatentSeries:
    series: Dict[str, np.ndarray] = {}
    biases: Dict[str, float] = {}

    for node in graph.topological_order():
        bias = float(rng.uniform(*BIAS_RANGE))
        parents = graph.parents(node)
        if not parents:
            path, _ = sample_path(config.sample_path, rng)
            values = bias + path
        else:
            values = np.full(LATENT_STEPS, bias)
            for parent in parents:
                values = values + weights[(parent, node)] * lagged(series[parent], config.lag)
        if config.noise_sigma > 0:
            values = values + rng.normal(0.0, config.noise_sigma, size=LATENT_STEPS)
        series[node] = values
        biases[node] = bias

    start = int(rng.integers(WINDOW_START_RANGE[0], WINDOW_START_RANGE[1] + 1))
    return LatentSeries(tuple(graph.nodes), series, biases, start)


def extract_window(latent: LatentSeries, n_timepoints: int, individual_id: str) -> Individual:
    end = latent.window_start + n_timepoints
    if end > LATENT_STEPS:
        raise ConfigError(f"Window [{latent.window_start}, {end}) overflows t={LATENT_STEPS - 1}")
    block = np.column_stack([latent.series[n][latent.window_start:end] for n in latent.nodes])
    return Individual(
        id=individual_id,
        times=np.arange(latent.window_start, end, dtype=float),
        values=block,
        observed=np.ones_like(block, dtype=bool),
    )


def generate_individual(graph: GroundTruthGraph, weights: Mapping[Edge, float], config: SimConfig,
                        rng: np.random.Generator, individual_id: str = "i00000") -> Individual:
    check_window(config.n_timepoints)
    latent = simulate_latent(graph, weights, config, rng)
    return extract_window(latent, config.n_timepoints, individual_id)


def inject_missingness(data: LongitudinalDataset, rate: float,
                       rng: np.random.Generator) -> LongitudinalDataset:
    """Drop each cell independently with probability `rate`."""
    if not (0.0 <= rate < 1.0):
        raise ConfigError(f"missing rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return data
    out = []
    for ind in data.individuals:
        keep = rng.random(ind.observed.shape) >= rate
        out.append(Individual(ind.id, ind.times, ind.values, ind.observed & keep))
    return LongitudinalDataset(tuple(out), data.variable_names, {**data.meta, "missing_rate": rate})


def _individual_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, index])


def generate_dataset(config: SimConfig,
                     graph: Optional[GroundTruthGraph] = None) -> Tuple[LongitudinalDataset, GroundTruthGraph]:
    """Simulate, drop cells, standardize. Weights are shared by all individuals."""
    config.validate()
    graph = graph if graph is not None else resolve_graph(config.graph)

    if graph.weights and set(graph.weights) == set(graph.edges):
        weights = dict(graph.weights)
    else:
        weights = sample_weights(graph.edges, np.random.default_rng([config.seed, 0]))

    individuals = tuple(
        generate_individual(graph, weights, config, _individual_rng(config.seed, i), f"i{i:05d}")
        for i in range(config.n_individuals)
    )
    data = LongitudinalDataset(individuals, graph.nodes)
    data = inject_missingness(data, config.missing_rate, np.random.default_rng([config.seed, 2]))
    data, standardizer = standardize(data)

    meta = {
        "seed": config.seed,
        "generator": config.to_dict(),
        "generator_digest": config_digest(config.to_dict()),
        "graph": graph.name,
        "missing_rate": config.missing_rate,
        "standardizer": standardizer.to_dict(),
    }
    logger.info("Simulated %d individuals x %d timepoints over graph %s",
                config.n_individuals, config.n_timepoints, graph.name or "<custom>")
    return LongitudinalDataset(data.individuals, data.variable_names, meta), graph.with_weights(weights)
