"""
Causal graph post-processing

CausalGraph plus the two clean-up passes applied to the candidate edges:
orientation of bidirectional pairs and pruning of indirect causes. Also run
aggregation and DOT / JSON export.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import graphviz
import networkx as nx

from longitudinal_gc.errors import GraphError

logger = logging.getLogger(__name__)

Edge = Tuple[str, str]
DEFAULT_MAX_PATHS = 10_000


# -----------------------------
# Graph Type
# -----------------------------

@dataclass(frozen=True)
class CausalGraph:
    nodes: Tuple[str, ...]
    scores: Dict[Edge, float] = field(default_factory=dict)
    frequency: Dict[Edge, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "scores", {tuple(e): float(s) for e, s in self.scores.items()})
        object.__setattr__(self, "frequency", {tuple(e): float(f) for e, f in self.frequency.items()})
        self.validate()

    def validate(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("Duplicate node names")
        known = set(self.nodes)
        for u, v in self.scores:
            if u == v:
                raise GraphError(f"Self-loop on {u!r}")
            if u not in known or v not in known:
                raise GraphError(f"Edge ({u}, {v}) references an unknown node")
        for edge, freq in self.frequency.items():
            if edge not in self.scores:
                raise GraphError(f"Frequency recorded for absent edge {edge}")
            if not 0.0 <= freq <= 1.0:
                raise GraphError(f"Frequency {freq} of {edge} outside [0, 1]")

    # ---- Accessors ----

    def _order(self, edge: Edge) -> Tuple[int, int]:
        return self.nodes.index(edge[0]), self.nodes.index(edge[1])

    @property
    def edges(self) -> List[Edge]:
        """Edges in node order (row-major)."""
        return sorted(self.scores, key=self._order)

    def has_edge(self, u: str, v: str) -> bool:
        return (u, v) in self.scores

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for (u, v), s in self.scores.items():
            g.add_edge(u, v, score=s)
        return g

    def restricted_to(self, edges: Iterable[Edge]) -> "CausalGraph":
        keep = set(edges)
        return CausalGraph(
            self.nodes,
            {e: s for e, s in self.scores.items() if e in keep},
            {e: f for e, f in self.frequency.items() if e in keep},
        )


# -----------------------------
# Orientation
# -----------------------------

def orient_bidirectional(g: CausalGraph) -> CausalGraph:
    """Keep the direction with the larger score for every two-way pair."""
    drop = set()
    for u, v in g.edges:
        if (v, u) not in g.scores or (u, v) in drop or (v, u) in drop:
            continue
        forward, backward = g.scores[(u, v)], g.scores[(v, u)]
        if forward > backward:
            drop.add((v, u))
        elif backward > forward:
            drop.add((u, v))
        else:
            keep = (u, v) if u < v else (v, u)
            logger.warning("Score tie between %s->%s and %s->%s; keeping %s->%s", u, v, v, u, *keep)
            drop.add((keep[1], keep[0]))
    return g.restricted_to(e for e in g.scores if e not in drop)


# -----------------------------
# Indirect-cause pruning
# -----------------------------

def _has_stronger_alternative(graph: nx.DiGraph, scores: Mapping[Edge, float], u: str, v: str,
                              max_paths: int) -> bool:
    threshold = scores[(u, v)]
    seen = 0
    for source, target in ((u, v), (v, u)):
        for path in nx.all_simple_paths(graph, source, target):
            if len(path) < 3:
                continue
            seen += 1
            if seen > max_paths:
                logger.warning("Path cap %d reached while checking %s->%s; deciding on paths so far",
                               max_paths, u, v)
                return False
            if any(threshold < scores[(a, b)] for a, b in zip(path, path[1:])):
                return True
    return False


def prune_indirect(g: CausalGraph, max_paths: int = DEFAULT_MAX_PATHS) -> CausalGraph:
    """Drop (u, v) when an alternative u~>v or v~>u path carries an edge scored above it.

    Edges are visited in ascending (score, u, v) order and removals apply
    immediately to the graph seen by later checks.
    """
    if max_paths < 1:
        raise GraphError("max_paths must be >= 1")
    scores = dict(g.scores)
    graph = g.to_networkx()
    for u, v in sorted(g.scores, key=lambda e: (g.scores[e], *g._order(e))):
        graph.remove_edge(u, v)
        if _has_stronger_alternative(graph, scores, u, v, max_paths):
            del scores[(u, v)]
            logger.debug("Pruned indirect edge %s->%s", u, v)
        else:
            graph.add_edge(u, v)
    return g.restricted_to(scores)


# -----------------------------
# Multi-run aggregation
# -----------------------------

def aggregate_runs(graphs: Sequence[CausalGraph], keep_threshold: float = 0.5) -> CausalGraph:
    """Edges present in more than `keep_threshold` of the runs; score is the mean over runs holding it."""
    if not graphs:
        raise GraphError("No graphs to aggregate")
    if not 0.0 <= keep_threshold < 1.0:
        raise GraphError("keep_threshold must lie in [0, 1)")
    node_set = set(graphs[0].nodes)
    if any(set(g.nodes) != node_set for g in graphs):
        raise GraphError("Cannot aggregate graphs over different node sets")
    nodes = graphs[0].nodes if all(g.nodes == graphs[0].nodes for g in graphs) else tuple(sorted(node_set))

    held: Dict[Edge, List[float]] = {}
    for g in graphs:
        for edge, s in g.scores.items():
            held.setdefault(edge, []).append(s)

    n = len(graphs)
    scores, frequency = {}, {}
    for edge, values in held.items():
        freq = len(values) / n
        if freq > keep_threshold:
            scores[edge] = math.fsum(sorted(values)) / len(values) if all(map(math.isfinite, values)) \
                else max(values)
            frequency[edge] = freq
    return CausalGraph(nodes, scores, frequency)


# -----------------------------
# Export / Import
# -----------------------------

def _label(g: CausalGraph, edge: Edge) -> str:
    if edge in g.frequency:
        return f"{g.frequency[edge]:.2f}"
    s = g.scores[edge]
    return f"{s:.3f}" if math.isfinite(s) else ("inf" if s > 0 else "-inf")


def to_dot(g: CausalGraph, name: str = "causal_graph") -> graphviz.Digraph:
    dot = graphviz.Digraph(name=name)
    for node in g.nodes:
        dot.node(node)
    for u, v in g.edges:
        dot.edge(u, v, label=_label(g, (u, v)))
    return dot


def export_dot(g: CausalGraph, path: Path | str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(to_dot(g).source, encoding="utf-8")
    except OSError as exc:
        raise GraphError(f"Cannot write {path}: {exc}") from exc
    return path


def _encode_score(s: float) -> Any:
    return s if math.isfinite(s) else ("inf" if s > 0 else "-inf")


def graph_to_dict(g: CausalGraph) -> Dict[str, Any]:
    return {
        "nodes": list(g.nodes),
        "edges": [
            {"from": u, "to": v, "t": _encode_score(g.scores[(u, v)]), "freq": g.frequency.get((u, v))}
            for u, v in g.edges
        ],
    }


def graph_from_payload(payload: Mapping[str, Any]) -> CausalGraph:
    try:
        nodes = tuple(payload["nodes"])
        scores, frequency = {}, {}
        for item in payload["edges"]:
            edge = (item["from"], item["to"])
            scores[edge] = float(item["t"])
            if item.get("freq") is not None:
                frequency[edge] = float(item["freq"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"Malformed graph payload: {exc}") from exc
    return CausalGraph(nodes, scores, frequency)


def export_json(g: CausalGraph, path: Path | str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(graph_to_dict(g), f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise GraphError(f"Cannot write {path}: {exc}") from exc
    return path


def import_json(path: Path | str) -> CausalGraph:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise GraphError(f"Cannot read graph {path}: {exc}") from exc
    return graph_from_payload(payload)
