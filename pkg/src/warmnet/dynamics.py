"""Finite-window simulation of the edge-weight process, and graph export.

On a finite node set, iid rate-1 Poisson clocks ring in a uniformly random
order, so one step activates a uniform random node.  Nodes whose
out-neighborhood is not contained in the window are frozen: they are never
activated, so no selection probability is renormalized.
"""

from __future__ import annotations

import csv
import io
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Iterable, Optional

import numpy as np

from .fitness import FitnessField, NodeStream, Tag
from .lattice import ModelParams, NodeId, reach

__all__ = [
    "Window",
    "WeightState",
    "GraphDoc",
    "step",
    "run",
    "relevant_edges",
    "graph_document",
    "export_graph",
    "render",
    "parse_json",
    "FORMATS",
]

FORMATS = ("dot", "json", "csv")
Edge = tuple[NodeId, NodeId]


class Window:
    """Finite truncation: one closed x-interval per layer.

    ``fitness`` defaults to the :class:`FitnessField` of ``params``; any
    object with ``fitness(v)`` and ``log_fitness_row(h, lo, hi)`` works.
    """

    def __init__(self, params: ModelParams, intervals: dict[int, tuple[int, int]], fitness=None):
        self.params = params
        self.intervals = {int(h): (int(lo), int(hi)) for h, (lo, hi) in intervals.items() if lo <= hi}
        if any(h < 0 for h in self.intervals):
            raise ValueError("layers must be >= 0")
        self.nodes: list[NodeId] = [
            NodeId(x, h) for h in sorted(self.intervals) for x in range(self.intervals[h][0], self.intervals[h][1] + 1)
        ]
        self.fitness = fitness if fitness is not None else FitnessField(params.seed, params.gamma)
        self.active: list[NodeId] = []
        self._targets: dict[NodeId, tuple[int, int]] = {}
        for v in self.nodes:
            nxt = self.intervals.get(v.h + 1)
            if nxt is None:
                continue
            r = reach(v.h, params.a)
            if nxt[0] <= v.x - r and v.x + r <= nxt[1]:
                self.active.append(v)
                self._targets[v] = (v.x - r, v.x + r)
        self._log_f: dict[NodeId, np.ndarray] = {}

    @classmethod
    def cone(cls, params: ModelParams, layers: int, width: int = 0) -> "Window":
        """Roots ``(x, 0)`` for ``|x| <= width`` and every layer reachable
        from them, up to ``layers`` layers in total (the last one frozen)."""
        if layers < 0 or width < 0:
            raise ValueError("layers and width must be >= 0")
        intervals = {}
        lo, hi = -width, width
        for h in range(layers):
            intervals[h] = (lo, hi)
            r = reach(h, params.a)
            lo, hi = lo - r, hi + r
        return cls(params, intervals)

    def __contains__(self, v) -> bool:
        iv = self.intervals.get(v.h)
        return iv is not None and iv[0] <= v.x <= iv[1]

    def is_boundary(self, v: NodeId) -> bool:
        return v not in self._targets

    def targets(self, v: NodeId) -> list[NodeId]:
        lo, hi = self._targets[v]
        return [NodeId(x, v.h + 1) for x in range(lo, hi + 1)]

    def target_log_fitness(self, v: NodeId) -> np.ndarray:
        out = self._log_f.get(v)
        if out is None:
            lo, hi = self._targets[v]
            out = np.asarray(self.fitness.log_fitness_row(v.h + 1, lo, hi), dtype=np.float64)
            self._log_f[v] = out
        return out

    def edges(self) -> list[Edge]:
        return [(v, w) for v in self.active for w in self.targets(v)]


@dataclass
class WeightState:
    """Edge weights (all edges of active nodes, starting at 1), activation
    counts and the step counter."""

    weights: dict[Edge, int]
    activations: dict[NodeId, int]
    t: int = 0
    replicate: int = 0
    # per node: (targets, relative fitnesses, current F * W**beta)
    _sel: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def initial(cls, window: Window, replicate: int = 0) -> "WeightState":
        return cls({e: 1 for e in window.edges()}, {v: 0 for v in window.active}, 0, replicate)

    def copy(self) -> "WeightState":
        return WeightState(dict(self.weights), dict(self.activations), self.t, self.replicate)

    def excess(self) -> int:
        return sum(self.weights.values()) - len(self.weights)


def _stream(window: Window, replicate: int) -> NodeStream:
    return NodeStream(window.params.seed, Tag.DYNAMICS, (replicate,))


def _selection(state: WeightState, window: Window, v: NodeId):
    entry = state._sel.get(v)
    if entry is None:
        tgts = window.targets(v)
        logf = window.target_log_fitness(v)
        rel = np.exp(logf - logf.max()).tolist()
        beta = window.params.beta
        sel = [f * float(state.weights[(v, t)]) ** beta for f, t in zip(rel, tgts)]
        entry = state._sel[v] = (tgts, rel, sel)
    return entry


def _apply(state: WeightState, window: Window, u_node: float, u_edge: float) -> None:
    n = len(window.active)
    v = window.active[min(int(u_node * n), n - 1)]
    tgts, rel, sel = _selection(state, window, v)
    cum = list(accumulate(sel))
    k = min(bisect_left(cum, u_edge * cum[-1]), len(tgts) - 1)
    e = (v, tgts[k])
    w = state.weights[e] + 1
    state.weights[e] = w
    sel[k] = rel[k] * float(w) ** window.params.beta
    state.activations[v] += 1
    state.t += 1


def step(state: WeightState, window: Window) -> WeightState:
    """Perform one reinforcement step in place and return the state."""
    if not window.active:
        raise ValueError("window has no activatable node")
    u = _stream(window, state.replicate).uniform(state.t, np.arange(2))
    _apply(state, window, float(u[0]), float(u[1]))
    return state


def run(window: Window, n_steps: int, snapshot_every: int = 0, replicate: int = 0) -> list[WeightState]:
    """Run ``n_steps`` steps from all-ones weights.

    Returns snapshots after every ``snapshot_every`` steps (if positive) and
    always the final state; with ``n_steps == 0`` only the initial state.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    state = WeightState.initial(window, replicate)
    snaps = []
    if n_steps and not window.active:
        raise ValueError("window has no activatable node")
    stream = _stream(window, replicate)
    block = 4096
    for start in range(0, n_steps, block):
        ts = np.arange(start, min(start + block, n_steps), dtype=np.int64)
        u = stream.uniform(ts[:, None], np.arange(2)[None, :])
        for j in range(ts.size):
            _apply(state, window, float(u[j, 0]), float(u[j, 1]))
            if snapshot_every > 0 and state.t % snapshot_every == 0 and state.t < n_steps:
                snaps.append(state.copy())
    snaps.append(state)
    return snaps


def relevant_edges(state: WeightState, share_threshold: float = 0.5) -> set[Edge]:
    """Edges ``(v, w)`` reinforced in more than ``share_threshold`` of the
    activations of ``v``."""
    if not 0 < share_threshold < 1:
        raise ValueError("share_threshold must lie in (0, 1)")
    out = set()
    for (v, w), weight in state.weights.items():
        n = state.activations.get(v, 0)
        if n > 0 and (weight - 1) / n > share_threshold:
            out.add((v, w))
    return out


@dataclass
class GraphDoc:
    """Format-neutral graph: what every export format is rendered from."""

    params: dict
    t: int
    nodes: list[tuple[int, int, float]] = field(default_factory=list)
    edges: list[tuple[int, int, int, int, int]] = field(default_factory=list)


def graph_document(state: WeightState, window: Window) -> GraphDoc:
    nodes = [(v.x, v.h, window.fitness.fitness(v)) for v in window.nodes]
    edges = sorted(
        ((v.x, v.h, w.x, w.h, wt) for (v, w), wt in state.weights.items()),
        key=lambda e: (e[1], e[0], e[3], e[2]),
    )
    return GraphDoc(window.params.as_dict(), state.t, nodes, edges)


def _node_key(x: int, h: int) -> str:
    return f'"{x},{h}"'


def _render_dot(doc: GraphDoc) -> str:
    lines = ["digraph warm {"]
    if doc.nodes:
        lines.append(
            f'  graph [a="{doc.params["a"]}", beta={doc.params["beta"]!r}, '
            f'gamma={doc.params["gamma"]!r}, seed={doc.params["seed"]}, t={doc.t}];'
        )
    for x, h, fit in doc.nodes:
        lines.append(f'  {_node_key(x, h)} [label="({x},{h})", logfitness={math.log(fit)!r}];')
    for fx, fh, tx, th, wt in doc.edges:
        lines.append(f"  {_node_key(fx, fh)} -> {_node_key(tx, th)} [weight={wt}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _render_json(doc: GraphDoc) -> str:
    obj = {
        "params": doc.params,
        "t": doc.t,
        "nodes": [{"x": x, "h": h, "fitness": fit} for x, h, fit in doc.nodes],
        "edges": [{"from": [fx, fh], "to": [tx, th], "weight": wt} for fx, fh, tx, th, wt in doc.edges],
    }
    return json.dumps(obj, indent=1) + "\n"


def _render_csv(doc: GraphDoc) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["from_x", "from_h", "to_x", "to_h", "weight"])
    writer.writerows(doc.edges)
    return buf.getvalue()


_RENDERERS = {"dot": _render_dot, "json": _render_json, "csv": _render_csv}


def render(doc: GraphDoc, fmt: str) -> bytes:
    try:
        renderer = _RENDERERS[fmt.lower()]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}") from None
    return renderer(doc).encode("utf-8")


def export_graph(state: WeightState, window: Window, fmt: str) -> bytes:
    """Serialize ``state`` as DOT, JSON or CSV (UTF-8, LF line endings)."""
    return render(graph_document(state, window), fmt)


def parse_json(data) -> GraphDoc:
    """Inverse of the JSON export."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    obj = json.loads(data)
    nodes = [(int(n["x"]), int(n["h"]), float(n["fitness"])) for n in obj["nodes"]]
    edges = [(int(e["from"][0]), int(e["from"][1]), int(e["to"][0]), int(e["to"][1]), int(e["weight"])) for e in obj["edges"]]
    return GraphDoc(dict(obj["params"]), int(obj["t"]), nodes, edges)


def activation_share(state: WeightState, nodes: Optional[Iterable[NodeId]] = None) -> dict[NodeId, float]:
    """Largest share of a node's activations taken by one out-edge."""
    best: dict[NodeId, int] = {}
    for (v, _), wt in state.weights.items():
        best[v] = max(best.get(v, 0), wt - 1)
    keys = nodes if nodes is not None else state.activations
    return {v: best[v] / state.activations[v] for v in keys if state.activations.get(v, 0) > 0}
