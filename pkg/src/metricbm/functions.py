"""Named test functions on a metric graph.

Symbolic primitives are radial in the path distance from a centre point,
so they are automatically continuous at vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import NotVanishingAtInfinity, ParseError
from .graph import EdgePoint, ExternalEdge, MetricGraph, Vertex, parse_point

PRIMITIVES = ("bump", "hat", "exp_decay", "indicator", "constant", "cosine", "grid")


def distance_profile(graph: MetricGraph, center, edge_id: str, x: np.ndarray) -> np.ndarray:
    """Path distance from ``center`` to the points ``x`` of one edge."""
    e = graph.edge(edge_id)
    x = np.asarray(x, dtype=float)
    if isinstance(e, ExternalEdge):
        d = graph.distance(center, Vertex(e.vertex)) + x
    else:
        dt = graph.distance(center, Vertex(e.tail))
        dh = graph.distance(center, Vertex(e.head))
        d = np.minimum(dt + x, dh + (e.length - x))
    if isinstance(center, EdgePoint) and center.edge == edge_id:
        d = np.minimum(d, np.abs(x - center.x))
    return d


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


@dataclass
class GraphFunction:
    """A named symbolic or tabulated function.

    ``kind`` is one of :data:`PRIMITIVES`; ``params`` holds the numeric
    parameters and ``center`` the text form of the centre point.
    """

    kind: str
    params: dict = field(default_factory=dict)
    center: str | None = None
    table: dict | None = None  # grid primitive: edge -> {"x": [...], "values": [...]}

    def __post_init__(self):
        if self.kind not in PRIMITIVES:
            raise ParseError(f"unknown function primitive {self.kind!r}")

    def _center(self, graph: MetricGraph):
        if self.center is None:
            return Vertex(graph.vertices[0])
        return parse_point(graph, self.center)

    def _radial(self, d):
        p = self.params
        k = self.kind
        if k == "bump":
            r = d / float(p["width"])
            out = np.zeros_like(r)
            inside = r < 1.0
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
            return float(p.get("height", 1.0)) * out
        if k == "hat":
            return float(p.get("height", 1.0)) * np.maximum(0.0, 1.0 - d / float(p["width"]))
        if k == "exp_decay":
            return float(p.get("height", 1.0)) * np.exp(-float(p["rate"]) * d)
        if k == "indicator":
            w, s = float(p["width"]), float(p.get("smoothing", 0.1))
            return float(p.get("height", 1.0)) * (1.0 - _smoothstep((d - w) / s))
        if k == "cosine":
            return float(p.get("height", 1.0)) * np.cos(float(p["frequency"]) * d + float(p.get("phase", 0.0)))
        if k == "constant":
            return np.full_like(d, float(p["value"]))
        raise AssertionError(k)

    def values(self, graph: MetricGraph, edge_id: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "grid":
            row = (self.table or {}).get(edge_id)
            if row is None:
                return np.zeros_like(x)
            right = 0.0 if graph.is_external(edge_id) else None
            return np.interp(x, np.asarray(row["x"], float), np.asarray(row["values"], float), right=right)
        return self._radial(distance_profile(graph, self._center(graph), edge_id, x))

    def support(self, graph: MetricGraph) -> dict:
        """Per external edge, a radius beyond which |f| < 1e-12 * height."""
        out = {}
        if not graph.external:
            return out
        p = self.params
        if self.kind in ("constant", "cosine"):
            raise NotVanishingAtInfinity(f"{self.kind} does not vanish on external edges")
        if self.kind == "grid":
            for e in graph.external:
                row = (self.table or {}).get(e.id)
                out[e.id] = float(row["x"][-1]) if row else 0.0
            return out
        radius = {
            "bump": lambda: float(p["width"]),
            "hat": lambda: float(p["width"]),
            "indicator": lambda: float(p["width"]) + float(p.get("smoothing", 0.1)),
            "exp_decay": lambda: 28.0 / float(p["rate"]),
        }[self.kind]()
        c = self._center(graph)
        for e in graph.external:
            reach = radius - graph.distance(c, Vertex(e.vertex))
            if isinstance(c, EdgePoint) and c.edge == e.id:
                reach = max(reach, c.x + radius)
            out[e.id] = max(reach, 0.0)
        return out

    def sample(self, grid):
        return grid.sample(lambda l, x: self.values(grid.graph, l, x))

    def evaluate_states(self, graph: MetricGraph, kind, ident, x) -> np.ndarray:
        """Vectorized evaluation on encoded states (0 vertex, 1 edge, else zero)."""
        kind = np.asarray(kind)
        ident = np.asarray(ident)
        x = np.asarray(x, dtype=float)
        out = np.zeros(kind.shape)
        for k, v in enumerate(graph.vertices):
            sel = (kind == 0) & (ident == k)
            if np.any(sel):
                l = graph.incident[v][0]
                end = graph.end_of(v, l)
                xv = 0.0 if end.at_origin else graph.edge(l).length
                out[sel] = self.values(graph, l, np.array([xv]))[0]
        for k, e in enumerate(graph.edges):
            sel = (kind == 1) & (ident == k)
            if np.any(sel):
                out[sel] = self.values(graph, e.id, x[sel])
        return out

    def __call__(self, graph: MetricGraph, p) -> float:
        if isinstance(p, Vertex):
            l = graph.incident[p.id][0]
            end = graph.end_of(p.id, l)
            return float(self.values(graph, l, [0.0 if end.at_origin else graph.edge(l).length])[0])
        if isinstance(p, EdgePoint):
            return float(self.values(graph, p.edge, [p.x])[0])
        return 0.0

    def as_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.center is not None:
            out["center"] = self.center
        out.update(self.params)
        if self.table is not None:
            out["edges"] = self.table
        return out


_PARAMS = {
    "bump": ({"width"}, {"height"}),
    "hat": ({"width"}, {"height"}),
    "exp_decay": ({"rate"}, {"height"}),
    "indicator": ({"width"}, {"height", "smoothing"}),
    "cosine": ({"frequency"}, {"height", "phase"}),
    "constant": ({"value"}, set()),
    "grid": ({"edges"}, set()),
}


def from_dict(raw: Mapping) -> GraphFunction:
    raw = dict(raw)
    kind = raw.pop("kind", None)
    if kind not in _PARAMS:
        raise ParseError(f"unknown function primitive {kind!r}")
    center = raw.pop("center", None)
    required, optional = _PARAMS[kind]
    missing = required - set(raw)
    if missing:
        raise ParseError(f"{kind}: missing field {sorted(missing)[0]!r}")
    unknown = set(raw) - required - optional
    if unknown:
        raise ParseError(f"{kind}: unknown key {sorted(unknown)[0]!r}")
    if kind == "grid":
        table = {}
        for eid, row in raw["edges"].items():
            if set(row) != {"x", "values"} or len(row["x"]) != len(row["values"]):
                raise ParseError(f"grid function on edge {eid!r} needs equal-length x and values")
            table[str(eid)] = {"x": [float(v) for v in row["x"]], "values": [float(v) for v in row["values"]]}
        return GraphFunction(kind, {}, center, table)
    params = {k: float(v) for k, v in raw.items()}
    for key in ("width", "rate"):
        if key in params and not params[key] > 0:
            raise ParseError(f"{kind}: {key} must be positive")
    return GraphFunction(kind, params, None if center is None else str(center))


def zero() -> GraphFunction:
    return GraphFunction("hat", {"width": 1.0, "height": 0.0})
