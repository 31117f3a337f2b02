"""Finite metric graphs: combinatorics, local coordinates and the path metric."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import (
    DanglingEndpoint,
    DuplicateId,
    IsolatedVertex,
    NonpositiveLength,
    ParseError,
    UnsupportedLoop,
)

INF = math.inf


@dataclass(frozen=True)
class InternalEdge:
    id: str
    tail: str  # initial vertex, coordinate 0
    head: str  # final vertex, coordinate length
    length: float


@dataclass(frozen=True)
class ExternalEdge:
    id: str
    vertex: str  # sits at coordinate 0; the edge is a copy of [0, inf)

    length = INF


Edge = Union[InternalEdge, ExternalEdge]


@dataclass(frozen=True)
class Vertex:
    id: str

    def __str__(self):
        return f"VERTEX:{self.id}"


@dataclass(frozen=True)
class EdgePoint:
    """Interior point of an edge in local coordinates."""

    edge: str
    x: float

    def __str__(self):
        return f"{self.edge}:{self.x!r}"


GraphPoint = Union[Vertex, EdgePoint]


class _Cemetery:
    """The absorbing state adjoined to the graph; observables vanish there."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DELTA"

    __str__ = __repr__

    def __reduce__(self):
        return (_Cemetery, ())


CEMETERY = _Cemetery()


@dataclass(frozen=True)
class EdgeEnd:
    """One end of an edge, paired with the vertex it is glued to."""

    edge: str
    at_origin: bool  # True: coordinate 0, False: coordinate length
    vertex: str


class MetricGraph:
    """Immutable finite metric graph.

    Vertices and edges are sorted by their string ids. The edge order used
    throughout puts external edges before internal ones.
    """

    def __init__(self, vertices: Iterable[str], internal: Iterable[InternalEdge] = (),
                 external: Iterable[ExternalEdge] = ()):
        self.vertices = tuple(sorted(vertices))
        self.internal = tuple(sorted(internal, key=lambda e: e.id))
        self.external = tuple(sorted(external, key=lambda e: e.id))
        self.edges = self.external + self.internal
        self._edge = {e.id: e for e in self.edges}
        self._vindex = {v: k for k, v in enumerate(self.vertices)}
        self._eindex = {e.id: k for k, e in enumerate(self.edges)}

    def __repr__(self):
        return (f"MetricGraph(|V|={len(self.vertices)}, |I|={len(self.internal)}, "
                f"|E|={len(self.external)})")

    def edge(self, edge_id: str) -> Edge:
        return self._edge[edge_id]

    def vertex_index(self, v: str) -> int:
        return self._vindex[v]

    def edge_index(self, l: str) -> int:
        return self._eindex[l]

    def is_external(self, edge_id: str) -> bool:
        return isinstance(self._edge[edge_id], ExternalEdge)

    @property
    def is_compact(self) -> bool:
        return not self.external

    @cached_property
    def min_length(self) -> float:
        return min((e.length for e in self.internal), default=INF)

    @cached_property
    def incident(self) -> Mapping[str, tuple]:
        """L(v): incident edge ids in edge order."""
        inc = {v: [] for v in self.vertices}
        for e in self.edges:
            for v in endpoints(e):
                inc[v].append(e.id)
        return {v: tuple(ls) for v, ls in inc.items()}

    def degree(self, v: str) -> int:
        return len(self.incident[v])

    @cached_property
    def vl(self) -> tuple:
        """V_L as (vertex, edge) pairs, sorted by vertex then edge order."""
        return tuple((v, l) for v in self.vertices for l in self.incident[v])

    @cached_property
    def edge_ends(self) -> tuple:
        """Edge-end order: externals at 0, internals at 0, internals at length."""
        ends = [EdgeEnd(e.id, True, e.vertex) for e in self.external]
        ends += [EdgeEnd(i.id, True, i.tail) for i in self.internal]
        ends += [EdgeEnd(i.id, False, i.head) for i in self.internal]
        return tuple(ends)

    @cached_property
    def permutation(self) -> np.ndarray:
        """P with f_tilde(V) = P f(V) (V_L order from edge-end order)."""
        return vl_ordering(self)[1]

    def end_of(self, v: str, l: str) -> EdgeEnd:
        e = self._edge[l]
        if isinstance(e, ExternalEdge):
            return EdgeEnd(l, True, v)
        return EdgeEnd(l, e.tail == v, v)

    # -- points -------------------------------------------------------------
    def point(self, edge_id: str, x: float) -> GraphPoint:
        """Canonical point for local coordinate (edge, x)."""
        e = self._edge[edge_id]
        x = float(x)
        if x < 0 or x > e.length or math.isnan(x):
            raise ValueError(f"coordinate {x} outside edge {edge_id!r}")
        if x == 0.0:
            return Vertex(e.vertex if isinstance(e, ExternalEdge) else e.tail)
        if isinstance(e, InternalEdge) and x == e.length:
            return Vertex(e.head)
        return EdgePoint(edge_id, x)

    def canonical(self, p: GraphPoint) -> GraphPoint:
        if isinstance(p, Vertex):
            if p.id not in self._vindex:
                raise KeyError(p.id)
            return p
        return self.point(p.edge, p.x)

    # -- metric -------------------------------------------------------------
    @cached_property
    def vertex_distances(self) -> np.ndarray:
        n = len(self.vertices)
        w = np.full((n, n), INF)
        for i in self.internal:
            a, b = self._vindex[i.tail], self._vindex[i.head]
            if i.length < w[a, b]:
                w[a, b] = w[b, a] = i.length
        rows, cols = np.nonzero(np.isfinite(w))
        m = csr_matrix((w[rows, cols], (rows, cols)), shape=(n, n))
        return shortest_path(m, method="D", directed=False)

    def _anchors(self, p: GraphPoint):
        if isinstance(p, Vertex):
            return [(self._vindex[p.id], 0.0)]
        e = self._edge[p.edge]
        if isinstance(e, ExternalEdge):
            return [(self._vindex[e.vertex], p.x)]
        return [(self._vindex[e.tail], p.x), (self._vindex[e.head], e.length - p.x)]

    def distance(self, p: GraphPoint, q: GraphPoint) -> float:
        return distance(self, p, q)


def endpoints(e: Edge) -> tuple:
    if isinstance(e, ExternalEdge):
        return (e.vertex,)
    return (e.tail, e.head)


def validate_graph(raw: Mapping) -> MetricGraph:
    """Build a :class:`MetricGraph` from a parsed graph-spec mapping.

    ``raw`` carries ``vertices`` (list of ids), ``internal_edges`` (mappings
    with ``id``, ``from``, ``to``, ``length``) and ``external_edges``
    (mappings with ``id``, ``vertex``).
    """
    vertices = [str(v) for v in raw.get("vertices", [])]
    seen = set()
    for v in vertices:
        if v in seen:
            raise DuplicateId(f"duplicate vertex id {v!r}")
        seen.add(v)

    edge_ids = set()
    internal, external = [], []
    for k, spec in enumerate(raw.get("internal_edges", []) or []):
        for field in ("id", "from", "to", "length"):
            if field not in spec:
                raise ParseError(f"internal_edges[{k}]: missing field {field!r}")
        eid, tail, head = str(spec["id"]), str(spec["from"]), str(spec["to"])
        length = float(spec["length"])
        if eid in edge_ids:
            raise DuplicateId(f"duplicate edge id {eid!r}")
        edge_ids.add(eid)
        for v in (tail, head):
            if v not in seen:
                raise DanglingEndpoint(f"edge {eid!r} references unknown vertex {v!r}")
        if tail == head:
            raise UnsupportedLoop(f"edge {eid!r} is a loop at {tail!r}; subdivide it "
                                  "with an auxiliary Kirchhoff vertex")
        if not length > 0 or not math.isfinite(length):
            raise NonpositiveLength(f"edge {eid!r} has length {length}")
        internal.append(InternalEdge(eid, tail, head, length))
    for k, spec in enumerate(raw.get("external_edges", []) or []):
        for field in ("id", "vertex"):
            if field not in spec:
                raise ParseError(f"external_edges[{k}]: missing field {field!r}")
        eid, v = str(spec["id"]), str(spec["vertex"])
        if eid in edge_ids:
            raise DuplicateId(f"duplicate edge id {eid!r}")
        edge_ids.add(eid)
        if v not in seen:
            raise DanglingEndpoint(f"edge {eid!r} references unknown vertex {v!r}")
        external.append(ExternalEdge(eid, v))

    overlap = edge_ids & seen
    if overlap:
        raise DuplicateId(f"ids used for both vertices and edges: {sorted(overlap)}")
    g = MetricGraph(vertices, internal, external)
    for v in g.vertices:
        if not g.incident[v]:
            raise IsolatedVertex(f"vertex {v!r} has no incident edge")
    assert len(g.vl) == len(g.external) + 2 * len(g.internal)
    return g


def distance(graph: MetricGraph, p: GraphPoint, q: GraphPoint) -> float:
    """Length of a shortest walk from p to q (``inf`` if disconnected)."""
    p, q = graph.canonical(p), graph.canonical(q)
    if p == q:
        return 0.0
    best = INF
    if isinstance(p, EdgePoint) and isinstance(q, EdgePoint) and p.edge == q.edge:
        best = abs(p.x - q.x)
    d = graph.vertex_distances
    for a, da in graph._anchors(p):
        for b, db in graph._anchors(q):
            best = min(best, da + d[a, b] + db)
    return float(best)


def vl_ordering(graph: MetricGraph):
    """Return V_L (ordered) and the permutation matrix P.

    Row ``k`` of P selects the edge end that corresponds to the ``k``-th
    element of V_L, so that ``P @ f(V)`` lists boundary values in V_L order.
    """
    ends = graph.edge_ends
    col = {(end.vertex, end.edge): j for j, end in enumerate(ends)}
    n = len(ends)
    p = np.zeros((n, n))
    for k, vl in enumerate(graph.vl):
        p[k, col[vl]] = 1.0
    return graph.vl, p


def parse_point(graph: MetricGraph, text: str) -> GraphPoint:
    """Parse ``EDGE:X`` or ``VERTEX:ID`` into a canonical point."""
    head, sep, tail = str(text).partition(":")
    if not sep:
        raise ParseError(f"point {text!r} is not of the form EDGE:X or VERTEX:ID")
    if head == "VERTEX":
        if tail not in graph.vertices:
            raise DanglingEndpoint(f"unknown vertex {tail!r}")
        return Vertex(tail)
    try:
        graph.edge(head)
    except KeyError:
        raise DanglingEndpoint(f"unknown edge {head!r}") from None
    try:
        x = float(tail)
    except ValueError:
        raise ParseError(f"bad coordinate in {text!r}") from None
    try:
        return graph.point(head, x)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def format_point(p) -> str:
    if p is CEMETERY:
        return "DELTA"
    return str(p)
