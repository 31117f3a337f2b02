"""Wentzell vertex data and the trap / holding / instantaneous classification."""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Union

from .errors import DirichletExcluded, KeyMismatch, NegativeCoefficient, NormalizationViolation
from .graph import MetricGraph

NORMALIZATION_TOL = 1e-12
SNAP_TOL = 1e-15


@dataclass(frozen=True)
class WentzellData:
    """Per-vertex boundary coefficients.

    The condition at ``v`` is
    ``a[v] f(v) - sum_l b[(v, l)] f'(v_l) + c[v] f''(v) / 2 = 0``
    with ``f'(v_l)`` the inward derivative along ``l``.
    """

    a: Mapping[str, float]
    b: Mapping[tuple, float]
    c: Mapping[str, float]

    def b_sum(self, v: str, graph: MetricGraph) -> float:
        return sum(self.b[(v, l)] for l in graph.incident[v])

    def as_dict(self, graph: MetricGraph) -> dict:
        return {
            v: {"a": self.a[v], "c": self.c[v],
                "b": {l: self.b[(v, l)] for l in graph.incident[v]}}
            for v in graph.vertices
        }


@dataclass(frozen=True)
class Trap:
    pass


@dataclass(frozen=True)
class HoldingKilling:
    rate: float  # per unit time


@dataclass(frozen=True)
class Instantaneous:
    pass


VertexClass = Union[Trap, HoldingKilling, Instantaneous]


def _snap(x: float) -> float:
    x = float(x)
    return 0.0 if abs(x) < SNAP_TOL else x


def validate_wentzell(graph: MetricGraph, a: Mapping, b: Mapping, c: Mapping,
                      normalize: bool = False) -> WentzellData:
    """Check coefficients against the graph and the normalization constraint.

    ``b`` is keyed by ``(vertex, edge)`` pairs. With ``normalize=True`` each
    vertex row is divided by its sum before the normalization check.
    """
    vset = set(graph.vertices)
    if set(a) != vset or set(c) != vset:
        missing = sorted(vset ^ (set(a) & set(c)))
        raise KeyMismatch(f"a/c keys do not match the vertex set: {missing}")
    vlset = set(graph.vl)
    if set(b) != vlset:
        raise KeyMismatch(f"b keys do not match V_L: {sorted(vlset ^ set(b))}")

    a_ = {v: _snap(a[v]) for v in graph.vertices}
    b_ = {k: _snap(b[k]) for k in graph.vl}
    c_ = {v: _snap(c[v]) for v in graph.vertices}

    for v in graph.vertices:
        vals = [a_[v], c_[v]] + [b_[(v, l)] for l in graph.incident[v]]
        if min(vals) < 0:
            raise NegativeCoefficient(f"vertex {v!r} has a negative coefficient")
        total = sum(vals)
        if normalize and total > 0:
            a_[v] /= total
            c_[v] /= total
            for l in graph.incident[v]:
                b_[(v, l)] /= total
            total = 1.0
        if a_[v] >= 1.0 or (total > 0 and a_[v] / total >= 1.0):
            raise DirichletExcluded(
                f"vertex {v!r}: a_v = {a_[v]} (Dirichlet condition is not a Brownian motion)")
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NormalizationViolation(
                f"vertex {v!r}: a + sum(b) + c = {total!r} != 1")

    return WentzellData(MappingProxyType(a_), MappingProxyType(b_), MappingProxyType(c_))


def classify_vertex(data: WentzellData, graph: MetricGraph, v: str) -> VertexClass:
    b_sum = data.b_sum(v, graph)
    if b_sum > 0:
        return Instantaneous()
    if data.a[v] == 0:
        return Trap()
    return HoldingKilling(data.a[v] / data.c[v])


def holding_coefficients(rate: float) -> tuple:
    """(a, c) of a holding vertex with the given exponential rate."""
    return rate / (1.0 + rate), 1.0 / (1.0 + rate)


def kirchhoff(graph: MetricGraph, weights: Mapping | None = None) -> WentzellData:
    """Kirchhoff (a = c = 0) data, b proportional to ``weights`` (default equal)."""
    a, b, c = {}, {}, {}
    for v in graph.vertices:
        inc = graph.incident[v]
        w = [1.0 if weights is None else float(weights.get((v, l), 1.0)) for l in inc]
        s = sum(w)
        a[v] = c[v] = 0.0
        for l, wl in zip(inc, w):
            b[(v, l)] = wl / s
    return validate_wentzell(graph, a, b, c)


def uniform_vertex(graph: MetricGraph, v: str, a: float, c: float) -> dict:
    """Coefficients for ``v`` with the leftover mass split evenly over edges."""
    inc = graph.incident[v]
    rest = (1.0 - a - c) / len(inc)
    return {"a": a, "c": c, "b": {l: rest for l in inc}}


def from_vertex_spec(graph: MetricGraph, spec: Mapping, normalize: bool = False) -> WentzellData:
    """Build data from ``{v: {"a": .., "c": .., "b": {edge: ..}}}``."""
    a, b, c = {}, {}, {}
    for v, row in spec.items():
        a[v] = row.get("a", 0.0)
        c[v] = row.get("c", 0.0)
        for l, val in (row.get("b") or {}).items():
            b[(v, l)] = val
    return validate_wentzell(graph, a, b, c, normalize=normalize)
