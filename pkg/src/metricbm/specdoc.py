"""Graph specification documents (YAML).

A document holds the graph, the vertex data and named test functions::

    vertices: [o]
    external_edges:
      - {id: e0, vertex: o}
      - {id: e1, vertex: o}
    internal_edges: []
    wentzell:
      o: {a: 0.0, c: 0.0, b: {e0: 1/2, e1: 1/2}}
    functions:
      f: {kind: bump, center: "e0:0.5", width: 1.0}

Numbers may be written as decimals, in exponent form or as exact
fractions (``"1/3"``); they are read into double precision.
"""

from __future__ import annotations

import copy
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import yaml

from .errors import ParseError
from .functions import GraphFunction, from_dict
from .graph import MetricGraph, validate_graph
from .wentzell import WentzellData, from_vertex_spec

TOP_KEYS = {"name", "description", "vertices", "internal_edges", "external_edges", "wentzell",
            "functions", "normalize"}
INTERNAL_KEYS = {"id", "from", "to", "length"}
EXTERNAL_KEYS = {"id", "vertex"}
VERTEX_KEYS = {"a", "b", "c"}


def number(value, where: str) -> float:
    if isinstance(value, bool):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ParseError(f"{where}: expected a number, got {value!r}")


def _check_keys(obj, allowed, where):
    if not isinstance(obj, Mapping):
        raise ParseError(f"{where}: expected a mapping")
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"{where}: unknown key {sorted(map(str, unknown))[0]!r}")


def normalize_document(raw) -> dict:
    """Check the structure and coerce numbers; returns a plain canonical dict."""
    if raw is None:
        raw = {}
    _check_keys(raw, TOP_KEYS, "document")
    doc = {}
    for key in ("name", "description"):
        if key in raw:
            doc[key] = str(raw[key])
    if "vertices" not in raw:
        raise ParseError("document: missing field 'vertices'")
    if not isinstance(raw["vertices"], list):
        raise ParseError("vertices: expected a list")
    doc["vertices"] = [str(v) for v in raw["vertices"]]
    doc["internal_edges"] = []
    for k, e in enumerate(raw.get("internal_edges") or []):
        where = f"internal_edges[{k}]"
        _check_keys(e, INTERNAL_KEYS, where)
        for fld in ("id", "from", "to", "length"):
            if fld not in e:
                raise ParseError(f"{where}: missing field {fld!r}")
        doc["internal_edges"].append({"id": str(e["id"]), "from": str(e["from"]), "to": str(e["to"]),
                                      "length": number(e["length"], f"{where}.length")})
    doc["external_edges"] = []
    for k, e in enumerate(raw.get("external_edges") or []):
        where = f"external_edges[{k}]"
        _check_keys(e, EXTERNAL_KEYS, where)
        for fld in ("id", "vertex"):
            if fld not in e:
                raise ParseError(f"{where}: missing field {fld!r}")
        doc["external_edges"].append({"id": str(e["id"]), "vertex": str(e["vertex"])})
    doc["wentzell"] = {}
    for v, row in (raw.get("wentzell") or {}).items():
        where = f"wentzell.{v}"
        _check_keys(row, VERTEX_KEYS, where)
        b = row.get("b") or {}
        if not isinstance(b, Mapping):
            raise ParseError(f"{where}.b: expected a mapping edge -> value")
        doc["wentzell"][str(v)] = {
            "a": number(row.get("a", 0.0), f"{where}.a"),
            "c": number(row.get("c", 0.0), f"{where}.c"),
            "b": {str(l): number(x, f"{where}.b.{l}") for l, x in b.items()},
        }
    doc["functions"] = {}
    for name, spec in (raw.get("functions") or {}).items():
        fn = from_dict(spec)
        doc["functions"][str(name)] = fn.as_dict()
    if "normalize" in raw:
        doc["normalize"] = bool(raw["normalize"])
    return doc


@dataclass
class SpecDocument:
    doc: dict
    graph: MetricGraph
    wentzell: WentzellData | None
    functions: dict = field(default_factory=dict)

    def function(self, name: str) -> GraphFunction:
        try:
            return self.functions[name]
        except KeyError:
            raise ParseError(f"no function named {name!r}; available: {sorted(self.functions)}") from None


def load_document(doc: Mapping) -> SpecDocument:
    doc = normalize_document(copy.deepcopy(dict(doc)) if doc is not None else None)
    graph = validate_graph(doc)
    data = None
    if doc["wentzell"] or graph.vertices:
        data = from_vertex_spec(graph, doc["wentzell"], normalize=doc.get("normalize", False))
    functions = {name: from_dict(spec) for name, spec in doc["functions"].items()}
    return SpecDocument(doc, graph, data, functions)


def parse_text(text: str) -> SpecDocument:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from None
    return load_document(raw)


def read_spec(path) -> SpecDocument:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return parse_text(text)


def dump_document(doc: Mapping) -> str:
    return yaml.safe_dump(dict(doc), sort_keys=True, default_flow_style=None)


def write_atomic(path, data: str | bytes):
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
