import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricbm.errors import (
    DanglingEndpoint,
    DuplicateId,
    IsolatedVertex,
    NonpositiveLength,
    ParseError,
    UnsupportedLoop,
)
from metricbm.graph import (
    CEMETERY,
    EdgePoint,
    Vertex,
    format_point,
    parse_point,
    validate_graph,
    vl_ordering,
)


def lollipop_free():
    return validate_graph({
        "vertices": ["u", "v", "w"],
        "internal_edges": [{"id": "a", "from": "u", "to": "v", "length": 1.0},
                           {"id": "b", "from": "v", "to": "w", "length": 2.0},
                           {"id": "c", "from": "u", "to": "w", "length": 2.5}],
        "external_edges": [{"id": "x", "vertex": "w"}],
    })


@pytest.mark.parametrize("raw, exc", [
    ({"vertices": ["u", "u"]}, DuplicateId),
    ({"vertices": ["u", "v"], "internal_edges": [{"id": "i", "from": "u", "to": "v", "length": 0.0}]},
     NonpositiveLength),
    ({"vertices": ["u", "v"], "internal_edges": [{"id": "i", "from": "u", "to": "v", "length": -1}]},
     NonpositiveLength),
    ({"vertices": ["u"], "internal_edges": [{"id": "i", "from": "u", "to": "z", "length": 1}]},
     DanglingEndpoint),
    ({"vertices": ["u"], "internal_edges": [{"id": "i", "from": "u", "to": "u", "length": 1}]},
     UnsupportedLoop),
    ({"vertices": ["u"], "external_edges": [{"id": "e", "vertex": "q"}]}, DanglingEndpoint),
    ({"vertices": ["u", "v"], "external_edges": [{"id": "e", "vertex": "u"}]}, IsolatedVertex),
    ({"vertices": ["u"], "external_edges": [{"id": "e", "vertex": "u"}, {"id": "e", "vertex": "u"}]},
     DuplicateId),
    ({"vertices": ["u", "v"], "internal_edges": [{"id": "i", "from": "u", "to": "v"}]}, ParseError),
])
def test_validation_errors(raw, exc):
    with pytest.raises(exc):
        validate_graph(raw)


def test_missing_length_names_field():
    with pytest.raises(ParseError, match="length"):
        validate_graph({"vertices": ["u", "v"], "internal_edges": [{"id": "i", "from": "u", "to": "v"}]})


def test_star_counts():
    g = validate_graph({"vertices": ["o"], "external_edges": [{"id": f"e{k}", "vertex": "o"} for k in range(3)]})
    assert len(g.vl) == 3 and g.degree("o") == 3
    assert not g.is_compact


def test_vl_size_and_permutation():
    g = lollipop_free()
    vl, p = vl_ordering(g)
    assert len(vl) == len(g.external) + 2 * len(g.internal)
    assert np.allclose(p @ p.T, np.eye(len(vl)))
    # P f(V) lists edge-end values in V_L order
    ends = g.edge_ends
    vals = np.arange(len(ends), dtype=float)
    reordered = p @ vals
    for k, (v, l) in enumerate(vl):
        j = int(reordered[k])
        assert (ends[j].vertex, ends[j].edge) == (v, l)


def test_point_canonicalization():
    g = lollipop_free()
    assert g.point("a", 0.0) == Vertex("u")
    assert g.point("a", 1.0) == Vertex("v")
    assert g.point("x", 0.0) == Vertex("w")
    assert g.point("a", 0.5) == EdgePoint("a", 0.5)
    with pytest.raises(ValueError):
        g.point("a", 1.5)


def test_distances():
    g = lollipop_free()
    assert g.distance(Vertex("u"), Vertex("w")) == pytest.approx(2.5)
    assert g.distance(EdgePoint("a", 0.25), EdgePoint("a", 0.75)) == pytest.approx(0.5)
    # (b, 1.9) is 0.1 from w, and w is 2.5 from u
    assert g.distance(Vertex("u"), EdgePoint("b", 1.9)) == pytest.approx(2.6)
    assert g.distance(EdgePoint("x", 3.0), Vertex("v")) == pytest.approx(5.0)


def test_disconnected_is_infinite():
    g = validate_graph({"vertices": ["u", "v"], "external_edges": [{"id": "e", "vertex": "u"},
                                                                     {"id": "f", "vertex": "v"}]})
    assert math.isinf(g.distance(Vertex("u"), Vertex("v")))


def test_parse_and_format_point():
    g = lollipop_free()
    assert parse_point(g, "VERTEX:v") == Vertex("v")
    assert parse_point(g, "b:0.5") == EdgePoint("b", 0.5)
    assert parse_point(g, "b:0") == Vertex("v")
    assert format_point(CEMETERY) == "DELTA"
    assert parse_point(g, format_point(EdgePoint("c", 0.1))) == EdgePoint("c", 0.1)
    for bad in ("nope", "zz:1", "VERTEX:q", "a:foo", "a:7"):
        with pytest.raises((ParseError, DanglingEndpoint)):
            parse_point(g, bad)


points = st.tuples(st.sampled_from(["a", "b", "c", "x"]), st.floats(0.0, 1.0))


def _pt(g, spec):
    edge, s = spec
    length = g.edge(edge).length
    return g.point(edge, s * (length if math.isfinite(length) else 4.0))


@settings(max_examples=200, deadline=None)
@given(points, points, points)
def test_metric_axioms(p, q, r):
    g = lollipop_free()
    p, q, r = _pt(g, p), _pt(g, q), _pt(g, r)
    dpq = g.distance(p, q)
    assert dpq >= 0
    assert dpq == pytest.approx(g.distance(q, p), abs=1e-12)
    assert g.distance(p, r) <= dpq + g.distance(q, r) + 1e-12
    assert g.distance(p, p) == 0
