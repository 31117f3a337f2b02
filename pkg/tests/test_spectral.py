import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import load
from metricbm.errors import ScanInconclusive
from metricbm.graph import validate_graph
from metricbm.spectral import (
    assemble_boundary_matrices,
    block_det_closed_form,
    block_det_dense,
    find_invertibility_radius,
    glue_matrix,
    mode_traces,
    normalized_det,
    vertex_blocks,
    z_hat,
    z_matrix,
)
from metricbm.wentzell import kirchhoff, validate_wentzell


def star(n):
    return validate_graph({"vertices": ["o"], "external_edges": [{"id": f"e{k}", "vertex": "o"} for k in range(n)]})


def test_degree_one_blocks():
    at, bt, ct = vertex_blocks(0.2, [0.5], 0.3)
    assert at.tolist() == [[0.2]] and bt.tolist() == [[0.5]] and ct.tolist() == [[0.15]]


def test_c_tilde_invertible_iff_c_nonzero():
    _, _, ct = vertex_blocks(0.1, [0.3, 0.3], 0.3)
    assert abs(np.linalg.det(ct)) > 0.1
    _, _, ct = vertex_blocks(0.1, [0.45, 0.45], 0.0)
    assert np.linalg.det(ct) == 0.0


def test_kirchhoff_row_is_derivative_sum():
    g = star(3)
    bm = assemble_boundary_matrices(g, kirchhoff(g))
    vals, ders, secs = np.zeros(3), np.array([1.0, -0.5, -0.5]), np.zeros(3)
    assert np.allclose(bm.condition(vals, ders, secs), 0)
    assert not np.allclose(bm.condition(vals, np.array([1.0, 0.0, 0.0]), secs), 0)


def test_two_star_det_minus_one():
    g = star(2)
    sm = z_matrix(assemble_boundary_matrices(g, kirchhoff(g)), 1.0)
    assert np.linalg.det(sm.z) == pytest.approx(-1.0, rel=1e-12)
    assert block_det_closed_form(0.0, 1.0, 0.0, 2, 1.0) == pytest.approx(-1.0)


def test_trap_degree_three():
    assert block_det_closed_form(0, 0, 1, 3, 2.0) == pytest.approx(32.0)
    assert block_det_dense(0, [0, 0, 0], 1, 2.0) == pytest.approx(32.0)
    assert block_det_closed_form(0.3, 0.5, 0.2, 2, 0.0) == 0.0


@st.composite
def vertex_data(draw):
    deg = draw(st.integers(1, 5))
    w = draw(st.lists(st.floats(0, 1), min_size=deg + 2, max_size=deg + 2))
    total = sum(w)
    if total == 0 or w[0] / total >= 1:
        w = [0.0, 1.0] + [1.0] * deg
        total = sum(w)
    w = [x / total for x in w]
    r = draw(st.floats(0.1, 10))
    phi = draw(st.floats(-np.pi, np.pi))
    return w[0], w[2:], w[1], r * cmath.exp(1j * phi)


@settings(max_examples=100, deadline=None)
@given(vertex_data(), st.sampled_from([1, -1]))
def test_block_det_matches_closed_form(data, sign):
    a, b, c, kappa = data
    dense = block_det_dense(a, b, c, kappa, sign)
    closed = block_det_closed_form(a, sum(b), c, len(b), kappa, sign)
    assert abs(dense - closed) <= 1e-10 * max(abs(closed), 1e-300) + 1e-300


@settings(max_examples=50, deadline=None)
@given(vertex_data(), st.floats(1e-3, 1e3))
def test_plus_block_nonsingular_on_positive_axis(data, k):
    a, b, c, _ = data
    # a + k sum(b) + k^2 c / 2 > 0 for nonnegative data summing to one
    assert abs(block_det_closed_form(a, sum(b), c, len(b), k, 1)) > 0


def test_minus_block_can_vanish_on_positive_axis():
    # a - k sum(b) vanishes at k = a / sum(b) when c = 0
    assert block_det_closed_form(0.5, 0.5, 0.0, 1, 1.0, -1) == 0.0
    assert block_det_dense(0.2, [0.8 / 3] * 3, 0.0, 0.25, -1) == pytest.approx(0.0, abs=1e-15)


def test_no_internal_edges_means_z_is_zhat():
    g = star(4)
    bm = assemble_boundary_matrices(g, kirchhoff(g))
    for kappa in (0.3, 2.0 + 1.0j):
        sm = z_matrix(bm, kappa)
        assert np.array_equal(sm.z, sm.z_plus)
        assert np.allclose(glue_matrix(bm, kappa, "paper"), sm.z)
        assert np.linalg.det(sm.z) == pytest.approx(block_det_closed_form(0, 1, 0, 4, kappa), rel=1e-10)


def test_schwarz_reflection(two_vertex):
    bm = assemble_boundary_matrices(two_vertex.graph, two_vertex.wentzell)
    k = 1.3 + 0.7j
    assert np.allclose(z_matrix(bm, np.conj(k)).z, np.conj(z_matrix(bm, k).z))


def test_z_external_block_matches_glue(two_vertex):
    bm = assemble_boundary_matrices(two_vertex.graph, two_vertex.wentzell)
    ne = len(two_vertex.graph.external)
    z = z_matrix(bm, 1.7).z
    g = glue_matrix(bm, 1.7, "paper")
    assert np.allclose(z[:, :ne], g[:, :ne])


def _mode_functions(graph, kappa, coef):
    """Homogeneous solutions written out edge by edge (paper basis)."""
    ne, ni = len(graph.external), len(graph.internal)
    out = {}
    for k, e in enumerate(graph.external):
        out[e.id] = lambda x, r=coef[k]: r * np.exp(-kappa * x)
    for k, i in enumerate(graph.internal):
        rp, rm = coef[ne + k], coef[ne + ni + k]
        out[i.id] = lambda x, rp=rp, rm=rm, rho=i.length: rp * np.exp(kappa * x) + rm * np.exp(kappa * (rho - x))
    return out


def test_glue_matrix_against_finite_differences(two_vertex):
    g, w = two_vertex.graph, two_vertex.wentzell
    bm = assemble_boundary_matrices(g, w)
    kappa = 1.1
    rng = np.random.default_rng(0)
    coef = rng.normal(size=bm.size)
    fns = _mode_functions(g, kappa, coef)
    h = 1e-4
    vals, ders, secs = [], [], []
    for end in g.edge_ends:
        fn = fns[end.edge]
        x0 = 0.0 if end.at_origin else g.edge(end.edge).length
        s = 1.0 if end.at_origin else -1.0  # inward direction
        vals.append(fn(x0))
        ders.append((-3 * fn(x0) + 4 * fn(x0 + s * h) - fn(x0 + 2 * s * h)) / (2 * h))
        secs.append((fn(x0 + s * h) - 2 * fn(x0) + fn(x0 - s * h)) / h ** 2)
    direct = bm.condition(np.array(vals), np.array(ders), np.array(secs))
    assert np.allclose(glue_matrix(bm, kappa, "paper") @ coef, direct, atol=1e-5)
    # the printed secular matrix differs on the internal block
    ne = len(g.external)
    assert not np.allclose(z_matrix(bm, kappa).z[:, ne:], glue_matrix(bm, kappa, "paper")[:, ne:])


def test_stable_and_paper_bases_agree(two_vertex):
    g = two_vertex.graph
    bm = assemble_boundary_matrices(g, two_vertex.wentzell)
    kappa = 0.8
    ne, ni = len(g.external), len(g.internal)
    t = np.eye(bm.size)  # stable coefficients from paper coefficients
    damp = np.exp(kappa * np.array([i.length for i in g.internal]))
    for k in range(ni):
        t[ne + k, ne + k] = 0
        t[ne + ni + k, ne + ni + k] = 0
        t[ne + k, ne + ni + k] = damp[k]
        t[ne + ni + k, ne + k] = damp[k]
    assert np.allclose(glue_matrix(bm, kappa, "stable") @ t, glue_matrix(bm, kappa, "paper"))
    val, der, sec = mode_traces(g, kappa)
    assert np.allclose(sec, kappa ** 2 * val)


def test_radius_two_star_and_traps():
    g = star(2)
    bm = assemble_boundary_matrices(g, kirchhoff(g))
    grid = np.linspace(0, 5, 51)
    r, profile = find_invertibility_radius(bm, grid)
    assert r == pytest.approx(0.1)
    dets = [p["det_z"] for p in profile]
    assert np.allclose(dets, -grid ** 3)
    tg = star(2)
    wt = validate_wentzell(tg, {"o": 0.0}, {("o", "e0"): 0.0, ("o", "e1"): 0.0}, {"o": 1.0})
    r, profile = find_invertibility_radius(assemble_boundary_matrices(tg, wt), grid)
    assert r == pytest.approx(0.1)
    dets = np.array([p["det_z_plus"] for p in profile])
    assert np.allclose(dets, [block_det_closed_form(0, 0, 1, 2, k) for k in grid])
    assert np.allclose(dets, [block_det_closed_form(0, 0, 1, 2, -k) for k in grid])  # even


def test_radius_inconclusive():
    g = star(2)
    bm = assemble_boundary_matrices(g, kirchhoff(g))
    with pytest.raises(ScanInconclusive):
        find_invertibility_radius(bm, [0.0])


def test_random_data_det_grows(two_vertex):
    bm = assemble_boundary_matrices(two_vertex.graph, two_vertex.wentzell)
    grid = np.linspace(2, 20, 40)
    d = [abs(np.linalg.det(z_hat(bm, k))) for k in grid]
    assert all(b > a for a, b in zip(d, d[1:]))


def test_normalized_det_scale_invariant():
    m = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert normalized_det(m) == pytest.approx(normalized_det(1e6 * m))
    assert normalized_det(np.array([[1.0, 2.0], [2.0, 4.0]])) < 1e-15
