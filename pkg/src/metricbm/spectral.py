"""Boundary matrices and the secular matrix of the vertex conditions.

Sign convention: the first row of each block ``B~(v)`` holds ``+b_{v_l}`` so
that the vertex conditions read ``A f(V) - B f'(V) + C f''(V) = 0`` in
edge-end order. With this choice ``det(A~(v) +- k B~(v) + k^2 C~(v))``
equals ``(a +- k sum(b) + k^2 c / 2) (-k^2)^(deg - 1)`` and, without internal
edges, the decaying-mode system is exactly ``Z_hat_plus``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ScanInconclusive
from .graph import MetricGraph
from .wentzell import WentzellData

SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class BoundaryMatrices:
    graph: MetricGraph
    blocks: dict  # vertex -> (A~(v), B~(v), C~(v))
    a_tilde: np.ndarray
    b_tilde: np.ndarray
    c_tilde: np.ndarray
    p: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    det_p: float

    @property
    def size(self) -> int:
        return self.a.shape[0]

    def condition(self, values, derivs, second):
        """Residual of the vertex conditions for edge-end vectors."""
        return self.a @ values - self.b @ derivs + self.c @ second


def vertex_blocks(a_v: float, b_v, c_v: float):
    """The three |L(v)| x |L(v)| blocks for one vertex (``b_v`` in edge order)."""
    n = len(b_v)
    at = np.zeros((n, n))
    bt = np.zeros((n, n))
    ct = np.zeros((n, n))
    at[0, 0] = a_v
    bt[0, :] = b_v
    ct[0, 0] = 0.5 * c_v
    for k in range(1, n):
        ct[k, k - 1] = 1.0
        ct[k, k] = -1.0
    return at, bt, ct


def assemble_boundary_matrices(graph: MetricGraph, data: WentzellData) -> BoundaryMatrices:
    n = len(graph.vl)
    at = np.zeros((n, n))
    bt = np.zeros((n, n))
    ct = np.zeros((n, n))
    blocks = {}
    k = 0
    for v in graph.vertices:
        inc = graph.incident[v]
        blk = vertex_blocks(data.a[v], [data.b[(v, l)] for l in inc], data.c[v])
        blocks[v] = blk
        m = len(inc)
        at[k:k + m, k:k + m], bt[k:k + m, k:k + m], ct[k:k + m, k:k + m] = blk
        k += m
    p = graph.permutation
    return BoundaryMatrices(
        graph=graph, blocks=blocks, a_tilde=at, b_tilde=bt, c_tilde=ct, p=p,
        a=p.T @ at @ p, b=p.T @ bt @ p, c=p.T @ ct @ p,
        det_p=float(round(np.linalg.det(p))),
    )


def z_hat(bm: BoundaryMatrices, kappa, sign: int = 1) -> np.ndarray:
    return bm.a + sign * kappa * bm.b + kappa * kappa * bm.c


def _layout(graph: MetricGraph):
    ne, ni = len(graph.external), len(graph.internal)
    return ne, ni, np.array([i.length for i in graph.internal])


def x_matrix(graph: MetricGraph, kappa, sign: int = 1) -> np.ndarray:
    ne, ni, rho = _layout(graph)
    x = np.eye(ne + 2 * ni, dtype=complex if np.iscomplexobj(kappa) else float)
    if ni:
        e = sign * np.exp(kappa * rho)
        idx = np.arange(ni)
        x[ne + idx, ne + ni + idx] = e
        x[ne + ni + idx, ne + idx] = e
    return x


@dataclass(frozen=True)
class SecularMatrix:
    kappa: complex
    z: np.ndarray
    z_plus: np.ndarray
    z_minus: np.ndarray
    x_plus: np.ndarray
    x_minus: np.ndarray


def z_matrix(bm: BoundaryMatrices, kappa) -> SecularMatrix:
    """Z(k) = (A + k^2 C) X+(k) + k B X-(k) together with Z_hat_pm(k)."""
    xp = x_matrix(bm.graph, kappa, 1)
    xm = x_matrix(bm.graph, kappa, -1)
    z = (bm.a + kappa * kappa * bm.c) @ xp + kappa * bm.b @ xm
    return SecularMatrix(kappa, z, z_hat(bm, kappa, 1), z_hat(bm, kappa, -1), xp, xm)


def mode_traces(graph: MetricGraph, kappa, basis: str = "stable"):
    """Edge-end values, inward derivatives and second derivatives of the modes.

    Returns matrices ``(val, der, sec)`` mapping a coefficient vector to the
    three edge-end vectors of ``L(v)``-form functions solving ``u'' = k^2 u``.

    ``basis="paper"`` uses coefficients (r_e, r_i^+, r_i^-) of
    ``r_e e^{-kx}`` and ``r_i^+ e^{kx} + r_i^- e^{k(rho_i - x)}``.
    ``basis="stable"`` uses (c_e, p_i, q_i) of ``c_e e^{-kx}`` and
    ``p_i e^{-kx} + q_i e^{-k(rho_i - x)}``, which stays bounded for large k.
    """
    ne, ni, rho = _layout(graph)
    n = ne + 2 * ni
    dtype = complex if np.iscomplexobj(kappa) else float
    val = np.zeros((n, n), dtype=dtype)
    der = np.zeros((n, n), dtype=dtype)
    val[:ne, :ne] = np.eye(ne)
    der[:ne, :ne] = -kappa * np.eye(ne)
    i0 = ne + np.arange(ni)  # rows: internal ends at 0 / columns: first coefficient
    i1 = ne + ni + np.arange(ni)
    if basis == "stable":
        e = np.exp(-kappa * rho)
        val[i0, i0], val[i0, i1] = 1.0, e
        val[i1, i0], val[i1, i1] = e, 1.0
        der[i0, i0], der[i0, i1] = -kappa, kappa * e
        der[i1, i0], der[i1, i1] = kappa * e, -kappa
    elif basis == "paper":
        e = np.exp(kappa * rho)
        val[i0, i0], val[i0, i1] = 1.0, e
        val[i1, i0], val[i1, i1] = e, 1.0
        der[i0, i0], der[i0, i1] = kappa, -kappa * e
        der[i1, i0], der[i1, i1] = -kappa * e, kappa
    else:
        raise ValueError(f"unknown basis {basis!r}")
    return val, der, kappa * kappa * val


def glue_matrix(bm: BoundaryMatrices, kappa, basis: str = "stable") -> np.ndarray:
    """Vertex conditions applied to the homogeneous modes.

    This is the matrix of the linear system solved for the homogeneous
    coefficients of a resolvent. In the paper basis it agrees with
    :func:`z_matrix` on the external block; on internal edges the
    derivative term enters with the opposite sign.
    """
    val, der, sec = mode_traces(bm.graph, kappa, basis)
    return bm.a @ val - bm.b @ der + bm.c @ sec


def block_det_closed_form(a_v: float, b_sum: float, c_v: float, degree: int, kappa,
                          sign: int = 1):
    return (a_v + sign * kappa * b_sum + 0.5 * kappa * kappa * c_v) * (-kappa * kappa) ** (degree - 1)


def block_det_dense(a_v: float, b_v, c_v: float, kappa, sign: int = 1):
    at, bt, ct = vertex_blocks(a_v, b_v, c_v)
    return np.linalg.det(at + sign * kappa * bt + kappa * kappa * ct)


def normalized_det(m: np.ndarray) -> float:
    """|det m| divided by the product of its row norms (Hadamard ratio in [0, 1])."""
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        return 0.0
    sign, logdet = np.linalg.slogdet(m)
    if sign == 0:
        return 0.0
    return float(np.exp(logdet - np.sum(np.log(norms))))


def is_singular(m: np.ndarray, tol: float = SINGULAR_TOL) -> bool:
    return normalized_det(m) <= tol


def determinant_profile(bm: BoundaryMatrices, kappas):
    """Rows of (kappa, det Z+, det Z-, det Z, normalized dets) over a grid."""
    rows = []
    for k in kappas:
        sm = z_matrix(bm, k)
        rows.append({
            "kappa": k,
            "det_z_plus": np.linalg.det(sm.z_plus),
            "det_z_minus": np.linalg.det(sm.z_minus),
            "det_z": np.linalg.det(sm.z),
            "ndet_z_plus": normalized_det(sm.z_plus),
            "ndet_z_minus": normalized_det(sm.z_minus),
            "ndet_z": normalized_det(sm.z),
        })
    return rows


def find_invertibility_radius(bm: BoundaryMatrices, grid, tol: float = SINGULAR_TOL):
    """Smallest sampled |k| beyond which both Z_hat_pm stay nonsingular.

    Returns ``(R_est, profile)``; ``profile`` is the list of rows from
    :func:`determinant_profile` in the order of ``grid``.
    """
    grid = list(grid)
    profile = determinant_profile(bm, grid)
    order = sorted(range(len(grid)), key=lambda j: abs(grid[j]))
    r_est = None
    for j in reversed(order):
        row = profile[j]
        if row["ndet_z_plus"] > tol and row["ndet_z_minus"] > tol:
            r_est = float(abs(grid[j]))
        else:
            break
    if r_est is None:
        raise ScanInconclusive("Z_hat is singular at the largest sampled |kappa|; "
                               "extend the scan grid")
    return r_est, profile
