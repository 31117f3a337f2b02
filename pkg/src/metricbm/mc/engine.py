"""Estimators built on the path kernel.

Within an edge the motion is exact: one-sided passage times on external
edges, and walk-on-spheres steps (exit time of a centred interval, fair
side) on internal edges. At an instantaneous vertex the path performs an
excursion into the shell of radius ``eps``:

* the local time accumulated before leaving the shell is Exp(mean ``eps``);
* killing runs at rate ``a / b_sum`` per unit local time;
* the path is held ``c / b_sum`` per unit local time (sticky lag) and
  spends an extra reflected-excursion time ``eps**2 * J``;
* an edge is entered with probability ``b_l / b_sum``, at distance ``eps``.

Observations that fall inside a vertex excursion are recorded at the
vertex, which is the source of the O(eps) bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from ..errors import ShellTooLarge, ValidationError
from ..graph import CEMETERY, EdgePoint, ExternalEdge, MetricGraph, Vertex
from ..wentzell import HoldingKilling, Instantaneous, Trap, WentzellData, classify_vertex
from . import _pykernel as pk
from . import get_kernel

VERTEX, EDGE, DEAD, UNOBSERVED = pk.VERTEX, pk.EDGE, pk.DEAD, pk.UNOBSERVED
CONSTS = pk.sampler_constants()
HORIZON_TRUNCATION = 1e-4


@dataclass(frozen=True)
class SimConfig:
    eps: float = 0.01
    seed: int = 0
    n_paths: int = 100_000
    horizon: float | None = None
    record_grid: tuple | None = None
    backend: str | None = None

    def check(self, graph: MetricGraph):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if not self.eps > 0:
            raise ShellTooLarge(f"eps = {self.eps} must be positive")
        bound = 0.5 * graph.min_length
        if not self.eps < bound:
            raise ShellTooLarge(f"eps = {self.eps} must be below half the shortest edge ({bound})")
        return self


@dataclass
class EstimatorResult:
    estimate: float
    stderr: float
    n_paths: int
    eps: float
    seed: int
    extra: dict = field(default_factory=dict)

    def zscore(self, reference: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.estimate == reference else math.inf
        return (self.estimate - reference) / self.stderr

    def as_dict(self) -> dict:
        return asdict(self)


def _result(samples: np.ndarray, cfg: SimConfig, **extra) -> EstimatorResult:
    n = len(samples)
    est = float(np.mean(samples)) if n else 0.0
    err = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EstimatorResult(est, err, n, cfg.eps, int(cfg.seed), extra)


# -- model tables ---------------------------------------------------------------------

def model_arrays(graph: MetricGraph, data: WentzellData) -> tuple:
    """Flat arrays describing vertices, routing and edges for the kernels."""
    nv = len(graph.vertices)
    vclass = np.zeros(nv, dtype=np.int32)
    vrate = np.zeros(nv)
    vkinv = np.zeros(nv)
    vsticky = np.zeros(nv)
    rptr = np.zeros(nv + 1, dtype=np.int32)
    rcum, redge, rorig = [], [], []
    for k, v in enumerate(graph.vertices):
        cls = classify_vertex(data, graph, v)
        if isinstance(cls, Trap):
            vclass[k] = pk.TRAP
        elif isinstance(cls, HoldingKilling):
            vclass[k] = pk.HOLDING
            vrate[k] = cls.rate
        else:
            vclass[k] = pk.INSTANT
            bsum = data.b_sum(v, graph)
            vkinv[k] = bsum / data.a[v] if data.a[v] > 0 else 0.0
            vsticky[k] = data.c[v] / bsum
            acc = 0.0
            for l in graph.incident[v]:
                bl = data.b[(v, l)]
                if bl <= 0:
                    continue
                acc += bl / bsum
                rcum.append(acc)
                redge.append(graph.edge_index(l))
                rorig.append(1 if graph.end_of(v, l).at_origin else 0)
            rcum[-1] = 1.0
        rptr[k + 1] = len(rcum)
    ne = len(graph.edges)
    etype = np.zeros(ne, dtype=np.int32)
    elen = np.zeros(ne)
    etail = np.zeros(ne, dtype=np.int32)
    ehead = np.full(ne, -1, dtype=np.int32)
    for k, e in enumerate(graph.edges):
        if isinstance(e, ExternalEdge):
            etype[k] = pk.EXTERNAL
            elen[k] = math.inf
            etail[k] = graph.vertex_index(e.vertex)
        else:
            etype[k] = pk.INTERNAL
            elen[k] = e.length
            etail[k] = graph.vertex_index(e.tail)
            ehead[k] = graph.vertex_index(e.head)
    return (vclass, vrate, vkinv, vsticky, rptr, np.array(rcum, dtype=float),
            np.array(redge, dtype=np.int32), np.array(rorig, dtype=np.int8),
            etype, elen, etail, ehead)


def encode_point(graph: MetricGraph, p) -> tuple:
    p = graph.canonical(p)
    if isinstance(p, Vertex):
        return VERTEX, graph.vertex_index(p.id), 0.0
    return EDGE, graph.edge_index(p.edge), float(p.x)


def decode_state(graph: MetricGraph, kind: int, ident: int, x: float):
    if kind == VERTEX:
        return Vertex(graph.vertices[ident])
    if kind == EDGE:
        return EdgePoint(graph.edges[ident].id, float(x))
    if kind == DEAD:
        return CEMETERY
    return None


@dataclass
class PathBatch:
    """Raw kernel output for a batch of paths."""

    obs_kind: np.ndarray
    obs_id: np.ndarray
    obs_x: np.ndarray
    obs_t: np.ndarray
    hit: np.ndarray
    death: np.ndarray
    steps: np.ndarray

    def values(self, graph: MetricGraph, f) -> np.ndarray:
        """``f`` at every observation (0 at the cemetery and when unobserved)."""
        if hasattr(f, "evaluate_states") and getattr(f, "grid", None) is not None:
            return f.evaluate_states(self.obs_kind, self.obs_id, self.obs_x)
        return f.evaluate_states(graph, self.obs_kind, self.obs_id, self.obs_x)


def run(graph: MetricGraph, data: WentzellData, start, cfg: SimConfig, *, obs_times=None,
        rate: float = 1.0, n_marks: int = 0, target: str | None = None,
        horizon: float | None = None, model=None, path_offset: int = 0) -> PathBatch:
    cfg.check(graph)
    kernel = get_kernel(cfg.backend)
    model = model_arrays(graph, data) if model is None else model
    kind, ident, x = encode_point(graph, start)
    if obs_times is not None:
        mode = pk.FIXED
        obs = np.ascontiguousarray(obs_times, dtype=float)
        if np.any(np.diff(obs) < 0) or np.any(obs < 0):
            raise ValueError("observation times must be sorted and nonnegative")
    else:
        mode = pk.EXPONENTIAL
        obs = np.zeros(0)
    tgt = -1 if target is None else graph.vertex_index(target)
    hz = math.inf if horizon is None else float(horizon)
    out = kernel.run_paths(model, int(cfg.n_paths), int(cfg.seed), int(path_offset), kind, ident, x,
                           float(cfg.eps), mode, obs, float(rate), int(n_marks), hz, tgt, CONSTS)
    return PathBatch(*out)


# -- primitive samplers exposed for testing ---------------------------------------------

def sample_one_sided_fpt(rng: np.random.Generator, d: float) -> float:
    """Passage time of standard Brownian motion to a level at distance ``d``."""
    if d == 0:
        return 0.0
    return pk.sample_fpt(rng, float(d))


def sample_jstar(rng: np.random.Generator) -> float:
    return pk.sample_jstar(rng, CONSTS)


def sample_two_sided_exit(rng: np.random.Generator, x: float, length: float) -> tuple:
    """(exit side, exit time) of Brownian motion from (0, length) started at ``x``.

    Walk-on-spheres: each step exits the largest centred interval inside
    (0, length) after a scaled unit exit time, on a fair side; the walk ends
    on the step that lands on an endpoint.
    """
    if not 0 < x < length:
        raise ValueError("x must lie strictly inside the interval")
    t = 0.0
    while True:
        lo, hi = x, length - x
        r = lo if lo < hi else hi
        t += r * r * pk.sample_jstar(rng, CONSTS)
        if rng.random() < 0.5:
            if r == lo:
                return 0.0, t
            x = x - r
        else:
            if r == hi:
                return length, t
            x = x + r


@dataclass(frozen=True)
class Killed:
    elapsed: float


@dataclass(frozen=True)
class Entered:
    edge: str
    x: float
    elapsed: float


@dataclass(frozen=True)
class Stays:
    pass


def vertex_excursion(rng: np.random.Generator, graph: MetricGraph, data: WentzellData, v: str,
                     eps: float):
    """One vertex step of the shell scheme (same draws as the kernels)."""
    SimConfig(eps=eps, n_paths=1).check(graph)
    cls = classify_vertex(data, graph, v)
    if isinstance(cls, Trap):
        return Stays()
    if isinstance(cls, HoldingKilling):
        return Killed(rng.standard_exponential() / cls.rate)
    bsum = data.b_sum(v, graph)
    loc = eps * rng.standard_exponential()
    killed = False
    ka = 0.0
    if data.a[v] > 0:
        ka = rng.standard_exponential() * (bsum / data.a[v])
        killed = ka < loc
    dur = eps * eps * pk.sample_jstar(rng, CONSTS)
    sticky = data.c[v] / bsum
    if killed:
        return Killed(sticky * ka + dur * (ka / loc))
    u = rng.random()
    acc = 0.0
    choices = [l for l in graph.incident[v] if data.b[(v, l)] > 0]
    chosen = choices[-1]
    for l in choices[:-1]:
        acc += data.b[(v, l)] / bsum
        if u < acc:
            chosen = l
            break
    end = graph.end_of(v, chosen)
    x = eps if end.at_origin else graph.edge(chosen).length - eps
    return Entered(chosen, x, sticky * loc + dur)


# -- trajectories -------------------------------------------------------------------------

@dataclass
class PathTrajectory:
    """Event records ``(time, point)``; ``lifetime`` is inf if alive at the horizon."""

    records: list
    lifetime: float
    horizon: float

    def rows(self):
        for t, p in self.records:
            if p is CEMETERY:
                yield t, "DELTA", ""
            elif isinstance(p, Vertex):
                yield t, f"VERTEX:{p.id}", ""
            else:
                yield t, p.edge, p.x


def simulate_path(rng: np.random.Generator, graph: MetricGraph, data: WentzellData, start,
                  horizon: float, eps: float, record_grid: Sequence | None = None) -> PathTrajectory:
    """Event-level trajectory: vertex hits, edge entries, the kill event and,
    optionally, positions at the times of ``record_grid``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    SimConfig(eps=eps, n_paths=1).check(graph)
    p = graph.canonical(start)
    t = 0.0
    records = [(0.0, p)]
    grid = sorted(float(s) for s in (() if record_grid is None else record_grid) if 0 < s <= horizon)
    gi = 0
    while True:
        s_next = grid[gi] if gi < len(grid) else horizon
        if isinstance(p, Vertex):
            out = vertex_excursion(rng, graph, data, p.id, eps)
            if isinstance(out, Stays):
                records.extend((s, p) for s in grid[gi:])
                return PathTrajectory(records, math.inf, horizon)
            t_end = t + out.elapsed
            while gi < len(grid) and grid[gi] < t_end:
                records.append((grid[gi], p))
                gi += 1
            if t_end >= horizon:
                return PathTrajectory(records, math.inf, horizon)
            t = t_end
            if isinstance(out, Killed):
                records.append((t, CEMETERY))
                return PathTrajectory(records, t, horizon)
            p = EdgePoint(out.edge, out.x)
            records.append((t, p))
            continue
        e = graph.edge(p.edge)
        s = s_next - t
        if isinstance(e, ExternalEdge):
            tau = pk.sample_fpt(rng, p.x)
            if tau < s:
                t += tau
                p = Vertex(e.vertex)
                records.append((t, p))
                continue
            y = pk.sample_survivor_halfline(rng, p.x, s)
        else:
            lo, hi = p.x, e.length - p.x
            r = lo if lo < hi else hi
            tau = r * r * pk.sample_jstar(rng, CONSTS)
            if tau < s:
                t += tau
                if rng.random() < 0.5:
                    p = Vertex(e.tail) if r == lo else EdgePoint(e.id, p.x - r)
                else:
                    p = Vertex(e.head) if r == hi else EdgePoint(e.id, p.x + r)
                if isinstance(p, Vertex):
                    records.append((t, p))
                continue
            y = p.x + r * pk.sample_survivor_ball(rng, s / (r * r), CONSTS)
        t = s_next
        p = EdgePoint(e.id, y)
        if gi < len(grid):
            records.append((t, p))
            gi += 1
        else:
            return PathTrajectory(records, math.inf, horizon)


# -- estimators ---------------------------------------------------------------------------

def estimate_resolvent(graph: MetricGraph, data: WentzellData, start, f, lam: float,
                       cfg: SimConfig, n_marks: int = 8) -> EstimatorResult:
    """Estimate ``R_lam f(start) = E int_0^zeta e^{-lam t} f(X_t) dt``.

    Each path is observed at ``n_marks`` independent Exp(lam) times; the per
    path score ``sum_j f(X_{T_j}) / (lam * n_marks)`` is unbiased for the
    resolvent of the simulated process.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    batch = run(graph, data, start, cfg, rate=lam, n_marks=n_marks)
    score = batch.values(graph, f).sum(axis=1) / (lam * n_marks)
    return _result(score, cfg, lam=lam, n_marks=n_marks,
                   mean_steps=float(batch.steps.mean()))


def hitting_horizon(lam: float, truncation: float = HORIZON_TRUNCATION) -> float:
    return -math.log(truncation) / lam


def estimate_hitting_laplace(graph: MetricGraph, data: WentzellData, start, target: str,
                             lam: float, cfg: SimConfig) -> EstimatorResult:
    """Estimate ``E e^{-lam H_target}`` (killed or unfinished paths score 0)."""
    p = graph.canonical(start)
    if p == Vertex(target):
        return EstimatorResult(1.0, 0.0, cfg.n_paths, cfg.eps, int(cfg.seed), {"lam": lam})
    horizon = cfg.horizon if cfg.horizon is not None else hitting_horizon(lam)
    batch = run(graph, data, start, cfg, n_marks=0, target=target, horizon=horizon)
    score = np.where(np.isfinite(batch.hit), np.exp(-lam * np.where(np.isfinite(batch.hit), batch.hit, 0.0)), 0.0)
    return _result(score, cfg, lam=lam, horizon=horizon,
                   hit_fraction=float(np.mean(np.isfinite(batch.hit))))


def estimate_hitting_probability(graph: MetricGraph, data: WentzellData, start, target: str,
                                 delta: float, cfg: SimConfig) -> EstimatorResult:
    """Estimate ``P(H_target >= delta)``."""
    batch = run(graph, data, start, cfg, n_marks=0, target=target, horizon=delta)
    score = (~(batch.hit < delta)).astype(float)
    return _result(score, cfg, delta=delta)


def estimate_decomposition(graph: MetricGraph, data: WentzellData, start, target: str, f,
                           lam: float, resolvent_at_target: float, cfg: SimConfig,
                           n_marks: int = 8) -> EstimatorResult:
    """Right side of the first-passage formula from one set of paths:
    ``E int_0^H e^{-lam t} f(X_t) dt + E e^{-lam H} * R_lam f(target)``."""
    horizon = cfg.horizon if cfg.horizon is not None else hitting_horizon(lam)
    batch = run(graph, data, start, cfg, rate=lam, n_marks=n_marks, target=target, horizon=horizon)
    pre = batch.values(graph, f).sum(axis=1) / (lam * n_marks)
    hit = batch.hit
    disc = np.where(np.isfinite(hit), np.exp(-lam * np.where(np.isfinite(hit), hit, 0.0)), 0.0)
    score = pre + disc * resolvent_at_target
    return _result(score, cfg, lam=lam, horizon=horizon, pre_hit=float(pre.mean()),
                   laplace=float(disc.mean()))


def estimate_semigroup(graph: MetricGraph, data: WentzellData, start, f, t: float,
                       cfg: SimConfig) -> EstimatorResult:
    """Estimate ``U_t f(start) = E f(X_t); t < zeta``."""
    if t == 0:
        val = f(graph, graph.canonical(start)) if not hasattr(f, "grid") else f(graph.canonical(start))
        return EstimatorResult(float(val), 0.0, cfg.n_paths, cfg.eps, int(cfg.seed), {"t": t})
    batch = run(graph, data, start, cfg, obs_times=[t])
    return _result(batch.values(graph, f)[:, 0], cfg, t=t,
                   survival=float(np.mean(batch.obs_kind[:, 0] != DEAD)))


def estimate_survival(graph: MetricGraph, data: WentzellData, start, t: float,
                      cfg: SimConfig) -> EstimatorResult:
    batch = run(graph, data, start, cfg, obs_times=[t])
    return _result((batch.obs_kind[:, 0] != DEAD).astype(float), cfg, t=t)


def estimate_lifetime_laplace(graph: MetricGraph, data: WentzellData, start, lam: float,
                              cfg: SimConfig, horizon: float | None = None) -> EstimatorResult:
    """Estimate ``E e^{-lam zeta}`` (paths alive at the horizon score 0)."""
    hz = hitting_horizon(lam) if horizon is None else horizon
    batch = run(graph, data, start, cfg, obs_times=[hz])
    d = batch.death
    score = np.where(np.isfinite(d), np.exp(-lam * np.where(np.isfinite(d), d, 0.0)), 0.0)
    return _result(score, cfg, lam=lam, horizon=hz)
