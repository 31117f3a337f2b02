"""Command line interface: ``metricbm validate | solve | scan-det | simulate | compare``.

Outputs go to ``--out`` (default ``$METRICBM_OUT`` or ``./metricbm-out``).
Each command writes its CSV/JSON artifacts atomically and appends one line
to ``runs.jsonl`` in the output directory. Exit status: 0 success,
2 validation error, 3 numerical failure, 4 comparison failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import MetricBMError, NumericalError, ParseError, ValidationError
from .graph import EdgePoint, Vertex, format_point, parse_point
from .mc import BACKEND
from .mc import engine as mc
from .resolvent import EdgeGrid, apply_resolvent, apply_semigroup, resolvent
from .spectral import assemble_boundary_matrices, find_invertibility_radius
from .specdoc import read_spec, write_atomic
from .wentzell import HoldingKilling, Instantaneous, Trap, classify_vertex

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_COMPARISON = 0, 2, 3, 4
DEFAULT_OUT = "metricbm-out"
Z_LIMIT = 3.0
BIAS_BUDGET = 0.02


def _floats(text: str) -> list:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


def _clean(x):
    """Replace non-finite floats (not valid JSON) with strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)) and not math.isfinite(float(x)):
        return str(float(x))
    return x


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _tag(x: float) -> str:
    return repr(float(x)).replace(".", "p").replace("-", "m")


class Run:
    """Collects outputs of one command and writes the run report."""

    def __init__(self, args, command: str, argv=None):
        self.args = args
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.command = command
        self.out = os.path.abspath(args.out or os.environ.get("METRICBM_OUT") or DEFAULT_OUT)
        self.outputs = []
        self.started = time.perf_counter()

    def write(self, name: str, text: str):
        path = os.path.join(self.out, name)
        write_atomic(path, text)
        self.outputs.append(path)
        return path

    def finish(self, status: int, summary: dict | None = None):
        report = {
            "command": self.command,
            "argv": self.argv,
            "config": {k: v for k, v in vars(self.args).items() if k != "func"},
            "version": __version__,
            "backend": BACKEND,
            "status": status,
            "outputs": self.outputs,
            "wall_time_s": round(time.perf_counter() - self.started, 6),
            "summary": summary or {},
        }
        os.makedirs(self.out, exist_ok=True)
        with open(os.path.join(self.out, "runs.jsonl"), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(_clean(report), sort_keys=True, default=_jsonable) + "\n")
        return status


def _classification(doc):
    out = {}
    for v in doc.graph.vertices:
        cls = classify_vertex(doc.wentzell, doc.graph, v)
        if isinstance(cls, Trap):
            out[v] = {"class": "Trap"}
        elif isinstance(cls, HoldingKilling):
            out[v] = {"class": "HoldingKilling", "rate": cls.rate}
        else:
            out[v] = {"class": "Instantaneous"}
    return out


def _grid(doc, fn, lam_min, args):
    support = fn.support(doc.graph)
    radii = args.truncation if getattr(args, "truncation", None) else 24.0
    return EdgeGrid.for_resolvent(doc.graph, lam_min, support, h=args.h, radii=radii)


# -- commands ---------------------------------------------------------------------------

def cmd_validate(args, run: Run) -> int:
    doc = read_spec(args.spec)
    cls = _classification(doc)
    report = {"spec": args.spec, "vertices": cls, "n_internal": len(doc.graph.internal),
              "n_external": len(doc.graph.external), "functions": sorted(doc.functions)}
    for v, c in cls.items():
        extra = f" (rate {c['rate']!r})" if "rate" in c else ""
        print(f"{v}: {c['class']}{extra}")
    run.write("validate.json", _json(report))
    return run.finish(EXIT_OK, report)


def cmd_solve(args, run: Run) -> int:
    doc = read_spec(args.spec)
    fn = doc.function(args.function)
    lams = sorted(args.lam)
    if not lams or min(lams) <= 0:
        raise ValidationError("--lambda values must be positive")
    grid = _grid(doc, fn, lams[0], args)
    f = fn.sample(grid)
    bm = assemble_boundary_matrices(doc.graph, doc.wentzell)
    diag = {"function": args.function, "h": grid.h, "norm_f": f.norm(), "lambdas": {}}
    sols = {}
    for lam in lams:
        sol = apply_resolvent(doc.graph, doc.wentzell, f, lam, bm=bm, diagnostics=True)
        sols[lam] = sol.u
        d = dict(sol.diagnostics)
        d["contraction_ok"] = lam * sol.u.norm() <= f.norm() * (1 + 1e-9)
        d["vertex_values"] = sol.u.vertex_values()
        d["r"] = sol.r.tolist()
        diag["lambdas"][repr(lam)] = d
        run.write(f"solve_{args.function}_lam{_tag(lam)}.csv", _csv(("edge", "x", "u"), sol.u.rows()))
        print(f"lambda={lam!r}: lambda*|u|/|f| = {d['contraction']:.6g}, "
              f"boundary residual {d['boundary_residual']:.3g}")
    identity = {}
    for lam, mu in zip(lams, lams[1:]):
        res = (sols[lam] - sols[mu] - resolvent(doc.graph, doc.wentzell, sols[mu], lam, bm) * (mu - lam)).norm()
        identity[f"{lam!r},{mu!r}"] = res
        print(f"resolvent identity residual ({lam!r}, {mu!r}): {res:.3e}")
    diag["resolvent_identity"] = identity
    run.write(f"solve_{args.function}.json", _json(_clean(diag)))
    return run.finish(EXIT_OK, {"resolvent_identity": identity})


def cmd_scan_det(args, run: Run) -> int:
    doc = read_spec(args.spec)
    bm = assemble_boundary_matrices(doc.graph, doc.wentzell)
    kappas = np.linspace(args.kappa_min, args.kappa_max, args.steps)
    r_est, profile = find_invertibility_radius(bm, kappas)
    header = ["kappa"]
    for name in ("z_plus", "z_minus", "z"):
        header += [f"re_det_{name}", f"im_det_{name}", f"abs_det_{name}"]
    header += ["ndet_z_plus", "ndet_z_minus"]
    rows = []
    for p in profile:
        row = [float(np.real(p["kappa"]))]
        for name in ("z_plus", "z_minus", "z"):
            d = complex(p[f"det_{name}"])
            row += [d.real, d.imag, abs(d)]
        rows.append(row + [p["ndet_z_plus"], p["ndet_z_minus"]])
    run.write("scan_det.csv", _csv(header, rows))
    summary = {"R_est": r_est, "kappa_min": args.kappa_min, "kappa_max": args.kappa_max,
               "steps": args.steps}
    run.write("scan_det.json", _json(summary))
    print(f"R_est = {r_est!r}")
    return run.finish(EXIT_OK, summary)


def _sim_config(args, graph):
    return mc.SimConfig(eps=args.eps, seed=args.seed, n_paths=args.paths).check(graph)


def _hitting_oracle(graph, start, target, lam):
    """Closed form when the start lies on an external edge glued at the target."""
    if isinstance(start, EdgePoint) and graph.is_external(start.edge) \
            and graph.edge(start.edge).vertex == target:
        return math.exp(-math.sqrt(2 * lam) * start.x)
    return None


def cmd_simulate(args, run: Run) -> int:
    doc = read_spec(args.spec)
    g, w = doc.graph, doc.wentzell
    cfg = _sim_config(args, g)
    start = parse_point(g, args.start)
    report = {"estimator": args.estimator, "start": format_point(start), "eps": cfg.eps,
              "seed": cfg.seed, "n_paths": cfg.n_paths}
    oracle = None
    if args.estimator == "resolvent":
        lam = args.lam[0]
        fn = doc.function(args.function)
        res = mc.estimate_resolvent(g, w, start, fn, lam, cfg)
        try:
            oracle = apply_resolvent(g, w, fn.sample(_grid(doc, fn, lam, args)), lam).u(start)
        except NumericalError as exc:
            report["oracle_error"] = str(exc)
    elif args.estimator == "hitting":
        lam = args.lam[0]
        if not args.target:
            raise ValidationError("--target VERTEX is required for the hitting estimator")
        res = mc.estimate_hitting_laplace(g, w, start, args.target, lam, cfg)
        oracle = _hitting_oracle(g, start, args.target, lam)
    else:
        if args.t is None:
            raise ValidationError("--t is required for the semigroup estimator")
        fn = doc.function(args.function)
        res = mc.estimate_semigroup(g, w, start, fn, args.t, cfg)
        if g.is_compact:
            grid = EdgeGrid(g, args.h)
            ser = apply_semigroup(g, w, fn.sample(grid), args.t)
            oracle = ser.u(start)
            report["series"] = {"lam_base": ser.lam_base, "n_terms": ser.n_terms,
                                "certificate": ser.certificate, "amplification": ser.amplification}
    report["result"] = res.as_dict()
    if oracle is not None:
        report["oracle"] = oracle
        report["z"] = res.zscore(oracle)
    if args.trajectories:
        rng = np.random.Generator(np.random.Philox(key=cfg.seed, counter=0))
        horizon = args.t or 1.0
        rows = []
        for k in range(args.trajectories):
            tr = mc.simulate_path(rng, g, w, start, horizon, cfg.eps)
            rows.extend((k, t, loc, x) for t, loc, x in tr.rows())
        run.write(f"trajectories_{args.estimator}.csv", _csv(("path", "time", "location", "x"), rows))
    run.write(f"simulate_{args.estimator}.json", _json(_clean(report)))
    line = f"estimate {res.estimate!r} +- {res.stderr:.3g}"
    if oracle is not None:
        line += f"; oracle {oracle!r}, z = {report['z']:.2f}"
    print(line)
    return run.finish(EXIT_OK, {"estimate": res.estimate, "stderr": res.stderr,
                                "oracle": oracle})


def cmd_compare(args, run: Run) -> int:
    doc = read_spec(args.spec)
    g, w = doc.graph, doc.wentzell
    cfg = _sim_config(args, g)
    fn = doc.function(args.function)
    lam = args.lam[0]
    start = parse_point(g, args.start)
    vertex = args.vertex or g.vertices[0]
    checks = {}
    fnorm = None

    def z_ok(est, ref, budget=0.0):
        d = abs(est.estimate - ref)
        return d <= Z_LIMIT * est.stderr + budget

    try:
        grid = _grid(doc, fn, lam, args)
        f = fn.sample(grid)
        fnorm = f.norm()
        u = apply_resolvent(g, w, f, lam).u
        ref = u(start)
        est = mc.estimate_resolvent(g, w, start, fn, lam, cfg)
        checks["resolvent"] = {"mc": est.estimate, "stderr": est.stderr, "oracle": ref,
                               "z": est.zscore(ref), "bias_budget": BIAS_BUDGET * fnorm,
                               "pass": z_ok(est, ref, BIAS_BUDGET * fnorm)}
        rv = u(Vertex(vertex))
        lhs = mc.estimate_resolvent(g, w, start, fn, lam, mc.SimConfig(cfg.eps, cfg.seed + 1, cfg.n_paths))
        rhs = mc.estimate_decomposition(g, w, start, vertex, fn, lam, rv, cfg)
        comb = math.hypot(lhs.stderr, rhs.stderr)
        checks["decomposition"] = {"lhs": lhs.estimate, "rhs": rhs.estimate, "combined_stderr": comb,
                                   "vertex": vertex,
                                   "pass": abs(lhs.estimate - rhs.estimate) <= Z_LIMIT * comb + 1e-15}
    except NumericalError as exc:
        checks["resolvent"] = {"pass": False, "error": type(exc).__name__, "message": str(exc)}
    if g.is_compact:
        grid = EdgeGrid(g, args.h)
        t = args.t if args.t is not None else 0.1
        ser = apply_semigroup(g, w, fn.sample(grid), t)
        est = mc.estimate_semigroup(g, w, start, fn, t, cfg)
        ref = ser.u(start)
        checks["semigroup"] = {"t": t, "mc": est.estimate, "stderr": est.stderr, "series": ref,
                               "certificate": ser.certificate,
                               "pass": abs(est.estimate - ref) <= 2e-2 + Z_LIMIT * est.stderr}
    else:
        checks["semigroup"] = {"skipped": "series check runs on compact graphs only", "pass": True}
    ok = all(c["pass"] for c in checks.values())
    run.write(f"compare_{args.function}.json", _json(_clean({"checks": checks, "norm_f": fnorm})))
    for name, c in checks.items():
        print(f"{name}: {'PASS' if c['pass'] else 'FAIL'}")
    return run.finish(EXIT_OK if ok else EXIT_COMPARISON, {k: c["pass"] for k, c in checks.items()})


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metricbm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--spec", required=True, help="graph specification document (YAML)")
        sp.add_argument("--out", default=None, help="output directory")
        return sp

    def grid_flags(sp):
        sp.add_argument("--h", type=float, default=None, help="grid step")
        sp.add_argument("--truncation", type=float, default=None,
                        help="external truncation in units of 1/kappa beyond the support (default 24)")

    def mc_flags(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--paths", type=int, default=100_000)
        sp.add_argument("--eps", type=float, default=0.01)

    sp = common(sub.add_parser("validate", help="check a spec and classify vertices"))
    sp.set_defaults(func=cmd_validate)

    sp = common(sub.add_parser("solve", help="resolvent of a named function"))
    sp.add_argument("--function", required=True)
    sp.add_argument("--lambda", dest="lam", type=_floats, required=True)
    grid_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = common(sub.add_parser("scan-det", help="determinant scan of the boundary matrices"))
    sp.add_argument("--kappa-min", type=float, default=0.0)
    sp.add_argument("--kappa-max", type=float, default=10.0)
    sp.add_argument("--steps", type=int, default=201)
    sp.set_defaults(func=cmd_scan_det)

    sp = common(sub.add_parser("simulate", help="Monte Carlo estimators"))
    sp.add_argument("--estimator", choices=("resolvent", "hitting", "semigroup"), required=True)
    sp.add_argument("--start", required=True, help="EDGE:X or VERTEX:ID")
    sp.add_argument("--function", default=None)
    sp.add_argument("--lambda", dest="lam", type=_floats, default=[1.0])
    sp.add_argument("--t", type=float, default=None)
    sp.add_argument("--target", default=None, help="target vertex for the hitting estimator")
    sp.add_argument("--trajectories", type=int, default=0, help="also dump this many trajectories")
    mc_flags(sp)
    grid_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("compare", help="analytic versus Monte Carlo consistency checks"))
    sp.add_argument("--function", required=True)
    sp.add_argument("--lambda", dest="lam", type=_floats, default=[1.0])
    sp.add_argument("--start", required=True)
    sp.add_argument("--vertex", default=None, help="vertex for the first-passage decomposition")
    sp.add_argument("--t", type=float, default=None)
    mc_flags(sp)
    grid_flags(sp)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    run = Run(args, args.command, argv)
    try:
        return args.func(args, run)
    except ValidationError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return run.finish(EXIT_VALIDATION, {"error": exc.code, "message": str(exc)})
    except NumericalError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return run.finish(EXIT_NUMERICAL, {"error": exc.code, "message": str(exc)})
    except MetricBMError as exc:  # pragma: no cover - every subclass is one of the above
        print(f"error: {exc}", file=sys.stderr)
        return run.finish(EXIT_NUMERICAL, {"error": "error", "message": str(exc)})


if __name__ == "__main__":
    sys.exit(main())
