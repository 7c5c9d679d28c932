"""Command line front end.

Every command reads a network (``--spec FILE`` or ``--fixture NAME``), runs one
computation and writes JSON (default), CSV or a two-column plot file. Outputs
embed the run configuration and the library version. Exit codes: 0 success,
1 negative verdict, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bratteli import (BratteliDiagram, DiagramError, DiagramNetwork, diagram_from_spec, energy_lower_bound,
                       extend_sequence, harmonic_exists, harmonic_residuals, level_energy,
                       level_function, pascal_diagram, stationary_diagram, subspace_distance, transposition_gap,
                       harmonic_extend)
from .model_library import (FIXTURES, Lattice, binary_tree_fixture, get_fixture, line_fixture)
from .network_core import (ExplicitNetwork, InvalidVertexError, Network, NumericalFailure, PreconditionError,
                           WindowTooSmallError, format_vertex, materialize_ball, validate)
from .operators import VertexFunction, energy_form
from .potential import WindowTooLarge, dipole, gauss_green_split, monopole, multipole
from .random_walk import (default_workers, dipole_probabilistic, green_mc, green_truncated, hitting_matrix_D,
                          monopole_probabilistic, transience_test, _increment_ratio)
from .transfer import (TransferError, TransferSystem, apply_transfer, conductance_symmetry_gap,
                       finite_energy_series, induced_diagram, inner, norm, q_times_M, total_conductance,
                       transfer_from_spec)

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

STOCHASTIC = {"hitting", "transience", "transfer-check"}


class SpecError(ValueError):
    pass


class Negative(Exception):
    """A computation that ran but answered no (refused monopole, recurrence...)."""


@dataclass
class RunConfig:
    command: str
    source: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    workers: int = 1
    tolerance: float | None = None
    out: str | None = None
    format: str = "json"

    def validate(self):
        if self.workers < 1:
            raise SpecError("--workers must be positive")
        if self.tolerance is not None and not self.tolerance > 0:
            raise SpecError("--tol must be positive")
        for k in ("samples", "horizon", "N", "radius", "depth", "last"):
            v = self.params.get(k)
            if v is not None and not v > 0:
                raise SpecError(f"--{k} must be positive")
        if self.params.get("stochastic") and self.seed is None:
            raise SpecError(f"'{self.command}' is stochastic; --seed is required")


# ------------------------------------------------------------------ specs

NETWORK_MODELS = ("line_n0_linear", "line_z_unit", "line_z_summable", "line_z_geometric", "line_n0_geometric",
                  "binary_tree", "pascal", "stationary_bratteli", "lattice_zd", "explicit", "bratteli", "transfer")


def _vertex_from_json(v):
    if isinstance(v, list):
        return tuple(int(t) for t in v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, str):
        from .network_core import parse_vertex
        return parse_vertex(v)
    raise SpecError(f"cannot read vertex {v!r}")


def build_from_spec(spec: dict):
    """Object described by a parsed spec: a Network, a BratteliDiagram or a TransferSystem."""
    if not isinstance(spec, dict):
        raise SpecError("spec must be a JSON object")
    model = spec.get("model")
    if model not in NETWORK_MODELS:
        raise SpecError(f"field 'model': expected one of {', '.join(NETWORK_MODELS)}, got {model!r}")
    p = spec.get("params", {})
    if not isinstance(p, dict):
        raise SpecError("field 'params' must be an object")
    lam = float(p.get("lambda", 2.0))
    try:
        if model.startswith("line_"):
            kw = {"side": p["side"]} if "side" in p else {}
            return line_fixture(model[5:], lam, **kw).net
        if model == "binary_tree":
            return binary_tree_fixture(float(p.get("lambda", 1.0))).net
        if model == "pascal":
            return pascal_diagram(int(p.get("depth", 12)), float(p.get("lambda", 1.0)))
        if model == "stationary_bratteli":
            if "A" not in p:
                raise SpecError("field 'params.A': incidence matrix required")
            return stationary_diagram(p["A"], int(p.get("depth", 12)), lam)
        if model == "lattice_zd":
            d = int(p.get("d", 2))
            if d < 1:
                raise SpecError("field 'params.d' must be a positive integer")
            return line_fixture("z_unit").net if d == 1 else Lattice(d)
        if model == "bratteli":
            return diagram_from_spec(p)
        if model == "transfer":
            return transfer_from_spec(p)
        edges = p.get("edges")
        if not isinstance(edges, list) or not edges:
            raise SpecError("field 'params.edges': nonempty list of [x, y, c] required")
        rows = []
        for k, e in enumerate(edges):
            if not isinstance(e, list) or len(e) != 3:
                raise SpecError(f"field 'params.edges[{k}]': expected [x, y, c]")
            rows.append((_vertex_from_json(e[0]), _vertex_from_json(e[1]), e[2]))
        origin = _vertex_from_json(p["origin"]) if "origin" in p else None
        return ExplicitNetwork(rows, origin=origin, name=spec.get("name", "explicit"))
    except KeyError as e:
        raise SpecError(f"field 'params.{e.args[0]}' missing") from None


def parse_spec(path):
    """Read a spec file and build the object it describes."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise SpecError(f"cannot read spec {path}: {e.strerror}") from None
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    return build_from_spec(spec)


def _as_network(obj) -> Network:
    if isinstance(obj, Network):
        return obj
    if isinstance(obj, BratteliDiagram):
        return DiagramNetwork(obj)
    if isinstance(obj, TransferSystem):
        return DiagramNetwork(induced_diagram(obj))
    raise SpecError("this command needs a network")


def _as_diagram(obj) -> BratteliDiagram:
    if isinstance(obj, BratteliDiagram):
        return obj
    if isinstance(obj, DiagramNetwork):
        return obj.diagram
    if isinstance(obj, TransferSystem):
        return induced_diagram(obj)
    raise SpecError("this command needs a diagram (pascal, stationary_bratteli or bratteli)")


def _fixture_params(args) -> dict:
    p = {}
    if args.lam is not None:
        p["lam"] = args.lam
    if args.depth is not None:
        p["depth"] = args.depth
    if args.A is not None:
        p["A"] = json.loads(args.A)
    if args.side is not None:
        p["side"] = args.side
    return p


def _load(args):
    """(object, fixture or None) from --spec or --fixture."""
    if args.spec and args.fixture:
        raise SpecError("give either --spec or --fixture, not both")
    if args.spec:
        return parse_spec(args.spec), None
    if not args.fixture:
        raise SpecError("a network is required: --spec FILE or --fixture NAME")
    if args.fixture == "pascal_binomial":
        return transfer_from_spec({"fixture": "pascal_binomial", "depth": args.depth or 20}), None
    fx = get_fixture(args.fixture, **_fixture_params(args))
    return fx.net, fx


# ---------------------------------------------------------------- helpers

def _vertices(net: Network, text: str | None, name: str):
    if text is None:
        raise SpecError(f"--{name} is required")
    return net.parse_vertex(text)


def _vertex_list(net: Network, text: str | None) -> list:
    if not text:
        return []
    return [net.parse_vertex(t) for t in text.split(";") if t.strip()]


def _floats(text: str | None) -> list | None:
    if text is None:
        return None
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str | None) -> list | None:
    if text is None:
        return None
    return [int(t) for t in text.split(",") if t.strip()]


def _function_rows(values: dict, stderr: dict | None = None) -> list[dict]:
    rows = []
    for x in sorted(values):
        r = {"vertex": format_vertex(x), "value": values[x]}
        if stderr is not None:
            r["stderr"] = stderr[x]
        rows.append(r)
    return rows


def _jsonable(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


@dataclass
class Result:
    payload: dict
    rows: list | None = None          # CSV table
    series: list | None = None        # (x, value) pairs for the plot format
    code: int = EXIT_OK
    fields: list | None = None        # CSV header when rows may be empty


def render(cfg: RunConfig, res: Result) -> str:
    meta = {"harmonet_version": __version__, "run_config": asdict(cfg)}
    if cfg.format == "json":
        doc = {**meta, "result": res.payload}
        return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"
    head = "# " + json.dumps(meta, sort_keys=True, default=_jsonable) + "\n"
    if cfg.format == "csv":
        rows = res.rows
        if rows is None:
            rows = [{"key": k, "value": json.dumps(v, sort_keys=True, default=_jsonable)}
                    for k, v in sorted(res.payload.items())]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else (res.fields or ["key", "value"]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return head + buf.getvalue()
    if res.series is None:
        raise SpecError(f"'{cfg.command}' has no plot-ready series; use --format json or csv")
    return head + "".join(f"{x!r} {y!r}\n" for x, y in res.series)


# --------------------------------------------------------------- commands

def cmd_fixtures(args, cfg) -> Result:
    if args.list or not args.export:
        names = sorted(FIXTURES) + ["pascal_binomial"]
        return Result({"fixtures": names}, [{"name": n} for n in names])
    fx = get_fixture(args.export, **_fixture_params(args))
    form = args.form or ("harmonic" if "harmonic" in fx.closed_forms else next(iter(fx.closed_forms), "harmonic"))
    if form not in fx.closed_forms:
        raise SpecError(f"fixture {fx.name!r} has closed forms {sorted(fx.closed_forms)}, not {form!r}")
    fn = fx.closed_forms[form]
    if form == "harmonic_family":
        f1 = _floats(args.f1)
        if f1 is None:
            raise SpecError("--f1 is required for the stationary family")
        level = fn(f1)
        last = args.last or 8
        rows = [{"level": n, "index": i, "value": float(v)} for n in range(last + 1) for i, v in enumerate(level(n))]
        return Result({"form": form, "levels": [level(n).tolist() for n in range(last + 1)]}, rows)
    if form == "dipole":
        if args.y is None:
            raise SpecError("--y is required for the dipole closed form")
        fn = fn(int(args.y))
    w = materialize_ball(fx.net, fx.net.origin, args.radius or 6)
    vals = {x: float(fn(x)) for x in w.vertices}
    series = [(x if isinstance(x, int) else k, vals[x]) for k, x in enumerate(sorted(vals))]
    return Result({"fixture": fx.name, "form": form, "values": {format_vertex(x): v for x, v in sorted(vals.items())}},
                  _function_rows(vals), series)


def cmd_validate(args, cfg) -> Result:
    obj, _ = _load(args)
    net = _as_network(obj)
    if net.finite:
        report = validate(net)
    else:
        report = validate(net, materialize_ball(net, net.origin, args.radius or 4))
    rows = [{"kind": v.kind, "x": format_vertex(v.vertex),
             "y": format_vertex(v.other) if v.other is not None else "", "detail": v.detail} for v in report]
    return Result({"network": net.name, "violations": rows, "valid": not rows}, rows,
                  code=EXIT_OK if not rows else EXIT_NEGATIVE, fields=["kind", "x", "y", "detail"])


def cmd_harmonic(args, cfg) -> Result:
    obj, _ = _load(args)
    d = _as_diagram(obj)
    last = args.last or 10
    f1 = _floats(args.f1)
    if f1 is None:
        raise SpecError("--f1 is required")
    f0 = _floats(args.f0) or [0.0] * d.level_size(0)
    f, exts = extend_sequence(d, f0, f1, last, form=args.form)
    other = "arrow" if args.form == "conductance" else "conductance"
    dists = [subspace_distance(e, harmonic_extend(d, e.level, f[e.level - 1], f[e.level], other)) for e in exts]
    feasible = all(e.feasible for e in exts)
    rows = [{"level": n, "index": i, "value": float(v)} for n, lv in enumerate(f) for i, v in enumerate(lv)]
    payload = {"diagram": d.name, "form": args.form, "levels": [lv.tolist() for lv in f],
               "solution_dims": [e.dim for e in exts], "residuals": [e.residual for e in exts],
               "form_distance": dists, "feasible": feasible,
               "harmonic_residuals": harmonic_residuals(d, f)}
    return Result(payload, rows, [(n, float(np.max(lv))) for n, lv in enumerate(f)],
                  EXIT_OK if feasible else EXIT_NEGATIVE)


def _potential_result(res, extra=None) -> Result:
    payload = res.to_json()
    if extra:
        payload.update(extra)
    vals = res.function.as_dict()
    return Result(payload, _function_rows(vals), list(zip(res.radii, res.energy_by_radius)))


def cmd_dipole(args, cfg) -> Result:
    obj, _ = _load(args)
    net = _as_network(obj)
    x, y = _vertices(net, args.x, "x"), _vertices(net, args.y, "y")
    res = dipole(net, x, y, radii=_ints(args.radii), boundary=args.boundary)
    out = _potential_result(res, {"resistance_distance": res.energy})
    out.code = EXIT_OK if res.converged else EXIT_NEGATIVE
    return out


def cmd_monopole(args, cfg) -> Result:
    obj, _ = _load(args)
    net = _as_network(obj)
    x = _vertices(net, args.x, "x")
    if args.method == "probabilistic":
        if cfg.seed is None:
            raise SpecError("the probabilistic monopole is stochastic; --seed is required")
        pts = _vertex_list(net, args.points) or list(materialize_ball(net, x, 2).vertices)
        try:
            est = monopole_probabilistic(net, x, pts, samples=args.samples or 20_000,
                                         horizon=args.horizon or 10_000, seed=cfg.seed, workers=cfg.workers)
        except PreconditionError as e:
            raise Negative(str(e)) from None
        payload = {"values": {format_vertex(a): v for a, v in sorted(est.values.items())},
                   "stderr": {format_vertex(a): v for a, v in sorted(est.stderr.items())},
                   "residual": est.residual, **est.extra}
        return Result(payload, _function_rows(est.values, est.stderr))
    try:
        res = monopole(net, x, radii=_ints(args.radii))
    except PreconditionError as e:
        raise Negative(str(e)) from None
    out = _potential_result(res)
    if res.verdict == "recurrent-consistent":
        out.code = EXIT_NEGATIVE
    return out


def cmd_multipole(args, cfg) -> Result:
    obj, _ = _load(args)
    net = _as_network(obj)
    x0 = _vertices(net, args.x, "x")
    if not args.points:
        raise SpecError("--points 'v:alpha;v:alpha' is required")
    pts = []
    for item in args.points.split(";"):
        v, _, a = item.rpartition(":")
        pts.append((net.parse_vertex(v), float(a)))
    res = multipole(net, x0, pts, radii=_ints(args.radii), boundary=args.boundary)
    out = _potential_result(res)
    out.code = EXIT_OK if res.converged else EXIT_NEGATIVE
    return out


def cmd_green(args, cfg) -> Result:
    obj, _ = _load(args)
    net = _as_network(obj)
    x, y = _vertices(net, args.x, "x"), _vertices(net, args.y or args.x, "y")
    N = args.N or 1000
    sums = green_truncated(net, x, y, N)
    r = _increment_ratio(sums) if N >= 8 else float("nan")
    flag = ("transient-consistent" if r < 0.85 else "recurrent-consistent" if r >= 0.95 else "inconclusive")
    payload = {"x": format_vertex(x), "y": format_vertex(y), "N": N, "partial_sums": sums.tolist(),
               "increment_ratio": r, "flag": flag}
    if args.samples:
        if cfg.seed is None:
            raise SpecError("the Monte Carlo estimate is stochastic; --seed is required")
        payload["monte_carlo"] = green_mc(net, x, y, args.samples, args.horizon or N, cfg.seed,
                                          cfg.workers).to_json()
    rows = [{"n": n, "partial_sum": float(s)} for n, s in enumerate(sums)]
    return Result(payload, rows, [(n, float(s)) for n, s in enumerate(sums)],
                  EXIT_NEGATIVE if flag == "recurrent-consistent" else EXIT_OK)


def cmd_hitting(args, cfg) -> Result:
    obj, _ = _load(args)
    net = _as_network(obj)
    x1, x2 = _vertices(net, args.x, "x"), _vertices(net, args.y, "y")
    samples = args.samples or 20_000
    horizon = args.horizon or 10_000
    D = hitting_matrix_D(net, x1, x2, samples, horizon, cfg.seed, cfg.workers)
    payload = {"D": D.to_json()}
    rows = None
    pts = _vertex_list(net, args.points)
    if pts:
        try:
            est = dipole_probabilistic(net, x1, x2, pts, samples, horizon, cfg.seed, cfg.workers, D=D)
        except PreconditionError as e:
            raise Negative(str(e)) from None
        payload["dipole"] = {"coefficients": est.coefficients,
                             "values": {format_vertex(a): v for a, v in sorted(est.from_hitting.values.items())},
                             "stderr": {format_vertex(a): v for a, v in sorted(est.from_hitting.stderr.items())},
                             "from_monopoles": {format_vertex(a): v
                                                for a, v in sorted(est.from_monopoles.values.items())}}
        rows = _function_rows(est.from_hitting.values, est.from_hitting.stderr)
    return Result(payload, rows, code=EXIT_NEGATIVE if D.singular else EXIT_OK)


def cmd_transience(args, cfg) -> Result:
    obj, _ = _load(args)
    net = _as_network(obj)
    x = _vertices(net, args.x, "x") if args.x else None
    kw = {}
    if args.samples:
        kw["samples"] = args.samples
    if args.horizon:
        kw["horizon"] = args.horizon
    rep = transience_test(net, x, seed=cfg.seed, workers=cfg.workers, **kw)
    return Result(rep.to_json(), code=EXIT_OK if rep.verdict == "transient" else EXIT_NEGATIVE)


def _closed_form(fx, name):
    if fx is None or name not in fx.closed_forms:
        have = sorted(fx.closed_forms) if fx else []
        raise SpecError(f"needs a fixture with closed form {name!r} (available: {have})")
    return fx.closed_forms[name]


def cmd_energy(args, cfg) -> Result:
    obj, fx = _load(args)
    form = args.form or "harmonic"
    if isinstance(obj, DiagramNetwork) or isinstance(obj, BratteliDiagram):
        d = _as_diagram(obj)
        N = args.N or 20
        if fx is not None and form == "harmonic_family":
            f1 = _floats(args.f1)
            if f1 is None:
                raise SpecError("--f1 is required for the stationary family")
            lv = fx.closed_forms[form](f1)
            f = [lv(n) for n in range(N + 2)]
        else:
            f = level_function(d, _closed_form(fx, form), N + 1)
        b = energy_lower_bound(d, f, N)
        payload = {"first_current": b.first_current, "beta": b.beta, "sizes": b.sizes, "bound": b.partial_sums,
                   "measured": b.measured, "series": b.series, "verdict": b.verdict,
                   "informative": b.informative}
        rows = [{"N": n, "bound": b.partial_sums[n], "measured": b.measured[n]} for n in range(N + 1)]
        return Result(payload, rows, [(n, m) for n, m in enumerate(b.measured)])
    net = _as_network(obj)
    fn = _closed_form(fx, form)
    radii = _ints(args.radii) or [2, 4, 8, 16]
    energies = []
    for R in radii:
        w = materialize_ball(net, net.origin, R)
        u = VertexFunction.from_callable(w, fn)
        energies.append(energy_form(net, u, u))
    return Result({"form": form, "radii": radii, "energy_by_radius": energies},
                  [{"radius": R, "energy": e} for R, e in zip(radii, energies)], list(zip(radii, energies)))


def cmd_gauss_green(args, cfg) -> Result:
    obj, fx = _load(args)
    net = _as_network(obj)
    if net.finite:
        if cfg.seed is None:
            raise SpecError("random test functions need --seed")
        rng = np.random.default_rng(cfg.seed)
        verts = net.vertices()
        uu = dict(zip(verts, rng.standard_normal(len(verts)).tolist()))
        vv = dict(zip(verts, rng.standard_normal(len(verts)).tolist()))
        recs = gauss_green_split(net, uu.__getitem__, vv.__getitem__, [verts])
    else:
        fn = _closed_form(fx, args.form or "harmonic")
        radii = _ints(args.radii) or [5, 10, 20, 40]
        ex = [list(materialize_ball(net, net.origin, R).vertices) for R in radii]
        recs = gauss_green_split(net, fn, fn, ex)
    rows = [{"size": r.size, "interior_sum": r.interior_sum, "boundary_sum": r.boundary_sum,
             "inner_product": r.inner_product, "defect": r.defect} for r in recs]
    return Result({"records": rows}, rows, [(r.size, r.boundary_sum) for r in recs])


def cmd_bratteli_check(args, cfg) -> Result:
    obj, _ = _load(args)
    d = _as_diagram(obj)
    depth = args.depth or 6
    payload = {"diagram": d.name, "sizes": [d.level_size(n) for n in range(depth + 1)]}
    if d.level_size(0) == 1:
        rep = harmonic_exists(d, depth)
        payload.update({"exists": rep.exists, "failing_level": rep.failing_level, "prefix_dims": rep.prefix_dims,
                        "criterion_dims": rep.criterion_dims, "full_rank_shortcut": rep.full_rank_shortcut})
        code = EXIT_OK if rep.exists else EXIT_NEGATIVE
    else:
        code = EXIT_OK
    payload["transposition_gap"] = [transposition_gap(d, n) for n in range(min(depth, 6) - 1)]
    return Result(payload, code=code)


def cmd_transfer_check(args, cfg) -> Result:
    obj, _ = _load(args)
    if not isinstance(obj, TransferSystem):
        raise SpecError("transfer-check needs a transfer system (model 'transfer' or fixture pascal_binomial)")
    s = obj
    rng = np.random.default_rng(cfg.seed)
    trials = args.samples or 100
    adj, contr = 0.0, 0.0
    for n in range(s.depth):
        for _ in range(trials):
            f = rng.standard_normal(s.level_size(n + 1))
            g = rng.standard_normal(s.level_size(n))
            lhs = inner(s, n, apply_transfer(s, "R", n, f), g)
            rhs = inner(s, n + 1, f, apply_transfer(s, "S", n, g))
            adj = max(adj, abs(lhs - rhs) / max(1.0, abs(lhs)))
            contr = max(contr, norm(s, n, apply_transfer(s, "R", n, f)) - norm(s, n + 1, f),
                        norm(s, n + 1, apply_transfer(s, "S", n, g)) - norm(s, n, g))
    cq = max(float(np.max(np.abs(total_conductance(s, n) - s.q[n]))) for n in range(1, s.depth))
    qm = 0.0
    for n in range(1, s.depth):
        back, fwd = q_times_M(s, n)
        qm = max(qm, float(np.max(np.abs(back - 0.5 * s.q[n - 1]))), float(np.max(np.abs(fwd - 0.5 * s.q[n + 1]))))
    f = [np.arange(s.level_size(n), dtype=float) for n in range(s.depth + 1)]
    es = finite_energy_series(s, f)
    d = induced_diagram(s)
    direct = np.cumsum([level_energy(d, f, n) for n in range(s.depth)])
    gap = float(np.max(np.abs(np.asarray(es.energy_partial_sums) - direct)))
    tol = cfg.tolerance or 1e-12
    checks = {"adjointness": adj, "contractivity_excess": contr, "total_conductance_equals_q": cq,
              "q_M_identity": qm, "conductance_symmetry": conductance_symmetry_gap(s), "energy_series_gap": gap}
    ok = adj <= tol and contr <= tol and cq <= tol and qm <= tol and gap <= 1e-9
    return Result({"depth": s.depth, "checks": checks, "ok": ok, "series_partial_sums": es.partial_sums,
                   "energy_partial_sums": es.energy_partial_sums, "direct_energy": direct.tolist()},
                  [{"check": k, "value": v} for k, v in checks.items()],
                  code=EXIT_OK if ok else EXIT_NEGATIVE)


COMMANDS = {
    "validate": cmd_validate, "harmonic": cmd_harmonic, "dipole": cmd_dipole, "monopole": cmd_monopole,
    "multipole": cmd_multipole, "green": cmd_green, "hitting": cmd_hitting, "transience": cmd_transience,
    "energy": cmd_energy, "gauss-green": cmd_gauss_green, "bratteli-check": cmd_bratteli_check,
    "transfer-check": cmd_transfer_check, "fixtures": cmd_fixtures,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("network")
    src.add_argument("--spec", help="network/diagram/transfer spec file (JSON)")
    src.add_argument("--fixture", help="fixture name (see 'fixtures --list')")
    src.add_argument("--lambda", dest="lam", type=float, help="fixture parameter lambda")
    src.add_argument("--depth", type=int, help="diagram depth")
    src.add_argument("--A", help="stationary incidence matrix as JSON, e.g. [[2,1],[1,2]]")
    src.add_argument("--side", choices=["both", "right"], help="summable line: both sides or the half-line")
    op = common.add_argument_group("operation")
    op.add_argument("--x", help="vertex, e.g. root, 3 or 2,1")
    op.add_argument("--y", help="second vertex")
    op.add_argument("--points", help="vertex list separated by ';' (multipole: 'v:alpha;...')")
    op.add_argument("--radii", help="radius schedule, e.g. 2,4,8,16")
    op.add_argument("--radius", type=int, help="window radius")
    op.add_argument("--boundary", choices=["grounded", "free"], default="grounded")
    op.add_argument("--N", type=int, help="number of steps or levels")
    op.add_argument("--last", type=int, help="last level")
    op.add_argument("--f0", help="level-0 values, comma separated")
    op.add_argument("--f1", help="level-1 values, comma separated")
    op.add_argument("--form", help="closed form name; for 'harmonic' the assembly (conductance|arrow)")
    op.add_argument("--method", choices=["truncation", "probabilistic"], default="truncation")
    op.add_argument("--samples", type=int)
    op.add_argument("--horizon", type=int)
    op.add_argument("--seed", type=int)
    op.add_argument("--tol", type=float)
    op.add_argument("--workers", type=int, default=None, help="worker count (default: $HARMONET_WORKERS or 1)")
    out = common.add_argument_group("output")
    out.add_argument("--out", help="output file (default: standard output)")
    out.add_argument("--format", choices=["json", "csv", "plot"], default="json")

    p = argparse.ArgumentParser(prog="harmonet", description="Potential theory on weighted networks.")
    p.add_argument("--version", action="version", version=f"harmonet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "fixtures":
            sp.add_argument("--list", action="store_true")
            sp.add_argument("--export", metavar="NAME", help="write a fixture closed form")
    return p


def _config(args) -> RunConfig:
    params = {k: v for k, v in sorted(vars(args).items())
              if k not in ("command", "spec", "fixture", "seed", "workers", "tol", "out", "format") and v is not None}
    if args.command in STOCHASTIC:
        params["stochastic"] = True
    source = f"spec:{args.spec}" if args.spec else f"fixture:{args.fixture}" if args.fixture else ""
    workers = args.workers if args.workers is not None else default_workers()
    return RunConfig(args.command, source, params, args.seed, workers, args.tol, args.out, args.format)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    if args.command == "harmonic" and args.form is None:
        args.form = "conductance"
    try:
        cfg = _config(args)
        cfg.validate()
        if args.command == "harmonic" and args.form not in ("conductance", "arrow"):
            raise SpecError("--form must be 'conductance' or 'arrow' for 'harmonic'")
        res = COMMANDS[args.command](args, cfg)
        text = render(cfg, res)
    except Negative as e:
        print(f"harmonet: {e}", file=sys.stderr)
        return EXIT_NEGATIVE
    except (WindowTooLarge, NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"harmonet: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except WindowTooSmallError as e:
        print(f"harmonet: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpecError, InvalidVertexError, PreconditionError, DiagramError, TransferError,
            ValueError, json.JSONDecodeError) as e:
        print(f"harmonet: {e}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.out:
        path = Path(cfg.out)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)
    if res.code == EXIT_NEGATIVE:
        print(f"harmonet: {args.command}: negative verdict", file=sys.stderr)
    return res.code


def main():
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
