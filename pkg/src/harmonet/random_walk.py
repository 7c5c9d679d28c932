"""Random walks with kernel p(x, y) = c_xy / c(x): hitting probabilities,
return probabilities, Green kernel estimates (Monte Carlo and truncated
series), probabilistic monopoles and dipoles, and a transience classifier.

Monte Carlo runs are split over workers. Worker k of replicate r draws from
its own Philox stream keyed by (seed, r, k) and results are reduced in worker
order, so a fixed seed and worker count reproduce every bit.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .network_core import (
    FiniteWindow,
    Network,
    PreconditionError,
    WindowTooSmallError,
    build_window,
    hop_distances,
    materialize_ball,
)
from .operators import VertexFunction
from .walkers import TableKernel

DEFAULT_SAMPLES = 100_000
DEFAULT_HORIZON = 10_000
GATE = 3.0


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("HARMONET_WORKERS", "1")))
    except ValueError:
        return 1


def streams(seed: int, workers: int, replicate: int = 0) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(workers)]


def _split(total: int, workers: int) -> list[int]:
    base, extra = divmod(total, workers)
    return [base + (k < extra) for k in range(workers)]


def _kernel(net: Network):
    k = net.walk_kernel()
    return k if k is not None else TableKernel(net)


@dataclass
class WalkEstimate:
    quantity: str
    point: float
    stderr: float
    samples: int
    horizon: int
    censored: float
    seed: int
    extra: dict = field(default_factory=dict)

    def interval(self, z: float = GATE) -> tuple[float, float]:
        return self.point - z * self.stderr, self.point + z * self.stderr

    def to_json(self) -> dict:
        return {"quantity": self.quantity, "point": self.point, "stderr": self.stderr, "samples": self.samples,
                "horizon": self.horizon, "censored": self.censored, "seed": self.seed, **self.extra}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ----------------------------------------------------------------- engine

@dataclass
class _Batch:
    hit: np.ndarray       # index of the first target hit, -1 none (censored), -2 escaped
    time: np.ndarray      # hitting time, -1 if none
    visits: np.ndarray    # visits to the counted row at times 0..horizon

    @property
    def censored(self) -> np.ndarray:
        return self.hit == -1


def _match(state: np.ndarray, targets: np.ndarray) -> np.ndarray:
    out = np.full(len(state), -1, dtype=np.int64)
    for k in range(len(targets) - 1, -1, -1):
        out[np.all(state == targets[k], axis=1)] = k
    return out


def _walk(kernel, rng, starts: np.ndarray, targets: np.ndarray, horizon: int, min_time: int,
          count: np.ndarray | None) -> _Batch:
    m = len(starts)
    hit = np.full(m, -1, dtype=np.int64)
    time = np.full(m, -1, dtype=np.int64)
    visits = np.zeros(m, dtype=np.int64)
    idx = np.arange(m)
    state = starts.copy()
    if count is not None:
        visits += np.all(state == count, axis=1)
    if min_time == 0 and len(targets):
        k = _match(state, targets)
        done = k >= 0
        hit[idx[done]] = k[done]
        time[idx[done]] = 0
        idx, state = idx[~done], state[~done]
    far_ref = targets if len(targets) else (count.reshape(1, -1) if count is not None else targets)
    for t in range(1, horizon + 1):
        if len(idx) == 0:
            break
        state = kernel.step(state, rng.random(len(idx)))
        if count is not None:
            visits[idx] += np.all(state == count, axis=1)
        stop = np.zeros(len(idx), dtype=bool)
        if len(targets):
            k = _match(state, targets)
            got = k >= 0
            hit[idx[got]] = k[got]
            time[idx[got]] = t
            stop |= got
        if len(far_ref):
            far = kernel.far(state, far_ref)
            if far is not None:
                far &= ~stop
                hit[idx[far]] = -2
                stop |= far
        if stop.any():
            idx, state = idx[~stop], state[~stop]
    return _Batch(hit, time, visits)


def _run(net: Network, start_vertices: Sequence, targets: Sequence, horizon: int, min_time: int,
         seed: int, workers: int | None, replicate: int, count=None) -> _Batch:
    """Walk one walker per entry of ``start_vertices`` (repeat entries for samples)."""
    workers = workers or default_workers()
    sizes = _split(len(start_vertices), workers)
    rngs = streams(seed, workers, replicate)
    kernels = [_kernel(net) for _ in range(workers)]
    for x in list(targets) + ([count] if count is not None else []):
        if not kernels[0].exact_for(x):
            raise PreconditionError(f"the walk kernel of {net.name} does not track {x!r} exactly")
    chunks, pos = [], 0
    for s in sizes:
        chunks.append(list(start_vertices[pos:pos + s]))
        pos += s

    def job(k):
        kern = kernels[k]
        if not chunks[k]:
            return _Batch(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64))
        uniq = list(dict.fromkeys(chunks[k]))
        enc = dict(zip(uniq, kern.encode(uniq)))
        st = np.array([enc[x] for x in chunks[k]], dtype=np.int64).reshape(len(chunks[k]), -1)
        tg = kern.encode(list(targets)) if len(targets) else np.zeros((0, st.shape[1]), np.int64)
        cnt = kern.encode([count])[0] if count is not None else None
        return _walk(kern, rngs[k], st, tg, horizon, min_time, cnt)

    if workers == 1:
        parts = [job(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, range(workers)))
    return _Batch(np.concatenate([p.hit for p in parts]), np.concatenate([p.time for p in parts]),
                  np.concatenate([p.visits for p in parts]))


def _binomial(k: int, n: int) -> tuple[float, float]:
    p = k / n
    return p, math.sqrt(max(p * (1 - p), 0.0) / n)


# ---------------------------------------------------------------- sampling

def sample_path(net: Network, start, stop, seed: int = 0) -> list:
    """One path from ``start``.

    ``stop`` is an int (number of steps), ``("hit", targets)`` or
    ``("hit", targets, horizon)``.
    """
    net.check_vertex(start)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    if isinstance(stop, (int, np.integer)):
        length, targets = int(stop), set()
    else:
        if stop[0] != "hit":
            raise ValueError("stop rule must be an int or ('hit', targets[, horizon])")
        targets = set(stop[1])
        length = int(stop[2]) if len(stop) > 2 else DEFAULT_HORIZON
    path = [start]
    x = start
    for _ in range(length):
        if x in targets and len(path) > 1:
            break
        nb = net.neighbors(x)
        cs = np.array([c for _, c in nb])
        cum = np.cumsum(cs) / cs.sum()
        k = min(int(np.searchsorted(cum, rng.random(), side="right")), len(nb) - 1)
        x = nb[k][0]
        path.append(x)
    return path


def estimate_F(net: Network, x, y, samples: int = DEFAULT_SAMPLES, horizon: int = DEFAULT_HORIZON,
               seed: int = 0, workers: int | None = None, replicate: int = 0) -> WalkEstimate:
    """Probability that the walk from x ever hits y (x != y). Walks still
    running at the horizon count as misses."""
    if x == y:
        raise PreconditionError("F(x, y) needs x != y")
    net.check_vertex(x)
    net.check_vertex(y)
    b = _run(net, [x] * samples, [y], horizon, 1, seed, workers, replicate)
    p, se = _binomial(int(np.sum(b.hit == 0)), samples)
    return WalkEstimate("F", p, se, samples, horizon, float(np.mean(b.censored)), seed,
                        {"x": str(x), "y": str(y), "escaped": float(np.mean(b.hit == -2))})


@dataclass
class ReturnEstimate:
    direct: WalkEstimate
    via_neighbors: WalkEstimate


def _return_run(net, x, samples, horizon, seed, workers, replicate):
    return _run(net, [x] * samples, [x], horizon, 1, seed, workers, replicate)


def estimate_U(net: Network, x, samples: int = DEFAULT_SAMPLES, horizon: int = DEFAULT_HORIZON,
               seed: int = 0, workers: int | None = None, replicate: int = 0) -> ReturnEstimate:
    """Return probability to x, by direct returns and by averaging F(y, x)
    over the first step."""
    net.check_vertex(x)
    b = _return_run(net, x, samples, horizon, seed, workers, replicate)
    p, se = _binomial(int(np.sum(b.hit == 0)), samples)
    direct = WalkEstimate("U", p, se, samples, horizon, float(np.mean(b.censored)), seed, {"x": str(x)})
    nb = net.neighbors(x)
    cx = math.fsum(c for _, c in nb)
    per = max(1, samples // len(nb))
    terms, var, cens = [], [], []
    for k, (y, c) in enumerate(nb):
        e = estimate_F(net, y, x, per, horizon, seed, workers, replicate=1000 * (replicate + 1) + k)
        terms.append(c / cx * e.point)
        var.append((c / cx * e.stderr) ** 2)
        cens.append(e.censored)
    via = WalkEstimate("U_via_F", math.fsum(terms), math.sqrt(math.fsum(var)), per * len(nb), horizon,
                       float(np.mean(cens)), seed, {"x": str(x)})
    return ReturnEstimate(direct, via)


def green_mc(net: Network, x, y, samples: int = DEFAULT_SAMPLES, horizon: int = DEFAULT_HORIZON,
             seed: int = 0, workers: int | None = None, replicate: int = 0) -> WalkEstimate:
    """Expected number of visits to y at times 0..horizon by the walk from x."""
    b = _run(net, [x] * samples, [], horizon, 1, seed, workers, replicate, count=y)
    v = b.visits.astype(float)
    se = float(np.std(v, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return WalkEstimate("G", float(np.mean(v)), se, samples, horizon, float(np.mean(b.hit == -1)), seed,
                        {"x": str(x), "y": str(y)})


# ------------------------------------------------------ truncated series

def kernel_matrix(window: FiniteWindow) -> sp.csr_matrix:
    """Transition kernel restricted to the window; rows use the full c(x), so
    rows at the window edge lose the mass that leaves."""
    n = len(window)
    rows = np.concatenate([window.edge_i, window.edge_j])
    cols = np.concatenate([window.edge_j, window.edge_i])
    data = np.concatenate([window.edge_c / window.c_total[window.edge_i],
                           window.edge_c / window.c_total[window.edge_j]])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _series(window: FiniteWindow, x, y, N: int) -> np.ndarray:
    P = kernel_matrix(window).T.tocsr()
    mu = np.zeros(len(window))
    mu[window.pos(x)] = 1.0
    j = window.pos(y)
    out = np.empty(N + 1)
    acc = 0.0
    for n in range(N + 1):
        acc += mu[j]
        out[n] = acc
        if n < N:
            mu = P @ mu
    return out


def green_truncated(net: Network, x, y, N: int, window: FiniteWindow | None = None) -> np.ndarray:
    """Partial sums sum_{n<=N} p^(n)(x, y) for n = 0..N.

    With no window, a network that offers a radial quotient at x uses it
    (exact: the level process is a Markov chain and the walk is uniform on
    each level); otherwise the hop ball of radius N around x is built. A given
    window must contain that ball.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    net.check_vertex(x)
    net.check_vertex(y)
    if window is None:
        q = net.radial_quotient(x)
        if q is not None:
            line, level, size = q
            ly = level(y)
            lw = materialize_ball(line, 0, N)
            if ly > N:
                return np.zeros(N + 1)
            return _series(lw, 0, ly, N) / size(ly)
        if net.finite:
            window = build_window(net, net.vertices())
        else:
            window = materialize_ball(net, x, N)
    elif not net.finite:
        ball = hop_distances(net, x, N)
        missing = [v for v in ball if v not in window]
        if missing:
            raise WindowTooSmallError(x, f"window too small: paths of length {N} from {x!r} need the "
                                         f"ball of radius {N}; {missing[0]!r} is missing")
    if y not in window:
        return np.zeros(N + 1)
    return _series(window, x, y, N)


def _increment_ratio(sums: np.ndarray) -> float:
    N = len(sums) - 1
    a = sums[N] - sums[N // 2]
    b = sums[N // 2] - sums[N // 4]
    if b <= 0:
        return 0.0 if a <= 0 else math.inf
    return float(a / b)


# -------------------------------------------------------------- identities

@dataclass
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    stderr: float

    @property
    def z(self) -> float:
        d = abs(self.lhs - self.rhs)
        if self.stderr == 0:
            return 0.0 if d == 0 else math.inf
        return d / self.stderr

    @property
    def ok(self) -> bool:
        return self.z <= GATE

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "stderr": self.stderr, "z": self.z,
                "ok": self.ok}


@dataclass
class IdentityReport:
    x: object
    y: object
    checks: list
    estimates: dict

    def get(self, name: str) -> IdentityCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"x": str(self.x), "y": str(self.y), "checks": [c.to_json() for c in self.checks],
                "estimates": {k: v.to_json() for k, v in self.estimates.items()}}


def green_identities_report(net: Network, x, y, samples: int = DEFAULT_SAMPLES, horizon: int = DEFAULT_HORIZON,
                            seed: int = 0, workers: int | None = None) -> IdentityReport:
    """Monte Carlo check of G(x,x)(1 - U(x,x)) = 1, G(x,y) = F(x,y) G(y,y),
    c(x) F(x,y) = c(y) F(y,x) and c(x) G(x,y) = c(y) G(y,x).

    Every estimate uses its own stream, so errors combine as independent.
    """
    cx, cy = net.total_conductance(x), net.total_conductance(y)
    est = {}
    est["U_xx"] = estimate_U(net, x, samples, horizon, seed, workers, replicate=1).direct
    est["G_xx"] = green_mc(net, x, x, samples, horizon, seed, workers, replicate=2)
    checks = [IdentityCheck("G(x,x)(1-U(x,x)) = 1", est["G_xx"].point * (1 - est["U_xx"].point), 1.0,
                            math.hypot(est["G_xx"].stderr * (1 - est["U_xx"].point),
                                       est["G_xx"].point * est["U_xx"].stderr))]
    if x != y:
        est["F_xy"] = estimate_F(net, x, y, samples, horizon, seed, workers, replicate=3)
        est["F_yx"] = estimate_F(net, y, x, samples, horizon, seed, workers, replicate=4)
        est["G_xy"] = green_mc(net, x, y, samples, horizon, seed, workers, replicate=5)
        est["G_yx"] = green_mc(net, y, x, samples, horizon, seed, workers, replicate=6)
        est["G_yy"] = green_mc(net, y, y, samples, horizon, seed, workers, replicate=7)
        F, Fr, G = est["F_xy"], est["F_yx"], est["G_xy"]
        Gyy = est["G_yy"]
        checks.append(IdentityCheck("G(x,y) = F(x,y) G(y,y)", G.point, F.point * Gyy.point,
                                    math.sqrt(G.stderr**2 + (F.stderr * Gyy.point) ** 2
                                              + (F.point * Gyy.stderr) ** 2)))
        checks.append(IdentityCheck("c(x) F(x,y) = c(y) F(y,x)", cx * F.point, cy * Fr.point,
                                    math.hypot(cx * F.stderr, cy * Fr.stderr)))
        checks.append(IdentityCheck("c(x) G(x,y) = c(y) G(y,x)", cx * G.point, cy * est["G_yx"].point,
                                    math.hypot(cx * G.stderr, cy * est["G_yx"].stderr)))
        checks.append(IdentityCheck("c(x) F(x,y) G(y,y) = c(y) F(y,x) G(x,x)", cx * F.point * Gyy.point,
                                    cy * Fr.point * est["G_xx"].point,
                                    math.sqrt((cx * F.stderr * Gyy.point) ** 2 + (cx * F.point * Gyy.stderr) ** 2
                                              + (cy * Fr.stderr * est["G_xx"].point) ** 2
                                              + (cy * Fr.point * est["G_xx"].stderr) ** 2)))
    return IdentityReport(x, y, checks, est)


# --------------------------------------------------------------- monopoles

@dataclass
class PointEstimates:
    """Values at a finite set of vertices with standard errors."""

    values: dict
    stderr: dict
    residual: float | None = None
    extra: dict = field(default_factory=dict)

    def __call__(self, a) -> float:
        return self.values[a]

    def window_function(self, net: Network) -> VertexFunction:
        w = build_window(net, self.values)
        return VertexFunction.from_callable(w, self.values.__getitem__)


def _hit_table(net, starts: Sequence, targets: Sequence, samples: int, horizon: int, seed, workers, replicate,
               min_time: int = 0) -> dict:
    """For each start a, the fractions of walks whose first visit to the target
    set (at time >= min_time) lands on each target."""
    allstarts = [a for a in starts for _ in range(samples)]
    b = _run(net, allstarts, list(targets), horizon, min_time, seed, workers, replicate)
    out = {}
    for k, a in enumerate(starts):
        h = b.hit[k * samples:(k + 1) * samples]
        out[a] = (np.array([np.sum(h == j) for j in range(len(targets))]) / samples,
                  float(np.mean(h == -1)))
    return out


def _lap_residual(net: Network, f: dict, rhs: dict) -> float:
    worst = 0.0
    for a in f:
        nb = net.neighbors(a)
        if all(y in f for y, _ in nb):
            lap = math.fsum(c * (f[a] - f[y]) for y, c in nb)
            worst = max(worst, abs(lap - rhs.get(a, 0.0)))
    return worst


def monopole_probabilistic(net: Network, x, points: Iterable, samples: int = 20_000,
                           horizon: int = DEFAULT_HORIZON, seed: int = 0, workers: int | None = None,
                           allow_recurrent: bool = False, classification: str | None = None,
                           return_samples: int = DEFAULT_SAMPLES) -> PointEstimates:
    """w_x(a) = F(a, x) / (c(x) (1 - U(x, x))), which equals G(a, x) / c(x).

    The return probability scales every value, so it gets its own, larger
    sample (``return_samples``). Refuses networks classified recurrent (the classifier runs unless a
    ``classification`` is passed) unless ``allow_recurrent`` is set.
    """
    if net.finite and not allow_recurrent:
        raise PreconditionError("finite networks are recurrent; no monopole exists")
    if not allow_recurrent:
        verdict = classification or transience_test(net, x, seed=seed, workers=workers).verdict
        if verdict == "recurrent":
            raise PreconditionError(f"{net.name} is classified recurrent; no monopole exists")
    points = list(dict.fromkeys(points))
    cx = net.total_conductance(x)
    U = estimate_U(net, x, return_samples, horizon, seed, workers, replicate=11).direct
    others = [a for a in points if a != x]
    table = _hit_table(net, others, [x], samples, horizon, seed, workers, replicate=12)
    s = 1.0 / (cx * (1.0 - U.point))
    ds = s * U.stderr / (1.0 - U.point)
    vals, errs = {}, {}
    for a in points:
        if a == x:
            F, Fse = 1.0, 0.0
        else:
            F = float(table[a][0][0])
            Fse = math.sqrt(max(F * (1 - F), 0.0) / samples)
        vals[a] = F * s
        errs[a] = math.hypot(Fse * s, F * ds)
    out = PointEstimates(vals, errs, extra={"U": U.to_json(), "c": cx})
    out.residual = _lap_residual(net, vals, {x: 1.0})
    return out


# ------------------------------------------------------ hitting matrix D

@dataclass
class HittingMatrixD:
    """Two assemblies of the matrix of (Delta h_i)(x_j) for F = {x1, x2}.

    ``direct`` applies the Laplacian to the hitting distributions h_i of the
    pair and is built from first-return probabilities to the pair.
    ``factorized`` is diag(c) [[1 - U11, -F12], [-F21, 1 - U22]] from plain
    single-point return and hitting probabilities; ``det_formula`` evaluates
    c1 c2 (1 - G12 G21) / (G11 G22) from Monte Carlo Green estimates.
    """

    x1: object
    x2: object
    direct: np.ndarray
    factorized: np.ndarray
    direct_se: np.ndarray
    factorized_se: np.ndarray
    det_formula: float
    det_formula_se: float
    estimates: dict

    @property
    def det_direct(self) -> float:
        return float(np.linalg.det(self.direct))

    @property
    def det_factorized(self) -> float:
        return float(np.linalg.det(self.factorized))

    @property
    def singular(self) -> bool:
        d = self.direct
        scale = float(np.max(np.abs(d)))
        return abs(self.det_direct) < 1e-9 * scale**2

    def to_json(self) -> dict:
        return {"x1": str(self.x1), "x2": str(self.x2), "direct": self.direct.tolist(),
                "factorized": self.factorized.tolist(), "det_direct": self.det_direct,
                "det_factorized": self.det_factorized, "det_formula": self.det_formula,
                "det_formula_se": self.det_formula_se}


def hitting_matrix_D(net: Network, x1, x2, samples: int = DEFAULT_SAMPLES, horizon: int = DEFAULT_HORIZON,
                     seed: int = 0, workers: int | None = None) -> HittingMatrixD:
    if x1 == x2:
        raise PreconditionError("x1 and x2 must differ")
    c = np.array([net.total_conductance(x1), net.total_conductance(x2)])
    pair = [x1, x2]
    # first visit to the pair after time 0
    table = _hit_table(net, pair, pair, samples, horizon, seed, workers, replicate=21, min_time=1)
    direct = np.zeros((2, 2))
    dse = np.zeros((2, 2))
    for j, xj in enumerate(pair):
        probs = table[xj][0]
        for i in range(2):
            p = float(probs[i])
            direct[j, i] = c[j] * ((1.0 if i == j else 0.0) - p)
            dse[j, i] = c[j] * math.sqrt(max(p * (1 - p), 0.0) / samples)
    U1 = estimate_U(net, x1, samples, horizon, seed, workers, replicate=22).direct
    U2 = estimate_U(net, x2, samples, horizon, seed, workers, replicate=23).direct
    F12 = estimate_F(net, x1, x2, samples, horizon, seed, workers, replicate=24)
    F21 = estimate_F(net, x2, x1, samples, horizon, seed, workers, replicate=25)
    fact = np.array([[c[0] * (1 - U1.point), -c[0] * F12.point],
                     [-c[1] * F21.point, c[1] * (1 - U2.point)]])
    fse = np.array([[c[0] * U1.stderr, c[0] * F12.stderr], [c[1] * F21.stderr, c[1] * U2.stderr]])
    G = {k: green_mc(net, a, b, samples, horizon, seed, workers, replicate=26 + n)
         for n, (k, a, b) in enumerate([("11", x1, x1), ("12", x1, x2), ("21", x2, x1), ("22", x2, x2)])}
    g11, g12, g21, g22 = (G[k].point for k in ("11", "12", "21", "22"))
    det_f = c[0] * c[1] * (1 - g12 * g21) / (g11 * g22)
    # delta method on log-free form
    parts = [
        (c[0] * c[1] * (-g21) / (g11 * g22), G["12"].stderr),
        (c[0] * c[1] * (-g12) / (g11 * g22), G["21"].stderr),
        (-det_f / g11, G["11"].stderr),
        (-det_f / g22, G["22"].stderr),
    ]
    det_se = math.sqrt(math.fsum((d * s) ** 2 for d, s in parts))
    est = {"U11": U1, "U22": U2, "F12": F12, "F21": F21, **{f"G{k}": v for k, v in G.items()}}
    return HittingMatrixD(x1, x2, direct, fact, dse, fse, float(det_f), det_se, est)


@dataclass
class DipoleEstimate:
    from_hitting: PointEstimates      # alpha h1 + beta h2 with D alpha = (1, -1)
    from_monopoles: PointEstimates    # w_x1 - w_x2
    coefficients: tuple
    coefficients_factorized: tuple | None
    difference_residual: float


def dipole_probabilistic(net: Network, x1, x2, points: Iterable, samples: int = 20_000,
                         horizon: int = DEFAULT_HORIZON, seed: int = 0, workers: int | None = None,
                         D: HittingMatrixD | None = None) -> DipoleEstimate:
    """Two probabilistic dipoles between x1 and x2 on a transient network.

    The hitting construction solves D (alpha, beta) = (1, -1) with the direct
    matrix of (Delta h_i)(x_j); the monopole construction subtracts the
    monopoles at x1 and x2.
    """
    if x1 == x2:
        raise PreconditionError("x1 and x2 must differ")
    points = list(dict.fromkeys(points))
    D = D or hitting_matrix_D(net, x1, x2, samples, horizon, seed, workers)
    if D.singular:
        raise PreconditionError("the hitting matrix is singular for this pair")
    alpha, beta = np.linalg.solve(D.direct, [1.0, -1.0])
    try:
        af, bf = np.linalg.solve(D.factorized, [1.0, -1.0])
        fact = (float(af), float(bf))
    except np.linalg.LinAlgError:
        fact = None
    table = _hit_table(net, points, [x1, x2], samples, horizon, seed, workers, replicate=31)
    hv, he = {}, {}
    for a in points:
        p = table[a][0]
        hv[a] = float(alpha * p[0] + beta * p[1])
        # multinomial variance of alpha 1{x1} + beta 1{x2}
        m2 = alpha**2 * p[0] + beta**2 * p[1]
        he[a] = math.sqrt(max(m2 - hv[a] ** 2, 0.0) / samples)
    hit = PointEstimates(hv, he)
    hit.residual = _lap_residual(net, hv, {x1: 1.0, x2: -1.0})
    w1 = monopole_probabilistic(net, x1, points, samples, horizon, seed, workers, allow_recurrent=True)
    w2 = monopole_probabilistic(net, x2, points, samples, horizon, seed + 1, workers, allow_recurrent=True)
    mv = {a: w1.values[a] - w2.values[a] for a in points}
    me = {a: math.hypot(w1.stderr[a], w2.stderr[a]) for a in points}
    mono = PointEstimates(mv, me)
    mono.residual = _lap_residual(net, mv, {x1: 1.0, x2: -1.0})
    diff = {a: hv[a] - mv[a] for a in points}
    return DipoleEstimate(hit, mono, (float(alpha), float(beta)), fact, _lap_residual(net, diff, {}))


def harmonic_extension(net: Network, boundary: Sequence, phi: Sequence, points: Iterable,
                       samples: int = 20_000, horizon: int = DEFAULT_HORIZON, seed: int = 0,
                       workers: int | None = None) -> PointEstimates:
    """Phi(a) = sum_i phi_i P_a[first visit to the set lands on x_i].

    ``extra["hit_mass"]`` holds the estimated probability of reaching the set
    at all; it is 1 wherever the walk hits the set almost surely.
    """
    boundary = list(boundary)
    if not boundary:
        raise PreconditionError("the target set must be nonempty")
    if len(phi) != len(boundary):
        raise ValueError("one value per target vertex expected")
    phi = np.asarray(phi, dtype=float)
    points = list(dict.fromkeys(points))
    pos = {x: k for k, x in enumerate(boundary)}
    inner = [a for a in points if a not in pos]
    table = _hit_table(net, inner, boundary, samples, horizon, seed, workers, replicate=41) if inner else {}
    vals, errs, mass = {}, {}, {}
    for a in points:
        if a in pos:
            vals[a], errs[a], mass[a] = float(phi[pos[a]]), 0.0, 1.0
            continue
        p = table[a][0]
        vals[a] = float(p @ phi)
        errs[a] = math.sqrt(max(float(p @ phi**2) - vals[a] ** 2, 0.0) / samples)
        mass[a] = float(p.sum())
    return PointEstimates(vals, errs, extra={"hit_mass": mass})


def h_energy_bound(net: Network, x, radius: int, samples: int = 5000, horizon: int = DEFAULT_HORIZON,
                   seed: int = 0, workers: int | None = None) -> tuple[float, float]:
    """(energy of a -> F(a, x) over the edges of a ball, half c(x) times the sum
    over the ball of F(x, a)(1 - F(a, x))), both from Monte Carlo."""
    w = materialize_ball(net, x, radius)
    verts = list(w.vertices)
    to_x = _hit_table(net, [a for a in verts if a != x], [x], samples, horizon, seed, workers, replicate=51)
    h = {a: (1.0 if a == x else float(to_x[a][0][0])) for a in verts}
    from_x = {}
    for k, a in enumerate(verts):
        if a == x:
            from_x[a] = 1.0
        else:
            from_x[a] = estimate_F(net, x, a, samples, horizon, seed, workers, replicate=52 + k).point
    f = VertexFunction.from_callable(w, h.__getitem__)
    from .operators import energy_form
    lhs = energy_form(net, f, f)
    rhs = 0.5 * net.total_conductance(x) * math.fsum(from_x[a] * (1 - h[a]) for a in verts)
    return lhs, rhs


# -------------------------------------------------------------- transience

@dataclass
class TransienceReport:
    verdict: str
    votes: dict
    evidence: dict

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "votes": self.votes, "evidence": self.evidence}


def transience_test(net: Network, x=None, samples: int = 20_000, horizon: int = 4_000, green_steps: int = 64,
                    radii=(2, 4, 8, 16, 32), max_vertices: int = 60_000, seed: int = 0,
                    workers: int | None = None) -> TransienceReport:
    """Three signals, each voting transient / recurrent / inconclusive:

    returns   U(x,x) at the horizon and the survival ratio
              (1 - U(h)) / (1 - U(h/10)); it stays near 1 when walks escape
              for good and falls when they keep coming back
    green     growth of truncated Green sums: increment ratio
              (G(N) - G(N/2)) / (G(N/2) - G(N/4))
    energy    energy increments of grounded monopoles along growing balls

    Transient needs the returns and green votes both transient; recurrent
    needs two recurrent votes.
    """
    x = net.origin if x is None else x
    net.check_vertex(x)
    ev, votes = {}, {}
    # returns
    b = _return_run(net, x, samples, horizon, seed, workers, 61)
    back = b.hit == 0
    U = float(np.mean(back))
    U_early = float(np.mean(back & (b.time <= horizon // 10)))
    se = math.sqrt(max(U * (1 - U), 1.0 / samples) / samples)
    surv = (1 - U) / (1 - U_early) if U_early < 1 else 0.0
    ev["returns"] = {"U": U, "stderr": se, "U_early": U_early, "survival_ratio": surv, "horizon": horizon,
                     "samples": samples, "censored": float(np.mean(b.hit == -1))}
    if U < 0.95 and U + GATE * se < 1 and surv >= 0.95:
        votes["returns"] = "transient"
    elif surv <= 0.85:
        votes["returns"] = "recurrent"
    else:
        votes["returns"] = "inconclusive"
    # green
    N = green_steps
    sums = None
    while N >= 8:
        if net.radial_quotient(x) is not None or net.finite:
            sums = green_truncated(net, x, x, N)
            break
        ball = hop_distances(net, x, N)
        if len(ball) <= max_vertices:
            sums = green_truncated(net, x, x, N, materialize_ball(net, x, N))
            break
        N //= 2
    if sums is not None:
        r = _increment_ratio(sums)
        ev["green"] = {"steps": N, "partial_sum": float(sums[-1]), "increment_ratio": r}
        votes["green"] = "transient" if r < 0.85 else ("recurrent" if r >= 0.95 else "inconclusive")
    else:
        votes["green"] = "inconclusive"
    # energy
    if net.finite:
        votes["energy"] = "recurrent"
        ev["energy"] = {"note": "finite network"}
    else:
        from .potential import monopole

        try:
            m = monopole(net, x, radii=radii, max_vertices=max_vertices)
            ev["energy"] = {"radii": m.radii, "energies": m.energy_by_radius, "trend": m.verdict}
            votes["energy"] = {"transient-consistent": "transient",
                               "recurrent-consistent": "recurrent"}.get(m.verdict, "inconclusive")
        except Exception as e:  # window limits on very fast-growing networks
            ev["energy"] = {"error": str(e)}
            votes["energy"] = "inconclusive"
    vals = list(votes.values())
    if votes["returns"] == "transient" and votes["green"] == "transient":
        verdict = "transient"
    elif vals.count("recurrent") >= 2:
        verdict = "recurrent"
    else:
        verdict = "inconclusive"
    return TransienceReport(verdict, votes, ev)


# ----------------------------------------------------- diagram level walks

@dataclass
class LevelHitting:
    levels: list
    estimates: list      # WalkEstimate per level
    stable_from: int | None
    compatibility: str


def level_hitting_sequence(net, f: Sequence, x, levels: Iterable, samples: int = 10_000,
                           horizon: int = DEFAULT_HORIZON, seed: int = 0, tol: float = 1e-9) -> LevelHitting:
    """h_n(x) = E_x f_n(X at the first visit to level n), for n in ``levels``.

    ``net`` is a DiagramNetwork and ``f[n]`` the vector on level n. Accepted
    inputs: f compatible with the left arrows (left_n f_{n+1} = f_n), f
    harmonic on the levels used, or f constant. The stabilization index is
    the first level from which consecutive estimates agree within the gate.
    """
    from .bratteli import arrow_matrices, harmonic_residuals

    d = net.diagram
    levels = sorted(set(int(n) for n in levels))
    top = levels[-1]
    if len(f) <= top:
        raise PreconditionError(f"f must be given up to level {top}")
    vals = np.concatenate([np.asarray(v, float) for v in f[: top + 1]])
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.ptp(vals) == 0:
        mode = "constant"
    else:
        arrow = max((float(np.max(np.abs(arrow_matrices(d, n).left @ np.asarray(f[n + 1], float)
                                         - np.asarray(f[n], float)))) for n in levels[:-1]), default=0.0)
        if arrow <= tol * scale:
            mode = "arrow"
        else:
            res = harmonic_residuals(d, list(f[: top + 1]), first=0)
            if res and max(res) <= tol * scale:
                mode = "harmonic"
            else:
                raise PreconditionError(f"f is neither arrow-compatible (residual {arrow:.3e}) nor harmonic")
    net.check_vertex(x)
    lx = int(x[0])
    kern = TableKernel(net)
    rng = streams(seed, 1, 71)[0]
    state = kern.encode([x] * samples)
    first = {n: np.full(samples, -1, dtype=np.int64) for n in levels}
    cache: dict = {}
    lev = kern.attribute(state[:, 0], lambda v: v[0], cache)
    for n in levels:
        if n == lx:
            first[n][:] = int(x[1])
    active = np.arange(samples)
    for t in range(horizon):
        if len(active) == 0:
            break
        state = kern.step(state, rng.random(len(active)))
        lev = kern.attribute(state[:, 0], lambda v: v[0], cache)
        for n in levels:
            new = (lev == n) & (first[n][active] < 0)
            if new.any():
                first[n][active[new]] = [kern.verts[i][1] for i in state[new, 0].tolist()]
        done = np.all(np.stack([first[n][active] >= 0 for n in levels]), axis=0)
        if done.any():
            active, state = active[~done], state[~done]
    ests = []
    for n in levels:
        idx = first[n]
        ok = idx >= 0
        fn = np.asarray(f[n], float)
        v = fn[idx[ok]] if ok.any() else np.zeros(0)
        cens = 1.0 - ok.mean()
        if n == lx:
            ests.append(WalkEstimate(f"h_{n}", float(fn[int(x[1])]), 0.0, samples, horizon, 0.0, seed))
            continue
        pt = float(v.mean()) if len(v) else math.nan
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        ests.append(WalkEstimate(f"h_{n}", pt, se, samples, horizon, float(cens), seed))
    stable = None
    for k in range(len(levels) - 1):
        if all(abs(ests[j].point - ests[j + 1].point) <= GATE * math.hypot(ests[j].stderr, ests[j + 1].stderr)
               + 1e-12 for j in range(k, len(levels) - 1)):
            stable = levels[k]
            break
    return LevelHitting(levels, ests, stable, mode)


@dataclass
class LevelPassage:
    levels: list          # i, for the step from V_i to V_{i+1}
    direct: list          # fraction of walks with tau(V_{i+1}) = tau(V_i) + 1
    stderr: list
    unbroken: list        # fraction with the direct step at every level i..top-1
    censored: float
    samples: int
    horizon: int
    seed: int


def level_passage_report(net, x, top: int, samples: int = 10_000, horizon: int = DEFAULT_HORIZON,
                         seed: int = 0) -> LevelPassage:
    """First-passage times to the levels of a DiagramNetwork, started at x.

    For each level i from that of x up to top-1, the fraction of walks whose
    first visit to level i+1 comes right after their first visit to level i,
    and the fraction for which this holds at every level from i on. A walk
    counts only if it reaches ``top`` within the horizon; the rest are
    censored. This measures eventual level-monotonicity; it certifies nothing.
    """
    net.check_vertex(x)
    lx = int(x[0])
    if top <= lx:
        raise ValueError("top must lie above the starting level")
    kern = TableKernel(net)
    rng = streams(seed, 1, 73)[0]
    state = kern.encode([x] * samples)
    first = np.full((samples, top + 1), -1, dtype=np.int64)
    first[:, lx] = 0
    cache: dict = {}
    active = np.arange(samples)
    for t in range(1, horizon + 1):
        if len(active) == 0:
            break
        state = kern.step(state, rng.random(len(active)))
        lev = kern.attribute(state[:, 0], lambda v: v[0], cache)
        hit = (lev <= top) & (first[active, np.minimum(lev, top)] < 0)
        first[active[hit], lev[hit]] = t
        keep = first[active, top] < 0
        active, state = active[keep], state[keep]
    ok = first[:, top] >= 0
    levels = list(range(lx, top))
    tau = first[ok]
    step = (tau[:, lx + 1:] - tau[:, lx:top]) == 1 if len(tau) else np.zeros((0, top - lx), bool)
    m = len(tau)
    direct = [float(step[:, k].mean()) if m else math.nan for k in range(len(levels))]
    se = [math.sqrt(p * (1 - p) / m) if m > 1 else math.nan for p in direct]
    tail = np.flip(np.cumprod(np.flip(step, axis=1), axis=1), axis=1) if m else step
    unbroken = [float(tail[:, k].mean()) if m else math.nan for k in range(len(levels))]
    return LevelPassage(levels, direct, se, unbroken, float(1 - ok.mean()), samples, horizon, seed)
