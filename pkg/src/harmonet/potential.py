"""Dirichlet problems, dipoles, monopoles and multipoles by truncation along
exhaustions, resistance distance, boundary sums and the Fin/Harm split."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .network_core import (
    FiniteWindow,
    Network,
    NumericalFailure,
    PreconditionError,
    WindowTooSmallError,
    build_window,
    format_vertex,
    hop_distances,
    outer_boundary,
)
from .operators import (
    VertexFunction,
    assemble_laplacian,
    energy_form,
    laplacian_apply,
    window_laplacian,
)

CONVERGENCE_TOL = 1e-8
DEFAULT_RADII = (2, 4, 8, 16, 32, 64)
MAX_WINDOW = 250_000


class WindowTooLarge(RuntimeError):
    pass


def solve_linear(A: sp.spmatrix, b: np.ndarray, backend: str = "direct") -> np.ndarray:
    A = sp.csr_matrix(A)
    if A.shape[0] == 0:
        return np.zeros(0)
    if backend == "direct":
        with np.errstate(all="ignore"):
            x = spla.spsolve(A.tocsc(), b)
        x = np.atleast_1d(x)
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("singular system")
        return x
    if backend == "cg":
        x, info = spla.cg(A, b, rtol=1e-14, atol=0.0, maxiter=20 * A.shape[0] + 1000)
        if info != 0:
            raise NumericalFailure(f"conjugate gradients did not converge (info={info})")
        return x
    if backend == "exact":
        return _solve_exact(A, b)
    raise ValueError(f"unknown backend {backend!r}")


def _solve_exact(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination over the rationals; every float is a dyadic
    rational, so the answer is the exact solution rounded once. Meant for
    small windows of integer fixtures."""
    n = A.shape[0]
    rows = []
    for i in range(n):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        r = {int(j): Fraction(float(v)) for j, v in zip(A.indices[lo:hi], A.data[lo:hi]) if v != 0}
        rows.append((r, Fraction(float(b[i]))))
    pivots = []
    remaining = list(range(n))
    for col in range(n):
        k = next((i for i in remaining if col in rows[i][0]), None)
        if k is None:
            raise NumericalFailure("singular system")
        remaining.remove(k)
        pr, pb = rows[k]
        p = pr[col]
        for i in remaining:
            r, rb = rows[i]
            f = r.get(col)
            if f is None:
                continue
            f = f / p
            for j, v in pr.items():
                nv = r.get(j, 0) - f * v
                if nv:
                    r[j] = nv
                else:
                    r.pop(j, None)
            rows[i] = (r, rb - f * pb)
        pivots.append((col, k))
    x = [Fraction(0)] * n
    for col, k in reversed(pivots):
        r, rb = rows[k]
        x[col] = (rb - sum((v * x[j] for j, v in r.items() if j != col), Fraction(0))) / r[col]
    return np.array([float(v) for v in x])


# ---------------------------------------------------------------- Dirichlet

@dataclass
class DirichletProblem:
    net: Network
    interior: Sequence
    source: dict | Callable | None = None  # g on the interior, default 0
    boundary: dict | Callable | None = None  # f on bd(interior), default 0

    def _g(self, x):
        if self.source is None:
            return 0.0
        return float(self.source(x) if callable(self.source) else self.source.get(x, 0.0))

    def _f(self, x):
        if self.boundary is None:
            return 0.0
        if callable(self.boundary):
            return float(self.boundary(x))
        if x not in self.boundary:
            raise PreconditionError(f"boundary value missing at {x!r}")
        return float(self.boundary[x])


def solve_dirichlet(p: DirichletProblem, backend: str = "direct") -> VertexFunction:
    """Solve Delta u = g on the interior set with u = f on its outer boundary."""
    V1 = sorted(set(p.interior))
    if not V1:
        raise PreconditionError("empty interior set")
    bd = outer_boundary(p.net, V1)
    if not bd:
        raise NumericalFailure("interior set has no boundary; the Dirichlet system is singular")
    win = build_window(p.net, V1 + bd, interior=V1)
    L = assemble_laplacian(p.net, win)
    idx = np.flatnonzero(win.interior)
    bidx = np.flatnonzero(~win.interior)
    fb = np.array([p._f(win.vertices[k]) for k in bidx])
    rhs = np.array([p._g(win.vertices[k]) for k in idx])
    M = L.matrix
    rhs = rhs - M[idx][:, bidx] @ fb
    sol = solve_linear(M[idx][:, idx], rhs, backend)
    vals = np.zeros(len(win))
    vals[idx] = sol
    vals[bidx] = fb
    return VertexFunction(win, vals)


@dataclass
class PrincipleReport:
    holds: bool
    constant: bool
    max_value: float
    min_value: float
    max_on_boundary: float
    min_on_boundary: float
    note: str = ""


def maximum_principle_check(net: Network, u: VertexFunction, V1: Iterable, tol: float = 1e-9) -> PrincipleReport:
    V1 = sorted(set(V1))
    lap = laplacian_apply(net, u, V1)
    worst = max(abs(v) for v in lap.values())
    scale = max(1.0, float(np.max(np.abs(u.values))))
    if worst > tol * scale:
        raise PreconditionError(f"not harmonic on the given set (max residual {worst:.3e})")
    bd = outer_boundary(net, V1)
    allv = [u(x) for x in V1 + bd]
    bv = [u(x) for x in bd]
    hi, lo = max(allv), min(allv)
    if hi - lo <= tol * scale:
        return PrincipleReport(True, True, hi, lo, max(bv), min(bv), "constant; principle vacuous")
    ok = max(bv) >= hi - tol * scale and min(bv) <= lo + tol * scale
    return PrincipleReport(ok, False, hi, lo, max(bv), min(bv), "" if ok else "extremum attained only inside")


# ------------------------------------------------------ truncated potentials

@dataclass
class PotentialResult:
    function: VertexFunction
    radii: list
    energy_by_radius: list
    verdict: str
    converged: bool
    residual: float
    boundary: str = "grounded"
    kind: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def increments(self) -> list:
        e = self.energy_by_radius
        return [b - a for a, b in zip(e[:-1], e[1:])]

    @property
    def energy(self) -> float:
        return self.energy_by_radius[-1]

    def __call__(self, x) -> float:
        return self.function(x)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "values": {format_vertex(x): v for x, v in self.function.as_dict().items()},
            "radii": list(self.radii),
            "energy_by_radius": list(self.energy_by_radius),
            "verdict": self.verdict,
            "converged": self.converged,
            "residual": self.residual,
            "boundary": self.boundary,
            **self.extra,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _ball(net: Network, root, radius: int, max_vertices: int) -> FiniteWindow:
    dist = hop_distances(net, root, radius)
    if len(dist) > max_vertices:
        raise WindowTooLarge(f"ball of radius {radius} has {len(dist)} vertices")
    return build_window(net, dist, [x for x, d in dist.items() if d < radius])


def _whole(net: Network) -> FiniteWindow:
    return build_window(net, net.vertices())


def truncated_solve(net: Network, window: FiniteWindow, rhs: dict, boundary: str = "grounded",
                    gauge=None, backend: str = "direct") -> VertexFunction:
    """Solve Delta v = rhs on one window.

    grounded: v = 0 on non-interior window vertices, equation on the interior.
    free: the window is treated as a network of its own and v(gauge) = 0;
    rhs must sum to zero.
    """
    n = len(window)
    b = np.zeros(n)
    for x, val in rhs.items():
        k = window.pos(x)
        if boundary == "grounded" and not window.interior[k]:
            raise WindowTooSmallError(x, f"{x!r} is not inside the window interior")
        b[k] += val
    vals = np.zeros(n)
    if boundary == "grounded":
        idx = np.flatnonzero(window.interior)
        M = assemble_laplacian(net, window).matrix
        vals[idx] = solve_linear(M[idx][:, idx], b[idx], backend)
    elif boundary == "free":
        if abs(math.fsum(b.tolist())) > 1e-12 * max(1.0, np.abs(b).sum()):
            raise PreconditionError("free truncation needs a source of total mass zero")
        g = window.pos(gauge if gauge is not None and gauge in window else window.vertices[0])
        keep = np.array([k for k in range(n) if k != g], dtype=np.int64)
        L = window_laplacian(window)
        vals[keep] = solve_linear(L[keep][:, keep], b[keep], backend)
    else:
        raise ValueError(f"unknown boundary rule {boundary!r}")
    return VertexFunction(window, vals)


def _residual(net, v: VertexFunction, rhs: dict, boundary: str) -> float:
    w = v.window
    if boundary == "free":
        # equation of the window network at every window vertex
        L = window_laplacian(w)
        r = L @ v.values
        for x, val in rhs.items():
            r[w.pos(x)] -= val
        return float(np.max(np.abs(r))) if len(r) else 0.0
    lap = laplacian_apply(net, v)
    return max((abs(val - rhs.get(x, 0.0)) for x, val in lap.items()), default=0.0)


def _converged(energies: list, tol: float) -> bool:
    if len(energies) < 3:
        return False
    rel = [abs(b - a) / max(abs(b), 1e-300) for a, b in zip(energies[:-1], energies[1:])]
    return rel[-1] < tol and rel[-2] < tol


def _trend(energies: list) -> str:
    if _converged(energies, CONVERGENCE_TOL):
        return "transient-consistent"
    if len(energies) < 3:
        return "inconclusive"
    d1 = energies[-2] - energies[-3]
    d2 = energies[-1] - energies[-2]
    if d1 <= 0:
        return "transient-consistent" if abs(d2) <= 1e-14 * abs(energies[-1]) else "inconclusive"
    ratio = d2 / d1
    if ratio < 0.8:
        return "transient-consistent"
    if ratio >= 0.95:
        return "recurrent-consistent"
    return "inconclusive"


def _run_schedule(net, rhs: dict, radii, root, boundary, backend, max_vertices, tol, stop_early, gauge):
    if net.finite:
        w = _whole(net)
        v = truncated_solve(net, w, rhs, "free", gauge if gauge is not None else net.origin, backend)
        e = energy_form(net, v, v)
        return v, [len(w)], [e], "free"
    radii = list(radii if radii is not None else DEFAULT_RADII)
    if root is None:
        root = net.origin if net.origin is not None else next(iter(rhs))
    energies, used = [], []
    v = None
    for R in radii:
        try:
            w = _ball(net, root, R, max_vertices)
        except WindowTooLarge:
            if v is None:
                raise
            break
        if any(x not in w or not w.interior[w.pos(x)] for x in rhs):
            continue
        v = truncated_solve(net, w, rhs, boundary, gauge if gauge is not None else root, backend)
        energies.append(energy_form(net, v, v))
        used.append(R)
        if stop_early and _converged(energies, tol):
            break
    if v is None:
        raise WindowTooSmallError(next(iter(rhs)), "no radius in the schedule contains the source points")
    return v, used, energies, boundary


def dipole(net: Network, x, y, radii=None, root=None, boundary: str = "grounded",
           backend: str = "direct", max_vertices: int = MAX_WINDOW, tol: float = CONVERGENCE_TOL,
           stop_early: bool = True) -> PotentialResult:
    """Truncated solutions of Delta v = delta_x - delta_y along an exhaustion."""
    if x == y:
        w = build_window(net, [x])
        return PotentialResult(VertexFunction(w, [0.0]), [0], [0.0], "converged", True, 0.0, boundary, "dipole")
    rhs = {x: 1.0, y: -1.0}
    v, used, energies, mode = _run_schedule(net, rhs, radii, root, boundary, backend, max_vertices, tol,
                                            stop_early, None)
    ok = net.finite or _converged(energies, tol)
    return PotentialResult(v, used, energies, "converged" if ok else "not converged", ok,
                           _residual(net, v, rhs, mode), mode, "dipole")


def monopole(net: Network, x, radii=None, root=None, backend: str = "direct",
             max_vertices: int = MAX_WINDOW, tol: float = CONVERGENCE_TOL) -> PotentialResult:
    """Grounded truncations of Delta w = delta_x. Energy growth across the
    schedule decides between transient- and recurrent-consistent."""
    if net.finite:
        raise PreconditionError("a finite network carries no monopole")
    rhs = {x: 1.0}
    w, used, energies, mode = _run_schedule(net, rhs, radii, root if root is not None else x, "grounded",
                                            backend, max_vertices, tol, False, None)
    ok = _converged(energies, tol)
    return PotentialResult(w, used, energies, _trend(energies), ok, _residual(net, w, rhs, mode), mode, "monopole")


def multipole(net: Network, x0, points: Sequence, radii=None, root=None, boundary: str = "grounded",
              backend: str = "direct", max_vertices: int = MAX_WINDOW, tol: float = CONVERGENCE_TOL) -> PotentialResult:
    """Delta v = delta_{x0} - sum_i alpha_i delta_{x_i} with weights summing to one."""
    pts = [(p, float(a)) for p, a in points]
    if not pts:
        raise PreconditionError("at least one point is needed")
    if any(a <= 0 for _, a in pts):
        raise PreconditionError("weights must be positive")
    if abs(math.fsum(a for _, a in pts) - 1.0) > 1e-12:
        raise PreconditionError("weights must sum to 1")
    if any(p == x0 for p, _ in pts) or len({p for p, _ in pts}) != len(pts):
        raise PreconditionError("points must be distinct and differ from x0")
    rhs = {x0: 1.0}
    for p, a in pts:
        rhs[p] = rhs.get(p, 0.0) - a
    v, used, energies, mode = _run_schedule(net, rhs, radii, root, boundary, backend, max_vertices, tol,
                                            True, None)
    ok = net.finite or _converged(energies, tol)
    return PotentialResult(v, used, energies, "converged" if ok else "not converged", ok,
                           _residual(net, v, rhs, mode), mode, "multipole")


def resistance_distance(net: Network, x, y, radii=None, root=None, boundary: str = "grounded", **kw) -> float:
    if x == y:
        return 0.0
    return dipole(net, x, y, radii=radii, root=root, boundary=boundary, **kw).energy


# ------------------------------------------------------------ boundary sums

def normal_derivative(net: Network, H: Iterable, v, x) -> float:
    H = set(H)
    if x in H:
        raise PreconditionError(f"{x!r} lies in H, not on its boundary")
    terms = [c * (v(x) - v(y)) for y, c in net.neighbors(x) if y in H]
    if not terms:
        raise PreconditionError(f"{x!r} is not adjacent to H")
    return math.fsum(terms)


@dataclass
class GaussGreenRecord:
    size: int
    interior_sum: float
    boundary_sum: float
    inner_product: float
    interior_sum_gauged: float
    boundary_sum_gauged: float

    @property
    def defect(self) -> float:
        return self.inner_product - self.interior_sum - self.boundary_sum


def gauss_green_split(net: Network, u, v, exhaustion: Iterable[Iterable], origin=None) -> list[GaussGreenRecord]:
    """For each finite set H of the exhaustion: sum_H u Delta v, the boundary sum
    of u dv/dn over bd(H), and the energy pairing over edges touching H.
    The gauged columns use u - u(o)."""
    if origin is None:
        origin = net.origin
    out = []
    for H in exhaustion:
        H = sorted(set(H))
        Hs = set(H)
        bd = outer_boundary(net, H)
        u0 = u(origin) if origin is not None else 0.0
        isum, isum_g, ip = [], [], []
        for x in H:
            lap = math.fsum(c * (v(x) - v(y)) for y, c in net.neighbors(x))
            isum.append(u(x) * lap)
            isum_g.append((u(x) - u0) * lap)
            for y, c in net.neighbors(x):
                if y in Hs and not x < y:
                    continue
                ip.append(c * (u(x) - u(y)) * (v(x) - v(y)))
        bsum, bsum_g = [], []
        for x in bd:
            dn = normal_derivative(net, Hs, v, x)
            bsum.append(u(x) * dn)
            bsum_g.append((u(x) - u0) * dn)
        out.append(GaussGreenRecord(len(H), math.fsum(isum), math.fsum(bsum), math.fsum(ip),
                                    math.fsum(isum_g), math.fsum(bsum_g)))
    return out


def royden_split(net: Network | None, window: FiniteWindow, u: VertexFunction,
                 backend: str = "direct") -> tuple[VertexFunction, VertexFunction]:
    """Split u on a window into a part supported on the interior and a part
    harmonic on the interior with the same boundary values. The two are
    orthogonal for the window energy."""
    idx = np.flatnonzero(window.interior)
    bidx = np.flatnonzero(~window.interior)
    if len(bidx) == 0:
        # no boundary: harmonic part is the constant mean on a connected window
        h = np.full(len(window), float(np.mean(u.values)))
    else:
        L = window_laplacian(window)
        h = np.array(u.values, dtype=float)
        rhs = -(L[idx][:, bidx] @ u.values[bidx])
        h[idx] = solve_linear(L[idx][:, idx], rhs, backend)
    harm = VertexFunction(window, h)
    return VertexFunction(window, u.values - h), harm
