"""Laplacian, Markov operator, energy form, the drop operator into edge flows,
and the assembled sparse Laplacian of a window."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .network_core import (
    FiniteWindow,
    Network,
    PreconditionError,
    WindowTooSmallError,
    format_vertex,
)


class VertexFunction:
    """Real values on the vertices of a window. Lookups outside raise KeyError."""

    def __init__(self, window: FiniteWindow, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (len(window),):
            raise ValueError(f"expected {len(window)} values, got shape {values.shape}")
        self.window = window
        self.values = values

    @classmethod
    def from_callable(cls, window: FiniteWindow, fn: Callable) -> "VertexFunction":
        return cls(window, [fn(x) for x in window.vertices])

    @classmethod
    def delta(cls, window: FiniteWindow, x) -> "VertexFunction":
        v = np.zeros(len(window))
        v[window.pos(x)] = 1.0
        return cls(window, v)

    @classmethod
    def constant(cls, window: FiniteWindow, value=1.0) -> "VertexFunction":
        return cls(window, np.full(len(window), float(value)))

    def __call__(self, x) -> float:
        return float(self.values[self.window.pos(x)])

    def as_dict(self) -> dict:
        return dict(zip(self.window.vertices, self.values.tolist()))

    def _other(self, other):
        if isinstance(other, VertexFunction):
            if other.window is not self.window:
                raise ValueError("functions live on different windows")
            return other.values
        return other

    def __add__(self, other):
        return VertexFunction(self.window, self.values + self._other(other))

    def __sub__(self, other):
        return VertexFunction(self.window, self.values - self._other(other))

    def __mul__(self, k):
        return VertexFunction(self.window, self.values * self._other(k))

    __rmul__ = __mul__

    def __neg__(self):
        return VertexFunction(self.window, -self.values)

    def gauge(self, o) -> "VertexFunction":
        """Shift so the value at ``o`` is zero."""
        return VertexFunction(self.window, self.values - self(o))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("vertex,value\n")
        for x, v in zip(self.window.vertices, self.values):
            buf.write(f"\"{format_vertex(x)}\",{v!r}\n")
        return buf.getvalue()


class EdgeFlow:
    """Antisymmetric edge function stored once per window edge, oriented from
    the smaller vertex to the larger one."""

    def __init__(self, window: FiniteWindow, values):
        values = np.asarray(values, dtype=float)
        if values.shape != window.edge_c.shape:
            raise ValueError("one value per window edge expected")
        if not np.all(np.isfinite(values)):
            raise ValueError("flow values must be finite")
        self.window = window
        self.values = values
        self._lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(window.edge_i, window.edge_j))}

    def __call__(self, x, y) -> float:
        i, j = self.window.pos(x), self.window.pos(y)
        if i < j:
            k = self._lookup.get((i, j))
            sign = 1.0
        else:
            k = self._lookup.get((j, i))
            sign = -1.0
        if k is None:
            raise KeyError(f"({x!r}, {y!r}) is not a window edge")
        return sign * float(self.values[k])

    def resistance(self, x, y) -> float:
        i, j = sorted((self.window.pos(x), self.window.pos(y)))
        return 1.0 / float(self.window.edge_c[self._lookup[(i, j)]])


def _fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel().tolist())


def _points(f: VertexFunction, at) -> list:
    if at is None:
        return f.window.interior_vertices
    return sorted(set(at))


def laplacian_apply(net: Network, f: VertexFunction, at: Iterable | None = None) -> dict:
    """Pointwise sum_y c_xy (f(x) - f(y)) for x in ``at`` (default: window interior)."""
    w = f.window
    out = {}
    for x in _points(f, at):
        fx = f(x)
        terms = []
        for y, c in net.neighbors(x):
            if y not in w:
                raise WindowTooSmallError(x, f"window too small: neighbor {y!r} of {x!r} lies outside")
            terms.append(c * (fx - f.values[w.index[y]]))
        out[x] = math.fsum(terms)
    return out


def markov_apply(net: Network, f: VertexFunction, at: Iterable | None = None) -> dict:
    w = f.window
    out = {}
    for x in _points(f, at):
        nb = net.neighbors(x)
        cx = math.fsum(c for _, c in nb)
        terms = []
        for y, c in nb:
            if y not in w:
                raise WindowTooSmallError(x, f"window too small: neighbor {y!r} of {x!r} lies outside")
            terms.append(c * f.values[w.index[y]])
        out[x] = math.fsum(terms) / cx
    return out


def _check_same(u: VertexFunction, v: VertexFunction):
    if u.window is not v.window:
        raise ValueError("energy form needs both functions on the same window")


def energy_form(net: Network | None, u: VertexFunction, v: VertexFunction) -> float:
    """Sum over window edges of c (u(x)-u(y)) (v(x)-v(y)).

    Edges leaving the window are not seen; ``energy_report`` says how many.
    """
    _check_same(u, v)
    w = u.window
    du = u.values[w.edge_i] - u.values[w.edge_j]
    dv = v.values[w.edge_i] - v.values[w.edge_j]
    return _fsum(w.edge_c * du * dv)


@dataclass(frozen=True)
class EnergyReport:
    value: float
    crossing_edges: int

    @property
    def truncated(self) -> bool:
        return self.crossing_edges > 0


def energy_report(net, u: VertexFunction, v: VertexFunction | None = None) -> EnergyReport:
    v = u if v is None else v
    return EnergyReport(energy_form(net, u, v), u.window.crossing)


class Norms(NamedTuple):
    l2: float
    l2_c: float
    energy: float


def norms(net: Network | None, u: VertexFunction) -> Norms:
    w = u.window
    l2 = math.sqrt(_fsum(u.values**2))
    l2c = math.sqrt(_fsum(w.c_total * u.values**2))
    return Norms(l2, l2c, math.sqrt(max(energy_form(net, u, u), 0.0)))


@dataclass(frozen=True, eq=False)
class SparseLaplacian:
    window: FiniteWindow
    matrix: sp.csr_matrix

    def to_triplets(self) -> str:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"{coo.row[k]} {coo.col[k]} {coo.data[k]!r}" for k in order]
        return "\n".join(lines) + "\n"

    def interior_block(self) -> sp.csr_matrix:
        idx = np.flatnonzero(self.window.interior)
        return self.matrix[idx][:, idx].tocsr()


def assemble_laplacian(net: Network | None, window: FiniteWindow) -> SparseLaplacian:
    """Diagonal c(x) from the full oracle, off-diagonal -c_xy for window edges."""
    n = len(window)
    rows = np.concatenate([window.edge_i, window.edge_j, np.arange(n)])
    cols = np.concatenate([window.edge_j, window.edge_i, np.arange(n)])
    data = np.concatenate([-window.edge_c, -window.edge_c, window.c_total])
    m = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    return SparseLaplacian(window, m)


def window_laplacian(window: FiniteWindow) -> sp.csr_matrix:
    """Laplacian of the window as a network of its own (free boundary)."""
    n = len(window)
    deg = np.zeros(n)
    np.add.at(deg, window.edge_i, window.edge_c)
    np.add.at(deg, window.edge_j, window.edge_c)
    rows = np.concatenate([window.edge_i, window.edge_j, np.arange(n)])
    cols = np.concatenate([window.edge_j, window.edge_i, np.arange(n)])
    data = np.concatenate([-window.edge_c, -window.edge_c, deg])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def drop(net: Network | None, u: VertexFunction) -> EdgeFlow:
    w = u.window
    return EdgeFlow(w, w.edge_c * (u.values[w.edge_i] - u.values[w.edge_j]))


def dissipation_norm(flow: EdgeFlow) -> float:
    return math.sqrt(_fsum(flow.values**2 / flow.window.edge_c))


def cycle_pairing(flow: EdgeFlow, cycle: Sequence) -> float:
    """Pairing of a flow with the unit flow around a closed walk ``[x0, x1, ..., x0]``."""
    cycle = list(cycle)
    if len(cycle) < 2:
        return 0.0
    if cycle[0] != cycle[-1]:
        raise ValueError("cycle must be closed (first vertex repeated at the end)")
    terms = [flow.resistance(a, b) * flow(a, b) for a, b in zip(cycle[:-1], cycle[1:])]
    return math.fsum(terms)


def unit_cycle_flow(window: FiniteWindow, cycle: Sequence) -> EdgeFlow:
    vals = np.zeros(len(window.edge_c))
    lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(window.edge_i, window.edge_j))}
    for a, b in zip(cycle[:-1], cycle[1:]):
        i, j = window.pos(a), window.pos(b)
        if i < j:
            vals[lookup[(i, j)]] += 1.0
        else:
            vals[lookup[(j, i)]] -= 1.0
    return EdgeFlow(window, vals)


def laplacian_residual(net: Network, f: VertexFunction, at: Iterable | None = None) -> float:
    lap = laplacian_apply(net, f, at)
    return max((abs(v) for v in lap.values()), default=0.0)


def harmonic_energy_via_P(net: Network, f: VertexFunction, tol: float = 1e-9) -> float:
    """Half the sum over interior x of c(x) (P(f^2)(x) - f(x)^2).

    Requires f harmonic on the window interior. On a window this equals
    ``interior_energy_sum``; on an exhaustion both tend to the energy of f.
    """
    lap = laplacian_apply(net, f)
    scale = max(1.0, float(np.max(np.abs(f.values))) if len(f.values) else 1.0)
    worst = max((abs(v) for v in lap.values()), default=0.0)
    if worst > tol * scale:
        raise PreconditionError(f"function is not harmonic on the interior (max residual {worst:.3e})")
    f2 = VertexFunction(f.window, f.values**2)
    pf2 = markov_apply(net, f2)
    w = f.window
    terms = [w.c_total[w.index[x]] * (pf2[x] - f(x) ** 2) for x in pf2]
    return 0.5 * math.fsum(terms)


def interior_energy_sum(net: Network, f: VertexFunction) -> float:
    """Half the sum over interior x and all neighbors y of c_xy (f(x)-f(y))^2."""
    w = f.window
    terms = []
    for x in w.interior_vertices:
        fx = f(x)
        for y, c in net.neighbors(x):
            terms.append(c * (fx - f(y)) ** 2)
    return 0.5 * math.fsum(terms)


def markov_form(net: Network, u: VertexFunction) -> tuple[float, float]:
    """(<u, Pu>, <u, u>) in l2(V, c) over the window interior; u vanishes off it."""
    w = u.window
    vals = np.where(w.interior, u.values, 0.0)
    g = VertexFunction(w, vals)
    pu = markov_apply(net, g)
    num = math.fsum(w.c_total[w.index[x]] * g(x) * pu[x] for x in pu)
    den = math.fsum((w.c_total * vals**2).tolist())
    return num, den
