"""Networks given by neighbor oracles, finite windows cut out of them, and
boundary bookkeeping."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

Vertex = Hashable


class InvalidVertexError(ValueError):
    pass


class WindowTooSmallError(ValueError):
    def __init__(self, vertex, message=None):
        self.vertex = vertex
        super().__init__(message or f"window too small: a neighbor of {vertex!r} lies outside")


class PreconditionError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def format_vertex(x) -> str:
    if isinstance(x, tuple):
        return ",".join(str(int(t)) for t in x)
    return str(int(x))


def parse_vertex(text: str):
    parts = [p.strip() for p in str(text).strip().strip("()[]").split(",") if p.strip()]
    if not parts:
        raise InvalidVertexError(f"empty vertex text {text!r}")
    try:
        vals = tuple(int(p) for p in parts)
    except ValueError:
        raise InvalidVertexError(f"cannot parse vertex {text!r}") from None
    return vals[0] if len(vals) == 1 else vals


class Network:
    """Base class. Subclasses implement ``neighbors`` returning ``[(y, c_xy), ...]``."""

    name = "network"
    origin: Vertex | None = None
    finite = False

    def neighbors(self, x) -> list[tuple[Vertex, float]]:
        raise NotImplementedError

    def contains(self, x) -> bool:
        return True

    def check_vertex(self, x):
        if not self.contains(x):
            raise InvalidVertexError(f"{x!r} is not a vertex of {self.name}")

    def total_conductance(self, x) -> float:
        return total_conductance(self, x)

    def vertices(self) -> list:
        raise TypeError(f"{self.name} is infinite; use materialize_ball")

    def parse_vertex(self, text: str):
        if str(text).strip().lower() in ("root", "origin", "o"):
            if self.origin is None:
                raise InvalidVertexError(f"{self.name} has no designated origin")
            return self.origin
        x = parse_vertex(text)
        self.check_vertex(x)
        return x

    # optional fast paths, overridden by models that have them
    def walk_kernel(self):
        return None

    def radial_quotient(self, root):
        return None


class FunctionNetwork(Network):
    """Wraps a bare oracle function. No checks are made here; see ``validate``."""

    def __init__(self, oracle: Callable, origin=None, contains: Callable | None = None, name="oracle"):
        self._oracle = oracle
        self.origin = origin
        self._contains = contains
        self.name = name

    def neighbors(self, x):
        self.check_vertex(x)
        return list(self._oracle(x))

    def contains(self, x):
        return True if self._contains is None else bool(self._contains(x))


class ExplicitNetwork(Network):
    """Finite network from an edge list ``[(x, y, c), ...]``."""

    finite = True

    def __init__(self, edges: Iterable[Sequence], origin=None, name="explicit"):
        adj: dict = {}
        for e in edges:
            x, y, c = e
            c = float(c)
            if x == y:
                raise ValueError(f"loop at {x!r}")
            if not c > 0:
                raise ValueError(f"nonpositive conductance {c} on edge ({x!r}, {y!r})")
            for a, b in ((x, y), (y, x)):
                old = adj.setdefault(a, {}).get(b)
                if old is not None and old != c:
                    raise ValueError(f"asymmetric conductance on pair ({x!r}, {y!r}): {old} vs {c}")
                adj[a][b] = c
        if not adj:
            raise ValueError("empty edge list")
        self._adj = {x: sorted(nb.items()) for x, nb in adj.items()}
        self.origin = origin if origin is not None else min(self._adj)
        self.name = name

    def neighbors(self, x):
        try:
            return list(self._adj[x])
        except (KeyError, TypeError):
            raise InvalidVertexError(f"{x!r} is not a vertex of {self.name}") from None

    def contains(self, x):
        try:
            return x in self._adj
        except TypeError:
            return False

    def vertices(self):
        return sorted(self._adj)

    def edges(self):
        return [(x, y, c) for x in self.vertices() for y, c in self._adj[x] if x < y]


def total_conductance(net: Network, x) -> float:
    nb = net.neighbors(x)
    c = math.fsum(w for _, w in nb)
    if not c > 0:
        raise InvalidVertexError(f"{x!r} is isolated")
    return c


@dataclass(frozen=True, eq=False)
class FiniteWindow:
    """A finite vertex set of a network with the edges between its members.

    Vertices are kept in ascending order, so index order is vertex order and
    edges ``(i, j)`` with ``i < j`` carry the canonical orientation.
    """

    vertices: tuple
    index: dict
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_c: np.ndarray
    interior: np.ndarray
    c_total: np.ndarray
    crossing: int
    neighbor_lists: tuple = field(repr=False)

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, x):
        try:
            return x in self.index
        except TypeError:
            return False

    @property
    def interior_vertices(self) -> list:
        return [v for v, f in zip(self.vertices, self.interior) if f]

    @property
    def boundary_vertices(self) -> list:
        return [v for v, f in zip(self.vertices, self.interior) if not f]

    def pos(self, x) -> int:
        try:
            return self.index[x]
        except (KeyError, TypeError):
            raise KeyError(f"{x!r} is not in the window") from None

    def edge_list(self):
        v = self.vertices
        return [(v[i], v[j], c) for i, j, c in zip(self.edge_i, self.edge_j, self.edge_c)]

    def neighbors(self, x):
        return self.neighbor_lists[self.pos(x)]


def build_window(net: Network, vertices: Iterable, interior: Iterable | None = None) -> FiniteWindow:
    """Window on the given vertices. ``interior`` defaults to the vertices whose
    neighbors all lie inside."""
    verts = tuple(sorted(set(vertices)))
    for x in verts:
        net.check_vertex(x)
    index = {x: k for k, x in enumerate(verts)}
    ei, ej, ec = [], [], []
    nbl, ctot, full = [], [], []
    crossing = 0
    for k, x in enumerate(verts):
        nb = net.neighbors(x)
        nbl.append(tuple(nb))
        ctot.append(math.fsum(c for _, c in nb))
        inside = True
        for y, c in nb:
            j = index.get(y)
            if j is None:
                inside = False
                crossing += 1
            elif k < j:
                ei.append(k)
                ej.append(j)
                ec.append(c)
        full.append(inside)
    if interior is None:
        flags = np.array(full, dtype=bool)
    else:
        chosen = set(interior)
        flags = np.array([x in chosen for x in verts], dtype=bool)
    return FiniteWindow(
        vertices=verts,
        index=index,
        edge_i=np.array(ei, dtype=np.int64),
        edge_j=np.array(ej, dtype=np.int64),
        edge_c=np.array(ec, dtype=float),
        interior=flags,
        c_total=np.array(ctot, dtype=float),
        crossing=crossing,
        neighbor_lists=tuple(nbl),
    )


def hop_distances(net: Network, root, radius: int) -> dict:
    net.check_vertex(root)
    dist = {root: 0}
    queue = deque([root])
    while queue:
        x = queue.popleft()
        d = dist[x]
        if d == radius:
            continue
        for y, _ in net.neighbors(x):
            if y not in dist:
                dist[y] = d + 1
                queue.append(y)
    return dist


def materialize_ball(net: Network, root, radius: int) -> FiniteWindow:
    """Hop-metric ball; vertices strictly inside the sphere are interior."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    dist = hop_distances(net, root, radius)
    return build_window(net, dist, [x for x, d in dist.items() if d < radius])


def outer_boundary(net: Network, W: Iterable) -> list:
    W = set(W)
    out = set()
    for x in W:
        for y, _ in net.neighbors(x):
            if y not in W:
                out.add(y)
    return sorted(out)


def interior_of(net: Network, H: Iterable) -> list:
    H = set(H)
    return sorted(x for x in H if all(y in H for y, _ in net.neighbors(x)))


@dataclass(frozen=True)
class Violation:
    kind: str  # symmetry | positivity | loop | isolated | unknown-neighbor
    vertex: object
    other: object = None
    detail: str = ""


def validate(net: Network, window: FiniteWindow | Iterable | None = None) -> list[Violation]:
    """Check the network axioms on the vertices of a window (or on all vertices of a
    finite network). Returns an empty list when nothing is wrong."""
    if window is None:
        verts = net.vertices()
    elif isinstance(window, FiniteWindow):
        verts = list(window.vertices)
    else:
        verts = sorted(set(window))
    report = []
    for x in verts:
        nb = net.neighbors(x)
        if not nb:
            report.append(Violation("isolated", x))
            continue
        seen = set()
        for y, c in nb:
            if y == x:
                report.append(Violation("loop", x, y))
                continue
            if y in seen:
                report.append(Violation("multi-edge", x, y))
            seen.add(y)
            if not (c > 0):
                report.append(Violation("positivity", x, y, f"c={c}"))
            try:
                back = [w for z, w in net.neighbors(y) if z == x]
            except InvalidVertexError:
                report.append(Violation("unknown-neighbor", x, y))
                continue
            if len(back) != 1 or back[0] != c:
                report.append(Violation("symmetry", x, y, f"c_xy={c}, c_yx={back}"))
    return report
