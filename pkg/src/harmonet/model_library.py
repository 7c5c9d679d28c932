"""Fixture networks with closed-form harmonic functions, dipoles and
monopoles: weighted lines, the weighted binary tree, lattices, the Pascal
graph and stationary diagrams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .network_core import Network, materialize_ball
from .operators import VertexFunction, laplacian_apply
from .walkers import WalkKernel


# ------------------------------------------------------------------- lines

class LineNetwork(Network):
    """Nearest-neighbor chain on Z (``half=False``) or N0 (``half=True``).

    ``cond(i)`` is the conductance of the edge (i, i+1); ``log_cond`` is its
    vectorized logarithm, used by the walk kernel so large weights never
    overflow.
    """

    def __init__(self, cond: Callable[[int], float], log_cond: Callable[[np.ndarray], np.ndarray],
                 half: bool = False, name: str = "line"):
        self.cond = cond
        self.log_cond = log_cond
        self.half = half
        self.origin = 0
        self.name = name

    def contains(self, x):
        return isinstance(x, (int, np.integer)) and not isinstance(x, bool) and (x >= 0 or not self.half)

    def neighbors(self, x):
        self.check_vertex(x)
        x = int(x)
        out = []
        if not (self.half and x == 0):
            out.append((x - 1, self.cond(x - 1)))
        out.append((x + 1, self.cond(x)))
        return out

    def walk_kernel(self):
        return LineKernel(self)

    def radial_quotient(self, root):
        if self.half and root == 0:
            return self, (lambda x: int(x)), (lambda n: 1)
        return None


class LineKernel(WalkKernel):
    def __init__(self, net: LineNetwork):
        self.net = net

    def encode(self, vertices):
        return np.array([[int(x)] for x in vertices], dtype=np.int64).reshape(-1, 1)

    def decode(self, row):
        return int(row[0])

    def step(self, state, u):
        x = state[:, 0]
        left = self.net.log_cond(x - 1)
        right = self.net.log_cond(x)
        with np.errstate(over="ignore"):
            p_right = 1.0 / (1.0 + np.exp(left - right))
        if self.net.half:
            p_right = np.where(x == 0, 1.0, p_right)
        return (x + np.where(u < p_right, 1, -1)).reshape(-1, 1)


def _pow_cond(lam: float, shift: int = 0, half_sym: bool = False):
    lam = float(lam)

    def cond(i):
        return lam ** (i + shift)

    def logc(i):
        return (np.asarray(i, dtype=float) + shift) * math.log(lam)

    return cond, logc


@dataclass
class Fixture:
    name: str
    net: Network
    closed_forms: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def window(self, radius: int = 6):
        return materialize_ball(self.net, self.net.origin, radius)


def line_fixture(variant: str, lam: float = 2.0, side: str = "both") -> Fixture:
    """Weighted line fixtures.

    n0_linear    N0, c(n, n+1) = n + 1
    z_unit       Z, unit conductances; attaches dipoles v_n
    z_summable   c(n, n+1) = lam^(n+1) to the right; on Z the left side mirrors
                 it (c(-n-1, -n) = lam^(n+1)) so resistances stay summable;
                 ``side="right"`` gives the half-line N0. Attaches the harmonic
                 function u(0) = 0, u(n) - u(n-1) = 1/c(n-1, n).
    z_geometric  Z, c(i, i+1) = lam^max(|i|, |i+1|); attaches the monopole
                 s * r^|n| with r = 1/lam and s calibrated by the residual at 0
    n0_geometric N0, c(i, i+1) = lam^i
    """
    if variant in ("z_summable", "z_geometric", "n0_geometric") and not lam > 1:
        raise ValueError("lambda must exceed 1")
    if variant == "n0_linear":
        net = LineNetwork(lambda i: float(i + 1), lambda i: np.log(np.maximum(np.asarray(i, float) + 1, 1e-300)),
                          half=True, name="line_n0_linear")
        return Fixture(variant, net, {}, {"transient": False}, {})
    if variant == "z_unit":
        net = LineNetwork(lambda i: 1.0, lambda i: np.zeros(np.shape(i)), name="line_z_unit")
        return Fixture(variant, net, {"dipole": unit_line_dipole}, {"transient": False, "harm_dim": 0}, {})
    if variant == "z_summable":
        lam = float(lam)
        half = side == "right"
        if side not in ("both", "right"):
            raise ValueError("side must be 'both' or 'right'")

        def cond(i):
            return lam ** (i + 1) if i >= 0 else lam ** (-i)

        def logc(i):
            i = np.asarray(i, dtype=float)
            return np.where(i >= 0, i + 1, -i) * math.log(lam)

        net = LineNetwork(cond, logc, half=half, name="line_z_summable")

        def harmonic(n, _c=cond):
            n = int(n)
            if n >= 0:
                return math.fsum(1.0 / _c(k) for k in range(n))
            return -math.fsum(1.0 / _c(k) for k in range(n, 0))

        total = 1.0 / (lam - 1.0) * (1.0 if half else 2.0)
        return Fixture(variant, net, {"harmonic": harmonic},
                       {"transient": True, "harm_dim": 0 if half else 1, "boundary_term": total},
                       {"lambda": lam, "side": side})
    if variant == "z_geometric":
        lam = float(lam)

        def cond(i):
            return lam ** max(abs(i), abs(i + 1))

        def logc(i):
            i = np.asarray(i, dtype=float)
            return np.maximum(np.abs(i), np.abs(i + 1)) * math.log(lam)

        net = LineNetwork(cond, logc, name="line_z_geometric")
        r = 1.0 / lam
        # scale fixed so that Delta w = 1 at the origin
        lap0 = cond(-1) * (1 - r) + cond(0) * (1 - r)
        s = 1.0 / lap0

        def mono(n, _s=s, _r=r):
            return _s * _r ** abs(int(n))

        return Fixture(variant, net, {"monopole": mono}, {"transient": True},
                       {"lambda": lam, "r": r, "scale": s, "scale_closed_form": r / (2 * (1 - r))})
    if variant == "n0_geometric":
        cond, logc = _pow_cond(lam)
        net = LineNetwork(cond, logc, half=True, name="line_n0_geometric")
        return Fixture(variant, net, {}, {"transient": True}, {"lambda": float(lam)})
    raise ValueError(f"unknown line variant {variant!r}")


def unit_line_dipole(n: int):
    """Finite-energy solution of Delta v = delta_n - delta_0 on Z with unit weights."""
    n = int(n)
    if n < 0:
        return lambda i: unit_line_dipole(-n)(-int(i))

    def v(i):
        i = int(i)
        if i <= 0:
            return 0.0
        return float(min(i, n))

    return v


# ------------------------------------------------------------- binary tree

TREE_DEPTH_CAP = 60


class BinaryTree(Network):
    """Rooted binary tree, vertices (n, i) with 1 <= i <= 2^n; the children of
    (n, i) are (n+1, 2i-1) and (n+1, 2i); edges between levels n and n+1 carry
    conductance lam^n."""

    def __init__(self, lam: float = 1.0):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.lam = float(lam)
        self.origin = (0, 1)
        self.name = "binary_tree"

    def contains(self, x):
        return (isinstance(x, tuple) and len(x) == 2 and all(isinstance(t, (int, np.integer)) for t in x)
                and x[0] >= 0 and 1 <= x[1] <= 2 ** x[0])

    def neighbors(self, x):
        self.check_vertex(x)
        n, i = int(x[0]), int(x[1])
        out = []
        if n > 0:
            out.append(((n - 1, (i + 1) // 2), self.lam ** (n - 1)))
        c = self.lam**n
        out.append(((n + 1, 2 * i - 1), c))
        out.append(((n + 1, 2 * i), c))
        return out

    def walk_kernel(self):
        return TreeKernel(self.lam)

    def radial_quotient(self, root):
        """Level process seen from the root: a half-line whose edge (n, n+1)
        carries the total conductance 2^(n+1) lam^n of the level cut."""
        if root != self.origin:
            return None
        lam = self.lam
        line = LineNetwork(lambda n: 2.0 ** (n + 1) * lam**n,
                           lambda n: (np.asarray(n, float) + 1) * math.log(2.0) + np.asarray(n, float) * math.log(lam),
                           half=True, name="binary_tree_levels")
        return line, (lambda x: int(x[0])), (lambda n: 2**n)


class TreeKernel(WalkKernel):
    """State (depth, index of the ancestor at depth min(depth, cap)).

    Below the cap the exact vertex is forgotten; the lumping is exact for
    questions about vertices above the cap because the walk must climb back
    through the recorded ancestor.
    """

    width = 2

    def __init__(self, lam: float, cap: int = TREE_DEPTH_CAP):
        self.p_up = 1.0 / (1.0 + 2.0 * lam)
        self.cap = cap
        # probability of ever climbing one level: minimal root of q = p + (1 - p) q^2
        p = self.p_up
        q = min(1.0, p / (1.0 - p))
        self.margin = None if q >= 1.0 else int(math.ceil(50 * math.log(2) / -math.log(q)))

    def far(self, state, targets):
        if self.margin is None or len(targets) == 0:
            return None
        return state[:, 0] > int(targets[:, 0].max()) + self.margin

    def exact_for(self, vertex):
        return vertex[0] < self.cap

    def encode(self, vertices):
        rows = []
        for n, i in vertices:
            if n > self.cap:
                i = (i - 1) // 2 ** (n - self.cap) + 1
            rows.append((n, i))
        return np.array(rows, dtype=np.int64).reshape(-1, 2)

    def decode(self, row):
        return int(row[0]), int(row[1])

    def step(self, state, u):
        n = state[:, 0]
        i = state[:, 1]
        up = (n > 0) & (u < self.p_up)
        # u is uniform on [p_up, 1) for downward moves, split in half for the child
        mid = np.where(n > 0, (1.0 + self.p_up) / 2.0, 0.5)
        second = u >= mid
        new_n = np.where(up, n - 1, n + 1)
        down_i = np.where(n < self.cap, 2 * i - 1 + second, i)
        up_i = np.where(n <= self.cap, (i + 1) // 2, i)
        new_i = np.where(up, up_i, down_i)
        return np.stack([new_n, new_i], axis=1)


def _tree_left_value(n: int, i: int, lam: float) -> float:
    """Value of f_lambda at (n, i) for a vertex in the left half (i <= 2^(n-1))."""
    if i == 1:
        return _tree_extreme(n, lam)
    # first level m at which the ancestor of (n, i) has index 2
    m = n - ((i - 1).bit_length() - 1)
    return _tree_extreme(m - 1, lam)


def _tree_extreme(n: int, lam: float) -> float:
    if n == 0:
        return 0.0
    # (1 + lam + ... + lam^(n-1)) / lam^(n-2), summed as lam^(2-n) + ... + lam
    return math.fsum(lam ** (k - n + 2) for k in range(n))


def tree_harmonic(lam: float):
    """The symmetric harmonic function f_lambda on the weighted binary tree.

    f(root) = 0, f = a_n on the extreme vertices (n, 1), -a_n on (n, 2^n), and
    the subtree hanging from (n+1, 2) repeats the value a_n of its parent
    (mirror image on the right). Interior values are the ones forced by these
    constancy constraints; harmonicity is checked by residual in the tests.
    """
    lam = float(lam)

    def f(x):
        n, i = int(x[0]), int(x[1])
        if n == 0:
            return 0.0
        half = 2 ** (n - 1)
        if i <= half:
            return _tree_left_value(n, i, lam)
        return -_tree_left_value(n, 2**n + 1 - i, lam)

    return f


def tree_monopole(x):
    """2^-depth: the monopole at the root of the unit-weight binary tree."""
    return 2.0 ** (-int(x[0]))


def binary_tree_fixture(lam: float = 1.0) -> Fixture:
    net = BinaryTree(lam)
    forms = {"harmonic": tree_harmonic(lam)}
    if lam == 1.0:
        forms["monopole"] = tree_monopole
    return Fixture("binary_tree", net, forms,
                   {"transient": True, "finite_energy_harmonic": lam > 1}, {"lambda": float(lam)})


def tree_harmonic_energy_limit(lam: float) -> float:
    """Energy of f_lambda for lam > 1, summed in closed form: 2 lam^2 from the
    root edges plus 2 sum_{n>=2} lam^(3-n) along the extreme rays."""
    if not lam > 1:
        return math.inf
    return 2 * lam**2 + 2 * lam / (1 - 1 / lam)


# ----------------------------------------------------------------- lattices

class Lattice(Network):
    def __init__(self, d: int):
        self.d = int(d)
        self.origin = (0,) * self.d
        self.name = f"lattice_z{self.d}"

    def contains(self, x):
        return isinstance(x, tuple) and len(x) == self.d and all(isinstance(t, (int, np.integer)) for t in x)

    def neighbors(self, x):
        self.check_vertex(x)
        out = []
        for k in range(self.d):
            for s in (-1, 1):
                y = list(x)
                y[k] += s
                out.append((tuple(y), 1.0))
        out.sort()
        return out

    def walk_kernel(self):
        return LatticeKernel(self.d)


class LatticeKernel(WalkKernel):
    def __init__(self, d):
        self.width = d
        self.d = d

    def encode(self, vertices):
        return np.array([list(x) for x in vertices], dtype=np.int64).reshape(-1, self.d)

    def decode(self, row):
        return tuple(int(t) for t in row)

    def step(self, state, u):
        k = np.minimum((u * 2 * self.d).astype(np.int64), 2 * self.d - 1)
        axis = k // 2
        sign = 2 * (k % 2) - 1
        out = state.copy()
        out[np.arange(len(out)), axis] += sign
        return out


def lattice_fixture(d: int) -> Fixture:
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    if d == 1:
        fx = line_fixture("z_unit")
        fx.name = "lattice_z1"
        return fx
    return Fixture(f"lattice_z{d}", Lattice(d), {}, {"transient": d >= 3}, {"d": d})


# --------------------------------------------------------- diagram fixtures

def pascal_harmonic(x) -> int:
    n, i = x
    return n * (n + 1) // 2 - i * (n + 1)


def pascal_fixture(lam: float = 1.0, depth: int = 12) -> Fixture:
    from .bratteli import DiagramNetwork, pascal_diagram

    d = pascal_diagram(depth, lam=lam)
    forms = {"harmonic": pascal_harmonic} if lam == 1.0 else {}
    return Fixture("pascal", DiagramNetwork(d), forms, {"harm_per_level_dim": 1, "finite_energy_harmonic": False},
                   {"lambda": float(lam), "depth": depth})


def stationary_harmonic(f1, lam: float):
    """Closed form f_{n+1}(x) = f_1(x) sum_{i<=n} lam^-i, f_0 = 0."""
    f1 = np.asarray(f1, dtype=float)

    def level(n):
        if n == 0:
            return np.zeros_like(f1)
        return f1 * math.fsum(lam ** (-i) for i in range(n))

    return level


def stationary_fixture(A, lam: float = 2.0, depth: int = 12) -> Fixture:
    from .bratteli import DiagramNetwork, stationary_diagram

    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.array_equal(A, A.T):
        raise ValueError("A must be symmetric")
    if np.any(A < 0) or np.any(A != np.round(A)):
        raise ValueError("A must have nonnegative integer entries")
    if abs(np.linalg.det(A)) < 1e-12:
        raise ValueError("A must be invertible")
    d = stationary_diagram(A, depth, lam=lam)
    return Fixture("stationary_bratteli", DiagramNetwork(d), {"harmonic_family": lambda f1: stationary_harmonic(f1, lam)},
                   {"harm_dim_claimed": A.shape[0] - 1}, {"lambda": float(lam), "A": A.tolist(), "depth": depth})


FIXTURES = {
    "line_n0_linear": lambda **kw: line_fixture("n0_linear"),
    "line_z_unit": lambda **kw: line_fixture("z_unit"),
    "line_z_summable": lambda lam=2.0, side="both", **kw: line_fixture("z_summable", lam, side),
    "line_z_geometric": lambda lam=2.0, **kw: line_fixture("z_geometric", lam),
    "line_n0_geometric": lambda lam=2.0, **kw: line_fixture("n0_geometric", lam),
    "binary_tree": lambda lam=1.0, **kw: binary_tree_fixture(lam),
    "pascal": lambda lam=1.0, depth=12, **kw: pascal_fixture(lam, depth),
    "stationary_bratteli": lambda A=((2, 1), (1, 2)), lam=2.0, depth=12, **kw: stationary_fixture(A, lam, depth),
    "lattice_z2": lambda **kw: lattice_fixture(2),
    "lattice_z3": lambda **kw: lattice_fixture(3),
}


def get_fixture(name: str, **params) -> Fixture:
    try:
        make = FIXTURES[name]
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; known: {', '.join(sorted(FIXTURES))}") from None
    return make(**params)


def check_closed_form(net: Network, fn, rhs: dict | None = None, radius: int = 6, root=None) -> float:
    """Max |Delta f - rhs| over the interior of a ball."""
    w = materialize_ball(net, root if root is not None else net.origin, radius)
    f = VertexFunction.from_callable(w, fn)
    lap = laplacian_apply(net, f)
    rhs = rhs or {}
    return max(abs(v - rhs.get(x, 0.0)) for x, v in lap.items())
