"""Graded networks given by incidence matrices between consecutive levels.

Level n has vertices (n, 0), ..., (n, |V_n| - 1). The incidence matrix A_n
has shape |V_n| x |V_{n+1}|, and C_n carries the conductances of the edges
between levels n and n+1 on the same support. Level algebra (arrow matrices,
the level recursion for harmonic functions, currents) works on dense numpy
blocks; diagrams are small per level.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space

from .network_core import Network, PreconditionError, hop_distances

LevelFunction = list  # list of 1-d arrays, entry n lives on level n


class DiagramError(ValueError):
    pass


def _as_incidence(a, n) -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.size == 0:
        raise DiagramError(f"incidence matrix {n} must be a nonempty 2-d array")
    if np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise DiagramError(f"incidence matrix {n} must have nonnegative integer entries")
    arr = arr.astype(np.int64)
    if np.any(arr > 1):
        i, j = np.argwhere(arr > 1)[0]
        raise DiagramError(
            f"incidence matrix {n} has multiplicity {arr[i, j]} at ({i}, {j}); "
            "reduce it with merge_parallel_edges first")
    zr = np.flatnonzero(arr.sum(axis=1) == 0)
    if len(zr):
        raise DiagramError(f"incidence matrix {n} has a zero row at {int(zr[0])}")
    zc = np.flatnonzero(arr.sum(axis=0) == 0)
    if len(zc):
        raise DiagramError(f"incidence matrix {n} has a zero column at {int(zc[0])}")
    return arr


def lambda_pow_n(lam: float) -> Callable:
    """Conductance rule: every edge between levels n and n+1 carries lam^n."""
    lam = float(lam)
    if not lam > 0:
        raise DiagramError("lambda must be positive")

    def rule(n, a):
        return (lam**n) * a.astype(float)

    rule.spec = {"rule": "lambda_pow_n", "lambda": lam}
    return rule


class BratteliDiagram:
    """Incidence matrices given as a finite list or as a function of n.

    ``conductance`` is a rule ``(n, A_n) -> C_n`` (see ``lambda_pow_n``) or a
    list of explicit matrices. Levels generated by a function are built on
    first use and cached, so rule-based diagrams are infinite.
    """

    def __init__(self, incidence, conductance=None, name: str = "diagram", depth: int | None = None):
        self.name = name
        if callable(incidence):
            self._inc_fn = incidence
            self._inc: list = []
            self.num_levels = None
        else:
            mats = list(incidence)
            if not mats:
                raise DiagramError("need at least one incidence matrix")
            self._inc_fn = None
            self._inc = []
            self.num_levels = len(mats) + 1
            for n, a in enumerate(mats):
                self._push(_as_incidence(a, n))
        self._cond_rule = None
        self._cond_list = None
        if conductance is None:
            conductance = lambda_pow_n(1.0)
        if callable(conductance):
            self._cond_rule = conductance
        else:
            self._cond_list = [np.asarray(c, dtype=float) for c in conductance]
        self._cond: list = []
        self.depth = depth if depth is not None else (self.num_levels - 1 if self.num_levels else 12)
        for n in range(len(self._inc)):
            self.conductance_matrix(n)

    @property
    def finite(self) -> bool:
        return self.num_levels is not None

    def _push(self, a: np.ndarray):
        n = len(self._inc)
        if n and a.shape[0] != self._inc[-1].shape[1]:
            raise DiagramError(
                f"dimension mismatch: incidence {n - 1} has {self._inc[-1].shape[1]} columns, "
                f"incidence {n} has {a.shape[0]} rows")
        self._inc.append(a)

    def incidence(self, n: int) -> np.ndarray:
        if n < 0:
            raise DiagramError(f"no incidence matrix at level {n}")
        if self.num_levels is not None and n >= self.num_levels - 1:
            raise DiagramError(f"diagram has {self.num_levels} levels; no incidence matrix at level {n}")
        while len(self._inc) <= n:
            k = len(self._inc)
            self._push(_as_incidence(self._inc_fn(k), k))
        return self._inc[n]

    def conductance_matrix(self, n: int) -> np.ndarray:
        self.incidence(n)
        while len(self._cond) <= n:
            k = len(self._cond)
            ak = self.incidence(k)
            if self._cond_rule is not None:
                c = np.asarray(self._cond_rule(k, ak), dtype=float)
            else:
                if k >= len(self._cond_list):
                    raise DiagramError(f"no conductance matrix given for level {k}")
                c = self._cond_list[k]
            if c.ndim == 1:
                c = c.reshape(1, -1)
            if c.shape != ak.shape:
                raise DiagramError(f"conductance matrix {k} has shape {c.shape}, incidence has {ak.shape}")
            if np.any(c < 0) or not np.all(np.isfinite(c)):
                raise DiagramError(f"conductance matrix {k} must be finite and nonnegative")
            if not np.array_equal(c > 0, ak > 0):
                raise DiagramError(f"conductance matrix {k} support differs from the incidence support")
            self._cond.append(c)
        return self._cond[n]

    def level_size(self, n: int) -> int:
        if n < 0 or (self.num_levels is not None and n >= self.num_levels):
            raise DiagramError(f"level {n} out of range")
        if n == 0:
            return self.incidence(0).shape[0]
        return self.incidence(n - 1).shape[1]

    def has_level(self, n: int) -> bool:
        return n >= 0 and (self.num_levels is None or n < self.num_levels)

    def backward_conductance(self, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros(self.level_size(0))
        return self.conductance_matrix(n - 1).sum(axis=0)

    def forward_conductance(self, n: int) -> np.ndarray:
        if self.num_levels is not None and n == self.num_levels - 1:
            return np.zeros(self.level_size(n))
        return self.conductance_matrix(n).sum(axis=1)

    def total_conductance(self, n: int) -> np.ndarray:
        """c(x) for x in V_n."""
        return self.backward_conductance(n) + self.forward_conductance(n)

    def spec(self, depth: int | None = None) -> dict:
        depth = self.depth if depth is None else depth
        k = depth if self.num_levels is None else min(depth, self.num_levels - 1)
        out = {"levels": k + 1, "incidence": [self.incidence(n).tolist() for n in range(k)]}
        rule = getattr(self._cond_rule, "spec", None)
        out["conductance"] = rule if rule else [self.conductance_matrix(n).tolist() for n in range(k)]
        return out


def merge_parallel_edges(incidence: Sequence, conductance: Sequence | None = None):
    """Reduce multiplicities to a 0-1 diagram by merging parallel edges.

    k parallel edges of conductance c between the same pair of vertices act
    electrically as one edge of conductance k c. ``conductance`` gives the
    per-edge value (default 1). Returns (0-1 incidence list, conductance list).
    """
    inc01, conds = [], []
    for n, a in enumerate(incidence):
        a = np.asarray(a)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if np.any(a < 0) or np.any(a != np.round(a)):
            raise DiagramError(f"incidence matrix {n} must have nonnegative integer entries")
        per_edge = np.ones(a.shape) if conductance is None else np.asarray(conductance[n], dtype=float).reshape(a.shape)
        inc01.append((a > 0).astype(np.int64))
        conds.append(a * per_edge)
    return inc01, conds


def pascal_incidence(n: int) -> np.ndarray:
    a = np.zeros((n + 1, n + 2), dtype=np.int64)
    idx = np.arange(n + 1)
    a[idx, idx] = 1
    a[idx, idx + 1] = 1
    return a


def pascal_diagram(depth: int = 12, lam: float = 1.0) -> BratteliDiagram:
    """Pascal graph: level n has n+1 vertices, (n, i) joined to (n+1, i) and
    (n+1, i+1); edges between levels n and n+1 carry lam^n."""
    return BratteliDiagram(pascal_incidence, lambda_pow_n(lam), name="pascal", depth=depth)


def stationary_diagram(A, depth: int = 12, lam: float = 1.0) -> BratteliDiagram:
    """Every level has d = len(A) vertices joined by the pattern of A, and the
    edges between levels n and n+1 carry lam^n times the multiplicity in A.

    Entries above 1 are parallel edges; they are merged into one edge of the
    summed conductance, which leaves the network electrically unchanged.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DiagramError("stationary incidence must be square")
    (A01,), (mult,) = merge_parallel_edges([A])
    A01 = _as_incidence(A01, 0)
    lam = float(lam)
    if not lam > 0:
        raise DiagramError("lambda must be positive")

    def rule(n, a):
        return (lam**n) * mult

    rule.spec = {"rule": "lambda_pow_n", "lambda": lam, "multiplicity": mult.astype(int).tolist()}
    return BratteliDiagram(lambda n: A01, rule, name="stationary", depth=depth)


def diagram_from_spec(spec: dict) -> BratteliDiagram:
    """Build from ``{"levels": K | "stationary", "incidence": ..., "conductance": ...}``.

    With ``"merge_parallel": true`` multiplicities above 1 in a finite list are
    merged into single edges (rule-based conductances are multiplied by the
    multiplicity; explicit matrices are taken as the merged values).
    """
    levels = spec.get("levels")
    inc = spec["incidence"]
    cond = spec.get("conductance", {"rule": "lambda_pow_n", "lambda": 1.0})
    if isinstance(cond, dict):
        if cond.get("rule") != "lambda_pow_n":
            raise DiagramError(f"unknown conductance rule {cond.get('rule')!r}")
        cond = lambda_pow_n(cond.get("lambda", 1.0))
    if levels == "stationary":
        lam = cond.spec["lambda"] if callable(cond) else 1.0
        return stationary_diagram(inc, int(spec.get("depth", 12)), lam)
    if levels is not None and int(levels) != len(inc) + 1:
        raise DiagramError(f"'levels' is {levels} but {len(inc)} incidence matrices were given")
    if spec.get("merge_parallel"):
        inc, mult = merge_parallel_edges(inc)
        cond = [cond(n, m) for n, m in enumerate(mult)] if callable(cond) else [
            np.asarray(c, float) * (np.asarray(m) > 0) for c, m in zip(cond, mult)]
    return BratteliDiagram(inc, cond, name=spec.get("name", "diagram"))


# ------------------------------------------------------- diagram as network

class DiagramNetwork(Network):
    """Neighbor oracle for a diagram: vertex (n, i), 0-based index i."""

    def __init__(self, diagram: BratteliDiagram):
        self.diagram = diagram
        self.origin = (0, 0)
        self.name = diagram.name
        self.finite = diagram.finite

    def contains(self, x):
        if not (isinstance(x, tuple) and len(x) == 2 and all(isinstance(t, (int, np.integer)) for t in x)):
            return False
        n, i = int(x[0]), int(x[1])
        return self.diagram.has_level(n) and 0 <= i < self.diagram.level_size(n)

    def neighbors(self, x):
        self.check_vertex(x)
        d = self.diagram
        n, i = int(x[0]), int(x[1])
        out = []
        if n > 0:
            col = d.conductance_matrix(n - 1)[:, i]
            out.extend(((n - 1, int(j)), float(col[j])) for j in np.flatnonzero(col))
        if d.num_levels is None or n < d.num_levels - 1:
            row = d.conductance_matrix(n)[i]
            out.extend(((n + 1, int(j)), float(row[j])) for j in np.flatnonzero(row))
        return out

    def vertices(self):
        if not self.finite:
            return super().vertices()
        return [(n, i) for n in range(self.diagram.num_levels) for i in range(self.diagram.level_size(n))]


def level_function(d: BratteliDiagram, fn: Callable, last: int) -> LevelFunction:
    """Evaluate ``fn((n, i))`` on levels 0..last."""
    return [np.array([float(fn((n, i))) for i in range(d.level_size(n))]) for n in range(last + 1)]


def level_function_csv(f: LevelFunction) -> str:
    buf = io.StringIO()
    buf.write("level,index,value\n")
    for n, v in enumerate(f):
        for i, x in enumerate(v):
            buf.write(f"{n},{i},{float(x)!r}\n")
    return buf.getvalue()


def level_laplacian(d: BratteliDiagram, f: LevelFunction, n: int) -> np.ndarray:
    """(Delta f)(x) for x in V_n; needs f on levels n-1 (if any), n and n+1 (if any)."""
    fn = np.asarray(f[n], dtype=float)
    out = d.total_conductance(n) * fn
    if n > 0:
        out = out - d.conductance_matrix(n - 1).T @ np.asarray(f[n - 1], dtype=float)
    if d.num_levels is None or n < d.num_levels - 1:
        if n + 1 >= len(f):
            raise PreconditionError(f"level {n + 1} of the function is needed")
        out = out - d.conductance_matrix(n) @ np.asarray(f[n + 1], dtype=float)
    return out


def harmonic_residuals(d: BratteliDiagram, f: LevelFunction, first: int = 1) -> list[float]:
    """Max |Delta f| on each level first..len(f)-2."""
    return [float(np.max(np.abs(level_laplacian(d, f, n)))) for n in range(first, len(f) - 1)]


# ---------------------------------------------------------- arrow matrices

@dataclass(frozen=True)
class ArrowMatrices:
    level: int
    left: np.ndarray            # |V_n| x |V_{n+1}|, c_xz / c(x)
    right: np.ndarray | None    # |V_n| x |V_{n-1}|, c_yx / c(x); None at level 0

    def row_sums(self) -> np.ndarray:
        s = self.left.sum(axis=1)
        if self.right is not None:
            s = s + self.right.sum(axis=1)
        return s


def arrow_matrices(d: BratteliDiagram, n: int) -> ArrowMatrices:
    if not d.has_level(n + 1):
        raise DiagramError(f"level {n + 1} needed for the arrow matrices at level {n}")
    cx = d.total_conductance(n)
    left = d.conductance_matrix(n) / cx[:, None]
    right = d.conductance_matrix(n - 1).T / cx[:, None] if n > 0 else None
    return ArrowMatrices(n, left, right)


def transposition_gap(d: BratteliDiagram, n: int) -> float:
    """max |right arrow at level n+1 - (left arrow at level n)^T|.

    The two matrices carry the same support but are normalized by the total
    conductances of different levels, so the gap is generally nonzero.
    """
    lo = arrow_matrices(d, n).left
    hi = arrow_matrices(d, n + 1).right
    return float(np.max(np.abs(hi - lo.T)))


# -------------------------------------------------------- level recursion

@dataclass(frozen=True)
class Extension:
    """All f_{n+1} solving one level equation: particular + span(kernel)."""

    level: int
    form: str
    particular: np.ndarray
    kernel: np.ndarray      # orthonormal columns
    residual: float

    @property
    def dim(self) -> int:
        return self.kernel.shape[1]

    @property
    def feasible(self) -> bool:
        return self.residual <= 1e-9 * max(1.0, float(np.max(np.abs(self.particular), initial=0.0)))


def _level_system(d: BratteliDiagram, n: int, f_prev, f_n, form: str):
    f_n = np.asarray(f_n, dtype=float)
    if len(f_n) != d.level_size(n):
        raise DiagramError(f"f_{n} has length {len(f_n)}, level {n} has {d.level_size(n)} vertices")
    if n > 0:
        f_prev = np.asarray(f_prev, dtype=float)
        if len(f_prev) != d.level_size(n - 1):
            raise DiagramError(f"f_{n - 1} has the wrong length")
    if form == "conductance":
        M = d.conductance_matrix(n)
        b = d.total_conductance(n) * f_n
        if n > 0:
            b = b - d.conductance_matrix(n - 1).T @ f_prev
    elif form == "arrow":
        ar = arrow_matrices(d, n)
        M = ar.left
        b = f_n.copy()
        if n > 0:
            b = b - ar.right @ f_prev
    else:
        raise ValueError("form must be 'conductance' or 'arrow'")
    return M, b


def harmonic_extend(d: BratteliDiagram, n: int, f_prev, f_n, form: str = "conductance") -> Extension:
    """Solve for f_{n+1} making f harmonic on level n.

    The particular solution is the minimal-norm least-squares one; a nonzero
    residual means no continuation exists.
    """
    M, b = _level_system(d, n, f_prev, f_n, form)
    p, *_ = np.linalg.lstsq(M, b, rcond=None)
    K = null_space(M)
    res = float(np.linalg.norm(M @ p - b))
    return Extension(n, form, p, K, res)


def subspace_distance(a: Extension, b: Extension) -> float:
    """Distance between the affine solution sets of two extensions: projector
    gap of the kernels plus the offset of the particular solutions modulo the
    kernel."""
    if a.dim != b.dim:
        return math.inf
    Pa = a.kernel @ a.kernel.T
    Pb = b.kernel @ b.kernel.T
    gap = float(np.linalg.norm(Pa - Pb, 2)) if a.dim else 0.0
    diff = a.particular - b.particular
    off = float(np.linalg.norm(diff - Pa @ diff))
    return max(gap, off)


def extend_sequence(d: BratteliDiagram, f0, f1, last: int, form: str = "conductance",
                    choose: Callable | None = None) -> tuple[LevelFunction, list[Extension]]:
    """Run the level recursion from (f_0, f_1) up to level ``last``.

    ``choose(ext)`` picks f_{n+1} from an extension (default: the minimal-norm
    particular solution).
    """
    f = [np.asarray(f0, dtype=float), np.asarray(f1, dtype=float)]
    exts = []
    for n in range(1, last):
        e = harmonic_extend(d, n, f[n - 1], f[n], form)
        exts.append(e)
        f.append(np.asarray(choose(e), dtype=float) if choose else e.particular)
    return f, exts


@dataclass
class ExistenceReport:
    exists: bool
    depth: int
    failing_level: int | None
    witness: LevelFunction | None
    prefix_dims: list
    full_rank_shortcut: bool
    criterion_dims: list = field(default_factory=list)


def _prefix_matrix(d: BratteliDiagram, depth: int):
    """Equations Delta f = 0 at levels 0..depth-1 for unknowns f_1..f_depth with f_0 = 0."""
    sizes = [d.level_size(n) for n in range(depth + 1)]
    offs = np.concatenate([[0], np.cumsum(sizes[1:])])
    rows = []
    for n in range(depth):
        blk = np.zeros((sizes[n], offs[-1]))
        if n > 0:
            blk[:, offs[n - 1]:offs[n]] += np.diag(d.total_conductance(n))
            if n > 1:
                blk[:, offs[n - 2]:offs[n - 1]] -= d.conductance_matrix(n - 1).T
        blk[:, offs[n]:offs[n + 1]] -= d.conductance_matrix(n)
        rows.append(blk)
    return np.vstack(rows), offs


def _rank_criterion(d: BratteliDiagram, depth: int) -> list[int]:
    """dim(Col(left_n) cap G_n) for n = 1..depth-1, with N_n and G_n built level by level."""
    C0 = d.conductance_matrix(0)
    N_prev = np.zeros((d.level_size(0), 0))
    N_cur = null_space(C0)
    dims = []
    for n in range(1, depth):
        ar = arrow_matrices(d, n)
        G = np.hstack([N_cur, -ar.right @ N_prev]) if N_prev.size else N_cur
        G = _orth(G)
        col = _orth(ar.left)
        dims.append(_intersection_dim(col, G))
        # N_{n+1} = {g : left g in G}
        if G.shape[1]:
            Q = np.eye(G.shape[0]) - G @ G.T
        else:
            Q = np.eye(ar.left.shape[0])
        N_prev, N_cur = N_cur, null_space(Q @ ar.left)
    return dims


def _orth(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if M.size == 0 or M.shape[1] == 0:
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    return u[:, s > tol * max(1.0, s[0])]


def _intersection_dim(A: np.ndarray, B: np.ndarray, tol: float = 1e-10) -> int:
    if A.shape[1] == 0 or B.shape[1] == 0:
        return 0
    s = np.linalg.svd(A.T @ B, compute_uv=False)
    return int(np.sum(s > 1 - tol))


def harmonic_exists(d: BratteliDiagram, depth: int) -> ExistenceReport:
    """Whether some nonzero f with f_0 = 0 is harmonic on levels 0..depth-1.

    The exact prefix space is the null space of the stacked level equations;
    a prefix counts as nontrivial when it is nonzero on levels below
    ``depth`` (a function living only on the last level extends nothing).
    When every left arrow from level 1 on has full row rank any f_1 with
    C_0 f_1 = 0 continues, which short-circuits the computation.
    """
    if d.level_size(0) != 1:
        raise PreconditionError("existence test expects a single root at level 0")
    if depth < 2:
        raise ValueError("depth must be at least 2")
    shortcut = d.level_size(1) > 1 and all(
        np.linalg.matrix_rank(arrow_matrices(d, n).left) == d.level_size(n) for n in range(1, depth))
    M, offs = _prefix_matrix(d, depth)
    row_ends = np.cumsum([d.level_size(n) for n in range(depth)])
    dims = []
    failing = None
    witness = None
    for k in range(2, depth + 1):
        Mk = M[: row_ends[k - 1], : offs[k]]
        K = null_space(Mk)
        proj = _orth(K[: offs[k - 1]]) if offs[k - 1] else np.zeros((0, 0))
        dims.append(proj.shape[1])
        if proj.shape[1] == 0 and failing is None:
            failing = k
        if k == depth and K.shape[1] and proj.shape[1]:
            # pick the kernel vector with the largest component below the last level
            u, s, vt = np.linalg.svd(K[: offs[k - 1]], full_matrices=False)
            vec = K @ vt[0]
            witness = [np.zeros(1)] + [vec[offs[n - 1]:offs[n]] for n in range(1, depth + 1)]
    exists = failing is None
    crit = _rank_criterion(d, depth)
    return ExistenceReport(exists, depth, failing, witness if exists else None, dims, shortcut, crit)


# ------------------------------------------------------------- currents

@dataclass(frozen=True)
class Currents:
    level: int
    incoming: np.ndarray
    outgoing: np.ndarray

    @property
    def total(self) -> float:
        return math.fsum(self.incoming.tolist())

    @property
    def imbalance(self) -> np.ndarray:
        """incoming - outgoing, which is (Delta f)(x)."""
        return self.incoming - self.outgoing


def currents(d: BratteliDiagram, f: LevelFunction, n: int) -> Currents:
    if n < 1:
        raise DiagramError("currents are defined from level 1 on")
    if n + 1 >= len(f):
        raise DiagramError(f"f must be given on levels {n - 1}..{n + 1}")
    fn = np.asarray(f[n], dtype=float)
    inc = d.backward_conductance(n) * fn - d.conductance_matrix(n - 1).T @ np.asarray(f[n - 1], dtype=float)
    out = d.conductance_matrix(n) @ np.asarray(f[n + 1], dtype=float) - d.forward_conductance(n) * fn
    return Currents(n, inc, out)


def first_current(d: BratteliDiagram, f: LevelFunction) -> float:
    """Total current entering level 1: sum over x in V_1 of c_ox (f(x) - f(o))."""
    C0 = d.conductance_matrix(0)
    f0 = np.asarray(f[0], dtype=float)
    f1 = np.asarray(f[1], dtype=float)
    return math.fsum((C0 * (f1[None, :] - f0[:, None])).ravel().tolist())


@dataclass(frozen=True)
class Extrema:
    maxima: list
    minima: list
    max_increasing: bool
    min_decreasing: bool
    bounded: str  # "bounded-consistent" | "unbounded-consistent" | "inconclusive"


def level_extrema(d: BratteliDiagram, f: LevelFunction, tol: float = 1e-9) -> Extrema:
    """M_n = max f on V_n and m_n = min f on V_n for n = 0..len(f)-1.

    f must be harmonic at every vertex of levels 0..len(f)-2 and nonconstant.
    """
    vals = np.concatenate([np.asarray(v, float) for v in f])
    if np.ptp(vals) == 0:
        raise PreconditionError("constant function: the extrema sequences are constant")
    scale = max(1.0, float(np.max(np.abs(vals))))
    res = harmonic_residuals(d, f, first=0)
    if res and max(res) > tol * scale:
        raise PreconditionError(f"function is not harmonic (max residual {max(res):.3e})")
    M = [float(np.max(v)) for v in f]
    m = [float(np.min(v)) for v in f]
    inc = all(b > a for a, b in zip(M, M[1:]))
    dec = all(b < a for a, b in zip(m, m[1:]))
    steps = [b - a for a, b in zip(M, M[1:])]
    bounded = "inconclusive"
    if len(steps) >= 3 and steps[-2] > 0:
        r = steps[-1] / steps[-2]
        bounded = "bounded-consistent" if r < 0.8 else ("unbounded-consistent" if r >= 0.95 else "inconclusive")
    return Extrema(M, m, inc, dec, bounded)


# ----------------------------------------------------- energy lower bound

@dataclass
class EnergyBound:
    first_current: float
    beta: list
    sizes: list
    terms: list
    partial_sums: list
    measured: list | None
    series: str  # divergent | convergent | inconclusive, for sum 1/(beta_n |V_n|)

    @property
    def informative(self) -> bool:
        return self.first_current != 0.0

    @property
    def verdict(self) -> str:
        if self.series == "divergent":
            return "infinite energy"
        if self.series == "convergent":
            return "no conclusion (series converges)"
        return "inconclusive"


def _series_trend(recip: list) -> str:
    """Compare the sums of 1/(beta_n |V_n|) over the last two complete dyadic blocks."""
    N = len(recip) - 1
    k = int(math.log2(N + 1)) if N >= 1 else 0
    if k < 3:
        return "inconclusive"
    b1 = math.fsum(recip[2 ** (k - 1): 2**k])
    b2 = math.fsum(recip[2 ** (k - 2): 2 ** (k - 1)])
    r = b1 / b2
    return "divergent" if r >= 0.9 else ("convergent" if r < 0.8 else "inconclusive")


def level_energy(d: BratteliDiagram, f: LevelFunction, n: int) -> float:
    """Energy carried by the edges between levels n and n+1."""
    C = d.conductance_matrix(n)
    diff = np.asarray(f[n], float)[:, None] - np.asarray(f[n + 1], float)[None, :]
    return math.fsum((C * diff**2).ravel().tolist())


def energy_lower_bound(d: BratteliDiagram, f: LevelFunction, N: int) -> EnergyBound:
    """Partial sums S_N = sum_{n<=N} I_1^2 / (beta_n |V_n|), beta_n = max c(x) on V_n.

    When f is given on levels 0..N+1 the measured energy of the edges on
    those levels is returned alongside for comparison.
    """
    i1 = first_current(d, f)
    beta, sizes, terms, recip = [], [], [], []
    for n in range(N + 1):
        b = float(np.max(d.total_conductance(n)))
        s = d.level_size(n)
        beta.append(b)
        sizes.append(s)
        recip.append(1.0 / (b * s))
        terms.append(i1**2 / (b * s))
    partial = [math.fsum(terms[: k + 1]) for k in range(N + 1)]
    measured = None
    if len(f) >= N + 2:
        le = [level_energy(d, f, n) for n in range(N + 1)]
        measured = [math.fsum(le[: k + 1]) for k in range(N + 1)]
    return EnergyBound(i1, beta, sizes, terms, partial, measured, _series_trend(recip))


# --------------------------------------------------- graphs as diagrams

@dataclass
class Leveling:
    ok: bool
    violation: str | None          # intra-level-edge | no-forward-edge | degree
    witness: object
    levels: list                   # vertex lists, sorted within each level
    diagram: BratteliDiagram | None = None

    def to_level_function(self, fn: Callable) -> LevelFunction:
        return [np.array([float(fn(x)) for x in lv]) for lv in self.levels]


def graph_to_bratteli(net: Network, root, depth: int) -> Leveling:
    """Level a network by hop distance from ``root`` and check that it is a
    diagram up to ``depth``: no edge inside a level, every vertex of levels
    1..depth has a neighbor one level further out, and at most one vertex of
    degree below 2."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    dist = hop_distances(net, root, depth + 1)
    levels = [[] for _ in range(depth + 2)]
    for x, k in dist.items():
        levels[k].append(x)
    for lv in levels:
        lv.sort()
    low_degree = []
    for n in range(depth + 1):
        for x in levels[n]:
            nb = net.neighbors(x)
            if len(nb) < 2:
                low_degree.append(x)
            for y, _ in nb:
                if n >= 1 and dist.get(y) == n:
                    return Leveling(False, "intra-level-edge", (x, y), levels[: depth + 1])
            if n >= 1 and not any(dist.get(y) == n + 1 for y, _ in nb):
                return Leveling(False, "no-forward-edge", x, levels[: depth + 1])
    if len(low_degree) > 1:
        return Leveling(False, "degree", low_degree[1], levels[: depth + 1])
    inc, cond = [], []
    for n in range(depth):
        pos = {y: j for j, y in enumerate(levels[n + 1])}
        a = np.zeros((len(levels[n]), len(levels[n + 1])), dtype=np.int64)
        c = np.zeros(a.shape)
        for i, x in enumerate(levels[n]):
            for y, w in net.neighbors(x):
                j = pos.get(y)
                if j is not None:
                    a[i, j] = 1
                    c[i, j] = w
        inc.append(a)
        cond.append(c)
    diag = BratteliDiagram(inc, cond, name=f"{net.name}_levels")
    return Leveling(True, None, None, levels[: depth + 1], diag)
