"""Transfer operators between levels of a graded network.

A system is a positive vector q0 on level 0 and row-stochastic matrices R_n
from level n to level n+1. Propagation gives weights q^(n) on every level,
the dual matrices S_n run backwards, and the pair induces conductances
c(v, u) = q_v r_vu / 2 on the edges. Levels are finite; a system with R_0..R_{N-1}
has levels 0..N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bratteli import BratteliDiagram

ROW_TOL = 1e-12


class TransferError(ValueError):
    pass


def _check_R(R, n, rows: int | None) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2:
        raise TransferError(f"R_{n} must be a matrix")
    if rows is not None and R.shape[0] != rows:
        raise TransferError(f"R_{n} has {R.shape[0]} rows, level {n} has {rows} vertices")
    if np.any(R < 0) or not np.all(np.isfinite(R)):
        raise TransferError(f"R_{n} must be finite and nonnegative")
    dev = np.max(np.abs(R.sum(axis=1) - 1.0))
    if dev > ROW_TOL:
        raise TransferError(f"rows of R_{n} must sum to 1 (deviation {dev:.3e})")
    zc = np.flatnonzero(R.sum(axis=0) == 0)
    if len(zc):
        raise TransferError(f"R_{n} has a zero column at {int(zc[0])}; the weight there would vanish")
    return R


def propagate_q(q0: Sequence[float], Rs: Sequence) -> list[np.ndarray]:
    """q^(n+1)_v = sum_w q^(n)_w r^(n)_wv."""
    q = np.asarray(q0, dtype=float)
    if q.ndim != 1 or len(q) == 0 or np.any(q <= 0):
        raise TransferError("q0 must be a nonempty strictly positive vector")
    out = [q]
    for n, R in enumerate(Rs):
        R = _check_R(R, n, len(out[-1]))
        out.append(out[-1] @ R)
    return out


class TransferSystem:
    def __init__(self, q0: Sequence[float], Rs: Sequence, name: str = "transfer"):
        self.name = name
        self.R = [_check_R(R, n, None) for n, R in enumerate(Rs)]
        if not self.R:
            raise TransferError("need at least one transfer matrix")
        self.q = propagate_q(q0, self.R)
        self.S = [(self.R[n] * self.q[n][:, None]).T / self.q[n + 1][:, None] for n in range(len(self.R))]

    @property
    def depth(self) -> int:
        """Index of the last level."""
        return len(self.R)

    def level_size(self, n: int) -> int:
        return len(self.q[n])

    def _level(self, n: int):
        if not 0 <= n <= self.depth:
            raise TransferError(f"level {n} out of range 0..{self.depth}")


def dual_matrices(sys: TransferSystem) -> list[np.ndarray]:
    """S_n with s_vw = q^(n)_w r^(n)_wv / q^(n+1)_v; shape |V_{n+1}| x |V_n|."""
    return list(sys.S)


def apply_transfer(sys: TransferSystem, direction: str, n: int, f) -> np.ndarray:
    """T_R maps functions on level n+1 to level n; T_S maps level n to level n+1."""
    if not 0 <= n < sys.depth:
        raise TransferError(f"no transfer matrix at level {n}")
    f = np.asarray(f, dtype=float)
    if direction == "R":
        if len(f) != sys.level_size(n + 1):
            raise TransferError(f"T_R at level {n} acts on level {n + 1} ({sys.level_size(n + 1)} values)")
        return sys.R[n] @ f
    if direction == "S":
        if len(f) != sys.level_size(n):
            raise TransferError(f"T_S at level {n} acts on level {n} ({sys.level_size(n)} values)")
        return sys.S[n] @ f
    raise ValueError("direction must be 'R' or 'S'")


def inner(sys: TransferSystem, n: int, a, b) -> float:
    sys._level(n)
    return math.fsum((sys.q[n] * np.asarray(a, float) * np.asarray(b, float)).tolist())


def norm(sys: TransferSystem, n: int, f) -> float:
    return math.sqrt(max(inner(sys, n, f, f), 0.0))


def conductance_from_transfer(sys: TransferSystem) -> list[np.ndarray]:
    """C_n = diag(q^(n)) R_n / 2, the edge conductances between levels n and n+1."""
    return [0.5 * sys.q[n][:, None] * sys.R[n] for n in range(sys.depth)]


def conductance_symmetry_gap(sys: TransferSystem) -> float:
    """Largest difference between q_v r_vu / 2 and the same edge seen from the
    far end, q_u s_uv / 2."""
    gaps = []
    for n in range(sys.depth):
        fwd = 0.5 * sys.q[n][:, None] * sys.R[n]
        bwd = 0.5 * sys.q[n + 1][:, None] * sys.S[n]
        gaps.append(float(np.max(np.abs(fwd - bwd.T))))
    return max(gaps)


def total_conductance(sys: TransferSystem, n: int) -> np.ndarray:
    """c_n(v): sum of the induced conductances at v. Equals q^(n) on interior
    levels; level 0 and the last level carry one half only."""
    sys._level(n)
    C = conductance_from_transfer(sys)
    out = np.zeros(sys.level_size(n))
    if n < sys.depth:
        out += C[n].sum(axis=1)
    if n > 0:
        out += C[n - 1].sum(axis=0)
    return out


def induced_diagram(sys: TransferSystem) -> BratteliDiagram:
    C = conductance_from_transfer(sys)
    inc = [(c > 0).astype(np.int64) for c in C]
    return BratteliDiagram(inc, C, name=f"{sys.name}_induced")


@dataclass(frozen=True)
class KernelRow:
    backward: np.ndarray | None   # m(v, u) for u on level n-1
    forward: np.ndarray | None    # m(v, u) for u on level n+1


def markov_kernel(sys: TransferSystem, n: int, renormalize_root: bool = True) -> KernelRow:
    """Rows of the kernel m for v on level n: forward R_n / 2, backward S_{n-1} / 2.

    Level 0 has no backward half, so its rows sum to 1/2; with
    ``renormalize_root`` they are doubled to R_0, which is the transition
    kernel of the induced network there.
    """
    sys._level(n)
    fwd = 0.5 * sys.R[n] if n < sys.depth else None
    bwd = 0.5 * sys.S[n - 1] if n > 0 else None
    if n == 0 and renormalize_root and fwd is not None:
        fwd = 2 * fwd
    return KernelRow(bwd, fwd)


def q_times_M(sys: TransferSystem, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(q^(n) M restricted to level n-1, restricted to level n+1), for 1 <= n < depth."""
    if not 1 <= n < sys.depth:
        raise TransferError("q M is checked on levels 1..depth-1")
    k = markov_kernel(sys, n)
    return sys.q[n] @ k.backward, sys.q[n] @ k.forward


@dataclass(frozen=True)
class TransferResidual:
    level: int
    vector: np.ndarray
    norm: float


def harmonic_check_transfer(sys: TransferSystem, f: Sequence) -> list[TransferResidual]:
    """2 f_n - R_n f_{n+1} - S_{n-1} f_{n-1} on levels 1..min(len(f), depth+1)-2,
    with its H_n norm. On the induced network Delta f(v) = q_v r(v) / 2."""
    last = min(len(f) - 1, sys.depth)
    out = []
    for n in range(1, last):
        r = 2 * np.asarray(f[n], float) - sys.R[n] @ np.asarray(f[n + 1], float) \
            - sys.S[n - 1] @ np.asarray(f[n - 1], float)
        out.append(TransferResidual(n, r, norm(sys, n, r)))
    return out


@dataclass
class EnergySeries:
    terms: list            # ||f_n||^2 - 2 <f_n, T_R f_{n+1}> + ||f_{n+1}||^2
    partial_sums: list     # sums of the terms above
    verdict: str

    @property
    def energy_partial_sums(self) -> list:
        """Each term is twice the energy of the edges between levels n and n+1."""
        return [0.5 * s for s in self.partial_sums]


def finite_energy_series(sys: TransferSystem, f: Sequence, N: int | None = None) -> EnergySeries:
    N = min(sys.depth, len(f) - 1) if N is None else N
    if N > sys.depth or N > len(f) - 1:
        raise TransferError(f"need f and R up to level {N}")
    terms = []
    for n in range(N):
        a, b = np.asarray(f[n], float), np.asarray(f[n + 1], float)
        terms.append(inner(sys, n, a, a) - 2 * inner(sys, n, a, sys.R[n] @ b) + inner(sys, n + 1, b, b))
    partial = [math.fsum(terms[: k + 1]) for k in range(len(terms))]
    verdict = "inconclusive"
    if len(terms) >= 3 and terms[-2] > 0:
        r = terms[-1] / terms[-2]
        verdict = "finite-energy-consistent" if r < 0.8 else ("infinite-energy-consistent" if r >= 0.95
                                                               else "inconclusive")
    elif len(terms) >= 3 and terms[-1] == 0 and terms[-2] == 0:
        verdict = "finite-energy-consistent"
    return EnergySeries(terms, partial, verdict)


def pascal_transfer(depth: int = 20) -> TransferSystem:
    """Pascal levels with every R_n row (1/2, 1/2) and q0 = (1,): q^(n) is binomial."""
    Rs = []
    for n in range(depth):
        R = np.zeros((n + 1, n + 2))
        idx = np.arange(n + 1)
        R[idx, idx] = 0.5
        R[idx, idx + 1] = 0.5
        Rs.append(R)
    return TransferSystem([1.0], Rs, name="pascal_binomial")


def transfer_from_spec(spec: dict) -> TransferSystem:
    """``{"q0": [...], "R": [[...], ...]}`` or ``{"fixture": "pascal_binomial", "depth": N}``."""
    if spec.get("fixture") == "pascal_binomial":
        return pascal_transfer(int(spec.get("depth", 20)))
    if "fixture" in spec:
        raise TransferError(f"unknown transfer fixture {spec['fixture']!r}")
    return TransferSystem(spec["q0"], spec["R"], name=spec.get("name", "transfer"))
