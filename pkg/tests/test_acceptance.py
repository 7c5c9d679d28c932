"""The twelve acceptance criteria, each at its stated tolerance.

Every test prints one line ``criterion N: PASS|FAIL - detail``; the lines are
repeated in the terminal summary. Criteria that cannot hold as stated are
implemented as written and marked strict xfail, so they are reported FAIL and
the suite stays green only while they keep failing.
"""

import math
import time

import networkx as nx
import numpy as np
import pytest

from conftest import p3, record
from harmonet.bratteli import (DiagramNetwork, currents, energy_lower_bound, first_current, graph_to_bratteli,
                               harmonic_extend, level_extrema, level_function, pascal_diagram,
                               stationary_diagram, subspace_distance)
from harmonet.model_library import (BinaryTree, Lattice, check_closed_form, line_fixture, pascal_harmonic,
                                    stationary_harmonic, tree_harmonic, tree_harmonic_energy_limit,
                                    tree_monopole, unit_line_dipole)
from harmonet.network_core import ExplicitNetwork, build_window, materialize_ball
from harmonet.operators import VertexFunction, cycle_pairing, dissipation_norm, drop, energy_form
from harmonet.potential import dipole, gauss_green_split, monopole
from harmonet.random_walk import (estimate_U, green_identities_report, green_truncated, monopole_probabilistic,
                                  transience_test)
from harmonet.transfer import (apply_transfer, finite_energy_series, induced_diagram, inner, norm,
                               pascal_transfer, q_times_M, total_conductance)

TREE = BinaryTree(1.0)
ROOT = (0, 1)


def _tree_level_energies(lam, depth):
    net, f = BinaryTree(lam), tree_harmonic(lam)
    return [math.fsum(c * (f((n, i)) - f(y)) ** 2 for i in range(1, 2**n + 1)
                      for y, c in net.neighbors((n, i)) if y[0] == n + 1) for n in range(depth)]


# ---------------------------------------------------------------------- 1

def test_c01_pascal_harmonicity_exact():
    t0 = time.perf_counter()
    net = DiagramNetwork(pascal_diagram(10))
    worst, sym = 0, True
    for n in range(1, 9):
        for i in range(n + 1):
            lap = sum(int(c) * (pascal_harmonic((n, i)) - pascal_harmonic(y)) for y, c in net.neighbors((n, i)))
            worst = max(worst, abs(lap))
            sym &= pascal_harmonic((n, i)) == -pascal_harmonic((n, n - i))
    dt = time.perf_counter() - t0
    ok = worst == 0 and sym and dt < 1
    record(1, ok, f"max |Delta h| = {worst} on levels 1..8, symmetry {sym}, {dt:.3f}s")
    assert ok


# ---------------------------------------------------------------------- 2

@pytest.mark.xfail(strict=True, reason="h is harmonic at the root, so its first current is 0 and the "
                                       "lower bound is identically zero; it cannot diverge")
def test_c02_pascal_infinite_energy():
    t0 = time.perf_counter()
    N = 50
    d = pascal_diagram(N + 2)
    h = level_function(d, pascal_harmonic, N + 1)
    eb = energy_lower_bound(d, h, N)
    measured = eb.measured
    grows = all(b > a for a, b in zip(measured, measured[1:])) and measured[-1] > 100 * measured[0]
    below = all(b <= m for b, m in zip(eb.partial_sums, measured))
    i1 = eb.first_current
    ref = [i1**2 / 4 * math.fsum(1 / k for k in range(1, n + 2)) for n in range(N + 1)]
    diverges = eb.partial_sums[-1] > 0 and eb.partial_sums[-1] >= 1.5 * eb.partial_sums[N // 4]
    rate = all(abs(b - r) <= 0.05 * r for b, r in zip(eb.partial_sums[1:], ref[1:]) if r > 0) and ref[-1] > 0
    dt = time.perf_counter() - t0
    ok = grows and below and diverges and rate and dt < 5
    record(2, ok, f"energy to N=50 {measured[-1]:.6g} (growing {grows}); first current {i1}; bound "
                  f"{eb.partial_sums[-1]} below {below}, diverging {diverges}; {dt:.2f}s")
    assert ok


# ---------------------------------------------------------------------- 3

@pytest.mark.xfail(strict=True, reason="for lambda = 1 the partial energies grow by 2 per level, "
                                       "24 at depth 12, short of ten times the lambda = 2 limit (160)")
def test_c03_binary_tree_closed_forms():
    lam = 2.0
    res = check_closed_form(BinaryTree(lam), tree_harmonic(lam), radius=6, root=ROOT)
    f = tree_harmonic(lam)
    vals = max(abs(f((n, 1)) - math.fsum(lam**k for k in range(n)) / lam ** (n - 2)) for n in range(1, 7))
    e2 = np.cumsum(_tree_level_energies(2.0, 16))
    limit = tree_harmonic_energy_limit(2.0)
    converges = abs(e2[-1] - limit) < 1e-2 and (e2[-1] - e2[-2]) < 0.5 * (e2[-2] - e2[-3])
    e1 = float(np.sum(_tree_level_energies(1.0, 12)))
    big = e1 > 10 * limit
    ok = res <= 1e-12 and vals <= 1e-12 and converges and big
    record(3, ok, f"residual {res:.1e}, extreme values {vals:.1e}, lambda=2 energy {e2[-1]:.6f} -> {limit}; "
                  f"lambda=1 energy at depth 12 {e1:g} vs {10 * limit:g}")
    assert ok


# ---------------------------------------------------------------------- 4

@pytest.mark.xfail(strict=True, reason="the Green sum at N = 60 is 2 - 2.6e-3, outside 1e-3; and "
                                       "c(x)F(x,y) = c(y)F(y,x) is false on the tree (4/3 vs 3/2)")
def test_c04_green_identities_tree():
    t0 = time.perf_counter()
    U = estimate_U(TREE, ROOT, samples=100_000, horizon=10_000, seed=2024).direct
    u_ok = abs(U.point - 0.5) <= 3 * U.stderr
    # exact radial quotient of the tree; equivalent to a radius-61 window
    G = float(green_truncated(TREE, ROOT, ROOT, 60)[-1])
    g_ok = abs(G - 2) <= 1e-3
    rep = green_identities_report(TREE, ROOT, (1, 1), samples=100_000, horizon=10_000, seed=2025)
    fg = rep.get("G(x,y) = F(x,y) G(y,y)")
    rev = rep.get("c(x) F(x,y) = c(y) F(y,x)")
    dt = time.perf_counter() - t0
    ok = u_ok and g_ok and fg.ok and rev.ok and dt < 60
    record(4, ok, f"U = {U.point:.4f} +- {U.stderr:.4f} ({u_ok}); G_60 = {G:.6f} (|G-2| = {abs(G - 2):.2e}); "
                  f"G=FG z = {fg.z:.2f}; cF reversibility z = {rev.z:.1f}; {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------------- 5

def test_c05_probabilistic_monopole():
    t0 = time.perf_counter()
    pts = list(materialize_ball(TREE, ROOT, 4).vertices)
    w = monopole_probabilistic(TREE, ROOT, pts, samples=20_000, horizon=10_000, seed=7,
                               classification="transient")
    det = monopole(TREE, ROOT, radii=[4, 8, 16, 24])
    worst_closed = max(abs(w(a) - tree_monopole(a)) - max(3 * w.stderr[a], 1e-3) for a in pts)
    worst_det = max(abs(w(a) - det(a)) - max(3 * w.stderr[a], 1e-3) for a in pts)
    dt = time.perf_counter() - t0
    ok = worst_closed <= 0 and worst_det <= 0 and dt < 60
    record(5, ok, f"{len(pts)} vertices within max(3 sigma, 1e-3) of 2^-dist (slack {-worst_closed:.1e}) and "
                  f"of the grounded monopole (slack {-worst_det:.1e}); {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------------- 6

def test_c06_dipole_reproducing():
    rng = np.random.default_rng(6)
    worst = 0.0
    zline = line_fixture("z_unit").net
    cases = [(p3(), 0, 2), (p3(), 1, 0), (zline, 3, 0), (zline, -2, 5), (zline, 0, 1)]
    for net, x, y in cases:
        v = dipole(net, x, y, radii=[8, 16], boundary="free") if not net.finite else dipole(net, x, y)
        w = v.function.window
        for _ in range(100):
            u = VertexFunction(w, rng.standard_normal(len(w)))
            nu = math.sqrt(energy_form(net, u, u))
            worst = max(worst, abs(energy_form(net, v.function, u) - (u(x) - u(y))) / nu)
    exact = True
    for n in (1, 4, 7, -3):
        v = dipole(zline, n, 0, radii=[16], boundary="free", backend="exact")
        ref = unit_line_dipole(n)
        w = v.function.window
        exact &= all(v(i) == ref(i) for i in w.interior_vertices)
    ok = worst <= 1e-9 and exact
    record(6, ok, f"max |<v,u> - (u(x)-u(y))| / ||u|| = {worst:.1e} over 500 test functions; "
                  f"unit line dipoles exact on the window interior: {exact}")
    assert ok


# ---------------------------------------------------------------------- 7

def test_c07_energy_space_identities():
    nets = {
        "triangle-bearing": ExplicitNetwork([(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0), (2, 3, 1.0), (3, 4, 4.0),
                                             (4, 2, 1.0), (4, 5, 2.0)]),
        "line_n0_linear": line_fixture("n0_linear").net,
        "line_z_unit": line_fixture("z_unit").net,
        "binary_tree": TREE,
        "pascal": DiagramNetwork(pascal_diagram(10)),
        "stationary": DiagramNetwork(stationary_diagram([[2, 1], [1, 2]], depth=10, lam=2.0)),
        "lattice_z2": Lattice(2),
        "lattice_z3": Lattice(3),
    }
    integer = {"triangle-bearing", "line_n0_linear", "line_z_unit", "binary_tree", "pascal", "lattice_z2",
               "lattice_z3"}
    rng = np.random.default_rng(7)
    delta_ok, iso, cyc = True, 0.0, 0.0
    for name, net in nets.items():
        w = build_window(net, net.vertices()) if net.finite else materialize_ball(net, net.origin, 3)
        inner_pts = [x for x in w.vertices if w.interior[w.pos(x)]][:12]
        if name in integer:
            for x in inner_pts:
                dx = VertexFunction.delta(w, x)
                delta_ok &= energy_form(net, dx, dx) == net.total_conductance(x)
                for y, c in net.neighbors(x):
                    if y in w:
                        delta_ok &= energy_form(net, dx, VertexFunction.delta(w, y)) == -c
        G = nx.Graph([(w.vertices[i], w.vertices[j]) for i, j in zip(w.edge_i, w.edge_j)])
        basis = nx.cycle_basis(G)
        for _ in range(20):
            u = VertexFunction(w, rng.standard_normal(len(w)))
            flow = drop(net, u)
            e = energy_form(net, u, u)
            iso = max(iso, abs(dissipation_norm(flow) ** 2 - e) / max(1.0, e))
            for c in basis:
                cyc = max(cyc, abs(cycle_pairing(flow, c + [c[0]])))
    ok = delta_ok and iso <= 1e-12 and cyc <= 1e-12
    record(7, ok, f"delta energies exact: {delta_ok}; drop isometry gap {iso:.1e}; "
                  f"cycle pairing {cyc:.1e} over {len(nets)} networks")
    assert ok


# ---------------------------------------------------------------------- 8

@pytest.mark.xfail(strict=True, reason="the stationary closed form is harmonic only for constant f1; "
                                       "for f1 = (1, -1) the level equation forces other values")
def test_c08_bratteli_recursion():
    worst_dist = 0.0
    pascal = pascal_diagram(14)
    h = level_function(pascal, pascal_harmonic, 12)
    dims = []
    for n in range(1, 11):
        a = harmonic_extend(pascal, n, h[n - 1], h[n], "conductance")
        b = harmonic_extend(pascal, n, h[n - 1], h[n], "arrow")
        worst_dist = max(worst_dist, subspace_distance(a, b))
        dims.append(a.dim)
    lam = 2.0
    stat = stationary_diagram([[2, 1], [1, 2]], depth=14, lam=lam)
    closed_gap = {}
    for f1 in ((1.0, 1.0), (1.0, -1.0)):
        cf = stationary_harmonic(f1, lam)
        gap = 0.0
        for n in range(1, 11):
            a = harmonic_extend(stat, n, cf(n - 1), cf(n), "conductance")
            b = harmonic_extend(stat, n, cf(n - 1), cf(n), "arrow")
            worst_dist = max(worst_dist, subspace_distance(a, b))
            gap = max(gap, float(np.max(np.abs(a.particular - cf(n + 1)))))
        closed_gap[f1] = gap
    ok = worst_dist < 1e-10 and dims == [1] * 10 and max(closed_gap.values()) <= 1e-12
    record(8, ok, f"assembly distance {worst_dist:.1e}; Pascal dims {set(dims)}; stationary closed form gap "
                  f"{closed_gap[(1.0, 1.0)]:.1e} for f1=(1,1), {closed_gap[(1.0, -1.0)]:.3g} for f1=(1,-1)")
    assert ok


# ---------------------------------------------------------------------- 9

def test_c09_currents_and_extrema():
    cases = []
    pascal = pascal_diagram(14)
    cases.append(("pascal h", pascal, level_function(pascal, pascal_harmonic, 12), True))
    for lam in (1.0, 2.0):
        lev = graph_to_bratteli(BinaryTree(lam), ROOT, 12)
        cases.append((f"tree f_{lam:g}", lev.diagram, lev.to_level_function(tree_harmonic(lam)), True))
    stat = stationary_diagram([[2, 1], [1, 2]], depth=14, lam=2.0)
    cf = stationary_harmonic([1.0, 1.0], 2.0)
    cases.append(("stationary", stat, [cf(n) for n in range(13)], False))
    half = graph_to_bratteli(line_fixture("z_summable", 2.0, side="right").net, 0, 12)
    u = line_fixture("z_summable", 2.0, side="right").closed_forms["harmonic"]
    cases.append(("summable half-line", half.diagram, half.to_level_function(lambda x: u(x)), False))
    worst, mono = 0.0, True
    for name, d, f, rooted in cases:
        i1 = first_current(d, f)
        for n in range(1, 11):
            worst = max(worst, abs(currents(d, f, n).total - i1))
        if rooted:
            # extrema need harmonicity at the root as well
            ex = level_extrema(d, f[:12])
            mono &= ex.max_increasing and ex.min_decreasing
    ok = worst <= 1e-9 and mono
    record(9, ok, f"max |I_n - I_1| = {worst:.1e} over {len(cases)} harmonic functions; "
                  f"M_n increasing and m_n decreasing where harmonic at the root: {mono}")
    assert ok


# --------------------------------------------------------------------- 10

def test_c10_transfer_module():
    pt = pascal_transfer(20)
    rng = np.random.default_rng(10)
    adj, contr = 0.0, 0.0
    for n in range(pt.depth):
        for _ in range(100):
            f = rng.standard_normal(n + 2)
            g = rng.standard_normal(n + 1)
            adj = max(adj, abs(inner(pt, n, apply_transfer(pt, "R", n, f), g)
                               - inner(pt, n + 1, f, apply_transfer(pt, "S", n, g))))
            contr = max(contr, norm(pt, n, apply_transfer(pt, "R", n, f)) - norm(pt, n + 1, f),
                        norm(pt, n + 1, apply_transfer(pt, "S", n, g)) - norm(pt, n, g))
    cq = max(float(np.max(np.abs(total_conductance(pt, n) - pt.q[n]))) for n in range(1, pt.depth))
    qm = 0.0
    for n in range(1, pt.depth):
        back, fwd = q_times_M(pt, n)
        qm = max(qm, float(np.max(np.abs(back - 0.5 * pt.q[n - 1]))), float(np.max(np.abs(fwd - 0.5 * pt.q[n + 1]))))
    f = [np.arange(n + 1, dtype=float) * (-1) ** n for n in range(21)]
    es = finite_energy_series(pt, f)
    net = DiagramNetwork(induced_diagram(pt))
    egap = 0.0
    for N in range(1, 21):
        w = build_window(net, [(k, i) for k in range(N + 1) for i in range(k + 1)])
        u = VertexFunction.from_callable(w, lambda x: f[x[0]][x[1]])
        egap = max(egap, abs(es.energy_partial_sums[N - 1] - energy_form(net, u, u)))
    ok = adj <= 1e-12 and contr <= 1e-12 and cq == 0.0 and qm <= 1e-12 and egap <= 1e-9
    record(10, ok, f"adjointness {adj:.1e}, contraction excess {max(contr, 0):.1e}, c_n - q {cq:.1e}, "
                   f"qM identity {qm:.1e}, energy series gap {egap:.1e}")
    assert ok


# --------------------------------------------------------------------- 11

def test_c11_transience_classifier():
    nets = [("binary tree", TREE, {"transient"}), ("Z", line_fixture("z_unit").net, {"recurrent"}),
            ("Z^3", Lattice(3), {"transient"}), ("Z^2", Lattice(2), {"recurrent", "inconclusive"})]
    parts, ok = [], True
    for name, net, allowed in nets:
        t0 = time.perf_counter()
        rep = transience_test(net, seed=11)
        dt = time.perf_counter() - t0
        ok &= rep.verdict in allowed and dt < 120
        parts.append(f"{name} {rep.verdict} ({dt:.1f}s)")
    again = transience_test(TREE, seed=11).to_json() == transience_test(TREE, seed=11).to_json()
    ok &= again
    record(11, ok, "; ".join(parts) + f"; reproducible {again}")
    assert ok


# --------------------------------------------------------------------- 12

def test_c12_gauss_green():
    rng = np.random.default_rng(12)
    nets = [p3(), ExplicitNetwork([(0, 1, 1.0), (1, 2, 2.0), (0, 2, 0.5)]),
            ExplicitNetwork([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (0, 2, 2.5), (3, 4, 0.5)])]
    for k in range(5):
        n = 6 + k
        g = nx.connected_watts_strogatz_graph(n, 2, 0.5, seed=k)
        nets.append(ExplicitNetwork([(a, b, float(rng.integers(1, 5)) / 2) for a, b in g.edges()]))
    bd, gap = 0.0, 0.0
    for net in nets:
        verts = net.vertices()
        u = dict(zip(verts, rng.standard_normal(len(verts))))
        v = dict(zip(verts, rng.standard_normal(len(verts))))
        (rec,) = gauss_green_split(net, u.__getitem__, v.__getitem__, [verts])
        w = build_window(net, verts)
        e = energy_form(net, VertexFunction.from_callable(w, u.__getitem__),
                        VertexFunction.from_callable(w, v.__getitem__))
        bd = max(bd, abs(rec.boundary_sum))
        gap = max(gap, abs(rec.interior_sum - e))
    fx = line_fixture("z_summable", 2.0, side="right")
    h = fx.closed_forms["harmonic"]
    recs = gauss_green_split(fx.net, h, h, [range(k + 1) for k in (10, 20, 30, 40)])
    term = recs[-1].boundary_sum
    ok = bd <= 1e-10 and gap <= 1e-10 and abs(term - 1) <= 1e-6
    record(12, ok, f"finite networks: boundary sum {bd:.1e}, interior sum gap {gap:.1e}; "
                   f"summable line boundary term at radius 40 = {term!r}")
    assert ok
