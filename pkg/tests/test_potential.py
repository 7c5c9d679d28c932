import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harmonet.bratteli import DiagramNetwork, pascal_diagram
from harmonet.model_library import BinaryTree, line_fixture, pascal_harmonic, tree_monopole, unit_line_dipole
from harmonet.network_core import (ExplicitNetwork, NumericalFailure, PreconditionError, build_window,
                                   materialize_ball)
from harmonet.operators import VertexFunction, energy_form, laplacian_apply
from harmonet.potential import (DirichletProblem, dipole, gauss_green_split, maximum_principle_check, monopole,
                                multipole, normal_derivative, resistance_distance, royden_split, solve_dirichlet)

from strategies import connected_networks

ZLINE = line_fixture("z_unit").net
TREE = BinaryTree(1.0)
ROOT = (0, 1)


# ----------------------------------------------------------- Dirichlet

def test_dirichlet_p3(P3):
    u = solve_dirichlet(DirichletProblem(P3, [1], None, {0: 0.0, 2: 1.0}))
    assert u(1) == 0.5


def test_dirichlet_constant_boundary():
    u = solve_dirichlet(DirichletProblem(TREE, [ROOT, (1, 1), (1, 2)], None, lambda x: 4.25))
    assert np.all(u.values == 4.25)


def test_dirichlet_line_interpolation():
    u = solve_dirichlet(DirichletProblem(ZLINE, [1, 2, 3, 4], None, {0: 0.0, 5: 5.0}))
    for k in range(6):
        assert u(k) == pytest.approx(k, abs=1e-13)


def test_dirichlet_without_boundary_is_singular(P3):
    with pytest.raises(NumericalFailure):
        solve_dirichlet(DirichletProblem(P3, [0, 1, 2]))


@pytest.mark.parametrize("net", [TREE, BinaryTree(2.0), ZLINE, DiagramNetwork(pascal_diagram(10))],
                         ids=lambda n: n.name)
def test_dirichlet_backends_agree(net):
    w = materialize_ball(net, net.origin, 4)
    rng = np.random.default_rng(1)
    bd = {x: float(rng.standard_normal()) for x in w.boundary_vertices}
    g = {x: float(rng.standard_normal()) for x in w.interior_vertices}
    p = DirichletProblem(net, w.interior_vertices, g, bd)
    a, b = solve_dirichlet(p, "direct"), solve_dirichlet(p, "cg")
    assert np.max(np.abs(a.values - b.values)) <= 1e-9


def test_maximum_principle_examples(P3):
    u = solve_dirichlet(DirichletProblem(P3, [1], None, {0: 0.0, 2: 1.0}))
    rep = maximum_principle_check(P3, u, [1])
    assert rep.holds and (rep.max_on_boundary, rep.min_on_boundary) == (1.0, 0.0)
    c = solve_dirichlet(DirichletProblem(P3, [1], None, {0: 2.0, 2: 2.0}))
    assert maximum_principle_check(P3, c, [1]).note == "constant; principle vacuous"


def test_maximum_principle_pascal_levels():
    net = DiagramNetwork(pascal_diagram(12))
    for n in range(2, 8):
        V1 = [(k, i) for k in range(n) for i in range(k + 1)]
        w = build_window(net, V1 + [(n, i) for i in range(n + 1)])
        h = VertexFunction.from_callable(w, pascal_harmonic)
        rep = maximum_principle_check(net, h, V1)
        assert rep.holds
        assert rep.max_value == rep.max_on_boundary == n * (n + 1) // 2


def test_maximum_principle_needs_harmonic(P3):
    w = build_window(P3, [0, 1, 2])
    with pytest.raises(PreconditionError):
        maximum_principle_check(P3, VertexFunction(w, [0, 5, 0]), [1])


# ------------------------------------------------------------- dipoles

def test_dipole_p3(P3):
    v = dipole(P3, 0, 1)
    assert v(0) - v(1) == 1 and v(1) == v(2)
    rng = np.random.default_rng(2)
    for _ in range(5):
        u = VertexFunction(v.function.window, rng.standard_normal(3))
        assert energy_form(P3, v.function, u) == pytest.approx(u(0) - u(1), abs=1e-12)


def test_dipole_same_point_is_zero(P3):
    v = dipole(P3, 1, 1)
    assert v.energy == 0 and np.all(v.function.values == 0)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_unit_line_dipole_free_truncation_exact(n):
    v = dipole(ZLINE, n, 0, radii=[8, 16], boundary="free")
    ref = unit_line_dipole(n)
    w = v.function.window
    assert all(abs(v(i) - ref(i)) <= 1e-12 for i in w.vertices)


@pytest.mark.parametrize("n", [1, 3, 6, -4])
def test_unit_line_dipole_exact_backend(n):
    v = dipole(ZLINE, n, 0, radii=[8, 16], boundary="free", backend="exact")
    ref = unit_line_dipole(n)
    assert all(v(i) == ref(i) for i in v.function.window.vertices)


def test_exact_backend_agrees_with_direct():
    net = ExplicitNetwork([(0, 1, 0.5), (1, 2, 2.0), (0, 2, 1.0), (2, 3, 0.25), (3, 4, 1.0), (4, 0, 3.0)])
    p = DirichletProblem(net, [1, 2, 3], {1: 1.0, 3: -0.5}, {0: 0.25, 4: 2.0})
    a, b = solve_dirichlet(p, "exact"), solve_dirichlet(p, "direct")
    assert np.max(np.abs(a.values - b.values)) <= 1e-13
    const = solve_dirichlet(DirichletProblem(net, [1, 2, 3], None, {0: 1.0, 4: 1.0}), "exact")
    assert np.all(const.values == 1.0)


def test_unit_line_dipole_grounded_differs():
    # grounded truncation tilts the profile; only the free one matches exactly
    v = dipole(ZLINE, 3, 0, radii=[8], boundary="grounded")
    assert v(-1) != 0.0


def test_dipole_reproducing_on_tree():
    x, y = (2, 1), (1, 2)
    v = dipole(TREE, x, y, radii=[4, 8, 12, 16])
    w = v.function.window
    rng = np.random.default_rng(3)
    for _ in range(20):
        vals = np.where(w.interior, rng.standard_normal(len(w)), 0.0)
        u = VertexFunction(w, vals)
        norm_u = math.sqrt(energy_form(TREE, u, u))
        assert abs(energy_form(TREE, v.function, u) - (u(x) - u(y))) <= 1e-9 * norm_u


def test_dipole_energy_increments_nonnegative():
    v = dipole(TREE, (2, 1), (1, 2), radii=[3, 5, 7, 9], stop_early=False)
    assert all(d >= -1e-12 for d in v.increments)


# ----------------------------------------------------------- monopoles

def test_tree_monopole_matches_powers_of_two():
    w = monopole(TREE, ROOT, radii=[4, 8, 16])
    assert w.verdict == "transient-consistent"
    for x in materialize_ball(TREE, ROOT, 4).vertices:
        assert w(x) == pytest.approx(tree_monopole(x), abs=1e-4)
    assert w.residual <= 1e-12


def test_line_monopole_recurrent():
    w = monopole(ZLINE, 0, radii=[4, 8, 16, 32, 64])
    assert w.verdict == "recurrent-consistent"
    assert not w.converged


def test_finite_network_has_no_monopole(P3):
    with pytest.raises(PreconditionError):
        monopole(P3, 0)


def test_geometric_line_monopole_profile():
    fx = line_fixture("z_geometric", 2.0)
    mono = fx.closed_forms["monopole"]
    assert fx.params["scale"] == fx.params["scale_closed_form"]
    w = monopole(fx.net, 0, radii=[8, 16, 32])
    for n in range(-4, 5):
        assert w(n) == pytest.approx(mono(n), abs=1e-8)
        assert w(n) / w(0) == pytest.approx(0.5 ** abs(n), rel=1e-7)


def test_monopole_reproducing_property():
    w = monopole(TREE, ROOT, radii=[10])
    win = w.function.window
    rng = np.random.default_rng(4)
    for _ in range(10):
        vals = np.where(win.interior, rng.standard_normal(len(win)), 0.0)
        u = VertexFunction(win, vals)
        assert energy_form(TREE, w.function, u) == pytest.approx(u(ROOT), abs=1e-10)


def test_dipole_is_difference_of_monopoles():
    x, y = (1, 1), (2, 4)
    R = [10]
    v = dipole(TREE, x, y, radii=R, root=ROOT)
    wx = monopole(TREE, x, radii=R, root=ROOT)
    wy = monopole(TREE, y, radii=R, root=ROOT)
    assert np.max(np.abs(v.function.values - (wx.function.values - wy.function.values))) <= 1e-12


def test_delta_from_dipoles():
    o = ROOT
    x = (2, 3)
    R = [8]
    vx = dipole(TREE, x, o, radii=R, root=o).function
    comb = TREE.total_conductance(x) * vx.values
    for y, c in TREE.neighbors(x):
        vy = dipole(TREE, y, o, radii=R, root=o).function if y != o else None
        if vy is not None:
            comb = comb - c * vy.values
    delta = VertexFunction.delta(vx.window, x).values
    assert np.max(np.abs(comb - delta)) <= 1e-12


# ----------------------------------------------------------- multipoles

def test_multipole_single_point_is_dipole():
    a = multipole(TREE, ROOT, [((2, 2), 1.0)], radii=[6])
    b = dipole(TREE, ROOT, (2, 2), radii=[6])
    assert np.max(np.abs(a.function.values - b.function.values)) <= 1e-14


def test_multipole_p3(P3):
    v = multipole(P3, 1, [(0, 0.5), (2, 0.5)])
    assert v.function.values.tolist() == [0.0, 0.5, 0.0]
    lap = laplacian_apply(P3, v.function, [0, 1, 2])
    assert lap == {0: -0.5, 1: 1.0, 2: -0.5}


def test_multipole_line_residual():
    v = multipole(ZLINE, 0, [(-2, 0.3), (3, 0.7)], radii=[16], boundary="grounded")
    assert v.residual <= 1e-10


@pytest.mark.parametrize("pts", [[(1, 0.5), (2, 0.6)], [(1, -0.5), (2, 1.5)], [(0, 1.0)]])
def test_multipole_rejects_bad_weights(P3, pts):
    with pytest.raises(PreconditionError):
        multipole(P3, 0, pts)


# ----------------------------------------------------------- resistance

def test_resistance_examples(P3, TRI):
    assert resistance_distance(P3, 0, 2) == pytest.approx(2, abs=1e-14)
    assert resistance_distance(P3, 1, 1) == 0
    for a, b in [(0, 1), (1, 2), (0, 2)]:
        assert resistance_distance(TRI, a, b) == pytest.approx(2 / 3, abs=1e-14)


@given(connected_networks(max_vertices=7), st.data())
def test_resistance_matches_networkx_and_is_metric(net, data):
    verts = net.vertices()
    G = nx.Graph()
    for a, b, c in net.edges():
        G.add_edge(a, b, weight=c)
    x, y, z = (data.draw(st.sampled_from(verts)) for _ in range(3))
    rxy = resistance_distance(net, x, y)
    if x != y:
        assert rxy == pytest.approx(nx.resistance_distance(G, x, y, weight="weight", invert_weight=False),
                                    rel=1e-9)
    assert rxy == pytest.approx(resistance_distance(net, y, x), rel=1e-12)
    assert rxy <= resistance_distance(net, x, z) + resistance_distance(net, z, y) + 1e-12


# -------------------------------------------------------- boundary sums

def test_normal_derivative_examples(P3):
    v = {0: 0.0, 1: 1.0, 2: 3.0}.__getitem__
    assert normal_derivative(P3, {0, 1}, v, 2) == 2
    assert normal_derivative(P3, {0, 1}, lambda x: 1.0, 2) == 0
    with pytest.raises(PreconditionError):
        normal_derivative(P3, {0, 1}, v, 1)


def test_gauss_green_finite(TRI):
    rng = np.random.default_rng(6)
    net = ExplicitNetwork([(0, 1, 1.0), (1, 2, 2.0), (0, 2, 0.5), (2, 3, 1.5), (3, 4, 1.0)])
    verts = net.vertices()
    u = dict(zip(verts, rng.standard_normal(5)))
    v = dict(zip(verts, rng.standard_normal(5)))
    (rec,) = gauss_green_split(net, u.__getitem__, v.__getitem__, [verts])
    w = build_window(net, verts)
    U, V = VertexFunction.from_callable(w, u.__getitem__), VertexFunction.from_callable(w, v.__getitem__)
    assert rec.boundary_sum == 0
    assert rec.interior_sum == pytest.approx(energy_form(net, U, V), abs=1e-10)


def test_gauss_green_zero_function():
    fx = line_fixture("z_summable", 2.0, side="right")
    recs = gauss_green_split(fx.net, lambda x: 0.0, fx.closed_forms["harmonic"],
                             [range(k + 1) for k in (3, 6)])
    assert all(r.interior_sum == r.boundary_sum == r.inner_product == 0 for r in recs)


def test_gauss_green_summable_line_boundary_term():
    fx = line_fixture("z_summable", 2.0, side="right")
    u = fx.closed_forms["harmonic"]
    recs = gauss_green_split(fx.net, u, u, [range(k + 1) for k in (5, 10, 20, 40)])
    for k, r in zip((5, 10, 20, 40), recs):
        # u is harmonic, so the interior sum is zero and the boundary sum is the energy
        assert r.interior_sum == 0
        assert r.boundary_sum == pytest.approx(1 - 2.0 ** (-(k + 1)), abs=1e-15)
    assert abs(recs[-1].boundary_sum - 1) <= 1e-6


# ----------------------------------------------------------------- Royden

def test_royden_reconstruction_and_orthogonality():
    net = ZLINE
    w = materialize_ball(net, 0, 2)
    rng = np.random.default_rng(7)
    u = VertexFunction(w, rng.standard_normal(len(w)))
    fin, harm = royden_split(net, w, u)
    assert np.max(np.abs(fin.values + harm.values - u.values)) <= 1e-14
    assert abs(energy_form(net, fin, harm)) <= 1e-10
    assert np.all(fin.values[~w.interior] == 0)


def test_royden_harmonic_input_has_no_fin_part():
    net = DiagramNetwork(pascal_diagram(12))
    w = materialize_ball(net, (0, 0), 6)
    h = VertexFunction.from_callable(w, pascal_harmonic)
    fin, harm = royden_split(net, w, h)
    assert np.max(np.abs(fin.values)) <= 1e-9


def test_royden_delta():
    w = materialize_ball(TREE, ROOT, 3)
    u = VertexFunction.delta(w, (1, 1))
    fin, harm = royden_split(TREE, w, u)
    assert np.max(np.abs(fin.values + harm.values - u.values)) <= 1e-15
    assert abs(energy_form(TREE, fin, harm)) <= 1e-12
