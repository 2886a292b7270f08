import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impedance_maps.errors import InconsistentGeometry, SegmentOffGrid
from impedance_maps.experiments import manufactured_error, pml_reflection
from impedance_maps.reference import discrete_plane_wave, field_on_grid, impedance_data
from impedance_maps.solver import (
    CANONICAL_KINDS,
    Box,
    CellGeometry,
    Discretization,
    HelmholtzProblem,
    build_system,
    cell_problem,
    impedance,
    pml,
    snap_spacing,
    trace,
)


@pytest.fixture(scope="module")
def canonical():
    return HelmholtzProblem(Box(0.0, 1.0, 0.0, 1.0), 12.0, Discretization(20), CANONICAL_KINDS)


def test_matrix_is_complex_symmetric():
    p = cell_problem(CellGeometry(1.0, 1.0, 0.5, 10.0), Discretization(12), "model2")
    A = p.matrix
    assert abs(A - A.T).max() == 0.0


@pytest.mark.parametrize("theta", [0.0, 0.4, 1.0, -0.7])
def test_stencil_exact_plane_wave_is_reproduced(canonical, theta):
    g = canonical.grid
    u_ex = discrete_plane_wave(canonical.k, theta, g.hx, g.hy)
    u = canonical.solve(impedance_data(canonical, u_ex, discrete=True))
    exact = field_on_grid(canonical, u_ex)
    assert np.abs(u.values - exact).max() <= 1e-10


def test_solve_is_linear(canonical):
    rng = np.random.default_rng(1)
    n = canonical.grid.shape[0]
    a, b = (rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(2))
    ua = canonical.solve({"left": a}).values
    ub = canonical.solve({"left": b}).values
    uab = canonical.solve({"left": 2 * a - 3j * b}).values
    assert np.allclose(uab, 2 * ua - 3j * ub, atol=1e-11)


def test_second_order_convergence_two_wave():
    box = Box(0.0, 2.0, 0.0, 1.0)
    e10 = manufactured_error(20.0, 10, math.pi / 8, box)
    e20 = manufactured_error(20.0, 20, math.pi / 8, box)
    assert 3.5 <= e10 / e20 <= 4.5


def test_pml_reflection_small():
    assert pml_reflection(20.0, 20, math.radians(30), Box(0.0, 2.0, 0.0, 1.0)) <= 1e-4


def test_plane_wave_traces():
    """Outgoing trace of ``e^{ikx}`` vanishes; the incoming one equals ``2u`` (up to O((kh)²))."""
    k = 20.0
    p = cell_problem(CellGeometry(1.0, 0.5, 0.5, k), Discretization(20), "model2")
    u = p.field(np.exp(1j * k * np.broadcast_to(p.grid.x, p.grid.shape)).ravel())
    col = np.exp(1j * k * 0.5)
    minus = trace(u, 0.5, -1).samples / col
    plus = trace(u, 0.5, 1).samples / col
    assert np.abs(minus).max() < 0.02
    assert np.abs(plus - 2).max() < 0.02


def test_trace_requires_grid_line():
    p = cell_problem(CellGeometry(1.0, 0.5, 0.5, 10.0), Discretization(12), "model1")
    u = p.solve({"left": np.ones(p.grid.shape[0])})
    with pytest.raises(SegmentOffGrid):
        trace(u, 0.5 + 0.3 * p.grid.hx, -1)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0, 10.0), (1.0, -1.0, 1.0, 10.0), (1.0, 1.0, -0.1, 10.0), (1.0, 1.0, 1.0, 0.0)])
def test_invalid_geometry(args):
    with pytest.raises(InconsistentGeometry):
        CellGeometry(*args)


def test_invalid_discretization():
    with pytest.raises(InconsistentGeometry):
        Discretization(points_per_wavelength=3)


def test_model2_needs_interior_interface():
    with pytest.raises(InconsistentGeometry):
        cell_problem(CellGeometry(1.0, 1.0, 0.0, 10.0), Discretization(), "model2")


def test_build_system_needs_every_edge():
    geom = CellGeometry(1.0, 1.0, 1.0, 10.0)
    with pytest.raises(InconsistentGeometry):
        build_system(geom, Discretization(), [impedance("left"), pml("right")])
    sys_ = build_system(geom, Discretization(12), [impedance("left"), pml("right"), pml("top"), pml("bottom")])
    assert sys_.matrix.shape[0] == sys_.rhs.shape[0]


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(1, 40), min_size=1, max_size=3),
    st.floats(0.01, 0.2),
)
def test_snap_spacing_divides_every_length(units, nominal):
    base = 0.1
    lengths = [u * base for u in units]
    h = snap_spacing(lengths, nominal)
    assert abs(h - nominal) <= 0.5 * nominal + 1e-15
    for L in lengths:
        assert abs(L / h - round(L / h)) < 1e-8
