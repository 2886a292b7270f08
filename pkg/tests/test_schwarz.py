import numpy as np
import pytest

from impedance_maps.errors import LayoutInvalid
from impedance_maps.schwarz import (
    SchwarzSolver,
    build_decomposition,
    build_decomposition_explicit,
    convergence_history,
    error_norm,
    gaussian_source,
    product_impedance_trace,
)
from impedance_maps.solver import Discretization

K = 16.0
DISC = Discretization(12)


@pytest.fixture(scope="module")
def two():
    return SchwarzSolver(build_decomposition(2, 1 / 3, width=1.0), K, DISC, "outgoing")


@pytest.fixture(scope="module")
def three_impedance():
    return SchwarzSolver(build_decomposition(3, 0.3, width=1.0), K, DISC, "impedance")


# ---------------------------------------------------------------------- layout
def test_uniform_layout():
    d = build_decomposition(2, 1 / 3, width=1.0)
    assert d.bounds[0] == (0.0, 1.0)
    assert d.bounds[1] == pytest.approx((2 / 3, 5 / 3))
    assert d.overlaps() == pytest.approx([1 / 3])
    t = build_decomposition(3, 0.2, total_length=3.0)
    assert t.length == pytest.approx(3.0)
    assert t.overlaps() == pytest.approx([0.2, 0.2])


@pytest.mark.parametrize(
    "call",
    [
        lambda: build_decomposition(1, 0.2, width=1.0),
        lambda: build_decomposition(2, 1.0, width=1.0),
        lambda: build_decomposition(2, -0.1, width=1.0),
        lambda: build_decomposition(2, 0.1, width=1.0, total_length=2.0),
        lambda: build_decomposition_explicit([(0, 1), (0.5, 1.5), (0.9, 2.0)]),
        lambda: build_decomposition_explicit([(0, 1), (1.2, 2.0)]),
    ],
)
def test_invalid_layouts(call):
    with pytest.raises(LayoutInvalid):
        call()


def test_overlap_must_span_three_cells():
    with pytest.raises(LayoutInvalid):
        SchwarzSolver(build_decomposition(2, 0.05, width=1.0), K, DISC)


# ---------------------------------------------------------------------- partition of unity
def test_partition_of_unity(two):
    assert np.allclose(sum(two.chi), 1.0, atol=1e-15)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(two.grid.shape) + 1j * rng.standard_normal(two.grid.shape)
    pieces = []
    for ell, p in enumerate(two.problems):
        cols = slice(two.offsets[ell], two.offsets[ell] + p.grid.shape[1])
        pieces.append(p.field(u[:, cols].ravel()))
    assert np.abs(two.glue(pieces) - u).max() < 1e-14


def test_partition_flat_at_interfaces(two):
    # three nodes around each interface line see a constant χ
    for ell in range(2):
        for side in (-1, 1):
            x = two._line(ell, side)
            if x is None:
                continue
            c = two.grid.column(x)
            for chi in two.chi:
                assert np.ptp(chi[c - 1:c + 2]) <= 1e-15


# ---------------------------------------------------------------------- norms and traces
def test_error_norm_basics(two):
    z = two.zero_data()
    assert error_norm(z) == 0.0
    d = two.random_data(np.random.default_rng(1))
    assert error_norm(d.scale(-2.5j)) == pytest.approx(2.5 * error_norm(d), rel=1e-12)


def test_error_norm_of_plane_wave_1d():
    """Outgoing edge sees nothing, incoming edge sees ``(2k)² |edge|``."""
    s = SchwarzSolver(build_decomposition(2, 0.3, width=1.0), K, Discretization(12, matched_impedance=True),
                      "impedance", one_d=True)
    hx = s.grid.hx
    kx = np.arccos(1 - 0.5 * (K * hx) ** 2) / hx  # stencil-exact wavenumber
    u = np.exp(1j * kx * s.grid.x)[None, :]
    d = s.data_from_global(u)
    assert np.abs(d.traces[0][1]).max() < 1e-12
    assert error_norm(d) ** 2 == pytest.approx((2 * s.k_imp) ** 2 * 1.0, rel=1e-12)


def test_product_rule_with_non_flat_cutoff():
    """Linear χ and v make the centred product rule exact."""
    hx, k = 0.1, 3.0
    x = np.arange(7) * hx
    chi = np.tile(0.2 + 0.5 * x, (4, 1))
    v = np.tile((1.0 + 2.0j) * x - 0.3, (4, 1))
    col = 3
    got = product_impedance_trace(chi, v, col, hx, -1, k)
    w = chi * v
    direct = -((w[:, col + 1] - w[:, col - 1]) / (2 * hx)) / 1j - k * w[:, col]
    assert np.allclose(got, direct, atol=1e-13)


# ---------------------------------------------------------------------- operator
def test_fixed_point(two):
    f = gaussian_source(two)
    exact = two.exact_solution(f)
    nxt = two.iterate(two.initial_state(exact), f)
    assert np.abs(nxt.glued - exact).max() <= 1e-10 * np.abs(exact).max()


def test_iterate_matches_apply_T(two):
    rng = np.random.default_rng(4)
    u0 = rng.standard_normal(two.grid.shape) + 1j * rng.standard_normal(two.grid.shape)
    d0 = two.data_from_global(u0)
    via_iterate = two.data_from_global(two.iterate(two.initial_state(u0)).glued)
    via_T = two.apply_T(d0)
    assert np.abs(via_iterate.flat() - via_T.flat()).max() <= 1e-10 * np.abs(via_T.flat()).max()


def test_apply_T_zero_and_tridiagonal(three_impedance):
    s = three_impedance
    assert not np.any(s.apply_T(s.zero_data()).flat())
    d = s.random_data(np.random.default_rng(2))
    only_mid = d.with_flat(np.concatenate([
        np.zeros_like(d.traces[0][1]), d.traces[1][0], d.traces[1][1], np.zeros_like(d.traces[2][0])]))
    out = s.apply_T(only_mid)
    assert not np.any(out.traces[1][0]) and not np.any(out.traces[1][1])
    assert np.abs(out.traces[0][1]).max() > 0 and np.abs(out.traces[2][0]).max() > 0


def test_t_matrix_matches_apply_T(three_impedance):
    s = three_impedance
    T = s.t_matrix()
    d = s.random_data(np.random.default_rng(5))
    assert np.allclose(T @ d.flat(), s.apply_T(d).flat(), atol=1e-11 * np.abs(T).max())


def test_power_norm_estimate(two):
    T = two.t_matrix()
    assert two.power_norm_estimate(0, T=T)[0] == 1.0
    exact = two.exact_power_norm(2, T=T)
    est, v = two.power_norm_estimate(2, trials=3, seed=1, T=T)
    assert 0.95 * exact <= est <= exact * (1 + 1e-9)
    assert len(v.flat()) == T.shape[0]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_one_dimensional_nilpotency(n):
    s = SchwarzSolver(build_decomposition(n, 0.25, width=1.0), K, Discretization(12, matched_impedance=True),
                      "impedance", one_d=True)
    T = s.t_matrix()
    # with transparent ends a travelling error leaves the chain after N-1 hops
    assert np.abs(np.linalg.matrix_power(T, n - 1)).max() <= 1e-12
    assert np.abs(np.linalg.matrix_power(T, n)).max() <= 1e-12
    if n > 2:
        assert np.abs(np.linalg.matrix_power(T, n - 2)).max() > 0.5


def test_convergence_history_schema(two):
    rows = convergence_history(two, 2, gaussian_source(two))
    assert [r["n"] for r in rows] == [0, 1, 2]
    assert set(rows[0]) == {"n", "energy", "l2", "per_subdomain"}
    assert len(rows[0]["per_subdomain"]) == 2
    assert rows[2]["energy"] < rows[0]["energy"]


def test_parallel_jobs_agree(two):
    par = SchwarzSolver(two.decomp, K, DISC, "outgoing", jobs=2)
    d = two.random_data(np.random.default_rng(9))
    assert np.allclose(par.apply_T(d).flat(), two.apply_T(d).flat(), atol=1e-13)
