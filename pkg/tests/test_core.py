import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectral_flow.core import (DriftField, GridCDF, GridFunction, InteractionKernel,
                                OrderedSpectrum, UniformGrid, cdf_dominates, dominates,
                                empirical_cdf, quantile, read_grid_cdf, read_spectrum,
                                write_grid_cdf, write_spectrum)
from spectral_flow.errors import (CollisionError, ContractError, CoverageError, DomainError,
                                  GridMismatchError)


# --- spectra ------------------------------------------------------------------

def test_spectrum_sorted_and_strict():
    s = OrderedSpectrum([0.0, 1.0, 1.0])
    assert s.count == 3
    with pytest.raises(CollisionError):
        OrderedSpectrum([0.0, 1.0, 1.0], strict=True)
    with pytest.raises(DomainError):
        OrderedSpectrum([1.0, 0.0])
    assert list(OrderedSpectrum.from_unsorted([3, 1, 2]).positions) == [1, 2, 3]


def test_spectrum_is_immutable():
    s = OrderedSpectrum([0.0, 1.0])
    with pytest.raises(ValueError):
        s.positions[0] = 5.0


def test_cluster_is_strict_and_narrow():
    s = OrderedSpectrum.cluster(0.0, 50, eta=1e-6)
    x = s.positions
    assert np.all(np.diff(x) > 0) and x[-1] - x[0] <= 1e-6


# --- dominance ----------------------------------------------------------------

def test_dominance_equal_counts():
    a = OrderedSpectrum([0.0, 1.0, 2.0])
    b = OrderedSpectrum([0.5, 1.0, 3.0])
    assert dominates(a, b) and not dominates(b, a)
    assert dominates(a, a)


def test_dominance_counting_form_matches_index_form():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = np.sort(rng.normal(size=6))
        b = np.sort(rng.normal(size=6))
        by_index = bool(np.all(a <= b))
        assert dominates(OrderedSpectrum(a), OrderedSpectrum(b)) == by_index
        # counting form evaluated directly on a dense set of test points
        xs = np.linspace(-4, 4, 4001)
        ca = np.searchsorted(a, xs, side="right")
        cb = np.searchsorted(b, xs, side="right")
        if by_index:
            assert np.all(ca >= cb)


def test_dominance_unequal_counts():
    # raw counts: the larger spectrum sits below
    a = OrderedSpectrum([0.0, 1.0, 5.0])
    b = OrderedSpectrum([0.5, 1.5])
    assert dominates(a, b)
    assert not dominates(b, a)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_weyl_dominance_for_psd_perturbation(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A = A + A.T
    P = rng.normal(size=(n, n))
    B = A + P @ P.T
    la = OrderedSpectrum(np.linalg.eigvalsh(A))
    lb = OrderedSpectrum(np.linalg.eigvalsh(B))
    assert dominates(la, lb)


# --- grids and CDFs -----------------------------------------------------------

def test_grid_nodes_and_errors():
    g = UniformGrid(-1.0, 1.0, 0.5)
    assert g.size == 5 and np.allclose(g.x, [-1, -0.5, 0, 0.5, 1])
    with pytest.raises(DomainError):
        UniformGrid(0, 1, 0.3)
    with pytest.raises(DomainError):
        g.index_of(2.0)


def test_gridcdf_invariants():
    g = UniformGrid(0, 1, 0.25)
    GridCDF.on_grid(g, [0, 0.2, 0.5, 0.9, 1.0])
    with pytest.raises(DomainError):
        GridCDF.on_grid(g, [0, 0.5, 0.4, 0.9, 1.0])
    with pytest.raises(CoverageError):
        GridCDF.on_grid(g, [0.1, 0.2, 0.5, 0.9, 1.0])
    F = GridCDF.on_grid(g, [0, 0.1, 0.2, 0.3, 0.5], mass=0.5)
    assert F.mass == 0.5
    GridCDF.on_grid(g, np.full(5, 0.3), pinned=False)


def test_grid_mismatch():
    a = GridFunction(0.0, 0.1, np.zeros(11))
    b = GridFunction(0.0, 0.2, np.zeros(11))
    with pytest.raises(GridMismatchError):
        a.require_same_grid(b)


def test_empirical_cdf_counts_and_coverage():
    g = UniformGrid(-2, 2, 0.5)
    F = empirical_cdf(OrderedSpectrum([-1.0, 0.0, 0.0, 1.0]), g)
    assert np.allclose(F.values, [0, 0, 0.25, 0.25, 0.75, 0.75, 1, 1, 1])
    with pytest.raises(CoverageError):
        empirical_cdf(OrderedSpectrum([-1.9, 0.0]), g)


def test_cdf_dominates():
    g = UniformGrid(0, 1, 0.5)
    F = GridCDF.on_grid(g, [0, 0.5, 1])
    G = GridCDF.on_grid(g, [0, 0.3, 1])
    assert cdf_dominates(F, G) and not cdf_dominates(G, F)
    assert cdf_dominates(G, F, tol=0.3)


def test_quantile_of_uniform():
    g = UniformGrid(0, 1, 0.01)
    F = GridCDF.from_function(g, lambda x: x)
    p = np.array([0.1, 0.25, 0.5, 0.99])
    assert np.allclose(quantile(F, p), p, atol=1e-12)
    with pytest.raises(DomainError):
        quantile(F, 0.0)


def test_quantile_of_step_is_jump_location():
    g = UniformGrid(-1, 1, 0.5)
    F = GridCDF.on_grid(g, [0, 0, 1, 1, 1])
    assert quantile(F, 0.5) == pytest.approx(-0.25)


def test_csv_roundtrip(tmp_path):
    g = UniformGrid(-1, 1, 0.1)
    F = GridCDF.from_function(g, lambda x: np.clip((x + 1) / 2, 0, 1))
    write_grid_cdf(tmp_path / "f.csv", F)
    G = read_grid_cdf(tmp_path / "f.csv")
    assert np.array_equal(F.values, G.values) and F.same_grid(G)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "x,F"
    s = OrderedSpectrum([0.1, 0.2, 1 / 3])
    write_spectrum(tmp_path / "s.csv", s)
    assert np.array_equal(read_spectrum(tmp_path / "s.csv").positions, s.positions)


# --- kernels and drift --------------------------------------------------------

def test_dyson_and_wishart_kernels():
    d = InteractionKernel.dyson()
    assert np.allclose(d.g_at(np.array([0.3, -1.0]), np.array([0.5, 2.0])), 1.0)
    w = InteractionKernel.wishart(2.0)
    assert w.g_at(0.5, -0.4) == pytest.approx(1.0)
    assert w.g_at(0.5, -0.6) == 0.0
    with pytest.raises(DomainError):
        InteractionKernel.wishart(0.5)


def test_g_from_f_relation():
    sig = lambda x: np.sqrt(1 + np.asarray(x) ** 2)
    k = InteractionKernel.general(f=lambda x, y: sig(x) * sig(y), box=(-1, 1))
    x, z = 0.3, 0.4
    exact = sig(x) * (1 + x * (x + z)) / sig(x + z)
    assert k.g_at(x, z) == pytest.approx(exact, rel=1e-8)
    # d_z g(x, 0) = x - x = 0 for this f
    assert k.even_at_origin


def test_general_kernel_rejects_negative_g():
    with pytest.raises(ContractError):
        InteractionKernel.general(g=lambda x, z: np.asarray(z) - 0.5 + 0 * np.asarray(x))


def test_cell_integral_matches_quadrature():
    from scipy.integrate import quad
    g = lambda x, z: (1 + np.asarray(x) ** 2) * (1 + (np.asarray(x) + np.asarray(z)) ** 2)
    k = InteractionKernel.general(g=g, box=(-1, 1))
    for za, zb, rel in [(0.1, 0.12, 1e-10), (-0.06, -0.05, 1e-10), (1.0, 4.0, 1e-5)]:
        ref = quad(lambda z: g(0.2, z) / z**2, za, zb)[0]
        assert k.cell_integral(0.2, za, zb) == pytest.approx(ref, rel=rel)


def test_drift_field_one_sided_lipschitz():
    assert DriftField.linear(1.0).c0 == 1.0
    DriftField(lambda x: x**3, 0.0)
    with pytest.raises(ContractError):
        DriftField(lambda x: -2 * x, 1.0)
