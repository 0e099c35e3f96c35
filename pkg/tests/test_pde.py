"""Monotone scheme: smoothing, structure, transport and self-similar spreading."""
import numpy as np
import pytest
from scipy import special

from spectral_flow.core import DriftField, GridCDF, InteractionKernel, UniformGrid, quantile
from spectral_flow.errors import DomainError
from spectral_flow.experiments import order_setups, random_ordered_pair, sigma_kernel
from spectral_flow.laws import AnalyticLaw, ks_distance, law_cdf
from spectral_flow.operators import PvQuadratureParams
from spectral_flow.pde import (MonotoneScheme, SchemeParams, dirac_selection_test, smoothed_neg,
                               smoothed_pos, solve, step_initial_cdf, step_monotone)


def smooth_cdf(grid, m=0.0, s=0.3):
    v = 0.5 * (1 + special.erf((grid.x - m) / (s * np.sqrt(2))))
    return GridCDF.on_grid(grid, np.clip((v - v[0]) / (v[-1] - v[0]), 0, 1))


# --- smoothed positive part ---------------------------------------------------

def test_smoothed_pos_examples():
    eps = 1e-3
    assert 0 <= smoothed_pos(0.0, eps) <= eps / 2
    assert smoothed_pos(10.0, eps) == pytest.approx(10.0, abs=1e-6)
    assert smoothed_pos(-10.0, eps) == pytest.approx(0.0, abs=1e-6) and smoothed_pos(-1e8, eps) >= 0
    v = np.linspace(-5, 5, 2001)
    d = np.diff(smoothed_pos(v, eps)) / np.diff(v)
    assert d.min() >= 0 and d.max() <= 1 + 1e-12
    assert np.allclose(smoothed_pos(v, eps) - smoothed_neg(v, eps), v, atol=1e-12)
    with pytest.raises(DomainError):
        smoothed_pos(1.0, 0.0)


# --- single steps -------------------------------------------------------------

def test_null_kernel_leaves_profile_unchanged():
    g = UniformGrid(-1, 1, 0.01)
    F = smooth_cdf(g, s=0.05)
    out = step_monotone(F, SchemeParams(h=0.01, dt=0.01, kernel=InteractionKernel.null()))
    # psi_+(0) = eps/2 on both sides: only a second-order artificial diffusion remains
    assert np.max(np.abs(out.values - F.values)) < 1e-4


def test_semicircle_step_widens_edge_quantiles():
    g = UniformGrid(-3, 3, 0.01)
    F = law_cdf(AnalyticLaw.semicircle(t=1.0, radius_coeff=2.0), g)
    G = step_monotone(F, SchemeParams(h=0.01, dt=0.01))
    assert quantile(G, 0.01) < quantile(F, 0.01)
    assert quantile(G, 0.99) > quantile(F, 0.99)


@pytest.mark.parametrize("k", range(3))
def test_one_step_order_preservation(k):
    label, grid, p = order_setups()[k]
    sch = MonotoneScheme(grid, p)
    rng = np.random.default_rng(k)
    for _ in range(50):
        F, G = random_ordered_pair(rng, grid)
        dt = min(p.dt, p.cfl_safety * sch.cfl_dt(F.values), p.cfl_safety * sch.cfl_dt(G.values))
        a, b = sch.raw_step(np.array(F.values), dt), sch.raw_step(np.array(G.values), dt)
        assert np.max(a - b) <= 1e-12, label


def test_scheme_rejects_mismatched_grid():
    with pytest.raises(DomainError):
        MonotoneScheme(UniformGrid(-1, 1, 0.02), SchemeParams(h=0.01, dt=0.01))
    with pytest.raises(DomainError):
        MonotoneScheme(UniformGrid(-1, 1, 0.01),
                       SchemeParams(h=0.01, dt=0.01, kernel=InteractionKernel.wishart(2.0)))


# --- solves -------------------------------------------------------------------

def transport_error(h, dt, t=0.5):
    g = UniformGrid(-2, 2, h)
    F0 = smooth_cdf(g, m=-0.5, s=0.2)
    p = SchemeParams(h=h, dt=dt, kernel=InteractionKernel.null(), drift=DriftField.constant(1.0))
    snaps, _ = solve(F0, t, p)
    return ks_distance(snaps[-1], smooth_cdf(g, m=-0.5 + t, s=0.2))


def test_pure_transport_first_order():
    e1, e2 = transport_error(0.02, 0.01), transport_error(0.01, 0.005)
    assert e1 <= 0.02 + 0.01 and e2 <= 0.01 + 0.005
    assert e2 < 0.7 * e1


def test_constant_profile_is_fixed():
    g = UniformGrid(-1, 1, 0.02)
    F = GridCDF.on_grid(g, np.full(g.size, 0.3), pinned=False)
    snaps, _ = solve(F, 0.1, SchemeParams(h=0.02, dt=0.01))
    assert np.array_equal(snaps[-1].values, F.values)


def test_dyson_solve_monotone_mass_and_lipschitz():
    g = UniformGrid(-4, 4, 0.02)
    F0 = law_cdf(AnalyticLaw.semicircle(t=1.0, radius_coeff=2.0), g)
    rec = [1.25, 1.5]
    snaps, rep = solve(F0, 1.5, SchemeParams(h=0.02, dt=0.05), record_times=rec, t0=1.0)
    assert len(snaps) == 2 and rep.times[-1] == pytest.approx(1.5)
    L0 = np.max(np.diff(F0.values)) / 0.02
    for S in snaps:
        assert np.all(np.diff(S.values) >= -1e-14)
        assert S.values[-1] - S.values[0] == pytest.approx(1.0, abs=1e-10)
    assert max(rep.max_dxF) <= L0 * 1.01
    assert rep.total_repairs <= 0.001 * rep.steps
    # spreads toward the t=1.5 member of the family
    target = law_cdf(AnalyticLaw.semicircle(t=1.5, radius_coeff=2.0), g)
    assert ks_distance(snaps[-1], target) < 0.02


def test_solve_is_deterministic():
    g = UniformGrid(-2, 2, 0.02)
    F0 = smooth_cdf(g)
    a, _ = solve(F0, 0.2, SchemeParams(h=0.02, dt=0.01))
    b, _ = solve(F0, 0.2, SchemeParams(h=0.02, dt=0.01))
    assert np.array_equal(a[-1].values, b[-1].values)


def test_wishart_solve_keeps_mass_off_origin():
    h = 0.02
    g = UniformGrid(0, 8, h)
    law = AnalyticLaw.marchenko_pastur(sigma=1.0, c=2.0, edge_coeff=2.0)
    F0 = law_cdf(law, g)
    snaps, rep = solve(F0, 0.5, SchemeParams(h=h, dt=0.01, kernel=InteractionKernel.wishart(2.0)))
    F = snaps[-1]
    assert F.values[2] <= 0.05
    assert np.all(np.diff(F.values) >= -1e-14)
    assert rep.total_repairs <= 0.001 * rep.steps


def test_sigma_kernel_solve_preserves_order():
    g = UniformGrid(-1, 1, 0.02)
    p = SchemeParams(h=0.02, dt=0.01, kernel=sigma_kernel(), quad=PvQuadratureParams(tail_cut=2.0))
    F, G = smooth_cdf(g, m=0.1, s=0.2), smooth_cdf(g, m=-0.1, s=0.2)
    assert np.all(G.values >= F.values)
    sa, _ = solve(F, 0.1, p)
    sb, _ = solve(G, 0.1, p)
    # separate solves use different step sequences; ordering holds up to O(dt h)
    assert np.max(sa[-1].values - sb[-1].values) <= 1e-6


def test_dirac_small_time_stays_near_step():
    t = 0.01
    F = dirac_selection_test(SchemeParams(h=1 / 200, dt=0.005), t)
    for p in (0.05, 0.95):
        assert abs(quantile(F, p)) <= 3 * np.sqrt(t)


def test_step_initial_cdf():
    g = UniformGrid(-1, 1, 0.5)
    assert list(step_initial_cdf(g).values) == [0, 0, 1, 1, 1]
