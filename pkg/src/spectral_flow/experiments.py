"""Experiment drivers shared by the command line and the test suite."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import GridCDF, InteractionKernel, OrderedSpectrum, UniformGrid, empirical_cdf
from .laws import (AnalyticLaw, calibrate_marchenko_pastur, calibrate_semicircle, ks_distance,
                   law_cdf, lp_distance, wasserstein_p)
from .matrices import (WishartConfig, eigenvalues, simulate_symmetric_bm,
                       simulate_wishart_path)
from .operators import PvQuadratureParams
from .particles import (SdeConfig, coupled_dominance_run, deterministic_flow_pair, dyson_noise,
                        replica_seed, simulate)
from .pde import MonotoneScheme, SchemeParams, max_slope, solve, step_initial_cdf

#: beta used for law-level particle runs (noise 0.5/sqrt(N))
LAW_BETA = 8.0
#: beta used for pathwise coupled runs (noise 1/sqrt(N))
COUPLED_BETA = 2.0


def sigma_sqrt(x):
    return np.sqrt(1.0 + np.asarray(x, float) ** 2)


def sigma_kernel():
    """f = sigma(x) sigma(y), sigma = sqrt(1 + x^2), on the box [-1, 1]."""
    return InteractionKernel.general(f=lambda x, y: sigma_sqrt(x) * sigma_sqrt(y),
                                     box=(-1.0, 1.0), label="sigma-sqrt")


def average_cdf(spectra, grid: UniformGrid) -> GridCDF:
    """Mean of the empirical CDFs of several spectra."""
    vals = np.mean([empirical_cdf(s, grid).values for s in spectra], axis=0)
    return GridCDF.on_grid(grid, np.maximum.accumulate(vals))


def symmetric_grid(t, h):
    L = max(2.0, 2.5 * np.sqrt(t)) + 1.0
    L = np.ceil(L / h) * h
    return UniformGrid(-L, L, h)


def particle_ensemble(cfg: SdeConfig, replicas, t=None):
    t = cfg.t_end if t is None else t
    return [simulate(cfg.with_seed(replica_seed(cfg.seed, r)), [t]).final for r in range(replicas)]


def pairwise_ks(cdfs: dict) -> dict:
    keys = list(cdfs)
    return {f"{a}~{b}": ks_distance(cdfs[a], cdfs[b])
            for i, a in enumerate(keys) for b in keys[i + 1:]}


# ---------------------------------------------------------------------------
# law-level consistency
# ---------------------------------------------------------------------------

@dataclass
class ConsistencyResult:
    law: AnalyticLaw
    cdfs: dict
    ks: dict = field(default_factory=dict)

    @property
    def worst(self):
        return max(self.ks.values())


def semicircle_consistency(N=500, n=200, replicas=20, h=1 / 200, t=1.0, seed=0,
                           beta=LAW_BETA, pde_dt=0.05):
    """Particles, matrices and the PDE against one calibrated semicircle."""
    grid = symmetric_grid(t, h)
    cfg = SdeConfig(InteractionKernel.dyson(), N, 1e-3, t, noise_scale=dyson_noise(N, beta),
                    seed=seed)
    parts = particle_ensemble(cfg, replicas)
    mats = [eigenvalues(simulate_symmetric_bm(n, t, t, seed=replica_seed(seed + 1, r),
                                              record_times=[t]).final)
            for r in range(replicas)]
    snaps, _ = solve(step_initial_cdf(grid), t, SchemeParams(h=h, dt=pde_dt))
    law = calibrate_semicircle(parts, t)
    cdfs = {"particles": average_cdf(parts, grid), "matrix": average_cdf(mats, grid),
            "pde": snaps[-1], "law": law_cdf(law, grid)}
    return ConsistencyResult(law, cdfs, pairwise_ks(cdfs))


def mp_consistency(n=100, m=200, N=100, replicas=20, t=1.0, seed=0, h=0.01, dt=1e-3):
    """Wishart matrices and particles against one calibrated MP law."""
    c = m / n
    mats = [eigenvalues(simulate_wishart_path(WishartConfig(n, m, t, replica_seed(seed + 1, r)),
                                              t, record_times=[t]).final)
            for r in range(replicas)]
    cfg = SdeConfig(InteractionKernel.wishart(c), N, dt, t, seed=seed)
    parts = particle_ensemble(cfg, replicas)
    law = calibrate_marchenko_pastur(mats, c, sigma=np.sqrt(t))
    hi = np.ceil((law.support()[1] * 1.5 + 1.0) / h) * h
    grid = UniformGrid(0.0, hi, h)
    cdfs = {"matrix": average_cdf(mats, grid), "particles": average_cdf(parts, grid),
            "law": law_cdf(law, grid)}
    return ConsistencyResult(law, cdfs, pairwise_ks(cdfs))


# ---------------------------------------------------------------------------
# PDE experiments
# ---------------------------------------------------------------------------

def dirac_selection(h=1 / 200, t=1.0, dt=0.05):
    """sup-errors of the PDE from a one-node step against the semicircle and the frozen step."""
    grid = symmetric_grid(t, h)
    F0 = step_initial_cdf(grid)
    snaps, rep = solve(F0, t, SchemeParams(h=h, dt=dt))
    F = snaps[-1]
    law = law_cdf(AnalyticLaw.semicircle(t), grid)
    return {"sup_to_semicircle": ks_distance(F, law), "sup_to_frozen": ks_distance(F, F0),
            "steps": rep.steps, "repairs": rep.total_repairs, "final": F}


def self_similarity(h, t0=1.0, t1=2.0, dt=0.05, radius_coeff=2.0):
    """Evolve the semicircle CDF at t0 to t1 and compare with the family at t1."""
    grid = symmetric_grid(t1, h)
    law0 = AnalyticLaw.semicircle(t0, radius_coeff)
    F0 = law_cdf(law0, grid)
    rec = list(np.linspace(t0, t1, 5)[1:])
    snaps, rep = solve(F0, t1, SchemeParams(h=h, dt=dt), record_times=rec, t0=t0)
    err = ks_distance(snaps[-1], law_cdf(law0.at_time(t1), grid))
    slope0 = max_slope(F0.values, h)
    slopes = [max_slope(s.values, h) for s in snaps]
    return {"sup_error": err, "report": rep, "slope0": slope0, "slopes": slopes,
            "trace_slopes": list(rep.max_dxF)}


def error_order(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def random_cdf(rng, grid: UniformGrid, pinned_lo=True, bumps=4):
    """Random CDF: cumulative sum of a positive random density inside the grid."""
    n = grid.size
    w = np.zeros(n)
    lo, hi = (1 if pinned_lo else 0), n - 1
    for _ in range(rng.integers(1, bumps + 1)):
        a, b = np.sort(rng.integers(lo, hi, size=2))
        b = max(b, a + 1)
        w[a:b] += rng.uniform(0.1, 1.0)
    w += rng.uniform(0, 1e-3) * (np.arange(n) >= lo) * (np.arange(n) < hi)
    vals = np.concatenate([[0.0], np.cumsum(w[:-1])])
    vals /= vals[-1]
    vals[-1] = 1.0
    return GridCDF.on_grid(grid, vals)


def random_ordered_pair(rng, grid, pinned_lo=True):
    """F <= G nodewise: G = max(F, H) with H an independent random CDF."""
    F = random_cdf(rng, grid, pinned_lo)
    H = random_cdf(rng, grid, pinned_lo)
    return F, F.with_values(np.maximum(F.values, H.values))


def order_setups():
    """(label, grid, SchemeParams) for Dyson, Wishart and the sigma kernel."""
    gd = UniformGrid(-2.0, 2.0, 0.02)
    gw = UniformGrid(0.0, 4.0, 0.02)
    gg = UniformGrid(-1.0, 1.0, 0.02)
    return [
        ("dyson", gd, SchemeParams(h=0.02, dt=0.01)),
        ("wishart", gw, SchemeParams(h=0.02, dt=0.01, kernel=InteractionKernel.wishart(2.0))),
        # tails beyond |z| = 2 would use g outside the box where it is negative
        ("sigma", gg, SchemeParams(h=0.02, dt=0.01, kernel=sigma_kernel(),
                                   quad=PvQuadratureParams(tail_cut=2.0))),
    ]


def order_preservation(pairs=1000, solves=20, t_end=0.2, seed=0):
    """Worst ordering defect max(F - G) after one step and after full solves."""
    rng = np.random.default_rng(seed)
    out = {}
    for label, grid, p in order_setups():
        sch = MonotoneScheme(grid, p)
        worst_step = -np.inf
        worst_solve = -np.inf
        for k in range(pairs):
            F, G = random_ordered_pair(rng, grid)
            # common step that is admissible for both
            dt = min(p.dt, p.cfl_safety * sch.cfl_dt(F.values), p.cfl_safety * sch.cfl_dt(G.values))
            a = sch.raw_step(np.array(F.values), dt)
            b = sch.raw_step(np.array(G.values), dt)
            worst_step = max(worst_step, float(np.max(a - b)))
            if k < solves:
                fa = _common_solve(sch, F.values, G.values, t_end)
                worst_solve = max(worst_solve, float(np.max(fa[0] - fa[1])))
        out[label] = {"one_step": worst_step, "full_solve": worst_solve}
    return out


def _common_solve(sch: MonotoneScheme, u, v, t_end):
    """Advance two profiles with the same step sequence."""
    p = sch.p
    u, v = np.array(u), np.array(v)
    t = 0.0
    while t_end - t > 1e-14:
        dt = min(p.dt, t_end - t, p.cfl_safety * sch.cfl_dt(u), p.cfl_safety * sch.cfl_dt(v))
        u, v = sch.raw_step(u, dt), sch.raw_step(v, dt)
        t += dt
    return u, v


# ---------------------------------------------------------------------------
# particle-level pathwise experiments
# ---------------------------------------------------------------------------

def random_dominated_pair(rng, N, spread=1.0):
    """s1 <= s2 with about half the particles shared."""
    a = np.sort(rng.uniform(-spread, spread, N))
    while np.min(np.diff(a)) < 1e-4:
        a = np.sort(rng.uniform(-spread, spread, N))
    gap = np.append(np.diff(a), 0.05)
    th = np.where(rng.random(N) < 0.5, 0.0, rng.uniform(0.0, 0.9, N))
    return OrderedSpectrum(a, strict=True), OrderedSpectrum(a + th * gap, strict=True)


def dominance_study(pairs=100, N=50, dt=1e-4, t_end=1.0, K=10.0, seed=0, substeps=(1, 2),
                    beta=COUPLED_BETA, records=20, equal=False):
    """Coupled runs from random dominated pairs at several refinements of one path."""
    rng = np.random.default_rng(seed)
    rec = list(np.linspace(t_end / records, t_end, records))
    rows = []
    for k in range(pairs):
        s1, s2 = random_dominated_pair(rng, N)
        if equal:
            s2 = s1
        cfg = SdeConfig(InteractionKernel.dyson(), N, dt, t_end, noise_scale=dyson_noise(N, beta),
                        seed=replica_seed(seed, k), kappa_gap=None, blast_gap="nearest")
        for m in substeps:
            # tolerance K times the effective step dt/m
            _, _, rep = coupled_dominance_run(cfg, s1, s2, rec, K=K / m, substeps=m)
            rows.append({"pair": k, "substeps": m, "dt": dt / m,
                         "worst_excursion": rep.worst_excursion, "violations": rep.count})
    return rows


def contraction_particles(pairs=100, N=40, dt=1e-3, t_end=0.5, ps=(1, 2, np.inf), seed=0):
    """Ratio data of the zero-noise flow: max over pairs of d_t - d_0, per p."""
    rng = np.random.default_rng(seed)
    k = InteractionKernel.dyson()
    worst = {p: -np.inf for p in ps}
    for _ in range(pairs):
        x0 = np.sort(rng.uniform(-1, 1, N))
        y0 = np.sort(rng.uniform(-1, 1, N))
        if min(np.min(np.diff(x0)), np.min(np.diff(y0))) < 1e-6:
            continue
        xt, yt = deterministic_flow_pair(x0, y0, k, t_end, dt)
        for p in ps:
            worst[p] = max(worst[p], lp_distance(xt, yt, p) - lp_distance(x0, y0, p))
    return worst


def contraction_pde(pairs=20, h=0.02, dt=0.01, t_end=0.25, ps=(1, 2), seed=0, L=3.0):
    """max over pairs of W_p(F(t), G(t)) - W_p(F0, G0) for the Dyson scheme."""
    rng = np.random.default_rng(seed)
    grid = UniformGrid(-L, L, h)
    # profiles supported in [-1, 1] so that mass stays inside the grid
    inner = UniformGrid(-1.0, 1.0, h)
    off = grid.index_of(-1.0)
    p_sch = SchemeParams(h=h, dt=dt)
    sch = MonotoneScheme(grid, p_sch)
    worst = {p: -np.inf for p in ps}
    for _ in range(pairs):
        F, G = (_embed(random_cdf(rng, inner), grid, off) for _ in range(2))
        u, v = _common_solve(sch, F.values, G.values, t_end)
        Ft, Gt = F.with_values(u), G.with_values(v)
        for p in ps:
            worst[p] = max(worst[p], wasserstein_p(Ft, Gt, p) - wasserstein_p(F, G, p))
    return worst


def _embed(F: GridCDF, grid: UniformGrid, off):
    vals = np.ones(grid.size)
    vals[:off] = 0.0
    vals[off:off + F.values.size] = F.values
    return GridCDF.on_grid(grid, vals)


def convergence_study(Ns=(50, 100, 200, 400), seeds=10, t=1.0, h=1 / 400, beta=LAW_BETA,
                      seed=0, dt=1e-3, pde_dt=0.05):
    """Mean KS between single-replica particle CDFs and the PDE solution, per N."""
    grid = symmetric_grid(t, h)
    snaps, _ = solve(step_initial_cdf(grid), t, SchemeParams(h=h, dt=pde_dt))
    Fp = snaps[-1]
    rows = []
    for N in Ns:
        cfg = SdeConfig(InteractionKernel.dyson(), N, dt, t, noise_scale=dyson_noise(N, beta),
                        seed=seed)
        ks = [ks_distance(empirical_cdf(s, grid), Fp) for s in particle_ensemble(cfg, seeds)]
        rows.append({"N": N, "ks_mean": float(np.mean(ks)), "ks_std": float(np.std(ks))})
    return rows, Fp
