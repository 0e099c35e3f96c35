"""One pass/fail test per acceptance criterion, at the stated tolerances."""
import pathlib
import subprocess
import sys
import time

import numpy as np
import pytest

from spectral_flow import experiments as E

pytestmark = pytest.mark.slow

HERE = pathlib.Path(__file__).parent


def test_01_semicircle_cross_level_consistency():
    t0 = time.perf_counter()
    res = E.semicircle_consistency(N=500, n=200, replicas=20, h=1 / 200, t=1.0)
    elapsed = time.perf_counter() - t0
    print("pairwise KS", res.ks, "radius_coeff", res.law.radius_coeff, f"{elapsed:.1f}s")
    assert res.worst <= 0.06
    assert elapsed <= 300


def test_02_marchenko_pastur_consistency():
    t0 = time.perf_counter()
    res = E.mp_consistency(n=100, m=200, N=100, replicas=20, t=1.0)
    elapsed = time.perf_counter() - t0
    print("pairwise KS", res.ks, "edge_coeff", res.law.edge_coeff, f"{elapsed:.1f}s")
    assert res.worst <= 0.08
    assert elapsed <= 300


def test_03_dirac_selection():
    r = E.dirac_selection(h=1 / 200, t=1.0)
    print({k: v for k, v in r.items() if k != "final"})
    assert r["sup_to_semicircle"] <= 0.03
    assert r["sup_to_frozen"] >= 0.4


def test_04_self_similarity_and_order():
    hs = [1 / 50, 1 / 100, 1 / 200]
    errs = [E.self_similarity(h)["sup_error"] for h in hs]
    order = E.error_order(hs, errs)
    print("errors", errs, "order", order)
    assert errs[-1] <= 0.02
    assert order >= 0.8


def test_05_discrete_comparison_principle():
    rows = E.dominance_study(pairs=100, N=50, dt=1e-4, t_end=1.0, K=10.0, substeps=(1, 2))
    coarse = [r for r in rows if r["substeps"] == 1]
    fine = [r for r in rows if r["substeps"] == 2]
    assert len(coarse) == 100 and len(fine) == 100
    # tolerance 10 dt at each step size
    assert sum(r["violations"] for r in rows) == 0
    exc = lambda rs: max(max(r["worst_excursion"], 0.0) for r in rs)
    print("worst excursion dt:", max(r["worst_excursion"] for r in coarse),
          "dt/2:", max(r["worst_excursion"] for r in fine))
    # positive part of the worst excursion at dt/2 is at most half that at dt
    assert exc(fine) <= 0.5 * exc(coarse)


def test_06_scheme_order_preservation():
    res = E.order_preservation(pairs=1000, solves=20, t_end=0.2)
    print(res)
    assert set(res) == {"dyson", "wishart", "sigma"}
    for label, r in res.items():
        assert r["one_step"] <= 1e-12, label
        assert r["full_solve"] <= 1e-9, label


def test_07_contraction():
    dt, h, pde_dt = 1e-3, 0.02, 0.01
    wp = E.contraction_particles(pairs=100, N=40, dt=dt, t_end=0.5)
    wq = E.contraction_pde(pairs=20, h=h, dt=pde_dt, t_end=0.25)
    print("particles", wp, "pde", wq)
    C = 1.0
    assert all(v <= C * dt for v in wp.values())
    assert all(v <= 5 * (h + pde_dt) for v in wq.values())


def test_08_convergence_in_N():
    rows, _ = E.convergence_study(Ns=(50, 100, 200, 400), seeds=10, t=1.0)
    means = [r["ks_mean"] for r in rows]
    print(rows)
    assert all(b < a for a, b in zip(means, means[1:]))
    assert means[-1] <= 0.05


def test_09_operator_unit_suite():
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(HERE / "test_operators.py")],
                          capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    print(proc.stdout[-400:], f"{elapsed:.1f}s")
    assert proc.returncode == 0
    assert elapsed <= 30


def test_10_lipschitz_monitor():
    for h in (1 / 50, 1 / 100, 1 / 200):
        r = E.self_similarity(h)
        L0 = r["slope0"]
        assert max(r["trace_slopes"]) <= L0 + 0.01 * L0
        assert max(r["slopes"]) <= L0 + 0.01 * L0
