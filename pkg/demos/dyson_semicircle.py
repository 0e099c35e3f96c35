"""Dyson particles, symmetric Brownian matrices and the primitive PDE at t = 1.

Each level produces an eigenvalue CDF; all of them are compared with the
semicircle law calibrated on the particle ensemble.

    python demos/dyson_semicircle.py [--replicas 5] [--plot out.svg]
"""
import argparse

from spectral_flow import experiments as E

ap = argparse.ArgumentParser()
ap.add_argument("--N", type=int, default=200)
ap.add_argument("--n", type=int, default=200)
ap.add_argument("--replicas", type=int, default=5)
ap.add_argument("--h", type=float, default=1 / 100)
ap.add_argument("--plot")
args = ap.parse_args()

res = E.semicircle_consistency(N=args.N, n=args.n, replicas=args.replicas, h=args.h)
print(f"calibrated radius coefficient: {res.law.radius_coeff:.4f} (Ito value 2)")
for pair, ks in res.ks.items():
    print(f"  KS {pair:20s} {ks:.4f}")

if args.plot:
    from spectral_flow.plots import plot_cdf
    others = [(k, v) for k, v in res.cdfs.items() if k != "law"]
    plot_cdf(res.cdfs["law"], args.plot, label="calibrated law", others=others)
