"""Wishart matrices X = A A^T / n against the Wishart particle system and the MP law.

    python demos/wishart_mp.py [--replicas 5]
"""
import argparse

from spectral_flow import experiments as E

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, default=100)
ap.add_argument("--m", type=int, default=200)
ap.add_argument("--replicas", type=int, default=5)
args = ap.parse_args()

res = E.mp_consistency(n=args.n, m=args.m, N=args.n, replicas=args.replicas)
lo, hi = res.law.support()
print(f"c = {args.m / args.n:g}, fitted edge_coeff = {res.law.edge_coeff:.4f}, "
      f"support [{lo:.3f}, {hi:.3f}]")
for pair, ks in res.ks.items():
    print(f"  KS {pair:20s} {ks:.4f}")
