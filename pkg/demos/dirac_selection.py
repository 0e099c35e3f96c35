"""Which solution does the monotone scheme pick from a Dirac mass at 0?

The frozen step is a solution of the primitive equation too, but the scheme
spreads it into the semicircle primitive.

    python demos/dirac_selection.py
"""
from spectral_flow import experiments as E

for h in (1 / 50, 1 / 100, 1 / 200):
    r = E.dirac_selection(h=h)
    print(f"h = 1/{round(1 / h):<4d} sup|F - semicircle| = {r['sup_to_semicircle']:.4f}   "
          f"sup|F - step| = {r['sup_to_frozen']:.3f}   steps = {r['steps']}")

print()
hs = [1 / 50, 1 / 100, 1 / 200]
errs = [E.self_similarity(h)["sup_error"] for h in hs]
print("semicircle at t=1 evolved to t=2, sup-errors:", ", ".join(f"{e:.5f}" for e in errs))
print(f"observed order: {E.error_order(hs, errs):.2f}")
