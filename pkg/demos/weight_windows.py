"""Weight admissibility: the allowed windows per dimension, the rank
obstructions, and the case where the simple closed-form weight fails while
a smaller one passes.

Run with: python demos/weight_windows.py
"""

from cusplab import AdmissibilityObstruction, admissible_weights, cusp_weight_window, mu0_window

print("windows at the infinite-volume face (K = -2):")
for n in (3, 4, 5, 6, 8):
    w = mu0_window(n)
    print(f"  n={n}: {'empty' if w.empty else f'({w.lo:.6g}, {w.hi:.6g})'}")

print()
print("cusp weight windows inside the n=4 face window:")
for mu0 in (1.6, 1.75, 1.9):
    w1 = cusp_weight_window(4, 1, mu0)
    w2 = cusp_weight_window(4, 2, mu0)
    print(f"  mu0={mu0}: rank-1 -> (0, {w1.hi:.5f}), rank-2 -> "
          f"{'empty' if w2.empty else w2}")

print()
print("automatic search, n = 5 with cusps of rank 1 and 2:")
vec, rep = admissible_weights(5, (1, 2))
print(f"  mu0 = {vec.mu0}, cusp weights = {vec.mus}, "
      f"min margin = {rep.min_margin:.4g}, square-integrable: {rep.l2_ok}")

print()
print("n = 5 with a rank-3 cusp: the closed-form candidate 1/(n-2) fails")
print("the barrier inequality and the search falls back to half the window:")
vec, rep = admissible_weights(5, (3,))
end = rep.ends[0]
print(f"  candidate {end.candidate:.4f}: margin {end.candidate_margin.delta:+.4f}")
print(f"  chosen    {end.chosen:.4f}: margin {end.chosen_margin.delta:+.4f}")
for note in rep.notes:
    print("  note:", note)

print()
print("obstructions (expected failures):")
for n, ranks in ((4, (2,)), (4, (3,)), (3, (1,))):
    try:
        admissible_weights(n, ranks)
        print(f"  n={n}, ranks={ranks}: unexpectedly admissible?!")
    except AdmissibilityObstruction as exc:
        print(f"  n={n}, ranks={ranks}: {exc.reason}")
