"""Two quadrature stories on compact patches: the tensor integration-by-
parts identity with its improved lower bound, and the uniform coefficient
bands of the boundary rescaling maps.

Run with: python demos/quadrature_identity.py
"""

import numpy as np

from cusplab import Chart
from cusplab.solver import (
    compact_patch_grid,
    condition_number_spread,
    default_scan_families,
    koiso_quadrature,
    random_bump_tensor,
    schauder_coefficient_scan,
)

chart = Chart.collar(4, edge=2.5)
print("identity  |grad u|^2 = |T|^2/2 + |div u|^2 - |tr u|^2 + n |u|^2")
print("for a compactly supported trace-free bump tensor, under refinement:")
gaps = []
for nodes in (17, 33, 65):
    grid = compact_patch_grid(chart, nodes, (1.0, 2.0), (-0.5, 0.5))
    u = random_bump_tensor(grid, np.random.default_rng(7))
    res = koiso_quadrature(grid, u, K=-2.0)
    gaps.append(res.gap)
    print(f"  {nodes:3d}^2 nodes: lhs {res.lhs:10.5f}  rhs {res.rhs:10.5f}  "
          f"gap {res.gap:.2e}  slack {res.slack:+.3e}")
order = np.polyfit(np.log([1 / 16, 1 / 32, 1 / 64]), np.log(gaps), 1)[0]
print(f"  fitted convergence order: {order:.2f}")
print()
print("the slack is (u, (Delta + K) u) - (n + K) |u|^2 and stays")
print("nonnegative: the lower bound improves the naive constant by n.")
print()

print("rescaled-metric coefficient bands, one family per boundary regime,")
print("swept over four decades of the truncation parameter:")
rows = schauder_coefficient_scan(default_scan_families(4, 1),
                                 [1e-1, 1e-2, 1e-3, 1e-4])
for r in rows:
    print(f"  {r.family:10s} eps={r.eps:7.0e}  eigs in "
          f"[{r.min_eig:.4f}, {r.max_eig:.4f}]  cond {r.cond:.4f}")
spread = condition_number_spread(rows)
print("max deviation of condition numbers from the family medians:",
      f"{max(spread.values()):.2e}")
