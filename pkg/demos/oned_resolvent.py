"""Peak 1D resolvent norm of a strip profile against 1/h, with its fitted power.

Run: python3 demos/oned_resolvent.py   (about a minute)
"""
import numpy as np

from torusdamp.damping import strip_profile_1d
from torusdamp.oned import collocation_grid, resolvent_1d_sweep

x = collocation_grid(4096)
W = 1e5 * strip_profile_1d([(-1.8, 1.8)], 2, x)
sw = resolvent_1d_sweep(W, np.logspace(-1.5, -3, 7), gamma=2)
for row in sw.rows():
    print(f"h={row['h']:.5f} lambda={row['lambda']:.3f} norm={row['norm']:.4g}")
print(f"slope {sw.fit.slope:.4f} vs 1/(gamma+2) = {sw.predicted:.4f}, r2 {sw.fit.r2:.4f}")
