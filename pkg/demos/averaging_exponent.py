"""Vanishing exponent of the y-averaged disk damping for beta = 4, 5, 6.

Run: python3 demos/averaging_exponent.py
"""
from torusdamp.averaging import E2, average_along, fit_vanishing_exponent
from torusdamp.damping import make_disk_damping

for beta in (4, 5, 6):
    W = average_along(make_disk_damping((0.0, 0.0), 1.0, beta), E2, grid_n=8192)
    for side in ("left", "right"):
        s, r2 = fit_vanishing_exponent(W, side)
        print(f"beta={beta} {side:5s} exponent {s:.4f} (beta + 1/2 = {beta + 0.5}), r2 {r2:.5f}")
