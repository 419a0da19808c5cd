"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one PASS/FAIL line (collected again in the terminal
summary) and asserts the same verdict.
"""
import math
import time
import warnings

import numpy as np
import pytest

from torusdamp import averaging, oned, pseudodiff, spectral2d, timedomain
from torusdamp.damping import constant_damping, make_disk_damping, make_strip_damping, strip_profile_1d

H_1D = list(np.logspace(-1.5, -3, 7))


# 1 -------------------------------------------------------------------------

def test_criterion_1_averaging_regularity_gain(verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for beta in (4, 5, 6):
        W = averaging.average_along(make_disk_damping((0, 0), 1.0, beta), averaging.E2,
                                    grid_n=8192)
        for side in ("left", "right"):
            s, r2 = averaging.fit_vanishing_exponent(W, side, (1e-3, 1e-1))
            ok &= abs(s - (beta + 0.5)) <= 0.1
            parts.append(f"b={beta}/{side[0]} {s:.4f}")
    dt = time.perf_counter() - t0
    ok &= dt < 10
    assert verdict(1, ok, f"exponents {', '.join(parts)} vs beta+1/2 +-0.1 ({dt:.1f}s)")


# 2 -------------------------------------------------------------------------

def test_criterion_2_averaging_inequalities(verdict):
    t0 = time.perf_counter()
    f = make_disk_damping((0, 0), 1.0, 5)
    jensen = max(float(np.max(averaging.jensen_gap(f, s, grid_n=1024))) for s in (0.1, 0.2, 0.4))
    # comparison: (1 - r)^5 <= (1 - r)^4 on the unit disc, so the averages are ordered
    g = make_disk_damping((0, 0), 1.0, 4)
    X = averaging.transversal_grid(averaging.E2, 1024)
    Af = averaging.average_samples(f, averaging.E2, X, 1024)
    Ag = averaging.average_samples(g, averaging.E2, X, 1024)
    comparison = bool(np.all(Af <= Ag))
    P = averaging.primitive_A(make_disk_damping((0, 0), 0.1, 5), grid=(1024, 1024))
    ratios = averaging.primitive_bound_ratios(P, normalized=False)
    bounds = max(ratios[j] for j in (0, 1, 2)) <= 1.0 and ratios["outside_support"] == 0.0
    dt = time.perf_counter() - t0
    ok = jensen <= 1e-8 and comparison and bounds and dt < 30
    assert verdict(2, ok, f"Jensen max gap {jensen:.2e}, comparison {comparison}, "
                          f"primitive bound ratios {ratios[0]:.3f}/{ratios[1]:.3f}/{ratios[2]:.3f} "
                          f"({dt:.1f}s)")


# 3 -------------------------------------------------------------------------

@pytest.mark.parametrize("gamma,amplitude", [(2, 1e5), (5, 1e9)])
def test_criterion_3_1d_resolvent_exponent(verdict, gamma, amplitude):
    t0 = time.perf_counter()
    x = oned.collocation_grid(4096)
    W = amplitude * strip_profile_1d([(-1.8, 1.8)], gamma, x)
    sw = oned.resolvent_1d_sweep(W, H_1D, gamma, tolerance=0.02)
    dt = time.perf_counter() - t0
    ok = bool(sw.fit.passed) and dt < 600
    assert verdict(3, ok, f"gamma={gamma}: slope {sw.fit.slope:.4f} vs 1/(gamma+2)="
                          f"{sw.predicted:.4f} +-0.02, r2 {sw.fit.r2:.4f} ({dt:.0f}s)")


# 4 -------------------------------------------------------------------------

def test_criterion_4_quasimode_optimality(verdict):
    t0 = time.perf_counter()
    x = oned.collocation_grid(4096)
    W = 1e9 * strip_profile_1d([(-1.8, 1.8)], 5, x)
    sw = oned.reduced_quasimode_sweep(W, H_1D, 5, tolerance=0.03)
    dt = time.perf_counter() - t0
    ok = abs(sw.fit.slope - sw.predicted) <= 0.03 and dt < 600
    assert verdict(4, ok, f"sigma_min slope {sw.fit.slope:.4f} vs 2+1/7={sw.predicted:.4f} "
                          f"+-0.03 ({dt:.0f}s)")


# 5 -------------------------------------------------------------------------

def test_criterion_5_2d_exponent_ordering(verdict):
    t0 = time.perf_counter()
    hs = spectral2d.geometric_h_list(0.2, 0.8, 9)  # 0.2 .. 0.0336
    amp = 2.5**-5
    disk = make_disk_damping((0, 0), 2.5, 5, amplitude=amp)
    strip = make_strip_damping([(-2.5, 2.5)], 5, amplitude=amp)
    sd = spectral2d.envelope_sweep(disk, hs)
    ss = spectral2d.envelope_sweep(strip, hs)
    dt = time.perf_counter() - t0
    ci_d, ci_s = sd.fit.interval(), ss.fit.interval()
    disk_ok = abs(sd.fit.slope - sd.predicted_exponent) <= 0.15
    strip_ok = abs(ss.fit.slope - ss.predicted_exponent) <= 0.15
    ordered = sd.fit.slope < ss.fit.slope
    overlap = ci_d[1] >= ci_s[0] and ci_s[1] >= ci_d[0]
    if not ordered and overlap:
        warnings.warn("disk/strip ordering not resolved: confidence intervals overlap")
    ok = disk_ok and strip_ok and (ordered or overlap) and dt < 1800
    assert verdict(5, ok, f"disk slope {sd.fit.slope:.4f} (r2 {sd.fit.r2:.3f}) vs 2.1333 +-0.15, "
                          f"strip slope {ss.fit.slope:.4f} (r2 {ss.fit.r2:.3f}) vs 2.1429 +-0.15, "
                          f"ordered {ordered}, CIs overlap {overlap} ({dt:.0f}s)")


# 6 -------------------------------------------------------------------------

def test_criterion_6_exact_identities(verdict):
    t0 = time.perf_counter()
    # (i) two-dimensional quasimodes
    d2 = 0.0
    for h, a in ((0.2, make_disk_damping((0, 0), 2.5, 5, amplitude=2.5**-5)),
                 (0.15, make_strip_damping([(-1.0, 1.0)], 5))):
        op = spectral2d.StationaryOperator(h, a, 16)
        u, _ = spectral2d.quasimode_extract(op, "dense_svd")
        d2 = max(d2, *spectral2d.apriori_identity_defects(op, u))
    # (ii) weighted energy identity on solved reduced problems
    W = oned.averaged_profile_on_grid(make_disk_damping((0, 0), 2.5, 5), 1024)
    d1 = 0.0
    for E in (0.01**1.1, 1e-3, 0.3):
        for kappa in ("one", "cos"):
            p = oned.ReducedProblem1D.build(0.01, E, W, 2 / 11, kappa=kappa)
            v = oned.solve_reduced(p)
            for w in (None, lambda x: 1 + 0.5 * np.cos(x)):
                d1 = max(d1, oned.weighted_identity_residual(p, v, w))
    # (iii) dissipation identity, second order in dt
    disk = make_disk_damping((0, 0), 2.5, 5)
    res = [timedomain.dissipation_identity_residual(
        timedomain.integrate_trajectory(disk, timedomain.trapped_packet(32), 1.0, dt))
        for dt in (2e-3, 1e-3)]
    ratio = res[0] / res[1]
    dt_wall = time.perf_counter() - t0
    ok = d2 <= 1e-10 and d1 <= 1e-8 and abs(ratio - 4) <= 0.6 and dt_wall < 60
    assert verdict(6, ok, f"2D identity defect {d2:.1e} (<=1e-10), weighted identity {d1:.1e} "
                          f"(<=1e-8), dissipation halving factor {ratio:.2f} (4+-15%) "
                          f"({dt_wall:.0f}s)")


# 7 -------------------------------------------------------------------------

def test_criterion_7_normal_form_residual(verdict):
    t0 = time.perf_counter()
    disk = make_disk_damping((0, 0), 2.5, 5, amplitude=2.5**-5)
    rows, fit = pseudodiff.residual_sweep(disk, [0.2, 0.14, 0.1, 0.07, 0.05])
    dt = time.perf_counter() - t0
    ok = fit.slope >= 1.8 and dt < 1200
    Ks = ",".join(str(K) for _, K, _ in rows)
    assert verdict(7, ok, f"residual order {fit.slope:.4f} (>=1.8), K={Ks} ({dt:.0f}s)")


# 8 -------------------------------------------------------------------------

def test_criterion_8_diagonal_oracles(verdict):
    t0 = time.perf_counter()
    worst0 = 0.0
    for h in (0.8, 0.19, 0.15, 0.12, 0.095):
        K = max(4, spectral2d.default_K(h))
        op = spectral2d.StationaryOperator(h, constant_damping(0.0), K)
        k = np.arange(-K, K + 1)
        exact = 1 / np.min(np.abs(h * h * np.add.outer(k * k, k * k) - 1))
        worst0 = max(worst0, abs(spectral2d.resolvent_norm(op) - exact) / exact)
    for lam in (math.sqrt(0.5), 1.3, 2.7):
        k = np.arange(2048)
        exact = 1 / np.min(np.abs(k * k - lam * lam))
        got = oned.resolvent_1d_norm(0.1, lam, np.zeros(4096))
        worst0 = max(worst0, abs(got - exact) / exact)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(5):
        h = float(rng.uniform(0.1, 0.3))
        if rng.random() < 0.5:
            a = make_disk_damping(tuple(rng.uniform(-1, 1, 2)), float(rng.uniform(1.0, 2.5)),
                                  float(rng.choice([4, 5, 6])), float(rng.uniform(0.01, 1.0)))
        else:
            w = float(rng.uniform(0.5, 2.5))
            a = make_strip_damping([(-w, w)], float(rng.choice([2, 5])), float(rng.uniform(0.1, 1)))
        op = spectral2d.StationaryOperator(h, a, 24)
        d = spectral2d.resolvent_norm(op, "dense_svd")
        k = spectral2d.resolvent_norm(op, "krylov")
        worst = max(worst, abs(k - d) / d)
    dt = time.perf_counter() - t0
    ok = worst0 <= 1e-12 and worst <= 0.01 and dt < 300
    assert verdict(8, ok, f"closed-form max rel error {worst0:.1e} (<=1e-12), krylov vs dense "
                          f"max rel diff {worst:.1e} (<=1%) ({dt:.0f}s)")


# 9 -------------------------------------------------------------------------

def test_criterion_9_generator_dissipativity(verdict):
    t0 = time.perf_counter()
    g = spectral2d.generator_spectrum(make_disk_damping((0, 0), 2.5, 5), 16)
    top = g.max_real_part()
    gap = g.min_abs_real_in_band(0.5, 8)
    dt = time.perf_counter() - t0
    ok = top <= 1e-8 and gap > 1e-8 and dt < 300
    assert verdict(9, ok, f"max Re {top:.2e} (<=1e-8), min |Re| for 0.5<=|Im|<=8 {gap:.2e} "
                          f"(>1e-8) ({dt:.0f}s)")


# 10 ------------------------------------------------------------------------

def test_criterion_10_decay_ordering(verdict):
    t0 = time.perf_counter()
    disk = make_disk_damping((0, 0), 2.5, 5)
    strip = timedomain.matched_strip(disk)
    rd = timedomain.measure_decay(disk, T=200, dt=0.02, K=32)
    rs = timedomain.measure_decay(strip, T=200, dt=0.02, K=32)
    dt = time.perf_counter() - t0
    ok = (rd.final_energy() <= rs.final_energy() and rd.strictly_decreasing()
          and rs.strictly_decreasing() and dt < 600)
    assert verdict(10, ok, f"E_disk(200) {rd.final_energy():.3e} <= E_strip(200) "
                           f"{rs.final_energy():.3e}, monotone {rd.strictly_decreasing()}/"
                           f"{rs.strictly_decreasing()} ({dt:.0f}s)")
