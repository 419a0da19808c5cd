import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusdamp.damping import constant_damping, make_disk_damping, make_strip_damping
from torusdamp.pseudodiff import (CutoffPsi1, FourierField2D, MicrolocalizationError,
                                  build_generator, check_microlocalized, coefficients_to_samples,
                                  commutator_scaling, conjugation_residual, convolution_matrix,
                                  exp_action, fourier_multiplier, grid_nodes,
                                  hermitian_exponential, make_probe, matrix_exponential,
                                  multiplication_operator, plateau_cutoff, samples_to_coefficients,
                                  symbol_b, wavenumbers)

DISK = make_disk_damping(r0=2.5, beta=5, amplitude=2.5**-5)


def mode(K, kx, ky):
    c = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    c[kx + K, ky + K] = 1.0
    return c


def grid(K):
    x = grid_nodes(K)
    return np.meshgrid(x, x, indexing="ij")


# -- basis -------------------------------------------------------------------

def test_single_mode_samples():
    K = 5
    X, Y = grid(K)
    u = coefficients_to_samples(mode(K, 2, -3))
    np.testing.assert_allclose(u, np.exp(1j * (2 * X - 3 * Y)) / (2 * np.pi), atol=1e-14)


def test_parseval():
    rng = np.random.default_rng(1)
    K = 9
    u = rng.standard_normal((2 * K + 1,) * 2)
    f = FourierField2D.from_samples(u)
    quad = np.sqrt(np.sum(u**2) * (2 * np.pi / (2 * K + 1)) ** 2)
    assert f.norm() == pytest.approx(quad, rel=1e-13)
    np.testing.assert_allclose(f.samples().real, u, atol=1e-13)


# -- cutoffs and multipliers -------------------------------------------------

def test_psi1_plateau_and_support():
    psi = CutoffPsi1()
    eta = np.linspace(-3, 3, 6001)
    v = psi(eta)
    assert np.all((v >= 0) & (v <= 1))
    d = np.minimum(np.abs(eta - 1), np.abs(eta + 1))
    assert np.all(v[d <= 0.25] == 1.0)
    assert np.all(v[d > 0.5] == 0.0)
    np.testing.assert_array_equal(v, psi(-eta))


def test_plateau_cutoff():
    c = plateau_cutoff(1.0, 0.5)
    assert c(0.9) == 1.0 and c(1.6) == 0.0 and 0 < c(1.25) < 1


def test_multiplier_examples():
    K = 6
    u = np.random.default_rng(0).standard_normal((13, 13)) + 0j
    np.testing.assert_array_equal(fourier_multiplier(lambda xi: np.ones_like(xi), "x", 0.3, K)(u), u)
    sq = fourier_multiplier(lambda xi: xi**2, "y", 0.5, K)
    assert sq(mode(K, 0, 2))[K, K + 2] == pytest.approx(1.0, abs=1e-15)
    K = 12
    psi = fourier_multiplier(CutoffPsi1(), "y", 0.1, K)
    assert psi(mode(K, 3, 10))[K + 3, K + 10] == 1.0


def test_multiplier_rejects_small_K_and_bad_axis():
    with pytest.raises(ValueError):
        fourier_multiplier(np.cos, "x", 0.1, 3)
    with pytest.raises(ValueError):
        fourier_multiplier(np.cos, "z", 0.1, 8)


def test_multiplication_examples():
    K = 6
    X, Y = grid(K)
    three = multiplication_operator(np.full_like(X, 3.0))
    np.testing.assert_allclose(three.to_dense(), 3 * np.eye(169), atol=1e-14)
    out = multiplication_operator(np.cos(X))(mode(K, 0, 0))
    expect = np.zeros_like(out)
    expect[K + 1, K] = expect[K - 1, K] = 0.5
    np.testing.assert_allclose(out, expect, atol=1e-15)


def test_multiplication_dense_matches_transform_and_is_self_adjoint():
    K = 8
    X, Y = grid(K)
    f = DISK(X, Y)
    op = multiplication_operator(f)
    M = convolution_matrix(f)
    assert np.linalg.norm(M - M.conj().T) <= 1e-12 * np.linalg.norm(M)
    rng = np.random.default_rng(3)
    c = rng.standard_normal((17, 17)) + 1j * rng.standard_normal((17, 17))
    np.testing.assert_allclose(op(c).ravel(), M @ c.ravel(), atol=1e-13)


# -- generator ---------------------------------------------------------------

def test_symbol_b_vanishes_off_window():
    b = symbol_b()
    assert b(np.array([0.0]))[0] == 0.0
    assert b(np.array([1.0]))[0] == pytest.approx(-0.25)
    assert b(np.array([-1.0]))[0] == pytest.approx(0.25)


def test_generator_zero_for_trivial_dampings():
    assert np.abs(build_generator(constant_damping(0.0), 0.2, 12).dense()).max() == 0
    strip = make_strip_damping([(-1.0, 1.0)], 5)
    assert np.abs(build_generator(strip, 0.2, 12).dense()).max() < 1e-14


def test_generator_requires_K():
    with pytest.raises(MicrolocalizationError, match="need K >= 20"):
        build_generator(DISK, 0.1, 12)
    with pytest.raises(ValueError):
        build_generator(DISK, 1.5, 12)


def test_generator_self_adjoint():
    G = build_generator(DISK, 0.1, 24).dense()
    assert np.linalg.norm(G - G.conj().T) <= 1e-12 * np.linalg.norm(G, 2)


def test_generator_norm_uniformly_bounded():
    # norms approach the symbol bound 2 sup|b| sup|A| from below with shrinking increments
    norms, bounds = [], []
    for h, K in [(0.1, 32), (0.05, 64), (0.025, 128)]:
        g = build_generator(DISK, h, K)
        norms.append(g.norm())
        bounds.append(2 * np.abs(g.b_diag).max() * np.abs(g.A_samples).max())
    assert all(0 < n < b for n, b in zip(norms, bounds))
    steps = np.diff(norms)
    assert np.all(steps > 0) and steps[1] < steps[0]
    # refinement of the truncation alone barely moves the norm
    assert build_generator(DISK, 0.1, 64).norm() == pytest.approx(norms[0], rel=0.02)


# -- exponentials --------------------------------------------------------------

def test_matrix_exponential_examples():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((4, 4))), np.eye(4))
    th = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(matrix_exponential(np.diag(1j * th)), np.diag(np.exp(1j * th)),
                               atol=1e-15)
    with pytest.raises(ValueError):
        matrix_exponential(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        matrix_exponential(np.ones((2, 3)))


def test_exponential_of_generator():
    G = build_generator(DISK, 0.1, 24).dense()
    E, Einv = matrix_exponential(G), matrix_exponential(-G)
    n1, n2 = np.linalg.norm(E, 2), np.linalg.norm(Einv, 2)
    assert np.linalg.norm(E @ Einv - np.eye(len(G)), 2) <= 1e-10 * n1 * n2
    gn = np.linalg.norm(G, 2)
    # equality for Hermitian G, so allow rounding
    assert max(n1, n2) <= math.exp(gn) * (1 + 1e-12)
    assert np.linalg.norm(E - E.conj().T) <= 1e-12 * n1
    w = np.linalg.eigvalsh(0.5 * (E + E.conj().T))
    assert w.min() > 0
    np.testing.assert_allclose(w, np.sort(np.exp(np.linalg.eigvalsh(G))), rtol=1e-9)
    np.testing.assert_allclose(E, hermitian_exponential(G), atol=1e-12)


def test_exp_action_matches_dense():
    g = build_generator(DISK, 0.1, 20)
    v = make_probe(0.1, 20).coefficients
    dense = matrix_exponential(-g.dense()) @ v.ravel()
    np.testing.assert_allclose(exp_action(g.operator, v, -1.0).ravel(), dense, atol=1e-11)


# -- probes and conjugation -------------------------------------------------------

def test_probe_microlocalized():
    p = make_probe(0.1, 24)
    assert p.norm() == pytest.approx(1.0)
    assert check_microlocalized(p, 0.1)
    bad = FourierField2D(mode(24, 0, 0), 24, 0.1)
    assert not check_microlocalized(bad, 0.1)
    with pytest.raises(MicrolocalizationError):
        conjugation_residual(DISK, 0.1, 24, bad)


def test_conjugation_residual_trivial_cases():
    p = make_probe(0.2, 14)
    assert conjugation_residual(constant_damping(0.0), 0.2, 14, p) == 0.0
    strip = make_strip_damping([(-1.0, 1.0)], 5)
    assert conjugation_residual(strip, 0.2, 14, p) < 1e-13


def test_conjugation_residual_decays():
    vals = [conjugation_residual(DISK, h, K, make_probe(h, K))
            for h, K in [(0.2, 14), (0.1, 24)]]
    assert vals[1] < vals[0] / 2


HBARS = [0.05, 0.07, 0.1, 0.14, 0.2, 0.28, 0.4]


def test_commutator_scaling():
    # a wide transition keeps hbar * sup|psi'| small across the whole range
    psi = plateau_cutoff(1.0, 16.0)
    strip = make_strip_damping([(-2.5, 2.5)], 5)
    fit = commutator_scaling(psi, strip, HBARS, K=344)
    assert fit.slope >= 0.9 and fit.r2 >= 0.98


def test_commutator_slope_rises_with_cutoff_width():
    slopes = [commutator_scaling(plateau_cutoff(1.0, e), DISK, HBARS,
                                 K=math.ceil((1 + e) / 0.05) + 4).slope for e in (4.0, 8.0, 16.0)]
    assert slopes[0] < slopes[1] < slopes[2] < 1.05


def test_commutator_block_matches_dense():
    from torusdamp.pseudodiff import commutator_norm
    psi = plateau_cutoff(1.0, 4.0)
    strip = make_strip_damping([(-2.5, 2.5)], 5)
    X, Y = grid(24)
    hb = [0.2, 0.28, 0.4]
    full = [commutator_norm(psi, h, strip(X, Y)) for h in hb]
    block = commutator_scaling(psi, strip, hb, K=24)
    assert np.polyfit(np.log(hb), np.log(full), 1)[0] == pytest.approx(block.slope, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(-6, 6), st.integers(-6, 6), st.floats(0.05, 0.5))
def test_multiplier_is_diagonal(kx, ky, h):
    K = 6
    out = fourier_multiplier(np.cos, "x", h, K)(mode(K, kx, ky))
    assert out[kx + K, ky + K] == pytest.approx(math.cos(h * kx))
    assert np.count_nonzero(out) <= 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transform_roundtrip(seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((11, 11)) + 1j * rng.standard_normal((11, 11))
    np.testing.assert_allclose(samples_to_coefficients(coefficients_to_samples(c)), c, atol=1e-13)
