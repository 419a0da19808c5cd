import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusdamp.damping import constant_damping, make_disk_damping, make_strip_damping
from torusdamp.pseudodiff import FourierField2D
from torusdamp.spectral2d import (ConvergenceError, SingularOperatorError, StationaryOperator,
                                  apply_operator, apriori_identity_defects, default_K,
                                  exponent_sweep, generator_spectrum, geometric_h_list,
                                  predicted_exponent, quasimode_extract, resolvent_envelope,
                                  resolvent_norm, separable_resolvent_norm, sigma_min,
                                  spectral_window)

ZERO = constant_damping(0.0)
DISK = make_disk_damping(r0=2.5, beta=5, amplitude=2.5**-5)
STRIP = make_strip_damping([(-2.5, 2.5)], 5, amplitude=2.5**-5)


def mode(K, kx, ky):
    c = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    c[kx + K, ky + K] = 1.0
    return FourierField2D(c, K)


def diagonal_norm(h, K):
    """Closed form 1 / min |h^2 |k|^2 - 1| from integer squares."""
    return 1.0 / min(abs(h * h * (i * i + j * j) - 1)
                     for i in range(-K, K + 1) for j in range(-K, K + 1))


def random_field(K, seed):
    rng = np.random.default_rng(seed)
    n = 2 * K + 1
    return FourierField2D(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), K)


# -- forward operator ----------------------------------------------------------

def test_apply_undamped_mode():
    op = StationaryOperator(0.8, ZERO, 6)
    u = mode(6, 1, 0)
    np.testing.assert_allclose(apply_operator(op, u).coefficients, -0.36 * u.coefficients,
                               atol=1e-15)


def test_apply_constant_damping():
    op = StationaryOperator(0.3, constant_damping(2.0), 6)
    u = random_field(6, 0)
    expect = op.diag * u.coefficients + 1j * 0.3 * 2.0 * u.coefficients
    np.testing.assert_allclose(op.apply(u).coefficients, expect, atol=1e-13)


def test_apply_matches_dense():
    op = StationaryOperator(0.2, DISK, 8)
    u = random_field(8, 1)
    dense = op.to_dense() @ u.vector
    assert np.max(np.abs(op.apply(u).vector - dense)) <= 1e-12


def test_adjoint_is_conjugate_transpose():
    op = StationaryOperator(0.2, DISK, 8)
    u, v = random_field(8, 2).vector, random_field(8, 3).vector
    lhs = np.vdot(op.apply(u).ravel(), v)
    rhs = np.vdot(u, op.apply_adjoint(v).ravel())
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_truncation_mismatch():
    with pytest.raises(ValueError, match="truncation"):
        StationaryOperator(0.2, DISK, 8).apply(mode(6, 0, 0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=10),
       st.complex_numbers(max_magnitude=10))
def test_apply_linear(seed, al, be):
    op = StationaryOperator(0.15, DISK, 6)
    u, v = random_field(6, seed), random_field(6, seed + 1)
    lhs = op.apply(al * u.coefficients + be * v.coefficients)
    rhs = al * op.apply(u.coefficients) + be * op.apply(v.coefficients)
    scale = max(1.0, abs(al), abs(be))
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale * (u.norm() + v.norm())


# -- resolvent norm --------------------------------------------------------------

def test_undamped_norm_closed_form():
    op = StationaryOperator(0.8, ZERO, 4)
    assert resolvent_norm(op) == pytest.approx(1 / 0.28, abs=1e-12)
    assert resolvent_norm(op) == pytest.approx(3.5714, abs=1e-4)
    for h in (0.19, 0.15, 0.12):
        K = default_K(h)
        assert resolvent_norm(StationaryOperator(h, ZERO, K)) == pytest.approx(
            diagonal_norm(h, K), rel=1e-12)


def test_undamped_singular():
    with pytest.raises(SingularOperatorError):
        resolvent_norm(StationaryOperator(0.5, ZERO, 4))


def test_undamped_quasimode():
    u, res = quasimode_extract(StationaryOperator(0.8, ZERO, 4))
    assert res == pytest.approx(0.28, abs=1e-12)
    k = np.argwhere(np.abs(u.coefficients) > 0.5)[0] - 4
    assert k @ k == 2


def test_unknown_method_and_dense_cap():
    op = StationaryOperator(0.2, DISK, 8)
    with pytest.raises(ValueError):
        sigma_min(op, "magic")
    with pytest.raises(ValueError):
        sigma_min(StationaryOperator(0.2, DISK, 50), "dense_svd")


def test_krylov_matches_dense():
    op = StationaryOperator(0.1, DISK, 24)
    d = resolvent_norm(op, "dense_svd")
    k = resolvent_norm(op, "krylov")
    assert k == pytest.approx(d, rel=1e-2)


def test_convergence_error_carries_estimate():
    op = StationaryOperator(0.1, DISK, 20)
    with pytest.raises(ConvergenceError) as info:
        sigma_min(op, "krylov", inner_tol=1e-30, max_inner=100)
    assert info.value.residual > 1e-27


def test_duality_and_apriori_identities():
    op = StationaryOperator(0.15, DISK, 16)
    est = sigma_min(op, "dense_svd")
    u, res = quasimode_extract(op, "dense_svd")
    assert res * est.resolvent_norm == pytest.approx(1.0, abs=1e-6)
    d_im, d_re = apriori_identity_defects(op, u)
    assert d_im <= 1e-10 and d_re <= 1e-10
    d_im, d_re = apriori_identity_defects(op, random_field(16, 4))
    assert d_im <= 1e-10 and d_re <= 1e-10


@pytest.mark.parametrize("damping,h", [(DISK, 0.2), (STRIP, 0.2), (DISK, 0.25)])
def test_refinement(damping, h):
    K = default_K(h)
    n1 = resolvent_norm(StationaryOperator(h, damping, K), "krylov")
    n2 = resolvent_norm(StationaryOperator(h, damping, 2 * K), "krylov")
    assert abs(n1 - n2) < 0.02 * n2


# -- envelope and sweeps -------------------------------------------------------------

def test_predicted_exponents():
    assert predicted_exponent(DISK) == pytest.approx(2 + 2 / 15)
    assert predicted_exponent(STRIP) == pytest.approx(2 + 1 / 7)
    assert round(predicted_exponent(DISK), 4) == 2.1333
    assert round(predicted_exponent(STRIP), 4) == 2.1429
    with pytest.raises(ValueError):
        predicted_exponent(ZERO)


def test_geometric_h_list():
    hs = geometric_h_list()
    assert len(hs) == 11 and hs[0] == 0.2 and hs[-1] == pytest.approx(0.2 * 0.8**10)
    assert geometric_h_list(h_min=0.05)[-1] >= 0.05


def test_uniform_damping_sweep_closed_form():
    # a = 1 is normal: sigma_min = min sqrt((h^2|k|^2 - 1)^2 + h^2), so the norm grows like 1/h
    hs = [0.2, 0.16, 0.128, 0.1024, 0.0819]
    sw = exponent_sweep(constant_damping(1.0), hs, K_rule=lambda h: 12, method="dense_svd")
    for h, r in sw.points:
        k2 = np.add.outer(np.arange(-12, 13) ** 2, np.arange(-12, 13) ** 2)
        exact = 1 / np.sqrt(((h * h * k2 - 1) ** 2 + h * h).min())
        assert r == pytest.approx(exact, rel=1e-10)
    assert sw.fit.slope == pytest.approx(1.0, abs=0.15)
    assert sw.predicted_exponent is None


def test_sweep_needs_five_points():
    with pytest.raises(ValueError):
        exponent_sweep(DISK, [0.2, 0.1, 0.05])


def test_separable_envelope_matches_dense_scan():
    h = 0.2
    K = default_K(h)
    e = resolvent_envelope(STRIP, h)
    assert e.method == "separable"
    lo, hi = spectral_window(h)
    assert lo <= e.shift <= hi
    dense = resolvent_norm(StationaryOperator(h, STRIP, K, shift=e.shift), "dense_svd")
    assert e.resolvent_norm == pytest.approx(dense, rel=1e-8)
    scan = max(separable_resolvent_norm(StationaryOperator(h, STRIP, K).a[:, 0], h, z)
               for z in np.linspace(lo, hi, 201))
    assert e.resolvent_norm >= scan * (1 - 1e-9)


def test_krylov_envelope_matches_dense_scan():
    h = 0.2
    e = resolvent_envelope(DISK, h, K=12)
    assert e.method == "krylov"
    lo, hi = spectral_window(h)
    base = StationaryOperator(h, DISK, 12)
    scan = max(resolvent_norm(base.shifted(z), "dense_svd") for z in np.linspace(lo, hi, 41))
    assert e.resolvent_norm >= 0.99 * scan


def test_strip_quasimode_leaves_damped_region():
    weights = []
    for h in (0.2, 0.128):
        e = resolvent_envelope(STRIP, h)
        op = StationaryOperator(h, STRIP, e.K, shift=e.shift)
        u, res = quasimode_extract(op, "krylov")
        assert res * e.resolvent_norm == pytest.approx(1.0, rel=1e-6)
        weights.append(np.real(np.vdot(u.coefficients, op._damp(u.coefficients))))
    assert weights[1] < weights[0]


# -- generator -------------------------------------------------------------------------

def test_generator_undamped():
    g = generator_spectrum(ZERO, 4)
    assert np.abs(g.eigenvalues.real).max() < 1e-12
    k = np.arange(-4, 5)
    expect = np.sort(np.sqrt(np.add.outer(k**2, k**2)).ravel())
    got = np.sort(np.abs(g.eigenvalues.imag))
    np.testing.assert_allclose(got, np.sort(np.concatenate([expect, expect])), atol=1e-10)


def test_generator_constant_damping():
    c = 0.6
    g = generator_spectrum(constant_damping(c), 5)
    k = np.arange(-5, 6)
    k2 = np.add.outer(k**2, k**2).ravel()
    roots = np.concatenate([np.roots([1, c, q]) for q in k2])
    def order(z):
        return z[np.lexsort((z.imag, np.round(z.real, 8)))]

    np.testing.assert_allclose(order(g.eigenvalues), order(roots), atol=1e-10)
    big = g.eigenvalues[np.abs(g.eigenvalues.imag) > 3]
    np.testing.assert_allclose(big.real, -c / 2, atol=1e-12)


def test_generator_disk_dissipative():
    g = generator_spectrum(make_disk_damping(r0=2.5, beta=5), 16)
    assert g.max_real_part() <= 1e-8
    moving = g.eigenvalues[np.abs(g.eigenvalues.imag) > 1e-9]
    assert np.all(moving.real < 0)
    assert g.min_abs_real_in_band() > 1e-8
    assert len(g.pairs()) == 2 * 33**2


def test_generator_size_cap():
    with pytest.raises(ValueError):
        generator_spectrum(DISK, 25)
