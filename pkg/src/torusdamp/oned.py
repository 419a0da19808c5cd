"""Reduced problems on the circle.

After the normal form and a Fourier transform in the trapped variable, each
frequency gives an equation on the circle

    -h^2 v'' - E v + i h W v + h^2 kappa W^(1/2) v' = r,

or, with ``lambda = sqrt(E) / h`` and dividing by ``h^2``,

    -v'' - lambda^2 v + i h^-1 W v + kappa W^(1/2) v' = r / h^2.

This module solves it by Fourier collocation, classifies the spectral
parameter into the three regimes of the analysis, evaluates the weighted
energy and Morawetz identities, and measures the 1D resolvent growth.

Derivatives use the spectral differentiation matrix ``D1`` (Nyquist mode
dropped) and ``D2 = D1 @ D1``. With that choice ``D1`` is exactly
antisymmetric, so the integration-by-parts identities behind the energy
estimates hold on the grid up to rounding for any weight that is resolved.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .averaging import AveragedDamping, average_samples, E2
from .damping import TWO_PI, DampingProfile, strip_profile_1d
from .fitting import FitReport, loglog_fit
from .pseudodiff import smooth_step

GRID_MIN = 512
KAPPA_BOUND = 10.0


class SingularProblemError(ArithmeticError):
    """The discrete reduced operator has no inverse."""


# ---------------------------------------------------------------------------
# grid and differentiation


def collocation_grid(n: int) -> np.ndarray:
    return -np.pi + TWO_PI * np.arange(n) / n


def wavenumbers_1d(n: int) -> np.ndarray:
    """Integer wavenumbers in FFT order with the Nyquist mode set to 0."""
    k = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


@lru_cache(maxsize=2)
def differentiation_matrices(n: int):
    """Dense ``(D1, D2)`` with ``D2 = D1 @ D1``; both circulant and real."""
    k = wavenumbers_1d(n)
    c1 = np.real(np.fft.ifft(1j * k))
    c2 = np.real(np.fft.ifft(-k * k))
    D1 = sla.circulant(c1)
    D2 = sla.circulant(c2)
    D1.setflags(write=False)
    D2.setflags(write=False)
    return D1, D2


def spectral_derivative(f: np.ndarray, order: int = 1) -> np.ndarray:
    n = len(f)
    k = wavenumbers_1d(n)
    out = np.fft.ifft((1j * k) ** order * np.fft.fft(f))
    return out if np.iscomplexobj(f) else out.real


def integrate(f: np.ndarray) -> complex:
    """Periodic rectangle rule, exact for trigonometric polynomials below the grid."""
    return np.sum(f) * TWO_PI / len(f)


def l2_norm(f: np.ndarray) -> float:
    return math.sqrt(float(np.real(integrate(np.abs(f) ** 2))))


def inner(f: np.ndarray, g: np.ndarray) -> complex:
    """``<f, g> = int f conj(g)``."""
    return integrate(f * np.conj(g))


def hminus1_norm(f: np.ndarray) -> float:
    """Sobolev ``H^-1`` norm with Fourier weights ``(1 + k^2)^(-1/2)``."""
    n = len(f)
    k = np.fft.fftfreq(n, 1.0 / n)
    c = np.fft.fft(f) / n
    return math.sqrt(TWO_PI * float(np.sum(np.abs(c) ** 2 / (1 + k * k))))


# ---------------------------------------------------------------------------
# the reduced problem


def averaged_profile_on_grid(f: DampingProfile, n: int, v=E2, n_orbit: int = 4096) -> np.ndarray:
    """``A(f)_v`` evaluated directly at the collocation nodes."""
    return average_samples(f, v, collocation_grid(n), n_orbit)


def _resample(W: AveragedDamping, n: int) -> np.ndarray:
    x = collocation_grid(n)
    if W.grid_n == n and np.allclose(W.x, x):
        return np.asarray(W.samples, dtype=float)
    return np.interp(x, W.x, W.samples, period=W.period)


@dataclass
class ReducedProblem1D:
    """One instance of the reduced equation; ``delta`` is derived from ``theta``."""

    h: float
    E: float
    W: np.ndarray
    kappa: np.ndarray
    r: np.ndarray
    theta: float
    kappa_bound: float = KAPPA_BOUND

    def __post_init__(self):
        if isinstance(self.W, AveragedDamping):
            self.W = _resample(self.W, len(np.atleast_1d(self.r)))
        self.W = np.asarray(self.W, dtype=float)
        n = len(self.W)
        self.kappa = np.broadcast_to(np.asarray(self.kappa, dtype=float), (n,)).copy()
        self.r = np.broadcast_to(np.asarray(self.r, dtype=complex), (n,)).copy()
        if n < GRID_MIN:
            raise ValueError(f"grid_n must be at least {GRID_MIN}, got {n}")
        if not 0 < self.h < 1:
            raise ValueError("h must lie in (0, 1)")
        if np.any(self.W < 0):
            raise ValueError("W must be non-negative")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        dk = np.abs(np.diff(np.append(self.kappa, self.kappa[0]))) * n / TWO_PI
        if np.max(np.abs(self.kappa)) > self.kappa_bound or np.max(dk) > self.kappa_bound:
            raise ValueError("kappa and its difference quotient must stay below kappa_bound")

    @property
    def delta(self) -> float:
        return self.theta / (2 * self.theta + 1)

    @property
    def grid_n(self) -> int:
        return len(self.W)

    @property
    def x(self) -> np.ndarray:
        return collocation_grid(self.grid_n)

    @property
    def lam(self) -> float:
        """``sqrt(E) / h``; only meaningful for ``E > 0``."""
        return math.sqrt(max(self.E, 0.0)) / self.h

    def matrix(self) -> np.ndarray:
        D1, D2 = differentiation_matrices(self.grid_n)
        h = self.h
        M = (-h * h) * D2 + (h * h) * (self.kappa * np.sqrt(self.W))[:, None] * D1
        M = M.astype(complex)
        M[np.diag_indices_from(M)] += -self.E + 1j * h * self.W
        return M

    def apply(self, v: np.ndarray) -> np.ndarray:
        h = self.h
        v = np.asarray(v, dtype=complex)
        return (-h * h * spectral_derivative(v, 2) - self.E * v + 1j * h * self.W * v
                + h * h * self.kappa * np.sqrt(self.W) * spectral_derivative(v, 1))

    @classmethod
    def build(cls, h: float, E: float, W, theta: float, kappa="one", r=None,
              seed: int = 0, grid_n: Optional[int] = None) -> "ReducedProblem1D":
        """Convenience constructor; ``kappa`` is ``'one'``, ``'cos'`` or samples,
        ``r`` defaults to a random unit-norm forcing on the modes ``|k| <= 32``
        (white noise up to the grid Nyquist would make every quadrature
        identity an aliasing test)."""
        if isinstance(W, AveragedDamping):
            n = grid_n or W.grid_n
            W = _resample(W, n)
        W = np.asarray(W, dtype=float)
        n = len(W)
        x = collocation_grid(n)
        if isinstance(kappa, str):
            kappa = {"one": np.ones(n), "cos": 0.5 + 0.5 * np.cos(x)}[kappa]
        if r is None:
            r = random_forcing(n, seed=seed)
        return cls(h, E, W, kappa, r, theta)


def random_forcing(n: int, band: int = 32, seed: int = 0) -> np.ndarray:
    """Unit-norm random trigonometric polynomial of degree ``band``."""
    rng = np.random.default_rng(seed)
    m = 2 * band + 1
    # draw only the band so the same seed gives the same function on every grid
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    c = np.zeros(n, dtype=complex)
    c[np.arange(-band, band + 1) % n] = z
    r = np.fft.ifft(c)
    return r / l2_norm(r)


def solve_reduced(p: ReducedProblem1D) -> np.ndarray:
    """Collocation solution of the reduced equation (dense LU)."""
    if not np.any(p.W):
        # constant-coefficient case: diagonal in Fourier space
        k = wavenumbers_1d(p.grid_n)
        sym = p.h**2 * k * k - p.E
        if np.any(np.abs(sym) <= 1e-14 * max(1.0, abs(p.E))):
            raise SingularProblemError("E coincides with h^2 m^2: the operator is singular")
        return np.fft.ifft(np.fft.fft(p.r) / sym)
    M = p.matrix()
    lu, piv = sla.lu_factor(M, check_finite=False)
    rcond = sla.lapack.zgecon(lu, sla.norm(M, 1), norm="1")[0]
    if rcond < 1e-15:
        raise SingularProblemError(f"reduced operator is numerically singular (rcond={rcond:.1e})")
    return sla.lu_solve((lu, piv), p.r, check_finite=False)


def equation_residual(p: ReducedProblem1D, v: np.ndarray) -> float:
    """Relative residual ``||P v - r|| / ||r||`` of the discrete equation."""
    return l2_norm(p.matrix() @ v - p.r) / max(l2_norm(p.r), 1e-300)


# ---------------------------------------------------------------------------
# regimes


class Regime(enum.Enum):
    ELLIPTIC = "Elliptic"
    LOW_HYPERBOLIC = "LowHyperbolic"
    HIGH_HYPERBOLIC = "HighHyperbolic"


@dataclass(frozen=True)
class RegimeTag:
    regime: Regime
    c1: float
    delta: float
    lower: float
    upper: float

    @property
    def name(self) -> str:
        return self.regime.value


def classify_regime(h: float, E: float, c1: float = 1.0, delta: float = 1 / 7) -> RegimeTag:
    """Elliptic for ``E <= c1 h^2``, high hyperbolic for ``E > h^(1+delta)``,
    low hyperbolic in between."""
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    lower, upper = c1 * h * h, h ** (1 + delta)
    if E <= lower:
        reg = Regime.ELLIPTIC
    elif E <= upper:
        reg = Regime.LOW_HYPERBOLIC
    else:
        reg = Regime.HIGH_HYPERBOLIC
    return RegimeTag(reg, c1, delta, lower, upper)


# ---------------------------------------------------------------------------
# estimates and identities


def uniform_estimate_exponents(theta: float) -> tuple:
    """Powers of ``1/h`` in front of ``||r||`` and ``||W^(1/2) v||``."""
    return 2 + theta / (2 * theta + 1), (3 * theta + 1) / (2 * (2 * theta + 1))


def uniform_estimate_gain(p: ReducedProblem1D, v: np.ndarray) -> float:
    """``||v|| / (h^-e1 ||r|| + h^-e2 ||W^(1/2) v||)``; bounded in h and E when the
    uniform estimate holds."""
    e1, e2 = uniform_estimate_exponents(p.theta)
    denom = p.h ** (-e1) * l2_norm(p.r) + p.h ** (-e2) * l2_norm(np.sqrt(p.W) * v)
    return l2_norm(v) / denom


def weighted_identity_sides(p: ReducedProblem1D, v: np.ndarray, w: np.ndarray) -> tuple:
    """Both sides of the weighted energy identity for a real weight ``w``.

    Left: ``int w |h v'|^2 + int (-h^2 w''/2 - E w) |v|^2
    - (h^2/2) int (w kappa W^(1/2))' |v|^2``; right: ``Re int w r conj(v)``.
    The right side uses the forcing ``p.r``, so a ``v`` that does not solve
    the equation shows up as a residual.
    """
    w = np.asarray(w, dtype=float)
    h = p.h
    v = np.asarray(v, dtype=complex)
    D1, _ = differentiation_matrices(p.grid_n)
    dv = D1 @ v
    w2 = spectral_derivative(w, 2)
    drift = spectral_derivative(w * p.kappa * np.sqrt(p.W), 1)
    v2 = np.abs(v) ** 2
    lhs = (integrate(w * np.abs(h * dv) ** 2) + integrate((-0.5 * h * h * w2 - p.E * w) * v2)
           - 0.5 * h * h * integrate(drift * v2))
    rhs = np.real(integrate(w * p.r * np.conj(v)))
    return float(np.real(lhs)), float(rhs)


def weighted_identity_residual(p: ReducedProblem1D, v: np.ndarray, w=None,
                               eps: float = 1e-300) -> float:
    """``|LHS - RHS| / (|LHS| + |RHS| + eps)`` for the weighted energy identity."""
    if w is None:
        w = np.ones(p.grid_n)
    elif callable(w):
        w = w(p.x)
    lhs, rhs = weighted_identity_sides(p, v, w)
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + eps)


def apriori_identity_defects_1d(p: ReducedProblem1D, v: np.ndarray) -> tuple:
    """Relative defects of ``||v'||^2 - lam^2 ||v||^2 = Re <rt, v>`` and
    ``h^-1 <W v, v> = Im <rt, v>``, where ``rt = r/h^2 - kappa W^(1/2) v'``
    and ``lam^2 = E/h^2`` (any sign of E)."""
    D1, _ = differentiation_matrices(p.grid_n)
    v = np.asarray(v, dtype=complex)
    dv = D1 @ v
    r = p.matrix() @ v
    rt = r / p.h**2 - p.kappa * np.sqrt(p.W) * dv
    lam2 = p.E / p.h**2
    ip = inner(rt, v)
    a_lhs = l2_norm(dv) ** 2 - lam2 * l2_norm(v) ** 2
    b_lhs = float(np.real(integrate(p.W * np.abs(v) ** 2))) / p.h
    sa = max(abs(a_lhs), abs(ip.real), l2_norm(dv) ** 2, 1e-300)
    sb = max(abs(b_lhs), abs(ip.imag), 1e-300)
    return abs(a_lhs - ip.real) / sa, abs(b_lhs - ip.imag) / sb


# ---------------------------------------------------------------------------
# 1D resolvent


def _lambda_operator(W: np.ndarray, h: float, lam: float, kappa=None) -> np.ndarray:
    D1, D2 = differentiation_matrices(len(W))
    M = -D2.astype(complex)
    if kappa is not None:
        M += (np.asarray(kappa) * np.sqrt(W))[:, None] * D1
    M[np.diag_indices_from(M)] += -lam * lam + 1j * W / h
    return M


def _fd_operator(W: np.ndarray, h: float, lam: float, kappa=None):
    n = len(W)
    dx = TWO_PI / n
    e = np.ones(n)
    L = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
    L[0, n - 1] = 1.0
    L[n - 1, 0] = 1.0
    M = -L.tocsc() / dx**2 + sp.diags(-lam * lam + 1j * W / h)
    if kappa is not None:
        D = sp.diags([-e[:-1], e[:-1]], [-1, 1], format="lil")
        D[0, n - 1] = -1.0
        D[n - 1, 0] = 1.0
        M = M + sp.diags(np.asarray(kappa) * np.sqrt(W)) @ (D.tocsc() / (2 * dx))
    return M.tocsc()


def smallest_singular_value(M, n_block: int = 4, max_iter: int = 60, tol: float = 1e-12,
                            seed: int = 0) -> float:
    """``sigma_min`` by block inverse iteration on ``(M^* M)^-1`` with one LU.

    Works for dense arrays and sparse matrices alike.
    """
    n = M.shape[0]
    if sp.issparse(M):
        lu = spla.splu(M.tocsc())
        solve = lu.solve
        solve_h = lambda b: lu.solve(b, trans="H")
    else:
        fac = sla.lu_factor(M, check_finite=False)
        if np.any(np.diag(fac[0]) == 0):
            raise SingularProblemError("zero pivot in the reduced operator")
        solve = lambda b: sla.lu_solve(fac, b, check_finite=False)
        solve_h = lambda b: sla.lu_solve(fac, b, trans=2, check_finite=False)
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((n, n_block)) + 1j * rng.standard_normal((n, n_block)))[0]
    prev = 0.0
    for _ in range(max_iter):
        Y = solve(Q)
        s = np.linalg.svd(Y, compute_uv=False)[0]
        if abs(s - prev) <= tol * s:
            break
        prev = s
        Q = np.linalg.qr(solve_h(Y))[0]
    if not np.isfinite(s) or s == 0:
        raise SingularProblemError("reduced operator is singular")
    return 1.0 / s


def resolvent_1d_norm(h: float, lam: float, W: np.ndarray, kappa=None,
                      method: str = "spectral") -> float:
    """``||(-d^2 - lam^2 + i h^-1 W [+ kappa W^(1/2) d])^-1||`` on the collocation grid."""
    W = np.asarray(W, dtype=float)
    if not np.any(W) and kappa is None:
        k = wavenumbers_1d(len(W))
        d = np.abs(k * k - lam * lam)
        if np.min(d) == 0:
            raise SingularProblemError("lambda^2 is an eigenvalue of -d^2")
        return 1.0 / float(np.min(d))
    if method == "spectral":
        M = _lambda_operator(W, h, lam, kappa)
    elif method == "fd":
        M = _fd_operator(W, h, lam, kappa)
    else:
        raise ValueError(f"unknown method {method!r}")
    return 1.0 / smallest_singular_value(M)


def lambda_grid(h: float, delta: float, c1: float = 1.0, per_decade: int = 40) -> np.ndarray:
    """Log-spaced ``lambda`` in ``[sqrt(c1), h^-((1-delta)/2)]``."""
    lo, hi = math.sqrt(c1), h ** (-(1 - delta) / 2)
    if hi <= lo:
        return np.array([lo])
    m = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    return np.logspace(math.log10(lo), math.log10(hi), m)


@dataclass
class LambdaPeak:
    h: float
    lam: float
    norm: float
    scan: np.ndarray = field(repr=False, default=None)
    method: str = "spectral"


def maximize_resolvent_1d(h: float, W: np.ndarray, delta: float, c1: float = 1.0,
                          kappa=None, per_decade: int = 40, polish: str = "spectral"
                          ) -> LambdaPeak:
    """Largest 1D resolvent norm over the ``lambda`` grid.

    The grid scan and its single refinement (bounded Brent between the
    neighbours of the argmax) run on the sparse second-order difference
    operator, which is cheap and locates the same resonance. The peak is then
    re-evaluated with the spectral operator: ``sigma_min^2`` is close to a
    parabola in ``lambda^2`` near a resonance, so three spectral evaluations
    place the vertex, which is evaluated last. The largest spectral value is
    returned. ``polish=None`` keeps the difference-operator value.
    """
    W = np.asarray(W, dtype=float)
    lams = lambda_grid(h, delta, c1, per_decade)
    f = lambda l: resolvent_1d_norm(h, l, W, kappa, method="fd")
    vals = np.array([f(l) for l in lams])
    i = int(np.argmax(vals))
    lo, hi = lams[max(i - 1, 0)], lams[min(i + 1, len(lams) - 1)]
    lam, best = lams[i], vals[i]
    if hi > lo:
        opt = minimize_scalar(lambda l: -f(l), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-9 * hi})
        if -opt.fun > best:
            lam, best = float(opt.x), float(-opt.fun)
    scan = np.column_stack([lams, vals])
    if polish is None:
        return LambdaPeak(h, lam, best, scan, "fd")
    # spectral polish in s = lambda^2 around the located peak
    g = lambda l: resolvent_1d_norm(h, l, W, kappa, method="spectral")
    s0 = lam * lam
    ds = max(1.0 / best, 1e-9 * s0)
    ss = np.array([s0 - ds, s0, s0 + ds])
    ss = ss[ss > 0]
    nv = [g(math.sqrt(s)) for s in ss]
    cands = list(zip(ss, nv))
    if len(ss) == 3:
        y = 1.0 / np.array(nv) ** 2
        c2, c1_, _ = np.polyfit(ss - s0, y, 2)
        if c2 > 0:
            sv = s0 - c1_ / (2 * c2)
            if ss[0] <= sv <= ss[-1] and sv > 0:
                cands.append((sv, g(math.sqrt(sv))))
    s_best, n_best = max(cands, key=lambda c: c[1])
    return LambdaPeak(h, math.sqrt(s_best), float(n_best), scan, "spectral")


@dataclass
class Sweep1D:
    peaks: list
    fit: FitReport
    predicted: float
    quantity: str

    @property
    def points(self):
        return [(p.h, p.norm) for p in self.peaks]

    def rows(self) -> list:
        return [{"h": p.h, "lambda": p.lam, "norm": p.norm, "method": p.method}
                for p in self.peaks]


def resolvent_1d_sweep(W: np.ndarray, h_list: Sequence, gamma: float, c1: float = 1.0,
                       kappa=None, tolerance: float = 0.02, polish: str = "spectral") -> Sweep1D:
    """Peak 1D resolvent norm per ``h``; slope of its log against ``log(1/h)``.

    The predicted slope is ``1/(gamma + 2)``.
    """
    delta = 1.0 / (gamma + 2)
    peaks = [maximize_resolvent_1d(h, W, delta, c1, kappa, polish=polish)
             for h in sorted(h_list, reverse=True)]
    fit = loglog_fit([(1 / p.h, p.norm) for p in peaks], predicted=delta, tolerance=tolerance)
    return Sweep1D(peaks, fit, delta, "max_lambda ||(-d^2 - lambda^2 + i W/h)^-1||")


def reduced_quasimode_sweep(W: np.ndarray, h_list: Sequence, gamma: float, kappa=None,
                            c1: float = 1.0, tolerance: float = 0.03) -> Sweep1D:
    """Smallest singular value of ``h^2 (-d^2 - lambda^2 + i W/h + kappa W^(1/2) d)``
    minimised over ``lambda``; the fit is of ``1/sigma_min`` so the predicted
    slope is ``2 + 1/(gamma + 2)``."""
    n = len(W)
    if kappa is None:
        kappa = np.ones(n)
    delta = 1.0 / (gamma + 2)
    peaks = []
    for h in sorted(h_list, reverse=True):
        pk = maximize_resolvent_1d(h, W, delta, c1, kappa)
        # sigma_min of the h^2-scaled operator is h^2 / ||resolvent||
        pk.norm = pk.norm / h**2
        peaks.append(pk)
    pred = 2 + delta
    fit = loglog_fit([(1 / p.h, p.norm) for p in peaks], predicted=pred, tolerance=tolerance)
    return Sweep1D(peaks, fit, pred, "1 / min_lambda sigma_min(h^2 (reduced operator))")


# ---------------------------------------------------------------------------
# geometric control


def geometric_control_check(v: np.ndarray, lam: float, f1: np.ndarray, f2: np.ndarray,
                            interval: tuple) -> float:
    """``||v|| / (lam^-1 ||f1|| + ||f2||_{H^-1} + ||v||_{L^2(I)})``."""
    v = np.asarray(v, dtype=complex)
    x = collocation_grid(len(v))
    a, b = interval
    if b - a >= TWO_PI:
        mask = np.ones(len(v), dtype=bool)
    else:
        mask = ((x - a) % TWO_PI) < (b - a)
    vI = math.sqrt(float(integrate(np.abs(v) ** 2 * mask)))
    return l2_norm(v) / (l2_norm(f1) / lam + hminus1_norm(np.asarray(f2)) + vI)


# ---------------------------------------------------------------------------
# Morawetz weights


def cutoff_chi(s):
    """Smooth cutoff: 1 for ``s <= 1``, 0 for ``s >= 2``."""
    return 1.0 - smooth_step(np.asarray(s, dtype=float) - 1.0)


@dataclass
class MorawetzWeights:
    x: np.ndarray
    h: float
    delta: float
    intervals: list
    epsilons: list
    V0: np.ndarray
    chi_h: np.ndarray
    Psi_h: np.ndarray
    Phi_h: np.ndarray
    Theta: np.ndarray
    M: float
    sigma: float

    @property
    def phi_sup(self) -> float:
        return float(np.max(np.abs(self.Phi_h)))

    @property
    def psi_integral(self) -> float:
        return float(integrate(self.Psi_h))

    @property
    def periodicity_defect(self) -> float:
        """Jump of the primitive across the period."""
        dx = TWO_PI / len(self.x)
        return abs(self.Phi_h[-1] + self.Psi_h[-1] * dx - self.Phi_h[0])

    def energy_density(self, v: np.ndarray, lam: float) -> np.ndarray:
        """``e0 = |v1'|^2 + lam^2 |v1|^2`` with ``v1 = chi_h v``."""
        v1 = self.chi_h * v
        return np.abs(spectral_derivative(v1)) ** 2 + lam * lam * np.abs(v1) ** 2


def build_morawetz_weights(intervals: Sequence, h: float, delta: float,
                           epsilons: Optional[Sequence] = None, grid_n: int = 4096
                           ) -> MorawetzWeights:
    """The cutoff ``chi_h``, the piecewise weight ``Psi_h`` and its primitive.

    ``Psi_h`` is ``h^-delta`` on the shells of width ``2 pi h^delta`` inside
    each damped interval, 1 on the collars up to ``epsilon_j`` and outside the
    intervals, and ``-M`` in the core, with ``M`` set so that ``Psi_h``
    integrates to zero under the grid quadrature; ``Phi_h`` is then periodic
    and normalised by ``Phi_h(0) = 0``.
    """
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    if not ivs:
        raise ValueError("need at least one interval")
    for a, b in ivs:
        if not -np.pi <= a < b <= np.pi:
            raise ValueError("intervals must lie in [-pi, pi]")
    for (a0, b0), (a1, b1) in zip(ivs, ivs[1:]):
        if a1 < b0:
            raise ValueError("intervals overlap")
    shell = TWO_PI * h**delta
    if epsilons is None:
        epsilons = [0.5 * (shell + 0.5 * (b - a)) for a, b in ivs]
    for (a, b), e in zip(ivs, epsilons):
        if not shell < e < 0.5 * (b - a):
            raise ValueError("each epsilon must exceed the shell width 2 pi h^delta "
                             "and stay below half the interval length")
    x = collocation_grid(grid_n)
    V0 = np.zeros(grid_n)
    for a, b in ivs:
        V0 += np.maximum(0.0, (x - a) * (b - x))
    chi_h = cutoff_chi(V0**3 / h ** (3 * delta))
    Psi = np.ones(grid_n)
    core = np.zeros(grid_n, dtype=bool)
    for (a, b), e in zip(ivs, epsilons):
        Psi[((x > a) & (x < a + shell)) | ((x > b - shell) & (x < b))] = h ** (-delta)
        core |= (x >= a + e) & (x <= b - e)
    M = float(np.sum(Psi[~core]) / np.count_nonzero(core))
    Psi[core] = -M
    dx = TWO_PI / grid_n
    Phi = np.concatenate([[0.0], np.cumsum(Psi[:-1]) * dx])
    Phi -= Phi[grid_n // 2]  # node x = 0
    Theta = Psi * (Psi > 0)
    # chi_h is 1 up to V0 = h^delta; measure that distance from the edge in units of h^delta
    L = ivs[0][1] - ivs[0][0]
    hd = h**delta
    inner_edge = 0.5 * (L - math.sqrt(max(L * L - 4 * hd, 0.0)))
    return MorawetzWeights(x, h, delta, ivs, list(epsilons), V0, chi_h, Psi, Phi, Theta, M,
                           inner_edge / hd)


def morawetz_sides(mw: MorawetzWeights, v: np.ndarray, lam: float, W: np.ndarray,
                   r: np.ndarray) -> dict:
    """Both sides of the Morawetz inequality for ``v`` solving
    ``-v'' - lam^2 v + i W v / h = r``.

    ``v1 = chi_h v`` solves the same equation with ``rt = chi_h r - 2 (chi_h' v)'
    + chi_h'' v``; the returned constant is ``lhs / (damping + forcing)``.
    """
    h = mw.h
    chi = mw.chi_h
    c1 = spectral_derivative(chi, 1)
    c2 = spectral_derivative(chi, 2)
    v = np.asarray(v, dtype=complex)
    v1 = chi * v
    dv1 = spectral_derivative(v1)
    rt = chi * r - 2 * spectral_derivative(c1 * v) + c2 * v
    lhs = float(np.real(integrate(mw.Psi_h * (np.abs(dv1) ** 2 + lam * lam * np.abs(v1) ** 2))))
    damping = abs(integrate(mw.Phi_h * W * v1 * np.conj(dv1))) / h
    forcing = abs(np.real(integrate(mw.Phi_h * np.conj(dv1) * rt)))
    return {"lhs": lhs, "damping": damping, "forcing": forcing,
            "constant": lhs / max(damping + forcing, 1e-300)}


__all__ = [
    "GRID_MIN", "LambdaPeak", "MorawetzWeights", "ReducedProblem1D", "Regime", "RegimeTag",
    "SingularProblemError", "Sweep1D", "apriori_identity_defects_1d", "averaged_profile_on_grid",
    "build_morawetz_weights", "classify_regime", "collocation_grid", "cutoff_chi",
    "differentiation_matrices", "equation_residual", "geometric_control_check", "hminus1_norm",
    "inner", "integrate", "random_forcing", "l2_norm", "lambda_grid", "maximize_resolvent_1d", "morawetz_sides",
    "reduced_quasimode_sweep", "resolvent_1d_norm", "resolvent_1d_sweep", "smallest_singular_value",
    "solve_reduced", "spectral_derivative", "uniform_estimate_exponents", "uniform_estimate_gain",
    "weighted_identity_residual", "weighted_identity_sides", "wavenumbers_1d",
]
