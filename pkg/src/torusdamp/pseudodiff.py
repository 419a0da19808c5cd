"""Fourier multipliers, multiplications and the first normal-form generator.

Functions on T^2 are truncated to modes ``|k_x|, |k_y| <= K`` and stored as
coefficients in the orthonormal basis ``e_k(z) = exp(i k.z) / (2 pi)``, so the
Euclidean norm of the coefficients is the L^2 norm. The matching real-space
grid has ``N = 2K + 1`` nodes ``-pi + 2 pi j / N`` per axis; a multiplication
operator is a pointwise product on that grid, which in coefficient space is a
circular convolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, expm_multiply

from .averaging import primitive_A
from .damping import TWO_PI, DampingProfile
from .fitting import FitReport, loglog_fit

DENSE_MAX_K = 35


class MicrolocalizationError(ValueError):
    pass


def grid_nodes(K: int) -> np.ndarray:
    N = 2 * K + 1
    return -np.pi + TWO_PI * np.arange(N) / N


def wavenumbers(K: int) -> np.ndarray:
    """Centred mode indices -K..K."""
    return np.arange(-K, K + 1)


def _phase(K: int) -> np.ndarray:
    # nodes start at -pi, so the DFT picks up exp(i k pi) = (-1)^k
    return (-1.0) ** np.abs(wavenumbers(K))


def samples_to_coefficients(u: np.ndarray) -> np.ndarray:
    """Grid samples (N x N, 'ij' indexing) to centred orthonormal coefficients."""
    N = u.shape[0]
    K = (N - 1) // 2
    c = np.fft.fftshift(np.fft.fft2(u)) * (TWO_PI / N**2)
    p = _phase(K)
    return c * p[:, None] * p[None, :]


def coefficients_to_samples(c: np.ndarray) -> np.ndarray:
    N = c.shape[0]
    K = (N - 1) // 2
    p = _phase(K)
    return np.fft.ifft2(np.fft.ifftshift(c * p[:, None] * p[None, :])) * (N**2 / TWO_PI)


@dataclass
class FourierField2D:
    coefficients: np.ndarray
    K: int
    h: Optional[float] = None

    def __post_init__(self):
        N = 2 * self.K + 1
        self.coefficients = np.asarray(self.coefficients, dtype=complex).reshape(N, N)

    @classmethod
    def from_samples(cls, u, h=None) -> "FourierField2D":
        u = np.asarray(u)
        return cls(samples_to_coefficients(u), (u.shape[0] - 1) // 2, h)

    def samples(self) -> np.ndarray:
        return coefficients_to_samples(self.coefficients)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "FourierField2D":
        return FourierField2D(self.coefficients / self.norm(), self.K, self.h)

    @property
    def vector(self) -> np.ndarray:
        return self.coefficients.ravel()


# ---------------------------------------------------------------------------
# cutoffs


def smooth_step(t):
    """C^infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        f1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1 - t, 1.0)), 0.0)
    return f0 / (f0 + f1)


@dataclass(frozen=True)
class CutoffPsi1:
    """Even bump equal to 1 on ``||eta| - 1| <= inner`` and 0 beyond ``outer``."""

    inner: float = 0.25
    outer: float = 0.5

    def __call__(self, eta):
        d = np.abs(np.abs(np.asarray(eta, dtype=float)) - 1.0)
        return 1.0 - smooth_step((d - self.inner) / (self.outer - self.inner))


def plateau_cutoff(width: float = 1.0, edge: float = 0.5) -> Callable:
    """Even cutoff equal to 1 on ``|xi| <= width`` and 0 beyond ``width + edge``."""
    return lambda xi: 1.0 - smooth_step((np.abs(np.asarray(xi, dtype=float)) - width) / edge)


# ---------------------------------------------------------------------------
# operators on the truncated basis


class TruncatedOperator:
    """Linear operator on coefficient arrays of a fixed truncation ``K``."""

    def __init__(self, K: int, apply: Callable, dense: Optional[Callable] = None):
        self.K = K
        self.N = 2 * K + 1
        self._apply = apply
        self._dense = dense

    @property
    def size(self) -> int:
        return self.N**2

    def __call__(self, c: np.ndarray) -> np.ndarray:
        shape = np.shape(c)
        return self._apply(np.asarray(c, dtype=complex).reshape(self.N, self.N)).reshape(shape)

    def matvec(self, v):
        return self(v.reshape(self.N, self.N)).ravel()

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense()
        eye = np.eye(self.size, dtype=complex)
        return np.column_stack([self.matvec(eye[:, j]) for j in range(self.size)])

    def as_linear_operator(self, hermitian: bool = False) -> LinearOperator:
        return LinearOperator((self.size, self.size), matvec=self.matvec,
                              rmatvec=self.matvec if hermitian else None, dtype=complex)

    def __add__(self, other):
        return TruncatedOperator(self.K, lambda c: self._apply(c) + other._apply(c),
                                 lambda: self.to_dense() + other.to_dense())

    def __sub__(self, other):
        return TruncatedOperator(self.K, lambda c: self._apply(c) - other._apply(c),
                                 lambda: self.to_dense() - other.to_dense())

    def __matmul__(self, other):
        return TruncatedOperator(self.K, lambda c: self._apply(other._apply(c)),
                                 lambda: self.to_dense() @ other.to_dense())

    def scale(self, s: complex):
        return TruncatedOperator(self.K, lambda c: s * self._apply(c),
                                 lambda: s * self.to_dense())


def fourier_multiplier(phi: Callable, axis: str, h: float, K: int) -> TruncatedOperator:
    """Diagonal operator multiplying mode ``(k_x, k_y)`` by ``phi(h k_axis)``."""
    if K < 4:
        raise ValueError("K must be at least 4")
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    k = wavenumbers(K)
    d = np.asarray(phi(h * k), dtype=complex) * np.ones(len(k))
    diag = d[:, None] * np.ones((1, len(k))) if axis == "x" else np.ones((len(k), 1)) * d[None, :]
    return TruncatedOperator(K, lambda c: diag * c, lambda: np.diag(diag.ravel()))


def convolution_matrix(f: np.ndarray) -> np.ndarray:
    """Dense matrix of u -> f u in centred coefficient order."""
    N = f.shape[0]
    K = (N - 1) // 2
    # coefficients of f in the plain DFT normalization (no 2 pi factor)
    fhat = np.fft.fft2(f) / N**2
    idx = wavenumbers(K)
    diff = idx[:, None] - idx[None, :]
    dk = diff % N
    M = fhat[dk[:, None, :, None], dk[None, :, None, :]]
    # phase of the -pi node offset: (-1)^(k - l) per axis
    s = (-1.0) ** diff
    M = M * s[:, None, :, None] * s[None, :, None, :]
    return M.reshape(N * N, N * N)


def multiplication_operator(f: np.ndarray) -> TruncatedOperator:
    """The operator u -> f u realised on the grid."""
    f = np.asarray(f)
    N = f.shape[0]
    K = (N - 1) // 2

    def apply(c):
        return samples_to_coefficients(f * coefficients_to_samples(c))

    return TruncatedOperator(K, apply, lambda: convolution_matrix(f))


def laplacian_symbol(K: int) -> np.ndarray:
    k = wavenumbers(K)
    return (k[:, None] ** 2 + k[None, :] ** 2).astype(float)


def stationary_operator(a_samples: np.ndarray, h: float) -> TruncatedOperator:
    """P_h + i h a = -h^2 Delta - 1 + i h a."""
    N = a_samples.shape[0]
    K = (N - 1) // 2
    lap = laplacian_symbol(K)
    P = TruncatedOperator(K, lambda c: (h**2 * lap - 1) * c,
                          lambda: np.diag((h**2 * lap - 1).ravel()).astype(complex))
    return P + multiplication_operator(a_samples).scale(1j * h)


# ---------------------------------------------------------------------------
# normal form


@dataclass
class NormalFormGenerator:
    """G_h = b(hD_y) A + A b(hD_y) with b(eta) = -psi_1(eta) / (4 eta)."""

    K: int
    h: float
    b_diag: np.ndarray
    A_samples: np.ndarray
    avg_samples: np.ndarray

    @property
    def operator(self) -> TruncatedOperator:
        B = TruncatedOperator(self.K, lambda c: self.b_diag[None, :] * c)
        MA = multiplication_operator(self.A_samples)
        return B @ MA + MA @ B

    def dense(self) -> np.ndarray:
        MA = convolution_matrix(self.A_samples)
        b = np.tile(self.b_diag, self.K * 2 + 1)
        return b[:, None] * MA + MA * b[None, :]

    def norm(self, dense: Optional[bool] = None) -> float:
        if dense is None:
            dense = self.K <= 24
        if dense:
            return float(np.max(np.abs(np.linalg.eigvalsh(self.dense()))))
        return _hermitian_norm(self.operator)


def _hermitian_norm(op: TruncatedOperator, iters: int = 200, tol: float = 1e-10) -> float:
    from scipy.sparse.linalg import eigsh
    vals = eigsh(op.as_linear_operator(hermitian=True), k=1, which="LM", tol=tol,
                 maxiter=iters * 10, return_eigenvectors=False)
    return float(abs(vals[0]))


def symbol_b(psi1: CutoffPsi1 = CutoffPsi1()) -> Callable:
    def b(eta):
        eta = np.asarray(eta, dtype=float)
        out = np.zeros_like(eta)
        nz = eta != 0
        out[nz] = -psi1(eta[nz]) / (4 * eta[nz])
        return out

    return b


def required_K(h: float, psi1: CutoffPsi1 = CutoffPsi1()) -> int:
    """Smallest K whose modes cover the support of psi_1(h k_y)."""
    return math.ceil((1 + psi1.outer) / h)


def build_generator(a: DampingProfile, h: float, K: int, psi1: CutoffPsi1 = CutoffPsi1()
                    ) -> NormalFormGenerator:
    """Assemble G_h from the primitive of ``a`` on the (2K+1)^2 grid."""
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    need = math.ceil(2 / h)
    if K < need:
        raise MicrolocalizationError(f"K={K} too small for h={h}: need K >= {need}")
    x = grid_nodes(K)
    P = primitive_A_on_grid(a, K)
    b = symbol_b(psi1)(h * wavenumbers(K))
    return NormalFormGenerator(K=K, h=h, b_diag=b, A_samples=P[0], avg_samples=P[1])


def primitive_A_on_grid(a: DampingProfile, K: int, oversample: int = 16):
    """A(x, y) and A(a)(x) sampled on the (2K+1)^2 grid.

    The primitive is integrated on a y-grid ``oversample`` times finer than
    the operator grid and then restricted, so its accuracy does not depend on
    K.
    """
    N = 2 * K + 1
    x = grid_nodes(K)
    n_y = max(256, oversample * N)
    n_y -= n_y % N
    P = primitive_A(a, grid=(N, n_y), x=x, derivatives=0)
    step = n_y // N
    return P.values[:, :-1:step], np.repeat(P.average[:, None], N, axis=1)


def matrix_exponential(M: np.ndarray) -> np.ndarray:
    """Dense exponential by Pade scaling and squaring (scipy)."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return sla.expm(M)


def hermitian_exponential(M: np.ndarray, s: float = 1.0) -> np.ndarray:
    """exp(s M) for Hermitian M from its eigendecomposition; the oracle for the Pade route."""
    w, V = np.linalg.eigh(M)
    return (V * np.exp(s * w)) @ V.conj().T


def exp_action(op: TruncatedOperator, v: np.ndarray, s: float = 1.0, trace: float = 0.0
               ) -> np.ndarray:
    """exp(s G) v for Hermitian G without forming G (truncated Taylor series with scaling)."""
    L = op.as_linear_operator(hermitian=True)
    return expm_multiply(s * L, v.ravel(), traceA=s * trace).reshape(np.shape(v))


def make_probe(h: float, K: int, hbar: Optional[float] = None, center=(0.0, 0.0)
               ) -> FourierField2D:
    """Normalized smooth bump in frequency on ``|h k_y - 1| <= 1/8``, ``|hbar k_x| <= 1``.

    ``center`` shifts the probe in space through a phase.
    """
    hbar = math.sqrt(h) if hbar is None else hbar
    k = wavenumbers(K)

    def bump(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        m = np.abs(t) < 1
        out[m] = np.exp(-1.0 / (1 - t[m] ** 2))
        return out

    cx = bump(hbar * k)
    cy = bump(8 * (h * k - 1))
    c = cx[:, None] * cy[None, :]
    c = c * np.exp(-1j * (k[:, None] * center[0] + k[None, :] * center[1]))
    if not np.any(c):
        raise MicrolocalizationError("probe window contains no modes")
    return FourierField2D(c, K, h).normalized()


def check_microlocalized(w: FourierField2D, h: float, hbar: Optional[float] = None,
                         tol: float = 1e-14) -> bool:
    hbar = math.sqrt(h) if hbar is None else hbar
    k = wavenumbers(w.K)
    inside = (np.abs(hbar * k)[:, None] <= 1) & (np.abs(h * k - 1)[None, :] <= 0.125)
    outside = np.abs(w.coefficients[~inside])
    return bool(outside.size == 0 or outside.max() <= tol * np.abs(w.coefficients).max())


def conjugation_residual(a: DampingProfile, h: float, K: int, probe: FourierField2D,
                         dense: Optional[bool] = None, psi1: CutoffPsi1 = CutoffPsi1()
                         ) -> float:
    """Norm of e^G (P + i h a) e^-G w - (P + i h A(a) - [h^2 D_x^2, G]) w.

    ``dense`` selects explicit matrix exponentials (default when K is small
    enough); otherwise the exponentials act on the probe through a Krylov
    Taylor scheme.
    """
    if not check_microlocalized(probe, h):
        raise MicrolocalizationError("probe is not supported in the microlocal window")
    if probe.K != K:
        raise ValueError("probe truncation differs from K")
    gen = build_generator(a, h, K, psi1)
    x = grid_nodes(K)
    X, Y = np.meshgrid(x, x, indexing="ij")
    a_s = a(X, Y)
    L = stationary_operator(a_s, h)
    L_avg = stationary_operator(gen.avg_samples, h)
    kx2 = (wavenumbers(K) ** 2).astype(float)
    Dx2 = TruncatedOperator(K, lambda c: h**2 * kx2[:, None] * c,
                            lambda: np.diag(np.repeat(h**2 * kx2, 2 * K + 1)).astype(complex))
    G = gen.operator
    comm = Dx2 @ G - G @ Dx2
    w = probe.coefficients
    if dense is None:
        dense = K <= DENSE_MAX_K
    if dense:
        Gd = gen.dense()
        Ep, Em = matrix_exponential(Gd), matrix_exponential(-Gd)
        lhs = Ep @ L.matvec(Em @ w.ravel())
    else:
        lhs = exp_action(G, L(exp_action(G, w, -1.0)), 1.0).ravel()
    rhs = (L_avg - comm)(w).ravel()
    return float(np.linalg.norm(lhs - rhs))


def residual_sweep(a: DampingProfile, hs, K_rule: Callable = lambda h: math.ceil(2 / h) + 4,
                   dense: Optional[bool] = None):
    """Residuals over ``hs`` with the default probe; returns rows and the log-log fit."""
    rows = []
    for h in hs:
        K = K_rule(h)
        r = conjugation_residual(a, h, K, make_probe(h, K), dense=dense)
        rows.append((h, K, r))
    fit = loglog_fit([(h, r) for h, _, r in rows], min_points=3)
    return rows, fit


def commutator_norm(psi: Callable, hbar: float, f: np.ndarray, axis: str = "x") -> float:
    """Operator norm of [psi(hbar D_axis), f] on the truncated basis (dense)."""
    N = f.shape[0]
    K = (N - 1) // 2
    Q = fourier_multiplier(psi, axis, hbar, K).to_dense()
    M = convolution_matrix(f)
    return float(np.linalg.norm(Q @ M - M @ Q, 2))


def commutator_scaling(psi: Callable, f_func: Callable, hbars, K: int,
                       x_only: bool = True) -> FitReport:
    """Fit ||[psi(hbar D_x), f]|| against hbar.

    For ``x_only`` profiles the operator is block diagonal in k_y with equal
    blocks, so a single (2K+1) block gives the full norm.
    """
    x = grid_nodes(K)
    pts = []
    for hb in hbars:
        if x_only:
            fx = np.asarray(f_func(x, np.zeros_like(x)), dtype=float)
            k = wavenumbers(K)
            Q = np.diag(psi(hb * k)).astype(complex)
            fhat = np.fft.fft(fx) / len(x)
            diff = k[:, None] - k[None, :]
            M = fhat[diff % len(x)] * (-1.0) ** diff
            pts.append((hb, float(np.linalg.norm(Q @ M - M @ Q, 2))))
        else:
            X, Y = np.meshgrid(x, x, indexing="ij")
            pts.append((hb, commutator_norm(psi, hb, f_func(X, Y))))
    return loglog_fit(pts, min_points=3)


__all__ = [
    "CutoffPsi1", "FourierField2D", "MicrolocalizationError", "NormalFormGenerator",
    "TruncatedOperator", "build_generator", "check_microlocalized", "coefficients_to_samples",
    "commutator_norm", "commutator_scaling", "conjugation_residual", "convolution_matrix",
    "exp_action", "fourier_multiplier", "grid_nodes", "hermitian_exponential",
    "laplacian_symbol", "make_probe", "matrix_exponential", "multiplication_operator",
    "plateau_cutoff", "residual_sweep", "samples_to_coefficients", "smooth_step",
    "stationary_operator", "symbol_b", "wavenumbers",
]
