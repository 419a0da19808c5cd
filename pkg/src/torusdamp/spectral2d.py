"""The stationary damped operator on T^2 and its resolvent norm.

``P_h + i h a = -h^2 Delta - 1 + i h a`` acts on truncated Fourier
coefficients (see :mod:`torusdamp.pseudodiff` for the basis and grid). The
resolvent norm is ``1 / sigma_min``; it is computed either by a dense SVD or
by Lanczos iteration on ``(P^* P)^{-1}`` whose inner solves use GMRES with a
frequency-shell preconditioner.

The preconditioner treats modes near the unit shell ``|h k| ~ 1`` exactly
(a dense Schur complement) and replaces the damping coupling among the
remaining modes by nothing, which leaves an error of relative size
``h max(a) / tau`` where ``tau`` is the shell half-width.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh, gmres

from .damping import DampingKind, DampingProfile
from .fitting import FitReport, loglog_fit
from .pseudodiff import (FourierField2D, coefficients_to_samples, convolution_matrix,
                         grid_nodes, samples_to_coefficients, wavenumbers)

DENSE_SVD_MAX_K = 48
GENERATOR_MAX_K = 24


class SingularOperatorError(ArithmeticError):
    pass


class ConvergenceError(RuntimeError):
    """Iteration limit reached; carries the best estimate so far."""

    def __init__(self, msg, best_estimate=None, residual=None):
        super().__init__(msg)
        self.best_estimate = best_estimate
        self.residual = residual


def predicted_exponent(damping: DampingProfile) -> float:
    """2 + 2/(2 beta + 5) for a disk, 2 + 1/(gamma + 2) for a strip."""
    if damping.kind is DampingKind.DISK:
        return 2 + 2 / (2 * damping.params.beta + 5)
    if damping.kind is DampingKind.STRIP:
        return 2 + 1 / (damping.gamma + 2)
    raise ValueError("no predicted exponent for custom dampings")


def default_K(h: float) -> int:
    return math.ceil(4 / h)


class StationaryOperator:
    """``-h^2 Delta - z + i h a`` on modes ``|k_x|, |k_y| <= K``.

    The spectral parameter ``z`` (``shift``) is 1 for the operator proper;
    other values probe the resolvent at nearby frequencies.
    """

    def __init__(self, h: float, damping: DampingProfile, K: int, shift: float = 1.0):
        if not h > 0:
            raise ValueError("h must be positive")
        self.h = float(h)
        self.K = int(K)
        self.N = 2 * self.K + 1
        self.damping = damping
        self.shift = float(shift)
        x = grid_nodes(self.K)
        X, Y = np.meshgrid(x, x, indexing="ij")
        self.a = np.asarray(damping(X, Y), dtype=float)
        k = wavenumbers(self.K)
        self.laplace = self.h**2 * (k[:, None] ** 2 + k[None, :] ** 2)
        self.diag = self.laplace - self.shift

    def shifted(self, shift: float) -> "StationaryOperator":
        """Same operator at another spectral parameter, sharing the samples."""
        new = object.__new__(StationaryOperator)
        new.__dict__.update(self.__dict__)
        new.shift = float(shift)
        new.diag = self.laplace - new.shift
        return new

    @property
    def size(self) -> int:
        return self.N**2

    def _damp(self, c):
        c = np.asarray(c).reshape(self.N, self.N)
        return samples_to_coefficients(self.a * coefficients_to_samples(c))

    def apply(self, u):
        """(P + i h a) u for a FourierField2D or a coefficient array."""
        if isinstance(u, FourierField2D):
            if u.K != self.K:
                raise ValueError(f"truncation mismatch: field K={u.K}, operator K={self.K}")
            return FourierField2D(self.apply(u.coefficients), self.K, self.h)
        c = np.asarray(u, dtype=complex).reshape(self.N, self.N)
        return self.diag * c + 1j * self.h * self._damp(c)

    def apply_adjoint(self, c):
        c = np.asarray(c, dtype=complex).reshape(self.N, self.N)
        return self.diag * c - 1j * self.h * self._damp(c)

    def to_dense(self) -> np.ndarray:
        M = 1j * self.h * convolution_matrix(self.a)
        M[np.diag_indices_from(M)] += self.diag.ravel()
        return M

    def linear_operator(self, adjoint: bool = False) -> LinearOperator:
        f = self.apply_adjoint if adjoint else self.apply
        return LinearOperator((self.size, self.size), dtype=complex,
                              matvec=lambda v: f(v).ravel())

    @property
    def is_undamped(self) -> bool:
        return not np.any(self.a)


def apply_operator(op: StationaryOperator, u: FourierField2D) -> FourierField2D:
    return op.apply(u)


# ---------------------------------------------------------------------------
# preconditioner


def _damp_batch(op: StationaryOperator, c: np.ndarray) -> np.ndarray:
    """``a u`` for a stack of coefficient arrays, transforming over the last two axes."""
    N = op.N
    K = op.K
    p = (-1.0) ** np.abs(wavenumbers(K))
    ph = p[:, None] * p[None, :]
    u = sfft.ifft2(np.fft.ifftshift(c * ph, axes=(-2, -1)), overwrite_x=True)
    u *= op.a
    return np.fft.fftshift(sfft.fft2(u, overwrite_x=True), axes=(-2, -1)) * ph


class ShellPreconditioner:
    """Block elimination with the far-from-shell damping coupling dropped.

    Solves ``[[P_SS, P_SF], [P_FS, D_F]] x = r`` exactly, where S is the set
    of modes with ``|h^2 |k|^2 - z| <= tau`` and ``D_F`` the diagonal of P on
    the remaining modes. ``min_tau`` widens the shell, e.g. to cover a window
    of spectral parameters when the preconditioner is reused across shifts.
    """

    def __init__(self, op: StationaryOperator, max_shell: int = 2500, width: float = 4.0,
                 min_tau: float = 1e-3):
        self.op = op
        d = op.diag.ravel()
        amax = float(np.max(np.abs(op.a)))
        tau = max(width * op.h * amax, min_tau)
        order = np.argsort(np.abs(d))
        n_in = int(np.count_nonzero(np.abs(d) <= tau))
        n_in = min(max(n_in, 1), max_shell, op.size)
        self.S = np.sort(order[:n_in])
        mask = np.zeros(op.size, dtype=bool)
        mask[self.S] = True
        self.F = np.flatnonzero(~mask)
        self.tau = float(np.abs(d[order[n_in - 1]]))
        self.dF = d[self.F]
        if np.any(self.dF == 0):
            raise SingularOperatorError("zero diagonal entry outside the shell")
        N = op.N
        self._ahat = np.fft.fft2(op.a) / N**2
        self._k = wavenumbers(op.K)
        # Schur complement P_SS - P_SF D_F^-1 P_FS; the columns of the damping
        # block are gathered directly, only the back-coupling needs transforms
        self.schur = self._block(self.S, self.S)
        for start in range(0, n_in, 64):
            idx = self.S[start:start + 64]
            Z = self._block(None, idx).T
            Z[:, self.S] = 0.0
            Z[:, self.F] /= self.dF
            self.schur[:, start:start + len(idx)] -= self._couple(Z)[:, self.S].T
        self.schur[np.arange(n_in), np.arange(n_in)] += d[self.S]
        self.lu = sla.lu_factor(self.schur)

    def _block(self, rows, cols):
        """Entries of ``i h a`` in coefficient space; ``rows=None`` means all."""
        N, k = self.op.N, self._k
        r = np.arange(N * N) if rows is None else rows
        r1, r2 = k[r // N], k[r % N]
        c1, c2 = k[cols // N], k[cols % N]
        d1 = r1[:, None] - c1[None, :]
        d2 = r2[:, None] - c2[None, :]
        sign = 1.0 - 2.0 * ((d1 + d2) & 1)
        return 1j * self.op.h * self._ahat[d1 % N, d2 % N] * sign

    def _couple(self, V):
        """Rows of V mapped by the damping part i h a (batched)."""
        op = self.op
        N = op.N
        c = V.reshape(-1, N, N)
        out = np.stack([op._damp(ci) for ci in c]) if c.shape[0] < 2 else _damp_batch(op, c)
        return (1j * op.h * out).reshape(V.shape)

    def _embed(self, xS=None, yF=None):
        v = np.zeros(self.op.size, dtype=complex)
        if xS is not None:
            v[self.S] = xS
        if yF is not None:
            v[self.F] = yF
        return v

    def retarget(self, op: StationaryOperator) -> "ShellPreconditioner":
        """Reuse the shell split for the same operator at another shift.

        The Schur block moves by the change of spectral parameter; its
        dependence through ``D_F`` is second order in the coupling and is
        ignored, which keeps this a preconditioner rather than an exact solve.
        """
        dz = op.shift - self.op.shift
        new = object.__new__(ShellPreconditioner)
        new.__dict__.update(self.__dict__)
        new.op = op
        new.dF = self.dF - dz
        if np.any(new.dF == 0):
            raise SingularOperatorError("zero diagonal entry outside the shell")
        new.schur = self.schur - dz * np.eye(len(self.S))
        new.lu = sla.lu_factor(new.schur)
        return new

    def shell_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the operator predicted from the shell block, as values of z."""
        return self.op.shift + sla.eigvals(self.schur)

    @property
    def shell_size(self) -> int:
        return len(self.S)

    def solve(self, r, adjoint: bool = False):
        r = np.asarray(r, dtype=complex).ravel()
        rS, rF = r[self.S], r[self.F]
        x = np.empty_like(r)
        # the damping block is anti-Hermitian, so the adjoint flips its sign
        sign = -1.0 if adjoint else 1.0
        coupled = sign * self._couple(self._embed(yF=rF / self.dF))
        xS = sla.lu_solve(self.lu, rS - coupled[self.S], trans=2 if adjoint else 0)
        x[self.S] = xS
        x[self.F] = (rF - sign * self._couple(self._embed(xS=xS))[self.F]) / self.dF
        return x


# ---------------------------------------------------------------------------
# resolvent norm


@dataclass
class SigmaMinEstimate:
    sigma_min: float
    vector: np.ndarray
    residual: float
    method: str
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def resolvent_norm(self) -> float:
        return 1.0 / self.sigma_min


def _dense_sigma_min(op: StationaryOperator) -> SigmaMinEstimate:
    t0 = time.perf_counter()
    U, s, Vh = np.linalg.svd(op.to_dense())
    v = Vh[-1].conj()
    res = float(np.linalg.norm(op.apply(v).ravel()) - s[-1])
    return SigmaMinEstimate(float(s[-1]), v, abs(res), "dense_svd", 0,
                            time.perf_counter() - t0)


def _krylov_sigma_min(op: StationaryOperator, tol: float = 1e-10, inner_tol: float = 1e-11,
                      max_inner: int = 400, max_shell: int = 2500, seed: int = 0,
                      preconditioner: Optional[ShellPreconditioner] = None) -> SigmaMinEstimate:
    t0 = time.perf_counter()
    if preconditioner is None:
        pre = ShellPreconditioner(op, max_shell=max_shell)
    elif preconditioner.op is op:
        pre = preconditioner
    else:
        pre = preconditioner.retarget(op)
    n = op.size
    P, PH = op.linear_operator(), op.linear_operator(adjoint=True)
    M = LinearOperator((n, n), dtype=complex, matvec=pre.solve)
    MH = LinearOperator((n, n), dtype=complex, matvec=lambda r: pre.solve(r, adjoint=True))
    count = [0]
    worst = [0.0]

    def solve(A, Minv, b):
        x, info = gmres(A, b, M=Minv, rtol=inner_tol, atol=0.0, restart=min(max_inner, 100),
                        maxiter=max(1, max_inner // 100),
                        callback=lambda _: count.__setitem__(0, count[0] + 1),
                        callback_type="pr_norm")
        rel = np.linalg.norm(A.matvec(x) - b) / max(np.linalg.norm(b), 1e-300)
        worst[0] = max(worst[0], rel)
        if info != 0 and rel > 1e3 * inner_tol:
            raise ConvergenceError(f"inner GMRES stalled at relative residual {rel:.2e}",
                                   residual=rel)
        return x

    T = LinearOperator((n, n), dtype=complex, matvec=lambda v: solve(P, M, solve(PH, MH, v)))
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    try:
        w, V = eigsh(T, k=2, which="LA", tol=tol, v0=v0, ncv=min(16, n - 1))
    except ConvergenceError:
        raise
    except Exception as exc:  # ARPACK non-convergence
        best = getattr(exc, "eigenvalues", None)
        est = 1 / math.sqrt(max(best)) if best is not None and len(best) else None
        raise ConvergenceError(f"Lanczos did not converge: {exc}", best_estimate=est) from exc
    i = int(np.argmax(w))
    v = V[:, i] / np.linalg.norm(V[:, i])
    Pv = op.apply(v).ravel()
    sigma = float(np.linalg.norm(Pv))
    # residual of the normal-equation eigenpair
    res = float(np.linalg.norm(op.apply_adjoint(Pv).ravel() - sigma**2 * v) / max(sigma**2, 1e-300))
    return SigmaMinEstimate(sigma, v, res, "krylov", count[0], time.perf_counter() - t0)


def sigma_min(op: StationaryOperator, method: str = "auto", **kw) -> SigmaMinEstimate:
    if op.is_undamped:
        d = np.abs(op.diag.ravel())
        j = int(np.argmin(d))
        if d[j] == 0:
            raise SingularOperatorError("a mode satisfies h^2 |k|^2 = 1 exactly")
        v = np.zeros(op.size, dtype=complex)
        v[j] = 1.0
        return SigmaMinEstimate(float(d[j]), v, 0.0, "diagonal")
    if method == "auto":
        method = "dense_svd" if op.K <= 16 else "krylov"
    if method == "dense_svd":
        if op.K > DENSE_SVD_MAX_K:
            raise ValueError(f"dense SVD limited to K <= {DENSE_SVD_MAX_K}")
        est = _dense_sigma_min(op)
    elif method == "krylov":
        est = _krylov_sigma_min(op, **kw)
    else:
        raise ValueError(f"unknown method {method!r}")
    if est.sigma_min == 0:
        raise SingularOperatorError("operator is singular to working precision")
    return est


def resolvent_norm(op: StationaryOperator, method: str = "auto", **kw) -> float:
    """``||(P_h + i h a)^{-1}||`` as ``1 / sigma_min``."""
    return sigma_min(op, method, **kw).resolvent_norm


def quasimode_extract(op: StationaryOperator, method: str = "auto", **kw):
    """Unit right singular vector for sigma_min and its residual ||P u||."""
    est = sigma_min(op, method, **kw)
    u = FourierField2D(est.vector.reshape(op.N, op.N), op.K, op.h)
    return u, float(np.linalg.norm(op.apply(u.coefficients)))


def apriori_identity_defects(op: StationaryOperator, u: FourierField2D) -> tuple:
    """Relative defects of the two identities satisfied by f = (P + iha) u.

    ``h ||a^(1/2) u||^2 = Im <f, u>`` and ``||h grad u||^2 - ||u||^2 = Re <f, u>``.
    """
    c = u.coefficients
    f = op.apply(c)
    inner = np.vdot(c, f)  # <f, u> with the conjugate on u; Im/Re as in the identities
    damp = op.h * float(np.real(np.vdot(c, op._damp(c))))
    k = wavenumbers(op.K)
    grad = float(np.sum(op.h**2 * (k[:, None] ** 2 + k[None, :] ** 2) * np.abs(c) ** 2))
    mass = float(np.sum(np.abs(c) ** 2))
    scale = max(abs(inner), damp, mass, 1e-300)
    return (abs(damp - inner.imag) / scale, abs(grad - mass - inner.real) / scale)


# ---------------------------------------------------------------------------
# resolvent envelope over a frequency window
#
# At fixed h the norm depends on how close the unit shell sits to a weakly
# damped eigenvalue, so single values jump by orders of magnitude between
# neighbouring h. The growth rate is read off the upper envelope instead: the
# largest norm of (-h^2 Delta - z + i h a)^-1 for z in [1, (1 + h)^2], i.e.
# over one unit of frequency above 1/h. Peaks sit at the real parts of the
# eigenvalues with the smallest imaginary parts, which serve as candidates.


def spectral_window(h: float) -> tuple:
    return 1.0, (1.0 + h) ** 2


@dataclass
class EnvelopePoint:
    h: float
    K: int
    shift: float
    resolvent_norm: float
    candidates: list
    method: str
    wall_time: float = 0.0


def _x_only_profile(a: np.ndarray) -> Optional[np.ndarray]:
    """The x profile when the samples do not depend on y, else None."""
    if np.all(a == a[:, :1]):
        return a[:, 0].copy()
    return None


def _block_1d(W: np.ndarray, h: float) -> np.ndarray:
    """``-h^2 d_x^2 + i h W`` on centred 1D coefficients (collocation product)."""
    N = len(W)
    K = (N - 1) // 2
    k = wavenumbers(K)
    diff = k[:, None] - k[None, :]
    M = (np.fft.fft(W) / N)[diff % N] * (-1.0) ** diff
    M = 1j * h * M
    M[np.diag_indices(N)] += (h * k) ** 2
    return M


def separable_resolvent_norm(W: np.ndarray, h: float, shift: float = 1.0) -> float:
    """Resolvent norm for damping depending on x only, via the y Fourier blocks.

    The operator is block diagonal with blocks ``T + h^2 n^2 - z``, one per
    y mode ``|n| <= K``; the norm is the largest block norm.
    """
    T = _block_1d(np.asarray(W, dtype=float), h)
    K = (len(W) - 1) // 2
    n = np.arange(K + 1)
    blocks = T[None] + ((h * n) ** 2 - shift)[:, None, None] * np.eye(len(W))
    s = np.linalg.svd(blocks, compute_uv=False)[:, -1]
    smin = float(s.min())
    if smin == 0:
        raise SingularOperatorError("operator is singular to working precision")
    return 1.0 / smin


def _pick(mu: np.ndarray, lo: float, hi: float, n: int) -> list:
    """Real parts of the ``n`` eigenvalues in [lo, hi] closest to the axis.

    Eigenvalues whose real part lies within twice their own distance to the
    axis of one already taken sit under the same resonance peak and are
    skipped.
    """
    inside = mu[(mu.real >= lo) & (mu.real <= hi)]
    out = []
    for m in inside[np.argsort(np.abs(inside.imag))]:
        if all(abs(m.real - z) > max(2 * abs(m.imag), 1e-9) for z in out):
            out.append(float(m.real))
        if len(out) == n:
            break
    return out


def resolvent_envelope(damping: DampingProfile, h: float, K: Optional[int] = None,
                       n_candidates: int = 3, max_shell: int = 2500, **kw) -> EnvelopePoint:
    """Largest resolvent norm over the frequency window above ``1/h``.

    Dampings that depend on x alone are handled exactly by y separation; all
    others by Krylov estimates at candidate shifts located from the
    eigenvalues of the shell Schur block (the window centre when the window
    holds none). The result is the largest value over the candidates, so it
    bounds the envelope from below and is exact at the reported shift.
    """
    t0 = time.perf_counter()
    K = default_K(h) if K is None else int(K)
    lo, hi = spectral_window(h)
    centre = 0.5 * (lo + hi)
    op = StationaryOperator(h, damping, K, shift=centre)
    W = _x_only_profile(op.a)
    if W is not None:
        T = _block_1d(W, h)
        mu = sla.eigvals(T)
        n = np.arange(K + 1)
        # place each 1D eigenvalue in the window through some y mode
        shifts = []
        for m in mu[np.argsort(np.abs(mu.imag))]:
            z = m.real + (h * n) ** 2
            z = z[(z >= lo) & (z <= hi)]
            if len(z) and all(abs(z[0] - q) > 1e-9 for q in shifts):
                shifts.append(float(z[0]))
            if len(shifts) == n_candidates:
                break
        cands = [(z, separable_resolvent_norm(W, h, z)) for z in shifts or [centre]]
        method = "separable"
    else:
        pre = ShellPreconditioner(op, max_shell=max_shell, min_tau=2 * (hi - lo))
        shifts = _pick(pre.shell_eigenvalues(), lo, hi, n_candidates)
        cands = []
        for z in shifts or [centre]:
            opz = op.shifted(z)
            cands.append((z, sigma_min(opz, "krylov", preconditioner=pre, **kw).resolvent_norm))
        method = "krylov"
    z, best = max(cands, key=lambda c: c[1])
    return EnvelopePoint(h, K, z, best, cands, method, time.perf_counter() - t0)


def envelope_sweep(damping: DampingProfile, h_list, K_rule: Callable = default_K,
                   tolerance: float = 0.15, predicted: Optional[float] = None,
                   **kw) -> "SweepResult":
    """Exponent fit of the windowed resolvent envelope against ``1/h``."""
    hs = sorted((float(h) for h in h_list), reverse=True)
    if len(hs) < 5:
        raise ValueError("need at least 5 values of h")
    pts, rows = [], []
    for h in hs:
        e = resolvent_envelope(damping, h, K_rule(h), **kw)
        pts.append((h, e.resolvent_norm))
        rows.append({"h": h, "K": e.K, "resolvent_norm": e.resolvent_norm, "shift": e.shift,
                     "method": e.method, "wall_time_ms": 1e3 * e.wall_time})
    if predicted is None:
        predicted = predicted_exponent(damping)
    fit = loglog_fit([(1 / h, v) for h, v in pts], predicted=predicted, tolerance=tolerance)
    return SweepResult(pts, fit, predicted, bool(abs(fit.slope - predicted) <= tolerance), rows)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    points: list
    fit: Optional[FitReport]
    predicted_exponent: Optional[float]
    tolerance_met: Optional[bool]
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points],
                "fit": None if self.fit is None else self.fit.to_dict(),
                "predicted_exponent": self.predicted_exponent,
                "tolerance_met": self.tolerance_met}


def geometric_h_list(h0: float = 0.2, ratio: float = 0.8, n: int = 11, h_min: float = 0.0):
    return [h0 * ratio**j for j in range(n) if h0 * ratio**j >= h_min]


def exponent_sweep(damping: DampingProfile, h_list, K_rule: Callable = default_K,
                   method: str = "auto", tolerance: Optional[float] = None,
                   predicted: Optional[float] = None, **kw) -> SweepResult:
    """Resolvent norms over ``h_list`` and the log-log slope against 1/h."""
    hs = sorted(h_list, reverse=True)
    if len(hs) < 5:
        raise ValueError("a sweep needs at least 5 values of h")
    if predicted is None:
        try:
            predicted = predicted_exponent(damping)
        except ValueError:
            predicted = None
    points, rows = [], []
    for h in hs:
        K = K_rule(h)
        op = StationaryOperator(h, damping, K)
        est = sigma_min(op, method, **kw)
        points.append((h, est.resolvent_norm))
        rows.append({"h": h, "K": K, "resolvent_norm": est.resolvent_norm,
                     "residual": est.residual, "wall_time_ms": 1e3 * est.wall_time})
    fit = loglog_fit([(1 / h, r) for h, r in points], predicted=predicted, tolerance=tolerance)
    return SweepResult(points, fit, predicted, fit.passed, rows)


# ---------------------------------------------------------------------------
# semigroup generator


@dataclass
class GeneratorMatrix:
    K: int
    eigenvalues: np.ndarray
    damping_name: str = ""

    def max_real_part(self) -> float:
        return float(np.max(self.eigenvalues.real))

    def min_abs_real_in_band(self, lo: float = 0.5, hi: Optional[float] = None) -> float:
        hi = self.K / 2 if hi is None else hi
        im = np.abs(self.eigenvalues.imag)
        m = (im >= lo) & (im <= hi)
        return float(np.min(np.abs(self.eigenvalues.real[m]))) if m.any() else math.inf

    def pairs(self):
        return [(float(z.real), float(z.imag)) for z in self.eigenvalues]

    def decay_fit(self, lo: float = 1.0, hi: Optional[float] = None) -> Optional[FitReport]:
        """Fit of the spectral gap |Re lambda| against |Im lambda| along the lower envelope.

        Within unit-width bins of |Im lambda| the eigenvalue closest to the
        axis is kept; the slope of log gap vs log |Im lambda| is ``-1/alpha``
        for a semigroup stable at rate ``t^(-alpha)``.
        """
        hi = self.K / 2 if hi is None else hi
        im = np.abs(self.eigenvalues.imag)
        re = np.abs(self.eigenvalues.real)
        pts = []
        for b in np.arange(math.floor(lo), math.ceil(hi)):
            m = (im >= max(b, lo)) & (im < b + 1) & (re > 0)
            if m.any():
                j = np.argmin(np.where(m, re, np.inf))
                pts.append((im[j], re[j]))
        if len(pts) < 4:
            return None
        return loglog_fit(pts)


def generator_dense(damping: DampingProfile, K: int) -> np.ndarray:
    """[[0, I], [Delta, -a]] on pairs of coefficient vectors."""
    N = 2 * K + 1
    x = grid_nodes(K)
    X, Y = np.meshgrid(x, x, indexing="ij")
    a = np.asarray(damping(X, Y), dtype=float)
    k = wavenumbers(K)
    lap = -(k[:, None] ** 2 + k[None, :] ** 2).ravel().astype(complex)
    n = N * N
    G = np.zeros((2 * n, 2 * n), dtype=complex)
    G[:n, n:] = np.eye(n)
    G[n:, :n] = np.diag(lap)
    G[n:, n:] = -convolution_matrix(a)
    return G


def generator_spectrum(damping: DampingProfile, K: int) -> GeneratorMatrix:
    if K > GENERATOR_MAX_K:
        raise ValueError(f"dense generator limited to K <= {GENERATOR_MAX_K}")
    try:
        ev = sla.eigvals(generator_dense(damping, K), check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    return GeneratorMatrix(K, ev, damping.name)


__all__ = [
    "ConvergenceError", "GeneratorMatrix", "ShellPreconditioner", "SigmaMinEstimate",
    "SingularOperatorError", "StationaryOperator", "SweepResult", "apply_operator",
    "apriori_identity_defects", "default_K", "exponent_sweep", "generator_dense",
    "generator_spectrum", "geometric_h_list", "predicted_exponent", "quasimode_extract",
    "resolvent_norm", "sigma_min", "EnvelopePoint", "envelope_sweep", "resolvent_envelope",
    "separable_resolvent_norm", "spectral_window",
]
